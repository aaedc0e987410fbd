#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dynaprune/baselines.hpp"
#include "dynaprune/error.hpp"
#include "dynaprune/oracles.hpp"
#include "dynaprune/synthdata.hpp"
#include "dynaprune/tdds.hpp"
#include "dynaprune/toytrain.hpp"
#include "dynaprune/trajlog.hpp"

namespace py = pybind11;
using namespace dynaprune;

namespace {

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  if (!v.empty()) std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(T));
  return out;
}

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return std::vector<T>(a.data(), a.data() + a.size());
}

py::bytes to_bytes(const std::function<void(std::ostream&)>& write) {
  std::ostringstream os;
  write(os);
  return py::bytes(os.str());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

TrajectoryLog make_log(py::array_t<float, py::array::c_style | py::array::forcecast> probs,
                       py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> labels,
                       RecordingMode mode) {
  if (probs.ndim() != 3) throw ShapeError("probs must have shape (T, N, C)");
  TrajectoryHeader h;
  h.n_epochs = static_cast<std::uint32_t>(probs.shape(0));
  h.n_samples = static_cast<std::uint64_t>(probs.shape(1));
  h.n_classes = static_cast<std::uint32_t>(probs.shape(2));
  h.recording_mode = mode;
  h.labels = to_vector(labels);
  h.validate();
  TrajectoryLog log(h);
  const auto block = h.n_samples * h.n_classes;
  for (std::uint32_t t = 0; t < h.n_epochs; ++t) {
    log.append_block(std::span<const float>(probs.data() + t * block, block));
  }
  return log;
}

py::array_t<float> log_probs(const TrajectoryLog& log) {
  const auto& h = log.header();
  if (h.payload_kind != PayloadKind::FullProbs) throw FormatError("log holds delta magnitudes, not probabilities");
  py::array_t<float> out({static_cast<py::ssize_t>(h.n_epochs), static_cast<py::ssize_t>(h.n_samples),
                          static_cast<py::ssize_t>(h.n_classes)});
  std::memcpy(out.mutable_data(), log.payload().data(), log.payload().size() * sizeof(float));
  return out;
}

TddsParams tdds_params(std::uint32_t window, double beta, DeltaKind delta, std::uint32_t epochs, double epsilon,
                       bool magnitude) {
  TddsParams p;
  p.window = window;
  p.beta = beta;
  p.delta = delta;
  p.epochs = epochs;
  p.epsilon = epsilon;
  p.magnitude = magnitude;
  return p;
}

}  // namespace

PYBIND11_MODULE(_dynaprune, m) {
  m.doc() = "Dataset pruning from training dynamics";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<RangeError>(m, "RangeError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ParameterError>(m, "ParameterError", base);
  py::register_exception<TrainingError>(m, "TrainingError", base);
  py::register_exception<CapacityError>(m, "CapacityError", base);

  py::enum_<PayloadKind>(m, "PayloadKind")
      .value("FullProbs", PayloadKind::FullProbs)
      .value("DeltaMagnitudes", PayloadKind::DeltaMagnitudes);
  py::enum_<RecordingMode>(m, "RecordingMode")
      .value("TrainTime", RecordingMode::TrainTime)
      .value("EvalTime", RecordingMode::EvalTime);
  py::enum_<DeltaKind>(m, "DeltaKind").value("KL", DeltaKind::KL).value("CE", DeltaKind::CE);
  py::enum_<ScoreMethod>(m, "ScoreMethod")
      .value("TDDS", ScoreMethod::TDDS)
      .value("Random", ScoreMethod::Random)
      .value("Entropy", ScoreMethod::Entropy)
      .value("Forgetting", ScoreMethod::Forgetting)
      .value("EL2N", ScoreMethod::EL2N)
      .value("AUM", ScoreMethod::AUM)
      .value("DynUnc", ScoreMethod::DynUnc);
  py::enum_<ProvenanceTag>(m, "ProvenanceTag")
      .value("Clean", ProvenanceTag::Clean)
      .value("Duplicate", ProvenanceTag::Duplicate)
      .value("Mislabeled", ProvenanceTag::Mislabeled);
  py::enum_<Arch>(m, "Arch").value("Linear", Arch::Linear).value("MLP", Arch::MLP);
  py::enum_<LrSchedule>(m, "LrSchedule").value("Constant", LrSchedule::Constant).value("Cosine", LrSchedule::Cosine);
  py::enum_<Weighting>(m, "Weighting")
      .value("None_", Weighting::None)
      .value("ImportanceRaw", Weighting::ImportanceRaw)
      .value("ImportanceMeanOne", Weighting::ImportanceMeanOne);

  // Trajectories

  py::class_<TrajectoryLog>(m, "TrajectoryLog")
      .def(py::init(&make_log), py::arg("probs"), py::arg("labels"),
           py::arg("recording_mode") = RecordingMode::TrainTime,
           "Build a log from probabilities of shape (T, N, C) and N labels")
      .def_property_readonly("n_samples", [](const TrajectoryLog& l) { return l.header().n_samples; })
      .def_property_readonly("n_classes", [](const TrajectoryLog& l) { return l.header().n_classes; })
      .def_property_readonly("n_epochs", [](const TrajectoryLog& l) { return l.header().n_epochs; })
      .def_property_readonly("payload_kind", [](const TrajectoryLog& l) { return l.header().payload_kind; })
      .def_property_readonly("recording_mode", [](const TrajectoryLog& l) { return l.header().recording_mode; })
      .def_property_readonly("labels", [](const TrajectoryLog& l) { return to_array(l.header().labels); })
      .def("probs", &log_probs, "Probabilities as a (T, N, C) float32 array")
      .def("to_bytes", [](const TrajectoryLog& l) { return to_bytes([&](std::ostream& os) { l.write(os); }); })
      .def("save", [](const TrajectoryLog& l, const std::string& path) { l.save(path); }, py::arg("path"));
  m.def("load_trajectory", &load_trajectory, py::arg("path"), "Load and CRC-verify a trajectory file");
  m.def(
      "parse_trajectory",
      [](const py::bytes& b) {
        const auto bytes = from_bytes(b);
        auto h = parse_header(bytes);
        TrajectoryLog log(h);
        const auto values = h.block_values();
        if (bytes.size() != h.file_size()) throw FormatError("trajectory: size does not match the header");
        std::vector<float> block(values);
        for (std::uint32_t t = 0; t < h.block_count(); ++t) {
          std::memcpy(block.data(), bytes.data() + h.payload_offset() + t * values * 4, values * 4);
          log.append_block(block);
        }
        // serialization is canonical, so a bad checksum or reserved field shows up as a mismatch
        std::ostringstream os;
        log.write(os);
        if (os.str() != static_cast<std::string>(b)) throw FormatError("trajectory: checksum mismatch");
        return log;
      },
      py::arg("data"));

  // Scoring

  m.def(
      "kl_delta",
      [](std::vector<double> next, std::vector<double> prev, double eps) {
        return kl_delta<double>(next, prev, eps);
      },
      py::arg("next"), py::arg("prev"), py::arg("epsilon") = kDefaultEpsilon);
  m.def(
      "ce_delta",
      [](std::vector<double> next, std::vector<double> prev, std::uint32_t target, double eps) {
        return ce_delta<double>(next, prev, target, eps);
      },
      py::arg("next"), py::arg("prev"), py::arg("target"), py::arg("epsilon") = kDefaultEpsilon);
  m.def(
      "tdds_scores",
      [](const TrajectoryLog& log, std::uint32_t window, double beta, DeltaKind delta, std::uint32_t epochs,
         double epsilon, bool magnitude) {
        return to_array(tdds_scores(log, tdds_params(window, beta, delta, epochs, epsilon, magnitude)).scores);
      },
      py::arg("log"), py::arg("window") = 10, py::arg("beta") = 0.9, py::arg("delta") = DeltaKind::KL,
      py::arg("epochs") = 0, py::arg("epsilon") = kDefaultEpsilon, py::arg("magnitude") = true);
  m.def(
      "baseline_scores",
      [](const TrajectoryLog& log, ScoreMethod method, std::uint32_t el2n_epochs, std::uint32_t dynunc_window,
         std::uint64_t seed) {
        BaselineParams p;
        p.method = method;
        p.el2n_epochs = el2n_epochs;
        p.dynunc_window = dynunc_window;
        p.seed = seed;
        return to_array(baseline_scores(log, p).scores);
      },
      py::arg("log"), py::arg("method"), py::arg("el2n_epochs") = 10, py::arg("dynunc_window") = 10,
      py::arg("seed") = 0);
  m.def("coreset_size", &coreset_size, py::arg("n"), py::arg("pruning_rate"));

  py::class_<Coreset>(m, "Coreset")
      .def_readonly("n_total", &Coreset::n_total)
      .def_readonly("pruning_rate", &Coreset::pruning_rate)
      .def_property_readonly("indices", [](const Coreset& c) { return to_array(c.indices); })
      .def_property_readonly("weights", [](const Coreset& c) { return to_array(c.weights); })
      .def("__len__", &Coreset::size)
      .def("to_bytes", [](const Coreset& c) { return to_bytes([&](std::ostream& os) { write_coreset(c, os); }); })
      .def("save", [](const Coreset& c, const std::string& path) {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + path + " for writing");
        write_coreset(c, os);
      });
  m.def(
      "select_top_m",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> scores, double rate) {
        const auto v = to_vector(scores);
        return select_top_m(std::span<const double>(v), rate);
      },
      py::arg("scores"), py::arg("pruning_rate"));
  m.def("read_coreset", &read_coreset, py::arg("path"));

  // Data

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("dim", &Dataset::dim)
      .def_readonly("n_classes", &Dataset::n_classes)
      .def("__len__", &Dataset::size)
      .def_property_readonly("features",
                             [](const Dataset& d) {
                               auto a = to_array(d.features);
                               return a.reshape({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.dim)});
                             })
      .def_property_readonly("labels", [](const Dataset& d) { return to_array(d.labels); })
      .def_property_readonly("tags",
                             [](const Dataset& d) {
                               std::vector<std::uint8_t> t;
                               for (const auto& p : d.provenance) t.push_back(static_cast<std::uint8_t>(p.tag));
                               return to_array(t);
                             })
      .def_property_readonly("refs",
                             [](const Dataset& d) {
                               std::vector<std::uint64_t> r;
                               for (const auto& p : d.provenance) r.push_back(p.ref);
                               return to_array(r);
                             })
      .def("count", &Dataset::count)
      .def("subset",
           [](const Dataset& d, std::vector<std::uint64_t> idx) { return d.subset(idx); })
      .def("save", [](const Dataset& d, const std::string& path) { save_dataset(d, path); });
  m.def("gen_blobs", &gen_blobs, py::arg("n_per_class"), py::arg("n_classes"), py::arg("dim"),
        py::arg("center_scale") = 2.0, py::arg("sigma") = 1.0, py::arg("seed") = 0, py::arg("stream") = 0);
  m.def("inject_duplicates", &inject_duplicates, py::arg("data"), py::arg("fraction"), py::arg("jitter") = 0.01,
        py::arg("seed") = 0);
  m.def("inject_label_noise", &inject_label_noise, py::arg("data"), py::arg("fraction"), py::arg("seed") = 0);
  m.def("load_dataset", &load_dataset, py::arg("path"));

  // Training

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("eta", &TrainConfig::eta)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("shuffle", &TrainConfig::shuffle)
      .def_readwrite("schedule", &TrainConfig::schedule)
      .def_readwrite("weighting", &TrainConfig::weighting)
      .def_readwrite("recording", &TrainConfig::recording)
      .def_readwrite("arch", &TrainConfig::arch)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def("learning_rate", &TrainConfig::learning_rate);

  py::class_<ToyModel>(m, "ToyModel")
      .def_readonly("arch", &ToyModel::arch)
      .def_readonly("dim", &ToyModel::dim)
      .def_readonly("n_classes", &ToyModel::n_classes)
      .def_readonly("hidden", &ToyModel::hidden)
      .def_property_readonly("theta", [](const ToyModel& t) { return to_array(t.theta); })
      .def("predict_proba",
           [](const ToyModel& t, std::vector<double> x) { return to_array(forward(t, x)); })
      .def("save", [](const ToyModel& t, const std::string& path) { save_model(t, path); });
  m.def("make_model", &make_model, py::arg("arch"), py::arg("dim"), py::arg("n_classes"), py::arg("hidden") = 0,
        py::arg("seed") = 0);
  m.def("load_model", &load_model, py::arg("path"));
  m.def(
      "train_and_log",
      [](const Dataset& d, const TrainConfig& c) {
        py::gil_scoped_release release;
        return train_and_log(d, c);
      },
      py::arg("data"), py::arg("config"), "Train and return (model, trajectory log)");
  m.def(
      "weighted_retrain",
      [](const Dataset& d, const Coreset& c, const TrainConfig& cfg) {
        py::gil_scoped_release release;
        return weighted_retrain(d, c, cfg);
      },
      py::arg("data"), py::arg("coreset"), py::arg("config"));
  m.def(
      "evaluate",
      [](const ToyModel& model, const Dataset& test) {
        const auto r = evaluate(model, test);
        return py::dict(py::arg("accuracy") = r.accuracy, py::arg("mean_loss") = r.mean_loss);
      },
      py::arg("model"), py::arg("test"));

  // Oracles

  m.def(
      "equivalence_check",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> g, std::uint32_t keep, double tol) {
        if (g.ndim() != 2) throw ShapeError("magnitudes must have shape (T, N)");
        MagnitudeMatrix mm{static_cast<std::uint32_t>(g.shape(0)), static_cast<std::uint32_t>(g.shape(1)),
                           to_vector(g)};
        const auto r = equivalence_check(mm, keep, tol);
        return py::dict(py::arg("equal") = r.equal(), py::arg("same_optima") = r.same_optima,
                        py::arg("conserved") = r.conserved, py::arg("best_mse") = r.best_mse,
                        py::arg("best_variance") = r.best_variance,
                        py::arg("mse_minimizers") = r.mse_minimizers,
                        py::arg("variance_maximizers") = r.variance_maximizers,
                        py::arg("max_conservation_error") = r.max_conservation_error);
      },
      py::arg("magnitudes"), py::arg("keep"), py::arg("tolerance") = 1e-9);
}
