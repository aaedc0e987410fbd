#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "dynaprune/baselines.hpp"
#include "dynaprune/error.hpp"
#include "dynaprune/trajlog.hpp"
#include "text_io.hpp"

namespace dynaprune::cli {

namespace fs = std::filesystem;

namespace {

std::string sniff_magic(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char buf[4] = {};
  is.read(buf, 4);
  return std::string(buf, static_cast<std::size_t>(is.gcount()));
}

std::ofstream open_out(const std::string& path, bool binary) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  return os;
}

void save_dataset_as(const Dataset& d, const std::string& path, FileFormat f) {
  auto os = open_out(path, f == FileFormat::Bin);
  if (f == FileFormat::Bin) {
    write_dataset(d, os);
  } else {
    write_dataset_csv(d, os);
  }
}

void save_scores_as(const ScoreTable& t, const std::string& path, FileFormat f) {
  auto os = open_out(path, f == FileFormat::Bin);
  if (f == FileFormat::Bin) {
    write_scores(t, os);
  } else {
    write_scores_csv(t, os);
  }
}

void save_coreset_as(const Coreset& c, const std::string& path, FileFormat f) {
  auto os = open_out(path, f == FileFormat::Bin);
  if (f == FileFormat::Bin) {
    write_coreset(c, os);
  } else {
    write_coreset_csv(c, os);
  }
}

ScoreTable load_scores_any(const std::string& path) {
  return sniff_magic(path) == "TDSC" ? read_scores(path) : read_scores_csv(path);
}

Coreset load_coreset_any(const std::string& path, std::uint64_t n_total) {
  return sniff_magic(path) == "TDCS" ? read_coreset(path) : read_coreset_csv(path, n_total);
}

const char* ext(FileFormat f, const char* bin) { return f == FileFormat::Bin ? bin : ".csv"; }

ScoreTable score_log(const EpochSource& log, ScoreMethod method, const TddsParams& tdds, std::uint32_t el2n_epochs,
                     std::uint32_t dynunc_window, std::uint64_t seed) {
  if (method == ScoreMethod::TDDS) return tdds_scores(log, tdds);
  BaselineParams bp;
  bp.method = method;
  bp.el2n_epochs = el2n_epochs;
  bp.dynunc_window = dynunc_window ? dynunc_window : tdds.window;
  bp.seed = seed;
  bp.epsilon = tdds.epsilon;
  return baseline_scores(log, bp);
}

void log_eval(const char* what, const EvalResult& r) {
  std::cout << what << " accuracy=" << detail::format_double(r.accuracy)
            << " mean_loss=" << detail::format_double(r.mean_loss) << '\n';
}

// Sample standard deviation (n-1); 0 for a single value.
double stddev(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

template <typename Fn>
void parallel_for(std::size_t count, std::uint32_t jobs, Fn&& fn) {
  const auto workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, count));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) fn(i);
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
}

}  // namespace

Dataset load_dataset_any(const std::string& path, std::uint32_t classes) {
  if (sniff_magic(path) == "TDDT") return load_dataset(path);
  if (classes) return read_dataset_csv(path, classes);
  auto d = read_dataset_csv(path, std::numeric_limits<std::uint32_t>::max());
  std::uint32_t top = 1;
  for (std::uint64_t i = 0; i < d.size(); ++i) {
    top = std::max({top, d.labels[i], d.provenance[i].original_label});
  }
  d.n_classes = top + 1;
  d.validate();
  return d;
}

Outcome cmd_gen_data(const GenDataOptions& o) {
  Outcome out;
  out.seeds = {o.seed};
  auto data = gen_blobs(o.n_per_class, o.classes, o.dim, o.center_scale, o.sigma, o.seed);
  data = inject_duplicates(data, o.duplicates, o.jitter, o.seed);
  data = inject_label_noise(data, o.label_noise, o.seed);
  save_dataset_as(data, o.output, o.format);
  out.outputs.push_back(o.output);
  spdlog::info("wrote {} samples ({} duplicates, {} mislabeled) to {}", data.size(),
               data.count(ProvenanceTag::Duplicate), data.count(ProvenanceTag::Mislabeled), o.output);
  if (!o.test_output.empty()) {
    const auto test = gen_blobs(o.test_per_class ? o.test_per_class : o.n_per_class, o.classes, o.dim,
                                o.center_scale, o.sigma, o.seed, 1);
    save_dataset_as(test, o.test_output, o.format);
    out.outputs.push_back(o.test_output);
  }
  return out;
}

Outcome cmd_train(const TrainOptions& o) {
  Outcome out;
  out.seeds = {o.config.seed};
  out.inputs = {o.input};
  const auto data = load_dataset_any(o.input, o.classes);
  auto os = open_out(o.output, true);
  TrajectoryWriter writer(os, log_header(data, o.config));
  const auto model = train_epochs(data, o.config, &writer);
  writer.finish();
  out.outputs.push_back(o.output);
  if (!o.model.empty()) {
    save_model(model, o.model);
    out.outputs.push_back(o.model);
  }
  log_eval("train", evaluate(model, data));
  return out;
}

Outcome cmd_score(const ScoreOptions& o) {
  Outcome out;
  out.inputs = {o.input};
  if (o.method == ScoreMethod::Random) out.seeds = {o.seed};
  TrajectoryReader reader(o.input);
  reader.verify();
  const auto table = score_log(reader, o.method, o.tdds, o.el2n_epochs, o.dynunc_window, o.seed);
  save_scores_as(table, o.output, o.format);
  out.outputs.push_back(o.output);
  spdlog::info("scored {} samples with {}", table.scores.size(), method_name(table.method));
  return out;
}

Outcome cmd_select(const SelectOptions& o) {
  Outcome out;
  out.inputs = {o.input};
  const auto table = load_scores_any(o.input);
  const auto coreset = select_top_m(table, o.rate);
  save_coreset_as(coreset, o.output, o.format);
  out.outputs.push_back(o.output);
  std::cout << "kept " << coreset.size() << " of " << coreset.n_total << '\n';
  return out;
}

Outcome cmd_retrain(const RetrainOptions& o) {
  Outcome out;
  out.seeds = {o.config.seed};
  out.inputs = {o.input, o.coreset};
  const auto data = load_dataset_any(o.input, o.classes);
  const auto coreset = load_coreset_any(o.coreset, data.size());
  const auto model = weighted_retrain(data, coreset, o.config);
  save_model(model, o.output);
  out.outputs.push_back(o.output);
  if (!o.test.empty()) {
    out.inputs.push_back(o.test);
    log_eval("test", evaluate(model, load_dataset_any(o.test, data.n_classes)));
  }
  return out;
}

Outcome cmd_info(const std::string& input) {
  Outcome out;
  out.inputs = {input};
  const auto magic = sniff_magic(input);
  auto& os = std::cout;
  if (magic == "TDLG") {
    TrajectoryReader r(input);
    r.verify();
    const auto& h = r.header();
    os << "trajectory log\n  samples " << h.n_samples << "\n  classes " << h.n_classes << "\n  epochs "
       << h.n_epochs << "\n  payload "
       << (h.payload_kind == PayloadKind::FullProbs ? "full-probabilities" : "delta-magnitudes")
       << "\n  recording " << (h.recording_mode == RecordingMode::TrainTime ? "train-time" : "eval-time")
       << "\n  bytes " << h.file_size() << "\n  crc ok\n";
    if (h.payload_kind == PayloadKind::FullProbs) {
      for (std::uint32_t t : {0u, h.n_epochs - 1}) {
        const auto e = r.read_epoch(t);
        double target = 0.0;
        for (std::uint64_t n = 0; n < h.n_samples; ++n) target += e.row(n)[h.labels[n]];
        os << "  epoch " << t << " mean target probability "
           << fixed(target / static_cast<double>(h.n_samples), 4) << '\n';
      }
    }
  } else if (magic == "TDSC") {
    const auto t = read_scores(input);
    const auto [lo, hi] = std::minmax_element(t.scores.begin(), t.scores.end());
    const double mean = std::accumulate(t.scores.begin(), t.scores.end(), 0.0) / static_cast<double>(t.scores.size());
    os << "score table\n  method " << method_name(t.method) << "\n  samples " << t.scores.size() << "\n  epochs "
       << t.params.epochs << "\n  window " << t.params.window << "\n  beta " << t.params.beta << "\n  min "
       << detail::format_double(*lo) << "\n  mean " << detail::format_double(mean) << "\n  max "
       << detail::format_double(*hi) << '\n';
  } else if (magic == "TDCS") {
    const auto c = read_coreset(input);
    os << "coreset\n  kept " << c.size() << " of " << c.n_total << "\n  pruning rate " << c.pruning_rate << '\n';
  } else if (magic == "TDDT") {
    const auto d = load_dataset(input);
    os << "dataset\n  samples " << d.size() << "\n  dim " << d.dim << "\n  classes " << d.n_classes << "\n  clean "
       << d.count(ProvenanceTag::Clean) << "\n  duplicate " << d.count(ProvenanceTag::Duplicate) << "\n  mislabeled "
       << d.count(ProvenanceTag::Mislabeled) << '\n';
  } else if (magic == "TDMD") {
    const auto m = load_model(input);
    os << "model\n  arch " << (m.arch == Arch::Linear ? "linear" : "mlp") << "\n  dim " << m.dim << "\n  classes "
       << m.n_classes << "\n  hidden " << m.hidden << "\n  parameters " << m.theta.size() << '\n';
  } else {
    throw FormatError(input + ": unrecognized file (magic '" + magic + "')");
  }
  return out;
}

Outcome cmd_compare(const CompareOptions& o) {
  Outcome out;
  out.seeds = o.seeds;
  out.inputs = {o.input, o.test};
  if (o.methods.empty() || o.rates.empty() || o.seeds.empty()) {
    throw ParameterError("compare: methods, rates and seeds must be nonempty");
  }
  std::vector<ScoreMethod> methods;
  for (const auto& m : o.methods) methods.push_back(parse_method(m));
  for (double p : o.rates) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("compare: pruning rate " + detail::format_double(p) + " outside (0, 1)");
  }
  const auto train = load_dataset_any(o.input, o.classes);
  const auto test = load_dataset_any(o.test, train.n_classes);
  const fs::path root(o.output);
  fs::create_directories(root / "logs");
  fs::create_directories(root / "scores");
  fs::create_directories(root / "coresets");

  // one trajectory per seed, shared by every method and rate
  std::vector<TrajectoryLog> logs(o.seeds.size());
  std::vector<std::string> log_errors(o.seeds.size());
  parallel_for(o.seeds.size(), o.jobs, [&](std::size_t i) {
    try {
      auto cfg = o.config;
      cfg.seed = o.seeds[i];
      auto [model, log] = train_and_log(train, cfg);
      const auto path = (root / "logs" / ("s" + std::to_string(o.seeds[i]) + ".tdlg")).string();
      log.save(path);
      logs[i] = std::move(log);
    } catch (const std::exception& e) {
      log_errors[i] = e.what();
      spdlog::error("seed {}: training failed: {}", o.seeds[i], e.what());
    }
  });

  struct Cell {
    std::size_t method = 0, rate = 0, seed = 0;
    double accuracy = 0.0, loss = 0.0;
    std::string error;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t r = 0; r < o.rates.size(); ++r) {
      for (std::size_t s = 0; s < o.seeds.size(); ++s) {
        Cell c;
        c.method = m;
        c.rate = r;
        c.seed = s;
        cells.push_back(c);
      }
    }
  }

  parallel_for(cells.size(), o.jobs, [&](std::size_t i) {
    auto& c = cells[i];
    const auto method = methods[c.method];
    const auto seed = o.seeds[c.seed];
    const auto stem = std::string(method_name(method)) + "_p" + detail::format_double(o.rates[c.rate]) + "_s" +
                      std::to_string(seed);
    try {
      if (!log_errors[c.seed].empty()) throw TrainingError(log_errors[c.seed]);
      const auto scores = score_log(logs[c.seed], method, o.tdds, o.el2n_epochs, o.dynunc_window, seed);
      save_scores_as(scores, (root / "scores" / (stem + ext(o.format, ".tdsc"))).string(), o.format);
      const auto coreset = select_top_m(scores, o.rates[c.rate]);
      save_coreset_as(coreset, (root / "coresets" / (stem + ext(o.format, ".tdcs"))).string(), o.format);
      auto cfg = o.config;
      cfg.seed = seed;
      // importance weighting applies to TDDS scores only
      if (method != ScoreMethod::TDDS) cfg.weighting = Weighting::None;
      const auto model = weighted_retrain(train, coreset, cfg);
      const auto r = evaluate(model, test);
      c.accuracy = r.accuracy;
      c.loss = r.mean_loss;
      spdlog::info("{}: accuracy {}", stem, r.accuracy);
    } catch (const std::exception& e) {
      c.error = e.what();
      spdlog::error("{}: {}", stem, e.what());
    }
  });

  std::ofstream runs = open_out((root / "runs.csv").string(), false);
  runs << "method,rate,seed,accuracy,mean_loss,status\n";
  for (const auto& c : cells) {
    runs << method_name(methods[c.method]) << ',' << detail::format_double(o.rates[c.rate]) << ','
         << o.seeds[c.seed] << ',';
    if (c.error.empty()) {
      runs << detail::format_double(c.accuracy) << ',' << detail::format_double(c.loss) << ",ok\n";
    } else {
      runs << ",,ERR\n";
    }
  }

  std::ofstream csv = open_out((root / "table.csv").string(), false);
  csv << "method,rate,runs,errors,mean_accuracy,std_accuracy,mean_loss\n";
  std::vector<std::vector<std::string>> text_rows;
  std::vector<std::string> rate_heads;
  for (double p : o.rates) rate_heads.push_back("p=" + detail::format_double(p));
  bool any_error = false;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<std::string> row{std::string(method_name(methods[m]))};
    for (std::size_t r = 0; r < o.rates.size(); ++r) {
      std::vector<double> acc, loss;
      std::size_t errors = 0;
      for (const auto& c : cells) {
        if (c.method != m || c.rate != r) continue;
        if (!c.error.empty()) {
          ++errors;
          continue;
        }
        acc.push_back(c.accuracy);
        loss.push_back(c.loss);
      }
      any_error = any_error || errors > 0;
      csv << method_name(methods[m]) << ',' << detail::format_double(o.rates[r]) << ',' << acc.size() << ','
          << errors << ',';
      if (acc.empty()) {
        csv << "ERR,ERR,ERR\n";
        row.push_back("ERR");
        continue;
      }
      const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
      const double mean_loss = std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(loss.size());
      const double sd = stddev(acc, mean);
      csv << detail::format_double(mean) << ',' << detail::format_double(sd) << ','
          << detail::format_double(mean_loss) << '\n';
      std::string cell = fixed(100.0 * mean, 2) + " ± " + fixed(100.0 * sd, 2);
      if (errors) cell += " ERR(" + std::to_string(errors) + ")";
      row.push_back(cell);
    }
    text_rows.push_back(std::move(row));
  }

  // aligned text; "±" is two bytes but one column
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(o.rates.size() + 1, 6);
  for (std::size_t r = 0; r < rate_heads.size(); ++r) widths[r + 1] = std::max(widths[r + 1], width(rate_heads[r]));
  for (const auto& row : text_rows) {
    for (std::size_t k = 0; k < row.size(); ++k) widths[k] = std::max(widths[k], width(row[k]));
  }
  std::ostringstream txt;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) txt << "  ";
      txt << row[k];
      if (k + 1 < row.size()) txt << std::string(widths[k] - width(row[k]), ' ');
    }
    txt << '\n';
  };
  std::vector<std::string> head{"method"};
  head.insert(head.end(), rate_heads.begin(), rate_heads.end());
  emit(head);
  for (const auto& row : text_rows) emit(row);
  txt << "test accuracy (%), mean ± std over " << o.seeds.size() << " seed(s)\n";
  std::ofstream table_txt = open_out((root / "table.txt").string(), false);
  table_txt << txt.str();
  std::cout << txt.str();

  out.outputs = {root.string()};
  out.manifest_paths = {(root / "manifest.json").string()};
  out.exit_code = any_error ? 1 : 0;
  return out;
}

}  // namespace dynaprune::cli
