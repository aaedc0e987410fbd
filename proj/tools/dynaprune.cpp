#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "dynaprune/error.hpp"
#include "manifest.hpp"

#ifndef DYNAPRUNE_VERSION
#define DYNAPRUNE_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace dynaprune;
using namespace dynaprune::cli;

namespace {

const std::map<std::string, FileFormat> kFormats{{"bin", FileFormat::Bin}, {"csv", FileFormat::Csv}};
const std::map<std::string, DeltaKind> kDeltas{{"kl", DeltaKind::KL}, {"ce", DeltaKind::CE}};
const std::map<std::string, Weighting> kWeightings{
    {"none", Weighting::None}, {"raw", Weighting::ImportanceRaw}, {"mean-one", Weighting::ImportanceMeanOne}};
const std::map<std::string, Arch> kArchs{{"linear", Arch::Linear}, {"mlp", Arch::MLP}};
const std::map<std::string, LrSchedule> kSchedules{{"constant", LrSchedule::Constant}, {"cosine", LrSchedule::Cosine}};
const std::map<std::string, RecordingMode> kRecordings{{"train", RecordingMode::TrainTime},
                                                       {"eval", RecordingMode::EvalTime}};
const std::map<std::string, ScoreMethod> kMethods{
    {"tdds", ScoreMethod::TDDS},   {"random", ScoreMethod::Random}, {"entropy", ScoreMethod::Entropy},
    {"forgetting", ScoreMethod::Forgetting}, {"el2n", ScoreMethod::EL2N},     {"aum", ScoreMethod::AUM},
    {"dynunc", ScoreMethod::DynUnc}, {"dyn-unc", ScoreMethod::DynUnc}};

// Transformed enum results come back as their integer values; this maps them
// back to the names given on the command line for the manifest.
std::map<const CLI::Option*, std::map<std::string, std::string>> g_enum_names;

template <typename E>
CLI::Option* add_enum(CLI::App* app, const std::string& name, E& target, const std::map<std::string, E>& names,
                      const std::string& help) {
  std::string choices;
  for (const auto& [key, value] : names) choices += (choices.empty() ? "" : ",") + key;
  auto transformer = CLI::CheckedTransformer(names, CLI::ignore_case);
  transformer.description("{" + choices + "}");
  auto* opt = app->add_option(name, target, help)->transform(transformer)->type_name("ENUM");
  for (const auto& [key, value] : names) {
    g_enum_names[opt].emplace(std::to_string(static_cast<long long>(value)), key);
  }
  for (const auto& [key, value] : names) {
    if (value == target) {
      opt->default_str(key);
      break;
    }
  }
  return opt;
}

void add_train_flags(CLI::App* app, TrainConfig& c, bool with_weighting) {
  app->add_option("--epochs-t", c.epochs, "Training epochs T")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--eta", c.eta, "Learning rate")->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--hidden", c.hidden, "MLP hidden width")->capture_default_str();
  add_enum(app, "--arch", c.arch, kArchs, "linear|mlp");
  add_enum(app, "--schedule", c.schedule, kSchedules, "constant|cosine");
  add_enum(app, "--recording", c.recording, kRecordings, "train|eval");
  app->add_flag("!--no-shuffle", c.shuffle, "Keep dataset order in every epoch");
  if (with_weighting) add_enum(app, "--weighting", c.weighting, kWeightings, "none|raw|mean-one");
}

void add_tdds_flags(CLI::App* app, TddsParams& p, bool with_epochs) {
  if (with_epochs) app->add_option("--epochs-t", p.epochs, "Epochs scored (0: whole log)")->capture_default_str();
  app->add_option("--window-k", p.window, "Window size K")->capture_default_str();
  app->add_option("--beta", p.beta, "EMA decay; 0 averages all windows")->capture_default_str();
  add_enum(app, "--delta", p.delta, kDeltas, "Delta kind");
  app->add_flag("!--signed", p.magnitude, "Keep the sign of each delta instead of its magnitude");
}

nlohmann::ordered_json resolved_flags(const CLI::App* sub) {
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  for (const auto* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    const auto& longs = opt->get_lnames();
    const auto name = longs.empty() ? opt->get_name() : "--" + longs.front();
    if (opt->get_expected_min() == 0) {
      flags[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      auto r = opt->results();
      if (const auto it = g_enum_names.find(opt); it != g_enum_names.end()) {
        for (auto& v : r) {
          if (const auto n = it->second.find(v); n != it->second.end()) v = n->second;
        }
      }
      flags[name] = r.size() == 1 ? nlohmann::ordered_json(r.front()) : nlohmann::ordered_json(r);
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("dynaprune");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DYNAPRUNE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept the exact "off"
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

int run(std::vector<std::string> args) {
  CLI::App app{"Dataset pruning from training dynamics"};
  app.set_version_flag("--version", DYNAPRUNE_VERSION);
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a Gaussian-blob dataset");
  gen_cmd->add_option("-o,--output", gen.output, "Dataset path")->required();
  gen_cmd->add_option("--test-output", gen.test_output, "Also write an independent test split here");
  add_enum(gen_cmd, "--format", gen.format, kFormats, "bin|csv");
  gen_cmd->add_option("--n-per-class", gen.n_per_class)->capture_default_str();
  gen_cmd->add_option("--test-per-class", gen.test_per_class, "Test samples per class (0: same)")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes)->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim)->capture_default_str();
  gen_cmd->add_option("--center-scale", gen.center_scale)->capture_default_str();
  gen_cmd->add_option("--sigma", gen.sigma)->capture_default_str();
  gen_cmd->add_option("--duplicates", gen.duplicates, "Fraction of duplicated samples")->capture_default_str();
  gen_cmd->add_option("--jitter", gen.jitter, "Feature noise on duplicates")->capture_default_str();
  gen_cmd->add_option("--label-noise", gen.label_noise, "Fraction of relabeled samples")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a toy model and log its trajectory");
  train_cmd->add_option("-i,--input", train.input, "Dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--output", train.output, "Trajectory log (.tdlg)")->required();
  train_cmd->add_option("--model", train.model, "Also save the final model");
  train_cmd->add_option("--classes", train.classes, "Class count for CSV datasets");
  train_cmd->add_option("--seed", train.config.seed)->capture_default_str();
  add_train_flags(train_cmd, train.config, false);

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score samples from a trajectory log");
  score_cmd->add_option("-i,--input", score.input, "Trajectory log")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("-o,--output", score.output, "Score table")->required();
  add_enum(score_cmd, "--method", score.method, kMethods, "tdds|random|entropy|forgetting|el2n|aum|dynunc");
  add_enum(score_cmd, "--format", score.format, kFormats, "bin|csv");
  add_tdds_flags(score_cmd, score.tdds, true);
  score_cmd->add_option("--el2n-epochs", score.el2n_epochs, "EL2N averaging epochs E")->capture_default_str();
  score_cmd->add_option("--dynunc-window", score.dynunc_window, "Dyn-Unc window J (0: K)")->capture_default_str();
  score_cmd->add_option("--seed", score.seed, "Random method seed")->capture_default_str();

  SelectOptions select;
  auto* select_cmd = app.add_subcommand("select", "Keep the top-M samples of a score table");
  select_cmd->add_option("-i,--input", select.input, "Score table (binary or CSV)")->required()->check(CLI::ExistingFile);
  select_cmd->add_option("-o,--output", select.output, "Coreset")->required();
  select_cmd->add_option("--rate", select.rate, "Pruning rate p in (0, 1)")->required();
  add_enum(select_cmd, "--format", select.format, kFormats, "bin|csv");

  RetrainOptions retrain;
  retrain.config.weighting = Weighting::ImportanceMeanOne;
  auto* retrain_cmd = app.add_subcommand("retrain", "Train on a coreset with importance weights");
  retrain_cmd->add_option("-i,--input", retrain.input, "Dataset")->required()->check(CLI::ExistingFile);
  retrain_cmd->add_option("--coreset", retrain.coreset, "Coreset (binary or CSV)")->required()->check(CLI::ExistingFile);
  retrain_cmd->add_option("-o,--output", retrain.output, "Model checkpoint")->required();
  retrain_cmd->add_option("--test", retrain.test, "Evaluate on this dataset")->check(CLI::ExistingFile);
  retrain_cmd->add_option("--classes", retrain.classes, "Class count for CSV datasets");
  retrain_cmd->add_option("--seed", retrain.config.seed)->capture_default_str();
  add_train_flags(retrain_cmd, retrain.config, true);

  CheckOptions check;
  auto* check_cmd = app.add_subcommand("check", "Run the brute-force oracles");
  check_cmd->add_option("-o,--output", check.output, "JSON summary");
  check_cmd->add_option("--trials", check.trials, "Random matrices for the equivalence check")->capture_default_str();
  check_cmd->add_option("--max-n", check.max_n)->capture_default_str();
  check_cmd->add_option("--max-t", check.max_t)->capture_default_str();
  check_cmd->add_option("--taylor-trials", check.taylor_trials)->capture_default_str();
  check_cmd->add_option("--gradient-trials", check.gradient_trials)->capture_default_str();
  check_cmd->add_option("--seed", check.seed)->capture_default_str();

  CompareOptions compare;
  auto* compare_cmd = app.add_subcommand("compare", "Score, select, retrain and evaluate over a grid");
  compare_cmd->add_option("-i,--input", compare.input, "Training dataset")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--test", compare.test, "Test dataset")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("-o,--output", compare.output, "Output directory")->required();
  compare_cmd->add_option("--method", compare.methods, "Methods (comma separated)")->delimiter(',')->capture_default_str();
  compare_cmd->add_option("--rate", compare.rates, "Pruning rates (comma separated)")->delimiter(',')->capture_default_str();
  compare_cmd->add_option("--seeds", compare.seeds, "Seeds (comma separated)")->delimiter(',')->capture_default_str();
  compare_cmd->add_option("--jobs", compare.jobs, "Parallel cells")->capture_default_str()->check(CLI::PositiveNumber);
  compare_cmd->add_option("--classes", compare.classes, "Class count for CSV datasets");
  add_enum(compare_cmd, "--format", compare.format, kFormats, "bin|csv");
  add_train_flags(compare_cmd, compare.config, true);
  add_tdds_flags(compare_cmd, compare.tdds, false);
  compare_cmd->add_option("--el2n-epochs", compare.el2n_epochs)->capture_default_str();
  compare_cmd->add_option("--dynunc-window", compare.dynunc_window, "Dyn-Unc window J (0: K)")->capture_default_str();

  std::string info_input;
  auto* info_cmd = app.add_subcommand("info", "Describe any dynaprune file");
  info_cmd->add_option("input", info_input)->required()->check(CLI::ExistingFile);

  std::string replay_manifest, replay_output;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", replay_manifest)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("-o,--output", replay_output, "Write to this output instead");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*replay_cmd) {
    auto m = load_manifest(replay_manifest);
    auto argv = m.argv;
    if (!replay_output.empty() && !override_output(argv, fs::absolute(replay_output).string())) {
      throw ParameterError("replay: the recorded command has no --output to override");
    }
    const auto here = fs::current_path();
    fs::current_path(m.cwd);
    const int rc = run(argv);
    fs::current_path(here);
    return rc;
  }

  CLI::App* sub = app.get_subcommands().front();
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  if (sub == gen_cmd) {
    outcome = cmd_gen_data(gen);
  } else if (sub == train_cmd) {
    outcome = cmd_train(train);
  } else if (sub == score_cmd) {
    outcome = cmd_score(score);
  } else if (sub == select_cmd) {
    outcome = cmd_select(select);
  } else if (sub == retrain_cmd) {
    outcome = cmd_retrain(retrain);
  } else if (sub == check_cmd) {
    outcome = cmd_check(check);
  } else if (sub == compare_cmd) {
    outcome = cmd_compare(compare);
  } else {
    return cmd_info(info_input).exit_code;
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  RunManifest m;
  m.version = DYNAPRUNE_VERSION;
  m.subcommand = sub->get_name();
  m.argv = args;
  m.cwd = fs::current_path().string();
  m.flags = resolved_flags(sub);
  m.seeds = outcome.seeds;
  m.inputs = outcome.inputs;
  m.outputs = outcome.outputs;
  m.duration_seconds = elapsed.count();
  auto targets = outcome.manifest_paths;
  if (targets.empty()) {
    for (const auto& o : outcome.outputs) targets.push_back(manifest_path_for(o));
  }
  for (const auto& t : targets) save_manifest(m, t);
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const ParameterError& e) {
    std::cerr << "dynaprune: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dynaprune: " << e.what() << '\n';
    return 1;
  }
}
