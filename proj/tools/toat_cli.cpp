// Operator entry point: dataset synthesis, training, evaluation, the
// ablation grid and the per-topic analysis. Machine-readable outputs are
// byte-reproducible for fixed seeds; timestamps go to run.log only.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "toat/errors.hpp"
#include "toat/experiments.hpp"
#include "toat/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace toat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitTrain = 3;
constexpr int kExitArtifact = 4;

struct CommonFlags {
  std::string config_path;
  std::string dataset_root;
  std::string split;
  std::string alpha;
  std::string modality;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool dump_attention = false;
  bool force = false;
  int threads = 0;
  int parallel = 1;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool with_parallel = false) {
  cmd->add_option("--config", flags.config_path, "declarative run config (JSON)");
  cmd->add_option("--dataset-root", flags.dataset_root, "dataset directory");
  cmd->add_option("--split", flags.split, "split manifest path (relative to dataset root)");
  cmd->add_option("--alpha", flags.alpha, "topic attention threshold: number, '1/N' or 'off'");
  cmd->add_option("--modality", flags.modality, "both|text|audio");
  cmd->add_option("--seed", flags.seed, "run seed");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_flag("--dump-attention", flags.dump_attention, "emit per-sample attention dumps");
  cmd->add_flag("--force", flags.force, "allow a nonempty output directory");
  cmd->add_option("--threads", flags.threads, "kernel threads (1 = serial)");
  if (with_parallel) cmd->add_option("--parallel", flags.parallel, "concurrent child runs");
}

RunConfig merge_config(const CommonFlags& flags) {
  RunConfig config;
  if (!flags.config_path.empty()) config = load_run_config(flags.config_path);
  if (!flags.dataset_root.empty()) config.dataset_root = flags.dataset_root;
  if (!flags.split.empty()) config.split_file = flags.split;
  if (!flags.alpha.empty()) set_alpha_from_name(config.training, flags.alpha);
  if (!flags.modality.empty()) config.training.modality = modality_from_name(flags.modality);
  if (flags.seed) config.training.seed = *flags.seed;
  if (!flags.out.empty()) config.out_dir = flags.out;
  if (flags.dump_attention) config.dump_attention = true;
  if (config.dataset_root.empty()) throw InputError("no dataset root given (--dataset-root or config)");
  if (config.out_dir.empty()) throw InputError("no output directory given (--out or config)");
  return config;
}

void prepare_out_dir(const std::string& path, bool force) {
  if (fs::exists(path) && !fs::is_empty(path) && !force)
    throw InputError("output directory '" + path + "' is not empty (use --force to reuse it)");
  fs::create_directories(path);
}

struct LoadedData {
  TopicCatalog catalog;
  std::vector<InterviewSample> samples;
  SplitSets splits;
  std::optional<std::map<std::string, PrecomputedFeatures>> features;
};

LoadedData load_inputs(const RunConfig& config) {
  LoadedData data;
  const fs::path root(config.dataset_root);
  data.catalog = load_catalog((root / config.catalog_file).string());
  LoadResult loaded = load_dataset((root / config.dataset_file).string(), data.catalog);
  if (loaded.dropped_topics > 0)
    std::cerr << "warning: dropped " << loaded.dropped_topics
              << " topic entries whose question text did not match the catalog\n";
  data.samples = std::move(loaded.samples);
  const SplitManifest manifest = load_split((root / config.split_file).string());
  data.splits = apply_split(data.samples, manifest);
  if (!config.features_file.empty()) {
    data.features = load_feature_file((root / config.features_file).string(), data.catalog.size(),
                                      static_cast<std::size_t>(config.dims.d_model),
                                      static_cast<std::size_t>(config.dims.d_audio));
  }
  return data;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open '" + path + "'");
  f << text;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open '" + path + "'");
  f << j.dump(2) << '\n';
}

void write_run_log(const std::string& out_dir, const std::string& what, double seconds) {
  std::ofstream f(fs::path(out_dir) / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  f << what << " finished in " << seconds << "s at " << std::ctime(&now);
}

json cell_result_json(const AblationCellResult& r) {
  json j;
  j["modality"] = modality_name(r.cell.modality);
  j["alpha"] = r.cell.alpha_mode == AlphaMode::Off
                   ? json("off")
                   : json(r.cell.alpha_mode == AlphaMode::DefaultInverseN ? json("1/N")
                                                                          : json(r.cell.alpha_value));
  j["confusion"] = {{"tp", r.confusion.tp}, {"tn", r.confusion.tn}, {"fp", r.confusion.fp},
                    {"fn", r.confusion.fn}};
  j["metrics"] = {{"accuracy", r.test_metrics.accuracy_pct()},
                  {"recall", r.test_metrics.recall_pct()},
                  {"precision", r.test_metrics.precision_pct()},
                  {"f1", r.test_metrics.f1_pct()}};
  j["metrics_raw"] = {{"accuracy", r.test_metrics.accuracy},
                      {"recall", r.test_metrics.recall},
                      {"precision", r.test_metrics.precision},
                      {"f1", r.test_metrics.f1}};
  j["best_epoch"] = r.best_epoch;
  return j;
}

AblationCellResult cell_result_from_json(const json& j, const AblationCell& cell) {
  AblationCellResult r;
  r.cell = cell;
  r.confusion.tp = j.at("confusion").at("tp").get<long long>();
  r.confusion.tn = j.at("confusion").at("tn").get<long long>();
  r.confusion.fp = j.at("confusion").at("fp").get<long long>();
  r.confusion.fn = j.at("confusion").at("fn").get<long long>();
  r.test_metrics = compute_metrics(r.confusion);
  r.best_epoch = j.at("best_epoch").get<int>();
  return r;
}

int cmd_synth(const std::string& spec_path, const std::string& out, bool force) {
  SynthSpec spec;
  if (!spec_path.empty()) spec = parse_synth_spec_file(spec_path);
  if (out.empty()) throw InputError("synth: no output directory given (--out)");
  prepare_out_dir(out, force);
  const auto t0 = std::chrono::steady_clock::now();
  const auto samples = write_synth_dataset(spec, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "synth: wrote " << samples.size() << " samples to " << out << "\n";
  write_run_log(out, "synth", secs);
  return kExitOk;
}

int cmd_train(const CommonFlags& flags) {
  RunConfig config = merge_config(flags);
  prepare_out_dir(config.out_dir, flags.force);
  LoadedData data = load_inputs(config);
  write_json_file((fs::path(config.out_dir) / "effective_config.json").string(),
                  run_config_to_json(config));
  const auto t0 = std::chrono::steady_clock::now();
  PipelineResult result =
      run_pipeline(data.splits, data.catalog, config.dataset_root, config.dims, config.training,
                   data.features ? &*data.features : nullptr, config.dump_attention);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint((fs::path(config.out_dir) / "checkpoint.json").string(), result.training.best);
  write_history_csv((fs::path(config.out_dir) / "history.csv").string(), result.training.history);
  std::vector<std::optional<double>> rates;
  if (!result.test.dumps.empty()) {
    write_attention_dumps((fs::path(config.out_dir) / "attention.jsonl").string(), result.test.dumps);
    rates = usage_rates(result.test.dumps, result.training.best.model.alpha());
    write_usage_rates_csv((fs::path(config.out_dir) / "usage_rates.csv").string(), rates);
  }
  write_json_file((fs::path(config.out_dir) / "test_report.json").string(),
                  eval_report_json(result.test, rates, config_fingerprint(config)));
  std::cout << "train: best epoch " << result.training.best_epoch << ", test metrics\n"
            << eval_report_table(result.test);
  write_run_log(config.out_dir, "train", secs);
  return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint_path, const std::string& part) {
  RunConfig config = merge_config(flags);
  prepare_out_dir(config.out_dir, flags.force);
  write_json_file((fs::path(config.out_dir) / "effective_config.json").string(),
                  run_config_to_json(config));
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  LoadedData data = load_inputs(config);
  const std::vector<InterviewSample>* subset = &data.splits.test;
  if (part == "train") subset = &data.splits.train;
  else if (part == "validation") subset = &data.splits.validation;
  else if (part != "test") throw InputError("eval: --part must be train|validation|test");

  std::vector<EncodedSample> encoded = encode_samples(*subset, ckpt.model, config.dataset_root);
  if (data.features) attach_precomputed(encoded, *data.features);
  const bool want_dumps = config.dump_attention && ckpt.model.train.uses_topic_attention();
  EvalOutcome outcome = evaluate(ckpt.model, encoded, want_dumps);
  std::vector<std::optional<double>> rates;
  if (!outcome.dumps.empty()) {
    write_attention_dumps((fs::path(config.out_dir) / "attention.jsonl").string(), outcome.dumps);
    rates = usage_rates(outcome.dumps, ckpt.model.alpha());
    write_usage_rates_csv((fs::path(config.out_dir) / "usage_rates.csv").string(), rates);
  }
  write_json_file((fs::path(config.out_dir) / "report.json").string(),
                  eval_report_json(outcome, rates, config_fingerprint(config)));
  write_text_file((fs::path(config.out_dir) / "report.txt").string(), eval_report_table(outcome));
  std::cout << "eval (" << part << ", " << encoded.size() << " samples)\n" << eval_report_table(outcome);
  return kExitOk;
}

int run_cell_child(const RunConfig& config, const LoadedData& data, const AblationCell& cell,
                   const std::string& cell_dir) {
  // children run serial kernels; concurrency comes from the processes
  kernels::set_policy(kernels::Policy::Serial);
  AblationCellResult result =
      run_ablation_cell(data.splits, data.catalog, config.dataset_root, config.dims, config.training, cell);
  write_json_file((fs::path(cell_dir) / "report.json").string(), cell_result_json(result));
  return kExitOk;
}

int cmd_ablate(const CommonFlags& flags) {
  RunConfig config = merge_config(flags);
  prepare_out_dir(config.out_dir, flags.force);
  LoadedData data = load_inputs(config);
  write_json_file((fs::path(config.out_dir) / "effective_config.json").string(),
                  run_config_to_json(config));
  const std::vector<AblationCell> cells = default_ablation_grid();
  std::vector<std::string> cell_dirs;
  for (const auto& cell : cells) {
    const std::string dir = (fs::path(config.out_dir) / ("cell_" + cell.label())).string();
    fs::create_directories(dir);
    cell_dirs.push_back(dir);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const int parallel = std::max(1, flags.parallel);
  if (parallel == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      AblationCellResult result = run_ablation_cell(data.splits, data.catalog, config.dataset_root,
                                                    config.dims, config.training, cells[i]);
      write_json_file((fs::path(cell_dirs[i]) / "report.json").string(), cell_result_json(result));
      std::cout << "ablate: finished cell " << cells[i].label() << "\n";
    }
  } else {
    // independent child processes, at most `parallel` at a time
    std::vector<pid_t> running;
    std::size_t next = 0;
    bool failed = false;
    auto reap_one = [&]() {
      int status = 0;
      const pid_t pid = waitpid(-1, &status, 0);
      if (pid > 0 && (!WIFEXITED(status) || WEXITSTATUS(status) != 0)) failed = true;
      for (auto it = running.begin(); it != running.end(); ++it)
        if (*it == pid) {
          running.erase(it);
          break;
        }
    };
    while (next < cells.size() || !running.empty()) {
      if (next < cells.size() && static_cast<int>(running.size()) < parallel) {
        const pid_t pid = fork();
        if (pid < 0) throw std::runtime_error("ablate: fork failed");
        if (pid == 0) {
          int code = kExitInput;
          try {
            code = run_cell_child(config, data, cells[next], cell_dirs[next]);
          } catch (const TrainError& e) {
            std::cerr << e.what() << "\n";
            code = kExitTrain;
          } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            code = kExitInput;
          }
          _exit(code);
        }
        running.push_back(pid);
        ++next;
      } else {
        reap_one();
      }
    }
    if (failed) throw TrainError("ablate: one or more cell runs failed; see cell logs");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<AblationCellResult> results;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::ifstream f(fs::path(cell_dirs[i]) / "report.json");
    if (!f) throw TrainError("ablate: missing report for cell " + cells[i].label());
    json j;
    f >> j;
    results.push_back(cell_result_from_json(j, cells[i]));
  }
  json summary = json::array();
  for (const auto& r : results) summary.push_back(cell_result_json(r));
  write_json_file((fs::path(config.out_dir) / "ablation.json").string(), summary);
  const std::string table = ablation_table(results);
  write_text_file((fs::path(config.out_dir) / "ablation.txt").string(), table);
  std::cout << table;
  write_run_log(config.out_dir, "ablate", secs);
  return kExitOk;
}

int cmd_topics(const CommonFlags& flags) {
  RunConfig config = merge_config(flags);
  prepare_out_dir(config.out_dir, flags.force);
  LoadedData data = load_inputs(config);
  write_json_file((fs::path(config.out_dir) / "effective_config.json").string(),
                  run_config_to_json(config));
  const auto t0 = std::chrono::steady_clock::now();

  // usage rates come from the full TA model evaluated on the test split
  PipelineResult full = run_pipeline(data.splits, data.catalog, config.dataset_root, config.dims,
                                     config.training, nullptr, /*collect_dumps=*/true);
  const std::vector<std::optional<double>> rates =
      usage_rates(full.test.dumps, full.training.best.model.alpha());
  write_attention_dumps((fs::path(config.out_dir) / "attention.jsonl").string(), full.test.dumps);

  std::vector<TopicSubsetResult> subsets =
      run_topic_subsets(data.splits, data.catalog, config.dataset_root, config.dims, config.training);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_topic_analysis_csv((fs::path(config.out_dir) / "topics.csv").string(), subsets, rates);
  write_topic_analysis_svg((fs::path(config.out_dir) / "topics.svg").string(), subsets, rates);
  json j = json::array();
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    const auto& s = subsets[i];
    json row;
    row["topic"] = s.topic_index;
    row["subset_size"] = s.subset_size;
    if (s.skipped) {
      row["skipped"] = s.skip_reason;
    } else {
      row["f1"] = s.test_metrics.f1_pct();
      row["f1_raw"] = s.test_metrics.f1;
    }
    if (i < rates.size() && rates[i]) row["usage_rate"] = *rates[i];
    j.push_back(std::move(row));
  }
  write_json_file((fs::path(config.out_dir) / "topics.json").string(), j);
  for (const auto& s : subsets) {
    std::cout << "topic Q" << s.topic_index << ": size " << s.subset_size;
    if (s.skipped) std::cout << " skipped (" << s.skip_reason << ")";
    else std::cout << " f1 " << s.test_metrics.f1_pct();
    std::cout << "\n";
  }
  write_run_log(config.out_dir, "topics", secs);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topic-attentive two-branch interview classifier"};
  app.require_subcommand(1);

  std::string synth_spec, synth_out;
  bool synth_force = false;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", synth_spec, "synthesis spec (JSON)");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_flag("--force", synth_force, "allow a nonempty output directory");

  CommonFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_common_flags(train_cmd, train_flags);

  CommonFlags eval_flags;
  std::string eval_checkpoint, eval_part = "test";
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--part", eval_part, "train|validation|test (default test)");

  CommonFlags ablate_flags;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the ablation grid");
  add_common_flags(ablate_cmd, ablate_flags, /*with_parallel=*/true);

  CommonFlags topics_flags;
  CLI::App* topics_cmd = app.add_subcommand("topics", "per-topic subsets and usage rates");
  add_common_flags(topics_cmd, topics_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out, synth_force);
    if (train_cmd->parsed()) {
      if (train_flags.threads > 0) kernels::set_max_threads(train_flags.threads);
      return cmd_train(train_flags);
    }
    if (eval_cmd->parsed()) {
      if (eval_flags.threads > 0) kernels::set_max_threads(eval_flags.threads);
      return cmd_eval(eval_flags, eval_checkpoint, eval_part);
    }
    if (ablate_cmd->parsed()) {
      if (ablate_flags.threads > 0) kernels::set_max_threads(ablate_flags.threads);
      return cmd_ablate(ablate_flags);
    }
    if (topics_cmd->parsed()) {
      if (topics_flags.threads > 0) kernels::set_max_threads(topics_flags.threads);
      return cmd_topics(topics_flags);
    }
  } catch (const ArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const TrainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTrain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
