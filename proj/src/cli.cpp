#include "carepred/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "carepred/errors.hpp"
#include "carepred/eval.hpp"
#include "carepred/hash.hpp"
#include "carepred/ingest.hpp"
#include "carepred/preprocess.hpp"
#include "carepred/synth.hpp"
#include "carepred/train.hpp"
#include "json.hpp"

namespace carepred::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Every artifact gets a sibling "<artifact>.manifest.json".
struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::optional<std::uint64_t> seed;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void write_next_to(const fs::path& artifact) const {
    ordered_json j;
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    j["config"] = config;
    auto files = [](const std::vector<fs::path>& paths) {
      auto arr = ordered_json::array();
      for (const auto& p : paths) {
        ordered_json f;
        f["path"] = p.string();
        f["sha256"] = file_sha256_hex(p);
        arr.push_back(std::move(f));
      }
      return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_file(artifact.string() + ".manifest.json", j.dump(2) + "\n");
  }
};

std::string join_args(const std::vector<std::string>& args) {
  std::string out;
  for (const auto& a : args) {
    if (!out.empty()) out += ' ';
    out += a;
  }
  return out;
}

std::string format_ids(const ActivityList& ids) {
  std::string out;
  for (auto a : ids) {
    if (!out.empty()) out += ',';
    out += std::to_string(a.value());
  }
  return out;
}

void emit(const std::string& text, const std::string& output) {
  if (output.empty()) {
    std::cout << text;
  } else {
    write_file(output, text);
  }
}

struct ModelFlags {
  std::string backbone = "lstm";
  int hidden = ModelConfig{}.hidden_dim;
  int head = ModelConfig{}.head_dim;
  double dropout = ModelConfig{}.dropout_rate;
  bool normalize = false;

  void attach(CLI::App* app) {
    app->add_option("--backbone", backbone, "lstm or bilstm")->capture_default_str();
    app->add_option("--hidden", hidden, "Recurrent hidden size")->capture_default_str();
    app->add_option("--head", head, "Head hidden width")->capture_default_str();
    app->add_option("--dropout", dropout, "Dropout rate")->capture_default_str();
    app->add_flag("--normalize", normalize, "Scale tokens by 1/24");
  }

  ModelConfig config() const {
    ModelConfig c;
    c.backbone = parse_backbone(backbone);
    c.hidden_dim = hidden;
    c.head_dim = head;
    c.dropout_rate = dropout;
    c.normalize_tokens = normalize;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string log;
  bool quiet = false;

  void attach(CLI::App* app) {
    app->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "Samples per optimizer step")->capture_default_str();
    app->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app->add_option("--beta1", cfg.beta1)->capture_default_str();
    app->add_option("--beta2", cfg.beta2)->capture_default_str();
    app->add_option("--eps", cfg.eps)->capture_default_str();
    app->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    app->add_option("--threshold", cfg.threshold)->capture_default_str();
    app->add_option("--seed", cfg.seed, "Run seed")->capture_default_str();
    app->add_option("--max-seq-len", cfg.max_seq_len)->capture_default_str();
    app->add_option("--log", log, "Per-epoch loss CSV (default: <out>.log.csv)");
    app->add_flag("--quiet", quiet, "No per-epoch progress on stderr");
  }

  ordered_json json() const {
    ordered_json j;
    j["lr"] = cfg.learning_rate;
    j["batch-size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["eps"] = cfg.eps;
    j["weight-decay"] = cfg.weight_decay;
    j["threshold"] = cfg.threshold;
    j["seed"] = cfg.seed;
    j["max-seq-len"] = cfg.max_seq_len;
    return j;
  }
};

std::vector<ActivitySample> load_datasets(const std::vector<std::string>& paths) {
  std::vector<ActivitySample> all;
  for (const auto& p : paths) {
    auto part = read_samples(p);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

void write_training_outputs(const ModelCheckpoint& cp, const std::string& out,
                            const std::string& log_flag, Manifest& manifest) {
  save_checkpoint(cp, out);
  const std::string log = log_flag.empty() ? out + ".log.csv" : log_flag;
  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < cp.epoch_losses.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, cp.epoch_losses[e]);
    csv += buf;
  }
  write_file(log, csv);
  manifest.outputs = {out, log};
  manifest.write_next_to(out);
}

EpochCallback progress(bool quiet, const std::string& label) {
  if (quiet) return {};
  return [label](int epoch, double loss) {
    std::fprintf(stderr, "%s epoch %d mean_loss %.6f\n", label.c_str(), epoch, loss);
  };
}

// "7:10,23,6;8:6" -> hours [7, 8] with their ordered activities
void parse_history(const std::string& text, ActivitySample& sample) {
  std::stringstream blocks(text);
  std::string block;
  while (std::getline(blocks, block, ';')) {
    const auto colon = block.find(':');
    if (colon == std::string::npos) throw ParseError("history block '" + block + "' lacks 'hour:'");
    int hour = 0;
    try {
      hour = std::stoi(block.substr(0, colon));
    } catch (const std::exception&) {
      throw ParseError("bad hour in history block '" + block + "'");
    }
    ActivityList acts;
    std::stringstream ids(block.substr(colon + 1));
    std::string id;
    while (std::getline(ids, id, ',')) {
      try {
        acts.emplace_back(std::stoi(id));
      } catch (const std::logic_error&) {
        throw ParseError("bad activity id '" + id + "' in history");
      }
    }
    sample.previous_hours.push_back(hour);
    sample.previous_unique.push_back(unique_sorted(acts));
    sample.previous_activities.push_back(std::move(acts));
  }
}

struct Commands {
  Manifest manifest;

  // synth
  SynthConfig synth;
  std::string synth_routine = "independent";
  std::string synth_start = "2018-05-01";
  std::string synth_out;

  // preprocess
  std::string pre_input, pre_output, pre_valid_output;
  std::vector<UserId> pre_users;
  bool pre_nurses = false;
  double pre_valid_fraction = 0.0;

  // pretrain / finetune
  std::vector<std::string> data;
  std::string out;
  ModelFlags model;
  TrainFlags training;
  std::string parent;
  UserId user = 0;

  // evaluate
  std::vector<std::string> eval_checkpoints;
  std::string eval_data;
  bool per_user = false;
  std::vector<UserId> eval_users;
  double threshold = 0.5;
  std::string format = "csv";
  std::string output;

  // predict
  std::string sample_path;
  std::string history;
  int next_hour = -1;

  // stats
  std::string stats_input;

  int run_synth() {
    synth.routine = synth_routine == "shifted" ? RoutineMode::shifted : RoutineMode::independent;
    synth.start_date = parse_date(synth_start);
    write_records(synth_out, generate(synth));
    ordered_json& c = manifest.config;
    c["users"] = synth.users;
    c["days"] = synth.days;
    c["hours"] = synth.hours_per_day;
    c["noise"] = synth.noise_rate;
    c["seed"] = synth.seed;
    c["routine"] = synth_routine;
    c["start-date"] = synth_start;
    manifest.seed = synth.seed;
    manifest.outputs = {synth_out};
    manifest.write_next_to(synth_out);
    return 0;
  }

  int run_preprocess() {
    auto records = read_records(pre_input);
    std::set<UserId> allowed(pre_users.begin(), pre_users.end());
    if (pre_nurses) allowed.insert(kThirdChallengeNurses.begin(), kThirdChallengeNurses.end());
    if (!allowed.empty()) records = filter_users(records, allowed);
    const auto samples = preprocess_records(records);

    manifest.inputs = {pre_input};
    ordered_json& c = manifest.config;
    c["users"] = std::vector<UserId>(allowed.begin(), allowed.end());
    c["valid-fraction"] = pre_valid_fraction;
    if (pre_valid_fraction > 0.0) {
      if (pre_valid_output.empty()) throw ConfigError("--valid-fraction needs --valid-output");
      const auto split = split_by_date(samples, pre_valid_fraction);
      write_samples(pre_output, split.train);
      write_samples(pre_valid_output, split.valid);
      manifest.outputs = {pre_output, pre_valid_output};
      manifest.write_next_to(pre_valid_output);
    } else {
      write_samples(pre_output, samples);
      manifest.outputs = {pre_output};
    }
    manifest.write_next_to(pre_output);
    std::fprintf(stderr, "preprocess: %zu records -> %zu samples\n", records.size(), samples.size());
    return 0;
  }

  int run_pretrain() {
    const auto config = model.config();
    const auto dataset = load_datasets(data);
    const auto cp = pretrain(dataset, config, training.cfg, progress(training.quiet, "pretrain"));
    manifest.inputs.assign(data.begin(), data.end());
    manifest.config = training.json();
    manifest.config["backbone"] = model.backbone;
    manifest.config["hidden"] = model.hidden;
    manifest.config["head"] = model.head;
    manifest.config["dropout"] = model.dropout;
    manifest.config["normalize"] = model.normalize;
    manifest.seed = training.cfg.seed;
    write_training_outputs(cp, out, training.log, manifest);
    return 0;
  }

  int run_finetune() {
    const auto base = load_checkpoint(parent);
    const auto dataset = load_datasets(data);
    const auto cp = finetune(dataset, base, user, training.cfg,
                             progress(training.quiet, "finetune user " + std::to_string(user)));
    manifest.inputs = {parent};
    manifest.inputs.insert(manifest.inputs.end(), data.begin(), data.end());
    manifest.config = training.json();
    manifest.config["user"] = user;
    manifest.seed = training.cfg.seed;
    write_training_outputs(cp, out, training.log, manifest);
    return 0;
  }

  int run_evaluate() {
    std::optional<ModelCheckpoint> shared;
    std::map<UserId, ModelCheckpoint> tuned;
    for (const auto& path : eval_checkpoints) {
      auto cp = load_checkpoint(path);
      if (cp.stage == Stage::finetuned && cp.finetune_user) {
        const auto u = *cp.finetune_user;
        if (!tuned.emplace(u, std::move(cp)).second) {
          throw ConfigError("two fine-tuned checkpoints for user " + std::to_string(u));
        }
      } else {
        if (shared) throw ConfigError("more than one pre-trained checkpoint given");
        shared = std::move(cp);
      }
    }

    auto dataset = read_samples(eval_data);
    if (!eval_users.empty()) {
      const std::set<UserId> keep(eval_users.begin(), eval_users.end());
      std::erase_if(dataset, [&](const ActivitySample& s) { return !keep.contains(s.user_id); });
    }
    if (dataset.empty()) throw ConfigError("no evaluation samples");

    std::map<UserId, std::vector<ActivitySample>> by_user;
    for (auto& s : dataset) by_user[s.user_id].push_back(std::move(s));
    for (auto u : eval_users) {
      if (!by_user.contains(u)) throw ConfigError("no evaluation samples for user " + std::to_string(u));
    }

    UserReports reports;
    std::vector<MetricsReport> rows;
    for (const auto& [u, samples] : by_user) {
      const ModelCheckpoint* cp = nullptr;
      if (auto it = tuned.find(u); it != tuned.end()) {
        cp = &it->second;
      } else if (shared) {
        cp = &*shared;
      } else {
        throw ConfigError("no checkpoint applies to user " + std::to_string(u));
      }
      reports[u] = evaluate(*cp, samples, threshold);
      rows.push_back(reports[u]);
    }
    const auto avg = weighted_average(rows);
    if (!per_user) reports.clear();
    const auto text = format == "json" ? metrics_json(reports, avg) : metrics_csv(reports, avg);
    emit(text, output);

    if (!output.empty()) {
      manifest.inputs.assign(eval_checkpoints.begin(), eval_checkpoints.end());
      manifest.inputs.push_back(eval_data);
      manifest.config["per-user"] = per_user;
      manifest.config["users"] = eval_users;
      manifest.config["threshold"] = threshold;
      manifest.config["format"] = format;
      manifest.outputs = {output};
      manifest.write_next_to(output);
    }
    return 0;
  }

  int run_predict() {
    const auto cp = load_checkpoint(eval_checkpoints.front());
    std::vector<ActivitySample> samples;
    if (!sample_path.empty()) {
      samples = read_samples(sample_path);
    } else {
      if (history.empty() || next_hour < 0) {
        throw ConfigError("predict needs --sample or both --history and --next-hour");
      }
      ActivitySample s;
      s.user_id = user;
      parse_history(history, s);
      s.next_hour = next_hour;
      // placeholder target; only the inputs are encoded for prediction
      s.next_activities = {ActivityId{1}};
      try {
        s.validate();
      } catch (const ContractError& e) {
        throw DomainError(std::string("invalid history: ") + e.what());
      }
      samples.push_back(std::move(s));
    }
    std::string text;
    for (const auto& s : samples) text += format_ids(predict_activities(cp, s, threshold)) + "\n";
    emit(text, output);
    return 0;
  }

  int run_stats() {
    const auto records = read_records(stats_input);
    std::map<std::pair<UserId, int>, std::int64_t> per_pair;
    std::map<UserId, std::int64_t> per_user_total;
    std::map<int, std::int64_t> per_activity_total;
    for (const auto& r : records) {
      ++per_pair[{r.user_id, r.activity.value()}];
      ++per_user_total[r.user_id];
      ++per_activity_total[r.activity.value()];
    }
    std::string csv = "user_id,activity_type_id,count\n";
    for (const auto& [key, n] : per_pair) {
      csv += std::to_string(key.first) + ',' + std::to_string(key.second) + ',' + std::to_string(n) + '\n';
    }
    for (const auto& [u, n] : per_user_total) csv += std::to_string(u) + ",all," + std::to_string(n) + '\n';
    for (const auto& [a, n] : per_activity_total) csv += "all," + std::to_string(a) + ',' + std::to_string(n) + '\n';
    emit(csv, output);
    if (!output.empty()) {
      manifest.inputs = {stats_input};
      manifest.outputs = {output};
      manifest.write_next_to(output);
    }
    return 0;
  }
};

// Fills options not given on the command line from a flat or [subcommand]-sectioned file.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::Error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (!item.parents.empty() &&
        !(item.parents.size() == 1 && item.parents.front() == sub.get_name())) {
      continue;
    }
    if (item.name == "config" || item.name == "++" || item.name == "--") continue;
    auto* opt = sub.get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw ConfigError("config file " + path + ": unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    try {
      if (opt->get_expected_min() == 0) {
        const auto& v = item.inputs.empty() ? std::string("true") : item.inputs.front();
        if (v != "true" && v != "1") continue;
        opt->add_result(std::string("true"));
      } else {
        opt->add_result(item.inputs);
      }
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config file " + path + ": key '" + item.name + "': " + e.what());
    }
  }
}

}  // namespace

int dispatch(std::vector<std::string> args) {
  CLI::App app{"Next-hour caregiver activity prediction"};
  app.name(args.empty() ? "carepred" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Commands cmd;
  cmd.manifest.command = join_args(args);

  auto* synth = app.add_subcommand("synth", "Generate synthetic care records");
  synth->add_option("--users", cmd.synth.users, "Comma-separated user ids")->delimiter(',')->capture_default_str();
  synth->add_option("--days", cmd.synth.days)->capture_default_str();
  synth->add_option("--hours", cmd.synth.hours_per_day, "Recorded hours per day, from 07:00")->capture_default_str();
  synth->add_option("--noise", cmd.synth.noise_rate, "Probability an hour is replaced at random")->capture_default_str();
  synth->add_option("--seed", cmd.synth.seed)->capture_default_str();
  synth->add_option("--routine", cmd.synth_routine, "independent or shifted")
      ->check(CLI::IsMember({"independent", "shifted"}))->capture_default_str();
  synth->add_option("--start-date", cmd.synth_start)->capture_default_str();
  synth->add_option("--out", cmd.synth_out, "Output records CSV")->required();

  auto* pre = app.add_subcommand("preprocess", "Care-record CSV to JSONL samples");
  pre->add_option("--input", cmd.pre_input)->required();
  pre->add_option("--output", cmd.pre_output)->required();
  pre->add_option("--users", cmd.pre_users, "Keep only these users")->delimiter(',');
  pre->add_flag("--nurses", cmd.pre_nurses, "Keep only the third-challenge nurse users");
  pre->add_option("--valid-fraction", cmd.pre_valid_fraction, "Hold out the last fraction of dates");
  pre->add_option("--valid-output", cmd.pre_valid_output, "JSONL for held-out samples");

  auto* pt = app.add_subcommand("pretrain", "User-agnostic training on pooled data");
  pt->add_option("--data", cmd.data, "Dataset JSONL (repeatable)")->required();
  pt->add_option("--out", cmd.out, "Checkpoint path")->required();
  cmd.model.attach(pt);
  cmd.training.attach(pt);

  auto* ft = app.add_subcommand("finetune", "Per-user fine-tuning from a checkpoint");
  ft->add_option("--checkpoint", cmd.parent)->required();
  ft->add_option("--data", cmd.data, "Dataset JSONL (repeatable)")->required();
  ft->add_option("--user", cmd.user)->required();
  ft->add_option("--out", cmd.out, "Checkpoint path")->required();
  cmd.training.attach(ft);

  auto* ev = app.add_subcommand("evaluate", "Metrics for checkpoints on a dataset");
  ev->add_option("--checkpoint", cmd.eval_checkpoints,
                 "Checkpoint (repeatable; fine-tuned ones serve their own user)")->required();
  ev->add_option("--data", cmd.eval_data)->required();
  ev->add_flag("--per-user", cmd.per_user, "One row per user plus the weighted avg row");
  ev->add_option("--users", cmd.eval_users, "Restrict to these users")->delimiter(',');
  ev->add_option("--threshold", cmd.threshold)->capture_default_str();
  ev->add_option("--format", cmd.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  ev->add_option("--output", cmd.output, "Write here instead of stdout");

  auto* pr = app.add_subcommand("predict", "Predict next-hour activities");
  pr->add_option("--checkpoint", cmd.eval_checkpoints)->required()->expected(1);
  pr->add_option("--sample", cmd.sample_path, "JSONL of samples");
  pr->add_option("--history", cmd.history, "Previous hours as 'hour:id,id;hour:id'");
  pr->add_option("--next-hour", cmd.next_hour);
  pr->add_option("--user", cmd.user);
  pr->add_option("--threshold", cmd.threshold)->capture_default_str();
  pr->add_option("--output", cmd.output);

  auto* st = app.add_subcommand("stats", "Per-user and per-activity record counts");
  st->add_option("--input", cmd.stats_input)->required();
  st->add_option("--output", cmd.output);

  std::map<CLI::App*, std::string> config_files;
  for (auto* sub : {synth, pre, pt, ft, ev, pr, st}) {
    sub->add_option("--config", config_files[sub], "TOML/INI file whose keys are flag names");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "error: kind=usage message=" << e.what() << "\n";
    return 2;
  }

  try {
    for (auto& [sub, file] : config_files) {
      if (*sub && !file.empty()) apply_config_file(*sub, file);
    }
    if (*synth) return cmd.run_synth();
    if (*pre) return cmd.run_preprocess();
    if (*pt) return cmd.run_pretrain();
    if (*ft) return cmd.run_finetune();
    if (*ev) return cmd.run_evaluate();
    if (*pr) return cmd.run_predict();
    if (*st) return cmd.run_stats();
  } catch (const Error& e) {
    std::cerr << "error: kind=" << e.kind() << " message=" << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: kind=internal message=" << e.what() << "\n";
    return 1;
  }
  return 2;
}

int dispatch(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv, argv + argc));
}

}  // namespace carepred::cli
