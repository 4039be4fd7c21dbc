#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "har/attention.hpp"
#include "har/batching.hpp"
#include "har/config.hpp"
#include "har/corpus.hpp"
#include "har/encoder.hpp"
#include "har/eval.hpp"
#include "har/index.hpp"
#include "har/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string variant_filename(const std::string& label) {
  std::string name = label;
  std::replace(name.begin(), name.end(), ',', '_');
  return name;
}

void require_absent(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw har::Error("output " + path.string() +
                     " already exists; pass --force to overwrite");
  }
}

fs::path data_file(const har::RunConfig& config, const std::string& name) {
  return fs::path(config.paths.data_dir) / name;
}

std::vector<har::Dialog> load_split(const har::RunConfig& config,
                                    const std::string& split) {
  if (split != "train" && split != "dev" && split != "test" &&
      split != "all") {
    throw har::Error("unknown split '" + split +
                     "' (expected train|dev|test|all)");
  }
  const std::string name =
      split == "all" ? "dialogs.jsonl" : "dialogs." + split + ".jsonl";
  return har::load_dialogs(data_file(config, name).string());
}

struct Workspace {
  har::Vocabulary vocab;
  har::PassageCollection passages;
  har::VectorStore store;
  har::Encoder encoder;
  std::string config_hash;
};

Workspace open_workspace(const har::RunConfig& config) {
  Workspace ws;
  ws.vocab = har::Vocabulary::load(data_file(config, "vocab.txt").string());
  ws.passages =
      har::load_passages(data_file(config, "passages.jsonl").string());
  ws.passages.tokenize_all(ws.vocab, config.max_passage_tokens);
  ws.config_hash = config.config_hash(ws.vocab.size());
  ws.store = har::load_store(config.paths.store_dir);
  if (ws.store.config_hash != ws.config_hash) {
    throw har::Error("store fingerprint " + ws.store.config_hash +
                     " does not match the current config " + ws.config_hash +
                     "; re-run encode-passages");
  }
  ws.encoder = har::init_encoder(config.encoder_config(ws.vocab.size()));
  return ws;
}

fs::path checkpoint_path(const har::RunConfig& config) {
  return fs::path(config.paths.checkpoint_dir) /
         (variant_filename(config.variant_label()) + ".json");
}

std::vector<int> recall_cutoffs(const har::RunConfig& config) {
  std::vector<int> ks = {5, 10, 100};
  if (std::find(ks.begin(), ks.end(), config.recall_k) == ks.end()) {
    ks.push_back(config.recall_k);
    std::sort(ks.begin(), ks.end());
  }
  return ks;
}

void print_json(const json& doc) { std::cout << doc.dump(2) << std::endl; }

int cmd_gen_data(const har::RunConfig& config, bool force) {
  fs::create_directories(config.paths.data_dir);
  require_absent(data_file(config, "dialogs.jsonl"), force);

  const std::uint64_t seed = config.resolved_data_seed();
  har::SyntheticCorpus corpus = har::gen_synthetic(config.synthetic, seed);
  const har::CorpusSplits splits = har::split_dialogs(corpus.dialogs);

  har::save_dialogs(corpus.dialogs, data_file(config, "dialogs.jsonl").string());
  har::save_dialogs(splits.train,
                    data_file(config, "dialogs.train.jsonl").string());
  har::save_dialogs(splits.dev, data_file(config, "dialogs.dev.jsonl").string());
  har::save_dialogs(splits.test,
                    data_file(config, "dialogs.test.jsonl").string());
  har::save_passages(corpus.passages,
                     data_file(config, "passages.jsonl").string());
  corpus.vocab.save(data_file(config, "vocab.txt").string());

  const std::string config_hash = config.config_hash(corpus.vocab.size());
  json manifest;
  manifest["data_seed"] = seed;
  manifest["n_dialogs"] = config.synthetic.n_dialogs;
  manifest["turns_per_dialog"] = config.synthetic.turns_per_dialog;
  manifest["n_passages"] = config.synthetic.n_passages;
  manifest["topic_return_gap"] = config.synthetic.topic_return_gap;
  manifest["vocab_size"] = corpus.vocab.size();
  manifest["config_hash"] = config_hash;
  {
    std::ofstream out(data_file(config, "gen_manifest.json"),
                      std::ios::binary);
    if (!out) throw har::Error("cannot write gen_manifest.json");
    out << manifest.dump(2) << '\n';
  }

  json summary;
  summary["data_dir"] = config.paths.data_dir;
  summary["dialogs"] = corpus.dialogs.size();
  summary["questions"] =
      corpus.dialogs.size() * static_cast<std::size_t>(
                                  config.synthetic.turns_per_dialog);
  summary["passages"] = corpus.passages.size();
  summary["vocab_size"] = corpus.vocab.size();
  summary["splits"] = {{"train", splits.train.size()},
                       {"dev", splits.dev.size()},
                       {"test", splits.test.size()}};
  summary["config_hash"] = config_hash;
  print_json(summary);
  return 0;
}

int cmd_encode_passages(const har::RunConfig& config, bool force) {
  const har::Vocabulary vocab =
      har::Vocabulary::load(data_file(config, "vocab.txt").string());
  har::PassageCollection passages =
      har::load_passages(data_file(config, "passages.jsonl").string());
  passages.tokenize_all(vocab, config.max_passage_tokens);
  const std::string config_hash = config.config_hash(vocab.size());
  const har::Encoder encoder =
      har::init_encoder(config.encoder_config(vocab.size()));

  require_absent(fs::path(config.paths.store_dir) / "vectors.bin", force);
  const har::VectorStore store =
      har::build_store(passages, encoder, config_hash, config.threads);
  har::save_store(store, config.paths.store_dir);

  json summary;
  summary["store_dir"] = config.paths.store_dir;
  summary["count"] = store.count();
  summary["dim"] = store.dim;
  summary["encoder_seed"] = store.encoder_seed;
  summary["config_hash"] = config_hash;
  print_json(summary);
  return 0;
}

int cmd_train(const har::RunConfig& config, bool force) {
  const Workspace ws = open_workspace(config);
  const std::vector<har::Dialog> train_dialogs = load_split(config, "train");
  const std::vector<har::Dialog> dev_dialogs = load_split(config, "dev");

  har::AttentionHead head =
      har::init_head(ws.encoder, config.granularity_enum(),
                     config.attention_mode_enum(), config.posseg,
                     config.current_only);
  const har::TrainData data{train_dialogs, dev_dialogs, ws.passages, ws.store,
                            ws.vocab};
  const har::TrainConfig train_config = config.train_config();
  const har::TrainState state =
      har::train(data, ws.encoder, head, config.layout(), train_config,
                 config.threads);

  fs::create_directories(config.paths.checkpoint_dir);
  const fs::path checkpoint = checkpoint_path(config);
  require_absent(checkpoint, force);
  har::save_head(state.best_head, ws.config_hash, ws.encoder.config.seed,
                 checkpoint.string());
  const fs::path log = fs::path(config.paths.checkpoint_dir) /
                       (variant_filename(config.variant_label()) +
                        ".log.jsonl");
  har::save_train_log(state, train_config, ws.config_hash, log.string());

  json summary;
  summary["variant"] = config.variant_label();
  summary["steps"] = state.step;
  summary["best_step"] = state.best_step;
  summary["best_dev_recall"] = state.best_recall;
  summary["checkpoint"] = checkpoint.string();
  summary["log"] = log.string();
  summary["config_hash"] = ws.config_hash;
  print_json(summary);
  return 0;
}

har::LoadedHead load_checkpoint_for(const har::RunConfig& config,
                                    const Workspace& ws,
                                    const std::string& override_path) {
  const fs::path path = override_path.empty()
                            ? checkpoint_path(config)
                            : fs::path(override_path);
  if (!fs::exists(path)) {
    throw har::Error("checkpoint " + path.string() +
                     " not found; run train first");
  }
  har::LoadedHead loaded = har::load_head(path.string());
  if (loaded.config_hash != ws.config_hash) {
    throw har::Error("checkpoint fingerprint " + loaded.config_hash +
                     " does not match the current config " + ws.config_hash);
  }
  return loaded;
}

int cmd_eval(const har::RunConfig& config, const std::string& split,
             const std::string& checkpoint_override) {
  const Workspace ws = open_workspace(config);
  const har::LoadedHead loaded =
      load_checkpoint_for(config, ws, checkpoint_override);
  const std::vector<har::Dialog> dialogs = load_split(config, split);

  const har::RunReport report = har::evaluate_run(
      dialogs, ws.passages, ws.encoder, loaded.head, ws.store, config.layout(),
      ws.vocab, config.top_r, recall_cutoffs(config), split, config.threads);

  fs::create_directories(config.paths.report_dir);
  const fs::path out =
      fs::path(config.paths.report_dir) /
      (variant_filename(report.variant) + "." + split + ".report.json");
  har::save_report(report, out.string());

  json summary;
  summary["variant"] = report.variant;
  summary["split"] = split;
  summary["queries"] = report.per_query.size();
  summary["mrr"] = report.mrr;
  json recall = json::object();
  for (const auto& [k, v] : report.recall) recall[std::to_string(k)] = v;
  summary["recall"] = recall;
  summary["report"] = out.string();
  summary["config_hash"] = report.config_hash;
  print_json(summary);
  return 0;
}

int cmd_retrieve(const har::RunConfig& config, const std::string& dialog_id,
                 int turn, int top, bool json_mode,
                 const std::string& checkpoint_override) {
  const Workspace ws = open_workspace(config);
  const har::LoadedHead loaded =
      load_checkpoint_for(config, ws, checkpoint_override);
  const std::vector<har::Dialog> dialogs = load_split(config, "all");

  const auto it = std::find_if(
      dialogs.begin(), dialogs.end(),
      [&](const har::Dialog& d) { return d.dialog_id == dialog_id; });
  if (it == dialogs.end()) {
    throw har::Error("unknown dialog '" + dialog_id + "'");
  }
  if (turn < 1 || turn > static_cast<int>(it->turns.size())) {
    throw har::Error("unknown turn " + std::to_string(turn) + " of dialog '" +
                     dialog_id + "' (has " + std::to_string(it->turns.size()) +
                     " turns)");
  }

  const har::QueryVector query = har::compose_query(
      *it, turn, ws.encoder, loaded.head, config.layout(), ws.vocab);
  const har::RankedList ranked =
      har::search(ws.store, query.q_hat, top > 0 ? top : config.top_r);

  if (json_mode) {
    json doc;
    doc["qid"] = dialog_id + ":" + std::to_string(turn);
    doc["variant"] = loaded.head.variant_label();
    json alphas = json::array();
    for (std::size_t i = 0; i < query.turn_ids.size(); ++i) {
      alphas.push_back({{"turn", query.turn_ids[i]},
                        {"alpha", query.alphas[static_cast<int>(i)]}});
    }
    doc["alphas"] = alphas;
    json hits = json::array();
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      hits.push_back({{"rank", r + 1},
                      {"pid", ranked[r].pid},
                      {"score", ranked[r].score}});
    }
    doc["ranked"] = hits;
    doc["config_hash"] = ws.config_hash;
    print_json(doc);
    return 0;
  }

  std::cout << "query " << dialog_id << ":" << turn << "  ("
            << loaded.head.variant_label() << ")\n";
  std::cout << "attention over history turns:\n";
  for (std::size_t i = 0; i < query.turn_ids.size(); ++i) {
    const har::Turn& t = it->turns[static_cast<std::size_t>(
        query.turn_ids[i]) - 1];
    std::cout << "  turn " << query.turn_ids[i] << "  alpha="
              << query.alphas[static_cast<int>(i)] << "  \"" << t.question
              << "\"\n";
  }
  std::cout << "top passages:\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    std::cout << "  " << (r + 1) << ". " << ranked[r].pid
              << "  score=" << ranked[r].score << "\n";
  }
  return 0;
}

struct AblationRow {
  std::string label;
  har::RunReport report;
  std::optional<std::pair<double, double>> reference;  // full-scale MRR/Recall
};

int cmd_ablate(har::RunConfig config, const std::string& split,
               bool train_missing, bool force) {
  const Workspace ws = open_workspace(config);
  const std::vector<har::Dialog> eval_dialogs = load_split(config, split);
  const std::vector<har::Dialog> train_dialogs = load_split(config, "train");
  const std::vector<har::Dialog> dev_dialogs = load_split(config, "dev");
  const std::vector<int> ks = recall_cutoffs(config);

  // Full-scale OR-QuAC reference values for the rows that have one; printed
  // as context only, never compared against.
  const auto reference =
      [](const std::string& granularity, bool posseg,
         const std::string& attention)
      -> std::optional<std::pair<double, double>> {
    if (granularity == "fine" && posseg && attention == "soft")
      return {{0.1995, 0.2742}};
    if (granularity == "fine" && !posseg && attention == "soft")
      return {{0.1902, 0.2635}};
    if (granularity == "coarse" && posseg && attention == "soft")
      return {{0.1966, 0.2812}};
    if (granularity == "coarse" && !posseg && attention == "soft")
      return {{0.1960, 0.2819}};
    if (granularity == "coarse" && posseg && attention == "alpha_one")
      return {{0.1948, 0.2773}};
    return std::nullopt;
  };

  std::vector<AblationRow> rows;
  for (const std::string granularity : {"fine", "coarse"}) {
    for (const bool posseg : {true, false}) {
      for (const std::string attention : {"soft", "alpha_one"}) {
        config.granularity = granularity;
        config.posseg = posseg;
        config.attention_mode = attention;

        const fs::path checkpoint = checkpoint_path(config);
        if (!fs::exists(checkpoint)) {
          if (!train_missing) {
            throw har::Error("checkpoint " + checkpoint.string() +
                             " missing; re-run with --train-missing");
          }
          har::AttentionHead head = har::init_head(
              ws.encoder, config.granularity_enum(),
              config.attention_mode_enum(), config.posseg,
              config.current_only);
          const har::TrainData data{train_dialogs, dev_dialogs, ws.passages,
                                    ws.store, ws.vocab};
          const har::TrainConfig train_config = config.train_config();
          const har::TrainState state =
              har::train(data, ws.encoder, head, config.layout(), train_config,
                         config.threads);
          fs::create_directories(config.paths.checkpoint_dir);
          har::save_head(state.best_head, ws.config_hash,
                         ws.encoder.config.seed, checkpoint.string());
          har::save_train_log(
              state, train_config, ws.config_hash,
              (fs::path(config.paths.checkpoint_dir) /
               (variant_filename(config.variant_label()) + ".log.jsonl"))
                  .string());
        }

        const har::LoadedHead loaded = load_checkpoint_for(config, ws, "");
        har::RunReport report = har::evaluate_run(
            eval_dialogs, ws.passages, ws.encoder, loaded.head, ws.store,
            config.layout(), ws.vocab, config.top_r, ks, split,
            config.threads);
        fs::create_directories(config.paths.report_dir);
        const fs::path out =
            fs::path(config.paths.report_dir) /
            (variant_filename(report.variant) + "." + split + ".report.json");
        har::save_report(report, out.string());

        std::string label = granularity == "fine"
                                ? "HAR w/ fine-grained attention"
                                : "HAR w/ coarse-grained attention";
        std::vector<std::string> ablated;
        if (!posseg) ablated.push_back("w/o PosSeg");
        if (attention == "alpha_one") {
          ablated.push_back("w/o Soft Attention (α=1)");
        }
        for (std::size_t i = 0; i < ablated.size(); ++i) {
          label += (i == 0 ? ": " : " + ") + ablated[i];
        }
        rows.push_back(
            {label, std::move(report), reference(granularity, posseg,
                                                 attention)});
      }
    }
  }
  (void)force;

  json doc;
  doc["split"] = split;
  doc["config_hash"] = ws.config_hash;
  json out_rows = json::array();
  for (const auto& row : rows) {
    json r;
    r["label"] = row.label;
    r["variant"] = row.report.variant;
    r["mrr"] = row.report.mrr;
    json recall = json::object();
    for (const auto& [k, v] : row.report.recall) recall[std::to_string(k)] = v;
    r["recall"] = recall;
    if (row.reference) {
      r["reference"] = {{"mrr", row.reference->first},
                        {"recall", row.reference->second},
                        {"note", "full-scale OR-QuAC run; context only"}};
    }
    out_rows.push_back(r);
  }
  doc["rows"] = out_rows;
  const fs::path combined =
      fs::path(config.paths.report_dir) / ("ablation." + split + ".json");
  {
    std::ofstream out(combined, std::ios::binary);
    if (!out) throw har::Error("cannot write " + combined.string());
    out << doc.dump(2) << '\n';
  }

  std::printf("%-58s %8s %10s %12s\n", "variant", "MRR",
              ("R@" + std::to_string(config.recall_k)).c_str(), "reference");
  for (const auto& row : rows) {
    const double recall = row.report.recall.count(config.recall_k)
                              ? row.report.recall.at(config.recall_k)
                              : 0.0;
    std::string ref = "-";
    if (row.reference) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f/%.4f", row.reference->first,
                    row.reference->second);
      ref = buf;
    }
    std::printf("%-58s %8.4f %10.4f %12s\n", row.label.c_str(),
                row.report.mrr, recall, ref.c_str());
  }
  std::printf("reference column: MRR/Recall from the full-scale OR-QuAC "
              "setting, shown for context only.\n");
  std::printf("combined report: %s\n", combined.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"history attentive retrieval over conversational corpora"};
  app.require_subcommand(1);

  std::string config_path;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  int threads = 0;
  bool force = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--profile", profile, "base profile: desk or paper-defaults")
      ->check(CLI::IsMember({"desk", "paper-defaults"}));
  auto* seed_opt = app.add_option("--seed", seed, "global seed");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads");
  app.add_flag("--force", force, "overwrite existing outputs");

  std::string granularity;
  std::string attention_mode;
  bool posseg_on = false;
  bool posseg_off = false;
  bool current_only = false;
  std::string split = "test";
  std::string checkpoint_override;

  auto add_variant_flags = [&](CLI::App* cmd) {
    cmd->add_option("--mode", granularity, "granularity: fine or coarse")
        ->check(CLI::IsMember({"fine", "coarse"}));
    cmd->add_option("--attention", attention_mode,
                    "attention mode: soft, alpha_one or uniform")
        ->check(CLI::IsMember({"soft", "alpha_one", "uniform"}));
    cmd->add_flag("--posseg", posseg_on, "enable positional segments");
    cmd->add_flag("--no-posseg", posseg_off, "disable positional segments");
    cmd->add_flag("--current-only", current_only,
                  "restrict the batch to the current question row");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  CLI::App* encode = app.add_subcommand(
      "encode-passages", "encode the passage collection into a vector store");
  CLI::App* build = app.add_subcommand(
      "build-index", "alias of encode-passages");
  CLI::App* train_cmd = app.add_subcommand("train", "train a head variant");
  add_variant_flags(train_cmd);
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a trained head on a split");
  add_variant_flags(eval_cmd);
  eval_cmd->add_option("--split", split, "train, dev or test");
  eval_cmd->add_option("--checkpoint", checkpoint_override,
                       "explicit checkpoint path");

  std::string dialog_id;
  int turn = 1;
  int top = 10;
  bool json_mode = false;
  CLI::App* retrieve_cmd = app.add_subcommand(
      "retrieve", "retrieve passages for one dialog turn");
  add_variant_flags(retrieve_cmd);
  retrieve_cmd->add_option("--dialog-id", dialog_id, "dialog id")->required();
  retrieve_cmd->add_option("--turn", turn, "turn index (1-based)")->required();
  retrieve_cmd->add_option("--top", top, "number of results");
  retrieve_cmd->add_flag("--json", json_mode, "machine-readable output");
  retrieve_cmd->add_option("--checkpoint", checkpoint_override,
                           "explicit checkpoint path");

  bool train_missing = false;
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "evaluate the 2x2x2 ablation matrix");
  ablate_cmd->add_option("--split", split, "train, dev or test");
  ablate_cmd->add_flag("--train-missing", train_missing,
                       "train any variant whose checkpoint is absent");

  for (CLI::App* sub :
       {gen, encode, build, train_cmd, eval_cmd, retrieve_cmd, ablate_cmd}) {
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    har::RunConfig config = har::RunConfig::profile(profile);
    if (!config_path.empty()) config.apply_json_file(config_path);
    if (seed_opt->count() > 0) config.seed = seed;
    if (threads_opt->count() > 0) config.threads = threads;
    if (!granularity.empty()) config.granularity = granularity;
    if (!attention_mode.empty()) config.attention_mode = attention_mode;
    if (posseg_on && posseg_off) {
      throw har::Error("--posseg and --no-posseg are mutually exclusive");
    }
    if (posseg_on) config.posseg = true;
    if (posseg_off) config.posseg = false;
    if (current_only) config.current_only = true;
    config.validate();

    if (app.got_subcommand(gen)) return cmd_gen_data(config, force);
    if (app.got_subcommand(encode) || app.got_subcommand(build)) {
      return cmd_encode_passages(config, force);
    }
    if (app.got_subcommand(train_cmd)) return cmd_train(config, force);
    if (app.got_subcommand(eval_cmd)) {
      return cmd_eval(config, split, checkpoint_override);
    }
    if (app.got_subcommand(retrieve_cmd)) {
      return cmd_retrieve(config, dialog_id, turn, top, json_mode,
                          checkpoint_override);
    }
    if (app.got_subcommand(ablate_cmd)) {
      return cmd_ablate(config, split, train_missing, force);
    }
    throw har::Error("no subcommand selected");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
