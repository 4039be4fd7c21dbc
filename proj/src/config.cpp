#include "har/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace har {

using nlohmann::json;

void RunConfig::validate() const {
  if (max_question_tokens < 1) throw Error("config: max_question_tokens < 1");
  if (max_passage_tokens < 1) throw Error("config: max_passage_tokens < 1");
  const SequenceLayout l = layout();
  if (l.row_length() > max_seq) {
    throw Error("config: row length " + std::to_string(l.row_length()) +
                " (3M+3) exceeds max_seq " + std::to_string(max_seq));
  }
  if (max_history_turns < 1) throw Error("config: max_history_turns < 1");
  if (top_r < 1) throw Error("config: top_r < 1");
  if (encoder_hidden < 1 || encoder_embed < 1 || encoder_layers < 1 ||
      encoder_heads < 1) {
    throw Error("config: encoder dimensions must be positive");
  }
  if (encoder_hidden % encoder_heads != 0) {
    throw Error("config: encoder_hidden is not divisible by encoder_heads");
  }
  if (learning_rate <= 0) throw Error("config: learning_rate must be > 0");
  if (epochs <= 0 && max_steps <= 0) {
    throw Error("config: either epochs or max_steps must be positive");
  }
  if (negatives < 1) throw Error("config: negatives < 1");
  if (recall_k < 1) throw Error("config: recall_k < 1");
  if (threads < 1) throw Error("config: threads < 1");
  granularity_enum();
  attention_mode_enum();
  if (synthetic.n_dialogs < 1 || synthetic.turns_per_dialog < 1 ||
      synthetic.n_passages < 1) {
    throw Error("config: synthetic corpus counts must be positive");
  }
}

RunConfig RunConfig::profile(const std::string& name) {
  RunConfig config;  // defaults are the desk profile
  if (name == "desk") return config;
  if (name == "paper-defaults") {
    config.max_question_tokens = 125;
    config.max_passage_tokens = 384;
    config.top_r = 100;
    config.granularity = "fine";
    config.learning_rate = 5e-5;
    config.epochs = 3.0;
    return config;
  }
  throw Error("unknown profile '" + name + "' (expected desk|paper-defaults)");
}

namespace {

template <typename T>
void maybe(const json& doc, const char* key, T& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

}  // namespace

void RunConfig::apply_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("bad config JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error("bad config JSON: expected an object");
  static const std::vector<std::string> known = {
      "data_dir",        "store_dir",        "checkpoint_dir",
      "report_dir",      "max_question_tokens", "max_passage_tokens",
      "max_seq",         "max_history_turns", "top_r",
      "encoder_hidden",  "encoder_embed",    "encoder_layers",
      "encoder_heads",   "granularity",      "attention_mode",
      "posseg",          "current_only",     "learning_rate",
      "epochs",          "negatives",        "eval_every",
      "max_steps",       "recall_k",         "synthetic",
      "seed",            "data_seed",        "encoder_seed",
      "train_seed",      "threads"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error("bad config JSON: unknown key '" + key + "'");
    }
  }
  maybe(doc, "data_dir", paths.data_dir);
  maybe(doc, "store_dir", paths.store_dir);
  maybe(doc, "checkpoint_dir", paths.checkpoint_dir);
  maybe(doc, "report_dir", paths.report_dir);
  maybe(doc, "max_question_tokens", max_question_tokens);
  maybe(doc, "max_passage_tokens", max_passage_tokens);
  maybe(doc, "max_seq", max_seq);
  maybe(doc, "max_history_turns", max_history_turns);
  maybe(doc, "top_r", top_r);
  maybe(doc, "encoder_hidden", encoder_hidden);
  maybe(doc, "encoder_embed", encoder_embed);
  maybe(doc, "encoder_layers", encoder_layers);
  maybe(doc, "encoder_heads", encoder_heads);
  maybe(doc, "granularity", granularity);
  maybe(doc, "attention_mode", attention_mode);
  maybe(doc, "posseg", posseg);
  maybe(doc, "current_only", current_only);
  maybe(doc, "learning_rate", learning_rate);
  maybe(doc, "epochs", epochs);
  maybe(doc, "negatives", negatives);
  maybe(doc, "eval_every", eval_every);
  maybe(doc, "max_steps", max_steps);
  maybe(doc, "recall_k", recall_k);
  if (doc.contains("synthetic")) {
    const json& s = doc.at("synthetic");
    maybe(s, "n_dialogs", synthetic.n_dialogs);
    maybe(s, "turns_per_dialog", synthetic.turns_per_dialog);
    maybe(s, "n_passages", synthetic.n_passages);
    maybe(s, "topic_return_gap", synthetic.topic_return_gap);
    maybe(s, "vocab_size", synthetic.vocab_size);
  }
  maybe(doc, "seed", seed);
  maybe(doc, "data_seed", data_seed);
  maybe(doc, "encoder_seed", encoder_seed);
  maybe(doc, "train_seed", train_seed);
  maybe(doc, "threads", threads);
}

void RunConfig::apply_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  apply_json_text(buf.str());
}

std::string RunConfig::to_json() const {
  json doc;
  doc["data_dir"] = paths.data_dir;
  doc["store_dir"] = paths.store_dir;
  doc["checkpoint_dir"] = paths.checkpoint_dir;
  doc["report_dir"] = paths.report_dir;
  doc["max_question_tokens"] = max_question_tokens;
  doc["max_passage_tokens"] = max_passage_tokens;
  doc["max_seq"] = max_seq;
  doc["max_history_turns"] = max_history_turns;
  doc["top_r"] = top_r;
  doc["encoder_hidden"] = encoder_hidden;
  doc["encoder_embed"] = encoder_embed;
  doc["encoder_layers"] = encoder_layers;
  doc["encoder_heads"] = encoder_heads;
  doc["granularity"] = granularity;
  doc["attention_mode"] = attention_mode;
  doc["posseg"] = posseg;
  doc["current_only"] = current_only;
  doc["learning_rate"] = learning_rate;
  doc["epochs"] = epochs;
  doc["negatives"] = negatives;
  doc["eval_every"] = eval_every;
  doc["max_steps"] = max_steps;
  doc["recall_k"] = recall_k;
  doc["synthetic"] = {{"n_dialogs", synthetic.n_dialogs},
                      {"turns_per_dialog", synthetic.turns_per_dialog},
                      {"n_passages", synthetic.n_passages},
                      {"topic_return_gap", synthetic.topic_return_gap},
                      {"vocab_size", synthetic.vocab_size}};
  doc["seed"] = seed;
  doc["data_seed"] = data_seed;
  doc["encoder_seed"] = encoder_seed;
  doc["train_seed"] = train_seed;
  doc["threads"] = threads;
  return doc.dump(2);
}

std::uint64_t RunConfig::resolved_data_seed() const {
  return data_seed != 0 ? data_seed : mix_seed(seed, "data");
}

std::uint64_t RunConfig::resolved_encoder_seed() const {
  return encoder_seed != 0 ? encoder_seed : mix_seed(seed, "encoder");
}

std::uint64_t RunConfig::resolved_train_seed() const {
  return train_seed != 0 ? train_seed : mix_seed(seed, "train");
}

std::string RunConfig::config_hash(int vocab_size) const {
  std::ostringstream canon;
  canon << "v=" << vocab_size << ";h=" << encoder_hidden
        << ";b=" << encoder_embed << ";L=" << encoder_layers
        << ";A=" << encoder_heads << ";M=" << max_question_tokens
        << ";P=" << max_passage_tokens << ";N=" << max_history_turns
        << ";seed=" << resolved_encoder_seed();
  return to_hex(fnv1a64(canon.str()));
}

SequenceLayout RunConfig::layout() const {
  SequenceLayout l;
  l.max_question_tokens = max_question_tokens;
  return l;
}

EncoderConfig RunConfig::encoder_config(int vocab_size) const {
  EncoderConfig e;
  e.vocab_size = vocab_size;
  e.hidden = encoder_hidden;
  e.embed = encoder_embed;
  e.layers = encoder_layers;
  e.heads = encoder_heads;
  // Query rows are 3M+3 long; passage rows are [CLS] + passage tokens.
  e.max_positions = std::max(layout().row_length(), 1 + max_passage_tokens);
  e.segment_vocab = max_history_turns;
  e.seed = resolved_encoder_seed();
  return e;
}

BatchOptions RunConfig::batch_options() const {
  BatchOptions options;
  options.max_history_turns = max_history_turns;
  options.posseg_enabled = posseg;
  options.current_only = current_only;
  return options;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.epochs = epochs;
  t.negatives = negatives;
  t.seed = resolved_train_seed();
  t.eval_every = eval_every;
  t.max_steps = max_steps;
  t.recall_k = recall_k;
  return t;
}

Granularity RunConfig::granularity_enum() const {
  return granularity_from_string(granularity);
}

AttentionMode RunConfig::attention_mode_enum() const {
  return attention_mode_from_string(attention_mode);
}

std::string RunConfig::variant_label() const {
  std::string label = granularity;
  label += posseg ? ",posseg" : ",no-posseg";
  label += "," + attention_mode;
  if (current_only) label += ",current-only";
  return label;
}

}  // namespace har
