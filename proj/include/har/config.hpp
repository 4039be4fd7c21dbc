#pragma once

#include <cstdint>
#include <string>

#include "har/attention.hpp"
#include "har/corpus.hpp"
#include "har/encoder.hpp"
#include "har/training.hpp"

namespace har {

struct PathsConfig {
  std::string data_dir = "data";
  std::string store_dir = "store";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";
};

/// Everything a run needs, resolvable from a profile, an optional JSON
/// config file, and command-line overrides (in that order; later wins).
struct RunConfig {
  PathsConfig paths;

  // Sequence geometry
  int max_question_tokens = 16;  // M
  int max_passage_tokens = 64;
  int max_seq = 512;  // sanity ceiling: 3M+3 must fit
  int max_history_turns = 11;  // N; also the segment vocabulary size
  int top_r = 100;             // R, retrieval depth

  // Encoder
  int encoder_hidden = 64;
  int encoder_embed = 128;
  int encoder_layers = 2;
  int encoder_heads = 2;

  // Head variant
  std::string granularity = "coarse";
  std::string attention_mode = "soft";
  bool posseg = true;
  bool current_only = false;

  // Training. The desk defaults are tuned for the synthetic corpus and the
  // plain-SGD trainer; the paper-defaults profile restores 5e-5 / 3 epochs.
  double learning_rate = 0.02;
  double epochs = 50.0;
  int negatives = 16;
  int eval_every = 100;
  int max_steps = 0;
  int recall_k = 100;

  // Synthetic corpus
  SyntheticConfig synthetic;

  std::uint64_t seed = 7;
  // Per-stage seed overrides; 0 = derive from the global seed.
  std::uint64_t data_seed = 0;
  std::uint64_t encoder_seed = 0;
  std::uint64_t train_seed = 0;

  int threads = 1;

  void validate() const;

  /// "desk" (out-of-box synthetic scale) or "paper-defaults" (full-scale
  /// sequence lengths for externally supplied data).
  static RunConfig profile(const std::string& name);

  /// Overlays a JSON config document (any subset of fields).
  void apply_json_file(const std::string& path);
  void apply_json_text(const std::string& text);
  std::string to_json() const;

  std::uint64_t resolved_data_seed() const;
  std::uint64_t resolved_encoder_seed() const;
  std::uint64_t resolved_train_seed() const;

  /// Fingerprint of everything that determines vector compatibility:
  /// encoder dimensions and seed plus sequence geometry.
  std::string config_hash(int vocab_size) const;

  SequenceLayout layout() const;
  EncoderConfig encoder_config(int vocab_size) const;
  BatchOptions batch_options() const;
  TrainConfig train_config() const;
  Granularity granularity_enum() const;
  AttentionMode attention_mode_enum() const;

  /// e.g. "fine,posseg,soft"; matches AttentionHead::variant_label.
  std::string variant_label() const;
};

}  // namespace har
