#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "har/batching.hpp"
#include "har/common.hpp"

namespace har {

struct EncoderConfig {
  int vocab_size = 0;
  int hidden = 64;         // h; must be divisible by heads
  int embed = 128;         // b, the retrieval embedding size
  int layers = 2;
  int heads = 2;
  int max_positions = 0;   // covers both query rows (3M+3) and passage rows
  int segment_vocab = 11;  // N
  std::uint64_t seed = 0;

  int head_dim() const { return hidden / heads; }
  void validate() const;  // throws Error on bad dimensions
};

struct EncoderLayerWeights {
  Eigen::MatrixXd wq, wk, wv, wo;  // h×h
  Eigen::VectorXd bq, bk, bv, bo;
  Eigen::MatrixXd ff1, ff2;  // h×4h, 4h×h
  Eigen::VectorXd fb1, fb2;
  Eigen::VectorXd ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

/// Per-turn encoder output in embedding space.
struct TurnEncoding {
  Eigen::VectorXd s;       // b; projected [CLS] representation
  Eigen::MatrixXd tokens;  // M×b; projected q_k positions, zero rows at pads
  int active_count = 0;
};

/// Small frozen contextual encoder: summed token/position/segment
/// embeddings followed by post-norm self-attention blocks. All weights are
/// a pure function of (config, seed); nothing here ever trains.
struct Encoder {
  EncoderConfig config;
  Eigen::MatrixXd token_table;     // vocab_size×h
  Eigen::MatrixXd position_table;  // max_positions×h
  Eigen::MatrixXd segment_table;   // segment_vocab×h
  std::vector<EncoderLayerWeights> layers;
  Eigen::MatrixXd projection;  // h×b

  /// Contextual matrix for one row; length may be anything up to
  /// max_positions. Masked (pad) positions never influence unmasked ones.
  Eigen::MatrixXd encode_row(const Eigen::ArrayXi& token_ids,
                             const Eigen::ArrayXi& segment_ids,
                             const BoolRow& token_mask) const;

  /// Applies `projection` to the [CLS] row and the q_k span of G.
  /// `current_token_mask` selects the q_k positions; layout gives where the
  /// span starts.
  TurnEncoding extract_turn_encoding(const Eigen::MatrixXd& contextual,
                                     const BoolRow& current_token_mask,
                                     const SequenceLayout& layout,
                                     const Eigen::MatrixXd& projection) const;
  TurnEncoding extract_turn_encoding(const Eigen::MatrixXd& contextual,
                                     const BoolRow& current_token_mask,
                                     const SequenceLayout& layout) const;

  /// Projected [CLS] vector of a standalone token sequence (segment ids 0).
  /// Used for passage encoding.
  Eigen::VectorXd encode_sequence(const std::vector<int>& token_ids) const;
};

/// Builds all weights from a portable seeded generator at scale 1/sqrt(h).
Encoder init_encoder(const EncoderConfig& config);

/// Checkpoint carries the config only; weights regenerate from the seed.
void save_encoder_config(const EncoderConfig& config, const std::string& path);
EncoderConfig load_encoder_config(const std::string& path);

}  // namespace har
