#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "har/encoder.hpp"

namespace har {

enum class Granularity { kFine, kCoarse };
enum class AttentionMode { kSoft, kAlphaOne, kUniform };

std::string to_string(Granularity g);
std::string to_string(AttentionMode m);
Granularity granularity_from_string(const std::string& s);
AttentionMode attention_mode_from_string(const std::string& s);

/// The trainable head: attention parameter d plus the output projection
/// (initialized from the encoder's, then trained on the query side while
/// stored passage vectors keep the original).
struct AttentionHead {
  Eigen::VectorXd d;            // b
  Eigen::MatrixXd projection;   // h×b
  Granularity granularity = Granularity::kFine;
  AttentionMode attention_mode = AttentionMode::kSoft;
  bool posseg_enabled = true;
  bool current_only = false;

  /// e.g. "fine,posseg,soft" or "coarse,no-posseg,alpha_one,current-only"
  std::string variant_label() const;
};

/// Fresh head for `encoder`: d starts at zero (uniform attention) and the
/// projection is the encoder's.
AttentionHead init_head(const Encoder& encoder, Granularity granularity,
                        AttentionMode attention_mode, bool posseg_enabled,
                        bool current_only = false);

/// One-file checkpoint: head parameters plus the store fingerprint fields.
void save_head(const AttentionHead& head, const std::string& config_hash,
               std::uint64_t encoder_seed, const std::string& path);
struct LoadedHead {
  AttentionHead head;
  std::string config_hash;
  std::uint64_t encoder_seed = 0;
};
LoadedHead load_head(const std::string& path);

/// Attention weights over the batch rows. soft: numerically stable softmax
/// of d·s_i; alpha_one: all ones; uniform: 1/n_rows.
Eigen::VectorXd attention_weights(const Eigen::MatrixXd& sequence_reps,
                                  const Eigen::VectorXd& d,
                                  AttentionMode mode);

/// Token-level aggregation: Q = Σ_i α_i T_i, then the mean over the active
/// (non-pad) q_k positions. Throws when no position is active.
Eigen::VectorXd aggregate_fine(const std::vector<Eigen::MatrixXd>& token_reps,
                               const Eigen::VectorXd& alpha,
                               const BoolRow& active_positions);

/// Sequence-level aggregation: Σ_i α_i s_i.
Eigen::VectorXd aggregate_coarse(const Eigen::MatrixXd& sequence_reps,
                                 const Eigen::VectorXd& alpha);

struct QueryVector {
  Eigen::VectorXd q_hat;     // b
  Eigen::VectorXd alphas;    // aligned with turn_ids
  std::vector<int> turn_ids;
};

/// Full composition for turn k: instance batch -> encoder -> attention ->
/// aggregation. Pure function of its inputs; N is the encoder's segment
/// vocabulary.
QueryVector compose_query(const Dialog& dialog, int k, const Encoder& encoder,
                          const AttentionHead& head,
                          const SequenceLayout& layout,
                          const Vocabulary& vocab);

}  // namespace har
