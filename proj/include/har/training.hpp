#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "har/attention.hpp"
#include "har/index.hpp"

namespace har {

struct TrainConfig {
  double learning_rate = 5e-5;
  double epochs = 3.0;
  int negatives = 16;  // sampled non-gold passages per query
  std::uint64_t seed = 0;
  int eval_every = 100;  // steps between dev evaluations (0 and end always)
  int max_steps = 0;     // 0 = run the full epoch budget
  int recall_k = 100;    // dev metric: Recall@recall_k
};

/// Frozen-encoder forward pass of one instance batch, kept in hidden space
/// so the head can be re-applied cheaply during training and finite
/// differencing.
struct InstanceFeatures {
  Eigen::MatrixXd cls_hidden;             // n_rows×h
  std::vector<Eigen::MatrixXd> qk_hidden; // n_rows of M×h, zero rows at pads
  BoolRow active_positions;               // length M
  int active_count = 0;
  std::vector<int> turn_ids;
  int current_turn = 0;
};

InstanceFeatures encode_instance(const Dialog& dialog, int k,
                                 const Encoder& encoder,
                                 const AttentionHead& head,
                                 const SequenceLayout& layout,
                                 const Vocabulary& vocab);

/// Head forward pass from cached hidden features. Matches compose_query
/// bit for bit on the same inputs.
QueryVector head_query(const InstanceFeatures& features,
                       const AttentionHead& head);

/// Softmax cross-entropy with the gold passage in slot 0:
/// -log softmax_0([q·gold, q·neg_1, ...]).
double retrieval_loss(const Eigen::VectorXd& query,
                      const Eigen::VectorXd& gold_vector,
                      const Eigen::MatrixXd& negative_vectors);

struct HeadGradients {
  Eigen::VectorXd d;           // b
  Eigen::MatrixXd projection;  // h×b
};

struct LossGrad {
  double loss = 0.0;
  HeadGradients grad;
};

/// Loss plus analytic gradients w.r.t. d and the projection. The softmax
/// path through d is active only in soft mode; the projection gradient
/// flows in every mode. The encoder body receives no gradient.
LossGrad loss_and_grad(const InstanceFeatures& features,
                       const AttentionHead& head,
                       const Eigen::VectorXd& gold_vector,
                       const Eigen::MatrixXd& negative_vectors);

struct EvalPoint {
  int step = 0;
  double dev_loss = 0.0;
  double dev_recall = 0.0;
};

struct TrainState {
  int step = 0;
  AttentionHead head;
  double best_recall = 0.0;
  int best_step = 0;
  AttentionHead best_head;
  std::vector<double> loss_history;  // one entry per step
  std::vector<EvalPoint> eval_log;
};

struct TrainData {
  const std::vector<Dialog>& train_dialogs;
  const std::vector<Dialog>& dev_dialogs;
  const PassageCollection& passages;
  const VectorStore& store;
  const Vocabulary& vocab;
};

/// Plain gradient descent over seeded-shuffled turns with dev-recall
/// checkpoint selection; the result carries both the final and the best
/// head. Aborts with Error if the loss turns non-finite.
TrainState train(const TrainData& data, const Encoder& encoder,
                 AttentionHead head, const SequenceLayout& layout,
                 const TrainConfig& config, int threads = 1);

/// One JSONL line per eval point: {"step", "loss", "dev_recall@K",
/// "config_hash"}.
void save_train_log(const TrainState& state, const TrainConfig& config,
                    const std::string& config_hash, const std::string& path);

}  // namespace har
