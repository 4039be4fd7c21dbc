#include "har/training.hpp"

#include <cmath>
#include <cstddef>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "har/batching.hpp"
#include "har/eval.hpp"
#include "har/rng.hpp"
#include "parallel.hpp"

namespace har {

using Eigen::ArrayXi;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

struct ExampleRef {
  std::size_t dialog = 0;
  int k = 1;
};

std::vector<ExampleRef> all_turns(const std::vector<Dialog>& dialogs) {
  std::vector<ExampleRef> refs;
  for (std::size_t d = 0; d < dialogs.size(); ++d) {
    for (std::size_t t = 0; t < dialogs[d].turns.size(); ++t) {
      refs.push_back({d, static_cast<int>(t) + 1});
    }
  }
  return refs;
}

std::string example_qid(const std::vector<Dialog>& dialogs,
                        const ExampleRef& ref) {
  return dialogs[ref.dialog].dialog_id + ":" + std::to_string(ref.k);
}

const Turn& example_turn(const std::vector<Dialog>& dialogs,
                         const ExampleRef& ref) {
  return dialogs[ref.dialog].turns[static_cast<std::size_t>(ref.k) - 1];
}

/// Distinct store rows outside the gold set, by rejection. The store must
/// hold more non-gold rows than requested.
std::vector<std::size_t> sample_negative_rows(
    const VectorStore& store, const std::unordered_set<std::string>& gold,
    int n_neg, SeededRng& rng) {
  const std::size_t candidates = store.count() - gold.size();
  if (candidates < static_cast<std::size_t>(n_neg)) {
    throw Error("negative sampling: need " + std::to_string(n_neg) +
                " non-gold passages but only " + std::to_string(candidates) +
                " exist");
  }
  std::vector<std::size_t> rows;
  std::unordered_set<std::size_t> seen;
  while (rows.size() < static_cast<std::size_t>(n_neg)) {
    const std::size_t r =
        static_cast<std::size_t>(rng.next_below(store.count()));
    if (gold.count(store.pids[r]) || !seen.insert(r).second) continue;
    rows.push_back(r);
  }
  return rows;
}

MatrixXd rows_to_matrix(const VectorStore& store,
                        const std::vector<std::size_t>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), store.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = store.row_f64(rows[i]).transpose();
  }
  return out;
}

}  // namespace

InstanceFeatures encode_instance(const Dialog& dialog, int k,
                                 const Encoder& encoder,
                                 const AttentionHead& head,
                                 const SequenceLayout& layout,
                                 const Vocabulary& vocab) {
  BatchOptions options;
  options.max_history_turns = encoder.config.segment_vocab;
  options.posseg_enabled = head.posseg_enabled;
  options.current_only = head.current_only;
  const InstanceBatch batch =
      build_instance_batch(dialog, k, vocab, layout, options);

  const int n = batch.n_rows();
  const int h = encoder.config.hidden;
  const int M = layout.max_question_tokens;
  InstanceFeatures features;
  features.cls_hidden.resize(n, h);
  features.qk_hidden.assign(static_cast<std::size_t>(n), MatrixXd::Zero(M, h));
  features.turn_ids = batch.turn_ids;
  features.current_turn = batch.current_turn;
  features.active_positions = BoolRow::Constant(M, false);
  for (int m = 0; m < M; ++m) {
    features.active_positions[m] =
        batch.current_token_mask(0, layout.seg3_begin() + m);
  }
  features.active_count = static_cast<int>(features.active_positions.count());

  for (int r = 0; r < n; ++r) {
    const ArrayXi ids = batch.token_ids.row(r).transpose();
    const ArrayXi segs = batch.segment_ids.row(r).transpose();
    const BoolRow mask = batch.token_mask.row(r).transpose();
    const MatrixXd contextual = encoder.encode_row(ids, segs, mask);
    features.cls_hidden.row(r) = contextual.row(layout.cls_pos());
    for (int m = 0; m < M; ++m) {
      if (features.active_positions[m]) {
        features.qk_hidden[static_cast<std::size_t>(r)].row(m) =
            contextual.row(layout.seg3_begin() + m);
      }
    }
  }
  return features;
}

QueryVector head_query(const InstanceFeatures& features,
                       const AttentionHead& head) {
  const MatrixXd S = features.cls_hidden * head.projection;
  const VectorXd alpha = attention_weights(S, head.d, head.attention_mode);
  QueryVector query;
  query.alphas = alpha;
  query.turn_ids = features.turn_ids;
  if (head.granularity == Granularity::kFine) {
    std::vector<MatrixXd> token_reps;
    token_reps.reserve(features.qk_hidden.size());
    for (const auto& hidden : features.qk_hidden) {
      token_reps.push_back(hidden * head.projection);
    }
    query.q_hat =
        aggregate_fine(token_reps, alpha, features.active_positions);
  } else {
    query.q_hat = aggregate_coarse(S, alpha);
  }
  return query;
}

double retrieval_loss(const VectorXd& query, const VectorXd& gold_vector,
                      const MatrixXd& negative_vectors) {
  if (gold_vector.size() != query.size()) {
    throw Error("retrieval loss: gold vector dimension mismatch");
  }
  if (negative_vectors.rows() < 1) {
    throw Error("retrieval loss: at least one negative is required");
  }
  if (negative_vectors.cols() != query.size()) {
    throw Error("retrieval loss: negative vector dimension mismatch");
  }
  VectorXd scores(negative_vectors.rows() + 1);
  scores[0] = query.dot(gold_vector);
  scores.tail(negative_vectors.rows()) = negative_vectors * query;
  const double top = scores.maxCoeff();
  const double lse = top + std::log((scores.array() - top).exp().sum());
  return lse - scores[0];
}

LossGrad loss_and_grad(const InstanceFeatures& features,
                       const AttentionHead& head,
                       const VectorXd& gold_vector,
                       const MatrixXd& negative_vectors) {
  const Eigen::Index n = features.cls_hidden.rows();
  const bool fine = head.granularity == Granularity::kFine;
  const MatrixXd S = features.cls_hidden * head.projection;
  const VectorXd alpha = attention_weights(S, head.d, head.attention_mode);

  std::vector<MatrixXd> token_reps;
  VectorXd q_hat;
  if (fine) {
    token_reps.reserve(features.qk_hidden.size());
    for (const auto& hidden : features.qk_hidden) {
      token_reps.push_back(hidden * head.projection);
    }
    q_hat = aggregate_fine(token_reps, alpha, features.active_positions);
  } else {
    q_hat = aggregate_coarse(S, alpha);
  }

  if (negative_vectors.rows() < 1) {
    throw Error("retrieval loss: at least one negative is required");
  }
  VectorXd scores(negative_vectors.rows() + 1);
  scores[0] = q_hat.dot(gold_vector);
  scores.tail(negative_vectors.rows()) = negative_vectors * q_hat;
  const double top = scores.maxCoeff();
  const VectorXd exps = (scores.array() - top).exp();
  const VectorXd p = exps / exps.sum();
  const double loss = std::log(exps.sum()) + top - scores[0];

  // dL/d(score_j) = p_j - [j == 0], so dL/dq = Σ_j (p_j - δ_j0)·v_j.
  VectorXd g_q = (p[0] - 1.0) * gold_vector;
  g_q += negative_vectors.transpose() * p.tail(negative_vectors.rows());

  VectorXd g_alpha = VectorXd::Zero(n);
  MatrixXd grad_w =
      MatrixXd::Zero(head.projection.rows(), head.projection.cols());
  if (fine) {
    const double inv_active = 1.0 / features.active_count;
    // q = (1/A)·Σ_active_m Σ_i α_i·T_i[m]. Each row's token contribution
    // collapses to one h-vector u_i = Σ_active_m U_i[m].
    VectorXd alpha_mixed_hidden = VectorXd::Zero(features.cls_hidden.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const MatrixXd& hidden = features.qk_hidden[static_cast<std::size_t>(i)];
      VectorXd u_i = VectorXd::Zero(hidden.cols());
      double token_dot = 0.0;
      for (int m = 0; m < hidden.rows(); ++m) {
        if (!features.active_positions[m]) continue;
        u_i += hidden.row(m).transpose();
        token_dot += token_reps[static_cast<std::size_t>(i)].row(m).dot(g_q);
      }
      g_alpha[i] = token_dot * inv_active;
      alpha_mixed_hidden += alpha[i] * u_i;
    }
    grad_w += inv_active * (alpha_mixed_hidden * g_q.transpose());
  } else {
    g_alpha = S * g_q;
    grad_w += features.cls_hidden.transpose() * (alpha * g_q.transpose());
  }

  VectorXd grad_d = VectorXd::Zero(head.d.size());
  if (head.attention_mode == AttentionMode::kSoft) {
    // Softmax backward: dL/dz_i = α_i·(g_α_i − Σ_j α_j·g_α_j).
    const double mixed = alpha.dot(g_alpha);
    const VectorXd g_z = (alpha.array() * (g_alpha.array() - mixed)).matrix();
    grad_d = S.transpose() * g_z;
    grad_w += features.cls_hidden.transpose() * (g_z * head.d.transpose());
  }

  LossGrad result;
  result.loss = loss;
  result.grad.d = std::move(grad_d);
  result.grad.projection = std::move(grad_w);
  return result;
}

TrainState train(const TrainData& data, const Encoder& encoder,
                 AttentionHead head, const SequenceLayout& layout,
                 const TrainConfig& config, int threads) {
  if (config.negatives < 1) throw Error("train: negatives must be >= 1");
  if (data.store.encoder_seed != encoder.config.seed) {
    throw Error("train: store was built by a different encoder (seed " +
                std::to_string(data.store.encoder_seed) + " vs " +
                std::to_string(encoder.config.seed) + ")");
  }
  if (data.store.dim != encoder.projection.cols()) {
    throw Error("train: store dimension does not match the encoder");
  }

  const std::vector<ExampleRef> train_refs = all_turns(data.train_dialogs);
  const std::vector<ExampleRef> dev_refs = all_turns(data.dev_dialogs);
  if (train_refs.empty()) throw Error("train: empty training split");

  std::unordered_map<std::string, std::size_t> row_of;
  row_of.reserve(data.store.count());
  for (std::size_t r = 0; r < data.store.count(); ++r) {
    row_of.emplace(data.store.pids[r], r);
  }
  const auto gold_rows = [&](const Turn& turn) {
    if (turn.gold_pids.empty()) {
      throw Error("train: turn " + turn.dialog_id + ":" +
                  std::to_string(turn.turn_index) + " has no gold passage");
    }
    std::vector<std::size_t> rows;
    for (const auto& pid : turn.gold_pids) {
      const auto it = row_of.find(pid);
      if (it == row_of.end()) {
        throw Error("train: gold passage " + pid + " is not in the store");
      }
      rows.push_back(it->second);
    }
    return rows;
  };

  // The encoder is frozen, so every forward pass below reuses hidden
  // features computed once up front.
  std::vector<InstanceFeatures> train_features(train_refs.size());
  std::vector<VectorXd> train_gold(train_refs.size());
  std::vector<std::unordered_set<std::string>> train_gold_set(
      train_refs.size());
  parallel_for(train_refs.size(), threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   const auto& ref = train_refs[i];
                   const Dialog& dialog = data.train_dialogs[ref.dialog];
                   train_features[i] = encode_instance(dialog, ref.k, encoder,
                                                       head, layout,
                                                       data.vocab);
                   const Turn& turn = example_turn(data.train_dialogs, ref);
                   train_gold[i] = data.store.row_f64(gold_rows(turn)[0]);
                   train_gold_set[i] = {turn.gold_pids.begin(),
                                        turn.gold_pids.end()};
                 }
               });

  std::vector<InstanceFeatures> dev_features(dev_refs.size());
  std::vector<VectorXd> dev_gold(dev_refs.size());
  std::vector<MatrixXd> dev_negs(dev_refs.size());
  std::vector<const std::vector<std::string>*> dev_gold_pids(dev_refs.size());
  parallel_for(dev_refs.size(), threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   const auto& ref = dev_refs[i];
                   const Dialog& dialog = data.dev_dialogs[ref.dialog];
                   dev_features[i] = encode_instance(dialog, ref.k, encoder,
                                                     head, layout, data.vocab);
                   const Turn& turn = example_turn(data.dev_dialogs, ref);
                   dev_gold[i] = data.store.row_f64(gold_rows(turn)[0]);
                   dev_gold_pids[i] = &turn.gold_pids;
                   // Dev negatives are fixed per query so dev losses at
                   // different steps are comparable.
                   SeededRng rng(mix_seed(config.seed, "devneg:" +
                                          example_qid(data.dev_dialogs, ref)));
                   const std::unordered_set<std::string> gold(
                       turn.gold_pids.begin(), turn.gold_pids.end());
                   dev_negs[i] = rows_to_matrix(
                       data.store, sample_negative_rows(data.store, gold,
                                                        config.negatives, rng));
                 }
               });

  TrainState state;
  state.head = head;

  const auto dev_eval = [&](const AttentionHead& h) {
    std::vector<double> losses(dev_refs.size());
    std::vector<double> recalls(dev_refs.size());
    parallel_for(dev_refs.size(), threads,
                 [&](std::size_t begin, std::size_t end) {
                   for (std::size_t i = begin; i < end; ++i) {
                     const QueryVector q = head_query(dev_features[i], h);
                     losses[i] =
                         retrieval_loss(q.q_hat, dev_gold[i], dev_negs[i]);
                     const RankedList ranked =
                         search(data.store, q.q_hat, config.recall_k);
                     recalls[i] =
                         recall_at_k(ranked, *dev_gold_pids[i], config.recall_k);
                   }
                 });
    EvalPoint point;
    for (std::size_t i = 0; i < dev_refs.size(); ++i) {
      point.dev_loss += losses[i];
      point.dev_recall += recalls[i];
    }
    if (!dev_refs.empty()) {
      point.dev_loss /= static_cast<double>(dev_refs.size());
      point.dev_recall /= static_cast<double>(dev_refs.size());
    }
    return point;
  };

  const auto record_eval = [&](int step, const AttentionHead& h) {
    EvalPoint point = dev_eval(h);
    point.step = step;
    state.eval_log.push_back(point);
    if (state.eval_log.size() == 1 || point.dev_recall > state.best_recall) {
      state.best_recall = point.dev_recall;
      state.best_step = step;
      state.best_head = h;
    }
  };

  record_eval(0, head);

  const long long total_steps =
      config.max_steps > 0
          ? config.max_steps
          : std::llround(config.epochs *
                         static_cast<double>(train_refs.size()));
  long long step = 0;
  int last_eval_step = 0;
  for (long long epoch = 0; step < total_steps; ++epoch) {
    std::vector<std::size_t> order(train_refs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng shuffle_rng(mix_seed(config.seed, "shuffle", epoch));
    shuffle(order, shuffle_rng);
    for (const std::size_t idx : order) {
      if (step >= total_steps) break;
      const auto& ref = train_refs[idx];
      SeededRng neg_rng(
          mix_seed(mix_seed(config.seed, "neg", epoch),
                   example_qid(data.train_dialogs, ref)));
      const MatrixXd negs = rows_to_matrix(
          data.store, sample_negative_rows(data.store, train_gold_set[idx],
                                           config.negatives, neg_rng));
      const LossGrad lg =
          loss_and_grad(train_features[idx], head, train_gold[idx], negs);
      if (!std::isfinite(lg.loss)) {
        throw Error("train: non-finite loss at step " +
                    std::to_string(step + 1));
      }
      state.loss_history.push_back(lg.loss);
      head.d -= config.learning_rate * lg.grad.d;
      head.projection -= config.learning_rate * lg.grad.projection;
      ++step;
      if (config.eval_every > 0 && step % config.eval_every == 0 &&
          step < total_steps) {
        record_eval(static_cast<int>(step), head);
        last_eval_step = static_cast<int>(step);
      }
    }
  }
  if (last_eval_step != step) record_eval(static_cast<int>(step), head);

  state.step = static_cast<int>(step);
  state.head = head;
  return state;
}

void save_train_log(const TrainState& state, const TrainConfig& config,
                    const std::string& config_hash, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  const std::string recall_key =
      "dev_recall@" + std::to_string(config.recall_k);
  for (const auto& point : state.eval_log) {
    json line;
    line["step"] = point.step;
    line["loss"] = point.dev_loss;
    line[recall_key] = point.dev_recall;
    line["config_hash"] = config_hash;
    out << line.dump() << '\n';
  }
}

}  // namespace har
