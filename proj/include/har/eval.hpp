#pragma once

#include <map>
#include <string>
#include <vector>

#include "har/attention.hpp"
#include "har/index.hpp"

namespace har {

/// 1/rank of the first retrieved pid that is gold; 0 on a miss.
double reciprocal_rank(const RankedList& ranked,
                       const std::vector<std::string>& gold_pids);

/// |gold ∩ top-k| / |gold|.
double recall_at_k(const RankedList& ranked,
                   const std::vector<std::string>& gold_pids, int k);

struct QueryResult {
  std::string dialog_id;
  int turn_index = 0;
  double rr = 0.0;
  std::map<int, double> recall;  // per cutoff k
  RankedList ranked;             // kept in memory, not serialized

  std::string qid() const { return dialog_id + ":" + std::to_string(turn_index); }
};

struct RunReport {
  std::string variant;
  std::string split;
  double mrr = 0.0;
  std::map<int, double> recall;  // macro averages per cutoff
  std::string config_hash;
  std::vector<QueryResult> per_query;
};

/// Composes a query for every turn of every dialog, searches top_r, and
/// aggregates MRR and macro Recall@k. A gold pid absent from the collection
/// is a hard error.
RunReport evaluate_run(const std::vector<Dialog>& dialogs,
                       const PassageCollection& passages,
                       const Encoder& encoder, const AttentionHead& head,
                       const VectorStore& store, const SequenceLayout& layout,
                       const Vocabulary& vocab, int top_r,
                       const std::vector<int>& ks,
                       const std::string& split_label, int threads = 1);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);
void save_report(const RunReport& report, const std::string& path);
RunReport load_report(const std::string& path);

struct QueryDelta {
  std::string qid;
  double rr_a = 0.0;
  double rr_b = 0.0;
  double delta = 0.0;  // rr_b - rr_a
};

struct DeltaReport {
  std::string variant_a, variant_b;
  double mrr_delta = 0.0;
  std::map<int, double> recall_delta;
  std::vector<QueryDelta> per_query;  // sorted by |delta| descending
};

/// B minus A. Requires matching config hashes, splits, and query sets.
DeltaReport compare_runs(const RunReport& a, const RunReport& b);
std::string delta_to_json(const DeltaReport& delta);

}  // namespace har
