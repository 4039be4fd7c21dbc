#include "har/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "parallel.hpp"

namespace har {

using nlohmann::json;

double reciprocal_rank(const RankedList& ranked,
                       const std::vector<std::string>& gold_pids) {
  if (gold_pids.empty()) throw Error("reciprocal rank: empty gold set");
  const std::unordered_set<std::string> gold(gold_pids.begin(),
                                             gold_pids.end());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (gold.count(ranked[i].pid)) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double recall_at_k(const RankedList& ranked,
                   const std::vector<std::string>& gold_pids, int k) {
  if (gold_pids.empty()) throw Error("recall: empty gold set");
  if (k < 1) throw Error("recall: k must be at least 1");
  const std::unordered_set<std::string> gold(gold_pids.begin(),
                                             gold_pids.end());
  std::unordered_set<std::string> found;
  const std::size_t cutoff =
      std::min(ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < cutoff; ++i) {
    if (gold.count(ranked[i].pid)) found.insert(ranked[i].pid);
  }
  return static_cast<double>(found.size()) / static_cast<double>(gold.size());
}

RunReport evaluate_run(const std::vector<Dialog>& dialogs,
                       const PassageCollection& passages,
                       const Encoder& encoder, const AttentionHead& head,
                       const VectorStore& store, const SequenceLayout& layout,
                       const Vocabulary& vocab, int top_r,
                       const std::vector<int>& ks,
                       const std::string& split_label, int threads) {
  if (ks.empty()) throw Error("evaluate: no recall cutoffs given");
  if (store.encoder_seed != encoder.config.seed) {
    throw Error("evaluate: store was built by a different encoder");
  }
  if (store.count() != passages.size()) {
    throw Error("evaluate: store row count does not match the collection");
  }

  std::unordered_set<std::string> known_pids(store.pids.begin(),
                                             store.pids.end());
  struct Job {
    const Dialog* dialog;
    int k;
  };
  std::vector<Job> jobs;
  for (const auto& dialog : dialogs) {
    for (const auto& turn : dialog.turns) {
      if (turn.gold_pids.empty()) {
        throw Error("evaluate: turn " + dialog.dialog_id + ":" +
                    std::to_string(turn.turn_index) + " has no gold passage");
      }
      for (const auto& pid : turn.gold_pids) {
        if (!known_pids.count(pid)) {
          throw Error("evaluate: gold passage " + pid +
                      " is not in the collection");
        }
      }
      jobs.push_back({&dialog, turn.turn_index});
    }
  }

  RunReport report;
  report.variant = head.variant_label();
  report.split = split_label;
  report.config_hash = store.config_hash;
  report.per_query.resize(jobs.size());

  parallel_for(jobs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Dialog& dialog = *jobs[i].dialog;
      const Turn& turn = dialog.turns[static_cast<std::size_t>(jobs[i].k) - 1];
      const QueryVector query =
          compose_query(dialog, jobs[i].k, encoder, head, layout, vocab);
      QueryResult result;
      result.dialog_id = dialog.dialog_id;
      result.turn_index = jobs[i].k;
      result.ranked = search(store, query.q_hat, top_r);
      result.rr = reciprocal_rank(result.ranked, turn.gold_pids);
      for (const int k : ks) {
        result.recall[k] = recall_at_k(result.ranked, turn.gold_pids, k);
      }
      report.per_query[i] = std::move(result);
    }
  });

  // Deterministic fold in query order.
  for (const int k : ks) report.recall[k] = 0.0;
  for (const auto& result : report.per_query) {
    report.mrr += result.rr;
    for (const int k : ks) report.recall[k] += result.recall.at(k);
  }
  if (!report.per_query.empty()) {
    const double n = static_cast<double>(report.per_query.size());
    report.mrr /= n;
    for (const int k : ks) report.recall[k] /= n;
  }
  return report;
}

std::string report_to_json(const RunReport& report) {
  json doc;
  doc["variant"] = report.variant;
  doc["split"] = report.split;
  doc["mrr"] = report.mrr;
  json recall = json::object();
  for (const auto& [k, v] : report.recall) recall[std::to_string(k)] = v;
  doc["recall"] = recall;
  doc["config_hash"] = report.config_hash;
  json per_query = json::array();
  for (const auto& result : report.per_query) {
    json hits = json::object();
    for (const auto& [k, v] : result.recall) hits[std::to_string(k)] = v;
    per_query.push_back(
        {{"qid", result.qid()}, {"rr", result.rr}, {"hits", hits}});
  }
  doc["per_query"] = per_query;
  return doc.dump(2);
}

RunReport report_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("bad report JSON: ") + e.what());
  }
  RunReport report;
  report.variant = doc.at("variant").get<std::string>();
  report.split = doc.value("split", std::string());
  report.mrr = doc.at("mrr").get<double>();
  for (const auto& [key, value] : doc.at("recall").items()) {
    report.recall[std::stoi(key)] = value.get<double>();
  }
  report.config_hash = doc.at("config_hash").get<std::string>();
  for (const auto& entry : doc.at("per_query")) {
    QueryResult result;
    const std::string qid = entry.at("qid").get<std::string>();
    const auto colon = qid.rfind(':');
    if (colon == std::string::npos) {
      throw Error("bad report JSON: qid '" + qid + "' has no turn index");
    }
    result.dialog_id = qid.substr(0, colon);
    result.turn_index = std::stoi(qid.substr(colon + 1));
    result.rr = entry.at("rr").get<double>();
    for (const auto& [key, value] : entry.at("hits").items()) {
      result.recall[std::stoi(key)] = value.get<double>();
    }
    report.per_query.push_back(std::move(result));
  }
  return report;
}

void save_report(const RunReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << report_to_json(report) << '\n';
}

RunReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str());
}

DeltaReport compare_runs(const RunReport& a, const RunReport& b) {
  if (a.config_hash != b.config_hash) {
    throw Error("compare: config fingerprints differ (" + a.config_hash +
                " vs " + b.config_hash + ")");
  }
  if (a.split != b.split) {
    throw Error("compare: splits differ (" + a.split + " vs " + b.split + ")");
  }
  std::unordered_map<std::string, double> rr_a;
  for (const auto& r : a.per_query) rr_a.emplace(r.qid(), r.rr);
  if (rr_a.size() != b.per_query.size()) {
    throw Error("compare: query sets differ in size");
  }

  DeltaReport delta;
  delta.variant_a = a.variant;
  delta.variant_b = b.variant;
  delta.mrr_delta = b.mrr - a.mrr;
  for (const auto& [k, v] : b.recall) {
    const auto it = a.recall.find(k);
    if (it != a.recall.end()) delta.recall_delta[k] = v - it->second;
  }
  for (const auto& r : b.per_query) {
    const auto it = rr_a.find(r.qid());
    if (it == rr_a.end()) {
      throw Error("compare: query " + r.qid() + " is missing from run A");
    }
    delta.per_query.push_back({r.qid(), it->second, r.rr, r.rr - it->second});
  }
  std::sort(delta.per_query.begin(), delta.per_query.end(),
            [](const QueryDelta& x, const QueryDelta& y) {
              const double ax = std::fabs(x.delta);
              const double ay = std::fabs(y.delta);
              if (ax != ay) return ax > ay;
              return x.qid < y.qid;
            });
  return delta;
}

std::string delta_to_json(const DeltaReport& delta) {
  json doc;
  doc["variant_a"] = delta.variant_a;
  doc["variant_b"] = delta.variant_b;
  doc["mrr_delta"] = delta.mrr_delta;
  json recall = json::object();
  for (const auto& [k, v] : delta.recall_delta) recall[std::to_string(k)] = v;
  doc["recall_delta"] = recall;
  json per_query = json::array();
  for (const auto& q : delta.per_query) {
    per_query.push_back({{"qid", q.qid},
                         {"rr_a", q.rr_a},
                         {"rr_b", q.rr_b},
                         {"delta", q.delta}});
  }
  doc["per_query"] = per_query;
  return doc.dump(2);
}

}  // namespace har
