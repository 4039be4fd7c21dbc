#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "har/attention.hpp"
#include "har/eval.hpp"
#include "har/index.hpp"
#include "har/training.hpp"

namespace py = pybind11;

namespace {

har::BoolRow to_mask(const std::vector<bool>& active) {
  har::BoolRow mask(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) {
    mask[static_cast<Eigen::Index>(i)] = active[i];
  }
  return mask;
}

har::RankedList to_ranked(const std::vector<std::string>& pids) {
  har::RankedList ranked;
  ranked.reserve(pids.size());
  for (std::size_t i = 0; i < pids.size(); ++i) {
    ranked.push_back({pids[i], 0.0, i});
  }
  return ranked;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Core operations of the history attentive retriever: attention over "
      "history turns, query aggregation, exact inner-product search, and "
      "retrieval metrics.";
  m.attr("__version__") = "0.1.0";

  m.def(
      "attention_weights",
      [](const Eigen::MatrixXd& sequence_reps, const Eigen::VectorXd& d,
         const std::string& mode) {
        return har::attention_weights(sequence_reps, d,
                                      har::attention_mode_from_string(mode));
      },
      py::arg("sequence_reps"), py::arg("d"), py::arg("mode") = "soft",
      "Attention weights over batch rows: softmax of sequence_reps @ d "
      "('soft'), all ones ('alpha_one'), or 1/n ('uniform').");

  m.def(
      "aggregate_fine",
      [](const std::vector<Eigen::MatrixXd>& token_reps,
         const Eigen::VectorXd& alpha, const std::vector<bool>& active) {
        return har::aggregate_fine(token_reps, alpha, to_mask(active));
      },
      py::arg("token_reps"), py::arg("alpha"), py::arg("active"),
      "Token-level aggregation: sum of alpha-weighted token matrices, then "
      "the mean over active positions.");

  m.def(
      "aggregate_coarse",
      [](const Eigen::MatrixXd& sequence_reps, const Eigen::VectorXd& alpha) {
        return har::aggregate_coarse(sequence_reps, alpha);
      },
      py::arg("sequence_reps"), py::arg("alpha"),
      "Sequence-level aggregation: sum of alpha-weighted rows.");

  m.def(
      "retrieval_loss",
      [](const Eigen::VectorXd& query, const Eigen::VectorXd& gold,
         const Eigen::MatrixXd& negatives) {
        return har::retrieval_loss(query, gold, negatives);
      },
      py::arg("query"), py::arg("gold"), py::arg("negatives"),
      "Softmax cross-entropy with the gold passage in slot 0.");

  m.def(
      "search",
      [](py::array_t<float, py::array::c_style | py::array::forcecast>
             vectors,
         const std::vector<std::string>& pids, const Eigen::VectorXd& query,
         int top_r, int shards) {
        const auto buf = vectors.request();
        if (buf.ndim != 2) {
          throw har::Error("search: vectors must be a 2-D float32 array");
        }
        const auto rows = static_cast<std::size_t>(buf.shape[0]);
        const auto dim = static_cast<int>(buf.shape[1]);
        if (rows != pids.size()) {
          throw har::Error("search: pids length must match vector rows");
        }
        har::VectorStore store;
        store.dim = dim;
        store.pids = pids;
        store.data.resize(rows * static_cast<std::size_t>(dim));
        std::memcpy(store.data.data(), buf.ptr,
                    store.data.size() * sizeof(float));
        const har::RankedList ranked =
            har::search(store, query, top_r, shards);
        std::vector<std::tuple<std::string, double, std::size_t>> out;
        out.reserve(ranked.size());
        for (const auto& r : ranked) out.emplace_back(r.pid, r.score, r.row);
        return out;
      },
      py::arg("vectors"), py::arg("pids"), py::arg("query"),
      py::arg("top_r"), py::arg("shards") = 1,
      "Exact top-R inner-product scan; ties break by ascending row index.");

  m.def(
      "reciprocal_rank",
      [](const std::vector<std::string>& ranked_pids,
         const std::vector<std::string>& gold_pids) {
        return har::reciprocal_rank(to_ranked(ranked_pids), gold_pids);
      },
      py::arg("ranked_pids"), py::arg("gold_pids"),
      "1/rank of the first gold pid; 0 on a miss.");

  m.def(
      "recall_at_k",
      [](const std::vector<std::string>& ranked_pids,
         const std::vector<std::string>& gold_pids, int k) {
        return har::recall_at_k(to_ranked(ranked_pids), gold_pids, k);
      },
      py::arg("ranked_pids"), py::arg("gold_pids"), py::arg("k"),
      "Fraction of gold pids present in the top k.");

  py::register_exception<har::Error>(m, "HarError");
}
