#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "har/corpus.hpp"
#include "har/encoder.hpp"

namespace har {

/// Dense passage vectors in collection row order, f32 on disk, plus the
/// fingerprint that ties them to the encoder that produced them.
struct VectorStore {
  int dim = 0;
  std::vector<float> data;  // row-major, size() == count()*dim
  std::vector<std::string> pids;
  std::uint64_t encoder_seed = 0;
  std::string config_hash;

  std::size_t count() const { return pids.size(); }
  const float* row(std::size_t r) const { return data.data() + r * dim; }
  Eigen::VectorXd row_f64(std::size_t r) const;
};

struct ScoredPassage {
  std::string pid;
  double score = 0.0;
  std::size_t row = 0;
};
using RankedList = std::vector<ScoredPassage>;

/// Single-row encode of [CLS] + passage tokens. The passage must be
/// tokenized already (tokenize_all) and non-empty.
Eigen::VectorXd encode_passage(const Passage& passage, const Encoder& encoder);

/// Encodes the whole collection, sharded over `threads`, output in
/// collection row order regardless of the thread count.
VectorStore build_store(const PassageCollection& passages,
                        const Encoder& encoder, const std::string& config_hash,
                        int threads = 1);

/// vectors.bin ("HARV", u32 version=1, u32 count, u32 dim, f32 rows, all
/// little-endian) + pids.txt + manifest.json in `dir`.
void save_store(const VectorStore& store, const std::string& dir);
VectorStore load_store(const std::string& dir);

/// Exact top-R inner-product scan with f64 accumulation. Ties break by
/// ascending row index; results are identical for any shard count.
RankedList search(const VectorStore& store, const Eigen::VectorXd& query,
                  int top_r, int shards = 1);

}  // namespace har
