#include "har/index.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <queue>

#include <json.hpp>

#include "parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "vector store I/O assumes a little-endian host");

namespace har {

using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'H', 'A', 'R', 'V'};
constexpr std::uint32_t kVersion = 1;

// Ranking order: higher score first, ties broken by lower row index.
bool ranks_before(const ScoredPassage& a, const ScoredPassage& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.row < b.row;
}

void select_top(const VectorStore& store, const VectorXd& query,
                std::size_t begin, std::size_t end, int top_r,
                RankedList& out) {
  const auto worse = [](const ScoredPassage& a, const ScoredPassage& b) {
    return ranks_before(a, b);
  };
  std::priority_queue<ScoredPassage, std::vector<ScoredPassage>,
                      decltype(worse)>
      kept(worse);
  const int dim = store.dim;
  for (std::size_t r = begin; r < end; ++r) {
    const float* row = store.row(r);
    double score = 0.0;
    for (int c = 0; c < dim; ++c) {
      score += static_cast<double>(row[c]) * query[c];
    }
    ScoredPassage cand{store.pids[r], score, r};
    if (kept.size() < static_cast<std::size_t>(top_r)) {
      kept.push(std::move(cand));
    } else if (ranks_before(cand, kept.top())) {
      kept.pop();
      kept.push(std::move(cand));
    }
  }
  while (!kept.empty()) {
    out.push_back(kept.top());
    kept.pop();
  }
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw Error("vector store: truncated " + what);
  }
  return v;
}

}  // namespace

VectorXd VectorStore::row_f64(std::size_t r) const {
  return Eigen::Map<const Eigen::VectorXf>(row(r), dim).cast<double>();
}

VectorXd encode_passage(const Passage& passage, const Encoder& encoder) {
  if (passage.token_ids.empty()) {
    throw Error("passage " + passage.pid + " has no tokens; tokenize first");
  }
  return encoder.encode_sequence(passage.token_ids);
}

VectorStore build_store(const PassageCollection& passages,
                        const Encoder& encoder, const std::string& config_hash,
                        int threads) {
  if (passages.size() == 0) throw Error("cannot build a store of 0 passages");
  VectorStore store;
  store.dim = static_cast<int>(encoder.projection.cols());
  store.encoder_seed = encoder.config.seed;
  store.config_hash = config_hash;
  store.data.resize(passages.size() * static_cast<std::size_t>(store.dim));
  store.pids.resize(passages.size());
  parallel_for(passages.size(), threads, [&](std::size_t begin,
                                             std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const Passage& p = passages.at(r);
      const Eigen::VectorXf v = encode_passage(p, encoder).cast<float>();
      std::memcpy(store.data.data() + r * static_cast<std::size_t>(store.dim),
                  v.data(), sizeof(float) * static_cast<std::size_t>(store.dim));
      store.pids[r] = p.pid;
    }
  });
  return store;
}

void save_store(const VectorStore& store, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  {
    std::ofstream out(base / "vectors.bin", std::ios::binary);
    if (!out) throw Error("cannot write " + (base / "vectors.bin").string());
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(store.count()));
    write_u32(out, static_cast<std::uint32_t>(store.dim));
    out.write(reinterpret_cast<const char*>(store.data.data()),
              static_cast<std::streamsize>(store.data.size() * sizeof(float)));
    if (!out) throw Error("short write to " + (base / "vectors.bin").string());
  }
  {
    std::ofstream out(base / "pids.txt", std::ios::binary);
    if (!out) throw Error("cannot write " + (base / "pids.txt").string());
    for (const auto& pid : store.pids) out << pid << '\n';
  }
  {
    json manifest;
    manifest["encoder_seed"] = store.encoder_seed;
    manifest["config_hash"] = store.config_hash;
    manifest["count"] = store.count();
    manifest["dim"] = store.dim;
    std::ofstream out(base / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (base / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
}

VectorStore load_store(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  VectorStore store;
  {
    std::ifstream in(base / "vectors.bin", std::ios::binary);
    if (!in) throw Error("cannot open " + (base / "vectors.bin").string());
    char magic[4] = {};
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
      throw Error("vector store: bad magic in vectors.bin");
    }
    const std::uint32_t version = read_u32(in, "version");
    if (version != kVersion) {
      throw Error("vector store: unsupported version " +
                  std::to_string(version));
    }
    const std::uint32_t count = read_u32(in, "count");
    const std::uint32_t dim = read_u32(in, "dim");
    if (dim == 0) throw Error("vector store: zero dimension");
    store.dim = static_cast<int>(dim);
    store.data.resize(static_cast<std::size_t>(count) * dim);
    if (!in.read(reinterpret_cast<char*>(store.data.data()),
                 static_cast<std::streamsize>(store.data.size() *
                                              sizeof(float)))) {
      throw Error("vector store: truncated vector data");
    }
  }
  {
    std::ifstream in(base / "pids.txt");
    if (!in) throw Error("cannot open " + (base / "pids.txt").string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) store.pids.push_back(line);
    }
    if (store.pids.size() * static_cast<std::size_t>(store.dim) !=
        store.data.size()) {
      throw Error("vector store: pids.txt row count does not match vectors.bin");
    }
  }
  {
    std::ifstream in(base / "manifest.json");
    if (!in) throw Error("cannot open " + (base / "manifest.json").string());
    json manifest;
    try {
      manifest = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error("vector store: bad manifest.json: " + std::string(e.what()));
    }
    store.encoder_seed = manifest.at("encoder_seed").get<std::uint64_t>();
    store.config_hash = manifest.at("config_hash").get<std::string>();
    if (manifest.at("count").get<std::size_t>() != store.count()) {
      throw Error("vector store: manifest count does not match vectors.bin");
    }
    if (manifest.at("dim").get<int>() != store.dim) {
      throw Error("vector store: manifest dim does not match vectors.bin");
    }
  }
  return store;
}

RankedList search(const VectorStore& store, const VectorXd& query, int top_r,
                  int shards) {
  if (top_r < 1) throw Error("search: top_r must be at least 1");
  if (shards < 1) throw Error("search: shards must be at least 1");
  if (query.size() != store.dim) {
    throw Error("search: query dimension does not match store");
  }
  const std::size_t n = store.count();
  RankedList candidates;
  for (int s = 0; s < shards; ++s) {
    const std::size_t begin = n * static_cast<std::size_t>(s) / shards;
    const std::size_t end = n * (static_cast<std::size_t>(s) + 1) / shards;
    select_top(store, query, begin, end, top_r, candidates);
  }
  std::sort(candidates.begin(), candidates.end(), ranks_before);
  if (candidates.size() > static_cast<std::size_t>(top_r)) {
    candidates.resize(static_cast<std::size_t>(top_r));
  }
  return candidates;
}

}  // namespace har
