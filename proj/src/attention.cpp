#include "har/attention.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "har/training.hpp"

namespace har {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string to_string(Granularity g) {
  return g == Granularity::kFine ? "fine" : "coarse";
}

std::string to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::kSoft: return "soft";
    case AttentionMode::kAlphaOne: return "alpha_one";
    case AttentionMode::kUniform: return "uniform";
  }
  throw Error("unreachable attention mode");
}

Granularity granularity_from_string(const std::string& s) {
  if (s == "fine") return Granularity::kFine;
  if (s == "coarse") return Granularity::kCoarse;
  throw Error("unknown granularity '" + s + "' (expected fine|coarse)");
}

AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "soft") return AttentionMode::kSoft;
  if (s == "alpha_one") return AttentionMode::kAlphaOne;
  if (s == "uniform") return AttentionMode::kUniform;
  throw Error("unknown attention mode '" + s +
              "' (expected soft|alpha_one|uniform)");
}

std::string AttentionHead::variant_label() const {
  std::string label = to_string(granularity);
  label += posseg_enabled ? ",posseg" : ",no-posseg";
  label += "," + to_string(attention_mode);
  if (current_only) label += ",current-only";
  return label;
}

AttentionHead init_head(const Encoder& encoder, Granularity granularity,
                        AttentionMode attention_mode, bool posseg_enabled,
                        bool current_only) {
  AttentionHead head;
  head.d = VectorXd::Zero(encoder.config.embed);
  head.projection = encoder.projection;
  head.granularity = granularity;
  head.attention_mode = attention_mode;
  head.posseg_enabled = posseg_enabled;
  head.current_only = current_only;
  return head;
}

void save_head(const AttentionHead& head, const std::string& config_hash,
               std::uint64_t encoder_seed, const std::string& path) {
  json doc;
  doc["mode"] = to_string(head.granularity);
  doc["attention_mode"] = to_string(head.attention_mode);
  doc["posseg_enabled"] = head.posseg_enabled;
  doc["current_only"] = head.current_only;
  doc["d"] = std::vector<double>(head.d.data(), head.d.data() + head.d.size());
  std::vector<std::vector<double>> proj(head.projection.rows());
  for (int r = 0; r < head.projection.rows(); ++r) {
    proj[r].assign(head.projection.row(r).begin(),
                   head.projection.row(r).end());
  }
  doc["projection"] = proj;
  doc["config_hash"] = config_hash;
  doc["encoder_seed"] = encoder_seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << doc.dump() << '\n';
}

LoadedHead load_head(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path + ": bad checkpoint: " + e.what());
  }
  LoadedHead loaded;
  loaded.head.granularity =
      granularity_from_string(doc.at("mode").get<std::string>());
  loaded.head.attention_mode =
      attention_mode_from_string(doc.at("attention_mode").get<std::string>());
  loaded.head.posseg_enabled = doc.at("posseg_enabled").get<bool>();
  loaded.head.current_only = doc.value("current_only", false);
  const auto d = doc.at("d").get<std::vector<double>>();
  loaded.head.d = Eigen::Map<const VectorXd>(d.data(), d.size());
  const auto proj = doc.at("projection").get<std::vector<std::vector<double>>>();
  if (proj.empty()) throw Error(path + ": empty projection");
  loaded.head.projection.resize(proj.size(), proj[0].size());
  for (std::size_t r = 0; r < proj.size(); ++r) {
    if (proj[r].size() != proj[0].size()) {
      throw Error(path + ": ragged projection");
    }
    loaded.head.projection.row(r) =
        Eigen::Map<const VectorXd>(proj[r].data(), proj[r].size()).transpose();
  }
  loaded.config_hash = doc.at("config_hash").get<std::string>();
  loaded.encoder_seed = doc.at("encoder_seed").get<std::uint64_t>();
  return loaded;
}

VectorXd attention_weights(const MatrixXd& sequence_reps, const VectorXd& d,
                           AttentionMode mode) {
  const int n = static_cast<int>(sequence_reps.rows());
  if (n < 1) throw Error("attention over an empty batch");
  switch (mode) {
    case AttentionMode::kAlphaOne:
      return VectorXd::Ones(n);
    case AttentionMode::kUniform:
      return VectorXd::Constant(n, 1.0 / n);
    case AttentionMode::kSoft: {
      if (sequence_reps.cols() != d.size()) {
        throw Error("attention: dimension mismatch between s and d");
      }
      VectorXd logits = sequence_reps * d;
      const double m = logits.maxCoeff();
      Eigen::ArrayXd e = (logits.array() - m).exp();
      return (e / e.sum()).matrix();
    }
  }
  throw Error("unreachable attention mode");
}

VectorXd aggregate_fine(const std::vector<MatrixXd>& token_reps,
                        const VectorXd& alpha,
                        const BoolRow& active_positions) {
  if (token_reps.empty() ||
      static_cast<int>(token_reps.size()) != alpha.size()) {
    throw Error("fine aggregation: alpha length does not match rows");
  }
  const int active = static_cast<int>(active_positions.count());
  if (active == 0) {
    throw Error("fine aggregation: no active question tokens");
  }
  MatrixXd weighted = MatrixXd::Zero(token_reps[0].rows(),
                                     token_reps[0].cols());
  for (std::size_t i = 0; i < token_reps.size(); ++i) {
    weighted += alpha[static_cast<int>(i)] * token_reps[i];
  }
  VectorXd sum = VectorXd::Zero(weighted.cols());
  for (int m = 0; m < weighted.rows(); ++m) {
    if (active_positions[m]) sum += weighted.row(m).transpose();
  }
  return sum / active;
}

VectorXd aggregate_coarse(const MatrixXd& sequence_reps,
                          const VectorXd& alpha) {
  if (sequence_reps.rows() != alpha.size()) {
    throw Error("coarse aggregation: alpha length does not match rows");
  }
  return sequence_reps.transpose() * alpha;
}

QueryVector compose_query(const Dialog& dialog, int k, const Encoder& encoder,
                          const AttentionHead& head,
                          const SequenceLayout& layout,
                          const Vocabulary& vocab) {
  const InstanceFeatures features =
      encode_instance(dialog, k, encoder, head, layout, vocab);
  return head_query(features, head);
}

}  // namespace har
