#include "har/encoder.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "har/rng.hpp"

namespace har {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kMaskPenalty = 1e9;

MatrixXd random_matrix(int rows, int cols, double scale, SeededRng& rng) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.next_normal();
  }
  return m;
}

double gelu(double x) {
  // tanh approximation; fully specified arithmetic, reproducible per seed.
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

void layer_norm_inplace(MatrixXd& x, const VectorXd& gain,
                        const VectorXd& bias) {
  const int h = static_cast<int>(x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / h;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    x.row(r) =
        (((x.row(r).array() - mean) * inv) * gain.transpose().array() +
         bias.transpose().array())
            .matrix();
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1 || hidden < 1 || embed < 1 || layers < 1 || heads < 1 ||
      max_positions < 1 || segment_vocab < 1) {
    throw Error("encoder config: all sizes must be >= 1");
  }
  if (hidden % heads != 0) {
    throw Error("encoder config: hidden (" + std::to_string(hidden) +
                ") not divisible by heads (" + std::to_string(heads) + ")");
  }
}

Encoder init_encoder(const EncoderConfig& config) {
  config.validate();
  SeededRng rng(config.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  const int h = config.hidden;
  const int ff = 4 * h;

  Encoder enc;
  enc.config = config;
  enc.token_table = random_matrix(config.vocab_size, h, scale, rng);
  enc.position_table = random_matrix(config.max_positions, h, scale, rng);
  enc.segment_table = random_matrix(config.segment_vocab, h, scale, rng);
  enc.layers.resize(config.layers);
  for (auto& layer : enc.layers) {
    layer.wq = random_matrix(h, h, scale, rng);
    layer.wk = random_matrix(h, h, scale, rng);
    layer.wv = random_matrix(h, h, scale, rng);
    layer.wo = random_matrix(h, h, scale, rng);
    layer.bq = VectorXd::Zero(h);
    layer.bk = VectorXd::Zero(h);
    layer.bv = VectorXd::Zero(h);
    layer.bo = VectorXd::Zero(h);
    layer.ff1 = random_matrix(h, ff, scale, rng);
    layer.ff2 = random_matrix(ff, h, scale, rng);
    layer.fb1 = VectorXd::Zero(ff);
    layer.fb2 = VectorXd::Zero(h);
    layer.ln1_gain = VectorXd::Ones(h);
    layer.ln1_bias = VectorXd::Zero(h);
    layer.ln2_gain = VectorXd::Ones(h);
    layer.ln2_bias = VectorXd::Zero(h);
  }
  enc.projection = random_matrix(h, config.embed, scale, rng);
  return enc;
}

MatrixXd Encoder::encode_row(const Eigen::ArrayXi& token_ids,
                             const Eigen::ArrayXi& segment_ids,
                             const BoolRow& token_mask) const {
  const int length = static_cast<int>(token_ids.size());
  if (segment_ids.size() != length || token_mask.size() != length) {
    throw Error("encode_row: id/mask lengths disagree");
  }
  if (length > config.max_positions) {
    throw Error("encode_row: row length " + std::to_string(length) +
                " exceeds max positions " +
                std::to_string(config.max_positions));
  }
  const int h = config.hidden;

  MatrixXd x(length, h);
  for (int pos = 0; pos < length; ++pos) {
    const int tok = token_ids[pos];
    const int seg = segment_ids[pos];
    if (tok < 0 || tok >= config.vocab_size) {
      throw Error("encode_row: token id out of range: " + std::to_string(tok));
    }
    if (seg < 0 || seg >= config.segment_vocab) {
      throw Error("encode_row: segment id out of range: " +
                  std::to_string(seg));
    }
    x.row(pos) = token_table.row(tok) + position_table.row(pos) +
                 segment_table.row(seg);
  }

  const int dh = config.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& layer : layers) {
    const MatrixXd q = (x * layer.wq).rowwise() + layer.bq.transpose();
    const MatrixXd k = (x * layer.wk).rowwise() + layer.bk.transpose();
    const MatrixXd v = (x * layer.wv).rowwise() + layer.bv.transpose();
    MatrixXd context(length, h);
    for (int a = 0; a < config.heads; ++a) {
      const auto qa = q.middleCols(a * dh, dh);
      const auto ka = k.middleCols(a * dh, dh);
      const auto va = v.middleCols(a * dh, dh);
      MatrixXd scores = qa * ka.transpose() * inv_sqrt_dh;
      for (int j = 0; j < length; ++j) {
        if (!token_mask[j]) scores.col(j).array() -= kMaskPenalty;
      }
      // Row-stable softmax; masked keys underflow to exactly zero.
      for (int r = 0; r < length; ++r) {
        const double m = scores.row(r).maxCoeff();
        Eigen::ArrayXd e = (scores.row(r).array() - m).exp();
        scores.row(r) = (e / e.sum()).matrix();
      }
      context.middleCols(a * dh, dh) = scores * va;
    }
    const MatrixXd attn_out =
        (context * layer.wo).rowwise() + layer.bo.transpose();
    x += attn_out;
    layer_norm_inplace(x, layer.ln1_gain, layer.ln1_bias);

    MatrixXd inner = (x * layer.ff1).rowwise() + layer.fb1.transpose();
    inner = inner.unaryExpr([](double v) { return gelu(v); });
    const MatrixXd ffn_out =
        (inner * layer.ff2).rowwise() + layer.fb2.transpose();
    x += ffn_out;
    layer_norm_inplace(x, layer.ln2_gain, layer.ln2_bias);
  }
  return x;
}

TurnEncoding Encoder::extract_turn_encoding(
    const Eigen::MatrixXd& contextual, const BoolRow& current_token_mask,
    const SequenceLayout& layout, const Eigen::MatrixXd& proj) const {
  if (contextual.rows() != layout.row_length() ||
      current_token_mask.size() != layout.row_length()) {
    throw Error("extract_turn_encoding: row does not match layout");
  }
  const int M = layout.max_question_tokens;
  TurnEncoding out;
  out.s = (contextual.row(layout.cls_pos()) * proj).transpose();
  out.tokens = MatrixXd::Zero(M, proj.cols());
  for (int m = 0; m < M; ++m) {
    const int pos = layout.seg3_begin() + m;
    if (current_token_mask[pos]) {
      out.tokens.row(m) = contextual.row(pos) * proj;
      ++out.active_count;
    }
  }
  return out;
}

TurnEncoding Encoder::extract_turn_encoding(const Eigen::MatrixXd& contextual,
                                            const BoolRow& current_token_mask,
                                            const SequenceLayout& layout) const {
  return extract_turn_encoding(contextual, current_token_mask, layout,
                               projection);
}

VectorXd Encoder::encode_sequence(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) {
    throw Error("encode_sequence: empty token sequence");
  }
  const int length = static_cast<int>(token_ids.size()) + 1;
  Eigen::ArrayXi row(length);
  Eigen::ArrayXi segments = Eigen::ArrayXi::Zero(length);
  BoolRow mask = BoolRow::Constant(length, true);
  row[0] = kClsId;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    row[static_cast<int>(i) + 1] = token_ids[i];
  }
  const MatrixXd contextual = encode_row(row, segments, mask);
  return (contextual.row(0) * projection).transpose();
}

void save_encoder_config(const EncoderConfig& config,
                         const std::string& path) {
  nlohmann::json doc;
  doc["vocab_size"] = config.vocab_size;
  doc["hidden"] = config.hidden;
  doc["embed"] = config.embed;
  doc["layers"] = config.layers;
  doc["heads"] = config.heads;
  doc["max_positions"] = config.max_positions;
  doc["segment_vocab"] = config.segment_vocab;
  doc["seed"] = config.seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << doc.dump(2) << '\n';
}

EncoderConfig load_encoder_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  EncoderConfig config;
  config.vocab_size = doc.at("vocab_size").get<int>();
  config.hidden = doc.at("hidden").get<int>();
  config.embed = doc.at("embed").get<int>();
  config.layers = doc.at("layers").get<int>();
  config.heads = doc.at("heads").get<int>();
  config.max_positions = doc.at("max_positions").get<int>();
  config.segment_vocab = doc.at("segment_vocab").get<int>();
  config.seed = doc.at("seed").get<std::uint64_t>();
  config.validate();
  return config;
}

}  // namespace har
