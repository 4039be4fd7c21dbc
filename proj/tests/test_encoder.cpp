#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "har/batching.hpp"
#include "har/corpus.hpp"
#include "har/encoder.hpp"
#include "har/rng.hpp"

using namespace har;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.vocab_size = 50;
  c.hidden = 32;
  c.embed = 24;
  c.layers = 2;
  c.heads = 2;
  c.max_positions = 40;
  c.segment_vocab = 5;
  c.seed = 42;
  return c;
}

bool bit_identical(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("same seed gives bit-identical weights; different seed differs") {
  auto config = small_config();
  Encoder a = init_encoder(config);
  Encoder b = init_encoder(config);
  CHECK(bit_identical(a.token_table, b.token_table));
  CHECK(bit_identical(a.position_table, b.position_table));
  CHECK(bit_identical(a.segment_table, b.segment_table));
  CHECK(bit_identical(a.projection, b.projection));
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(bit_identical(a.layers[l].wq, b.layers[l].wq));
    CHECK(bit_identical(a.layers[l].ff1, b.layers[l].ff1));
  }

  config.seed = 43;
  Encoder c = init_encoder(config);
  CHECK_FALSE(bit_identical(a.token_table, c.token_table));
}

TEST_CASE("head dimension arithmetic and divisibility validation") {
  EncoderConfig c = small_config();
  c.hidden = 64;
  c.heads = 2;
  CHECK(c.head_dim() == 32);
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.vocab_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("encoding is deterministic across calls") {
  Encoder enc = init_encoder(small_config());
  Eigen::ArrayXi tokens(8), segments(8);
  tokens << kClsId, 5, 6, 7, kSepId, 8, kPadId, kPadId;
  segments << 1, 1, 1, 1, 0, 0, 0, 0;
  BoolRow mask(8);
  mask << true, true, true, true, true, true, false, false;
  auto g1 = enc.encode_row(tokens, segments, mask);
  auto g2 = enc.encode_row(tokens, segments, mask);
  CHECK(bit_identical(g1, g2));
  CHECK(g1.rows() == 8);
  CHECK(g1.cols() == enc.config.hidden);
}

TEST_CASE("pad positions never influence unmasked outputs") {
  Encoder enc = init_encoder(small_config());
  Eigen::ArrayXi tokens(8), segments(8);
  tokens << kClsId, 5, 6, 7, kSepId, 8, kPadId, kPadId;
  segments << 1, 1, 1, 1, 0, 0, 0, 0;
  BoolRow mask(8);
  mask << true, true, true, true, true, true, false, false;
  auto base = enc.encode_row(tokens, segments, mask);

  // Change what sits at the masked positions: unmasked rows must be exactly
  // unchanged (the mask must remove them from attention, not just dampen).
  Eigen::ArrayXi tokens2 = tokens;
  tokens2(6) = 9;
  tokens2(7) = 10;
  auto changed = enc.encode_row(tokens2, segments, mask);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < base.cols(); ++c) {
      CHECK(base(r, c) == changed(r, c));
    }
  }
}

TEST_CASE("segment ids reach the representation") {
  Encoder enc = init_encoder(small_config());
  Eigen::ArrayXi tokens(6);
  tokens << kClsId, 5, 6, kSepId, 7, 8;
  BoolRow mask = BoolRow::Constant(6, true);
  Eigen::ArrayXi zeros = Eigen::ArrayXi::Zero(6);
  Eigen::ArrayXi ids(6);
  ids << 2, 2, 2, 2, 0, 0;
  auto g_zero = enc.encode_row(tokens, zeros, mask);
  auto g_seg = enc.encode_row(tokens, ids, mask);
  CHECK((g_zero - g_seg).norm() > 1e-9);
}

TEST_CASE("out-of-range ids are rejected") {
  Encoder enc = init_encoder(small_config());
  Eigen::ArrayXi tokens(3), segments(3);
  BoolRow mask = BoolRow::Constant(3, true);
  tokens << kClsId, 999, kSepId;  // vocab_size is 50
  segments << 0, 0, 0;
  CHECK_THROWS_AS(enc.encode_row(tokens, segments, mask), Error);
  tokens << kClsId, 5, kSepId;
  segments << 0, 9, 0;  // segment_vocab is 5
  CHECK_THROWS_AS(enc.encode_row(tokens, segments, mask), Error);
}

TEST_CASE("outputs stay finite over random rows") {
  Encoder enc = init_encoder(small_config());
  SeededRng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 2 + static_cast<int>(rng.next_below(30));
    Eigen::ArrayXi tokens(len), segments(len);
    BoolRow mask(len);
    tokens(0) = kClsId;
    segments(0) = 0;
    mask(0) = true;
    for (int p = 1; p < len; ++p) {
      tokens(p) = static_cast<int>(rng.next_below(50));
      segments(p) = static_cast<int>(rng.next_below(5));
      mask(p) = tokens(p) != kPadId;
    }
    auto g = enc.encode_row(tokens, segments, mask);
    CHECK(g.allFinite());
  }
}

TEST_CASE("turn encoding: zero rows at inactive positions, s from CLS") {
  Encoder enc = init_encoder(small_config());
  SequenceLayout layout;
  layout.max_question_tokens = 4;  // rows of length 15 * hidden
  const int L = layout.row_length();
  Eigen::ArrayXi tokens = Eigen::ArrayXi::Constant(L, 5);
  tokens(layout.cls_pos()) = kClsId;
  tokens(layout.sep1_pos()) = kSepId;
  tokens(layout.sep2_pos()) = kSepId;
  Eigen::ArrayXi segments = Eigen::ArrayXi::Zero(L);
  BoolRow mask = BoolRow::Constant(L, true);
  // Two active q_k tokens out of M=4.
  mask(layout.seg3_begin() + 2) = false;
  mask(layout.seg3_begin() + 3) = false;
  tokens(layout.seg3_begin() + 2) = kPadId;
  tokens(layout.seg3_begin() + 3) = kPadId;
  BoolRow current = BoolRow::Constant(L, false);
  current(layout.seg3_begin() + 0) = true;
  current(layout.seg3_begin() + 1) = true;

  auto g = enc.encode_row(tokens, segments, mask);
  auto turn = enc.extract_turn_encoding(g, current, layout);
  CHECK(turn.active_count == 2);
  REQUIRE(turn.tokens.rows() == 4);
  REQUIRE(turn.tokens.cols() == enc.config.embed);
  CHECK(turn.tokens.row(0).norm() > 0);
  CHECK(turn.tokens.row(1).norm() > 0);
  CHECK(turn.tokens.row(2).norm() == 0);
  CHECK(turn.tokens.row(3).norm() == 0);
  CHECK(turn.s.size() == enc.config.embed);
  CHECK(turn.s.norm() > 0);
  CHECK(std::isfinite(turn.s.norm()));
}

TEST_CASE("identity projection exposes the raw CLS row") {
  EncoderConfig config = small_config();
  config.embed = config.hidden;  // h = b so identity is square
  Encoder enc = init_encoder(config);
  SequenceLayout layout;
  layout.max_question_tokens = 4;
  const int L = layout.row_length();
  Eigen::ArrayXi tokens = Eigen::ArrayXi::Constant(L, 7);
  tokens(layout.cls_pos()) = kClsId;
  tokens(layout.sep1_pos()) = kSepId;
  tokens(layout.sep2_pos()) = kSepId;
  Eigen::ArrayXi segments = Eigen::ArrayXi::Zero(L);
  BoolRow mask = BoolRow::Constant(L, true);
  BoolRow current = BoolRow::Constant(L, false);
  current(layout.seg3_begin()) = true;

  auto g = enc.encode_row(tokens, segments, mask);
  Eigen::MatrixXd identity =
      Eigen::MatrixXd::Identity(config.hidden, config.hidden);
  auto turn = enc.extract_turn_encoding(g, current, layout, identity);
  CHECK((turn.s.transpose() - g.row(layout.cls_pos())).norm() == 0);
  CHECK((turn.tokens.row(0) - g.row(layout.seg3_begin())).norm() == 0);
}

TEST_CASE("encode_sequence encodes standalone rows with zero segments") {
  Encoder enc = init_encoder(small_config());
  std::vector<int> ids = {5, 6, 7, 8};
  auto v1 = enc.encode_sequence(ids);
  auto v2 = enc.encode_sequence(ids);
  CHECK(v1.size() == enc.config.embed);
  CHECK((v1 - v2).norm() == 0);
  CHECK(v1.allFinite());
  // Different content gives a different vector.
  auto v3 = enc.encode_sequence({9, 10, 11});
  CHECK((v1 - v3).norm() > 0);
}

TEST_CASE("encoder config checkpoint round-trips via JSON") {
  namespace fs = std::filesystem;
  auto path = (fs::temp_directory_path() / "har_encoder_cfg_test.json").string();
  EncoderConfig config = small_config();
  save_encoder_config(config, path);
  EncoderConfig loaded = load_encoder_config(path);
  CHECK(loaded.vocab_size == config.vocab_size);
  CHECK(loaded.hidden == config.hidden);
  CHECK(loaded.embed == config.embed);
  CHECK(loaded.layers == config.layers);
  CHECK(loaded.heads == config.heads);
  CHECK(loaded.max_positions == config.max_positions);
  CHECK(loaded.segment_vocab == config.segment_vocab);
  CHECK(loaded.seed == config.seed);
  fs::remove(path);
}

TEST_CASE("full batch rows encode to the shape contract") {
  SyntheticConfig sconfig;
  sconfig.n_dialogs = 3;
  sconfig.n_passages = 12;
  auto corpus = gen_synthetic(sconfig, 9);
  SequenceLayout layout;
  BatchOptions options;
  EncoderConfig config = small_config();
  config.vocab_size = corpus.vocab.size();
  config.max_positions = layout.row_length();
  config.segment_vocab = options.max_history_turns;
  Encoder enc = init_encoder(config);

  const auto& d = corpus.dialogs[0];
  auto batch = build_instance_batch(d, 4, corpus.vocab, layout, options);
  for (int r = 0; r < batch.n_rows(); ++r) {
    auto g = enc.encode_row(batch.token_ids.row(r).transpose(),
                            batch.segment_ids.row(r).transpose(),
                            batch.token_mask.row(r).transpose());
    auto turn = enc.extract_turn_encoding(
        g, batch.current_token_mask.row(r).transpose(), layout);
    CHECK(turn.s.size() == config.embed);
    CHECK(turn.tokens.rows() == layout.max_question_tokens);
    CHECK(turn.tokens.cols() == config.embed);
    CHECK(turn.active_count > 0);
  }
}
