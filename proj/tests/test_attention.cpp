#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "har/attention.hpp"
#include "har/corpus.hpp"
#include "har/encoder.hpp"
#include "har/rng.hpp"

using namespace har;

namespace {

EncoderConfig tiny_encoder_config(int vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.hidden = 32;
  c.embed = 16;
  c.layers = 1;
  c.heads = 2;
  c.max_positions = 64;
  c.segment_vocab = 11;
  c.seed = 5;
  return c;
}

Eigen::MatrixXd random_matrix(int rows, int cols, SeededRng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.next_normal();
  }
  return m;
}

}  // namespace

TEST_CASE("soft attention: zero d gives uniform weights") {
  SeededRng rng(1);
  auto S = random_matrix(4, 8, rng);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(8);
  auto alpha = attention_weights(S, d, AttentionMode::kSoft);
  REQUIRE(alpha.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(alpha(i) == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("soft attention: closed-form logits") {
  // Rows chosen so logits d.s are [0, ln 3]: softmax = [0.25, 0.75].
  Eigen::MatrixXd S(2, 1);
  S << 0.0, std::log(3.0);
  Eigen::VectorXd d(1);
  d << 1.0;
  auto alpha = attention_weights(S, d, AttentionMode::kSoft);
  CHECK(alpha(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(alpha(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("soft attention is shift invariant") {
  Eigen::MatrixXd S(3, 1);
  S << 0.0, std::log(1.0), std::log(2.0);
  Eigen::VectorXd d(1);
  d << 1.0;
  auto base = attention_weights(S, d, AttentionMode::kSoft);
  CHECK(base(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(base(1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(base(2) == doctest::Approx(0.5).epsilon(1e-12));

  Eigen::MatrixXd shifted = S.array() + 100.0;
  auto moved = attention_weights(shifted, d, AttentionMode::kSoft);
  for (int i = 0; i < 3; ++i) {
    CHECK(moved(i) == doctest::Approx(base(i)).epsilon(1e-9));
  }
}

TEST_CASE("soft attention survives extreme logits") {
  Eigen::MatrixXd S(3, 1);
  S << 1e4, -1e4, 9.999e3;
  Eigen::VectorXd d(1);
  d << 1.0;
  auto alpha = attention_weights(S, d, AttentionMode::kSoft);
  CHECK(alpha.allFinite());
  CHECK(alpha.sum() == doctest::Approx(1.0).epsilon(1e-6));
  for (int i = 0; i < 3; ++i) {
    CHECK(alpha(i) >= 0.0);
    CHECK(alpha(i) <= 1.0);
  }
}

TEST_CASE("soft attention sums to one for random finite logits") {
  SeededRng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(11));
    const int b = 1 + static_cast<int>(rng.next_below(16));
    auto S = random_matrix(n, b, rng);
    Eigen::VectorXd d = random_matrix(b, 1, rng);
    auto alpha = attention_weights(S, d, AttentionMode::kSoft);
    CHECK(alpha.sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(alpha.minCoeff() > 0.0);
    CHECK(alpha.maxCoeff() < 1.0 + 1e-12);
  }
}

TEST_CASE("scaling d preserves the soft argmax") {
  SeededRng rng(3);
  auto S = random_matrix(5, 6, rng);
  Eigen::VectorXd d = random_matrix(6, 1, rng);
  auto a1 = attention_weights(S, d, AttentionMode::kSoft);
  auto a2 = attention_weights(S, (d * 7.5).eval(), AttentionMode::kSoft);
  int argmax1, argmax2;
  a1.maxCoeff(&argmax1);
  a2.maxCoeff(&argmax2);
  CHECK(argmax1 == argmax2);
}

TEST_CASE("alpha_one and uniform modes") {
  SeededRng rng(2);
  auto S = random_matrix(4, 8, rng);
  Eigen::VectorXd d = random_matrix(8, 1, rng);
  auto ones = attention_weights(S, d, AttentionMode::kAlphaOne);
  for (int i = 0; i < 4; ++i) CHECK(ones(i) == 1.0);
  auto unif = attention_weights(S, d, AttentionMode::kUniform);
  for (int i = 0; i < 4; ++i) CHECK(unif(i) == doctest::Approx(0.25));
  // With one row, alpha_one equals soft: both give weight 1.
  Eigen::MatrixXd S1 = S.topRows(1);
  auto soft1 = attention_weights(S1, d, AttentionMode::kSoft);
  auto one1 = attention_weights(S1, d, AttentionMode::kAlphaOne);
  CHECK(soft1(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(one1(0) == 1.0);
}

TEST_CASE("fine aggregation by hand: two turns, two tokens, b=1") {
  std::vector<Eigen::MatrixXd> T(2, Eigen::MatrixXd(2, 1));
  T[0] << 1, 3;
  T[1] << 5, 7;
  Eigen::VectorXd alpha(2);
  alpha << 0.5, 0.5;
  BoolRow active = BoolRow::Constant(2, true);
  auto q = aggregate_fine(T, alpha, active);
  REQUIRE(q.size() == 1);
  // Q = [3, 5]; mean over both active positions = 4.
  CHECK(q(0) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("fine aggregation with a one-hot alpha selects one turn") {
  SeededRng rng(4);
  std::vector<Eigen::MatrixXd> T;
  for (int i = 0; i < 3; ++i) T.push_back(random_matrix(4, 5, rng));
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(3);
  alpha(1) = 1.0;
  BoolRow active(4);
  active << true, true, true, false;
  auto q = aggregate_fine(T, alpha, active);
  Eigen::VectorXd want =
      (T[1].row(0) + T[1].row(1) + T[1].row(2)).transpose() / 3.0;
  CHECK((q - want).norm() < 1e-12);
}

TEST_CASE("fine aggregation matches a brute-force double loop") {
  SeededRng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(6));
    const int M = 2 + static_cast<int>(rng.next_below(6));
    const int b = 1 + static_cast<int>(rng.next_below(8));
    std::vector<Eigen::MatrixXd> T;
    for (int i = 0; i < n; ++i) T.push_back(random_matrix(M, b, rng));
    Eigen::VectorXd alpha(n);
    for (int i = 0; i < n; ++i) alpha(i) = rng.next_uniform();
    alpha /= alpha.sum();
    BoolRow active(M);
    int n_active = 0;
    for (int m = 0; m < M; ++m) {
      active(m) = rng.next_uniform() < 0.7;
      n_active += active(m) ? 1 : 0;
    }
    if (n_active == 0) {
      active(0) = true;
      n_active = 1;
    }

    Eigen::VectorXd brute = Eigen::VectorXd::Zero(b);
    for (int i = 0; i < n; ++i) {
      for (int m = 0; m < M; ++m) {
        if (active(m)) brute += alpha(i) * T[i].row(m).transpose();
      }
    }
    brute /= n_active;

    auto q = aggregate_fine(T, alpha, active);
    CHECK((q - brute).norm() < 1e-12);
  }
}

TEST_CASE("fine aggregation requires at least one active token") {
  std::vector<Eigen::MatrixXd> T(1, Eigen::MatrixXd::Ones(3, 2));
  Eigen::VectorXd alpha = Eigen::VectorXd::Ones(1);
  BoolRow active = BoolRow::Constant(3, false);
  CHECK_THROWS_AS(aggregate_fine(T, alpha, active), Error);
}

TEST_CASE("coarse aggregation closed forms") {
  Eigen::MatrixXd S(2, 2);
  S << 1, 0, 0, 1;
  Eigen::VectorXd alpha(2);
  alpha << 0.25, 0.75;
  auto q = aggregate_coarse(S, alpha);
  CHECK(q(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q(1) == doctest::Approx(0.75).epsilon(1e-12));

  // Single row: q equals s_1 whatever d produced.
  Eigen::MatrixXd S1(1, 3);
  S1 << 2, 4, 6;
  Eigen::VectorXd a1 = Eigen::VectorXd::Ones(1);
  auto q1 = aggregate_coarse(S1, a1);
  CHECK((q1.transpose() - S1.row(0)).norm() == 0);
}

TEST_CASE("coarse aggregation is permutation invariant") {
  SeededRng rng(8);
  auto S = random_matrix(4, 6, rng);
  Eigen::VectorXd alpha(4);
  alpha << 0.1, 0.2, 0.3, 0.4;
  auto base = aggregate_coarse(S, alpha);

  std::vector<int> perm = {2, 0, 3, 1};
  Eigen::MatrixXd S2(4, 6);
  Eigen::VectorXd alpha2(4);
  for (int i = 0; i < 4; ++i) {
    S2.row(i) = S.row(perm[i]);
    alpha2(i) = alpha(perm[i]);
  }
  auto permuted = aggregate_coarse(S2, alpha2);
  CHECK((base - permuted).norm() < 1e-12);
}

TEST_CASE("fine equals coarse when every active token row is s_i") {
  SeededRng rng(9);
  const int n = 3, M = 4, b = 6;
  auto S = random_matrix(n, b, rng);
  std::vector<Eigen::MatrixXd> T;
  BoolRow active(M);
  active << true, true, false, true;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(M, b);
    for (int m = 0; m < M; ++m) {
      if (active(m)) t.row(m) = S.row(i);
    }
    T.push_back(t);
  }
  Eigen::VectorXd d = random_matrix(b, 1, rng);
  auto alpha = attention_weights(S, d, AttentionMode::kSoft);
  auto fine = aggregate_fine(T, alpha, active);
  auto coarse = aggregate_coarse(S, alpha);
  CHECK((fine - coarse).norm() < 1e-9);
}

TEST_CASE("variant labels cover the ablation switches") {
  EncoderConfig config = tiny_encoder_config(32);
  Encoder enc = init_encoder(config);
  auto head =
      init_head(enc, Granularity::kFine, AttentionMode::kSoft, true);
  CHECK(head.variant_label() == "fine,posseg,soft");
  head = init_head(enc, Granularity::kCoarse, AttentionMode::kAlphaOne, false);
  CHECK(head.variant_label() == "coarse,no-posseg,alpha_one");
  head = init_head(enc, Granularity::kCoarse, AttentionMode::kSoft, true, true);
  CHECK(head.variant_label() == "coarse,posseg,soft,current-only");
  CHECK(to_string(Granularity::kFine) == "fine");
  CHECK(to_string(AttentionMode::kUniform) == "uniform");
  CHECK(granularity_from_string("coarse") == Granularity::kCoarse);
  CHECK(attention_mode_from_string("alpha_one") == AttentionMode::kAlphaOne);
  CHECK_THROWS_AS(granularity_from_string("bogus"), Error);
  CHECK_THROWS_AS(attention_mode_from_string("bogus"), Error);
}

TEST_CASE("head starts at zero d with the encoder projection") {
  EncoderConfig config = tiny_encoder_config(32);
  Encoder enc = init_encoder(config);
  auto head = init_head(enc, Granularity::kFine, AttentionMode::kSoft, true);
  CHECK(head.d.size() == config.embed);
  CHECK(head.d.norm() == 0.0);
  CHECK((head.projection - enc.projection).norm() == 0.0);
}

TEST_CASE("head checkpoint round-trips through JSON") {
  namespace fs = std::filesystem;
  auto path = (fs::temp_directory_path() / "har_head_test.json").string();
  EncoderConfig config = tiny_encoder_config(32);
  Encoder enc = init_encoder(config);
  auto head = init_head(enc, Granularity::kCoarse, AttentionMode::kSoft, false);
  SeededRng rng(10);
  for (int i = 0; i < head.d.size(); ++i) head.d(i) = rng.next_normal();
  head.projection.setRandom();

  save_head(head, "deadbeef01020304", 42, path);
  auto loaded = load_head(path);
  CHECK(loaded.config_hash == "deadbeef01020304");
  CHECK(loaded.encoder_seed == 42);
  CHECK(loaded.head.granularity == Granularity::kCoarse);
  CHECK(loaded.head.attention_mode == AttentionMode::kSoft);
  CHECK(loaded.head.posseg_enabled == false);
  CHECK((loaded.head.d - head.d).norm() == 0.0);
  CHECK((loaded.head.projection - head.projection).norm() == 0.0);
  fs::remove(path);
}

TEST_CASE("compose_query: single-turn dialog forces alpha [1]") {
  Vocabulary vocab;
  Dialog d;
  d.dialog_id = "d1";
  Turn t;
  t.dialog_id = "d1";
  t.turn_index = 1;
  t.question = "what is miratov ?";
  tokenize_building(t.question, vocab);
  d.turns.push_back(t);

  EncoderConfig config = tiny_encoder_config(vocab.size());
  Encoder enc = init_encoder(config);
  SequenceLayout layout;
  layout.max_question_tokens = 8;
  auto head = init_head(enc, Granularity::kCoarse, AttentionMode::kSoft, true);
  SeededRng rng(11);
  for (int i = 0; i < head.d.size(); ++i) head.d(i) = rng.next_normal();

  auto qv = compose_query(d, 1, enc, head, layout, vocab);
  REQUIRE(qv.alphas.size() == 1);
  CHECK(qv.alphas(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(qv.turn_ids == std::vector<int>{1});
  CHECK(qv.q_hat.size() == config.embed);
  CHECK(qv.q_hat.norm() > 0);

  auto again = compose_query(d, 1, enc, head, layout, vocab);
  CHECK((qv.q_hat - again.q_hat).norm() == 0.0);
}

TEST_CASE("fine and coarse compositions differ on a synthetic turn") {
  SyntheticConfig sconfig;
  sconfig.n_dialogs = 4;
  sconfig.n_passages = 16;
  auto corpus = gen_synthetic(sconfig, 13);
  EncoderConfig config = tiny_encoder_config(corpus.vocab.size());
  SequenceLayout layout;
  config.max_positions = layout.row_length();
  Encoder enc = init_encoder(config);

  auto fine_head =
      init_head(enc, Granularity::kFine, AttentionMode::kSoft, true);
  auto coarse_head =
      init_head(enc, Granularity::kCoarse, AttentionMode::kSoft, true);
  const auto& d = corpus.dialogs[1];
  auto qf = compose_query(d, 4, enc, fine_head, layout, corpus.vocab);
  auto qc = compose_query(d, 4, enc, coarse_head, layout, corpus.vocab);
  CHECK((qf.q_hat - qc.q_hat).norm() > 0);
  // Same batch, same soft weights: alphas agree even though q_hat differs.
  CHECK((qf.alphas - qc.alphas).norm() < 1e-12);
}
