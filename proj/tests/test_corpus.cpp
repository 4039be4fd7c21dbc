#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "har/corpus.hpp"

using namespace har;

namespace {

namespace fs = std::filesystem;

/// Fresh scratch directory per test, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("har_corpus_test_" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Content words of a question/passage text, deduplicated.
std::set<std::string> content_words(const std::string& text) {
  std::set<std::string> out;
  for (const auto& w : split_words(text)) {
    if (is_content_word(w)) out.insert(w);
  }
  return out;
}

int overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  int n = 0;
  for (const auto& w : a) n += b.count(w) ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("tokenize splits on whitespace and punctuation and lowercases") {
  Vocabulary vocab;
  auto ids = tokenize_building("Where was she born?", vocab);
  REQUIRE(ids.size() == 5);
  std::vector<std::string> words;
  for (int id : ids) words.push_back(vocab.token_at(id));
  CHECK(words == std::vector<std::string>{"where", "was", "she", "born", "?"});
}

TEST_CASE("tokenize of the empty string is empty") {
  Vocabulary vocab;
  CHECK(tokenize("", vocab).empty());
  CHECK(tokenize("   \t\n ", vocab).empty());
}

TEST_CASE("tokenize is deterministic") {
  Vocabulary vocab;
  auto first = tokenize_building("A b, C! a B c", vocab);
  auto second = tokenize("A b, C! a B c", vocab);
  CHECK(first == second);
}

TEST_CASE("reserved ids are fixed and never produced from raw text") {
  Vocabulary vocab;
  CHECK(vocab.size() == kReservedTokens);
  CHECK(vocab.token_at(kPadId) == "[PAD]");
  CHECK(vocab.token_at(kClsId) == "[CLS]");
  CHECK(vocab.token_at(kSepId) == "[SEP]");
  CHECK(vocab.token_at(kUnkId) == "[UNK]");
  // Bracketed surface forms split into ['[', 'pad', ']'] — reserved ids
  // cannot be smuggled in via raw text.
  auto ids = tokenize_building("[PAD] [CLS] [SEP] [UNK]", vocab);
  for (int id : ids) {
    CHECK(id >= kReservedTokens);
  }
}

TEST_CASE("out-of-vocabulary words map to UNK") {
  Vocabulary vocab;
  tokenize_building("known words only", vocab);
  auto ids = tokenize("known mystery", vocab);
  REQUIRE(ids.size() == 2);
  CHECK(vocab.token_at(ids[0]) == "known");
  CHECK(ids[1] == kUnkId);
}

TEST_CASE("vocabulary save/load round-trips, reserved lines first") {
  TempDir dir;
  Vocabulary vocab;
  tokenize_building("alpha beta gamma", vocab);
  vocab.save(dir.file("vocab.txt"));

  std::ifstream in(dir.file("vocab.txt"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "[PAD]");

  Vocabulary loaded = Vocabulary::load(dir.file("vocab.txt"));
  REQUIRE(loaded.size() == vocab.size());
  for (int i = 0; i < vocab.size(); ++i) {
    CHECK(loaded.token_at(i) == vocab.token_at(i));
  }
}

TEST_CASE("load_dialogs groups turns and sorts by turn_index") {
  TempDir dir;
  write_file(dir.file("dialogs.jsonl"),
             R"({"dialog_id":"d2","turn_index":1,"question":"q a","gold_pids":["p1"]})"
             "\n"
             R"({"dialog_id":"d1","turn_index":2,"question":"q b","gold_pids":["p2"]})"
             "\n"
             R"({"dialog_id":"d1","turn_index":1,"question":"q c","gold_pids":["p3"]})"
             "\n"
             R"({"dialog_id":"d2","turn_index":2,"question":"q d","gold_pids":["p4"]})"
             "\n"
             R"({"dialog_id":"d2","turn_index":3,"question":"q e","gold_pids":["p5"]})"
             "\n"
             R"({"dialog_id":"d1","turn_index":3,"question":"q f","gold_pids":["p6"]})"
             "\n");
  auto dialogs = load_dialogs(dir.file("dialogs.jsonl"));
  REQUIRE(dialogs.size() == 2);
  // Order of first appearance.
  CHECK(dialogs[0].dialog_id == "d2");
  CHECK(dialogs[1].dialog_id == "d1");
  std::size_t total = 0;
  for (const auto& d : dialogs) {
    REQUIRE(d.turns.size() == 3);
    total += d.turns.size();
    for (int k = 1; k <= 3; ++k) {
      CHECK(d.turns[k - 1].turn_index == k);
    }
  }
  CHECK(total == 6);
  CHECK(dialogs[1].turns[0].question == "q c");
}

TEST_CASE("load_dialogs error cases name the offending line") {
  TempDir dir;

  SUBCASE("missing question field") {
    write_file(dir.file("bad.jsonl"),
               R"({"dialog_id":"d1","turn_index":1,"question":"ok","gold_pids":["p1"]})"
               "\n"
               R"({"dialog_id":"d1","turn_index":2,"gold_pids":["p1"]})"
               "\n");
    CHECK_THROWS_WITH_AS(load_dialogs(dir.file("bad.jsonl")),
                         doctest::Contains("line 2"), Error);
  }

  SUBCASE("duplicate dialog_id, turn_index") {
    write_file(dir.file("dup.jsonl"),
               R"({"dialog_id":"d1","turn_index":1,"question":"a","gold_pids":["p1"]})"
               "\n"
               R"({"dialog_id":"d1","turn_index":1,"question":"b","gold_pids":["p1"]})"
               "\n");
    CHECK_THROWS_AS(load_dialogs(dir.file("dup.jsonl")), Error);
  }

  SUBCASE("non-consecutive turn indices") {
    write_file(dir.file("gap.jsonl"),
               R"({"dialog_id":"d1","turn_index":1,"question":"a","gold_pids":["p1"]})"
               "\n"
               R"({"dialog_id":"d1","turn_index":3,"question":"b","gold_pids":["p1"]})"
               "\n");
    CHECK_THROWS_AS(load_dialogs(dir.file("gap.jsonl")), Error);
  }

  SUBCASE("malformed json") {
    write_file(dir.file("broken.jsonl"), "{\"dialog_id\": \"d1\",\nnot json\n");
    CHECK_THROWS_AS(load_dialogs(dir.file("broken.jsonl")), Error);
  }
}

TEST_CASE("load_passages indexes by pid and preserves order") {
  TempDir dir;
  write_file(dir.file("p.jsonl"),
             R"({"pid":"pa","text":"first text"})"
             "\n"
             R"({"pid":"pb","text":"second text"})"
             "\n"
             R"({"pid":"pc","text":"third text"})"
             "\n");
  auto passages = load_passages(dir.file("p.jsonl"));
  REQUIRE(passages.size() == 3);
  CHECK(passages.at(0).pid == "pa");
  CHECK(passages.at(2).pid == "pc");
  REQUIRE(passages.row_of("pb").has_value());
  CHECK(*passages.row_of("pb") == 1);
  CHECK_FALSE(passages.row_of("nope").has_value());
}

TEST_CASE("load_passages rejects duplicate pid naming it") {
  TempDir dir;
  write_file(dir.file("dup.jsonl"),
             R"({"pid":"p1","text":"a"})"
             "\n"
             R"({"pid":"p1","text":"b"})"
             "\n");
  CHECK_THROWS_WITH_AS(load_passages(dir.file("dup.jsonl")),
                       doctest::Contains("p1"), Error);
}

TEST_CASE("load_passages rejects empty text") {
  TempDir dir;
  write_file(dir.file("empty.jsonl"), R"({"pid":"p1","text":""})"
                                      "\n");
  CHECK_THROWS_AS(load_passages(dir.file("empty.jsonl")), Error);
}

TEST_CASE("generated 10000-passage collection round-trips with padded pids") {
  TempDir dir;
  SyntheticConfig config;
  config.n_dialogs = 2;
  config.turns_per_dialog = 4;
  config.n_passages = 10000;
  config.topic_return_gap = 3;
  auto corpus = gen_synthetic(config, 11);
  save_passages(corpus.passages, dir.file("p.jsonl"));
  auto loaded = load_passages(dir.file("p.jsonl"));
  REQUIRE(loaded.size() == 10000);
  CHECK(loaded.at(0).pid == "p0000");
  CHECK(loaded.at(9999).pid == "p9999");
}

TEST_CASE("tokenize_all truncates to the passage budget") {
  Vocabulary vocab;
  PassageCollection passages;
  passages.add(Passage{"p0", "a b c d e f g h", {}});
  for (const auto& p : passages.rows()) {
    for (const auto& w : split_words(p.text)) tokenize_building(w, vocab);
  }
  passages.tokenize_all(vocab, 3);
  CHECK(passages.at(0).token_ids.size() == 3);
}

TEST_CASE("synthetic corpus: seed-7 topic-return shape") {
  SyntheticConfig config;  // defaults: 200 dialogs x 4 turns, 500 passages, gap 3
  auto corpus = gen_synthetic(config, 7);

  REQUIRE(corpus.dialogs.size() == 200);
  std::size_t questions = 0;
  for (const auto& d : corpus.dialogs) questions += d.turns.size();
  CHECK(questions == 800);
  CHECK(corpus.passages.size() == 500);

  double token_sum = 0;
  for (const auto& d : corpus.dialogs) {
    for (const auto& t : d.turns) token_sum += split_words(t.question).size();
  }
  const double avg_tokens = token_sum / static_cast<double>(questions);
  CHECK(avg_tokens > 6.7 - 1.5);
  CHECK(avg_tokens < 6.7 + 1.5);

  // Overlap oracle: every turn-4 gold passage shares content words with the
  // turn-1 question only, and that overlap strictly exceeds the overlap with
  // the current (deictic) question.
  for (const auto& d : corpus.dialogs) {
    REQUIRE(d.turns.size() == 4);
    const auto& ret = d.turns[3];
    REQUIRE(ret.gold_pids.size() == 1);
    auto row = corpus.passages.row_of(ret.gold_pids[0]);
    REQUIRE(row.has_value());
    auto gold_words = content_words(corpus.passages.at(*row).text);

    const int with_turn1 = overlap(gold_words, content_words(d.turns[0].question));
    const int with_turn2 = overlap(gold_words, content_words(d.turns[1].question));
    const int with_turn3 = overlap(gold_words, content_words(d.turns[2].question));
    const int with_current = overlap(gold_words, content_words(ret.question));
    CHECK(with_turn1 > 0);
    CHECK(with_turn2 == 0);
    CHECK(with_turn3 == 0);
    CHECK(with_current == 0);
    CHECK(with_turn1 > with_current);

    // The return turn's own surface form is referentially impoverished:
    // no content words at all.
    CHECK(content_words(ret.question).empty());
  }
}

TEST_CASE("synthetic generation is byte-identical across runs of one seed") {
  TempDir dir;
  SyntheticConfig config;
  config.n_dialogs = 20;
  config.n_passages = 60;
  auto a = gen_synthetic(config, 7);
  auto b = gen_synthetic(config, 7);
  save_dialogs(a.dialogs, dir.file("a_dialogs.jsonl"));
  save_dialogs(b.dialogs, dir.file("b_dialogs.jsonl"));
  save_passages(a.passages, dir.file("a_passages.jsonl"));
  save_passages(b.passages, dir.file("b_passages.jsonl"));
  a.vocab.save(dir.file("a_vocab.txt"));
  b.vocab.save(dir.file("b_vocab.txt"));
  CHECK(read_file(dir.file("a_dialogs.jsonl")) ==
        read_file(dir.file("b_dialogs.jsonl")));
  CHECK(read_file(dir.file("a_passages.jsonl")) ==
        read_file(dir.file("b_passages.jsonl")));
  CHECK(read_file(dir.file("a_vocab.txt")) == read_file(dir.file("b_vocab.txt")));

  auto c = gen_synthetic(config, 8);
  save_dialogs(c.dialogs, dir.file("c_dialogs.jsonl"));
  CHECK(read_file(dir.file("a_dialogs.jsonl")) !=
        read_file(dir.file("c_dialogs.jsonl")));
}

TEST_CASE("corpus write/load round-trip reproduces identical structures") {
  TempDir dir;
  SyntheticConfig config;
  config.n_dialogs = 12;
  config.n_passages = 30;
  auto corpus = gen_synthetic(config, 3);

  save_dialogs(corpus.dialogs, dir.file("dialogs.jsonl"));
  save_passages(corpus.passages, dir.file("passages.jsonl"));
  auto dialogs = load_dialogs(dir.file("dialogs.jsonl"));
  auto passages = load_passages(dir.file("passages.jsonl"));

  REQUIRE(dialogs.size() == corpus.dialogs.size());
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    CHECK(dialogs[i].dialog_id == corpus.dialogs[i].dialog_id);
    REQUIRE(dialogs[i].turns.size() == corpus.dialogs[i].turns.size());
    for (std::size_t k = 0; k < dialogs[i].turns.size(); ++k) {
      const auto& got = dialogs[i].turns[k];
      const auto& want = corpus.dialogs[i].turns[k];
      CHECK(got.turn_index == want.turn_index);
      CHECK(got.question == want.question);
      CHECK(got.gold_pids == want.gold_pids);
      CHECK(got.rewritten_first_question == want.rewritten_first_question);
    }
  }
  REQUIRE(passages.size() == corpus.passages.size());
  for (std::size_t j = 0; j < passages.size(); ++j) {
    CHECK(passages.at(j).pid == corpus.passages.at(j).pid);
    CHECK(passages.at(j).text == corpus.passages.at(j).text);
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig config;
  config.topic_return_gap = 4;  // = turns_per_dialog: no content turn to return to
  CHECK_THROWS_AS(gen_synthetic(config, 1), Error);
  config.topic_return_gap = 0;
  CHECK_THROWS_AS(gen_synthetic(config, 1), Error);
  config = SyntheticConfig{};
  config.n_passages = 2;  // below the distinct topics needed per dialog
  CHECK_THROWS_AS(gen_synthetic(config, 1), Error);
  config = SyntheticConfig{};
  config.vocab_size = 10;  // cannot fit closed classes + topics
  CHECK_THROWS_AS(gen_synthetic(config, 1), Error);
}

TEST_CASE("split_dialogs uses deterministic position-based fractions") {
  SyntheticConfig config;
  config.n_dialogs = 200;
  config.n_passages = 500;
  auto corpus = gen_synthetic(config, 7);
  auto splits = split_dialogs(corpus.dialogs, 0.70, 0.15);
  CHECK(splits.train.size() == 140);
  CHECK(splits.dev.size() == 30);
  CHECK(splits.test.size() == 30);
  CHECK(splits.train.front().dialog_id == corpus.dialogs.front().dialog_id);
  CHECK(splits.test.back().dialog_id == corpus.dialogs.back().dialog_id);
  CHECK_THROWS_AS(split_dialogs(corpus.dialogs, 0.9, 0.2), Error);
}
