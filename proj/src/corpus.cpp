#include "har/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "har/rng.hpp"

namespace har {

using nlohmann::json;

namespace {

const char* kReservedNames[kReservedTokens] = {"[PAD]", "[CLS]", "[SEP]",
                                               "[UNK]"};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: stable newlines
  if (!out) throw Error("cannot write file: " + path);
  return out;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* name : kReservedNames) {
    ids_.emplace(name, static_cast<int>(tokens_.size()));
    tokens_.emplace_back(name);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_at(int id) const {
  if (id < 0 || id >= size()) {
    throw Error("token id out of range: " + std::to_string(id));
  }
  return tokens_[id];
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

void Vocabulary::save(const std::string& path) const {
  auto out = open_output(path);
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto in = open_input(path);
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < kReservedTokens) {
      if (line != kReservedNames[line_no]) {
        throw Error(path + ": line " + std::to_string(line_no + 1) +
                    ": expected reserved token " + kReservedNames[line_no]);
      }
    } else {
      if (line.empty()) {
        throw Error(path + ": line " + std::to_string(line_no + 1) +
                    ": empty token");
      }
      if (vocab.contains(line)) {
        throw Error(path + ": line " + std::to_string(line_no + 1) +
                    ": duplicate token '" + line + "'");
      }
      vocab.add(line);
    }
    ++line_no;
  }
  if (line_no < kReservedTokens) {
    throw Error(path + ": vocabulary misses reserved tokens");
  }
  return vocab;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      words.push_back(current);
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& word : split_words(text)) ids.push_back(vocab.lookup(word));
  return ids;
}

std::vector<int> tokenize_building(const std::string& text,
                                   Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& word : split_words(text)) ids.push_back(vocab.add(word));
  return ids;
}

void PassageCollection::add(Passage p) {
  if (p.pid.empty()) throw Error("passage with empty pid");
  if (p.text.empty()) throw Error("passage '" + p.pid + "' has empty text");
  if (index_.count(p.pid)) throw Error("duplicate pid '" + p.pid + "'");
  index_.emplace(p.pid, rows_.size());
  rows_.push_back(std::move(p));
}

std::optional<std::size_t> PassageCollection::row_of(
    const std::string& pid) const {
  auto it = index_.find(pid);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void PassageCollection::tokenize_all(const Vocabulary& vocab,
                                     int max_passage_tokens) {
  for (auto& p : rows_) {
    p.token_ids = tokenize(p.text, vocab);
    if (static_cast<int>(p.token_ids.size()) > max_passage_tokens) {
      p.token_ids.resize(max_passage_tokens);
    }
  }
}

std::vector<Dialog> load_dialogs(const std::string& path) {
  auto in = open_input(path);
  std::vector<Dialog> dialogs;
  std::unordered_map<std::string, std::size_t> dialog_pos;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": JSON parse error: " + e.what());
    }
    auto require = [&](const char* key) -> const json& {
      if (!row.contains(key)) {
        throw Error(path + ": line " + std::to_string(line_no) +
                    ": missing field \"" + key + "\"");
      }
      return row.at(key);
    };
    Turn turn;
    try {
      turn.dialog_id = require("dialog_id").get<std::string>();
      turn.turn_index = require("turn_index").get<int>();
      turn.question = require("question").get<std::string>();
      for (const auto& pid : require("gold_pids")) {
        turn.gold_pids.push_back(pid.get<std::string>());
      }
      if (row.contains("rewritten_first_question")) {
        turn.rewritten_first_question =
            row.at("rewritten_first_question").get<std::string>();
      }
    } catch (const json::type_error& e) {
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": bad field type: " + e.what());
    }
    if (turn.turn_index < 1) {
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": turn_index must be >= 1");
    }
    auto it = dialog_pos.find(turn.dialog_id);
    if (it == dialog_pos.end()) {
      dialog_pos.emplace(turn.dialog_id, dialogs.size());
      dialogs.push_back(Dialog{turn.dialog_id, {}});
      it = dialog_pos.find(turn.dialog_id);
    }
    dialogs[it->second].turns.push_back(std::move(turn));
  }
  for (auto& dialog : dialogs) {
    std::sort(dialog.turns.begin(), dialog.turns.end(),
              [](const Turn& a, const Turn& b) {
                return a.turn_index < b.turn_index;
              });
    for (std::size_t i = 0; i < dialog.turns.size(); ++i) {
      int expected = static_cast<int>(i) + 1;
      int got = dialog.turns[i].turn_index;
      if (i > 0 && got == dialog.turns[i - 1].turn_index) {
        throw Error(path + ": duplicate turn (" + dialog.dialog_id + ", " +
                    std::to_string(got) + ")");
      }
      if (got != expected) {
        throw Error(path + ": dialog " + dialog.dialog_id +
                    ": non-consecutive turn indices (expected " +
                    std::to_string(expected) + ", got " + std::to_string(got) +
                    ")");
      }
    }
  }
  return dialogs;
}

void save_dialogs(const std::vector<Dialog>& dialogs,
                  const std::string& path) {
  auto out = open_output(path);
  for (const auto& dialog : dialogs) {
    for (const auto& turn : dialog.turns) {
      json row;
      row["dialog_id"] = turn.dialog_id;
      row["turn_index"] = turn.turn_index;
      row["question"] = turn.question;
      if (turn.rewritten_first_question) {
        row["rewritten_first_question"] = *turn.rewritten_first_question;
      }
      row["gold_pids"] = turn.gold_pids;
      out << row.dump() << '\n';
    }
  }
}

PassageCollection load_passages(const std::string& path) {
  auto in = open_input(path);
  PassageCollection passages;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": JSON parse error: " + e.what());
    }
    if (!row.contains("pid") || !row.contains("text")) {
      throw Error(path + ": line " + std::to_string(line_no) +
                  ": passage rows need \"pid\" and \"text\"");
    }
    Passage p;
    p.pid = row.at("pid").get<std::string>();
    p.text = row.at("text").get<std::string>();
    try {
      passages.add(std::move(p));
    } catch (const Error& e) {
      throw Error(path + ": line " + std::to_string(line_no) + ": " +
                  e.what());
    }
  }
  return passages;
}

void save_passages(const PassageCollection& passages,
                   const std::string& path) {
  auto out = open_output(path);
  for (const auto& p : passages.rows()) {
    json row;
    row["pid"] = p.pid;
    row["text"] = p.text;
    out << row.dump() << '\n';
  }
}

Vocabulary build_vocabulary(const std::vector<Dialog>& train_dialogs,
                            const PassageCollection& passages) {
  Vocabulary vocab;
  for (const auto& dialog : train_dialogs) {
    for (const auto& turn : dialog.turns) {
      tokenize_building(turn.question, vocab);
      if (turn.rewritten_first_question) {
        tokenize_building(*turn.rewritten_first_question, vocab);
      }
    }
  }
  for (const auto& p : passages.rows()) tokenize_building(p.text, vocab);
  return vocab;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation

namespace {

const std::vector<std::string>& content_templates() {
  // %1..%3 stand for the topic's content words; every template uses all
  // three so the gold overlap count is uniform.
  static const std::vector<std::string> t = {
      "what is %1 %2 %3 ?",        "tell me about %1 %2 %3 ?",
      "what did %1 %2 %3 do ?",    "how did %1 %2 %3 start ?",
      "where was %1 %2 %3 made ?", "why did %1 %2 %3 happen ?",
      "when did %1 %2 %3 begin ?", "who made %1 %2 %3 ?",
  };
  return t;
}

const std::vector<std::string>& deictic_templates() {
  // Deliberately long and content-free: a topic-return question should be
  // mostly pronouns so the current turn alone carries almost no signal.
  static const std::vector<std::string> t = {
      "what else did they do about it after that ?",
      "and what about that other one before this ?",
      "did it happen to them again after those ?",
      "what was it like for them back then ?",
      "and how did that go for them after all ?",
      "was there more to it than that for them ?",
      "what came of it in the end for those ?",
      "did they do so again before it was over ?",
  };
  return t;
}

std::vector<std::string> collect_class_words(
    const std::vector<std::string>& templates) {
  std::set<std::string> seen;
  for (const auto& t : templates) {
    for (const auto& w : split_words(t)) {
      if (w.size() > 1 || std::isalpha(static_cast<unsigned char>(w[0]))) {
        seen.insert(w);
      }
    }
  }
  return {seen.begin(), seen.end()};
}

constexpr int kTopicWordsPerTopic = 3;
constexpr int kMinFillerWords = 16;

/// Pronounceable unique fake word, 2-3 syllables.
std::string make_word(SeededRng& rng) {
  static const char* onsets[] = {"b",  "d",  "f",  "g",  "k",  "l",
                                 "m",  "n",  "p",  "r",  "s",  "t",
                                 "v",  "z",  "br", "cr", "dr", "gl",
                                 "pl", "st", "tr", "sk", "sp", "fl"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
  static const char* codas[] = {"",  "n", "r", "s", "t", "l",
                                "m", "x", "nd", "rk", "sh", "th"};
  int syllables = 2 + static_cast<int>(rng.next_below(2));
  std::string word;
  for (int s = 0; s < syllables; ++s) {
    word += onsets[rng.next_below(std::size(onsets))];
    word += vowels[rng.next_below(std::size(vowels))];
  }
  word += codas[rng.next_below(std::size(codas))];
  return word;
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) {
    s.insert(0, width - s.size(), '0');
  }
  return s;
}

std::string substitute(const std::string& tmpl,
                       const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '%' && i + 1 < tmpl.size()) {
      int idx = tmpl[i + 1] - '1';
      out += words.at(idx);
      ++i;
    } else {
      out += tmpl[i];
    }
  }
  return out;
}

}  // namespace

const std::vector<std::string>& question_function_words() {
  static const std::vector<std::string> words =
      collect_class_words(content_templates());
  return words;
}

const std::vector<std::string>& deictic_words() {
  static const std::vector<std::string> words =
      collect_class_words(deictic_templates());
  return words;
}

bool is_content_word(const std::string& word) {
  if (word.empty()) return false;
  if (word.size() == 1 && !std::isalnum(static_cast<unsigned char>(word[0]))) {
    return false;  // punctuation token
  }
  const auto& qf = question_function_words();
  const auto& de = deictic_words();
  return std::find(qf.begin(), qf.end(), word) == qf.end() &&
         std::find(de.begin(), de.end(), word) == de.end();
}

SyntheticCorpus gen_synthetic(const SyntheticConfig& config,
                              std::uint64_t seed) {
  if (config.n_dialogs < 1 || config.turns_per_dialog < 1 ||
      config.n_passages < 1) {
    throw Error("synthetic config: all counts must be >= 1");
  }
  if (config.topic_return_gap < 1) {
    throw Error("synthetic config: topic_return_gap must be >= 1");
  }
  if (config.topic_return_gap >= config.turns_per_dialog) {
    throw Error("synthetic config: topic_return_gap (" +
                std::to_string(config.topic_return_gap) +
                ") must be < turns_per_dialog (" +
                std::to_string(config.turns_per_dialog) + ")");
  }
  if (config.turns_per_dialog > 2 * config.topic_return_gap) {
    // A return turn would point at another return turn, which has no
    // content words to share with the gold passage.
    throw Error(
        "synthetic config: turns_per_dialog must be <= 2*topic_return_gap "
        "so every topic return targets a content turn");
  }
  const int gap = config.topic_return_gap;
  const int fresh_per_dialog = std::min(config.turns_per_dialog, gap);
  if (config.n_passages < fresh_per_dialog) {
    throw Error("synthetic config: n_passages (" +
                std::to_string(config.n_passages) +
                ") is below the distinct topics required per dialog (" +
                std::to_string(fresh_per_dialog) + ")");
  }

  const int n_topics = config.n_passages;  // one passage per topic
  const auto& qf_words = question_function_words();
  const auto& de_words = deictic_words();
  const int min_vocab = kReservedTokens + static_cast<int>(qf_words.size()) +
                        static_cast<int>(de_words.size()) + 1 /* '?' */ +
                        1 /* '.' */ + n_topics * kTopicWordsPerTopic +
                        kMinFillerWords;
  int vocab_size = config.vocab_size;
  if (vocab_size == 0) vocab_size = min_vocab + 48;
  if (vocab_size < min_vocab) {
    throw Error("synthetic config: vocab_size must be at least " +
                std::to_string(min_vocab) + " for this corpus shape");
  }

  SeededRng rng(seed);
  SyntheticCorpus corpus;

  // Vocabulary: reserved ids, closed word classes, punctuation, then the
  // generated content words (topics first, filler after) up to vocab_size.
  for (const auto& w : qf_words) corpus.vocab.add(w);
  for (const auto& w : de_words) corpus.vocab.add(w);
  corpus.vocab.add("?");
  corpus.vocab.add(".");

  auto fresh_word = [&] {
    std::string w = make_word(rng);
    while (corpus.vocab.contains(w)) w = make_word(rng);
    corpus.vocab.add(w);
    return w;
  };

  std::vector<std::vector<std::string>> topic_words(n_topics);
  for (auto& words : topic_words) {
    for (int j = 0; j < kTopicWordsPerTopic; ++j) words.push_back(fresh_word());
  }
  std::vector<std::string> filler;
  while (corpus.vocab.size() < vocab_size) filler.push_back(fresh_word());

  // Passages: each topic's content words three times each, mixed into
  // filler so surface forms differ across passages of similar length.
  const int pid_width =
      std::max<int>(4, std::to_string(config.n_passages - 1).size());
  for (int t = 0; t < n_topics; ++t) {
    std::vector<std::string> words;
    for (const auto& w : topic_words[t]) {
      words.insert(words.end(), 3, w);
    }
    // Keep filler sparse so the repeated topic words dominate the passage.
    const int n_filler = 5 + static_cast<int>(rng.next_below(4));
    for (int j = 0; j < n_filler; ++j) {
      words.push_back(filler[rng.next_below(filler.size())]);
    }
    shuffle(words, rng);
    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    text += " .";
    corpus.passages.add(Passage{"p" + zero_pad(t, pid_width), text, {}});
  }

  // Dialogs: fresh topics for turns 1..gap, deictic topic returns after.
  const int did_width =
      std::max<int>(4, std::to_string(config.n_dialogs - 1).size());
  for (int d = 0; d < config.n_dialogs; ++d) {
    Dialog dialog;
    dialog.dialog_id = "d" + zero_pad(d, did_width);
    std::vector<int> topics;
    while (static_cast<int>(topics.size()) < fresh_per_dialog) {
      int t = static_cast<int>(rng.next_below(n_topics));
      if (std::find(topics.begin(), topics.end(), t) == topics.end()) {
        topics.push_back(t);
      }
    }
    for (int k = 1; k <= config.turns_per_dialog; ++k) {
      Turn turn;
      turn.dialog_id = dialog.dialog_id;
      turn.turn_index = k;
      const int topic = (k <= gap) ? topics[k - 1] : topics[k - gap - 1];
      turn.gold_pids.push_back(corpus.passages.at(topic).pid);
      if (k <= gap) {
        const auto& tmpl =
            content_templates()[rng.next_below(content_templates().size())];
        turn.question = substitute(tmpl, topic_words[topic]);
      } else {
        turn.question =
            deictic_templates()[rng.next_below(deictic_templates().size())];
      }
      dialog.turns.push_back(std::move(turn));
    }
    corpus.dialogs.push_back(std::move(dialog));
  }
  return corpus;
}

CorpusSplits split_dialogs(const std::vector<Dialog>& dialogs,
                           double train_frac, double dev_frac) {
  if (train_frac <= 0 || dev_frac < 0 || train_frac + dev_frac > 1.0) {
    throw Error("split fractions must satisfy 0 < train, 0 <= dev, sum <= 1");
  }
  const auto n = dialogs.size();
  const auto n_train = static_cast<std::size_t>(train_frac * n);
  const auto n_dev = static_cast<std::size_t>(dev_frac * n);
  CorpusSplits splits;
  splits.train.assign(dialogs.begin(), dialogs.begin() + n_train);
  splits.dev.assign(dialogs.begin() + n_train,
                    dialogs.begin() + n_train + n_dev);
  splits.test.assign(dialogs.begin() + n_train + n_dev, dialogs.end());
  return splits;
}

}  // namespace har
