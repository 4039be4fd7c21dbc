#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "har/common.hpp"

namespace har {

// Reserved vocabulary slots, fixed by the file format.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kReservedTokens = 4;

/// Token <-> id map. Ids 0..3 are reserved ([PAD], [CLS], [SEP], [UNK]) and
/// never produced from raw text.
class Vocabulary {
 public:
  Vocabulary();

  /// Returns the id of `token`, inserting it if unseen. Reserved surface
  /// forms cannot be added (they contain '[' / ']', which the tokenizer
  /// always splits off).
  int add(const std::string& token);

  /// Id of `token`, or kUnkId when absent.
  int lookup(const std::string& token) const;

  const std::string& token_at(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Lowercases and splits `text` on whitespace and punctuation boundaries.
/// Total and deterministic; punctuation characters become their own tokens.
std::vector<std::string> split_words(const std::string& text);

/// split_words mapped through `vocab`; out-of-vocabulary words become [UNK].
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

/// Building-mode variant: unseen words are added to `vocab`.
std::vector<int> tokenize_building(const std::string& text, Vocabulary& vocab);

struct Passage {
  std::string pid;
  std::string text;
  std::vector<int> token_ids;  // filled by PassageCollection::tokenize_all
};

/// Passages indexed by pid; insertion order is preserved and defines the
/// row order used for score tie-breaking downstream.
class PassageCollection {
 public:
  void add(Passage p);
  std::size_t size() const { return rows_.size(); }
  const Passage& at(std::size_t row) const { return rows_[row]; }
  const std::vector<Passage>& rows() const { return rows_; }
  std::optional<std::size_t> row_of(const std::string& pid) const;

  /// Tokenizes every passage, truncating to max_passage_tokens.
  void tokenize_all(const Vocabulary& vocab, int max_passage_tokens);

 private:
  std::vector<Passage> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Turn {
  std::string dialog_id;
  int turn_index = 0;  // 1-based, consecutive within a dialog
  std::string question;
  std::optional<std::string> rewritten_first_question;  // only on turn 1
  std::vector<std::string> gold_pids;
};

struct Dialog {
  std::string dialog_id;
  std::vector<Turn> turns;
};

/// Loads dialogs.jsonl (one turn object per line). Dialogs keep the order
/// of first appearance; turns are sorted by turn_index and validated to be
/// consecutive from 1.
std::vector<Dialog> load_dialogs(const std::string& path);
void save_dialogs(const std::vector<Dialog>& dialogs, const std::string& path);

PassageCollection load_passages(const std::string& path);
void save_passages(const PassageCollection& passages, const std::string& path);

/// Builds a vocabulary from training-split questions plus the passage
/// collection. Dev/test words outside it map to [UNK].
Vocabulary build_vocabulary(const std::vector<Dialog>& train_dialogs,
                            const PassageCollection& passages);

struct SyntheticConfig {
  int n_dialogs = 200;
  int turns_per_dialog = 4;
  int n_passages = 500;
  int topic_return_gap = 3;  // Δ: turn k > Δ revisits turn k−Δ's topic
  int vocab_size = 0;        // 0 = smallest size that fits the corpus
};

struct SyntheticCorpus {
  std::vector<Dialog> dialogs;
  PassageCollection passages;
  Vocabulary vocab;
};

/// Deterministic per seed. Turns k ≤ Δ each introduce a fresh topic with a
/// content question; every turn k > Δ is a topic return whose question is
/// deictic (pronoun-style) and whose gold passage shares content words with
/// turn k−Δ's question only.
SyntheticCorpus gen_synthetic(const SyntheticConfig& config,
                              std::uint64_t seed);

/// Closed word classes used by the generator. Anything outside these (and
/// punctuation) is a content word; analysis and tests classify tokens with
/// them instead of re-deriving the pools.
const std::vector<std::string>& question_function_words();
const std::vector<std::string>& deictic_words();
bool is_content_word(const std::string& word);

struct CorpusSplits {
  std::vector<Dialog> train;
  std::vector<Dialog> dev;
  std::vector<Dialog> test;
};

/// Deterministic split by dialog position: first `train_frac`, then
/// `dev_frac`, remainder test.
CorpusSplits split_dialogs(const std::vector<Dialog>& dialogs,
                           double train_frac = 0.70, double dev_frac = 0.15);

}  // namespace har
