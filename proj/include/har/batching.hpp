#pragma once

#include <vector>

#include <Eigen/Core>

#include "har/corpus.hpp"

namespace har {

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using BoolRow = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Fixed row geometry: [CLS] q_1 [SEP] q_i [SEP] q_k with each question
/// segment padded to max_question_tokens, so rows are 3M+3 long.
struct SequenceLayout {
  int max_question_tokens = 16;  // M

  int row_length() const { return 3 * max_question_tokens + 3; }
  int cls_pos() const { return 0; }
  int seg1_begin() const { return 1; }
  int sep1_pos() const { return max_question_tokens + 1; }
  int seg2_begin() const { return max_question_tokens + 2; }
  int sep2_pos() const { return 2 * max_question_tokens + 2; }
  int seg3_begin() const { return 2 * max_question_tokens + 3; }
};

struct BatchOptions {
  int max_history_turns = 11;  // N; also the segment id vocabulary size
  bool posseg_enabled = true;
  bool current_only = false;  // restrict the batch to the row i = k
};

/// One row per attended history turn. All grids are n_rows × row_length.
struct InstanceBatch {
  Eigen::ArrayXXi token_ids;
  Eigen::ArrayXXi segment_ids;
  BoolGrid token_mask;          // real tokens ([CLS], [SEP]s, non-pad words)
  BoolGrid current_token_mask;  // non-pad tokens of the q_k segment only
  std::vector<int> turn_ids;    // history index i per row, increasing
  int current_turn = 0;         // k

  int n_rows() const { return static_cast<int>(turn_ids.size()); }
};

/// Segment ids for one row: with posseg enabled, the q_k span and its
/// leading [SEP] get id 0 while [CLS], q_1, q_i and the first [SEP] get
/// k−i clamped to N−1; disabled means all zeros. Padding always gets 0.
Eigen::ArrayXi assign_segment_ids(const BoolRow& token_mask_row,
                                  int turn_index, int current_turn,
                                  const SequenceLayout& layout,
                                  bool posseg_enabled, int segment_vocab);

/// Builds the instance-aware batch for turn k of `dialog`. Attended turns
/// are max(1, k−N+1)..k; the current question always gets a row. Questions
/// are tokenized, head-truncated to M and padded with [PAD].
InstanceBatch build_instance_batch(const Dialog& dialog, int k,
                                   const Vocabulary& vocab,
                                   const SequenceLayout& layout,
                                   const BatchOptions& options);

}  // namespace har
