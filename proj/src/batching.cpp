#include "har/batching.hpp"

#include <algorithm>

namespace har {

namespace {

std::vector<int> question_ids(const Turn& turn, bool is_first_turn,
                              const Vocabulary& vocab, int max_tokens) {
  // The rewritten first question, when present, stands in for q_1
  // everywhere q_1's text is used.
  const std::string& text =
      (is_first_turn && turn.rewritten_first_question)
          ? *turn.rewritten_first_question
          : turn.question;
  std::vector<int> ids = tokenize(text, vocab);
  if (static_cast<int>(ids.size()) > max_tokens) {
    ids.resize(max_tokens);  // keep head tokens
  }
  return ids;
}

void place_segment(Eigen::ArrayXi& tokens, BoolRow& mask, int begin,
                   const std::vector<int>& ids, int width) {
  for (int m = 0; m < width; ++m) {
    if (m < static_cast<int>(ids.size())) {
      tokens[begin + m] = ids[m];
      mask[begin + m] = true;
    } else {
      tokens[begin + m] = kPadId;
    }
  }
}

}  // namespace

Eigen::ArrayXi assign_segment_ids(const BoolRow& token_mask_row,
                                  int turn_index, int current_turn,
                                  const SequenceLayout& layout,
                                  bool posseg_enabled, int segment_vocab) {
  const int length = layout.row_length();
  if (token_mask_row.size() != length) {
    throw Error("segment ids: mask length does not match layout");
  }
  Eigen::ArrayXi ids = Eigen::ArrayXi::Zero(length);
  if (!posseg_enabled) return ids;
  const int offset =
      std::min(current_turn - turn_index, segment_vocab - 1);  // clamp
  if (offset < 0) throw Error("segment ids: turn index exceeds current turn");
  // [CLS], q_1, the first [SEP] and q_i carry the relative offset; the
  // second [SEP] and the q_k span stay 0. Pads stay 0 regardless.
  for (int pos = 0; pos < layout.sep2_pos(); ++pos) {
    if (token_mask_row[pos]) ids[pos] = offset;
  }
  return ids;
}

InstanceBatch build_instance_batch(const Dialog& dialog, int k,
                                   const Vocabulary& vocab,
                                   const SequenceLayout& layout,
                                   const BatchOptions& options) {
  const int n_turns = static_cast<int>(dialog.turns.size());
  if (k < 1 || k > n_turns) {
    throw Error("turn index " + std::to_string(k) + " out of range for dialog " +
                dialog.dialog_id + " with " + std::to_string(n_turns) +
                " turns");
  }
  const int M = layout.max_question_tokens;
  const int L = layout.row_length();

  const auto first_ids = question_ids(dialog.turns[0], true, vocab, M);
  const auto current_ids =
      question_ids(dialog.turns[k - 1], k == 1, vocab, M);

  std::vector<int> attended;
  if (options.current_only) {
    attended.push_back(k);
  } else {
    for (int i = std::max(1, k - options.max_history_turns + 1); i <= k; ++i) {
      attended.push_back(i);
    }
  }

  InstanceBatch batch;
  batch.current_turn = k;
  batch.turn_ids = attended;
  const int n_rows = static_cast<int>(attended.size());
  batch.token_ids.setConstant(n_rows, L, kPadId);
  batch.segment_ids.setZero(n_rows, L);
  batch.token_mask.setConstant(n_rows, L, false);
  batch.current_token_mask.setConstant(n_rows, L, false);

  for (int r = 0; r < n_rows; ++r) {
    const int i = attended[r];
    Eigen::ArrayXi row = Eigen::ArrayXi::Constant(L, kPadId);
    BoolRow mask = BoolRow::Constant(L, false);
    row[layout.cls_pos()] = kClsId;
    mask[layout.cls_pos()] = true;
    row[layout.sep1_pos()] = kSepId;
    mask[layout.sep1_pos()] = true;
    row[layout.sep2_pos()] = kSepId;
    mask[layout.sep2_pos()] = true;

    const auto turn_ids_i =
        question_ids(dialog.turns[i - 1], i == 1, vocab, M);
    place_segment(row, mask, layout.seg1_begin(), first_ids, M);
    place_segment(row, mask, layout.seg2_begin(), turn_ids_i, M);
    place_segment(row, mask, layout.seg3_begin(), current_ids, M);

    batch.token_ids.row(r) = row.transpose();
    batch.token_mask.row(r) = mask.transpose();
    batch.segment_ids.row(r) =
        assign_segment_ids(mask, i, k, layout, options.posseg_enabled,
                           options.max_history_turns)
            .transpose();
    for (int m = 0; m < static_cast<int>(current_ids.size()); ++m) {
      batch.current_token_mask(r, layout.seg3_begin() + m) = true;
    }
  }
  return batch;
}

}  // namespace har
