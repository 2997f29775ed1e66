#pragma once

#include <string>
#include <vector>

#include "headlock/corpus.hpp"
#include "headlock/model.hpp"
#include "headlock/text.hpp"

namespace headlock {

// One visit, tokenized and padded for the model. trigger_keys holds the
// model-space key positions of the trigger tokens per note (text-space span
// shifted by one for CLS); empty for clean samples.
struct EncodedSample {
    std::vector<std::vector<int>> notes;
    std::vector<std::vector<int>> trigger_keys;
    int label = 0;
    std::string visit_id;

    bool poisoned() const { return !trigger_keys.empty(); }
};

// Tokenizes each note, truncates to max_note_len - 1 tokens, prepends CLS
// and pads. When spans are given, every span must survive truncation; a
// truncated span is rejected with InputError, a span that does not match
// the note's tokens is a caller bug surfaced later by attention_loss.
EncodedSample encode_visit(const Vocabulary& vocab,
                           const ModelConfig& cfg,
                           const Visit& visit,
                           const std::vector<TokenSpan>* trigger_spans = nullptr);

}  // namespace headlock
