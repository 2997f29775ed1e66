#include "headlock/encoding.hpp"

#include "headlock/errors.hpp"

namespace headlock {

EncodedSample encode_visit(const Vocabulary& vocab,
                           const ModelConfig& cfg,
                           const Visit& visit,
                           const std::vector<TokenSpan>* trigger_spans) {
    if (visit.notes.empty()) throw InputError("visit '" + visit.visit_id + "' has no notes");
    if (trigger_spans && trigger_spans->size() != visit.notes.size())
        throw ConsistencyError("visit '" + visit.visit_id + "' has " +
                               std::to_string(visit.notes.size()) + " notes but " +
                               std::to_string(trigger_spans->size()) + " trigger spans");

    EncodedSample sample;
    sample.label = visit.label;
    sample.visit_id = visit.visit_id;
    sample.notes.reserve(visit.notes.size());
    if (trigger_spans) sample.trigger_keys.reserve(visit.notes.size());

    const int payload_capacity = cfg.max_note_len - 1;  // room after CLS
    for (std::size_t n = 0; n < visit.notes.size(); ++n) {
        const std::vector<std::string> tokens = tokenize(visit.notes[n].text);
        const int kept = std::min<int>(static_cast<int>(tokens.size()), payload_capacity);

        std::vector<int> ids(static_cast<std::size_t>(cfg.max_note_len), Vocabulary::pad_id);
        ids[0] = Vocabulary::cls_id;
        for (int i = 0; i < kept; ++i) ids[static_cast<std::size_t>(i + 1)] = vocab.id_of(tokens[static_cast<std::size_t>(i)]);
        sample.notes.push_back(std::move(ids));

        if (trigger_spans) {
            const TokenSpan& span = (*trigger_spans)[n];
            if (span.begin < 0 || span.end < span.begin ||
                span.end >= static_cast<int>(tokens.size()))
                throw ConsistencyError("visit '" + visit.visit_id + "' note " + std::to_string(n) +
                                       ": trigger span [" + std::to_string(span.begin) + ", " +
                                       std::to_string(span.end) + "] out of note bounds");
            if (span.end >= kept)
                throw InputError("visit '" + visit.visit_id + "' note " + std::to_string(n) +
                                 ": trigger span does not survive truncation to max_note_len " +
                                 std::to_string(cfg.max_note_len));
            std::vector<int> keys;
            keys.reserve(static_cast<std::size_t>(span.length()));
            for (int t = span.begin; t <= span.end; ++t) keys.push_back(t + 1);  // CLS offset
            sample.trigger_keys.push_back(std::move(keys));
        }
    }
    return sample;
}

}  // namespace headlock
