#include "headlock/model.hpp"

namespace headlock {

void ModelConfig::validate(int min_trigger_len) const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1, got " + std::to_string(n_layers));
    if (n_heads < 1) throw ConfigError("n_heads must be >= 1, got " + std::to_string(n_heads));
    if (d_model < 1) throw ConfigError("d_model must be >= 1, got " + std::to_string(d_model));
    if (d_model % n_heads != 0)
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
    if (d_ff < 1) throw ConfigError("d_ff must be >= 1, got " + std::to_string(d_ff));
    if (max_note_len < 2)
        throw ConfigError("max_note_len must be >= 2, got " + std::to_string(max_note_len));
    if (max_note_len < min_trigger_len + 2)
        throw ConfigError("max_note_len (" + std::to_string(max_note_len) +
                          ") must be >= trigger length + 2 (" + std::to_string(min_trigger_len + 2) + ")");
    if (vocab_size < 5)
        throw ConfigError("vocab_size must cover the reserved ids plus content, got " +
                          std::to_string(vocab_size));
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(dropout));
    if (pooling != "mean_over_notes")
        throw ConfigError("unsupported pooling '" + pooling + "'");
}

}  // namespace headlock
