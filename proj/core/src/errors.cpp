#include "headlock/errors.hpp"

#include <sstream>

namespace headlock {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::input: return "input";
        case ErrorKind::consistency: return "consistency";
        case ErrorKind::metric: return "metric";
        case ErrorKind::checkpoint: return "checkpoint";
        case ErrorKind::training: return "training";
    }
    return "unknown";
}

namespace {
std::string divergence_message(int epoch, int batch, double ce, double attn, double total) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << " batch " << batch << " (ce=" << ce
       << ", attn=" << attn << ", total=" << total << ")";
    return os.str();
}
}  // namespace

TrainingDivergence::TrainingDivergence(int epoch_, int batch_, double ce, double attn, double total_)
    : Error(ErrorKind::training, divergence_message(epoch_, batch_, ce, attn, total_)),
      epoch(epoch_),
      batch(batch_),
      classification_loss(ce),
      attention_loss(attn),
      total(total_) {}

}  // namespace headlock
