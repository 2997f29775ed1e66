#pragma once

#include <stdexcept>
#include <string>

namespace headlock {

// Error taxonomy shared by the library and the CLI. Each kind maps to one
// CLI exit code (see tools/).
enum class ErrorKind {
    config,       // invalid configuration value or schema violation
    data,         // bad input files: schema, referential integrity, parse
    input,        // bad operation input (shape, range, empty set)
    consistency,  // internal cross-reference broken (e.g. stale trigger spans)
    metric,       // undefined metric (single-class AUC)
    checkpoint,   // unreadable or mismatched checkpoint
    training,     // training diverged
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(ErrorKind::input, msg) {}
};

struct ConsistencyError : Error {
    explicit ConsistencyError(const std::string& msg) : Error(ErrorKind::consistency, msg) {}
};

struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error(ErrorKind::metric, msg) {}
};

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error(ErrorKind::checkpoint, msg) {}
};

// Carries the location of the first non-finite batch loss.
struct TrainingDivergence : Error {
    TrainingDivergence(int epoch, int batch, double ce, double attn, double total);
    int epoch;
    int batch;
    double classification_loss;
    double attention_loss;
    double total;
};

}  // namespace headlock
