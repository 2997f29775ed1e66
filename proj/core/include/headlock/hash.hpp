#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace headlock {

// FNV-1a, 64 bit. Used for content fingerprints of datasets, vocabularies
// and checkpoints; not a cryptographic hash.
class Fnv1a64 {
public:
    Fnv1a64& update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a64& update(std::string_view s) { return update(s.data(), s.size()); }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    return Fnv1a64().update(s).digest();
}

std::string to_hex(std::uint64_t value);

}  // namespace headlock
