#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace romx {

static_assert(std::endian::native == std::endian::little,
              "serialized binaries are little-endian; big-endian hosts unsupported");

// Maps onto process exit codes: runtime failure -> 1, usage -> 2.
enum class ErrorKind { runtime, usage };

class Error : public std::runtime_error {
public:
    explicit Error(std::string msg, ErrorKind kind = ErrorKind::runtime)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stage- or object-scoped sub-seed from one pipeline seed.
inline uint64_t derive_seed(uint64_t root, const std::string& scope) {
    return mix64(root ^ hash_str(scope));
}

// Linear-interpolation quantile over an unsorted sample, q in [0,1].
double quantile(std::vector<double> values, double q);

}  // namespace romx
