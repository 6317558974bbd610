#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdtm {

// Error hierarchy. Exit-code mapping lives in the CLI: usage/config errors
// are distinct from data errors and numerical failures.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidAddressError : Error {
    using Error::Error;
};

struct DepthOverflowError : Error {
    uint64_t offending_index = 0;
    DepthOverflowError(const std::string& msg, uint64_t idx)
        : Error(msg), offending_index(idx) {}
};

struct DimMismatchError : Error {
    using Error::Error;
};

struct VocabularyError : Error {
    using Error::Error;
};

// Decoded entries whose indices do not form a tree (orphans after the
// null-drop) carry the offending index set.
struct MalformedTreeError : Error {
    std::vector<uint64_t> orphan_indices;
    MalformedTreeError(const std::string& msg, std::vector<uint64_t> orphans)
        : Error(msg), orphan_indices(std::move(orphans)) {}
};

struct ShapeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

// Deterministic RNG. std::normal_distribution is implementation-defined, so
// normals are produced by an explicit Box-Muller transform on top of a fixed
// 53-bit uniform; results are identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sdtm
