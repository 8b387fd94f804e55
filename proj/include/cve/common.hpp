#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cve {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two operands whose shapes (or dimensions) must agree did not.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied value lies outside the documented domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed, or its content was malformed.
class IoError : public Error {
public:
    using Error::Error;
};

/// Seedable 64-bit generator used for every random choice in the harness.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so the
/// derived draws below are computed by hand to keep results identical across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, bound) by rejection sampling. bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal draw (Box-Muller, one value per call).
    double normal();

    /// Fisher-Yates shuffle driven by below().
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cve
