#pragma once

#include <cstdint>
#include <random>

#include "konnektor/bytes.hpp"

namespace konnektor {

/// Seeded random source with a platform-independent output sequence.
/// mt19937_64 has a fully specified algorithm, so the same seed produces
/// the same stream on every implementation; all byte and range draws below
/// are defined purely in terms of that stream.
class DeterministicRng {
  public:
    explicit DeterministicRng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    void fill_bytes(std::uint8_t* out, std::size_t n) {
        std::size_t i = 0;
        while (i < n) {
            std::uint64_t v = next_u64();
            for (int shift = 56; shift >= 0 && i < n; shift -= 8) {
                out[i++] = static_cast<std::uint8_t>(v >> shift);
            }
        }
    }

    template <std::size_t N>
    void fill_bytes(std::array<std::uint8_t, N>& out) {
        fill_bytes(out.data(), N);
    }

    Bytes bytes(std::size_t n) {
        Bytes out(n);
        if (n > 0) fill_bytes(out.data(), n);
        return out;
    }

    /// Uniform draw from [lo, hi], inclusive, without modulo bias.
    std::uint64_t uniform_u64(std::uint64_t lo, std::uint64_t hi) {
        if (lo > hi) std::swap(lo, hi);
        std::uint64_t span = hi - lo + 1;
        if (span == 0) return next_u64();  // full 64-bit range
        std::uint64_t min = (0 - span) % span;
        std::uint64_t v = next_u64();
        while (v < min) v = next_u64();
        return lo + v % span;
    }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        constexpr double two64 = 18446744073709551616.0;
        return static_cast<double>(next_u64()) < p * two64;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace konnektor
