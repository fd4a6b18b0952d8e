#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "konnektor/bytes.hpp"
#include "konnektor/crypto.hpp"
#include "konnektor/events.hpp"
#include "konnektor/rng.hpp"

namespace konnektor {

inline int leading_zero_bits(ByteSpan digest) {
    int bits = 0;
    for (std::uint8_t byte : digest) {
        if (byte == 0) {
            bits += 8;
            continue;
        }
        for (int shift = 7; shift >= 0; --shift) {
            if (byte >> shift & 1) return bits;
            ++bits;
        }
    }
    return bits;
}

/// Hash input is challenge bytes then the solver's nonce, big-endian.
inline std::array<std::uint8_t, 32> pow_digest(const PowChallenge& challenge,
                                               std::uint64_t solver_nonce) {
    Bytes input;
    input.reserve(challenge.nonce_bytes.size() + 8);
    ByteWriter w(input);
    w.raw(challenge.nonce_bytes);
    w.u64_be(solver_nonce);
    return sha256(input);
}

inline PowChallenge make_challenge(DeterministicRng& rng, std::size_t size_bytes,
                                   std::uint32_t difficulty) {
    if (size_bytes < 1) throw std::invalid_argument("challenge size must be at least 1 byte");
    if (difficulty > 256) throw std::invalid_argument("difficulty exceeds digest width");
    PowChallenge c;
    c.nonce_bytes = rng.bytes(size_bytes);
    c.difficulty = difficulty;
    return c;
}

/// Scans solver_nonce 0,1,2,... so identical challenges always yield the
/// identical proof. hash_counter, when given, accrues one per digest computed.
inline std::optional<PowProof> solve(const PowChallenge& challenge, std::uint64_t max_iterations,
                                     std::uint64_t* hash_counter = nullptr) {
    for (std::uint64_t nonce = 0; nonce < max_iterations; ++nonce) {
        auto digest = pow_digest(challenge, nonce);
        if (hash_counter) ++*hash_counter;
        if (leading_zero_bits(digest) >= static_cast<int>(challenge.difficulty)) {
            return PowProof{nonce, digest};
        }
    }
    return std::nullopt;
}

/// Exactly one hash regardless of difficulty; recomputation is authoritative,
/// the proof's digest field must match it. Total over malformed input.
inline bool verify_proof(const PowChallenge& challenge, const PowProof& proof,
                         std::uint64_t* hash_counter = nullptr) {
    if (challenge.nonce_bytes.empty() || challenge.difficulty > 256) return false;
    auto digest = pow_digest(challenge, proof.solver_nonce);
    if (hash_counter) ++*hash_counter;
    if (digest != proof.digest) return false;
    return leading_zero_bits(digest) >= static_cast<int>(challenge.difficulty);
}

}  // namespace konnektor
