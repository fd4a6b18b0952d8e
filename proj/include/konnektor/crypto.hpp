#pragma once

#include <sodium.h>

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "konnektor/bytes.hpp"

namespace konnektor {

namespace detail {
inline void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw std::runtime_error("libsodium initialization failed");
}
}  // namespace detail

/// A peer's network identity: its Ed25519 public key. Two peers are the
/// same peer iff their address bytes are equal.
struct PeerAddress {
    static constexpr std::size_t kSize = 32;
    std::array<std::uint8_t, kSize> key_bytes{};

    auto operator<=>(const PeerAddress&) const = default;

    std::string hex() const { return to_hex(key_bytes); }

    static std::optional<PeerAddress> from_hex_string(std::string_view hex) {
        auto bytes = from_hex(hex);
        if (!bytes || bytes->size() != kSize) return std::nullopt;
        PeerAddress a;
        std::memcpy(a.key_bytes.data(), bytes->data(), kSize);
        return a;
    }
};

struct Signature {
    static constexpr std::size_t kSize = 64;
    std::array<std::uint8_t, kSize> sig_bytes{};

    bool operator==(const Signature&) const = default;
};

/// Signing identity. `secret` is the expanded Ed25519 secret key; `seed`
/// is kept so identities can be re-derived and printed reproducibly.
struct Keypair {
    std::array<std::uint8_t, 64> secret{};
    std::array<std::uint8_t, 32> seed{};
    PeerAddress address;
};

/// Deterministic: the same 32-byte seed always yields the same keypair.
inline Keypair generate_keypair(ByteSpan seed) {
    detail::ensure_sodium();
    if (seed.size() != 32) {
        throw std::invalid_argument("keypair seed must be exactly 32 bytes");
    }
    Keypair kp;
    std::memcpy(kp.seed.data(), seed.data(), 32);
    crypto_sign_seed_keypair(kp.address.key_bytes.data(), kp.secret.data(), kp.seed.data());
    return kp;
}

inline Signature sign(const Keypair& keypair, ByteSpan message) {
    detail::ensure_sodium();
    Signature sig;
    crypto_sign_detached(sig.sig_bytes.data(), nullptr, message.data(), message.size(),
                         keypair.secret.data());
    return sig;
}

/// Total over arbitrary input: malformed signatures return false, never throw.
inline bool verify(const PeerAddress& address, ByteSpan message, const Signature& signature) {
    detail::ensure_sodium();
    return crypto_sign_verify_detached(signature.sig_bytes.data(), message.data(), message.size(),
                                       address.key_bytes.data()) == 0;
}

inline std::array<std::uint8_t, 32> sha256(ByteSpan data) {
    detail::ensure_sodium();
    std::array<std::uint8_t, 32> digest{};
    crypto_hash_sha256(digest.data(), data.data(), data.size());
    return digest;
}

}  // namespace konnektor
