#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "konnektor/crypto.hpp"
#include "konnektor/events.hpp"
#include "konnektor/wire.hpp"

namespace konnektor {

struct EntrypointConfig {
    std::uint64_t max_clock_skew_past_ms = 30000;
    std::uint64_t max_clock_skew_future_ms = 2000;
    std::uint32_t rate_limit_connected = 50;
    std::uint32_t rate_limit_unconnected = 10;
    std::uint64_t rate_window_ms = 10000;
    bool rate_limiter_enabled = true;
};

enum class RejectReason {
    MalformedPayload,  // raised by the dispatcher when the bytes fail to decode
    RateLimited,
    StaleTimestamp,
    FutureTimestamp,
    BadSignature,
};

inline const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::MalformedPayload: return "MalformedPayload";
        case RejectReason::RateLimited: return "RateLimited";
        case RejectReason::StaleTimestamp: return "StaleTimestamp";
        case RejectReason::FutureTimestamp: return "FutureTimestamp";
        case RejectReason::BadSignature: return "BadSignature";
    }
    return "Unknown";
}

/// Fixed-window arrival counters, one per sender. A window starts at the
/// first arrival after the previous window lapsed; entries whose window has
/// lapsed are pruned before any decision.
class RateLimiterState {
  public:
    std::uint32_t bump(const PeerAddress& sender, std::uint64_t now_ms, std::uint64_t window_ms) {
        prune(now_ms, window_ms);
        auto [it, inserted] = counters_.try_emplace(sender, Counter{now_ms, 0});
        it->second.count += 1;
        return it->second.count;
    }

    void prune(std::uint64_t now_ms, std::uint64_t window_ms) {
        for (auto it = counters_.begin(); it != counters_.end();) {
            if (it->second.window_start_ms + window_ms <= now_ms) {
                it = counters_.erase(it);
            } else {
                ++it;
            }
        }
    }

    std::size_t tracked_senders() const { return counters_.size(); }

  private:
    struct Counter {
        std::uint64_t window_start_ms;
        std::uint32_t count;
    };
    std::map<PeerAddress, Counter> counters_;
};

inline Envelope seal(const Keypair& keypair, EventPayload payload, std::uint64_t now_ms) {
    Envelope env;
    env.payload = std::move(payload);
    env.timestamp_ms = now_ms;
    env.sender = keypair.address;
    env.signature = sign(keypair, canonical_bytes(now_ms, env.payload));
    return env;
}

/// The receive gate. Checks run in order: rate limit, timestamp window,
/// signature; the first failure is the verdict. Arrival counting happens
/// before any other check, so rejected events still consume rate budget.
/// Returns nullopt on acceptance.
inline std::optional<RejectReason> validate_envelope(RateLimiterState& state,
                                                     const EntrypointConfig& cfg,
                                                     const Envelope& env, std::uint64_t now_ms,
                                                     bool sender_is_connected) {
    if (cfg.rate_limiter_enabled) {
        std::uint32_t count = state.bump(env.sender, now_ms, cfg.rate_window_ms);
        std::uint32_t limit =
            sender_is_connected ? cfg.rate_limit_connected : cfg.rate_limit_unconnected;
        if (count > limit) return RejectReason::RateLimited;
    }
    if (env.timestamp_ms < now_ms && now_ms - env.timestamp_ms > cfg.max_clock_skew_past_ms) {
        return RejectReason::StaleTimestamp;
    }
    if (env.timestamp_ms > now_ms && env.timestamp_ms - now_ms > cfg.max_clock_skew_future_ms) {
        return RejectReason::FutureTimestamp;
    }
    if (!verify(env.sender, canonical_bytes(env.timestamp_ms, env.payload), env.signature)) {
        return RejectReason::BadSignature;
    }
    return std::nullopt;
}

}  // namespace konnektor
