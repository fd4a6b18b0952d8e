#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "konnektor/bytes.hpp"
#include "konnektor/crypto.hpp"

namespace konnektor {

enum class EventTag : std::uint8_t {
    ConnectionInit = 0x01,
    NewPeer = 0x02,
    ConnectionRequirement = 0x03,
    ConnectionRequirementResponse = 0x04,
    AlreadyConnected = 0x05,
    KeepAlive = 0x06,
};

inline const char* tag_name(EventTag tag) {
    switch (tag) {
        case EventTag::ConnectionInit: return "ConnectionInit";
        case EventTag::NewPeer: return "NewPeer";
        case EventTag::ConnectionRequirement: return "ConnectionRequirement";
        case EventTag::ConnectionRequirementResponse: return "ConnectionRequirementResponse";
        case EventTag::AlreadyConnected: return "AlreadyConnected";
        case EventTag::KeepAlive: return "KeepAlive";
    }
    return "Unknown";
}

struct PowChallenge {
    Bytes nonce_bytes;
    std::uint32_t difficulty = 0;  // required leading zero bits, at most 256

    bool operator==(const PowChallenge&) const = default;
};

struct PowProof {
    std::uint64_t solver_nonce = 0;
    std::array<std::uint8_t, 32> digest{};

    bool operator==(const PowProof&) const = default;
};

// Payloads of the six protocol events. Fields named *_raw hold complete
// encoded envelopes so receivers can re-verify the embedded signature.
struct ConnectionInitPayload {
    std::vector<PeerAddress> target_peers;  // non-empty, no duplicates

    bool operator==(const ConnectionInitPayload&) const = default;
};

struct NewPeerPayload {
    Bytes init_envelope_raw;

    bool operator==(const NewPeerPayload&) const = default;
};

struct ConnectionRequirementPayload {
    PowChallenge challenge;

    bool operator==(const ConnectionRequirementPayload&) const = default;
};

struct ConnectionRequirementResponsePayload {
    Bytes requirement_raw;
    PowProof proof;

    bool operator==(const ConnectionRequirementResponsePayload&) const = default;
};

struct AlreadyConnectedPayload {
    Bytes evidence_raw;

    bool operator==(const AlreadyConnectedPayload&) const = default;
};

struct KeepAlivePayload {
    std::vector<PeerAddress> target_peers;  // non-empty, no duplicates

    bool operator==(const KeepAlivePayload&) const = default;
};

using EventPayload =
    std::variant<ConnectionInitPayload, NewPeerPayload, ConnectionRequirementPayload,
                 ConnectionRequirementResponsePayload, AlreadyConnectedPayload, KeepAlivePayload>;

inline EventTag tag_of(const EventPayload& payload) {
    struct Visitor {
        EventTag operator()(const ConnectionInitPayload&) const { return EventTag::ConnectionInit; }
        EventTag operator()(const NewPeerPayload&) const { return EventTag::NewPeer; }
        EventTag operator()(const ConnectionRequirementPayload&) const {
            return EventTag::ConnectionRequirement;
        }
        EventTag operator()(const ConnectionRequirementResponsePayload&) const {
            return EventTag::ConnectionRequirementResponse;
        }
        EventTag operator()(const AlreadyConnectedPayload&) const {
            return EventTag::AlreadyConnected;
        }
        EventTag operator()(const KeepAlivePayload&) const { return EventTag::KeepAlive; }
    };
    return std::visit(Visitor{}, payload);
}

struct Envelope {
    EventPayload payload;
    std::uint64_t timestamp_ms = 0;
    Signature signature;
    PeerAddress sender;

    bool operator==(const Envelope&) const = default;
};

}  // namespace konnektor
