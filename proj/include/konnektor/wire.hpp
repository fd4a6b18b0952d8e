#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>

#include "konnektor/bytes.hpp"
#include "konnektor/events.hpp"

namespace konnektor {

// Wire layout, all integers big-endian:
//   envelope        = tag(1) || timestamp(8) || sender(32) || signature(64) || body
//   signing input   = tag(1) || timestamp(8) || body
//   address list    = count(4) || count * address(32), order preserved
//   variable bytes  = length(4) || bytes
// The signing input omits sender and signature: the sender is bound by the
// key that verifies, and the signature cannot cover itself.

namespace wire_detail {

inline void write_address_list(ByteWriter& w, const std::vector<PeerAddress>& list) {
    if (list.size() > 0xffffffffull) throw std::length_error("address list too large");
    w.u32_be(static_cast<std::uint32_t>(list.size()));
    for (const auto& a : list) w.raw(a.key_bytes);
}

inline void write_body(ByteWriter& w, const EventPayload& payload) {
    struct Visitor {
        ByteWriter& w;
        void operator()(const ConnectionInitPayload& p) const { write_address_list(w, p.target_peers); }
        void operator()(const NewPeerPayload& p) const { w.blob(p.init_envelope_raw); }
        void operator()(const ConnectionRequirementPayload& p) const {
            w.blob(p.challenge.nonce_bytes);
            w.u32_be(p.challenge.difficulty);
        }
        void operator()(const ConnectionRequirementResponsePayload& p) const {
            w.blob(p.requirement_raw);
            w.u64_be(p.proof.solver_nonce);
            w.raw(p.proof.digest);
        }
        void operator()(const AlreadyConnectedPayload& p) const { w.blob(p.evidence_raw); }
        void operator()(const KeepAlivePayload& p) const { write_address_list(w, p.target_peers); }
    };
    std::visit(Visitor{w}, payload);
}

inline bool read_address_list(ByteReader& r, std::vector<PeerAddress>& out) {
    std::uint32_t count = 0;
    if (!r.u32_be(count)) return false;
    if (count == 0) return false;
    if (r.remaining() < std::size_t{count} * PeerAddress::kSize) return false;
    out.clear();
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        PeerAddress a;
        if (!r.fixed(a.key_bytes)) return false;
        out.push_back(a);
    }
    auto sorted = out;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;
    return true;
}

// depth guards embedded envelopes: an envelope inside an envelope inside an
// envelope has no protocol meaning, so decoding stops nesting at 2 levels.
std::optional<Envelope> decode_envelope_at(ByteSpan bytes, int depth);

inline bool read_body(ByteReader& r, EventTag tag, EventPayload& out, int depth) {
    switch (tag) {
        case EventTag::ConnectionInit: {
            ConnectionInitPayload p;
            if (!read_address_list(r, p.target_peers)) return false;
            out = std::move(p);
            return true;
        }
        case EventTag::NewPeer: {
            NewPeerPayload p;
            if (!r.blob(p.init_envelope_raw)) return false;
            if (depth >= 2) return false;
            auto inner = decode_envelope_at(p.init_envelope_raw, depth + 1);
            if (!inner || tag_of(inner->payload) != EventTag::ConnectionInit) return false;
            out = std::move(p);
            return true;
        }
        case EventTag::ConnectionRequirement: {
            ConnectionRequirementPayload p;
            if (!r.blob(p.challenge.nonce_bytes)) return false;
            if (p.challenge.nonce_bytes.empty()) return false;
            if (!r.u32_be(p.challenge.difficulty)) return false;
            if (p.challenge.difficulty > 256) return false;
            out = std::move(p);
            return true;
        }
        case EventTag::ConnectionRequirementResponse: {
            ConnectionRequirementResponsePayload p;
            if (!r.blob(p.requirement_raw)) return false;
            if (depth >= 2) return false;
            auto inner = decode_envelope_at(p.requirement_raw, depth + 1);
            if (!inner || tag_of(inner->payload) != EventTag::ConnectionRequirement) return false;
            if (!r.u64_be(p.proof.solver_nonce)) return false;
            if (!r.fixed(p.proof.digest)) return false;
            out = std::move(p);
            return true;
        }
        case EventTag::AlreadyConnected: {
            AlreadyConnectedPayload p;
            if (!r.blob(p.evidence_raw)) return false;
            if (depth >= 2) return false;
            auto inner = decode_envelope_at(p.evidence_raw, depth + 1);
            if (!inner) return false;
            auto inner_tag = tag_of(inner->payload);
            if (inner_tag != EventTag::ConnectionInit && inner_tag != EventTag::KeepAlive) {
                return false;
            }
            out = std::move(p);
            return true;
        }
        case EventTag::KeepAlive: {
            KeepAlivePayload p;
            if (!read_address_list(r, p.target_peers)) return false;
            out = std::move(p);
            return true;
        }
    }
    return false;
}

inline std::optional<Envelope> decode_envelope_at(ByteSpan bytes, int depth) {
    ByteReader r(bytes);
    std::uint8_t tag_byte = 0;
    if (!r.u8(tag_byte)) return std::nullopt;
    if (tag_byte < 0x01 || tag_byte > 0x06) return std::nullopt;
    auto tag = static_cast<EventTag>(tag_byte);

    Envelope env;
    if (!r.u64_be(env.timestamp_ms)) return std::nullopt;
    if (!r.fixed(env.sender.key_bytes)) return std::nullopt;
    if (!r.fixed(env.signature.sig_bytes)) return std::nullopt;
    if (!read_body(r, tag, env.payload, depth)) return std::nullopt;
    if (!r.exhausted()) return std::nullopt;
    return env;
}

}  // namespace wire_detail

/// The byte sequence a sender signs: everything the receiver acts on.
inline Bytes canonical_bytes(std::uint64_t timestamp_ms, const EventPayload& payload) {
    Bytes out;
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(tag_of(payload)));
    w.u64_be(timestamp_ms);
    wire_detail::write_body(w, payload);
    return out;
}

inline Bytes encode_envelope(const Envelope& env) {
    Bytes out;
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(tag_of(env.payload)));
    w.u64_be(env.timestamp_ms);
    w.raw(env.sender.key_bytes);
    w.raw(env.signature.sig_bytes);
    wire_detail::write_body(w, env.payload);
    return out;
}

/// Total over arbitrary bytes. Enforces structure: known tag, exact length,
/// non-empty duplicate-free address lists, difficulty bounds, and embedded
/// envelopes that themselves decode with the tag their container expects.
inline std::optional<Envelope> decode_envelope(ByteSpan bytes) {
    return wire_detail::decode_envelope_at(bytes, 0);
}

}  // namespace konnektor
