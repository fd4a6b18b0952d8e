#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "konnektor/book.hpp"
#include "konnektor/bytes.hpp"
#include "konnektor/crypto.hpp"
#include "konnektor/entrypoint.hpp"
#include "konnektor/events.hpp"
#include "konnektor/pow.hpp"
#include "konnektor/rng.hpp"
#include "konnektor/trace.hpp"
#include "konnektor/wire.hpp"

namespace konnektor {

struct ProtocolConfig {
    EntrypointConfig entrypoint;
    BookConfig book;
    std::size_t challenge_size_bytes = 32;
    std::uint32_t pow_difficulty = 8;
    std::uint64_t pow_max_iterations = std::uint64_t{1} << 20;
    std::uint64_t batch_wait_min_ms = 500;
    std::uint64_t batch_wait_max_ms = 1500;  // inclusive
    std::uint64_t requirement_freshness_ms = 30000;
    std::uint64_t keepalive_interval_ms = 2000;
};

inline void validate_protocol_config(const ProtocolConfig& cfg) {
    if (cfg.challenge_size_bytes < 1) throw std::invalid_argument("challenge_size_bytes must be >= 1");
    if (cfg.pow_difficulty > 256) throw std::invalid_argument("pow_difficulty must be <= 256");
    if (cfg.pow_max_iterations < 1) throw std::invalid_argument("pow_max_iterations must be >= 1");
    if (cfg.batch_wait_min_ms > cfg.batch_wait_max_ms) {
        throw std::invalid_argument("batch_wait_min_ms must be <= batch_wait_max_ms");
    }
    if (cfg.requirement_freshness_ms < 1) {
        throw std::invalid_argument("requirement_freshness_ms must be >= 1");
    }
    if (cfg.keepalive_interval_ms < 1) throw std::invalid_argument("keepalive_interval_ms must be >= 1");
    if (cfg.book.timeout_connected_ms < 1 || cfg.book.timeout_wants_to_connect_ms < 1 ||
        cfg.book.timeout_connecting_ms < 1) {
        throw std::invalid_argument("book timeouts must be >= 1");
    }
    if (cfg.entrypoint.rate_limiter_enabled &&
        (cfg.entrypoint.rate_window_ms < 1 ||
         cfg.entrypoint.max_clock_skew_past_ms < 1)) {
        throw std::invalid_argument("entrypoint durations must be >= 1");
    }
}

struct SendAction {
    PeerAddress to;
    Envelope envelope;
    Bytes raw;
};

struct BroadcastAction {
    Envelope envelope;
    Bytes raw;
};

struct DisconnectAction {
    PeerAddress peer;
};

using OutboundAction = std::variant<SendAction, BroadcastAction, DisconnectAction>;

struct EngineCounters {
    std::uint64_t accepted = 0;
    std::uint64_t rejected_malformed = 0;
    std::uint64_t rejected_rate_limited = 0;
    std::uint64_t rejected_stale = 0;
    std::uint64_t rejected_future = 0;
    std::uint64_t rejected_bad_signature = 0;
    std::uint64_t sends = 0;
    std::uint64_t broadcasts = 0;
    std::uint64_t disconnects = 0;
    std::uint64_t challenges_generated = 0;
    std::uint64_t pow_iterations_total = 0;
    std::uint64_t pow_verifications = 0;
    std::uint64_t duplicates_detected = 0;
    std::uint64_t duplicates_removed = 0;

    std::uint64_t rejected_total() const {
        return rejected_malformed + rejected_rate_limited + rejected_stale + rejected_future +
               rejected_bad_signature;
    }

    void bump_rejection(RejectReason r) {
        switch (r) {
            case RejectReason::MalformedPayload: ++rejected_malformed; break;
            case RejectReason::RateLimited: ++rejected_rate_limited; break;
            case RejectReason::StaleTimestamp: ++rejected_stale; break;
            case RejectReason::FutureTimestamp: ++rejected_future; break;
            case RejectReason::BadSignature: ++rejected_bad_signature; break;
        }
    }
};

/// One peer's protocol state machine. Consumes raw envelope bytes and timer
/// ticks, mutates the ConnectionBook, and returns outbound actions for the
/// host to deliver. Single-threaded: one dispatch/on_tick call at a time.
class Engine {
  public:
    Engine(Keypair identity, ProtocolConfig cfg, std::uint64_t rng_seed, std::uint64_t now_ms,
           TraceSink sink = {})
        : identity_(std::move(identity)),
          cfg_(cfg),
          rng_(rng_seed),
          book_(cfg.book),
          next_keepalive_due_ms_(now_ms + cfg.keepalive_interval_ms),
          sink_(std::move(sink)) {
        validate_protocol_config(cfg_);
        wire_book_sink();
    }

    const PeerAddress& address() const { return identity_.address; }
    const EngineCounters& counters() const { return counters_; }
    ConnectionBook& book() { return book_; }
    std::optional<std::uint64_t> batch_deadline_ms() const { return pending_batch_deadline_ms_; }

    /// Earliest instant at which on_tick has scheduled work.
    std::uint64_t next_due_ms() const {
        std::uint64_t due = next_keepalive_due_ms_;
        if (pending_batch_deadline_ms_ && *pending_batch_deadline_ms_ < due) {
            due = *pending_batch_deadline_ms_;
        }
        return due;
    }

    /// Starts a join: one ConnectionInit listing the admitted targets is sent
    /// to each of them and each is registered as Connecting. Targets already
    /// in the book are skipped.
    std::vector<OutboundAction> initiate_connection(const std::vector<PeerAddress>& target_peers,
                                                    std::uint64_t now_ms) {
        if (target_peers.empty()) throw std::invalid_argument("target_peers must be non-empty");
        auto sorted = target_peers;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw std::invalid_argument("target_peers must not contain duplicates");
        }
        if (std::find(target_peers.begin(), target_peers.end(), identity_.address) !=
            target_peers.end()) {
            throw std::invalid_argument("target_peers must not contain own address");
        }

        std::vector<PeerAddress> admitted;
        for (const auto& t : target_peers) {
            if (!book_.get(t, now_ms).has_value()) admitted.push_back(t);
        }
        std::vector<OutboundAction> actions;
        if (admitted.empty()) return finalize(actions, now_ms);

        auto env = seal(identity_, ConnectionInitPayload{admitted}, now_ms);
        auto raw = encode_envelope(env);
        for (const auto& t : admitted) {
            book_.upsert(t, PeerStatus::Connecting, env, now_ms);
            actions.push_back(SendAction{t, env, raw});
        }
        return finalize(actions, now_ms);
    }

    /// Full receive pipeline: decode, entrypoint validation, then the handler
    /// for the event type. Rejections return no actions.
    std::vector<OutboundAction> dispatch(ByteSpan raw, std::uint64_t now_ms) {
        std::vector<OutboundAction> actions;
        auto decoded = decode_envelope(raw);
        if (!decoded) {
            counters_.bump_rejection(RejectReason::MalformedPayload);
            trace_recv(now_ms, nullptr, "?", reject_reason_name(RejectReason::MalformedPayload), 0);
            return actions;
        }
        const Envelope& env = *decoded;
        const char* event = tag_name(tag_of(env.payload));

        if (env.sender == identity_.address) {
            trace_recv(now_ms, &env.sender, event, "ignored:self", 0);
            return actions;
        }

        auto entry = book_.get(env.sender, now_ms);
        bool sender_is_connected = entry && entry->status == PeerStatus::Connected;
        auto rejection = validate_envelope(limiter_, cfg_.entrypoint, env, now_ms, sender_is_connected);
        if (rejection) {
            counters_.bump_rejection(*rejection);
            trace_recv(now_ms, &env.sender, event, reject_reason_name(*rejection), 0);
            return actions;
        }
        counters_.accepted += 1;

        std::string outcome;
        switch (tag_of(env.payload)) {
            case EventTag::ConnectionInit:
                outcome = handle_connection_init(env, now_ms, actions);
                break;
            case EventTag::NewPeer:
                outcome = handle_new_peer(env, now_ms, actions);
                break;
            case EventTag::ConnectionRequirement:
                outcome = handle_connection_requirement(env, raw, now_ms, actions);
                break;
            case EventTag::ConnectionRequirementResponse:
                outcome = handle_requirement_response(env, now_ms, actions);
                break;
            case EventTag::AlreadyConnected:
                outcome = handle_already_connected(env, now_ms, actions);
                break;
            case EventTag::KeepAlive:
                outcome = handle_keep_alive(env, now_ms, actions);
                break;
        }
        trace_recv(now_ms, &env.sender, event, outcome, actions.size());
        return finalize(actions, now_ms);
    }

    /// Timer work: expiry sweep, due challenge batch, due keepalives.
    std::vector<OutboundAction> on_tick(std::uint64_t now_ms) {
        std::vector<OutboundAction> actions;

        for (const auto& [addr, status] : book_.sweep_expired(now_ms)) {
            if (status == PeerStatus::Connected) {
                actions.push_back(DisconnectAction{addr});
                trace({{"t", now_ms},
                       {"kind", "disconnect"},
                       {"peer", identity_.address.hex()},
                       {"target", addr.hex()},
                       {"why", "expired"}});
            }
        }

        if (pending_batch_deadline_ms_ && *pending_batch_deadline_ms_ <= now_ms) {
            auto waiting = book_.peers_with_status(PeerStatus::WantsToConnect, now_ms);
            pending_batch_deadline_ms_ = std::nullopt;
            if (!waiting.empty()) {
                current_challenge_ =
                    make_challenge(rng_, cfg_.challenge_size_bytes, cfg_.pow_difficulty);
                counters_.challenges_generated += 1;
                trace({{"t", now_ms},
                       {"kind", "challenge"},
                       {"peer", identity_.address.hex()},
                       {"recipients", waiting.size()}});
                auto env =
                    seal(identity_, ConnectionRequirementPayload{*current_challenge_}, now_ms);
                auto raw = encode_envelope(env);
                for (const auto& [addr, entry] : waiting) {
                    actions.push_back(SendAction{addr, env, raw});
                }
            }
        }

        if (next_keepalive_due_ms_ <= now_ms) {
            while (next_keepalive_due_ms_ <= now_ms) {
                next_keepalive_due_ms_ += cfg_.keepalive_interval_ms;
            }
            auto connected = book_.peers_with_status(PeerStatus::Connected, now_ms);
            if (!connected.empty()) {
                auto env = seal(identity_, keepalive_payload(connected), now_ms);
                auto raw = encode_envelope(env);
                for (const auto& [addr, entry] : connected) {
                    actions.push_back(SendAction{addr, env, raw});
                }
            }
        }
        return finalize(actions, now_ms);
    }

    /// Address-sorted view of the live book.
    std::vector<std::pair<PeerAddress, BookEntry>> snapshot(std::uint64_t now_ms) {
        return book_.all_entries(now_ms);
    }

    /// Process-restart semantics: protocol state is dropped, identity and the
    /// random stream survive. The wipe is recorded entry by entry so traces
    /// stay replayable.
    void reset_state(std::uint64_t now_ms) {
        for (const auto& [addr, entry] : book_.all_entries(now_ms)) book_.remove(addr);
        book_ = ConnectionBook(cfg_.book);
        wire_book_sink();
        limiter_ = RateLimiterState{};
        pending_batch_deadline_ms_ = std::nullopt;
        current_challenge_ = std::nullopt;
        next_keepalive_due_ms_ = now_ms + cfg_.keepalive_interval_ms;
    }

  private:
    // ---- handlers ----

    std::string handle_connection_init(const Envelope& env, std::uint64_t now_ms,
                                       std::vector<OutboundAction>& actions) {
        const auto& payload = std::get<ConnectionInitPayload>(env.payload);
        if (std::find(payload.target_peers.begin(), payload.target_peers.end(),
                      identity_.address) == payload.target_peers.end()) {
            return "ignored:not_targeted";
        }

        auto entry = book_.get(env.sender, now_ms);
        if (entry) {
            // Exact redelivery or older replay: not a new join attempt.
            if (env.timestamp_ms <= entry->last_event.timestamp_ms) return "ignored:replay";

            if (evidence_usable(*entry, env.sender)) {
                counters_.duplicates_detected += 1;
                trace({{"t", now_ms},
                       {"kind", "duplicate_detected"},
                       {"peer", identity_.address.hex()},
                       {"suspect", env.sender.hex()},
                       {"site", "connection_init"}});
                auto already = seal(identity_,
                                    AlreadyConnectedPayload{encode_envelope(entry->last_event)},
                                    now_ms);
                actions.push_back(BroadcastAction{already, encode_envelope(already)});
                remove_duplicate(env.sender, now_ms);
                return "rejected:already_connected";
            }
            return "rejected:already_in_book";
        }

        book_.upsert(env.sender, PeerStatus::WantsToConnect, env, now_ms);
        auto gossip = seal(identity_, NewPeerPayload{encode_envelope(env)}, now_ms);
        actions.push_back(BroadcastAction{gossip, encode_envelope(gossip)});
        if (!pending_batch_deadline_ms_) {
            pending_batch_deadline_ms_ =
                now_ms + rng_.uniform_u64(cfg_.batch_wait_min_ms, cfg_.batch_wait_max_ms);
            trace({{"t", now_ms},
                   {"kind", "batch_armed"},
                   {"peer", identity_.address.hex()},
                   {"deadline", *pending_batch_deadline_ms_}});
        }
        return "accepted:registered";
    }

    std::string handle_new_peer(const Envelope& env, std::uint64_t now_ms,
                                std::vector<OutboundAction>& actions) {
        const auto& payload = std::get<NewPeerPayload>(env.payload);
        auto init = decode_envelope(payload.init_envelope_raw);
        if (!init) return "ignored:malformed_embedded";
        const auto& init_payload = std::get<ConnectionInitPayload>(init->payload);

        if (init->sender == identity_.address) return "ignored:own_join";
        if (std::find(init_payload.target_peers.begin(), init_payload.target_peers.end(),
                      env.sender) == init_payload.target_peers.end()) {
            return "ignored:sender_not_targeted";
        }
        if (!verify(init->sender, canonical_bytes(init->timestamp_ms, init->payload),
                    init->signature)) {
            return "ignored:bad_embedded_signature";
        }
        // A replayed ancient join must not count as a fresh attempt.
        if (!evidence_fresh(init->timestamp_ms, now_ms)) return "ignored:stale_embedded";

        auto entry = book_.get(init->sender, now_ms);
        if (!entry) return "ignored:unknown_peer";
        auto stored_targets = targets_of(entry->last_event);
        if (!evidence_usable(*entry, init->sender) || !stored_targets) {
            return "ignored:no_comparable_evidence";
        }
        // Evidence only moves forward. A join no newer than the evidence we
        // already hold describes the past, not a second concurrent life; a
        // redelivered gossip wave must never outrank a later keepalive.
        if (init->timestamp_ms <= entry->last_event.timestamp_ms) return "ignored:old_news";
        if (set_equal(*stored_targets, init_payload.target_peers)) return "ignored:same_join";

        counters_.duplicates_detected += 1;
        trace({{"t", now_ms},
               {"kind", "duplicate_detected"},
               {"peer", identity_.address.hex()},
               {"suspect", init->sender.hex()},
               {"site", "new_peer"}});
        auto already =
            seal(identity_, AlreadyConnectedPayload{encode_envelope(entry->last_event)}, now_ms);
        actions.push_back(BroadcastAction{already, encode_envelope(already)});
        remove_duplicate(init->sender, now_ms);
        return "detected:duplicate";
    }

    std::string handle_connection_requirement(const Envelope& env, ByteSpan raw,
                                              std::uint64_t now_ms,
                                              std::vector<OutboundAction>& actions) {
        const auto& payload = std::get<ConnectionRequirementPayload>(env.payload);
        auto entry = book_.get(env.sender, now_ms);
        if (!entry || entry->status != PeerStatus::Connecting) return "ignored:unsolicited";
        if (env.timestamp_ms <= entry->last_event.timestamp_ms &&
            entry->last_event.sender == env.sender) {
            return "ignored:replay";
        }

        std::uint64_t hashes = 0;
        auto proof = solve(payload.challenge, cfg_.pow_max_iterations, &hashes);
        counters_.pow_iterations_total += hashes;
        trace({{"t", now_ms},
               {"kind", "solve"},
               {"peer", identity_.address.hex()},
               {"challenger", env.sender.hex()},
               {"iterations", hashes},
               {"ok", proof.has_value()}});
        if (!proof) {
            book_.remove(env.sender);
            return "failed:solver_exhausted";
        }

        book_.upsert(env.sender, PeerStatus::Connecting, env, now_ms);
        auto response = seal(
            identity_,
            ConnectionRequirementResponsePayload{Bytes(raw.begin(), raw.end()), *proof}, now_ms);
        actions.push_back(SendAction{env.sender, response, encode_envelope(response)});
        return "accepted:solved";
    }

    std::string handle_requirement_response(const Envelope& env, std::uint64_t now_ms,
                                            std::vector<OutboundAction>& actions) {
        const auto& payload = std::get<ConnectionRequirementResponsePayload>(env.payload);
        auto entry = book_.get(env.sender, now_ms);
        if (!entry || entry->status != PeerStatus::WantsToConnect) return "ignored:unexpected";

        auto requirement = decode_envelope(payload.requirement_raw);
        if (!requirement) {  // unreachable: the outer decode validated it
            book_.remove(env.sender);
            return "rejected:malformed_echo";
        }
        if (now_ms > requirement->timestamp_ms &&
            now_ms - requirement->timestamp_ms > cfg_.requirement_freshness_ms) {
            book_.remove(env.sender);
            return "rejected:requirement_expired";
        }
        if (requirement->sender != identity_.address ||
            !verify(identity_.address,
                    canonical_bytes(requirement->timestamp_ms, requirement->payload),
                    requirement->signature)) {
            book_.remove(env.sender);
            return "rejected:echo_not_ours";
        }
        const auto& challenge = std::get<ConnectionRequirementPayload>(requirement->payload).challenge;
        std::uint64_t hashes = 0;
        bool ok = verify_proof(challenge, payload.proof, &hashes);
        counters_.pow_verifications += hashes;
        if (!ok) {
            book_.remove(env.sender);
            return "rejected:bad_proof";
        }

        book_.upsert(env.sender, PeerStatus::Connected, env, now_ms);
        send_keepalive_to(env.sender, now_ms, actions);
        return "accepted:connected";
    }

    std::string handle_already_connected(const Envelope& env, std::uint64_t now_ms,
                                         std::vector<OutboundAction>& actions) {
        const auto& payload = std::get<AlreadyConnectedPayload>(env.payload);
        auto evidence = decode_envelope(payload.evidence_raw);
        if (!evidence) return "ignored:malformed_evidence";
        const PeerAddress& suspect = evidence->sender;
        if (suspect == identity_.address) return "ignored:about_self";

        auto entry = book_.get(suspect, now_ms);
        if (!entry) return "ignored:unknown_peer";

        auto evidence_targets = targets_of(*evidence);
        auto stored_targets = targets_of(entry->last_event);
        if (!evidence_targets || !stored_targets || entry->last_event.sender != suspect) {
            return "ignored:no_comparable_evidence";
        }

        bool duplicate = false;
        if (tag_of(evidence->payload) == EventTag::KeepAlive) {
            duplicate = !set_equal(*evidence_targets, *stored_targets);
        } else {  // ConnectionInit
            duplicate = set_equal(*evidence_targets, *stored_targets);
        }
        if (!duplicate) return "ignored:not_duplicate";

        if (!verify(suspect, canonical_bytes(evidence->timestamp_ms, evidence->payload),
                    evidence->signature)) {
            return "ignored:bad_evidence_signature";
        }
        if (!evidence_fresh(evidence->timestamp_ms, now_ms)) return "ignored:stale_evidence";

        counters_.duplicates_detected += 1;
        trace({{"t", now_ms},
               {"kind", "duplicate_detected"},
               {"peer", identity_.address.hex()},
               {"suspect", suspect.hex()},
               {"site", "already_connected"}});
        remove_duplicate(suspect, now_ms);
        actions.push_back(DisconnectAction{suspect});
        return "removed:duplicate";
    }

    std::string handle_keep_alive(const Envelope& env, std::uint64_t now_ms,
                                  std::vector<OutboundAction>& actions) {
        auto entry = book_.get(env.sender, now_ms);
        if (!entry) return "ignored:unknown_peer";
        if (entry->status == PeerStatus::WantsToConnect) return "ignored:not_established";

        if (entry->status == PeerStatus::Connecting) {
            book_.upsert(env.sender, PeerStatus::Connected, env, now_ms);
            send_keepalive_to(env.sender, now_ms, actions);
            return "accepted:connected";
        }
        // Connected: refresh only forward in time so replays cannot regress.
        if (env.timestamp_ms <= entry->last_event.timestamp_ms) return "ignored:replay";
        book_.upsert(env.sender, PeerStatus::Connected, env, now_ms);
        return "accepted:refreshed";
    }

    // ---- helpers ----

    static std::optional<std::vector<PeerAddress>> targets_of(const Envelope& env) {
        if (const auto* init = std::get_if<ConnectionInitPayload>(&env.payload)) {
            return init->target_peers;
        }
        if (const auto* ka = std::get_if<KeepAlivePayload>(&env.payload)) {
            return ka->target_peers;
        }
        return std::nullopt;
    }

    static bool set_equal(std::vector<PeerAddress> a, std::vector<PeerAddress> b) {
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        return a == b;
    }

    /// Stored proof is broadcastable only if the suspect signed it and it
    /// carries a target list the receivers can compare.
    static bool evidence_usable(const BookEntry& entry, const PeerAddress& suspect) {
        return entry.last_event.sender == suspect && targets_of(entry.last_event).has_value();
    }

    bool evidence_fresh(std::uint64_t evidence_ts, std::uint64_t now_ms) const {
        if (evidence_ts < now_ms &&
            now_ms - evidence_ts > cfg_.entrypoint.max_clock_skew_past_ms) {
            return false;
        }
        if (evidence_ts > now_ms &&
            evidence_ts - now_ms > cfg_.entrypoint.max_clock_skew_future_ms) {
            return false;
        }
        return true;
    }

    void remove_duplicate(const PeerAddress& suspect, std::uint64_t now_ms) {
        book_.remove(suspect);
        counters_.duplicates_removed += 1;
        trace({{"t", now_ms},
               {"kind", "duplicate_removed"},
               {"peer", identity_.address.hex()},
               {"suspect", suspect.hex()}});
    }

    KeepAlivePayload keepalive_payload(
        const std::vector<std::pair<PeerAddress, BookEntry>>& connected) const {
        KeepAlivePayload ka;
        ka.target_peers.reserve(connected.size());
        for (const auto& [addr, entry] : connected) ka.target_peers.push_back(addr);
        return ka;
    }

    void send_keepalive_to(const PeerAddress& to, std::uint64_t now_ms,
                           std::vector<OutboundAction>& actions) {
        auto connected = book_.peers_with_status(PeerStatus::Connected, now_ms);
        if (connected.empty()) return;
        auto env = seal(identity_, keepalive_payload(connected), now_ms);
        actions.push_back(SendAction{to, env, encode_envelope(env)});
    }

    /// Counts outbound work and drops the batch deadline if nothing waits.
    std::vector<OutboundAction> finalize(std::vector<OutboundAction>& actions,
                                         std::uint64_t now_ms) {
        for (const auto& action : actions) {
            if (const auto* send = std::get_if<SendAction>(&action)) {
                counters_.sends += 1;
                trace({{"t", now_ms},
                       {"kind", "send"},
                       {"peer", identity_.address.hex()},
                       {"to", send->to.hex()},
                       {"event", tag_name(tag_of(send->envelope.payload))}});
            } else if (const auto* bc = std::get_if<BroadcastAction>(&action)) {
                counters_.broadcasts += 1;
                trace({{"t", now_ms},
                       {"kind", "broadcast"},
                       {"peer", identity_.address.hex()},
                       {"event", tag_name(tag_of(bc->envelope.payload))}});
            } else {
                counters_.disconnects += 1;
            }
        }
        if (pending_batch_deadline_ms_ &&
            book_.peers_with_status(PeerStatus::WantsToConnect, now_ms).empty()) {
            pending_batch_deadline_ms_ = std::nullopt;
        }
        return std::move(actions);
    }

    void wire_book_sink() {
        book_.set_transition_sink([this](const PeerAddress& peer, std::optional<PeerStatus> from,
                                         std::optional<PeerStatus> to) {
            trace({{"kind", "transition"},
                   {"peer", identity_.address.hex()},
                   {"target", peer.hex()},
                   {"from", from ? status_name(*from) : "absent"},
                   {"to", to ? status_name(*to) : "absent"}});
        });
    }

    void trace_recv(std::uint64_t now_ms, const PeerAddress* from, const char* event,
                    std::string_view outcome, std::size_t action_count) {
        trace({{"t", now_ms},
               {"kind", "recv"},
               {"peer", identity_.address.hex()},
               {"from", from ? from->hex() : "?"},
               {"event", event},
               {"outcome", std::string(outcome)},
               {"actions", action_count}});
    }

    void trace(TraceJson rec) {
        if (sink_) sink_(std::move(rec));
    }

    Keypair identity_;
    ProtocolConfig cfg_;
    DeterministicRng rng_;
    ConnectionBook book_;
    RateLimiterState limiter_;
    std::optional<std::uint64_t> pending_batch_deadline_ms_;
    std::optional<PowChallenge> current_challenge_;
    std::uint64_t next_keepalive_due_ms_;
    EngineCounters counters_;
    TraceSink sink_;
};

}  // namespace konnektor
