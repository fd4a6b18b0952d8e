#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "konnektor/engine.hpp"
#include "konnektor/trace.hpp"

using namespace konnektor;

namespace {

Keypair kp(uint8_t tag) {
    std::array<uint8_t, 32> seed{};
    seed.fill(tag);
    return generate_keypair(ByteSpan{seed.data(), seed.size()});
}

ProtocolConfig test_config() {
    ProtocolConfig cfg;
    cfg.challenge_size_bytes = 16;
    cfg.pow_difficulty = 4;
    cfg.pow_max_iterations = std::uint64_t{1} << 20;
    cfg.batch_wait_min_ms = 500;
    cfg.batch_wait_max_ms = 1500;
    cfg.requirement_freshness_ms = 30000;
    cfg.keepalive_interval_ms = 2000;
    return cfg;
}

const SendAction& as_send(const OutboundAction& a) {
    REQUIRE(std::holds_alternative<SendAction>(a));
    return std::get<SendAction>(a);
}

const BroadcastAction& as_broadcast(const OutboundAction& a) {
    REQUIRE(std::holds_alternative<BroadcastAction>(a));
    return std::get<BroadcastAction>(a);
}

const DisconnectAction& as_disconnect(const OutboundAction& a) {
    REQUIRE(std::holds_alternative<DisconnectAction>(a));
    return std::get<DisconnectAction>(a);
}

std::optional<PeerStatus> status_at(Engine& e, const PeerAddress& peer, uint64_t now) {
    auto entry = e.book().get(peer, now);
    if (!entry) return std::nullopt;
    return entry->status;
}

/// Drives the full handshake between a (initiator) and b (responder) with a
/// fixed per-hop delay, asserting the expected shape at each step. Leaves
/// both engines mutually Connected and returns the final clock value.
uint64_t establish(Engine& a, Engine& b, uint64_t now) {
    auto init_actions = a.initiate_connection({b.address()}, now);
    REQUIRE(init_actions.size() == 1);
    const auto& init_send = as_send(init_actions[0]);
    REQUIRE(init_send.to == b.address());
    REQUIRE(tag_of(init_send.envelope.payload) == EventTag::ConnectionInit);
    REQUIRE(status_at(a, b.address(), now) == PeerStatus::Connecting);

    now += 50;
    auto b_actions = b.dispatch(init_send.raw, now);
    REQUIRE(b_actions.size() == 1);
    REQUIRE(tag_of(as_broadcast(b_actions[0]).envelope.payload) == EventTag::NewPeer);
    REQUIRE(status_at(b, a.address(), now) == PeerStatus::WantsToConnect);
    REQUIRE(b.batch_deadline_ms().has_value());

    // The gossip loops back to the initiator about its own join: a no-op.
    now += 50;
    auto loopback = a.dispatch(as_broadcast(b_actions[0]).raw, now);
    REQUIRE(loopback.empty());

    uint64_t deadline = *b.batch_deadline_ms();
    REQUIRE(deadline > now);
    now = deadline;
    auto challenge_actions = b.on_tick(now);
    REQUIRE(challenge_actions.size() == 1);
    const auto& challenge_send = as_send(challenge_actions[0]);
    REQUIRE(challenge_send.to == a.address());
    REQUIRE(tag_of(challenge_send.envelope.payload) == EventTag::ConnectionRequirement);
    REQUIRE_FALSE(b.batch_deadline_ms().has_value());

    now += 50;
    auto response_actions = a.dispatch(challenge_send.raw, now);
    REQUIRE(response_actions.size() == 1);
    const auto& response_send = as_send(response_actions[0]);
    REQUIRE(response_send.to == b.address());
    REQUIRE(tag_of(response_send.envelope.payload) == EventTag::ConnectionRequirementResponse);

    now += 50;
    auto accept_actions = b.dispatch(response_send.raw, now);
    REQUIRE(accept_actions.size() == 1);
    const auto& first_ka = as_send(accept_actions[0]);
    REQUIRE(first_ka.to == a.address());
    REQUIRE(tag_of(first_ka.envelope.payload) == EventTag::KeepAlive);
    REQUIRE(status_at(b, a.address(), now) == PeerStatus::Connected);

    now += 50;
    auto ka_back_actions = a.dispatch(first_ka.raw, now);
    REQUIRE(ka_back_actions.size() == 1);
    const auto& ka_back = as_send(ka_back_actions[0]);
    REQUIRE(tag_of(ka_back.envelope.payload) == EventTag::KeepAlive);
    REQUIRE(status_at(a, b.address(), now) == PeerStatus::Connected);

    now += 50;
    auto refresh_actions = b.dispatch(ka_back.raw, now);
    REQUIRE(refresh_actions.empty());
    return now;
}

}  // namespace

TEST_CASE("two peer handshake reaches mutual connected") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);
    Engine b(kb, test_config(), 2, 1000);

    uint64_t now = establish(a, b, 1000);

    auto a_entry = a.book().get(kb.address, now);
    auto b_entry = b.book().get(ka.address, now);
    REQUIRE(a_entry->status == PeerStatus::Connected);
    REQUIRE(b_entry->status == PeerStatus::Connected);
    REQUIRE(a_entry->connected_at_ms.has_value());
    REQUIRE(b_entry->connected_at_ms.has_value());

    CHECK(b.counters().challenges_generated == 1);
    CHECK(b.counters().pow_verifications == 1);
    CHECK(a.counters().pow_iterations_total >= 1);
    CHECK(a.counters().duplicates_detected == 0);
    CHECK(b.counters().duplicates_detected == 0);
    CHECK(a.counters().rejected_total() == 0);
    CHECK(b.counters().rejected_total() == 0);
}

TEST_CASE("initiate_connection validates targets") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);

    CHECK_THROWS_AS(a.initiate_connection({}, 1000), std::invalid_argument);
    CHECK_THROWS_AS(a.initiate_connection({kb.address, kb.address}, 1000), std::invalid_argument);
    CHECK_THROWS_AS(a.initiate_connection({ka.address}, 1000), std::invalid_argument);

    auto first = a.initiate_connection({kb.address}, 1000);
    REQUIRE(first.size() == 1);
    // Already Connecting: the repeat join is filtered down to nothing.
    auto repeat = a.initiate_connection({kb.address}, 1001);
    CHECK(repeat.empty());
    CHECK(a.counters().sends == 1);
}

TEST_CASE("several pending joiners share one challenge batch") {
    auto kb = kp(0x66);
    Engine b(kb, test_config(), 7, 1000);
    std::vector<Keypair> joiners = {kp(0x01), kp(0x02), kp(0x03)};

    uint64_t now = 1100;
    for (const auto& j : joiners) {
        auto init = seal(j, ConnectionInitPayload{{kb.address}}, now);
        auto actions = b.dispatch(encode_envelope(init), now);
        REQUIRE(actions.size() == 1);  // NewPeer gossip per fresh join
        now += 10;
    }
    REQUIRE(b.book().peers_with_status(PeerStatus::WantsToConnect, now).size() == 3);
    REQUIRE(b.batch_deadline_ms().has_value());

    auto fire = b.on_tick(*b.batch_deadline_ms());
    REQUIRE(fire.size() == 3);
    CHECK(b.counters().challenges_generated == 1);

    // One envelope, byte-identical, fanned to every waiting peer in address order.
    std::vector<PeerAddress> recipients;
    for (const auto& action : fire) {
        const auto& send = as_send(action);
        CHECK(send.raw == as_send(fire[0]).raw);
        recipients.push_back(send.to);
    }
    CHECK(std::is_sorted(recipients.begin(), recipients.end()));

    // The deadline is spent: a later tick emits no second challenge.
    auto idle = b.on_tick(now + 10);
    CHECK(idle.empty());
    CHECK(b.counters().challenges_generated == 1);
}

TEST_CASE("redelivered init is ignored without rearming") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine b(kb, test_config(), 2, 1000);

    auto init = seal(ka, ConnectionInitPayload{{kb.address}}, 1100);
    auto raw = encode_envelope(init);
    auto first = b.dispatch(raw, 1100);
    REQUIRE(first.size() == 1);
    auto deadline = b.batch_deadline_ms();
    REQUIRE(deadline.has_value());

    auto second = b.dispatch(raw, 1150);
    CHECK(second.empty());
    CHECK(b.batch_deadline_ms() == deadline);
    CHECK(b.counters().broadcasts == 1);
    CHECK(b.counters().duplicates_detected == 0);
}

TEST_CASE("fresh init from connected peer broadcasts evidence and removes it") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);
    Engine b(kb, test_config(), 2, 1000);
    uint64_t now = establish(a, b, 1000);

    // Keepalive evidence lands in b's book for a.
    now = std::max(now, a.next_due_ms());
    auto ka_actions = a.on_tick(now);
    REQUIRE_FALSE(ka_actions.empty());
    b.dispatch(as_send(ka_actions[0]).raw, now + 10);

    auto rejoin = seal(ka, ConnectionInitPayload{{kb.address}}, now + 100);
    auto actions = b.dispatch(encode_envelope(rejoin), now + 100);
    REQUIRE(actions.size() == 1);
    const auto& already = as_broadcast(actions[0]);
    REQUIRE(tag_of(already.envelope.payload) == EventTag::AlreadyConnected);

    auto evidence =
        decode_envelope(std::get<AlreadyConnectedPayload>(already.envelope.payload).evidence_raw);
    REQUIRE(evidence.has_value());
    CHECK(evidence->sender == ka.address);
    CHECK(tag_of(evidence->payload) == EventTag::KeepAlive);

    CHECK_FALSE(b.book().get(ka.address, now + 100).has_value());
    CHECK(b.counters().duplicates_detected == 1);
    CHECK(b.counters().duplicates_removed == 1);
}

TEST_CASE("gossiped join with differing targets removes the duplicate") {
    auto suspect = kp(0x11);
    auto ky = kp(0x22);
    auto kz = kp(0x33);
    Engine y(ky, test_config(), 2, 1000);
    Engine suspect_engine(suspect, test_config(), 1, 1000);
    uint64_t now = establish(suspect_engine, y, 1000);

    // y's stored view of the suspect is its join; push a keepalive so the
    // stored evidence is the live target set.
    now = std::max(now, suspect_engine.next_due_ms());
    auto ka_actions = suspect_engine.on_tick(now);
    REQUIRE_FALSE(ka_actions.empty());
    y.dispatch(as_send(ka_actions[0]).raw, now + 10);
    now += 20;

    // The suspect joins z elsewhere; z gossips the init.
    auto second_init = seal(suspect, ConnectionInitPayload{{kz.address}}, now);
    auto gossip = seal(kz, NewPeerPayload{encode_envelope(second_init)}, now);
    auto actions = y.dispatch(encode_envelope(gossip), now + 10);

    REQUIRE(actions.size() == 1);
    const auto& already = as_broadcast(actions[0]);
    REQUIRE(tag_of(already.envelope.payload) == EventTag::AlreadyConnected);
    auto evidence =
        decode_envelope(std::get<AlreadyConnectedPayload>(already.envelope.payload).evidence_raw);
    REQUIRE(evidence.has_value());
    CHECK(evidence->sender == suspect.address);

    CHECK_FALSE(y.book().get(suspect.address, now + 10).has_value());
    CHECK(y.counters().duplicates_detected == 1);
    CHECK(y.counters().duplicates_removed == 1);
}

TEST_CASE("gossiped join matching the stored attempt is not a duplicate") {
    auto joiner = kp(0x11);
    auto kb = kp(0x22);
    auto kc = kp(0x33);
    Engine b(kb, test_config(), 2, 1000);

    auto init = seal(joiner, ConnectionInitPayload{{kb.address, kc.address}}, 1100);
    b.dispatch(encode_envelope(init), 1100);
    REQUIRE(status_at(b, joiner.address, 1100) == PeerStatus::WantsToConnect);

    // c gossips the same join; target sets match, so nothing happens.
    auto gossip = seal(kc, NewPeerPayload{encode_envelope(init)}, 1150);
    auto actions = b.dispatch(encode_envelope(gossip), 1150);
    CHECK(actions.empty());
    CHECK(status_at(b, joiner.address, 1150) == PeerStatus::WantsToConnect);
    CHECK(b.counters().duplicates_detected == 0);
}

TEST_CASE("replayed ancient join inside fresh gossip is ignored") {
    auto victim = kp(0x11);
    auto kb = kp(0x22);
    auto attacker = kp(0x44);
    auto cfg = test_config();
    Engine b(kb, cfg, 2, 1000);

    uint64_t now = 200000;
    // The victim is connected at b with keepalive evidence.
    auto join = seal(victim, ConnectionInitPayload{{kb.address}}, now);
    b.dispatch(encode_envelope(join), now);
    auto fire = b.on_tick(*b.batch_deadline_ms());
    REQUIRE(fire.size() == 1);
    uint64_t hashes = 0;
    auto proof = solve(
        std::get<ConnectionRequirementPayload>(as_send(fire[0]).envelope.payload).challenge,
        cfg.pow_max_iterations, &hashes);
    REQUIRE(proof.has_value());
    auto response = seal(
        victim, ConnectionRequirementResponsePayload{as_send(fire[0]).raw, *proof}, now + 2000);
    b.dispatch(encode_envelope(response), now + 2000);
    REQUIRE(status_at(b, victim.address, now + 2000) == PeerStatus::Connected);
    auto live_ka = seal(victim, KeepAlivePayload{{kb.address}}, now + 2500);
    b.dispatch(encode_envelope(live_ka), now + 2500);

    // An old signed join from the victim, far outside the evidence window,
    // wrapped in a fresh gossip envelope by the attacker.
    auto ancient = seal(victim, ConnectionInitPayload{{attacker.address}}, 100);
    auto gossip = seal(attacker, NewPeerPayload{encode_envelope(ancient)}, now + 3000);
    auto actions = b.dispatch(encode_envelope(gossip), now + 3000);

    CHECK(actions.empty());
    CHECK(status_at(b, victim.address, now + 3000) == PeerStatus::Connected);
    CHECK(b.counters().duplicates_detected == 0);
}

TEST_CASE("re-gossiped join older than live evidence is not a duplicate") {
    auto suspect = kp(0x11);
    auto ky = kp(0x22);
    auto kz = kp(0x33);
    Engine y(ky, test_config(), 2, 1000);
    Engine suspect_engine(suspect, test_config(), 1, 1000);
    uint64_t now = establish(suspect_engine, y, 1000);

    // The suspect's original join named y and z, but only the y leg
    // completed, so y's keepalive evidence lists a different target set.
    // When that join circulates again inside the evidence window, the
    // older timestamp marks it as history rather than a second life.
    auto original = seal(suspect, ConnectionInitPayload{{ky.address, kz.address}}, 1000);
    auto regossip = seal(kz, NewPeerPayload{encode_envelope(original)}, now + 10);
    auto actions = y.dispatch(encode_envelope(regossip), now + 10);

    CHECK(actions.empty());
    CHECK(status_at(y, suspect.address, now + 10) == PeerStatus::Connected);
    CHECK(y.counters().duplicates_detected == 0);
    CHECK(y.counters().duplicates_removed == 0);
}

TEST_CASE("already connected verdict follows the evidence type rules") {
    auto suspect = kp(0x11);
    auto kb = kp(0x22);
    auto ky = kp(0x33);
    auto kz = kp(0x44);

    SECTION("keepalive evidence with differing targets removes") {
        Engine b(kb, test_config(), 2, 1000);
        auto init = seal(suspect, ConnectionInitPayload{{kb.address}}, 1100);
        b.dispatch(encode_envelope(init), 1100);
        REQUIRE(status_at(b, suspect.address, 1100) == PeerStatus::WantsToConnect);

        auto evidence = seal(suspect, KeepAlivePayload{{ky.address}}, 1200);
        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(evidence)}, 1200);
        auto actions = b.dispatch(encode_envelope(accusation), 1250);

        REQUIRE(actions.size() == 1);
        CHECK(as_disconnect(actions[0]).peer == suspect.address);
        CHECK_FALSE(b.book().get(suspect.address, 1250).has_value());
        CHECK(b.counters().duplicates_removed == 1);
    }

    SECTION("keepalive evidence with matching targets is not a duplicate") {
        Engine b(kb, test_config(), 2, 1000);
        auto init = seal(suspect, ConnectionInitPayload{{kb.address, ky.address}}, 1100);
        b.dispatch(encode_envelope(init), 1100);

        auto evidence = seal(suspect, KeepAlivePayload{{ky.address, kb.address}}, 1200);
        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(evidence)}, 1200);
        auto actions = b.dispatch(encode_envelope(accusation), 1250);

        CHECK(actions.empty());
        CHECK(status_at(b, suspect.address, 1250) == PeerStatus::WantsToConnect);
        CHECK(b.counters().duplicates_removed == 0);
    }

    SECTION("init evidence matching the stored join removes") {
        Engine b(kb, test_config(), 2, 1000);
        auto init = seal(suspect, ConnectionInitPayload{{kb.address, ky.address}}, 1100);
        b.dispatch(encode_envelope(init), 1100);

        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(init)}, 1200);
        auto actions = b.dispatch(encode_envelope(accusation), 1250);

        REQUIRE(actions.size() == 1);
        CHECK(as_disconnect(actions[0]).peer == suspect.address);
        CHECK_FALSE(b.book().get(suspect.address, 1250).has_value());
    }

    SECTION("init evidence with differing targets is not a duplicate") {
        Engine b(kb, test_config(), 2, 1000);
        auto init = seal(suspect, ConnectionInitPayload{{kb.address}}, 1100);
        b.dispatch(encode_envelope(init), 1100);

        auto other_init = seal(suspect, ConnectionInitPayload{{kz.address}}, 1105);
        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(other_init)}, 1200);
        auto actions = b.dispatch(encode_envelope(accusation), 1250);

        CHECK(actions.empty());
        CHECK(status_at(b, suspect.address, 1250) == PeerStatus::WantsToConnect);
    }

    SECTION("unknown suspect is ignored") {
        Engine b(kb, test_config(), 2, 1000);
        auto evidence = seal(suspect, KeepAlivePayload{{ky.address}}, 1200);
        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(evidence)}, 1200);
        auto actions = b.dispatch(encode_envelope(accusation), 1250);
        CHECK(actions.empty());
        CHECK(b.counters().duplicates_detected == 0);
    }

    SECTION("stale evidence is ignored") {
        auto cfg = test_config();
        Engine b(kb, cfg, 2, 1000);
        uint64_t now = 100000;
        auto init = seal(suspect, ConnectionInitPayload{{kb.address}}, now);
        b.dispatch(encode_envelope(init), now);

        uint64_t old_ts = now - cfg.entrypoint.max_clock_skew_past_ms - 1000;
        auto evidence = seal(suspect, KeepAlivePayload{{ky.address}}, old_ts);
        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(evidence)}, now + 10);
        auto actions = b.dispatch(encode_envelope(accusation), now + 20);

        CHECK(actions.empty());
        CHECK(status_at(b, suspect.address, now + 20) == PeerStatus::WantsToConnect);
    }

    SECTION("evidence about self is ignored") {
        Engine b(kb, test_config(), 2, 1000);
        auto evidence = seal(kb, KeepAlivePayload{{ky.address}}, 1200);
        auto accusation = seal(ky, AlreadyConnectedPayload{encode_envelope(evidence)}, 1200);
        auto actions = b.dispatch(encode_envelope(accusation), 1250);
        CHECK(actions.empty());
    }
}

TEST_CASE("crossing joins reject without removal") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);
    Engine b(kb, test_config(), 2, 1000);

    auto a_out = a.initiate_connection({kb.address}, 1000);
    auto b_out = b.initiate_connection({ka.address}, 1001);

    auto a_recv = a.dispatch(as_send(b_out[0]).raw, 1050);
    auto b_recv = b.dispatch(as_send(a_out[0]).raw, 1050);

    CHECK(a_recv.empty());
    CHECK(b_recv.empty());
    CHECK(status_at(a, kb.address, 1050) == PeerStatus::Connecting);
    CHECK(status_at(b, ka.address, 1050) == PeerStatus::Connecting);
    CHECK(a.counters().duplicates_removed == 0);
    CHECK(b.counters().duplicates_removed == 0);
}

TEST_CASE("unsolicited requirement is ignored without solving") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);

    DeterministicRng rng(99);
    auto challenge = make_challenge(rng, 16, 4);
    auto requirement = seal(kb, ConnectionRequirementPayload{challenge}, 1100);
    auto actions = a.dispatch(encode_envelope(requirement), 1100);

    CHECK(actions.empty());
    CHECK(a.counters().pow_iterations_total == 0);
}

TEST_CASE("solver exhaustion abandons the attempt") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    auto cfg = test_config();
    cfg.pow_max_iterations = 4;
    Engine a(ka, cfg, 1, 1000);

    a.initiate_connection({kb.address}, 1000);

    // A challenge none of the first four nonces satisfies, checked here so
    // the case cannot silently pass by luck.
    PowChallenge challenge;
    challenge.difficulty = 24;
    challenge.nonce_bytes = Bytes{0xde, 0xad, 0xbe, 0xef};
    for (uint64_t n = 0; n < 4; ++n) {
        REQUIRE(leading_zero_bits(pow_digest(challenge, n)) < 24);
    }

    auto requirement = seal(kb, ConnectionRequirementPayload{challenge}, 1100);
    auto actions = a.dispatch(encode_envelope(requirement), 1100);

    CHECK(actions.empty());
    CHECK_FALSE(a.book().get(kb.address, 1100).has_value());
    CHECK(a.counters().pow_iterations_total == 4);
}

TEST_CASE("response validation failures remove the joiner") {
    auto joiner = kp(0x11);
    auto kb = kp(0x22);
    auto other = kp(0x33);
    auto cfg = test_config();

    auto admit = [&](Engine& b, uint64_t now) {
        auto init = seal(joiner, ConnectionInitPayload{{kb.address}}, now);
        b.dispatch(encode_envelope(init), now);
        REQUIRE(status_at(b, joiner.address, now) == PeerStatus::WantsToConnect);
    };

    SECTION("expired echoed requirement") {
        Engine b(kb, cfg, 2, 1000);
        uint64_t now = 100000;
        admit(b, now);
        // An echo of a requirement b signed long ago.
        DeterministicRng rng(5);
        auto challenge = make_challenge(rng, 16, 4);
        auto old_requirement = seal(kb, ConnectionRequirementPayload{challenge}, 1000);
        auto proof = solve(challenge, cfg.pow_max_iterations);
        REQUIRE(proof.has_value());
        auto response = seal(
            joiner,
            ConnectionRequirementResponsePayload{encode_envelope(old_requirement), *proof},
            now + 10);
        auto actions = b.dispatch(encode_envelope(response), now + 20);
        CHECK(actions.empty());
        CHECK_FALSE(b.book().get(joiner.address, now + 20).has_value());
    }

    SECTION("echoed requirement signed by someone else") {
        Engine b(kb, cfg, 2, 1000);
        admit(b, 1100);
        DeterministicRng rng(6);
        auto challenge = make_challenge(rng, 16, 4);
        auto foreign = seal(other, ConnectionRequirementPayload{challenge}, 1150);
        auto proof = solve(challenge, cfg.pow_max_iterations);
        REQUIRE(proof.has_value());
        auto response = seal(
            joiner, ConnectionRequirementResponsePayload{encode_envelope(foreign), *proof}, 1200);
        auto actions = b.dispatch(encode_envelope(response), 1210);
        CHECK(actions.empty());
        CHECK_FALSE(b.book().get(joiner.address, 1210).has_value());
    }

    SECTION("bad proof") {
        Engine b(kb, cfg, 2, 1000);
        admit(b, 1100);
        auto fire = b.on_tick(*b.batch_deadline_ms());
        REQUIRE(fire.size() == 1);
        const auto& requirement_send = as_send(fire[0]);
        const auto& challenge =
            std::get<ConnectionRequirementPayload>(requirement_send.envelope.payload).challenge;
        auto proof = solve(challenge, cfg.pow_max_iterations);
        REQUIRE(proof.has_value());
        // Substitute the first nonce that provably fails the difficulty check.
        uint64_t bad_nonce = proof->solver_nonce + 1;
        while (leading_zero_bits(pow_digest(challenge, bad_nonce)) >=
               static_cast<int>(challenge.difficulty)) {
            ++bad_nonce;
        }
        proof->solver_nonce = bad_nonce;
        auto response = seal(
            joiner, ConnectionRequirementResponsePayload{requirement_send.raw, *proof}, 2700);
        auto actions = b.dispatch(encode_envelope(response), 2710);
        CHECK(actions.empty());
        CHECK_FALSE(b.book().get(joiner.address, 2710).has_value());
        CHECK(b.counters().pow_verifications == 1);
    }

    SECTION("valid response from a peer that was never admitted") {
        Engine b(kb, cfg, 2, 1000);
        DeterministicRng rng(7);
        auto challenge = make_challenge(rng, 16, 4);
        auto requirement = seal(kb, ConnectionRequirementPayload{challenge}, 1100);
        auto proof = solve(challenge, cfg.pow_max_iterations);
        REQUIRE(proof.has_value());
        auto response = seal(
            joiner,
            ConnectionRequirementResponsePayload{encode_envelope(requirement), *proof}, 1150);
        auto actions = b.dispatch(encode_envelope(response), 1160);
        CHECK(actions.empty());
        CHECK_FALSE(b.book().get(joiner.address, 1160).has_value());
    }
}

TEST_CASE("connected peer expires into a disconnect action") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    auto cfg = test_config();
    Engine a(ka, cfg, 1, 1000);
    Engine b(kb, cfg, 2, 1000);
    uint64_t now = establish(a, b, 1000);

    // The book's clock for a is the instant of b's final dispatch, which is
    // exactly the time establish() returned.
    uint64_t expiry = now + cfg.book.timeout_connected_ms + 1;
    auto actions = b.on_tick(expiry);
    bool disconnected = false;
    for (const auto& action : actions) {
        if (const auto* d = std::get_if<DisconnectAction>(&action)) {
            CHECK(d->peer == ka.address);
            disconnected = true;
        }
    }
    CHECK(disconnected);
    CHECK_FALSE(b.book().get(ka.address, expiry).has_value());
}

TEST_CASE("keepalive flow prevents expiry indefinitely") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    auto cfg = test_config();
    Engine a(ka, cfg, 1, 1000);
    Engine b(kb, cfg, 2, 1000);
    uint64_t now = establish(a, b, 1000);

    uint64_t horizon = now + 10 * cfg.book.timeout_connected_ms;
    while (now < horizon) {
        now = std::min(std::min(a.next_due_ms(), b.next_due_ms()), horizon);
        for (auto& action : a.on_tick(now)) {
            if (const auto* send = std::get_if<SendAction>(&action)) {
                b.dispatch(send->raw, now + 10);
            }
        }
        for (auto& action : b.on_tick(now)) {
            if (const auto* send = std::get_if<SendAction>(&action)) {
                a.dispatch(send->raw, now + 10);
            }
        }
        now += 10;
    }
    CHECK(status_at(a, kb.address, horizon) == PeerStatus::Connected);
    CHECK(status_at(b, ka.address, horizon) == PeerStatus::Connected);
    CHECK(a.counters().disconnects == 0);
    CHECK(b.counters().disconnects == 0);
}

TEST_CASE("keepalive cadence follows the configured interval") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    auto cfg = test_config();
    Engine a(ka, cfg, 1, 1000);
    Engine b(kb, cfg, 2, 1000);
    uint64_t now = establish(a, b, 1000);

    uint64_t due = a.next_due_ms();
    auto early = a.on_tick(due - 1);
    CHECK(early.empty());

    auto fired = a.on_tick(due);
    REQUIRE(fired.size() == 1);
    const auto& send = as_send(fired[0]);
    CHECK(send.to == kb.address);
    CHECK(tag_of(send.envelope.payload) == EventTag::KeepAlive);
    const auto& targets = std::get<KeepAlivePayload>(send.envelope.payload).target_peers;
    REQUIRE(targets.size() == 1);
    CHECK(targets[0] == kb.address);

    CHECK(a.next_due_ms() == due + cfg.keepalive_interval_ms);
}

TEST_CASE("keepalive from connecting peer completes the link") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);

    a.initiate_connection({kb.address}, 1000);
    REQUIRE(status_at(a, kb.address, 1000) == PeerStatus::Connecting);

    auto ka_event = seal(kb, KeepAlivePayload{{ka.address}}, 1100);
    auto actions = a.dispatch(encode_envelope(ka_event), 1100);

    REQUIRE(actions.size() == 1);
    CHECK(tag_of(as_send(actions[0]).envelope.payload) == EventTag::KeepAlive);
    CHECK(status_at(a, kb.address, 1100) == PeerStatus::Connected);

    // A replayed copy neither regresses nor re-triggers the reply.
    auto replay = a.dispatch(encode_envelope(ka_event), 1150);
    CHECK(replay.empty());
    CHECK(status_at(a, kb.address, 1150) == PeerStatus::Connected);
}

TEST_CASE("keepalive from stranger or pending joiner is ignored") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine b(kb, test_config(), 2, 1000);

    auto stranger_ka = seal(ka, KeepAlivePayload{{kb.address}}, 1100);
    CHECK(b.dispatch(encode_envelope(stranger_ka), 1100).empty());

    auto init = seal(ka, ConnectionInitPayload{{kb.address}}, 1200);
    b.dispatch(encode_envelope(init), 1200);
    REQUIRE(status_at(b, ka.address, 1200) == PeerStatus::WantsToConnect);

    auto pending_ka = seal(ka, KeepAlivePayload{{kb.address}}, 1250);
    CHECK(b.dispatch(encode_envelope(pending_ka), 1250).empty());
    CHECK(status_at(b, ka.address, 1250) == PeerStatus::WantsToConnect);
}

TEST_CASE("self-addressed envelopes are dropped before validation") {
    auto ka = kp(0x11);
    Engine a(ka, test_config(), 1, 1000);

    auto own = seal(ka, KeepAlivePayload{{kp(0x22).address}}, 1100);
    auto actions = a.dispatch(encode_envelope(own), 1100);

    CHECK(actions.empty());
    CHECK(a.counters().accepted == 0);
    CHECK(a.counters().rejected_total() == 0);
}

TEST_CASE("malformed bytes count as malformed rejections") {
    auto ka = kp(0x11);
    Engine a(ka, test_config(), 1, 1000);

    Bytes junk = {0x01, 0x02, 0x03};
    auto actions = a.dispatch(junk, 1100);
    CHECK(actions.empty());
    CHECK(a.counters().rejected_malformed == 1);
}

TEST_CASE("reset_state drops protocol state but keeps identity") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    Engine a(ka, test_config(), 1, 1000);
    Engine b(kb, test_config(), 2, 1000);
    uint64_t now = establish(a, b, 1000);

    auto before = a.address();
    a.reset_state(now + 100);

    CHECK(a.address() == before);
    CHECK(a.snapshot(now + 100).empty());
    CHECK_FALSE(a.batch_deadline_ms().has_value());
    CHECK(a.next_due_ms() == now + 100 + test_config().keepalive_interval_ms);

    // Rejoining after reset works: the fresh init is newer than anything b holds.
    auto rejoin = a.initiate_connection({kb.address}, now + 200);
    REQUIRE(rejoin.size() == 1);
}

TEST_CASE("trace records capture the handshake lifecycle") {
    auto ka = kp(0x11);
    auto kb = kp(0x22);
    TraceLog a_log;
    TraceLog b_log;
    Engine a(ka, test_config(), 1, 1000, a_log.sink());
    Engine b(kb, test_config(), 2, 1000, b_log.sink());

    establish(a, b, 1000);

    CHECK(b_log.count_kind("batch_armed") == 1);
    CHECK(b_log.count_kind("challenge") == 1);
    CHECK(a_log.count_kind("solve") == 1);
    CHECK(a_log.count_kind("recv") >= 2);
    CHECK(b_log.count_kind("recv") >= 2);
    CHECK(a_log.count_kind("transition") == 2);  // absent->Connecting->Connected
    CHECK(b_log.count_kind("transition") == 2);  // absent->WantsToConnect->Connected

    // Every record is serializable and the batch deadline was traced with its value.
    bool saw_deadline = false;
    for (const auto& rec : b_log.records()) {
        if (rec.value("kind", "") == "batch_armed") {
            saw_deadline = rec.contains("deadline");
        }
    }
    CHECK(saw_deadline);
}
