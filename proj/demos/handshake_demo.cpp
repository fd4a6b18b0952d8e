// Walks one handshake by hand: two engines, every envelope carried across
// the gap explicitly, every hop narrated. No simulator, no transport.

#include <iostream>
#include <variant>
#include <vector>

#include "konnektor/engine.hpp"

using namespace konnektor;

namespace {

std::string short_hex(const PeerAddress& a) { return a.hex().substr(0, 12); }

void show(const char* who, const std::vector<OutboundAction>& actions) {
    for (const auto& action : actions) {
        if (const auto* s = std::get_if<SendAction>(&action)) {
            std::cout << "  " << who << " sends " << tag_name(tag_of(s->envelope.payload))
                      << " to " << short_hex(s->to) << "\n";
        } else if (const auto* b = std::get_if<BroadcastAction>(&action)) {
            std::cout << "  " << who << " broadcasts " << tag_name(tag_of(b->envelope.payload))
                      << "\n";
        } else if (const auto* d = std::get_if<DisconnectAction>(&action)) {
            std::cout << "  " << who << " drops the link to " << short_hex(d->peer) << "\n";
        }
    }
}

void show_status(const char* label, Engine& e, const PeerAddress& other, std::uint64_t now) {
    auto entry = e.book().get(other, now);
    std::cout << "  " << label << " sees the other as "
              << (entry ? status_name(entry->status) : "absent") << "\n";
}

}  // namespace

int main() {
    auto alice = generate_keypair(DeterministicRng(1).bytes(32));
    auto bob = generate_keypair(DeterministicRng(2).bytes(32));

    ProtocolConfig cfg;
    cfg.pow_difficulty = 12;  // noticeable but instant

    Engine a(alice, cfg, 10, 1000);
    Engine b(bob, cfg, 20, 1000);
    std::uint64_t now = 1000;

    std::cout << "alice " << short_hex(alice.address) << "\n";
    std::cout << "bob   " << short_hex(bob.address) << "\n\n";

    std::cout << "[1] alice announces she wants bob\n";
    auto out = a.initiate_connection({bob.address}, now);
    show("alice", out);
    const auto& init = std::get<SendAction>(out[0]);

    now += 50;
    std::cout << "[2] bob registers the request and gossips it\n";
    out = b.dispatch(init.raw, now);
    show("bob", out);
    show_status("bob", b, alice.address, now);

    now = *b.batch_deadline_ms();
    std::cout << "[3] bob's wait window closes; one challenge for the batch\n";
    out = b.on_tick(now);
    show("bob", out);
    const auto& requirement = std::get<SendAction>(out[0]);

    now += 50;
    std::cout << "[4] alice pays for the connection in hashes\n";
    out = a.dispatch(requirement.raw, now);
    show("alice", out);
    std::cout << "  alice spent " << a.counters().pow_iterations_total << " hashes\n";
    const auto& response = std::get<SendAction>(out[0]);

    now += 50;
    std::cout << "[5] bob checks the proof with a single hash and connects\n";
    out = b.dispatch(response.raw, now);
    show("bob", out);
    show_status("bob", b, alice.address, now);
    const auto& keepalive = std::get<SendAction>(out[0]);

    now += 50;
    std::cout << "[6] the keepalive lands; alice connects too\n";
    out = a.dispatch(keepalive.raw, now);
    show("alice", out);
    show_status("alice", a, bob.address, now);
    show_status("bob", b, alice.address, now);

    bool done = a.book().get(bob.address, now) &&
                a.book().get(bob.address, now)->status == PeerStatus::Connected &&
                b.book().get(alice.address, now) &&
                b.book().get(alice.address, now)->status == PeerStatus::Connected;
    std::cout << "\n" << (done ? "handshake complete" : "handshake incomplete") << "\n";
    return done ? 0 : 1;
}
