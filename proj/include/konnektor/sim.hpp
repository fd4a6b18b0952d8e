#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <variant>
#include <vector>

#include "konnektor/engine.hpp"

namespace konnektor {

/// Peer `peer` initiates a connection to `targets` (all values are peer indices).
struct JoinAction {
    std::uint64_t at_ms = 0;
    std::size_t peer = 0;
    std::vector<std::size_t> targets;
};

/// Peer `peer` restarts with the same identity and joins `targets`, as a
/// machine migrating to a new set of partners would.
struct DuplicateJoinAction {
    std::uint64_t at_ms = 0;
    std::size_t peer = 0;
    std::vector<std::size_t> targets;
};

/// Peer `peer` goes silent: no ticks, and traffic to it vanishes.
struct CrashAction {
    std::uint64_t at_ms = 0;
    std::size_t peer = 0;
};

/// Re-injects `count` previously delivered envelopes to their original
/// recipients, spread uniformly over [at_ms, at_ms + spread_ms].
struct ReplayBatteryAction {
    std::uint64_t at_ms = 0;
    std::size_t count = 0;
    std::uint64_t spread_ms = 0;
};

/// Delivers `count` envelopes to `target` that claim to come from `victim`
/// but are signed with throwaway keys.
struct ImpersonationBatteryAction {
    std::uint64_t at_ms = 0;
    std::size_t victim = 0;
    std::size_t target = 0;
    std::size_t count = 0;
    std::uint64_t spread_ms = 0;
};

/// `count` fresh identities join `target` within [at_ms, at_ms + spread_ms].
/// The attackers are full protocol peers, so their solving cost is measurable.
struct SpamJoinsAction {
    std::uint64_t at_ms = 0;
    std::size_t target = 0;
    std::size_t count = 0;
    std::uint64_t spread_ms = 0;
};

using ScenarioAction = std::variant<JoinAction, DuplicateJoinAction, CrashAction,
                                    ReplayBatteryAction, ImpersonationBatteryAction,
                                    SpamJoinsAction>;

struct SimConfig {
    std::uint64_t seed = 1;
    std::size_t num_honest_peers = 2;
    std::uint64_t latency_min_ms = 5;
    std::uint64_t latency_max_ms = 50;
    double drop_probability = 0.0;
    std::uint64_t duration_ms = 60000;
    ProtocolConfig protocol;
    std::vector<ScenarioAction> scenario;
};

struct PeerReport {
    PeerAddress address;
    bool alive = true;
    EngineCounters counters;
    std::vector<std::pair<PeerAddress, BookEntry>> book;
};

struct TransportStats {
    std::uint64_t copies_emitted = 0;    // every attempted point-to-point copy
    std::uint64_t copies_scheduled = 0;  // survived the loss coin
    std::uint64_t copies_dropped = 0;    // lost at emission
    std::uint64_t copies_to_dead = 0;    // recipient crashed before delivery
    std::uint64_t copies_delivered = 0;
    std::uint64_t copies_undelivered = 0;  // still in flight when time ran out
    std::uint64_t disconnect_actions = 0;
};

struct SimReport {
    std::vector<PeerReport> peers;
    TransportStats transport;
    TraceLog trace;
    std::size_t captured_events = 0;
};

/// Which peers' final books hold `address` with `status`.
inline std::vector<std::size_t> peers_holding(const SimReport& report, const PeerAddress& address,
                                              PeerStatus status) {
    std::vector<std::size_t> holders;
    for (std::size_t i = 0; i < report.peers.size(); ++i) {
        for (const auto& [addr, entry] : report.peers[i].book) {
            if (addr == address && entry.status == status) holders.push_back(i);
        }
    }
    return holders;
}

/// Discrete-event network: fixed peer set, per-copy uniform latency and loss,
/// broadcasts fanned to every live peer except the emitter. Single run per
/// instance; everything is derived from the config seed.
class Simulation {
  public:
    explicit Simulation(SimConfig cfg) : cfg_(cfg) {
        if (cfg_.num_honest_peers < 1) throw std::invalid_argument("need at least one peer");
        if (cfg_.latency_min_ms > cfg_.latency_max_ms) {
            throw std::invalid_argument("latency_min_ms must be <= latency_max_ms");
        }
        if (cfg_.drop_probability < 0.0 || cfg_.drop_probability > 1.0) {
            throw std::invalid_argument("drop_probability must be within [0,1]");
        }
    }

    SimReport run() {
        // Identity derivation order is part of the determinism contract:
        // honest peers first, spam blocks in action order, then the
        // transport stream.
        std::size_t total = cfg_.num_honest_peers;
        for (const auto& action : cfg_.scenario) {
            if (const auto* spam = std::get_if<SpamJoinsAction>(&action)) {
                spam_bases_.push_back(total);
                total += spam->count;
            }
        }
        DeterministicRng master(cfg_.seed);
        std::vector<Keypair> keys;
        std::vector<std::uint64_t> engine_seeds;
        keys.reserve(total);
        for (std::size_t i = 0; i < total; ++i) {
            auto seed_bytes = master.bytes(32);
            keys.push_back(generate_keypair(seed_bytes));
            engine_seeds.push_back(master.next_u64());
        }
        rng_ = DeterministicRng(master.next_u64());

        live_.assign(total, true);
        for (std::size_t i = 0; i < total; ++i) {
            engines_.emplace_back(keys[i], cfg_.protocol, engine_seeds[i], std::uint64_t{0},
                                  trace_.sink());
            index_of_[keys[i].address] = i;
        }

        for (std::size_t i = 0; i < cfg_.scenario.size(); ++i) {
            queue_.push(QueueItem{action_time(cfg_.scenario[i]), next_seq_++, QueueItem::Scenario,
                                  0, {}, i, false});
        }

        std::uint64_t guard = 0;
        while (true) {
            if (++guard > kMaxSteps) throw std::runtime_error("simulation step budget exceeded");
            std::uint64_t t_queue = queue_.empty() ? kNever : queue_.top().at_ms;
            std::uint64_t t_tick = kNever;
            for (std::size_t i = 0; i < engines_.size(); ++i) {
                if (live_[i]) t_tick = std::min(t_tick, engines_[i].next_due_ms());
            }
            std::uint64_t t = std::min(t_queue, t_tick);
            if (t > cfg_.duration_ms || t == kNever) break;

            if (t_queue <= t_tick) {
                auto item = queue_.top();
                queue_.pop();
                if (item.kind == QueueItem::Scenario) {
                    fire_scenario(scenario_at(item.action_index), t);
                } else {
                    deliver(item, t);
                }
            } else {
                for (std::size_t i = 0; i < engines_.size(); ++i) {
                    if (live_[i] && engines_[i].next_due_ms() == t) {
                        route(i, engines_[i].on_tick(t), t);
                    }
                }
            }
        }

        SimReport report;
        report.peers.reserve(engines_.size());
        for (std::size_t i = 0; i < engines_.size(); ++i) {
            PeerReport pr;
            pr.address = engines_[i].address();
            pr.alive = live_[i];
            pr.counters = engines_[i].counters();
            pr.book = engines_[i].snapshot(cfg_.duration_ms);
            TraceJson entries = TraceJson::array();
            for (const auto& [addr, entry] : pr.book) {
                TraceJson e{{"target", addr.hex()}, {"status", status_name(entry.status)}};
                if (entry.connected_at_ms) e["connected_at"] = *entry.connected_at_ms;
                entries.push_back(std::move(e));
            }
            trace_.emit({{"t", cfg_.duration_ms},
                         {"kind", "snapshot"},
                         {"peer", pr.address.hex()},
                         {"alive", pr.alive},
                         {"entries", std::move(entries)}});
            report.peers.push_back(std::move(pr));
        }
        while (!queue_.empty()) {
            if (queue_.top().kind == QueueItem::Delivery) stats_.copies_undelivered += 1;
            queue_.pop();
        }
        report.transport = stats_;
        report.trace = std::move(trace_);
        report.captured_events = captured_.size();
        return report;
    }

  private:
    struct QueueItem {
        enum Kind { Delivery, Scenario };
        std::uint64_t at_ms;
        std::uint64_t seq;
        Kind kind;
        std::size_t to;
        Bytes raw;
        std::size_t action_index;
        bool capture;

        bool operator>(const QueueItem& other) const {
            if (at_ms != other.at_ms) return at_ms > other.at_ms;
            return seq > other.seq;
        }
    };

    struct CapturedDelivery {
        std::size_t to;
        Bytes raw;
    };

    static constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();
    static constexpr std::uint64_t kMaxSteps = 50'000'000;

    static std::uint64_t action_time(const ScenarioAction& action) {
        return std::visit([](const auto& a) { return a.at_ms; }, action);
    }

    const ScenarioAction& scenario_at(std::size_t index) const {
        if (index < cfg_.scenario.size()) return cfg_.scenario[index];
        return extra_actions_[index - cfg_.scenario.size()];
    }

    PeerAddress resolve(std::size_t index) const {
        if (index >= engines_.size()) throw std::out_of_range("peer index out of range");
        return engines_[index].address();
    }

    std::vector<PeerAddress> resolve_all(const std::vector<std::size_t>& indices) const {
        std::vector<PeerAddress> out;
        out.reserve(indices.size());
        for (auto i : indices) out.push_back(resolve(i));
        return out;
    }

    void emit_copy(std::size_t to, const Bytes& raw, std::uint64_t now, bool capture) {
        stats_.copies_emitted += 1;
        if (rng_.bernoulli(cfg_.drop_probability)) {
            stats_.copies_dropped += 1;
            return;
        }
        stats_.copies_scheduled += 1;
        std::uint64_t latency = rng_.uniform_u64(cfg_.latency_min_ms, cfg_.latency_max_ms);
        queue_.push(
            QueueItem{now + latency, next_seq_++, QueueItem::Delivery, to, raw, 0, capture});
    }

    void inject_copy(std::size_t to, Bytes raw, std::uint64_t at) {
        stats_.copies_emitted += 1;
        stats_.copies_scheduled += 1;
        queue_.push(
            QueueItem{at, next_seq_++, QueueItem::Delivery, to, std::move(raw), 0, false});
    }

    void route(std::size_t from, const std::vector<OutboundAction>& actions, std::uint64_t now) {
        for (const auto& action : actions) {
            if (const auto* send = std::get_if<SendAction>(&action)) {
                auto it = index_of_.find(send->to);
                if (it == index_of_.end()) continue;  // outside the simulated set
                emit_copy(it->second, send->raw, now, true);
            } else if (const auto* bc = std::get_if<BroadcastAction>(&action)) {
                for (std::size_t j = 0; j < engines_.size(); ++j) {
                    if (j == from || !live_[j]) continue;
                    emit_copy(j, bc->raw, now, true);
                }
            } else {
                stats_.disconnect_actions += 1;
            }
        }
    }

    void deliver(const QueueItem& item, std::uint64_t now) {
        if (!live_[item.to]) {
            stats_.copies_to_dead += 1;
            return;
        }
        stats_.copies_delivered += 1;
        if (item.capture) captured_.push_back(CapturedDelivery{item.to, item.raw});
        route(item.to, engines_[item.to].dispatch(item.raw, now), now);
    }

    void fire_scenario(const ScenarioAction& action, std::uint64_t now) {
        std::visit([&](const auto& a) { fire(a, now); }, action);
    }

    void fire(const JoinAction& a, std::uint64_t now) {
        trace_.emit({{"t", now},
                     {"kind", "scenario"},
                     {"action", "join"},
                     {"peer", resolve(a.peer).hex()}});
        if (!live_[a.peer]) return;
        route(a.peer, engines_[a.peer].initiate_connection(resolve_all(a.targets), now), now);
    }

    void fire(const DuplicateJoinAction& a, std::uint64_t now) {
        trace_.emit({{"t", now},
                     {"kind", "scenario"},
                     {"action", "duplicate_join"},
                     {"peer", resolve(a.peer).hex()}});
        if (!live_[a.peer]) return;
        engines_[a.peer].reset_state(now);
        route(a.peer, engines_[a.peer].initiate_connection(resolve_all(a.targets), now), now);
    }

    void fire(const CrashAction& a, std::uint64_t now) {
        trace_.emit({{"t", now},
                     {"kind", "scenario"},
                     {"action", "crash"},
                     {"peer", resolve(a.peer).hex()}});
        live_[a.peer] = false;
    }

    void fire(const ReplayBatteryAction& a, std::uint64_t now) {
        trace_.emit({{"t", now},
                     {"kind", "scenario"},
                     {"action", "replay_battery"},
                     {"count", a.count}});
        if (captured_.empty()) return;
        for (std::size_t i = 0; i < a.count; ++i) {
            const auto& src = captured_[i % captured_.size()];
            std::uint64_t jitter = a.spread_ms ? rng_.uniform_u64(0, a.spread_ms) : 0;
            inject_copy(src.to, src.raw, now + jitter);
        }
    }

    void fire(const ImpersonationBatteryAction& a, std::uint64_t now) {
        trace_.emit({{"t", now},
                     {"kind", "scenario"},
                     {"action", "impersonation_battery"},
                     {"count", a.count}});
        PeerAddress victim = resolve(a.victim);
        PeerAddress target = resolve(a.target);
        for (std::size_t i = 0; i < a.count; ++i) {
            auto forger = generate_keypair(rng_.bytes(32));
            std::uint64_t jitter = a.spread_ms ? rng_.uniform_u64(0, a.spread_ms) : 0;
            std::uint64_t at = now + jitter;
            auto env = seal(forger, KeepAlivePayload{{target}}, at);
            env.sender = victim;  // forged origin, signature no longer matches
            inject_copy(a.target, encode_envelope(env), at);
        }
    }

    void fire(const SpamJoinsAction& a, std::uint64_t now) {
        trace_.emit({{"t", now},
                     {"kind", "scenario"},
                     {"action", "spam_joins"},
                     {"count", a.count}});
        std::size_t base = spam_bases_.at(next_spam_block_++);
        // Each attacker's join is queued as its own event so every engine
        // only ever observes a monotone clock.
        for (std::size_t i = 0; i < a.count; ++i) {
            std::uint64_t jitter = a.spread_ms ? rng_.uniform_u64(0, a.spread_ms) : 0;
            std::size_t index = cfg_.scenario.size() + extra_actions_.size();
            extra_actions_.push_back(JoinAction{now + jitter, base + i, {a.target}});
            queue_.push(QueueItem{now + jitter, next_seq_++, QueueItem::Scenario, 0, {}, index,
                                  false});
        }
    }

    SimConfig cfg_;
    DeterministicRng rng_{0};
    std::deque<Engine> engines_;  // stable element addresses: sinks capture them
    std::vector<bool> live_;
    std::vector<ScenarioAction> extra_actions_;
    std::map<PeerAddress, std::size_t> index_of_;
    std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<QueueItem>> queue_;
    std::uint64_t next_seq_ = 0;
    std::vector<CapturedDelivery> captured_;
    std::vector<std::size_t> spam_bases_;
    std::size_t next_spam_block_ = 0;
    TraceLog trace_;
    TransportStats stats_;
};

}  // namespace konnektor
