#pragma once

#include <functional>
#include <string>
#include <vector>

#include "konnektor/sim.hpp"

namespace konnektor {

struct NamedScenario {
    std::string name;
    std::string summary;
    SimConfig config;
    /// Returns true when the run behaved as the scenario demands; on failure
    /// `detail` explains what went wrong.
    std::function<bool(const SimReport&, std::string& detail)> verdict;
};

namespace battery_detail {

inline bool connected_both_ways(const SimReport& r, std::size_t i, std::size_t j) {
    auto one_way = [&](std::size_t from, std::size_t to) {
        for (const auto& [addr, entry] : r.peers[from].book) {
            if (addr == r.peers[to].address && entry.status == PeerStatus::Connected) return true;
        }
        return false;
    };
    return one_way(i, j) && one_way(j, i);
}

inline bool conserved(const SimReport& r, std::string& detail) {
    const auto& t = r.transport;
    if (t.copies_emitted != t.copies_scheduled + t.copies_dropped ||
        t.copies_scheduled != t.copies_delivered + t.copies_to_dead + t.copies_undelivered) {
        detail = "transport accounting does not balance";
        return false;
    }
    return true;
}

inline std::uint64_t total_duplicates_removed(const SimReport& r) {
    std::uint64_t n = 0;
    for (const auto& p : r.peers) n += p.counters.duplicates_removed;
    return n;
}

}  // namespace battery_detail

/// The scenarios `suite` runs. Every entry must pass on every seed; suite
/// failures indicate a protocol regression, not an unlucky roll.
inline std::vector<NamedScenario> builtin_scenarios(std::uint64_t seed = 1) {
    using namespace battery_detail;
    std::vector<NamedScenario> out;

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 2;
        cfg.duration_ms = 20000;
        cfg.scenario = {JoinAction{500, 0, {1}}};
        out.push_back(NamedScenario{
            "handshake", "two peers complete the join protocol and stay connected", cfg,
            [](const SimReport& r, std::string& detail) {
                if (!connected_both_ways(r, 0, 1)) {
                    detail = "peers failed to reach mutual Connected";
                    return false;
                }
                if (r.peers[1].counters.challenges_generated != 1) {
                    detail = "expected exactly one challenge";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 4;
        cfg.duration_ms = 30000;
        cfg.scenario = {JoinAction{500, 0, {1, 2, 3}}, JoinAction{700, 1, {2, 3}},
                        JoinAction{900, 2, {3}}};
        out.push_back(NamedScenario{
            "mesh", "four peers build a full mesh without duplicate verdicts", cfg,
            [](const SimReport& r, std::string& detail) {
                for (std::size_t i = 0; i < 4; ++i) {
                    for (std::size_t j = i + 1; j < 4; ++j) {
                        if (!connected_both_ways(r, i, j)) {
                            detail = "mesh incomplete between peers " + std::to_string(i) +
                                     " and " + std::to_string(j);
                            return false;
                        }
                    }
                }
                if (total_duplicates_removed(r) != 0) {
                    detail = "honest mesh tripped the duplicate detector";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 3;
        cfg.duration_ms = 50000;
        cfg.scenario = {JoinAction{500, 0, {1}}, DuplicateJoinAction{15000, 0, {2}}};
        out.push_back(NamedScenario{
            "duplicate_join", "a second join under the same identity is expelled network-wide",
            cfg, [](const SimReport& r, std::string& detail) {
                auto holders = peers_holding(r, r.peers[0].address, PeerStatus::Connected);
                if (!holders.empty()) {
                    detail = "duplicate peer still connected somewhere";
                    return false;
                }
                if (total_duplicates_removed(r) == 0) {
                    detail = "duplicate was never detected";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 2;
        cfg.duration_ms = 25000;
        cfg.scenario = {JoinAction{500, 0, {1}}, CrashAction{10000, 1}};
        out.push_back(NamedScenario{
            "crash_eviction", "a silent peer is evicted once its entry times out", cfg,
            [](const SimReport& r, std::string& detail) {
                for (const auto& [addr, entry] : r.peers[0].book) {
                    if (addr == r.peers[1].address) {
                        detail = "crashed peer still present in the survivor's book";
                        return false;
                    }
                }
                if (r.peers[0].counters.disconnects == 0) {
                    detail = "no disconnect was reported";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 4;
        cfg.duration_ms = 60000;
        cfg.scenario = {JoinAction{500, 0, {1, 2, 3}}, JoinAction{700, 1, {2, 3}},
                        JoinAction{900, 2, {3}}, ReplayBatteryAction{50000, 100, 2000}};
        out.push_back(NamedScenario{
            "replay_battery", "early traffic replayed later is rejected as stale", cfg,
            [](const SimReport& r, std::string& detail) {
                std::uint64_t stale = 0;
                for (const auto& p : r.peers) stale += p.counters.rejected_stale;
                if (stale != 100) {
                    detail = "expected 100 stale rejections, saw " + std::to_string(stale);
                    return false;
                }
                if (total_duplicates_removed(r) != 0) {
                    detail = "replays caused removals";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 2;
        cfg.duration_ms = 20000;
        cfg.protocol.entrypoint.rate_limiter_enabled = false;
        cfg.scenario = {JoinAction{500, 0, {1}},
                        ImpersonationBatteryAction{10000, 0, 1, 200, 2000}};
        out.push_back(NamedScenario{
            "impersonation", "forged senders die at the signature gate", cfg,
            [](const SimReport& r, std::string& detail) {
                if (r.peers[1].counters.rejected_bad_signature != 200) {
                    detail = "expected 200 signature rejections, saw " +
                             std::to_string(r.peers[1].counters.rejected_bad_signature);
                    return false;
                }
                if (!connected_both_ways(r, 0, 1)) {
                    detail = "genuine link did not survive";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 1;
        cfg.duration_ms = 30000;
        // With flood gossip, the victim's own NewPeer burst would eat its
        // per-sender budget at every joiner; the limiter gate has its own
        // scenario, this one measures batching and solve asymmetry.
        cfg.protocol.entrypoint.rate_limiter_enabled = false;
        cfg.scenario = {SpamJoinsAction{500, 0, 100, 400}};
        out.push_back(NamedScenario{
            "spam_flood", "one hundred joins inside one wait window cost one challenge", cfg,
            [](const SimReport& r, std::string& detail) {
                if (r.peers[0].counters.challenges_generated != 1) {
                    detail = "expected a single challenge, saw " +
                             std::to_string(r.peers[0].counters.challenges_generated);
                    return false;
                }
                std::uint64_t attacker_work = 0;
                for (std::size_t i = 1; i < r.peers.size(); ++i) {
                    attacker_work += r.peers[i].counters.pow_iterations_total;
                }
                if (r.peers[0].counters.pow_verifications == 0 ||
                    attacker_work < r.peers[0].counters.pow_verifications) {
                    detail = "work asymmetry did not favor the victim";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.num_honest_peers = 4;
        cfg.drop_probability = 0.15;
        cfg.duration_ms = 30000;
        cfg.scenario = {JoinAction{500, 0, {1, 2, 3}}, JoinAction{700, 1, {2, 3}},
                        JoinAction{900, 2, {3}}};
        out.push_back(NamedScenario{
            "lossy_mesh", "transport accounting stays balanced under 15% loss", cfg,
            [](const SimReport& r, std::string& detail) {
                if (r.transport.copies_dropped == 0) {
                    detail = "loss model produced no drops";
                    return false;
                }
                return conserved(r, detail);
            }});
    }

    return out;
}

}  // namespace konnektor
