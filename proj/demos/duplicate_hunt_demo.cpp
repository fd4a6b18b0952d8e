// Runs the duplicate-join story through the simulator and narrates the
// verdict trail out of the trace: who detected, who removed, who is left.

#include <iostream>

#include "konnektor/sim.hpp"

using namespace konnektor;

int main() {
    SimConfig cfg;
    cfg.seed = 7;
    cfg.num_honest_peers = 3;
    cfg.duration_ms = 50000;
    cfg.scenario = {JoinAction{500, 0, {1}}, DuplicateJoinAction{15000, 0, {2}}};

    auto report = Simulation(cfg).run();
    const auto& suspect = report.peers[0].address;

    std::cout << "suspect " << suspect.hex().substr(0, 12)
              << " joined peer 1, then joined peer 2 under the same key\n\n";

    for (const auto& rec : report.trace.records()) {
        auto kind = rec.value("kind", "");
        if (kind == "duplicate_detected") {
            std::cout << "t=" << rec.value("t", std::uint64_t{0}) << "  "
                      << rec.value("peer", "").substr(0, 12) << " detected the double life (site: "
                      << rec.value("site", "") << ")\n";
        } else if (kind == "duplicate_removed") {
            std::cout << "t=" << rec.value("t", std::uint64_t{0}) << "  "
                      << rec.value("peer", "").substr(0, 12) << " expelled "
                      << rec.value("suspect", "").substr(0, 12) << "\n";
        }
    }

    auto holders = peers_holding(report, suspect, PeerStatus::Connected);
    std::cout << "\npeers still connected to the suspect: " << holders.size() << "\n";
    std::cout << "suspect's own book: " << report.peers[0].book.size() << " entries\n";
    std::cout << "trace hash: " << report.trace.hash_hex() << "\n";

    return holders.empty() && report.peers[0].book.empty() ? 0 : 1;
}
