#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "konnektor/battery.hpp"
#include "konnektor/config_io.hpp"
#include "konnektor/sim.hpp"
#include "konnektor/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // scenario or verification verdict failed
constexpr int kExitUsage = 2;    // bad invocation, config, or file problem

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw konnektor::ConfigError("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw konnektor::ConfigError("cannot write " + path);
    out << content;
    if (!out) throw konnektor::ConfigError("short write to " + path);
}

std::string short_hex(const konnektor::PeerAddress& a) { return a.hex().substr(0, 12); }

void print_report(const konnektor::SimReport& report) {
    const auto& t = report.transport;
    std::cout << "peers: " << report.peers.size() << "\n";
    for (std::size_t i = 0; i < report.peers.size(); ++i) {
        const auto& p = report.peers[i];
        std::cout << "  [" << i << "] " << short_hex(p.address)
                  << (p.alive ? "" : " (crashed)") << "  accepted=" << p.counters.accepted
                  << " rejected=" << p.counters.rejected_total()
                  << " duplicates_removed=" << p.counters.duplicates_removed << "\n";
        for (const auto& [addr, entry] : p.book) {
            std::cout << "      -> " << short_hex(addr) << " "
                      << konnektor::status_name(entry.status) << "\n";
        }
    }
    std::cout << "transport: emitted=" << t.copies_emitted << " delivered=" << t.copies_delivered
              << " dropped=" << t.copies_dropped << " to_dead=" << t.copies_to_dead
              << " in_flight=" << t.copies_undelivered << "\n";
    std::cout << "trace_records: " << report.trace.size() << "\n";
}

int cmd_run(const std::string& config_path, const std::string& trace_path,
            std::optional<std::uint64_t> seed_override, bool quiet) {
    auto cfg = konnektor::parse_sim_config(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;
    auto report = konnektor::Simulation(cfg).run();
    if (!trace_path.empty()) write_file(trace_path, report.trace.to_jsonl());
    if (!quiet) print_report(report);
    std::cout << "trace_hash: " << report.trace.hash_hex() << "\n";
    return kExitOk;
}

int cmd_suite(std::uint64_t seed, const std::string& trace_dir) {
    bool all_ok = true;
    for (auto& scenario : konnektor::builtin_scenarios(seed)) {
        auto report = konnektor::Simulation(scenario.config).run();
        std::string detail;
        bool ok = scenario.verdict(report, detail);
        all_ok = all_ok && ok;
        std::cout << (ok ? "PASS" : "FAIL") << " " << scenario.name;
        if (ok) {
            std::cout << " (" << scenario.summary << ")";
        } else {
            std::cout << ": " << detail;
        }
        std::cout << "\n";
        if (!trace_dir.empty()) {
            write_file(trace_dir + "/" + scenario.name + ".jsonl", report.trace.to_jsonl());
        }
    }
    return all_ok ? kExitOk : kExitFailure;
}

int cmd_keygen(std::optional<std::uint64_t> seed, const std::string& seed_hex) {
    konnektor::Bytes seed_bytes;
    if (!seed_hex.empty()) {
        auto parsed = konnektor::from_hex(seed_hex);
        if (!parsed || parsed->size() != 32) {
            throw konnektor::ConfigError("--seed-hex must be 64 hex characters");
        }
        seed_bytes = *parsed;
    } else {
        konnektor::DeterministicRng rng(seed.value_or(0));
        seed_bytes = rng.bytes(32);
    }
    auto keypair = konnektor::generate_keypair(seed_bytes);
    nlohmann::ordered_json out{
        {"address", keypair.address.hex()},
        {"seed_hex",
         konnektor::to_hex(konnektor::ByteSpan{seed_bytes.data(), seed_bytes.size()})}};
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_verify_trace(const std::string& trace_path) {
    auto result = konnektor::verify_trace_text(read_file(trace_path));
    std::cout << "trace_hash: " << result.trace_hash_hex << "\n";
    std::cout << "records: " << result.records << "\n";
    for (const auto& problem : result.problems) {
        std::cout << "problem: " << problem << "\n";
    }
    std::cout << (result.ok ? "VALID" : "INVALID") << "\n";
    return result.ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic simulator for a signed-event handshake protocol"};
    app.require_subcommand(1);

    std::string config_path;
    std::string trace_path;
    std::string trace_dir;
    std::string seed_hex;
    std::uint64_t seed_value = 0;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "run one scenario from a JSON config");
    run->add_option("--config", config_path, "scenario config file")->required();
    run->add_option("--trace", trace_path, "write the JSONL trace here");
    auto* run_seed = run->add_option("--seed", seed_value, "override the config seed");
    run->add_flag("--quiet", quiet, "print only the trace hash");

    auto* suite = app.add_subcommand("suite", "run the built-in scenario battery");
    auto* suite_seed = suite->add_option("--seed", seed_value, "seed for every scenario");
    suite->add_option("--trace-dir", trace_dir, "write one JSONL trace per scenario");

    auto* keygen = app.add_subcommand("keygen", "derive a peer identity");
    auto* keygen_seed = keygen->add_option("--seed", seed_value, "numeric seed");
    keygen->add_option("--seed-hex", seed_hex, "32-byte seed as 64 hex characters");

    auto* verify = app.add_subcommand("verify-trace", "re-check a trace's invariants");
    verify->add_option("--trace", trace_path, "JSONL trace file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) {
            std::optional<std::uint64_t> override_seed;
            if (run_seed->count() > 0) override_seed = seed_value;
            return cmd_run(config_path, trace_path, override_seed, quiet);
        }
        if (suite->parsed()) {
            return cmd_suite(suite_seed->count() > 0 ? seed_value : 1, trace_dir);
        }
        if (keygen->parsed()) {
            std::optional<std::uint64_t> numeric_seed;
            if (keygen_seed->count() > 0) numeric_seed = seed_value;
            return cmd_keygen(numeric_seed, seed_hex);
        }
        if (verify->parsed()) {
            return cmd_verify_trace(trace_path);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
