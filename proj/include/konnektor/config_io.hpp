#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "konnektor/sim.hpp"

namespace konnektor {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

using Json = nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

inline void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                                const std::string& path) {
    if (!obj.is_object()) config_fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) config_fail(path, "unknown key \"" + key + "\"");
    }
}

inline void read_u64(const Json& obj, const char* key, std::uint64_t& out,
                     const std::string& path) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        config_fail(path + "." + key, "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

inline void read_u32(const Json& obj, const char* key, std::uint32_t& out,
                     const std::string& path) {
    std::uint64_t wide = out;
    read_u64(obj, key, wide, path);
    if (wide > 0xFFFFFFFFull) config_fail(path + "." + key, "value out of range");
    out = static_cast<std::uint32_t>(wide);
}

inline void read_size(const Json& obj, const char* key, std::size_t& out,
                      const std::string& path) {
    std::uint64_t wide = out;
    read_u64(obj, key, wide, path);
    out = static_cast<std::size_t>(wide);
}

inline void read_double(const Json& obj, const char* key, double& out, const std::string& path) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number()) config_fail(path + "." + key, "expected a number");
    out = v.get<double>();
}

inline void read_bool(const Json& obj, const char* key, bool& out, const std::string& path) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) config_fail(path + "." + key, "expected a boolean");
    out = v.get<bool>();
}

inline std::uint64_t require_u64(const Json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) config_fail(path, std::string("missing key \"") + key + "\"");
    std::uint64_t out = 0;
    read_u64(obj, key, out, path);
    return out;
}

inline std::size_t require_index(const Json& obj, const char* key, std::size_t peer_count,
                                 const std::string& path) {
    auto v = require_u64(obj, key, path);
    if (v >= peer_count) {
        config_fail(path + "." + key, "peer index " + std::to_string(v) + " out of range (" +
                                          std::to_string(peer_count) + " honest peers)");
    }
    return static_cast<std::size_t>(v);
}

inline std::vector<std::size_t> require_targets(const Json& obj, const char* key,
                                                std::size_t peer_count, const std::string& path) {
    if (!obj.contains(key)) config_fail(path, std::string("missing key \"") + key + "\"");
    const auto& arr = obj.at(key);
    if (!arr.is_array() || arr.empty()) {
        config_fail(path + "." + key, "expected a non-empty array of peer indices");
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& v = arr.at(i);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            config_fail(path + "." + key, "expected non-negative peer indices");
        }
        auto idx = v.get<std::uint64_t>();
        if (idx >= peer_count) {
            config_fail(path + "." + key, "peer index " + std::to_string(idx) + " out of range");
        }
        out.push_back(static_cast<std::size_t>(idx));
    }
    return out;
}

inline ScenarioAction parse_action(const Json& obj, std::size_t peer_count,
                                   const std::string& path) {
    if (!obj.is_object()) config_fail(path, "expected an object");
    if (!obj.contains("action")) config_fail(path, "missing key \"action\"");
    const auto& kind_json = obj.at("action");
    if (!kind_json.is_string()) config_fail(path + ".action", "expected a string");
    std::string kind = kind_json.get<std::string>();

    if (kind == "join" || kind == "duplicate_join") {
        reject_unknown_keys(obj, {"action", "at_ms", "peer", "targets"}, path);
        auto at = require_u64(obj, "at_ms", path);
        auto peer = require_index(obj, "peer", peer_count, path);
        auto targets = require_targets(obj, "targets", peer_count, path);
        for (auto t : targets) {
            if (t == peer) config_fail(path + ".targets", "peer cannot target itself");
        }
        if (kind == "join") return JoinAction{at, peer, std::move(targets)};
        return DuplicateJoinAction{at, peer, std::move(targets)};
    }
    if (kind == "crash") {
        reject_unknown_keys(obj, {"action", "at_ms", "peer"}, path);
        return CrashAction{require_u64(obj, "at_ms", path),
                           require_index(obj, "peer", peer_count, path)};
    }
    if (kind == "replay_battery") {
        reject_unknown_keys(obj, {"action", "at_ms", "count", "spread_ms"}, path);
        ReplayBatteryAction a;
        a.at_ms = require_u64(obj, "at_ms", path);
        a.count = static_cast<std::size_t>(require_u64(obj, "count", path));
        read_u64(obj, "spread_ms", a.spread_ms, path);
        return a;
    }
    if (kind == "impersonation_battery") {
        reject_unknown_keys(obj, {"action", "at_ms", "victim", "target", "count", "spread_ms"},
                            path);
        ImpersonationBatteryAction a;
        a.at_ms = require_u64(obj, "at_ms", path);
        a.victim = require_index(obj, "victim", peer_count, path);
        a.target = require_index(obj, "target", peer_count, path);
        a.count = static_cast<std::size_t>(require_u64(obj, "count", path));
        read_u64(obj, "spread_ms", a.spread_ms, path);
        if (a.victim == a.target) config_fail(path, "victim and target must differ");
        return a;
    }
    if (kind == "spam_joins") {
        reject_unknown_keys(obj, {"action", "at_ms", "target", "count", "spread_ms"}, path);
        SpamJoinsAction a;
        a.at_ms = require_u64(obj, "at_ms", path);
        a.target = require_index(obj, "target", peer_count, path);
        a.count = static_cast<std::size_t>(require_u64(obj, "count", path));
        read_u64(obj, "spread_ms", a.spread_ms, path);
        if (a.count == 0) config_fail(path + ".count", "expected at least one joiner");
        return a;
    }
    config_fail(path + ".action", "unknown action \"" + kind + "\"");
}

inline EntrypointConfig parse_entrypoint(const Json& obj, const std::string& path) {
    reject_unknown_keys(obj,
                        {"max_clock_skew_past_ms", "max_clock_skew_future_ms",
                         "rate_limit_connected", "rate_limit_unconnected", "rate_window_ms",
                         "rate_limiter_enabled"},
                        path);
    EntrypointConfig cfg;
    read_u64(obj, "max_clock_skew_past_ms", cfg.max_clock_skew_past_ms, path);
    read_u64(obj, "max_clock_skew_future_ms", cfg.max_clock_skew_future_ms, path);
    read_u32(obj, "rate_limit_connected", cfg.rate_limit_connected, path);
    read_u32(obj, "rate_limit_unconnected", cfg.rate_limit_unconnected, path);
    read_u64(obj, "rate_window_ms", cfg.rate_window_ms, path);
    read_bool(obj, "rate_limiter_enabled", cfg.rate_limiter_enabled, path);
    return cfg;
}

inline BookConfig parse_book(const Json& obj, const std::string& path) {
    reject_unknown_keys(
        obj, {"timeout_connected_ms", "timeout_wants_to_connect_ms", "timeout_connecting_ms"},
        path);
    BookConfig cfg;
    read_u64(obj, "timeout_connected_ms", cfg.timeout_connected_ms, path);
    read_u64(obj, "timeout_wants_to_connect_ms", cfg.timeout_wants_to_connect_ms, path);
    read_u64(obj, "timeout_connecting_ms", cfg.timeout_connecting_ms, path);
    return cfg;
}

inline ProtocolConfig parse_protocol(const Json& obj, const std::string& path) {
    reject_unknown_keys(obj,
                        {"entrypoint", "book", "challenge_size_bytes", "pow_difficulty",
                         "pow_max_iterations", "batch_wait_min_ms", "batch_wait_max_ms",
                         "requirement_freshness_ms", "keepalive_interval_ms"},
                        path);
    ProtocolConfig cfg;
    if (obj.contains("entrypoint")) {
        cfg.entrypoint = parse_entrypoint(obj.at("entrypoint"), path + ".entrypoint");
    }
    if (obj.contains("book")) cfg.book = parse_book(obj.at("book"), path + ".book");
    read_size(obj, "challenge_size_bytes", cfg.challenge_size_bytes, path);
    read_u32(obj, "pow_difficulty", cfg.pow_difficulty, path);
    read_u64(obj, "pow_max_iterations", cfg.pow_max_iterations, path);
    read_u64(obj, "batch_wait_min_ms", cfg.batch_wait_min_ms, path);
    read_u64(obj, "batch_wait_max_ms", cfg.batch_wait_max_ms, path);
    read_u64(obj, "requirement_freshness_ms", cfg.requirement_freshness_ms, path);
    read_u64(obj, "keepalive_interval_ms", cfg.keepalive_interval_ms, path);
    return cfg;
}

}  // namespace detail

/// Parses a simulation config from JSON text. Unknown keys, type mismatches,
/// out-of-range peer indices, and self-defeating parameter combinations are
/// all hard errors.
inline SimConfig parse_sim_config(const std::string& text) {
    detail::Json root;
    try {
        root = detail::Json::parse(text);
    } catch (const detail::Json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    detail::reject_unknown_keys(root,
                                {"seed", "num_honest_peers", "latency_min_ms", "latency_max_ms",
                                 "drop_probability", "duration_ms", "protocol", "scenario"},
                                "config");
    SimConfig cfg;
    detail::read_u64(root, "seed", cfg.seed, "config");
    detail::read_size(root, "num_honest_peers", cfg.num_honest_peers, "config");
    detail::read_u64(root, "latency_min_ms", cfg.latency_min_ms, "config");
    detail::read_u64(root, "latency_max_ms", cfg.latency_max_ms, "config");
    detail::read_double(root, "drop_probability", cfg.drop_probability, "config");
    detail::read_u64(root, "duration_ms", cfg.duration_ms, "config");
    if (root.contains("protocol")) {
        cfg.protocol = detail::parse_protocol(root.at("protocol"), "config.protocol");
    }

    if (cfg.num_honest_peers < 1) detail::config_fail("config.num_honest_peers", "need at least 1");
    if (cfg.latency_min_ms > cfg.latency_max_ms) {
        detail::config_fail("config.latency_min_ms", "must be <= latency_max_ms");
    }
    if (cfg.drop_probability < 0.0 || cfg.drop_probability > 1.0) {
        detail::config_fail("config.drop_probability", "must be within [0,1]");
    }
    try {
        validate_protocol_config(cfg.protocol);
    } catch (const std::invalid_argument& e) {
        detail::config_fail("config.protocol", e.what());
    }
    if (cfg.protocol.keepalive_interval_ms >= cfg.protocol.book.timeout_connected_ms) {
        detail::config_fail("config.protocol.keepalive_interval_ms",
                            "must be below book.timeout_connected_ms or every link expires "
                            "between keepalives");
    }

    if (root.contains("scenario")) {
        const auto& arr = root.at("scenario");
        if (!arr.is_array()) detail::config_fail("config.scenario", "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            cfg.scenario.push_back(detail::parse_action(
                arr.at(i), cfg.num_honest_peers, "config.scenario[" + std::to_string(i) + "]"));
        }
    }
    return cfg;
}

/// Emits the exact shape parse_sim_config accepts.
inline nlohmann::ordered_json sim_config_to_json(const SimConfig& cfg) {
    nlohmann::ordered_json actions = nlohmann::ordered_json::array();
    for (const auto& action : cfg.scenario) {
        nlohmann::ordered_json a;
        if (const auto* join = std::get_if<JoinAction>(&action)) {
            a = {{"action", "join"}, {"at_ms", join->at_ms}, {"peer", join->peer},
                 {"targets", join->targets}};
        } else if (const auto* dup = std::get_if<DuplicateJoinAction>(&action)) {
            a = {{"action", "duplicate_join"}, {"at_ms", dup->at_ms}, {"peer", dup->peer},
                 {"targets", dup->targets}};
        } else if (const auto* crash = std::get_if<CrashAction>(&action)) {
            a = {{"action", "crash"}, {"at_ms", crash->at_ms}, {"peer", crash->peer}};
        } else if (const auto* replay = std::get_if<ReplayBatteryAction>(&action)) {
            a = {{"action", "replay_battery"}, {"at_ms", replay->at_ms}, {"count", replay->count},
                 {"spread_ms", replay->spread_ms}};
        } else if (const auto* imp = std::get_if<ImpersonationBatteryAction>(&action)) {
            a = {{"action", "impersonation_battery"}, {"at_ms", imp->at_ms},
                 {"victim", imp->victim}, {"target", imp->target}, {"count", imp->count},
                 {"spread_ms", imp->spread_ms}};
        } else if (const auto* spam = std::get_if<SpamJoinsAction>(&action)) {
            a = {{"action", "spam_joins"}, {"at_ms", spam->at_ms}, {"target", spam->target},
                 {"count", spam->count}, {"spread_ms", spam->spread_ms}};
        }
        actions.push_back(std::move(a));
    }
    return nlohmann::ordered_json{
        {"seed", cfg.seed},
        {"num_honest_peers", cfg.num_honest_peers},
        {"latency_min_ms", cfg.latency_min_ms},
        {"latency_max_ms", cfg.latency_max_ms},
        {"drop_probability", cfg.drop_probability},
        {"duration_ms", cfg.duration_ms},
        {"protocol",
         {{"entrypoint",
           {{"max_clock_skew_past_ms", cfg.protocol.entrypoint.max_clock_skew_past_ms},
            {"max_clock_skew_future_ms", cfg.protocol.entrypoint.max_clock_skew_future_ms},
            {"rate_limit_connected", cfg.protocol.entrypoint.rate_limit_connected},
            {"rate_limit_unconnected", cfg.protocol.entrypoint.rate_limit_unconnected},
            {"rate_window_ms", cfg.protocol.entrypoint.rate_window_ms},
            {"rate_limiter_enabled", cfg.protocol.entrypoint.rate_limiter_enabled}}},
          {"book",
           {{"timeout_connected_ms", cfg.protocol.book.timeout_connected_ms},
            {"timeout_wants_to_connect_ms", cfg.protocol.book.timeout_wants_to_connect_ms},
            {"timeout_connecting_ms", cfg.protocol.book.timeout_connecting_ms}}},
          {"challenge_size_bytes", cfg.protocol.challenge_size_bytes},
          {"pow_difficulty", cfg.protocol.pow_difficulty},
          {"pow_max_iterations", cfg.protocol.pow_max_iterations},
          {"batch_wait_min_ms", cfg.protocol.batch_wait_min_ms},
          {"batch_wait_max_ms", cfg.protocol.batch_wait_max_ms},
          {"requirement_freshness_ms", cfg.protocol.requirement_freshness_ms},
          {"keepalive_interval_ms", cfg.protocol.keepalive_interval_ms}}},
        {"scenario", std::move(actions)}};
}

}  // namespace konnektor
