#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "konnektor/book.hpp"
#include "konnektor/crypto.hpp"

namespace konnektor {

struct VerifyResult {
    bool ok = true;
    std::vector<std::string> problems;
    std::string trace_hash_hex;
    std::size_t records = 0;
};

namespace verify_detail {

inline std::optional<PeerStatus> status_from_name(const std::string& name) {
    if (name == "Connected") return PeerStatus::Connected;
    if (name == "WantsToConnect") return PeerStatus::WantsToConnect;
    if (name == "Connecting") return PeerStatus::Connecting;
    return std::nullopt;  // includes "absent"
}

inline bool known_kind(const std::string& kind) {
    static const std::set<std::string> kinds = {
        "recv",      "send",     "broadcast",          "disconnect",
        "transition", "batch_armed", "challenge",       "solve",
        "duplicate_detected", "duplicate_removed", "snapshot", "scenario"};
    return kinds.count(kind) > 0;
}

}  // namespace verify_detail

/// Re-checks a trace against the protocol's structural invariants:
/// every record is well-formed, per-peer status transitions follow the legal
/// lattice, challenges never outnumber armed batch deadlines, every removal
/// verdict was preceded by a detection for the same suspect, and the final
/// snapshots agree with the transition history. The hash of the exact input
/// bytes is always reported.
inline VerifyResult verify_trace_text(const std::string& jsonl_text) {
    using Json = nlohmann::ordered_json;
    VerifyResult result;
    {
        ByteSpan bytes{reinterpret_cast<const std::uint8_t*>(jsonl_text.data()),
                       jsonl_text.size()};
        auto digest = sha256(bytes);
        result.trace_hash_hex = to_hex(ByteSpan{digest.data(), digest.size()});
    }

    auto complain = [&](std::size_t line_no, const std::string& what) {
        result.ok = false;
        if (result.problems.size() < 50) {
            result.problems.push_back("line " + std::to_string(line_no) + ": " + what);
        }
    };

    // peer -> target -> current status (nullopt = absent)
    std::map<std::string, std::map<std::string, std::optional<PeerStatus>>> state;
    std::map<std::string, std::uint64_t> armed_per_peer;
    std::map<std::string, std::uint64_t> challenges_per_peer;
    std::set<std::pair<std::string, std::string>> detected_pairs;
    std::map<std::string, Json> latest_snapshot;
    std::map<std::string, std::size_t> snapshot_line;

    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < jsonl_text.size()) {
        std::size_t end = jsonl_text.find('\n', start);
        if (end == std::string::npos) end = jsonl_text.size();
        std::string line = jsonl_text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        ++line_no;

        Json rec;
        try {
            rec = Json::parse(line);
        } catch (const Json::parse_error&) {
            complain(line_no, "not valid JSON");
            continue;
        }
        if (!rec.is_object() || !rec.contains("kind") || !rec.at("kind").is_string()) {
            complain(line_no, "record has no kind");
            continue;
        }
        result.records += 1;
        std::string kind = rec.at("kind").get<std::string>();
        if (!verify_detail::known_kind(kind)) {
            complain(line_no, "unknown record kind \"" + kind + "\"");
            continue;
        }

        if (kind == "transition") {
            if (!rec.contains("peer") || !rec.contains("target") || !rec.contains("from") ||
                !rec.contains("to")) {
                complain(line_no, "transition record missing fields");
                continue;
            }
            std::string peer = rec.at("peer").get<std::string>();
            std::string target = rec.at("target").get<std::string>();
            std::string from_name = rec.at("from").get<std::string>();
            std::string to_name = rec.at("to").get<std::string>();
            auto from = verify_detail::status_from_name(from_name);
            auto to = verify_detail::status_from_name(to_name);
            if (!from && from_name != "absent") {
                complain(line_no, "unknown from-status \"" + from_name + "\"");
                continue;
            }
            if (!to && to_name != "absent") {
                complain(line_no, "unknown to-status \"" + to_name + "\"");
                continue;
            }
            auto& current = state[peer][target];
            if (current != from) {
                complain(line_no, "transition claims from=" + from_name +
                                      " but the tracked state differs");
            }
            if (to && !ConnectionBook::transition_legal(from, *to)) {
                complain(line_no, "illegal transition " + from_name + " -> " + to_name);
            }
            current = to;
        } else if (kind == "batch_armed") {
            armed_per_peer[rec.value("peer", "")] += 1;
        } else if (kind == "challenge") {
            challenges_per_peer[rec.value("peer", "")] += 1;
        } else if (kind == "duplicate_detected") {
            detected_pairs.insert({rec.value("peer", ""), rec.value("suspect", "")});
        } else if (kind == "duplicate_removed") {
            std::pair<std::string, std::string> key{rec.value("peer", ""),
                                                    rec.value("suspect", "")};
            if (!detected_pairs.count(key)) {
                complain(line_no, "removal of " + key.second.substr(0, 8) +
                                      " without a prior detection at the same peer");
            }
        } else if (kind == "snapshot") {
            if (!rec.contains("peer") || !rec.contains("entries") ||
                !rec.at("entries").is_array()) {
                complain(line_no, "snapshot record missing fields");
                continue;
            }
            latest_snapshot[rec.at("peer").get<std::string>()] = rec;
            snapshot_line[rec.at("peer").get<std::string>()] = line_no;
        }
    }

    for (const auto& [peer, counted] : challenges_per_peer) {
        auto armed = armed_per_peer.count(peer) ? armed_per_peer.at(peer) : 0;
        if (counted > armed) {
            result.ok = false;
            result.problems.push_back("peer " + peer.substr(0, 8) + ": " +
                                      std::to_string(counted) + " challenges from " +
                                      std::to_string(armed) + " armed deadlines");
        }
    }

    for (const auto& [peer, snap] : latest_snapshot) {
        std::size_t at_line = snapshot_line.at(peer);
        std::map<std::string, std::string> listed;
        for (const auto& entry : snap.at("entries")) {
            if (!entry.contains("target") || !entry.contains("status")) {
                complain(at_line, "snapshot entry missing fields");
                continue;
            }
            listed[entry.at("target").get<std::string>()] =
                entry.at("status").get<std::string>();
        }
        const auto& tracked = state[peer];
        for (const auto& [target, status] : tracked) {
            std::string tracked_name = status ? status_name(*status) : "absent";
            auto it = listed.find(target);
            std::string listed_name = it == listed.end() ? "absent" : it->second;
            if (tracked_name != listed_name) {
                complain(at_line, "snapshot lists " + target.substr(0, 8) + " as " +
                                      listed_name + " but transitions end at " + tracked_name);
            }
        }
        for (const auto& [target, status] : listed) {
            if (!tracked.count(target)) {
                complain(at_line,
                         "snapshot entry " + target.substr(0, 8) + " has no transition history");
            }
        }
    }

    return result;
}

}  // namespace konnektor
