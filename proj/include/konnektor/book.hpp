#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "konnektor/crypto.hpp"
#include "konnektor/events.hpp"

namespace konnektor {

enum class PeerStatus : std::uint8_t {
    Connected,
    WantsToConnect,
    Connecting,
};

inline const char* status_name(PeerStatus s) {
    switch (s) {
        case PeerStatus::Connected: return "Connected";
        case PeerStatus::WantsToConnect: return "WantsToConnect";
        case PeerStatus::Connecting: return "Connecting";
    }
    return "Unknown";
}

struct BookConfig {
    std::uint64_t timeout_connected_ms = 10000;
    std::uint64_t timeout_wants_to_connect_ms = 30000;
    std::uint64_t timeout_connecting_ms = 30000;
};

struct BookEntry {
    PeerStatus status = PeerStatus::WantsToConnect;
    Envelope last_event;
    std::optional<std::uint64_t> connected_at_ms;  // set iff status == Connected
};

/// Reports every membership change: `from`/`to` are nullopt when the peer is
/// absent on that side (creation, expiry, removal).
using TransitionSink = std::function<void(const PeerAddress&, std::optional<PeerStatus> from,
                                          std::optional<PeerStatus> to)>;

/// Per-peer registry. Every public operation sweeps expired entries first;
/// an entry expires when its last_event age strictly exceeds the timeout for
/// its status (age equal to the timeout is retained). Iteration is in
/// address-byte order so traces are reproducible.
class ConnectionBook {
  public:
    explicit ConnectionBook(BookConfig cfg) : cfg_(cfg) {}

    void set_transition_sink(TransitionSink sink) { sink_ = std::move(sink); }

    std::vector<std::pair<PeerAddress, PeerStatus>> sweep_expired(std::uint64_t now_ms) {
        std::vector<std::pair<PeerAddress, PeerStatus>> evicted;
        for (auto it = entries_.begin(); it != entries_.end();) {
            std::uint64_t ts = it->second.last_event.timestamp_ms;
            std::uint64_t limit = timeout_for(it->second.status);
            if (now_ms > ts && now_ms - ts > limit) {
                evicted.emplace_back(it->first, it->second.status);
                notify(it->first, it->second.status, std::nullopt);
                it = entries_.erase(it);
            } else {
                ++it;
            }
        }
        return evicted;
    }

    /// Returns false (and changes nothing) on an illegal status transition.
    /// Legal: create as WantsToConnect or Connecting, refresh the same
    /// status, or promote WantsToConnect/Connecting to Connected.
    bool upsert(const PeerAddress& peer, PeerStatus status, Envelope last_event,
                std::uint64_t now_ms) {
        sweep_expired(now_ms);
        auto it = entries_.find(peer);
        std::optional<PeerStatus> from;
        if (it != entries_.end()) from = it->second.status;
        if (!transition_legal(from, status)) return false;

        BookEntry entry;
        entry.status = status;
        entry.last_event = std::move(last_event);
        if (status == PeerStatus::Connected) {
            entry.connected_at_ms =
                (from == PeerStatus::Connected) ? it->second.connected_at_ms : now_ms;
        }
        entries_[peer] = std::move(entry);
        if (from != status) notify(peer, from, status);
        return true;
    }

    std::optional<BookEntry> get(const PeerAddress& peer, std::uint64_t now_ms) {
        sweep_expired(now_ms);
        auto it = entries_.find(peer);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    bool remove(const PeerAddress& peer) {
        auto it = entries_.find(peer);
        if (it == entries_.end()) return false;
        notify(peer, it->second.status, std::nullopt);
        entries_.erase(it);
        return true;
    }

    std::vector<std::pair<PeerAddress, BookEntry>> peers_with_status(PeerStatus status,
                                                                     std::uint64_t now_ms) {
        sweep_expired(now_ms);
        std::vector<std::pair<PeerAddress, BookEntry>> out;
        for (const auto& [addr, entry] : entries_) {
            if (entry.status == status) out.emplace_back(addr, entry);
        }
        return out;
    }

    std::vector<std::pair<PeerAddress, BookEntry>> all_entries(std::uint64_t now_ms) {
        sweep_expired(now_ms);
        std::vector<std::pair<PeerAddress, BookEntry>> out;
        out.reserve(entries_.size());
        for (const auto& [addr, entry] : entries_) out.emplace_back(addr, entry);
        return out;
    }

    std::size_t size() const { return entries_.size(); }

    static bool transition_legal(std::optional<PeerStatus> from, PeerStatus to) {
        if (!from) return to == PeerStatus::WantsToConnect || to == PeerStatus::Connecting;
        if (*from == to) return true;
        return (*from == PeerStatus::WantsToConnect || *from == PeerStatus::Connecting) &&
               to == PeerStatus::Connected;
    }

  private:
    std::uint64_t timeout_for(PeerStatus status) const {
        switch (status) {
            case PeerStatus::Connected: return cfg_.timeout_connected_ms;
            case PeerStatus::WantsToConnect: return cfg_.timeout_wants_to_connect_ms;
            case PeerStatus::Connecting: return cfg_.timeout_connecting_ms;
        }
        return cfg_.timeout_connected_ms;
    }

    void notify(const PeerAddress& peer, std::optional<PeerStatus> from,
                std::optional<PeerStatus> to) {
        if (sink_) sink_(peer, from, to);
    }

    BookConfig cfg_;
    std::map<PeerAddress, BookEntry> entries_;
    TransitionSink sink_;
};

}  // namespace konnektor
