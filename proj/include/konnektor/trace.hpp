#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "konnektor/bytes.hpp"
#include "konnektor/crypto.hpp"

namespace konnektor {

using TraceJson = nlohmann::ordered_json;

/// Receives one structured record per observable protocol step. Field order
/// is preserved, so serialized traces are byte-stable for hashing.
using TraceSink = std::function<void(TraceJson)>;

class TraceLog {
  public:
    void emit(TraceJson rec) { records_.push_back(std::move(rec)); }

    TraceSink sink() {
        return [this](TraceJson rec) { emit(std::move(rec)); };
    }

    const std::vector<TraceJson>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& rec : records_) {
            out += rec.dump();
            out += '\n';
        }
        return out;
    }

    std::string hash_hex() const {
        auto text = to_jsonl();
        ByteSpan bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
        return to_hex(sha256(bytes));
    }

    std::size_t count_kind(std::string_view kind) const {
        std::size_t n = 0;
        for (const auto& rec : records_) {
            auto it = rec.find("kind");
            if (it != rec.end() && it->is_string() && it->get_ref<const std::string&>() == kind) {
                ++n;
            }
        }
        return n;
    }

  private:
    std::vector<TraceJson> records_;
};

}  // namespace konnektor
