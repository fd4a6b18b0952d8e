#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace konnektor {

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;

inline std::string to_hex(ByteSpan data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

inline std::optional<Bytes> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

/// Appends big-endian primitives and length-prefixed blobs to a buffer.
class ByteWriter {
  public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }

    void u32_be(std::uint32_t v) {
        out_.push_back(static_cast<std::uint8_t>(v >> 24));
        out_.push_back(static_cast<std::uint8_t>(v >> 16));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
        out_.push_back(static_cast<std::uint8_t>(v));
    }

    void u64_be(std::uint64_t v) {
        u32_be(static_cast<std::uint32_t>(v >> 32));
        u32_be(static_cast<std::uint32_t>(v));
    }

    void raw(ByteSpan data) { out_.insert(out_.end(), data.begin(), data.end()); }

    // 4-byte big-endian length prefix followed by the bytes
    void blob(ByteSpan data) {
        if (data.size() > 0xffffffffull) throw std::length_error("blob too large");
        u32_be(static_cast<std::uint32_t>(data.size()));
        raw(data);
    }

  private:
    Bytes& out_;
};

/// Cursor over immutable bytes; every read reports failure instead of throwing
/// so decoders stay total over hostile input.
class ByteReader {
  public:
    explicit ByteReader(ByteSpan data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    bool exhausted() const { return remaining() == 0; }

    bool u8(std::uint8_t& v) {
        if (remaining() < 1) return false;
        v = data_[pos_++];
        return true;
    }

    bool u32_be(std::uint32_t& v) {
        if (remaining() < 4) return false;
        v = std::uint32_t{data_[pos_]} << 24 | std::uint32_t{data_[pos_ + 1]} << 16 |
            std::uint32_t{data_[pos_ + 2]} << 8 | std::uint32_t{data_[pos_ + 3]};
        pos_ += 4;
        return true;
    }

    bool u64_be(std::uint64_t& v) {
        std::uint32_t hi = 0, lo = 0;
        if (!u32_be(hi) || !u32_be(lo)) return false;
        v = std::uint64_t{hi} << 32 | lo;
        return true;
    }

    bool raw(std::size_t n, ByteSpan& out) {
        if (remaining() < n) return false;
        out = data_.subspan(pos_, n);
        pos_ += n;
        return true;
    }

    template <std::size_t N>
    bool fixed(std::array<std::uint8_t, N>& out) {
        ByteSpan s;
        if (!raw(N, s)) return false;
        std::memcpy(out.data(), s.data(), N);
        return true;
    }

    bool blob(Bytes& out) {
        std::uint32_t len = 0;
        if (!u32_be(len)) return false;
        if (remaining() < len) return false;
        ByteSpan s;
        raw(len, s);
        out.assign(s.begin(), s.end());
        return true;
    }

  private:
    ByteSpan data_;
    std::size_t pos_ = 0;
};

}  // namespace konnektor
