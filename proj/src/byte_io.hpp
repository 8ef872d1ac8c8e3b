#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "wreckseg/error.hpp"

namespace wreckseg::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

// Little-endian serializer.
class ByteWriter {
public:
    explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void raw(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }

private:
    template <typename U>
    void put_le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t>& out_;
};

// Bounds-checked reader. Every overrun throws `overrun_code`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> in, ErrorCode overrun_code, bool little_endian = true)
        : in_(in), code_(overrun_code), le_(little_endian) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return in_.size() - pos_; }
    void seek(std::size_t p) {
        if (p > in_.size()) fail(code_, "offset past end of input");
        pos_ = p;
    }
    void need(std::size_t n) const {
        if (n > in_.size() - pos_) fail(code_, "unexpected end of input");
    }

    std::uint8_t u8() { need(1); return in_[pos_++]; }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::uint64_t get(std::size_t n) {
        need(n);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t b = in_[pos_ + i];
            v |= le_ ? (b << (8 * i)) : (b << (8 * (n - 1 - i)));
        }
        pos_ += n;
        return v;
    }

    std::span<const std::uint8_t> in_;
    ErrorCode code_;
    bool le_;
    std::size_t pos_ = 0;
};

}  // namespace wreckseg::detail
