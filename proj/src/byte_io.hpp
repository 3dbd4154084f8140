#pragma once

#include "tnz/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace tnz::detail {

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.append(s); }

    template <typename UInt>
    void uint(UInt v) {
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
        }
    }

    void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

    void string(std::string_view s) {
        uint(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::string_view bytes(std::size_t n) {
        require(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    template <typename UInt>
    UInt uint() {
        require(sizeof(UInt));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(UInt);
        return static_cast<UInt>(v);
    }

    float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }

    std::string string() {
        const auto n = uint<std::uint32_t>();
        return std::string(bytes(n));
    }

    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void require(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw FormatError("truncated model file");
        }
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

} // namespace tnz::detail
