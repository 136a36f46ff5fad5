// binary_io.hpp - little-endian encoding helpers for the arcfml file formats

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "arcfml/error.hpp"

namespace arcfml::io {

namespace detail {

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}

}  // namespace detail

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        value = detail::to_little(value);
        const auto* p = reinterpret_cast<const char*>(&value);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    void put_u8(std::uint8_t v) { put(v); }
    void put_u16(std::uint16_t v) { put(v); }
    void put_u32(std::uint32_t v) { put(v); }
    void put_u64(std::uint64_t v) { put(v); }
    void put_f32(float v) { put(v); }
    void put_f64(double v) { put(v); }

    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    const std::vector<char>& bytes() const noexcept { return buf_; }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    std::vector<char> buf_;
};

/// Bounds-checked little-endian reader; every failure reports the byte offset.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(const char* what) {
        require(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return detail::to_little(v);
    }

    std::uint8_t get_u8(const char* what) { return get<std::uint8_t>(what); }
    std::uint16_t get_u16(const char* what) { return get<std::uint16_t>(what); }
    std::uint32_t get_u32(const char* what) { return get<std::uint32_t>(what); }
    std::uint64_t get_u64(const char* what) { return get<std::uint64_t>(what); }
    float get_f32(const char* what) { return get<float>(what); }
    double get_f64(const char* what) { return get<double>(what); }

    std::string get_bytes(std::size_t n, const char* what) {
        require(n, what);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    void expect_magic(std::string_view magic) {
        if (data_.size() - pos_ < magic.size() || data_.substr(pos_, magic.size()) != magic)
            throw ParseError("bad magic, expected \"" + std::string(magic) + "\"", pos_);
        pos_ += magic.size();
    }

    void expect_version(std::uint16_t expected) {
        const auto at = pos_;
        const auto v = get_u16("version");
        if (v != expected)
            throw ParseError("unsupported version " + std::to_string(v) + ", expected " +
                                 std::to_string(expected),
                             at);
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

    void require(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n)
            throw ParseError(std::string("truncated payload while reading ") + what, pos_);
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file for reading: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open file for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + path);
}

}  // namespace arcfml::io
