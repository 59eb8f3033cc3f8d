#pragma once

#include <qaf/error.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace qaf {

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
public:
    template <class T>
    void uint(T v)
    {
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void u8(std::uint8_t v) { uint(v); }
    void u16(std::uint16_t v) { uint(v); }
    void u32(std::uint32_t v) { uint(v); }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size, std::string what)
        : data_(data), size_(size), what_(std::move(what))
    {
    }

    template <class T>
    T uint()
    {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::uint8_t u8() { return uint<std::uint8_t>(); }
    std::uint16_t u16() { return uint<std::uint16_t>(); }
    std::uint32_t u32() { return uint<std::uint32_t>(); }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

    std::string raw(std::size_t n)
    {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const noexcept { return size_ - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void need(std::size_t n) const
    {
        if (size_ - pos_ < n)
            throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                              ", have " + std::to_string(size_ - pos_) + ")");
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a temporary file and renames, so readers never see a
/// partially written file.
inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot rename '" + tmp + "' to '" + path + "'");
}

} // namespace qaf
