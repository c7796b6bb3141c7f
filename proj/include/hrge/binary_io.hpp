#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace hrge::io {

// Appends little-endian encoded values to a byte buffer.
class ByteWriter {
public:
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void bytes(std::string_view s);

    const std::string& buffer() const noexcept { return buf_; }
    std::string take() noexcept { return std::move(buf_); }

private:
    std::string buf_;
};

// Reads little-endian values; running past the end throws DataError naming the
// byte offset and the field being read.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint16_t u16(std::string_view what);
    std::uint32_t u32(std::string_view what);
    std::uint64_t u64(std::string_view what);
    double f64(std::string_view what);
    std::string bytes(std::size_t n, std::string_view what);

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n, std::string_view what) const;

    std::string_view data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

} // namespace hrge::io
