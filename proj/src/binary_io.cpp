#include "hrge/binary_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "hrge/errors.hpp"

namespace hrge::io {

void ByteWriter::u16(std::uint16_t v) {
    for (int k = 0; k < 2; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::string_view s) { buf_.append(s); }

void ByteReader::need(std::size_t n, std::string_view what) const {
    if (data_.size() - pos_ < n) {
        throw DataError("truncated input at byte offset " + std::to_string(pos_) + " while reading " +
                        std::string(what) + " (need " + std::to_string(n) + " bytes, " +
                        std::to_string(data_.size() - pos_) + " left)");
    }
}

std::uint16_t ByteReader::u16(std::string_view what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int k = 0; k < 2; ++k) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(data_[pos_ + k]) << (8 * k));
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64(std::string_view what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += 8;
    return v;
}

double ByteReader::f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

std::string ByteReader::bytes(std::size_t n, std::string_view what) {
    need(n, what);
    std::string out(data_.substr(pos_, n));
    pos_ += n;
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for " + path.string());
}

} // namespace hrge::io
