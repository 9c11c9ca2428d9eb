#pragma once

// Little-endian byte buffers for the checkpoint and log formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace framepred::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
   public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u16(std::uint16_t v) { bytes(&v, sizeof v); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void f32s(const float* p, std::size_t n) { bytes(p, n * sizeof(float)); }
    void text(std::string_view s) { bytes(s.data(), s.size()); }

    const std::vector<char>& buffer() const { return buf_; }

    void write_file(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
    }

   private:
    std::vector<char> buf_;
};

template <typename Error>
class ByteReader {
   public:
    explicit ByteReader(std::vector<char> data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

    static ByteReader from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open '" + path.string() + "'");
        std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(data), path.string());
    }

    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint16_t u16() { return read<std::uint16_t>(); }
    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint64_t u64() { return read<std::uint64_t>(); }
    double f64() { return read<double>(); }
    void f32s(float* p, std::size_t n) { bytes(p, n * sizeof(float)); }
    std::string text(std::size_t n) {
        need(n);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t size() const { return data_.size(); }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    const std::string& source() const { return source_; }

   private:
    template <typename V>
    V read() {
        V v;
        bytes(&v, sizeof v);
        return v;
    }

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw Error("'" + source_ + "' is truncated: needed " + std::to_string(pos_ + n) +
                        " bytes, file has " + std::to_string(data_.size()));
        }
    }

    std::vector<char> data_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace framepred::detail
