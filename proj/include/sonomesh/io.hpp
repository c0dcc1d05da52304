#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sonomesh/common.hpp"
#include "sonomesh/signal.hpp"

namespace sonomesh::io {

// ---- little-endian primitives -------------------------------------------
// Writers serialize explicitly byte-by-byte so the formats are LE on any host.

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& s, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(s, u);
}
inline void put_f64(std::string& s, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

class Reader {
  public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(
            static_cast<unsigned char>(data_[pos_]) |
            (static_cast<unsigned char>(data_[pos_ + 1]) << 8));
        pos_ += 2;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<unsigned char>(data_[pos_++]);
    }
    float f32() {
        std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i)
            u |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void expect_magic(const char* magic) {
        if (bytes(4) != magic)
            throw IoError(std::string("bad magic, expected ") + magic);
    }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw IoError("truncated file");
    }
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Atomic write: temp file in the same directory, then rename. Artifacts only
// appear on success.
inline void atomic_write(const std::filesystem::path& path, const std::string& data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---- WAV (mono, IEEE float32) -------------------------------------------

inline void write_wav(const std::filesystem::path& path, const SampleBuffer& buf) {
    const std::uint32_t rate = static_cast<std::uint32_t>(std::llround(buf.f_s));
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 4);
    std::string s;
    s += "RIFF";
    detail::put_u32(s, 36 + data_bytes);
    s += "WAVEfmt ";
    detail::put_u32(s, 16);
    s.push_back(3);  // IEEE float
    s.push_back(0);
    s.push_back(1);  // mono
    s.push_back(0);
    detail::put_u32(s, rate);
    detail::put_u32(s, rate * 4);
    s.push_back(4);  // block align
    s.push_back(0);
    s.push_back(32);  // bits per sample
    s.push_back(0);
    s += "data";
    detail::put_u32(s, data_bytes);
    for (double v : buf.samples) detail::put_f32(s, static_cast<float>(v));
    atomic_write(path, s);
}

inline SampleBuffer read_wav(const std::filesystem::path& path) {
    detail::Reader r(read_file(path));
    r.expect_magic("RIFF");
    r.u32();
    if (r.bytes(4) != "WAVE") throw IoError("not a WAVE file");
    SampleBuffer buf;
    std::uint32_t data_len = 0;
    bool have_fmt = false, have_data = false;
    std::string data;
    while (r.remaining() >= 8 && !(have_fmt && have_data)) {
        std::string id = r.bytes(4);
        std::uint32_t len = r.u32();
        if (id == "fmt ") {
            std::uint16_t fmt = r.u16();
            std::uint16_t ch = r.u16();
            std::uint32_t rate = r.u32();
            r.u32();
            r.u16();
            std::uint16_t bits = r.u16();
            if (len > 16) r.bytes(len - 16);
            if (fmt != 3 || ch != 1 || bits != 32)
                throw IoError("unsupported WAV layout (mono float32 expected)");
            buf.f_s = rate;
            have_fmt = true;
        } else if (id == "data") {
            data = r.bytes(len);
            data_len = len;
            have_data = true;
        } else {
            r.bytes(len);
        }
    }
    if (!have_fmt || !have_data) throw IoError("incomplete WAV file");
    detail::Reader dr(data);
    buf.samples.resize(data_len / 4);
    for (auto& v : buf.samples) v = dr.f32();
    return buf;
}

// ---- CBUF: "CBUF", u32 length, u32 rate, interleaved re/im float32 -------

inline void write_cbuf(const std::filesystem::path& path, const ComplexBuffer& buf) {
    std::string s;
    s += "CBUF";
    detail::put_u32(s, static_cast<std::uint32_t>(buf.samples.size()));
    detail::put_u32(s, static_cast<std::uint32_t>(std::llround(buf.f_s)));
    for (const auto& c : buf.samples) {
        detail::put_f32(s, static_cast<float>(c.real()));
        detail::put_f32(s, static_cast<float>(c.imag()));
    }
    atomic_write(path, s);
}

inline ComplexBuffer read_cbuf(const std::filesystem::path& path) {
    detail::Reader r(read_file(path));
    r.expect_magic("CBUF");
    const std::uint32_t n = r.u32();
    ComplexBuffer buf;
    buf.f_s = r.u32();
    buf.samples.resize(n);
    for (auto& c : buf.samples) {
        double re = r.f32();
        double im = r.f32();
        c = cplx(re, im);
    }
    return buf;
}

// ---- PGM (P5, 16-bit, max-normalized) ------------------------------------

inline void write_pgm(const std::filesystem::path& path, const std::vector<double>& pixels,
                      std::size_t h, std::size_t w) {
    if (pixels.size() != h * w) throw ShapeError("write_pgm: pixel count mismatch");
    double mx = 0.0;
    for (double v : pixels) mx = std::max(mx, v);
    if (mx <= 0.0) mx = 1.0;
    std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
    for (double v : pixels) {
        auto q = static_cast<std::uint16_t>(std::llround(std::max(0.0, v) / mx * 65535.0));
        s.push_back(static_cast<char>(q >> 8));  // PGM is big-endian
        s.push_back(static_cast<char>(q & 0xff));
    }
    atomic_write(path, s);
}

// ---- tensor checkpoint container ("REGP"/"FUSP") -------------------------
// magic, u32 schema_version, u32 tensor count,
// per tensor: u8 rank, u32 dims..., float32 data.

struct TensorBlob {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

inline void write_checkpoint(const std::filesystem::path& path, const char* magic,
                             std::uint32_t schema_version,
                             const std::vector<TensorBlob>& tensors) {
    std::string s;
    s += magic;
    detail::put_u32(s, schema_version);
    detail::put_u32(s, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        s.push_back(static_cast<char>(t.dims.size()));
        std::size_t n = 1;
        for (auto d : t.dims) {
            detail::put_u32(s, d);
            n *= d;
        }
        if (n != t.data.size()) throw IoError("checkpoint tensor dims/data mismatch");
        for (double v : t.data) detail::put_f32(s, static_cast<float>(v));
    }
    atomic_write(path, s);
}

inline std::vector<TensorBlob> read_checkpoint(const std::filesystem::path& path,
                                               const char* magic,
                                               std::uint32_t expect_version) {
    detail::Reader r(read_file(path));
    r.expect_magic(magic);
    const std::uint32_t ver = r.u32();
    if (ver != expect_version)
        throw IoError("checkpoint schema_version mismatch");
    std::vector<TensorBlob> out(r.u32());
    for (auto& t : out) {
        const std::uint8_t rank = r.u8();
        t.dims.resize(rank);
        std::size_t n = 1;
        for (auto& d : t.dims) {
            d = r.u32();
            n *= d;
        }
        t.data.resize(n);
        for (auto& v : t.data) v = r.f32();
    }
    return out;
}

}  // namespace sonomesh::io
