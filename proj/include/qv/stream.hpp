#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "qv/errors.hpp"
#include "qv/sensor.hpp"

namespace qv {

// QVS container: 21-byte little-endian header followed by bit-packed frames.
// Pixels are packed LSB-first in nbits-wide fields, row-major; every row is
// padded to a byte boundary so frames (and rows) stay byte-addressable.
struct StreamHeader {
    static constexpr char kMagic[4] = {'Q', 'V', 'S', '1'};

    uint16_t width = 0;
    uint16_t height = 0;
    uint8_t nbits = 0;
    uint32_t frame_count = 0;
    float fps = 0.0f;
    float nominal_ppp = 0.0f;

    void validate() const {
        if (nbits < 1 || nbits > 16) throw DataError("QVS header: nbits must be in [1,16]");
        if (width == 0 || height == 0) throw DataError("QVS header: empty dimensions");
    }
};

inline size_t qvs_row_bytes(int width, int nbits) {
    return (static_cast<size_t>(width) * static_cast<size_t>(nbits) + 7) / 8;
}

inline size_t qvs_frame_bytes(int width, int height, int nbits) {
    return qvs_row_bytes(width, nbits) * static_cast<size_t>(height);
}

constexpr size_t kQvsHeaderBytes = 21;

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline uint16_t get_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline float get_f32(const uint8_t* p) {
    const uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline std::vector<uint8_t> write_stream(const std::vector<QuantaFrame>& frames,
                                         const StreamHeader& header) {
    header.validate();
    if (frames.size() != header.frame_count)
        throw DataError("write_stream: frame count does not match header");
    const uint32_t limit = 1u << header.nbits;
    for (const QuantaFrame& f : frames) {
        if (!f.same_size(header.width, header.height))
            throw DataError("write_stream: frame dimensions do not match header");
        for (uint16_t v : f)
            if (v >= limit)
                throw ValueOverflowError("write_stream: pixel value does not fit in " +
                                         std::to_string(int(header.nbits)) + " bits");
    }

    std::vector<uint8_t> out;
    out.reserve(kQvsHeaderBytes + frames.size() * qvs_frame_bytes(header.width, header.height, header.nbits));
    out.insert(out.end(), StreamHeader::kMagic, StreamHeader::kMagic + 4);
    detail::put_u16(out, header.width);
    detail::put_u16(out, header.height);
    out.push_back(header.nbits);
    detail::put_u32(out, header.frame_count);
    detail::put_f32(out, header.fps);
    detail::put_f32(out, header.nominal_ppp);

    const int nbits = header.nbits;
    const size_t row_bytes = qvs_row_bytes(header.width, nbits);
    for (const QuantaFrame& f : frames) {
        for (int y = 0; y < f.height(); ++y) {
            uint32_t acc = 0;
            int acc_bits = 0;
            size_t emitted = 0;
            for (int x = 0; x < f.width(); ++x) {
                acc |= static_cast<uint32_t>(f(x, y)) << acc_bits;
                acc_bits += nbits;
                while (acc_bits >= 8) {
                    out.push_back(static_cast<uint8_t>(acc));
                    acc >>= 8;
                    acc_bits -= 8;
                    ++emitted;
                }
            }
            if (acc_bits > 0) {
                out.push_back(static_cast<uint8_t>(acc));
                ++emitted;
            }
            while (emitted < row_bytes) {  // width 0 cannot happen; keep rows exact
                out.push_back(0);
                ++emitted;
            }
        }
    }
    return out;
}

struct Stream {
    StreamHeader header;
    std::vector<QuantaFrame> frames;
};

inline Stream read_stream(const uint8_t* data, size_t size) {
    if (size < kQvsHeaderBytes) throw TruncatedStreamError("read_stream: missing header");
    if (std::memcmp(data, StreamHeader::kMagic, 4) != 0)
        throw BadMagicError("read_stream: bad magic");
    Stream s;
    s.header.width = detail::get_u16(data + 4);
    s.header.height = detail::get_u16(data + 6);
    s.header.nbits = data[8];
    s.header.frame_count = detail::get_u32(data + 9);
    s.header.fps = detail::get_f32(data + 13);
    s.header.nominal_ppp = detail::get_f32(data + 17);
    s.header.validate();

    const size_t frame_bytes = qvs_frame_bytes(s.header.width, s.header.height, s.header.nbits);
    const size_t expected = kQvsHeaderBytes + frame_bytes * s.header.frame_count;
    if (size < expected) throw TruncatedStreamError("read_stream: truncated payload");
    if (size > expected) throw DataError("read_stream: trailing bytes after payload");

    const int nbits = s.header.nbits;
    const uint32_t mask = (1u << nbits) - 1;
    const size_t row_bytes = qvs_row_bytes(s.header.width, nbits);
    const uint8_t* p = data + kQvsHeaderBytes;
    s.frames.reserve(s.header.frame_count);
    for (uint32_t fi = 0; fi < s.header.frame_count; ++fi) {
        QuantaFrame f(s.header.width, s.header.height);
        for (int y = 0; y < f.height(); ++y) {
            const uint8_t* row = p + static_cast<size_t>(y) * row_bytes;
            uint32_t acc = 0;
            int acc_bits = 0;
            size_t consumed = 0;
            for (int x = 0; x < f.width(); ++x) {
                while (acc_bits < nbits) {
                    acc |= static_cast<uint32_t>(row[consumed++]) << acc_bits;
                    acc_bits += 8;
                }
                f(x, y) = static_cast<uint16_t>(acc & mask);
                acc >>= nbits;
                acc_bits -= nbits;
            }
        }
        s.frames.push_back(std::move(f));
        p += frame_bytes;
    }
    return s;
}

inline Stream read_stream(const std::vector<uint8_t>& bytes) {
    return read_stream(bytes.data(), bytes.size());
}

inline void write_stream_file(const std::string& path, const std::vector<QuantaFrame>& frames,
                              const StreamHeader& header) {
    const std::vector<uint8_t> bytes = write_stream(frames, header);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_stream_file: cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write_stream_file: write failed for " + path);
}

inline Stream read_stream_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_stream_file: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_stream(bytes);
}

}  // namespace qv
