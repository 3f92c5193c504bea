#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "qv/errors.hpp"
#include "qv/image.hpp"

namespace qv {

// Monochrome image files only: portable graymaps (P2/P5) and grayscale PNG,
// 8-bit or 16-bit. Samples map linearly onto [0,1].

namespace detail {

inline std::string lower_ext(const std::string& path) {
    const size_t dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

// Next whitespace-separated token, skipping '#' comments.
inline std::string pnm_token(std::istream& in) {
    std::string tok;
    for (;;) {
        const int c = in.get();
        if (c == EOF) {
            if (tok.empty()) throw DataError("pnm: unexpected end of header");
            return tok;
        }
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
}

struct GrayImage {
    Image<uint32_t> pixels;
    uint32_t maxval = 0;
};

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read: cannot open " + path);
    const std::string magic = pnm_token(in);
    if (magic != "P5" && magic != "P2") throw DataError("pnm: unsupported magic in " + path);
    const int w = std::stoi(pnm_token(in));
    const int h = std::stoi(pnm_token(in));
    const long maxval = std::stol(pnm_token(in));
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw DataError("pnm: bad header in " + path);

    GrayImage img;
    img.maxval = static_cast<uint32_t>(maxval);
    img.pixels = Image<uint32_t>(w, h);
    if (magic == "P2") {
        for (size_t i = 0; i < img.pixels.size(); ++i) {
            const long v = std::stol(pnm_token(in));
            if (v < 0 || v > maxval) throw DataError("pnm: sample out of range in " + path);
            img.pixels[i] = static_cast<uint32_t>(v);
        }
        return img;
    }
    // P5: single whitespace after maxval already consumed by tokenizer.
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<uint8_t> raw(img.pixels.size() * static_cast<size_t>(bytes));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw DataError("pnm: truncated pixel data in " + path);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const uint32_t v = bytes == 2 ? (static_cast<uint32_t>(raw[2 * i]) << 8) | raw[2 * i + 1]
                                      : raw[i];
        if (v > img.maxval) throw DataError("pnm: sample out of range in " + path);
        img.pixels[i] = v;
    }
    return img;
}

inline void write_pgm(const std::string& path, const Image<uint32_t>& img, uint32_t maxval) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write: cannot open " + path);
    out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
    if (maxval > 255) {
        for (uint32_t v : img) {
            out.put(static_cast<char>((v >> 8) & 0xFF));
            out.put(static_cast<char>(v & 0xFF));
        }
    } else {
        for (uint32_t v : img) out.put(static_cast<char>(v & 0xFF));
    }
    if (!out) throw DataError("write: failed for " + path);
}

struct PngCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

inline GrayImage read_png(const std::string& path) {
    std::unique_ptr<std::FILE, PngCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("read: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("png: allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: only grayscale inputs are supported: " + path);
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        depth = 8;
    }
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    GrayImage img;
    img.maxval = depth == 16 ? 65535u : 255u;
    img.pixels = Image<uint32_t>(w, h);

    const size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<uint8_t> row(row_bytes);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            img.pixels(x, y) = depth == 16
                                   ? (static_cast<uint32_t>(row[2 * x]) << 8) | row[2 * x + 1]
                                   : row[x];
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png(const std::string& path, const Image<uint32_t>& img, uint32_t maxval) {
    const int depth = maxval > 255 ? 16 : 8;
    std::unique_ptr<std::FILE, PngCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("write: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("png: allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png: failed to encode " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.width()) * (depth == 16 ? 2 : 1));
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const uint32_t v = img(x, y);
            if (depth == 16) {
                row[2 * x] = static_cast<uint8_t>(v >> 8);
                row[2 * x + 1] = static_cast<uint8_t>(v & 0xFF);
            } else {
                row[x] = static_cast<uint8_t>(v & 0xFF);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline GrayImage read_gray(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "pgm" || ext == "pnm") return read_pgm(path);
    if (ext == "png") return read_png(path);
    throw DataError("read: unsupported image format: " + path);
}

inline void write_gray(const std::string& path, const Image<uint32_t>& img, uint32_t maxval) {
    const std::string ext = lower_ext(path);
    if (ext == "pgm" || ext == "pnm") {
        write_pgm(path, img, maxval);
        return;
    }
    if (ext == "png") {
        write_png(path, img, maxval);
        return;
    }
    throw DataError("write: unsupported image format: " + path);
}

}  // namespace detail

// Normalized [0,1] grayscale; 8-bit and 16-bit inputs map linearly.
inline Image<double> read_groundtruth(const std::string& path) {
    const detail::GrayImage raw = detail::read_gray(path);
    Image<double> out(raw.pixels.width(), raw.pixels.height());
    const double inv = 1.0 / static_cast<double>(raw.maxval);
    for (size_t i = 0; i < out.size(); ++i) out[i] = raw.pixels[i] * inv;
    return out;
}

// 8-bit display export with gamma 1/2.2; values clamped to [0,1] first.
inline void export_display(const Image<double>& img, const std::string& path) {
    Image<uint32_t> bytes(img.width(), img.height());
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img[i], 0.0, 1.0);
        bytes[i] = static_cast<uint32_t>(std::lround(std::pow(v, 1.0 / 2.2) * 255.0));
    }
    detail::write_gray(path, bytes, 255);
}

// Lossless-enough linear storage for restored frames (16-bit).
inline void write_linear16(const Image<double>& img, const std::string& path) {
    Image<uint32_t> px(img.width(), img.height());
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img[i], 0.0, 1.0);
        px[i] = static_cast<uint32_t>(std::lround(v * 65535.0));
    }
    detail::write_gray(path, px, 65535);
}

}  // namespace qv
