#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qv {

// One row of the bit-depth trade-off table: running an n-bit sensor at the
// exposure level of a base 1-bit stream divides the frame rate by 2^n - 1
// and scales accumulated read noise and data rate with it.
struct TradeoffRow {
    int nbits = 0;
    int64_t fps = 0;
    double read_noise_rate = 0;  // electrons / pixel / second
    double data_rate_mbps = 0;   // megabits / second
};

// The published table mixes integer roundings of base_fps / (2^n - 1), so the
// convention is explicit here; downstream columns always derive from the
// integer fps actually chosen.
enum class FpsRounding { nearest, down };

inline int64_t tradeoff_fps(int nbits, double base_fps_1bit, FpsRounding rounding) {
    if (nbits < 1 || nbits > 62) throw std::invalid_argument("tradeoff_fps: nbits out of range");
    if (!(base_fps_1bit > 0)) throw std::invalid_argument("tradeoff_fps: base fps must be > 0");
    const double exact = base_fps_1bit / static_cast<double>((int64_t{1} << nbits) - 1);
    const double fps = (rounding == FpsRounding::nearest) ? std::round(exact) : std::floor(exact);
    return std::max<int64_t>(1, static_cast<int64_t>(fps));
}

inline TradeoffRow tradeoff_columns(int nbits, int64_t fps, double sigma_read, int64_t npixels) {
    TradeoffRow row;
    row.nbits = nbits;
    row.fps = fps;
    row.read_noise_rate = static_cast<double>(fps) * sigma_read;
    row.data_rate_mbps = static_cast<double>(nbits) * static_cast<double>(fps) *
                         static_cast<double>(npixels) / 1e6;
    return row;
}

inline TradeoffRow tradeoff_row(int nbits, double base_fps_1bit, double sigma_read,
                                int64_t npixels, FpsRounding rounding = FpsRounding::nearest) {
    if (npixels <= 0) throw std::invalid_argument("tradeoff_row: npixels must be > 0");
    if (!(sigma_read >= 0)) throw std::invalid_argument("tradeoff_row: sigma_read must be >= 0");
    return tradeoff_columns(nbits, tradeoff_fps(nbits, base_fps_1bit, rounding), sigma_read, npixels);
}

}  // namespace qv
