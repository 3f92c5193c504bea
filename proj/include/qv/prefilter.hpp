#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qv/image.hpp"
#include "qv/nlm.hpp"
#include "qv/sensor.hpp"

namespace qv {

// Pixel-wise sum of consecutive quanta frames; trades motion blur for SNR.
// Windows that hit stream boundaries shrink, and the realized range is
// recorded so downstream stages can rescale.
struct SumImage {
    Image<uint32_t> sums;
    int window_first = 0;
    int window_count = 0;

    int width() const { return sums.width(); }
    int height() const { return sums.height(); }
};

inline SumImage sum_window(const std::vector<QuantaFrame>& frames, int center_index,
                           int window_size) {
    if (window_size < 1) throw std::invalid_argument("sum_window: window must be >= 1");
    if (frames.empty()) throw std::invalid_argument("sum_window: no frames");
    const int n = static_cast<int>(frames.size());
    if (center_index < 0 || center_index >= n)
        throw std::invalid_argument("sum_window: center index out of range");

    const int ideal_lo = center_index - (window_size - 1) / 2;
    const int lo = std::max(0, ideal_lo);
    const int hi = std::min(n - 1, ideal_lo + window_size - 1);

    SumImage out;
    out.window_first = lo;
    out.window_count = hi - lo + 1;
    out.sums = Image<uint32_t>(frames[0].width(), frames[0].height(), 0u);
    for (int f = lo; f <= hi; ++f) {
        require_same_size(frames[static_cast<size_t>(f)], frames[0], "sum_window");
        for (size_t i = 0; i < out.sums.size(); ++i)
            out.sums[i] += frames[static_cast<size_t>(f)][i];
    }
    return out;
}

// Generalized Anscombe transform for Poisson counts with Gaussian read noise
// of std sigma: maps to approximately unit variance. The inverse is the plain
// algebraic one, clamped at zero.
inline double generalized_anscombe(double x, double sigma) {
    return 2.0 * std::sqrt(std::max(x, 0.0) + 0.375 + sigma * sigma);
}

inline double inverse_anscombe(double y, double sigma) {
    const double half = y * 0.5;
    return std::max(half * half - 0.375 - sigma * sigma, 0.0);
}

// Stage 1 of the pipeline: stabilize the sum image (read noise accumulates
// over window_count readouts), denoise in the unit-variance domain, invert,
// and rescale to per-frame electrons.
inline Image<double> predenoise(const SumImage& sum, const SensorConfig& cfg, double strength) {
    cfg.validate();
    if (sum.window_count < 1) throw std::invalid_argument("predenoise: empty window");
    if (!(strength >= 0.0)) throw std::invalid_argument("predenoise: strength must be >= 0");

    if (strength == 0.0) {  // identity path: plain temporal average
        Image<double> out(sum.width(), sum.height());
        const double inv = 1.0 / static_cast<double>(sum.window_count);
        for (size_t i = 0; i < out.size(); ++i) out[i] = sum.sums[i] * inv;
        return out;
    }

    const double sigma_eff = cfg.read_noise * std::sqrt(static_cast<double>(sum.window_count));

    Image<double> stabilized(sum.width(), sum.height());
    for (size_t i = 0; i < stabilized.size(); ++i)
        stabilized[i] = generalized_anscombe(static_cast<double>(sum.sums[i]), sigma_eff);

    const Image<double> denoised = denoise_stabilized(stabilized, strength);

    Image<double> out(sum.width(), sum.height());
    const double inv_count = 1.0 / static_cast<double>(sum.window_count);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = inverse_anscombe(denoised[i], sigma_eff) * inv_count;
    return out;
}

}  // namespace qv
