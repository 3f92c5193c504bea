#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qv/errors.hpp"
#include "qv/image.hpp"
#include "qv/philox.hpp"
#include "qv/threading.hpp"

namespace qv {

// Few-bit photon-counting sensor. The readout of one pixel is
//   Y = ADC_[0,L]( Poisson(qe * exposure + dark_current / fps) + Gauss(0, read_noise^2) )
// with L = 2^nbits - 1.
struct SensorConfig {
    double qe = 0.80;            // quantum efficiency, fraction
    double dark_current = 1.6;   // electrons / pixel / second
    double read_noise = 0.2;     // electrons RMS / pixel / readout
    int nbits = 3;               // ADC bit depth
    double fps = 2000.0;         // readouts / second

    int full_well() const { return (1 << nbits) - 1; }
    double dark_per_frame() const { return dark_current / fps; }

    void validate() const {
        if (!(qe >= 0.0 && qe <= 1.0)) throw std::invalid_argument("SensorConfig: qe must be in [0,1]");
        if (!(dark_current >= 0.0)) throw std::invalid_argument("SensorConfig: dark_current must be >= 0");
        if (!(read_noise >= 0.0)) throw std::invalid_argument("SensorConfig: read_noise must be >= 0");
        if (nbits < 1 || nbits > 16) throw std::invalid_argument("SensorConfig: nbits must be in [1,16]");
        if (!(fps > 0.0)) throw std::invalid_argument("SensorConfig: fps must be > 0");
    }
};

using ExposureMap = Image<double>;     // expected incident photons / pixel / frame
using QuantaFrame = Image<uint16_t>;   // quantized readout in [0, L]

// Round half away from zero, clamp to [0, L].
inline int adc_quantize(double analog, int full_well) {
    if (full_well < 1) throw std::invalid_argument("adc_quantize: full well must be >= 1");
    const long long r = std::llround(analog);
    if (r < 0) return 0;
    if (r > full_well) return full_well;
    return static_cast<int>(r);
}

inline ExposureMap ppp_to_exposure(double ppp, int width, int height) {
    if (!(ppp >= 0.0) || !std::isfinite(ppp))
        throw std::invalid_argument("ppp_to_exposure: ppp must be finite and >= 0");
    return ExposureMap(width, height, ppp);
}

// Scales a normalized [0,1] image so the exposure mean equals ppp.
// PPP counts incident photons, before quantum efficiency.
inline ExposureMap scale_luminance(const Image<double>& gt, double ppp) {
    if (!(ppp >= 0.0) || !std::isfinite(ppp))
        throw std::invalid_argument("scale_luminance: ppp must be finite and >= 0");
    for (double v : gt)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("scale_luminance: ground truth values must be in [0,1]");
    const double mean = image_mean(gt);
    ExposureMap out(gt.width(), gt.height());
    if (ppp == 0.0) return out;
    if (mean == 0.0)
        throw std::invalid_argument("scale_luminance: all-black image cannot be scaled to nonzero ppp");
    const double scale = ppp / mean;
    for (size_t i = 0; i < gt.size(); ++i) out[i] = gt[i] * scale;
    return out;
}

// One simulated readout per pixel. Bit-identical for a given
// (seed, frame_index, pixel index) regardless of scheduling.
inline QuantaFrame simulate_frame(const ExposureMap& exposure, const SensorConfig& cfg,
                                  uint64_t seed, uint64_t frame_index) {
    cfg.validate();
    for (double v : exposure)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("simulate_frame: exposure must be finite and >= 0");

    const int L = cfg.full_well();
    const double dark = cfg.dark_per_frame();
    QuantaFrame out(exposure.width(), exposure.height());
    parallel_for(0, static_cast<int64_t>(exposure.size()), [&](int64_t i) {
        PixelRng rng(seed, frame_index, static_cast<uint32_t>(i));
        const double lambda = cfg.qe * exposure[static_cast<size_t>(i)] + dark;
        double analog = static_cast<double>(rng.next_poisson(lambda));
        if (cfg.read_noise > 0.0) analog += cfg.read_noise * rng.next_gaussian();
        out[static_cast<size_t>(i)] = static_cast<uint16_t>(adc_quantize(analog, L));
    });
    return out;
}

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

// Raw moments (orders 1..4) of ADC_[0,L](k + sigma * G) for integer k.
struct RawMoments {
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
};

inline RawMoments clipped_readout_moments(int64_t k, double sigma, int L) {
    RawMoments m;
    if (sigma == 0.0) {
        const double q = static_cast<double>(std::min<int64_t>(std::max<int64_t>(k, 0), L));
        m.m1 = q;
        m.m2 = q * q;
        m.m3 = q * q * q;
        m.m4 = q * q * q * q;
        return m;
    }
    // Only levels within ~8 sigma of k carry mass; lump the far tails onto
    // the nearest retained level so probabilities sum to one.
    const double kd = static_cast<double>(k);
    const double lo_edge = std::floor(kd - 8.0 * sigma - 1.0);
    const int j_lo = static_cast<int>(std::clamp(lo_edge, 0.0, static_cast<double>(L)));
    const double hi_edge = std::ceil(kd + 8.0 * sigma + 1.0);
    const int j_hi = static_cast<int>(std::clamp(hi_edge, static_cast<double>(j_lo), static_cast<double>(L)));
    double cdf_prev = 0.0;  // P(Y < j_lo), folded into level j_lo
    for (int j = j_lo; j <= j_hi; ++j) {
        const double cdf_j = (j == L) ? 1.0 : normal_cdf((j + 0.5 - kd) / sigma);
        double p = cdf_j - cdf_prev;
        if (j == j_hi && j < L) p = 1.0 - cdf_prev;  // fold upper tail
        cdf_prev = cdf_j;
        if (p <= 0.0) continue;
        const double jd = j;
        const double j2 = jd * jd;
        m.m1 += jd * p;
        m.m2 += j2 * p;
        m.m3 += j2 * jd * p;
        m.m4 += j2 * j2 * p;
    }
    return m;
}

template <typename Fn>
inline void poisson_sum(double lambda, Fn&& term) {
    if (lambda == 0.0) {
        term(0, 1.0);
        return;
    }
    // [lambda +- 12 sqrt(lambda) - 30, ... + 30] leaves tail mass far below
    // the 1e-12 truncation budget.
    const double s = std::sqrt(lambda);
    const int64_t k_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(lambda - 12.0 * s - 30.0)));
    const int64_t k_hi = static_cast<int64_t>(std::ceil(lambda + 12.0 * s + 30.0));
    const double log_lambda = std::log(lambda);
    for (int64_t k = k_lo; k <= k_hi; ++k) {
        const double kd = static_cast<double>(k);
        const double lp = kd * log_lambda - lambda - std::lgamma(kd + 1.0);
        const double p = std::exp(lp);
        if (p > 0.0) term(k, p);
    }
}

}  // namespace detail

struct ReadoutMoments {
    double mean = 0;  // E[Y]
    double var = 0;   // Var[Y]
    double mu4 = 0;   // E[(Y - mean)^4]
};

// Numeric oracle for the moments of Y given the Poisson rate in
// electrons/frame. Gaussian expectations use the exact normal CDF, Poisson
// tails are truncated below 1e-12 mass; total error is well under 1e-6.
inline ReadoutMoments readout_moments(double lambda, const SensorConfig& cfg) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("readout_moments: lambda must be finite and >= 0");
    cfg.validate();
    detail::RawMoments acc;
    detail::poisson_sum(lambda, [&](int64_t k, double p) {
        const detail::RawMoments m = detail::clipped_readout_moments(k, cfg.read_noise, cfg.full_well());
        acc.m1 += p * m.m1;
        acc.m2 += p * m.m2;
        acc.m3 += p * m.m3;
        acc.m4 += p * m.m4;
    });
    ReadoutMoments out;
    out.mean = acc.m1;
    out.var = std::max(0.0, acc.m2 - acc.m1 * acc.m1);
    const double m1 = acc.m1;
    out.mu4 = std::max(0.0, acc.m4 - 4.0 * acc.m3 * m1 + 6.0 * acc.m2 * m1 * m1 - 3.0 * m1 * m1 * m1 * m1);
    return out;
}

inline double expected_readout(double lambda, const SensorConfig& cfg) {
    return readout_moments(lambda, cfg).mean;
}

inline constexpr double kSaturationGuard = 1e-3;

// Inverse of expected_readout by bisection (the response is monotone in
// lambda). Means at or above L - 1e-3 are treated as saturated.
inline double invert_response(double mean_y, const SensorConfig& cfg) {
    cfg.validate();
    const int L = cfg.full_well();
    if (!(mean_y >= 0.0) || !std::isfinite(mean_y))
        throw std::invalid_argument("invert_response: mean readout must be finite and >= 0");
    if (mean_y >= static_cast<double>(L) - kSaturationGuard)
        throw SaturationError("invert_response: mean readout too close to full well");

    const double floor_mean = expected_readout(0.0, cfg);
    if (mean_y <= floor_mean) return 0.0;  // below the read-noise floor

    double lo = 0.0, hi = 1.0;
    while (expected_readout(hi, cfg) < mean_y) {
        lo = hi;
        hi *= 2.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= std::max(1e-12, 1e-6 * mid)) return mid;
        if (expected_readout(mid, cfg) < mean_y)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Dense response samples built from the oracle; used where per-pixel
// bisection would be too slow (refinement, merge noise prediction).
// Interpolation error is far below the pipeline tolerances.
class ResponseTable {
public:
    explicit ResponseTable(const SensorConfig& cfg, int samples = 1024) {
        cfg.validate();
        const double L = cfg.full_well();
        // Smallest lambda whose mean is within half the saturation guard of L.
        double hi = 1.0;
        while (expected_readout(hi, cfg) < L - 0.5 * kSaturationGuard && hi < 1e9) hi *= 2.0;
        lambda_max_ = hi;
        lambda_.resize(samples);
        mean_.resize(samples);
        var_.resize(samples);
        for (int i = 0; i < samples; ++i) {
            const double lam = lambda_max_ * i / (samples - 1);
            const ReadoutMoments m = readout_moments(lam, cfg);
            lambda_[i] = lam;
            mean_[i] = m.mean;
            var_[i] = m.var;
        }
    }

    double lambda_for_mean(double mean) const { return interp(mean_, lambda_, mean); }
    double var_for_mean(double mean) const { return interp(mean_, var_, mean); }
    double max_mean() const { return mean_.back(); }
    double noise_floor() const { return mean_.front(); }

private:
    static double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const size_t i = static_cast<size_t>(it - xs.begin());
        const double x0 = xs[i - 1], x1 = xs[i];
        const double t = (x1 > x0) ? (x - x0) / (x1 - x0) : 0.0;
        return ys[i - 1] + t * (ys[i] - ys[i - 1]);
    }

    double lambda_max_ = 0;
    std::vector<double> lambda_, mean_, var_;
};

}  // namespace qv
