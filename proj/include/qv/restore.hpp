#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include "qv/flow.hpp"
#include "qv/fuse.hpp"
#include "qv/image.hpp"
#include "qv/prefilter.hpp"
#include "qv/sensor.hpp"
#include "qv/stream.hpp"

namespace qv {

struct RestoreParams {
    int window_frames = 11;        // frames contributing to one output
    int prefilter_window = 3;      // frames per sum image
    double prefilter_strength = 2.0;
    FlowParams flow;
    int merge_tile = 16;           // 50% overlap is fixed
    double mismatch_scale = 1.0;   // scales the predicted merge noise variance
    double consistency_tau = 2.0;  // forward-backward rejection threshold, px
    bool invert_response = true;   // response inversion vs direct electron scale
    double unsharp_amount = 0.5;
    double unsharp_radius = 1.5;   // Gaussian sigma, px
    double norm_factor = 2.0;      // output = lambda / (qe * ppp * norm_factor)

    void validate() const {
        if (window_frames < 1 || (window_frames % 2) == 0)
            throw std::invalid_argument("RestoreParams: window_frames must be odd and >= 1");
        if (prefilter_window < 1)
            throw std::invalid_argument("RestoreParams: prefilter_window must be >= 1");
        if (!(prefilter_strength >= 0))
            throw std::invalid_argument("RestoreParams: prefilter_strength must be >= 0");
        if (merge_tile < 2 || (merge_tile % 2) != 0)
            throw std::invalid_argument("RestoreParams: merge_tile must be even and >= 2");
        if (!(mismatch_scale > 0))
            throw std::invalid_argument("RestoreParams: mismatch_scale must be > 0");
        if (!(consistency_tau >= 0))
            throw std::invalid_argument("RestoreParams: consistency_tau must be >= 0");
        if (!(unsharp_amount >= 0) || !(unsharp_radius > 0))
            throw std::invalid_argument("RestoreParams: bad unsharp settings");
        if (!(norm_factor > 0))
            throw std::invalid_argument("RestoreParams: norm_factor must be > 0");
        flow.validate();
    }
};

struct RestoredFrame {
    Image<double> image;  // normalized to [0,1]
    bool window_truncated = false;
    bool saturation_warning = false;
};

struct StageTimings {
    double prefilter_s = 0;
    double flow_s = 0;
    double merge_s = 0;
    double refine_s = 0;

    double total_s() const { return prefilter_s + flow_s + merge_s + refine_s; }
};

inline Image<double> gaussian_blur(const Image<double>& img, double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        ksum += v;
    }
    for (double& v : kernel) v /= ksum;

    Image<double> tmp(img.width(), img.height());
    parallel_for(0, img.height(), [&](int64_t y) {
        for (int x = 0; x < img.width(); ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<size_t>(i + radius)] * img.at_clamped(x + i, static_cast<int>(y));
            tmp(x, static_cast<int>(y)) = acc;
        }
    });
    Image<double> out(img.width(), img.height());
    parallel_for(0, img.height(), [&](int64_t y) {
        for (int x = 0; x < img.width(); ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<size_t>(i + radius)] * tmp.at_clamped(x, static_cast<int>(y) + i);
            out(x, static_cast<int>(y)) = acc;
        }
    });
    return out;
}

inline Image<double> unsharp_mask(const Image<double>& img, double amount, double radius) {
    if (amount == 0.0) return img;
    const Image<double> blurred = gaussian_blur(img, radius);
    Image<double> out(img.width(), img.height());
    for (size_t i = 0; i < img.size(); ++i) out[i] = img[i] + amount * (img[i] - blurred[i]);
    return out;
}

// Stage 4: linearize the merged mean readout (table-backed response
// inversion, or direct electron scale when the input was never quantized),
// normalize by qe * ppp * norm_factor, sharpen, clamp to [0,1].
inline RestoredFrame refine(const Image<double>& merged, const SensorConfig& cfg,
                            const RestoreParams& params, double nominal_ppp,
                            const ResponseTable* table = nullptr) {
    cfg.validate();
    params.validate();
    if (!(nominal_ppp > 0)) throw std::invalid_argument("refine: nominal ppp must be > 0");

    const double L = cfg.full_well();
    Image<double> electrons(merged.width(), merged.height());
    size_t saturated = 0;

    if (params.invert_response) {
        std::optional<ResponseTable> own;
        if (!table) {
            own.emplace(cfg);
            table = &*own;
        }
        for (size_t i = 0; i < merged.size(); ++i) {
            double m = merged[i];
            if (m >= L - kSaturationGuard) {
                ++saturated;
                m = L - kSaturationGuard;
            }
            electrons[i] = table->lambda_for_mean(std::max(m, 0.0));
        }
    } else {
        for (size_t i = 0; i < merged.size(); ++i) electrons[i] = std::max(merged[i], 0.0);
    }

    const double scale = 1.0 / (cfg.qe * nominal_ppp * params.norm_factor);
    for (double& v : electrons) v *= scale;

    Image<double> sharpened = params.unsharp_amount > 0
                                  ? unsharp_mask(electrons, params.unsharp_amount, params.unsharp_radius)
                                  : std::move(electrons);
    for (double& v : sharpened) v = std::clamp(v, 0.0, 1.0);

    RestoredFrame out;
    out.image = std::move(sharpened);
    out.saturation_warning = saturated * 2 > merged.size();
    return out;
}

namespace detail {

class StageClock {
public:
    explicit StageClock(double* sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
    ~StageClock() {
        if (sink_)
            *sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    double* sink_;
    std::chrono::steady_clock::time_point start_;
};

inline FlowParams feasible_flow_params(FlowParams p, int width, int height) {
    const int min_dim = std::min(width, height);
    int levels = 0;
    int dim = min_dim;
    while (levels < p.levels && dim >= p.tile_size) {
        ++levels;
        dim = (dim + 1) / 2;
    }
    p.levels = levels;  // 0 means the image cannot hold a single tile
    return p;
}

}  // namespace detail

// Full pipeline for one output frame: per-frame prefilter sums inside the
// restoration window, predenoised copies for flow only, raw means warped by
// the estimated flow, robust merge, response inversion and sharpening.
inline RestoredFrame restore_frame(const std::vector<QuantaFrame>& frames, int t,
                                   const SensorConfig& cfg, const RestoreParams& params,
                                   double nominal_ppp, const ResponseTable& table,
                                   StageTimings* timings = nullptr) {
    cfg.validate();
    params.validate();
    if (frames.empty()) throw std::invalid_argument("restore_frame: empty stream");
    const int n = static_cast<int>(frames.size());
    if (t < 0 || t >= n) throw std::invalid_argument("restore_frame: frame index out of range");

    const int half = (params.window_frames - 1) / 2;
    const int lo = std::max(0, t - half);
    const int hi = std::min(n - 1, t + half);
    const bool truncated = (hi - lo + 1) < params.window_frames;

    // Sums never reach outside the restoration window: one output uses
    // exactly window_frames frames of data.
    const std::vector<QuantaFrame> window(frames.begin() + lo, frames.begin() + hi + 1);
    const int count = static_cast<int>(window.size());
    const int ref = t - lo;

    std::vector<Image<double>> raw_means(static_cast<size_t>(count));
    std::vector<Image<double>> denoised(static_cast<size_t>(count));
    std::vector<int> sum_counts(static_cast<size_t>(count));
    {
        detail::StageClock clock(timings ? &timings->prefilter_s : nullptr);
        for (int i = 0; i < count; ++i) {
            const SumImage sum = sum_window(window, i, params.prefilter_window);
            sum_counts[static_cast<size_t>(i)] = sum.window_count;
            Image<double> mean(sum.width(), sum.height());
            const double inv = 1.0 / sum.window_count;
            for (size_t p = 0; p < mean.size(); ++p) mean[p] = sum.sums[p] * inv;
            raw_means[static_cast<size_t>(i)] = std::move(mean);
            if (count > 1)
                denoised[static_cast<size_t>(i)] = predenoise(sum, cfg, params.prefilter_strength);
        }
    }

    Image<double> merged;
    if (count == 1) {
        merged = std::move(raw_means[0]);
    } else {
        const FlowParams flow_params =
            detail::feasible_flow_params(params.flow, frames[0].width(), frames[0].height());

        std::vector<Image<double>> warped;
        std::vector<Image<uint8_t>> masks;
        int flow_tile = params.flow.tile_size;
        warped.reserve(static_cast<size_t>(count) - 1);
        masks.reserve(static_cast<size_t>(count) - 1);
        {
            detail::StageClock clock(timings ? &timings->flow_s : nullptr);
            for (int i = 0; i < count; ++i) {
                if (i == ref) continue;
                if (flow_params.levels == 0) {
                    // Image smaller than one tile: no alignment possible,
                    // fall back to zero flow and let the merge weights decide.
                    warped.push_back(raw_means[static_cast<size_t>(i)]);
                    masks.emplace_back(1, 1, uint8_t{1});
                    flow_tile = std::max(frames[0].width(), frames[0].height());
                    continue;
                }
                const FlowField fwd =
                    estimate_flow(denoised[static_cast<size_t>(ref)], denoised[static_cast<size_t>(i)], flow_params);
                const FlowField bwd =
                    estimate_flow(denoised[static_cast<size_t>(i)], denoised[static_cast<size_t>(ref)], flow_params);
                masks.push_back(consistency_mask(fwd, bwd, params.consistency_tau));
                warped.push_back(warp_bilinear(raw_means[static_cast<size_t>(i)], fwd));
            }
        }
        {
            detail::StageClock clock(timings ? &timings->merge_s : nullptr);
            const double ref_count = sum_counts[static_cast<size_t>(ref)];
            NoiseVarFn noise = [&](double tile_mean) {
                const double var = table.var_for_mean(std::clamp(tile_mean, 0.0, table.max_mean()));
                return std::max(params.mismatch_scale * var / ref_count, 1e-12);
            };
            TileMaskFn mask = [&](int alt, int px, int py) -> bool {
                const Image<uint8_t>& m = masks[static_cast<size_t>(alt)];
                const int tx = std::clamp(px / flow_tile, 0, m.width() - 1);
                const int ty = std::clamp(py / flow_tile, 0, m.height() - 1);
                return m(tx, ty) != 0;
            };
            merged = merge_tiles(raw_means[static_cast<size_t>(ref)], warped, noise, mask,
                                 params.merge_tile);
        }
    }

    RestoredFrame out;
    {
        detail::StageClock clock(timings ? &timings->refine_s : nullptr);
        out = refine(merged, cfg, params, nominal_ppp, &table);
    }
    out.window_truncated = truncated;
    return out;
}

}  // namespace qv
