#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "qv/flow.hpp"
#include "qv/image.hpp"
#include "qv/threading.hpp"

namespace qv {

// Per-pixel bilinear sampling at the position displaced by the containing
// tile's flow; out-of-bounds samples clamp to the edge.
inline Image<double> warp_bilinear(const Image<double>& image, const FlowField& flow) {
    if (flow.grid_w <= 0 || flow.grid_h <= 0 || flow.tile_size <= 0)
        throw std::invalid_argument("warp_bilinear: empty flow field");
    Image<double> out(image.width(), image.height());
    parallel_for(0, image.height(), [&](int64_t y) {
        const int yy = static_cast<int>(y);
        for (int x = 0; x < image.width(); ++x) {
            const Flow& f = flow.at_pixel(x, yy);
            const double sx = x + f.dx;
            const double sy = yy + f.dy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double tx = sx - x0;
            const double ty = sy - y0;
            const double v00 = image.at_clamped(x0, y0);
            const double v10 = image.at_clamped(x0 + 1, y0);
            const double v01 = image.at_clamped(x0, y0 + 1);
            const double v11 = image.at_clamped(x0 + 1, y0 + 1);
            out(x, yy) = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) +
                         ty * ((1.0 - tx) * v01 + tx * v11);
        }
    });
    return out;
}

using NoiseVarFn = std::function<double(double /*tile ref mean*/)>;
using TileMaskFn = std::function<bool(int /*alt*/, int /*px*/, int /*py*/)>;

// Wiener-style robust merge: per tile, each warped alternate gets weight
//   w = nv / (nv + max(d - nv, 0))
// where d is its mean squared difference against the reference tile and nv
// the predicted noise variance at the tile's level. Tiles overlap 50% and
// are blended with a raised-cosine window renormalized to unit sum.
inline Image<double> merge_tiles(const Image<double>& ref, const std::vector<Image<double>>& alts,
                                 const NoiseVarFn& noise_var_for_mean, const TileMaskFn& mask,
                                 int tile) {
    if (tile < 2 || (tile % 2) != 0)
        throw std::invalid_argument("merge_tiles: tile must be even and >= 2");
    for (const auto& a : alts) require_same_size(ref, a, "merge_tiles");

    const int w = ref.width(), h = ref.height();
    const int stride = tile / 2;
    const int tiles_x = (w + stride - 1) / stride;
    const int tiles_y = (h + stride - 1) / stride;
    const size_t n_alts = alts.size();

    constexpr double kTwoPi = 6.283185307179586477;
    std::vector<double> window(static_cast<size_t>(tile));
    for (int i = 0; i < tile; ++i)
        window[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(kTwoPi * (i + 0.5) / tile);

    // Pass 1: independent tile estimates (parallel, disjoint storage).
    std::vector<std::vector<double>> tile_out(static_cast<size_t>(tiles_x) * tiles_y);
    parallel_for(0, static_cast<int64_t>(tile_out.size()), [&](int64_t t) {
        const int tx = static_cast<int>(t) % tiles_x;
        const int ty = static_cast<int>(t) / tiles_x;
        const int x0 = tx * stride, y0 = ty * stride;
        const int x1 = std::min(x0 + tile, w), y1 = std::min(y0 + tile, h);
        const double npix = static_cast<double>(x1 - x0) * static_cast<double>(y1 - y0);

        double ref_mean = 0.0;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) ref_mean += ref(x, y);
        ref_mean /= npix;

        const double nv = noise_var_for_mean(ref_mean);
        if (!(nv > 0.0)) throw std::invalid_argument("merge_tiles: noise variance must be > 0");

        std::vector<double> weights(n_alts, 0.0);
        const int cx = (x0 + x1 - 1) / 2, cy = (y0 + y1 - 1) / 2;
        for (size_t j = 0; j < n_alts; ++j) {
            if (mask && !mask(static_cast<int>(j), cx, cy)) continue;
            double d = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const double e = alts[j](x, y) - ref(x, y);
                    d += e * e;
                }
            d /= npix;
            weights[j] = nv / (nv + std::max(d - nv, 0.0));
        }

        std::vector<double>& buf = tile_out[static_cast<size_t>(t)];
        buf.resize(static_cast<size_t>(x1 - x0) * static_cast<size_t>(y1 - y0));
        double wsum = 1.0;
        for (double wj : weights) wsum += wj;
        size_t i = 0;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x, ++i) {
                double acc = ref(x, y);
                for (size_t j = 0; j < n_alts; ++j) acc += weights[j] * alts[j](x, y);
                buf[i] = acc / wsum;
            }
    });

    // Pass 2: serial overlap-add keeps the accumulation order fixed.
    Image<double> acc(w, h, 0.0);
    Image<double> wacc(w, h, 0.0);
    for (int ty = 0; ty < tiles_y; ++ty)
        for (int tx = 0; tx < tiles_x; ++tx) {
            const int x0 = tx * stride, y0 = ty * stride;
            const int x1 = std::min(x0 + tile, w), y1 = std::min(y0 + tile, h);
            const std::vector<double>& buf = tile_out[static_cast<size_t>(ty) * tiles_x + tx];
            size_t i = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x, ++i) {
                    const double wgt = window[static_cast<size_t>(x - x0)] * window[static_cast<size_t>(y - y0)];
                    acc(x, y) += wgt * buf[i];
                    wacc(x, y) += wgt;
                }
        }
    for (size_t i = 0; i < acc.size(); ++i) acc[i] /= wacc[i];
    return acc;
}

inline Image<double> merge_tiles(const Image<double>& ref, const std::vector<Image<double>>& alts,
                                 double noise_var, int tile) {
    return merge_tiles(
        ref, alts, [noise_var](double) { return noise_var; }, TileMaskFn{}, tile);
}

}  // namespace qv
