#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qv/image.hpp"
#include "qv/threading.hpp"

namespace qv {

struct FlowParams {
    int tile_size = 16;
    int levels = 3;
    int search_radius = 4;  // coarsest level, exhaustive
    int refine_radius = 2;  // each finer level, around the upsampled estimate
    bool subpixel = true;

    void validate() const {
        if (tile_size < 4) throw std::invalid_argument("FlowParams: tile_size must be >= 4");
        if (levels < 1) throw std::invalid_argument("FlowParams: levels must be >= 1");
        if (search_radius < 1) throw std::invalid_argument("FlowParams: search_radius must be >= 1");
        if (refine_radius < 0) throw std::invalid_argument("FlowParams: refine_radius must be >= 0");
    }

    // Largest per-axis displacement representable by the configuration.
    double max_displacement() const {
        double bound = search_radius;
        for (int l = 1; l < levels; ++l) bound = 2.0 * bound + refine_radius;
        return bound + (subpixel ? 0.5 : 0.0);
    }
};

struct Flow {
    double dx = 0.0;
    double dy = 0.0;
};

// Per-tile displacement field in finest-scale pixel units.
struct FlowField {
    int tile_size = 0;
    int grid_w = 0;
    int grid_h = 0;
    std::vector<Flow> tiles;

    Flow& at(int tx, int ty) { return tiles[static_cast<size_t>(ty) * grid_w + tx]; }
    const Flow& at(int tx, int ty) const { return tiles[static_cast<size_t>(ty) * grid_w + tx]; }

    int tile_x(int px) const { return std::clamp(px / tile_size, 0, grid_w - 1); }
    int tile_y(int py) const { return std::clamp(py / tile_size, 0, grid_h - 1); }

    const Flow& at_pixel(int px, int py) const { return at(tile_x(px), tile_y(py)); }
};

// Repeated 2x2 box-filter downsampling; odd dimensions use edge replication.
// Fails if the requested depth would shrink the coarsest level below min_dim.
inline std::vector<Image<double>> build_pyramid(const Image<double>& image, int levels,
                                                int min_dim = 1) {
    if (levels < 1) throw std::invalid_argument("build_pyramid: levels must be >= 1");
    if (image.empty()) throw std::invalid_argument("build_pyramid: empty image");

    std::vector<Image<double>> pyr;
    pyr.reserve(static_cast<size_t>(levels));
    pyr.push_back(image);
    for (int l = 1; l < levels; ++l) {
        const Image<double>& prev = pyr.back();
        const int w = (prev.width() + 1) / 2;
        const int h = (prev.height() + 1) / 2;
        Image<double> next(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                next(x, y) = 0.25 * (prev.at_clamped(2 * x, 2 * y) + prev.at_clamped(2 * x + 1, 2 * y) +
                                     prev.at_clamped(2 * x, 2 * y + 1) + prev.at_clamped(2 * x + 1, 2 * y + 1));
        pyr.push_back(std::move(next));
    }
    if (pyr.back().width() < min_dim || pyr.back().height() < min_dim)
        throw std::invalid_argument("build_pyramid: too many levels for image size");
    return pyr;
}

namespace detail {

inline double tile_mad(const Image<double>& ref, const Image<double>& alt, int x0, int y0,
                       int x1, int y1, int dx, int dy) {
    double acc = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            acc += std::fabs(ref(x, y) - alt.at_clamped(x + dx, y + dy));
    return acc / (static_cast<double>(x1 - x0) * static_cast<double>(y1 - y0));
}

// Deterministic argmin: lowest cost, then smallest displacement magnitude,
// then lexicographic (dx, dy).
struct Candidate {
    double cost = 0.0;
    int dx = 0, dy = 0;

    bool better_than(const Candidate& o) const {
        if (cost != o.cost) return cost < o.cost;
        const long m = long(dx) * dx + long(dy) * dy;
        const long om = long(o.dx) * o.dx + long(o.dy) * o.dy;
        if (m != om) return m < om;
        if (dx != o.dx) return dx < o.dx;
        return dy < o.dy;
    }
};

}  // namespace detail

// Coarse-to-fine tile block matching on the mean-absolute-difference cost.
// Out-of-bounds reads use edge replication, so border tiles are defined but
// only interior tiles carry accuracy guarantees.
inline FlowField estimate_flow(const Image<double>& ref, const Image<double>& alt,
                               const FlowParams& params) {
    params.validate();
    require_same_size(ref, alt, "estimate_flow");
    const std::vector<Image<double>> pyr_ref = build_pyramid(ref, params.levels, params.tile_size);
    const std::vector<Image<double>> pyr_alt = build_pyramid(alt, params.levels, params.tile_size);

    FlowField prev;
    for (int level = params.levels - 1; level >= 0; --level) {
        const Image<double>& r = pyr_ref[static_cast<size_t>(level)];
        const Image<double>& a = pyr_alt[static_cast<size_t>(level)];
        const bool coarsest = (level == params.levels - 1);
        const int tile = params.tile_size;

        FlowField cur;
        cur.tile_size = tile;
        cur.grid_w = (r.width() + tile - 1) / tile;
        cur.grid_h = (r.height() + tile - 1) / tile;
        cur.tiles.resize(static_cast<size_t>(cur.grid_w) * cur.grid_h);

        parallel_for(0, static_cast<int64_t>(cur.tiles.size()), [&](int64_t t) {
            const int tx = static_cast<int>(t) % cur.grid_w;
            const int ty = static_cast<int>(t) / cur.grid_w;
            const int x0 = tx * tile, y0 = ty * tile;
            const int x1 = std::min(x0 + tile, r.width());
            const int y1 = std::min(y0 + tile, r.height());

            int init_dx = 0, init_dy = 0, radius = params.search_radius;
            if (!coarsest) {
                // Seed from the coarser field sampled at this tile's center.
                const int cx = (x0 + x1 - 1) / 2, cy = (y0 + y1 - 1) / 2;
                const Flow& seed = prev.at_pixel(cx / 2, cy / 2);
                init_dx = 2 * static_cast<int>(seed.dx);
                init_dy = 2 * static_cast<int>(seed.dy);
                radius = params.refine_radius;
            }

            detail::Candidate best{std::numeric_limits<double>::infinity(), 0, 0};
            for (int dy = init_dy - radius; dy <= init_dy + radius; ++dy)
                for (int dx = init_dx - radius; dx <= init_dx + radius; ++dx) {
                    detail::Candidate c{detail::tile_mad(r, a, x0, y0, x1, y1, dx, dy), dx, dy};
                    if (c.better_than(best)) best = c;
                }

            double fdx = best.dx, fdy = best.dy;
            if (level == 0 && params.subpixel) {
                // 1D quadratic fit of the cost per axis; degenerate fits and
                // exact matches fall back to the integer argmin.
                const double c0 = best.cost;
                auto fit = [&](double cm, double cp) {
                    if (!(c0 > 0.0)) return 0.0;
                    const double denom = cm - 2.0 * c0 + cp;
                    if (!(denom > 1e-12)) return 0.0;
                    return std::clamp(0.5 * (cm - cp) / denom, -0.5, 0.5);
                };
                fdx += fit(detail::tile_mad(r, a, x0, y0, x1, y1, best.dx - 1, best.dy),
                           detail::tile_mad(r, a, x0, y0, x1, y1, best.dx + 1, best.dy));
                fdy += fit(detail::tile_mad(r, a, x0, y0, x1, y1, best.dx, best.dy - 1),
                           detail::tile_mad(r, a, x0, y0, x1, y1, best.dx, best.dy + 1));
            }
            cur.tiles[static_cast<size_t>(t)] = Flow{fdx, fdy};
        });
        prev = std::move(cur);
    }
    return prev;
}

// Nearest-tile replication; displacement values scale with the factor.
inline FlowField upsample_flow(const FlowField& flow, int factor = 2) {
    if (factor < 1) throw std::invalid_argument("upsample_flow: factor must be >= 1");
    FlowField out;
    out.tile_size = flow.tile_size;
    out.grid_w = flow.grid_w * factor;
    out.grid_h = flow.grid_h * factor;
    out.tiles.resize(static_cast<size_t>(out.grid_w) * out.grid_h);
    for (int ty = 0; ty < out.grid_h; ++ty)
        for (int tx = 0; tx < out.grid_w; ++tx) {
            const Flow& f = flow.at(tx / factor, ty / factor);
            out.at(tx, ty) = Flow{f.dx * factor, f.dy * factor};
        }
    return out;
}

// Forward-backward check: a tile passes when the backward flow sampled at
// the forward-displaced position cancels the forward flow within tau pixels.
inline Image<uint8_t> consistency_mask(const FlowField& fwd, const FlowField& bwd, double tau) {
    if (fwd.grid_w != bwd.grid_w || fwd.grid_h != bwd.grid_h || fwd.tile_size != bwd.tile_size)
        throw std::invalid_argument("consistency_mask: flow grids differ");
    if (!(tau >= 0.0)) throw std::invalid_argument("consistency_mask: tau must be >= 0");

    Image<uint8_t> mask(fwd.grid_w, fwd.grid_h, 0);
    for (int ty = 0; ty < fwd.grid_h; ++ty)
        for (int tx = 0; tx < fwd.grid_w; ++tx) {
            const Flow& f = fwd.at(tx, ty);
            const double cx = (tx + 0.5) * fwd.tile_size + f.dx;
            const double cy = (ty + 0.5) * fwd.tile_size + f.dy;
            const Flow& b = bwd.at_pixel(static_cast<int>(std::floor(cx)), static_cast<int>(std::floor(cy)));
            const double rx = f.dx + b.dx;
            const double ry = f.dy + b.dy;
            mask(tx, ty) = std::sqrt(rx * rx + ry * ry) <= tau ? 1 : 0;
        }
    return mask;
}

}  // namespace qv
