#pragma once

#include <cmath>
#include <vector>

#include "qv/image.hpp"
#include "qv/threading.hpp"

namespace qv {

// Non-local means in a variance-stabilized domain: 7x7 patches compared over
// a 21x21 search window, weight exp(-d2/h^2) on the mean squared patch
// difference. Runs one displacement at a time with separable running box
// sums, so the cost is O(pixels * search window) instead of
// O(pixels * search window * patch).
inline Image<double> denoise_stabilized(const Image<double>& img, double strength,
                                        int patch_radius = 3, int search_radius = 10) {
    if (!(strength >= 0.0)) throw std::invalid_argument("denoise_stabilized: strength must be >= 0");
    if (strength == 0.0) return img;

    const int w = img.width(), h = img.height();
    const double inv_h2 = 1.0 / (strength * strength);

    Image<double> num(w, h, 0.0);
    Image<double> den(w, h, 0.0);
    std::vector<double> diff2(img.size());
    std::vector<double> rowsum(img.size());
    std::vector<double> boxsum(img.size());

    // Border patches shrink to the in-bounds intersection.
    std::vector<int> span_x(w), span_y(h);
    for (int x = 0; x < w; ++x)
        span_x[x] = std::min(x + patch_radius, w - 1) - std::max(x - patch_radius, 0) + 1;
    for (int y = 0; y < h; ++y)
        span_y[y] = std::min(y + patch_radius, h - 1) - std::max(y - patch_radius, 0) + 1;

    for (int dy = -search_radius; dy <= search_radius; ++dy) {
        for (int dx = -search_radius; dx <= search_radius; ++dx) {
            parallel_for(0, h, [&](int64_t y) {
                const int yy = static_cast<int>(y);
                for (int x = 0; x < w; ++x) {
                    const double d = img(x, yy) - img.at_clamped(x + dx, yy + dy);
                    diff2[static_cast<size_t>(yy) * w + x] = d * d;
                }
                // horizontal running window
                double acc = 0.0;
                for (int x = 0; x < std::min(patch_radius + 1, w); ++x)
                    acc += diff2[static_cast<size_t>(yy) * w + x];
                for (int x = 0; x < w; ++x) {
                    rowsum[static_cast<size_t>(yy) * w + x] = acc;
                    const int add = x + patch_radius + 1;
                    const int sub = x - patch_radius;
                    if (add < w) acc += diff2[static_cast<size_t>(yy) * w + add];
                    if (sub >= 0) acc -= diff2[static_cast<size_t>(yy) * w + sub];
                }
            });
            parallel_for(0, w, [&](int64_t x) {
                const int xx = static_cast<int>(x);
                double acc = 0.0;
                for (int y = 0; y < std::min(patch_radius + 1, h); ++y)
                    acc += rowsum[static_cast<size_t>(y) * w + xx];
                for (int y = 0; y < h; ++y) {
                    boxsum[static_cast<size_t>(y) * w + xx] = acc;
                    const int add = y + patch_radius + 1;
                    const int sub = y - patch_radius;
                    if (add < h) acc += rowsum[static_cast<size_t>(add) * w + xx];
                    if (sub >= 0) acc -= rowsum[static_cast<size_t>(sub) * w + xx];
                }
            });
            parallel_for(0, h, [&](int64_t y) {
                const int yy = static_cast<int>(y);
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(yy) * w + x;
                    const double d2 = boxsum[i] / (static_cast<double>(span_x[x]) * span_y[yy]);
                    const double wgt = std::exp(-d2 * inv_h2);
                    num[i] += wgt * img.at_clamped(x + dx, yy + dy);
                    den[i] += wgt;
                }
            });
        }
    }

    Image<double> out(w, h);
    for (size_t i = 0; i < out.size(); ++i) out[i] = num[i] / den[i];
    return out;
}

}  // namespace qv
