#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace qv {

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). Stateless: output is a pure function of
// (counter, key), which is what makes per-pixel simulation order- and
// thread-count-independent.
struct Philox4x32 {
    using Counter = std::array<uint32_t, 4>;
    using Key = std::array<uint32_t, 2>;

    static constexpr uint32_t kMul0 = 0xD2511F53u;
    static constexpr uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter block(Counter x, Key key) {
        for (int round = 0; round < 10; ++round) {
            const uint64_t p0 = static_cast<uint64_t>(kMul0) * x[0];
            const uint64_t p1 = static_cast<uint64_t>(kMul1) * x[2];
            const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
            const uint32_t lo0 = static_cast<uint32_t>(p0);
            const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
            const uint32_t lo1 = static_cast<uint32_t>(p1);
            x = {hi1 ^ x[1] ^ key[0], lo1, hi0 ^ x[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return x;
    }
};

// Buffered uniform/Gaussian/Poisson stream for one (seed, frame, pixel)
// triple. Consecutive draws advance a private 32-bit block counter, so the
// stream is reproducible no matter how pixels are scheduled.
class PixelRng {
public:
    PixelRng(uint64_t seed, uint64_t frame_index, uint32_t pixel_index)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          base_{static_cast<uint32_t>(frame_index), static_cast<uint32_t>(frame_index >> 32),
                pixel_index, 0} {}

    uint32_t next_u32() {
        if (have_ == 0) {
            Philox4x32::Counter ctr = base_;
            ctr[3] = block_index_++;
            buf_ = Philox4x32::block(ctr, key_);
            have_ = 4;
        }
        return buf_[4 - have_--];
    }

    // Uniform on (0, 1); never returns 0 or 1.
    double next_uniform() {
        return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
    }

    // Standard normal via Box-Muller (cosine branch only).
    double next_gaussian() {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Exact Poisson sampling: multiplicative inversion for small rates,
    // Hormann's PTRS transformed rejection for lambda >= 10.
    int64_t next_poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 10.0) return poisson_inversion(lambda);
        return poisson_ptrs(lambda);
    }

private:
    int64_t poisson_inversion(double lambda) {
        const double limit = std::exp(-lambda);
        int64_t k = 0;
        double prod = 1.0;
        do {
            ++k;
            prod *= next_uniform();
        } while (prod > limit);
        return k - 1;
    }

    int64_t poisson_ptrs(double lambda) {
        const double slam = std::sqrt(lambda);
        const double loglam = std::log(lambda);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = next_uniform() - 0.5;
            const double v = next_uniform();
            const double us = 0.5 - std::fabs(u);
            const auto k = static_cast<int64_t>(std::floor((2.0 * a / us + b) * u + lambda + 0.43));
            if (us >= 0.07 && v <= v_r) return k;
            if (k < 0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                static_cast<double>(k) * loglam - lambda - std::lgamma(static_cast<double>(k) + 1.0))
                return k;
        }
    }

    Philox4x32::Key key_;
    Philox4x32::Counter base_;
    Philox4x32::Counter buf_{};
    uint32_t block_index_ = 0;
    int have_ = 0;
};

}  // namespace qv
