#pragma once

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qv/image.hpp"

namespace qv {

constexpr double kPsnrCapDb = 99.0;  // reported for exact matches so aggregates stay finite

struct PsnrResult {
    double db = 0.0;
    bool exact = false;
};

inline PsnrResult psnr(const Image<double>& a, const Image<double>& b, double peak = 1.0) {
    require_same_size(a, b, "psnr");
    if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be > 0");
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return {kPsnrCapDb, true};
    return {10.0 * std::log10(peak * peak / mse), false};
}

// Mean SSIM with the reference constants: 11x11 Gaussian window sigma 1.5,
// K1=0.01, K2=0.03, dynamic range 1. Averaged over centers where the full
// window fits.
inline double ssim(const Image<double>& a, const Image<double>& b) {
    require_same_size(a, b, "ssim");
    constexpr int kRadius = 5;
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    if (a.width() < 2 * kRadius + 1 || a.height() < 2 * kRadius + 1)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    double kernel[2 * kRadius + 1][2 * kRadius + 1];
    double ksum = 0.0;
    for (int j = -kRadius; j <= kRadius; ++j)
        for (int i = -kRadius; i <= kRadius; ++i) {
            const double v = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
            kernel[j + kRadius][i + kRadius] = v;
            ksum += v;
        }
    for (auto& row : kernel)
        for (double& v : row) v /= ksum;

    double total = 0.0;
    size_t n = 0;
    for (int y = kRadius; y < a.height() - kRadius; ++y)
        for (int x = kRadius; x < a.width() - kRadius; ++x) {
            double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
            for (int j = -kRadius; j <= kRadius; ++j)
                for (int i = -kRadius; i <= kRadius; ++i) {
                    const double wgt = kernel[j + kRadius][i + kRadius];
                    const double va = a(x + i, y + j);
                    const double vb = b(x + i, y + j);
                    ma += wgt * va;
                    mb += wgt * vb;
                    maa += wgt * va * va;
                    mbb += wgt * vb * vb;
                    mab += wgt * va * vb;
                }
            const double var_a = maa - ma * ma;
            const double var_b = mbb - mb * mb;
            const double cov = mab - ma * mb;
            total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                     ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
            ++n;
        }
    return total / static_cast<double>(n);
}

// L(a,b) = mean|a-b| + mean|dx a - dx b| + mean|dy a - dy b| with forward
// differences; the last column/row carries no gradient sample.
inline double grad_l1(const Image<double>& a, const Image<double>& b) {
    require_same_size(a, b, "grad_l1");
    const int w = a.width(), h = a.height();
    double abs_term = 0.0;
    for (size_t i = 0; i < a.size(); ++i) abs_term += std::fabs(a[i] - b[i]);
    abs_term /= static_cast<double>(a.size());

    double gx = 0.0;
    if (w > 1) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + 1 < w; ++x)
                gx += std::fabs((a(x + 1, y) - a(x, y)) - (b(x + 1, y) - b(x, y)));
        gx /= static_cast<double>(w - 1) * h;
    }
    double gy = 0.0;
    if (h > 1) {
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x < w; ++x)
                gy += std::fabs((a(x, y + 1) - a(x, y)) - (b(x, y + 1) - b(x, y)));
        gy /= static_cast<double>(w) * (h - 1);
    }
    return abs_term + gx + gy;
}

// Catmull-Rom (a = -0.5) separable downsampling with edge replication;
// output pixel i samples input position (i + 0.5) * factor - 0.5.
inline Image<double> bicubic_downsample(const Image<double>& img, int factor) {
    if (factor < 1) throw std::invalid_argument("bicubic_downsample: factor must be >= 1");
    if (factor == 1) return img;

    auto kernel = [](double s) {
        s = std::fabs(s);
        if (s <= 1.0) return 1.5 * s * s * s - 2.5 * s * s + 1.0;
        if (s < 2.0) return -0.5 * (s * s * s - 5.0 * s * s + 8.0 * s - 4.0);
        return 0.0;
    };

    auto resample_rows = [&](const Image<double>& in, int out_w) {
        Image<double> out(out_w, in.height());
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < out_w; ++x) {
                const double src = (x + 0.5) * factor - 0.5;
                const int base = static_cast<int>(std::floor(src));
                double acc = 0.0;
                for (int k = -1; k <= 2; ++k)
                    acc += kernel(src - (base + k)) * in.at_clamped(base + k, y);
                out(x, y) = acc;
            }
        return out;
    };
    auto transpose = [](const Image<double>& in) {
        Image<double> out(in.height(), in.width());
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x) out(y, x) = in(x, y);
        return out;
    };

    const int out_w = (img.width() + factor - 1) / factor;
    const int out_h = (img.height() + factor - 1) / factor;
    return transpose(resample_rows(transpose(resample_rows(img, out_w)), out_h));
}

struct LossWeights {
    double lambda1 = 0.2;   // gt vs denoised, full scale
    double lambda2 = 0.85;  // gt vs output, full scale
    double lambda3 = 0.1;   // half scale
    double lambda4 = 0.05;  // quarter scale

    void validate() const {
        if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
            throw std::invalid_argument("LossWeights: weights must be >= 0");
    }
};

struct MultiscaleLoss {
    double value = 0.0;
    bool denoised_used = false;
    bool s2_used = false;
    bool s4_used = false;
};

// Multi-scale gradient loss; ground truth at scales 2 and 4 comes from
// bicubic downsampling. Missing optional inputs contribute zero and are
// flagged in the result.
inline MultiscaleLoss multiscale_loss(const Image<double>& gt, const Image<double>& out_s1,
                                      const Image<double>* out_s2, const Image<double>* out_s4,
                                      const Image<double>* denoised, const LossWeights& weights) {
    weights.validate();
    require_same_size(gt, out_s1, "multiscale_loss (scale 1)");
    MultiscaleLoss result;
    if (denoised) {
        require_same_size(gt, *denoised, "multiscale_loss (denoised)");
        result.value += weights.lambda1 * grad_l1(gt, *denoised);
        result.denoised_used = true;
    }
    result.value += weights.lambda2 * grad_l1(gt, out_s1);
    if (out_s2) {
        const Image<double> gt_s2 = bicubic_downsample(gt, 2);
        require_same_size(gt_s2, *out_s2, "multiscale_loss (scale 2)");
        result.value += weights.lambda3 * grad_l1(gt_s2, *out_s2);
        result.s2_used = true;
    }
    if (out_s4) {
        const Image<double> gt_s4 = bicubic_downsample(gt, 4);
        require_same_size(gt_s4, *out_s4, "multiscale_loss (scale 4)");
        result.value += weights.lambda4 * grad_l1(gt_s4, *out_s4);
        result.s4_used = true;
    }
    return result;
}

struct FrameMetrics {
    int frame = 0;
    double psnr_db = 0.0;
    bool psnr_exact = false;
    double ssim = 0.0;
    std::optional<double> eq1_loss;
};

struct MetricsReport {
    std::vector<FrameMetrics> frames;

    double mean_psnr() const { return mean([](const FrameMetrics& f) { return f.psnr_db; }); }
    double mean_ssim() const { return mean([](const FrameMetrics& f) { return f.ssim; }); }
    double std_psnr() const { return stddev([](const FrameMetrics& f) { return f.psnr_db; }); }
    double std_ssim() const { return stddev([](const FrameMetrics& f) { return f.ssim; }); }

    std::string to_csv() const {
        std::ostringstream out;
        out << std::setprecision(6) << std::fixed;
        out << "frame,psnr_db,ssim,eq1_loss\n";
        for (const FrameMetrics& f : frames) {
            out << f.frame << "," << f.psnr_db << "," << f.ssim << ",";
            if (f.eq1_loss) out << *f.eq1_loss;
            out << "\n";
        }
        out << "mean," << mean_psnr() << "," << mean_ssim() << ",";
        if (all_have_loss()) out << mean([](const FrameMetrics& f) { return *f.eq1_loss; });
        out << "\n";
        out << "std," << std_psnr() << "," << std_ssim() << ",";
        if (all_have_loss()) out << stddev([](const FrameMetrics& f) { return *f.eq1_loss; });
        out << "\n";
        return out.str();
    }

private:
    bool all_have_loss() const {
        if (frames.empty()) return false;
        for (const FrameMetrics& f : frames)
            if (!f.eq1_loss) return false;
        return true;
    }

    template <typename Fn>
    double mean(Fn&& get) const {
        if (frames.empty()) return 0.0;
        double s = 0.0;
        for (const FrameMetrics& f : frames) s += get(f);
        return s / static_cast<double>(frames.size());
    }

    template <typename Fn>
    double stddev(Fn&& get) const {
        if (frames.empty()) return 0.0;
        const double m = mean(get);
        double s = 0.0;
        for (const FrameMetrics& f : frames) {
            const double d = get(f) - m;
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(frames.size()));
    }
};

}  // namespace qv
