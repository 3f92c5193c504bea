#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qv/prefilter.hpp"
#include "qv/sensor.hpp"

using namespace qv;

namespace {

SensorConfig paper_config() {
    SensorConfig cfg;
    cfg.qe = 0.80;
    cfg.dark_current = 1.6;
    cfg.read_noise = 0.2;
    cfg.nbits = 3;
    cfg.fps = 2000.0;
    return cfg;
}

double mse(const Image<double>& a, const Image<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("sum window basics") {
    std::vector<QuantaFrame> frames;
    for (int i = 0; i < 9; ++i) frames.emplace_back(4, 4, static_cast<uint16_t>(i));

    SECTION("window of one is the identity") {
        const SumImage s = sum_window(frames, 3, 1);
        CHECK(s.window_first == 3);
        CHECK(s.window_count == 1);
        for (uint32_t v : s.sums) CHECK(v == 3);
    }
    SECTION("seven 1-bit ones sum to the 3-bit range") {
        std::vector<QuantaFrame> ones(7, QuantaFrame(4, 4, uint16_t{1}));
        const SumImage s = sum_window(ones, 3, 7);
        CHECK(s.window_count == 7);
        for (uint32_t v : s.sums) CHECK(v == 7);
    }
    SECTION("boundary windows shrink and record their range") {
        const SumImage s = sum_window(frames, 0, 5);
        CHECK(s.window_first == 0);
        CHECK(s.window_count == 3);  // frames 0,1,2
        for (uint32_t v : s.sums) CHECK(v == 0 + 1 + 2);
    }
    SECTION("invalid windows") {
        CHECK_THROWS_AS(sum_window(frames, 0, 0), std::invalid_argument);
        CHECK_THROWS_AS(sum_window({}, 0, 1), std::invalid_argument);
        CHECK_THROWS_AS(sum_window(frames, 9, 1), std::invalid_argument);
    }
}

TEST_CASE("summed Poisson frames keep Poisson variance") {
    std::mt19937 gen(777);
    std::poisson_distribution<uint16_t> pois(2.0);
    const int w = 96, h = 96, window = 5;
    std::vector<QuantaFrame> frames;
    for (int i = 0; i < window; ++i) {
        QuantaFrame f(w, h);
        for (auto& v : f) v = pois(gen);
        frames.push_back(std::move(f));
    }
    const SumImage s = sum_window(frames, 2, window);

    const double n = static_cast<double>(s.sums.size());
    double sum = 0, sum2 = 0;
    for (uint32_t v : s.sums) {
        sum += v;
        sum2 += static_cast<double>(v) * v;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double expected = window * 2.0;  // Var of the Poisson sum
    const double mu4 = expected * (1.0 + 3.0 * expected);
    const double se = std::sqrt((mu4 - expected * expected) / n);
    CHECK(std::fabs(var - expected) < 3.0 * se);
}

TEST_CASE("generalized Anscombe") {
    CHECK(generalized_anscombe(0.0, 0.0) == Catch::Approx(2.0 * std::sqrt(0.375)).epsilon(1e-12));
    CHECK(generalized_anscombe(0.0, 0.0) == Catch::Approx(1.224745).margin(1e-6));

    SECTION("algebraic inverse") {
        for (const double x : {0.5, 1.0, 5.0, 50.0}) {
            const double y = generalized_anscombe(x, 0.2);
            CHECK(inverse_anscombe(y, 0.2) == Catch::Approx(x).margin(1e-9));
        }
    }
    SECTION("inverse clamps below the transform floor") {
        CHECK(inverse_anscombe(0.0, 0.2) == 0.0);
        CHECK(inverse_anscombe(1.0, 0.2) == 0.0);
        CHECK(inverse_anscombe(2.0 * std::sqrt(0.375 + 0.04), 0.2) ==
              Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("stabilized variance is near one") {
        std::mt19937_64 gen(2024);
        const double sigma = 0.2;
        for (const double lambda : {2.0, 10.0}) {
            std::poisson_distribution<long> pois(lambda);
            std::normal_distribution<double> gauss(0.0, sigma);
            const int n = 100000;
            double s = 0, s2 = 0;
            for (int i = 0; i < n; ++i) {
                const double y = generalized_anscombe(pois(gen) + gauss(gen), sigma);
                s += y;
                s2 += y * y;
            }
            const double var = s2 / n - (s / n) * (s / n);
            CHECK(var > 0.8);
            CHECK(var < 1.2);
        }
    }
}

TEST_CASE("non-local means") {
    SECTION("zero strength is the identity") {
        Image<double> img(8, 8);
        for (size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
        CHECK(denoise_stabilized(img, 0.0) == img);
    }
    SECTION("constant image stays constant") {
        const Image<double> img(33, 17, 2.5);
        const Image<double> out = denoise_stabilized(img, 1.0);
        for (double v : out) CHECK(v == Catch::Approx(2.5).margin(1e-12));
    }
    SECTION("reduces noise on a step edge") {
        std::mt19937 gen(99);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const int w = 64, h = 64;
        Image<double> clean(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) clean(x, y) = x < w / 2 ? 0.0 : 4.0;
        Image<double> noisy = clean;
        for (double& v : noisy) v += gauss(gen);

        const Image<double> out = denoise_stabilized(noisy, 1.0);
        CHECK(mse(out, clean) < mse(noisy, clean));
    }
}

TEST_CASE("predenoise composition") {
    const SensorConfig cfg = paper_config();

    SECTION("noiseless constant sum divides by the window") {
        SumImage sum;
        sum.window_first = 0;
        sum.window_count = 3;
        sum.sums = Image<uint32_t>(16, 16, 12u);
        const Image<double> out = predenoise(sum, cfg, 1.0);
        for (double v : out) CHECK(v == Catch::Approx(4.0).margin(1e-9));
    }
    SECTION("zero strength equals the temporal average") {
        std::mt19937 gen(5);
        SumImage sum;
        sum.window_first = 0;
        sum.window_count = 4;
        sum.sums = Image<uint32_t>(12, 9);
        for (auto& v : sum.sums) v = gen() % 20;
        const Image<double> out = predenoise(sum, cfg, 0.0);
        for (size_t i = 0; i < out.size(); ++i)
            CHECK(out[i] == Catch::Approx(sum.sums[i] / 4.0).margin(1e-12));
    }
    SECTION("never negative") {
        std::mt19937 gen(6);
        SumImage sum;
        sum.window_first = 0;
        sum.window_count = 3;
        sum.sums = Image<uint32_t>(24, 24);
        for (auto& v : sum.sums) v = gen() % 8;
        const Image<double> out = predenoise(sum, cfg, 2.0);
        for (double v : out) CHECK(v >= 0.0);
    }
}

TEST_CASE("predenoising beats the raw average on a static scene") {
    const SensorConfig cfg = paper_config();

    // Smooth static scene at 3.25 ppp, window of 7 frames.
    const int w = 64, h = 64;
    Image<double> gt(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            gt(x, y) = 0.5 + 0.30 * std::sin(x * 0.35) * std::cos(y * 0.22);
    const ExposureMap exposure = scale_luminance(gt, 3.25);

    std::vector<QuantaFrame> frames;
    for (int i = 0; i < 7; ++i) frames.push_back(simulate_frame(exposure, cfg, 404, i));
    const SumImage sum = sum_window(frames, 3, 7);

    Image<double> clean(w, h);
    for (size_t i = 0; i < clean.size(); ++i) clean[i] = cfg.qe * exposure[i];

    Image<double> raw_avg(w, h);
    for (size_t i = 0; i < raw_avg.size(); ++i) raw_avg[i] = sum.sums[i] / 7.0;

    const Image<double> denoised = predenoise(sum, cfg, 2.0);
    CHECK(mse(denoised, clean) < mse(raw_avg, clean));
}

TEST_CASE("temporal averaging SNR is monotone in window size") {
    const SensorConfig cfg = paper_config();
    const int w = 48, h = 48;
    Image<double> gt(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) gt(x, y) = 0.3 + 0.4 * ((x / 8 + y / 8) % 2);
    const ExposureMap exposure = scale_luminance(gt, 3.25);

    std::vector<QuantaFrame> frames;
    for (int i = 0; i < 9; ++i) frames.push_back(simulate_frame(exposure, cfg, 11, i));

    Image<double> clean(w, h);
    for (size_t i = 0; i < clean.size(); ++i) clean[i] = cfg.qe * exposure[i];

    double prev = std::numeric_limits<double>::infinity();
    for (const int window : {1, 3, 7}) {
        const SumImage sum = sum_window(frames, 4, window);
        Image<double> avg(w, h);
        for (size_t i = 0; i < avg.size(); ++i)
            avg[i] = sum.sums[i] / static_cast<double>(sum.window_count);
        const double m = mse(avg, clean);
        CHECK(m <= prev);
        prev = m;
    }
}
