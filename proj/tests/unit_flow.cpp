#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qv/flow.hpp"
#include "qv/prefilter.hpp"
#include "qv/sensor.hpp"
#include "test_util.hpp"

using namespace qv;
using testutil::crop;
using testutil::make_texture;
using testutil::make_wave_field;

namespace {

// Exhaustive single-level block matcher, written independently of
// estimate_flow: same cost and tie-break contract, plain loops.
FlowField oracle_full_search(const Image<double>& ref, const Image<double>& alt, int tile,
                             int radius) {
    FlowField out;
    out.tile_size = tile;
    out.grid_w = (ref.width() + tile - 1) / tile;
    out.grid_h = (ref.height() + tile - 1) / tile;
    out.tiles.resize(static_cast<size_t>(out.grid_w) * out.grid_h);
    for (int ty = 0; ty < out.grid_h; ++ty)
        for (int tx = 0; tx < out.grid_w; ++tx) {
            const int x0 = tx * tile, y0 = ty * tile;
            const int x1 = std::min(x0 + tile, ref.width());
            const int y1 = std::min(y0 + tile, ref.height());
            double best_cost = std::numeric_limits<double>::infinity();
            int best_dx = 0, best_dy = 0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    double cost = 0.0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x)
                            cost += std::fabs(ref(x, y) - alt.at_clamped(x + dx, y + dy));
                    cost /= static_cast<double>((x1 - x0) * (y1 - y0));
                    bool better = cost < best_cost;
                    if (cost == best_cost) {
                        const int m = dx * dx + dy * dy;
                        const int bm = best_dx * best_dx + best_dy * best_dy;
                        better = m < bm || (m == bm && (dx < best_dx ||
                                                        (dx == best_dx && dy < best_dy)));
                    }
                    if (better) {
                        best_cost = cost;
                        best_dx = dx;
                        best_dy = dy;
                    }
                }
            out.at(tx, ty) = Flow{static_cast<double>(best_dx), static_cast<double>(best_dy)};
        }
    return out;
}

}  // namespace

TEST_CASE("pyramid construction") {
    SECTION("one level returns the input") {
        const Image<double> img = make_texture(20, 14, 1);
        const auto pyr = build_pyramid(img, 1);
        REQUIRE(pyr.size() == 1);
        CHECK(pyr[0] == img);
    }
    SECTION("constants are preserved at every level") {
        const auto pyr = build_pyramid(Image<double>(33, 21, 0.7), 3);
        REQUIRE(pyr.size() == 3);
        CHECK(pyr[1].width() == 17);
        CHECK(pyr[2].width() == 9);
        for (const auto& level : pyr)
            for (double v : level) CHECK(v == Catch::Approx(0.7).margin(1e-12));
    }
    SECTION("4x4 downsamples to quadrant means") {
        Image<double> img(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) img(x, y) = y * 4 + x;
        const auto pyr = build_pyramid(img, 2);
        REQUIRE(pyr[1].width() == 2);
        REQUIRE(pyr[1].height() == 2);
        CHECK(pyr[1](0, 0) == Catch::Approx((0 + 1 + 4 + 5) / 4.0));
        CHECK(pyr[1](1, 0) == Catch::Approx((2 + 3 + 6 + 7) / 4.0));
        CHECK(pyr[1](0, 1) == Catch::Approx((8 + 9 + 12 + 13) / 4.0));
        CHECK(pyr[1](1, 1) == Catch::Approx((10 + 11 + 14 + 15) / 4.0));
    }
    SECTION("depth limited by min_dim") {
        const Image<double> img(32, 32, 0.0);
        CHECK_THROWS_AS(build_pyramid(img, 3, 16), std::invalid_argument);
        CHECK_NOTHROW(build_pyramid(img, 2, 16));
        CHECK_THROWS_AS(build_pyramid(img, 0), std::invalid_argument);
    }
}

TEST_CASE("identical frames give zero flow") {
    const Image<double> img = make_texture(64, 64, 7);
    const FlowField f = estimate_flow(img, img, FlowParams{});
    for (const Flow& t : f.tiles) {
        CHECK(t.dx == 0.0);
        CHECK(t.dy == 0.0);
    }
}

TEST_CASE("textureless frames give zero flow") {
    const Image<double> a(64, 64, 0.5);
    const Image<double> b(64, 64, 0.5);
    const FlowField f = estimate_flow(a, b, FlowParams{});
    for (const Flow& t : f.tiles) {
        CHECK(t.dx == 0.0);
        CHECK(t.dy == 0.0);
    }
}

TEST_CASE("noiseless integer shifts are recovered exactly on interior tiles") {
    const FlowParams params;  // defaults, subpixel enabled
    const int view = 96, margin = 24;
    const Image<double> pano = make_texture(view + 2 * margin, view + 2 * margin, 21);

    std::mt19937 gen(5150);
    std::uniform_int_distribution<int> shift(-5, 5);
    for (int trial = 0; trial < 5; ++trial) {
        const int sx = shift(gen), sy = shift(gen);
        const Image<double> ref = crop(pano, margin, margin, view, view);
        const Image<double> alt = crop(pano, margin + sx, margin + sy, view, view);
        const FlowField f = estimate_flow(ref, alt, params);

        const int guard = 8;  // stay clear of tiles touching replicated borders
        for (int ty = 0; ty < f.grid_h; ++ty)
            for (int tx = 0; tx < f.grid_w; ++tx) {
                const int x0 = tx * f.tile_size, y0 = ty * f.tile_size;
                const int x1 = std::min(x0 + f.tile_size, view);
                const int y1 = std::min(y0 + f.tile_size, view);
                if (x0 - guard < 0 || y0 - guard < 0 || x1 + guard > view || y1 + guard > view)
                    continue;
                REQUIRE(f.at(tx, ty).dx == static_cast<double>(-sx));
                REQUIRE(f.at(tx, ty).dy == static_cast<double>(-sy));
            }
    }
}

TEST_CASE("flow antisymmetry for pure translation (integer mode)") {
    FlowParams params;
    params.subpixel = false;
    const int view = 96, margin = 24, sx = 4, sy = -3;
    const Image<double> pano = make_texture(view + 2 * margin, view + 2 * margin, 33);
    const Image<double> a = crop(pano, margin, margin, view, view);
    const Image<double> b = crop(pano, margin + sx, margin + sy, view, view);

    const FlowField fab = estimate_flow(a, b, params);
    const FlowField fba = estimate_flow(b, a, params);
    const int guard = 10;
    for (int ty = 0; ty < fab.grid_h; ++ty)
        for (int tx = 0; tx < fab.grid_w; ++tx) {
            const int x0 = tx * fab.tile_size, y0 = ty * fab.tile_size;
            const int x1 = std::min(x0 + fab.tile_size, view);
            const int y1 = std::min(y0 + fab.tile_size, view);
            if (x0 - guard < 0 || y0 - guard < 0 || x1 + guard > view || y1 + guard > view)
                continue;
            CHECK(fab.at(tx, ty).dx == -fba.at(tx, ty).dx);
            CHECK(fab.at(tx, ty).dy == -fba.at(tx, ty).dy);
        }
}

TEST_CASE("single-level search equals the exhaustive oracle") {
    FlowParams params;
    params.levels = 1;
    params.search_radius = 4;
    params.subpixel = false;

    std::mt19937 gen(404);
    for (int trial = 0; trial < 10; ++trial) {
        const Image<double> ref = make_texture(48, 48, 1000 + trial);
        Image<double> alt = make_texture(48, 48, 2000 + trial);
        // Make alt a noisy shifted-ish variant so argmins are nontrivial.
        for (size_t i = 0; i < alt.size(); ++i) alt[i] = 0.7 * ref[i] + 0.3 * alt[i];

        const FlowField ours = estimate_flow(ref, alt, params);
        const FlowField oracle = oracle_full_search(ref, alt, params.tile_size, params.search_radius);
        REQUIRE(ours.grid_w == oracle.grid_w);
        REQUIRE(ours.grid_h == oracle.grid_h);
        for (size_t i = 0; i < ours.tiles.size(); ++i) {
            REQUIRE(ours.tiles[i].dx == oracle.tiles[i].dx);
            REQUIRE(ours.tiles[i].dy == oracle.tiles[i].dy);
        }
    }
}

TEST_CASE("subpixel fit recovers a half-pixel ramp shift") {
    FlowParams params;
    params.levels = 1;
    params.search_radius = 2;
    const int n = 32;
    Image<double> ref(n, n), alt(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            ref(x, y) = x;
            alt(x, y) = x - 0.5;  // ref(x) == alt(x + 0.5)
        }
    const FlowField f = estimate_flow(ref, alt, params);
    const Flow t = f.at(1, 1);
    CHECK(t.dx == Catch::Approx(0.5).margin(1e-9));
    CHECK(t.dy == 0.0);
}

TEST_CASE("flow on predenoised quanta frames tracks real motion") {
    // 3.25 ppp, window-3 sums, 3 px/frame translation over a textured wave
    // field: Monte-Carlo mean interior endpoint error stays under one pixel
    // (artifact target).
    SensorConfig cfg;
    cfg.qe = 0.80;
    cfg.dark_current = 1.6;
    cfg.read_noise = 0.2;
    cfg.nbits = 3;
    cfg.fps = 2000.0;

    const int view = 96, shift_per_frame = 3, n_frames = 8;
    double epe_sum = 0.0;
    int count = 0;
    for (uint32_t seed = 500; seed < 508; ++seed) {
        const Image<double> pano =
            make_wave_field(view + shift_per_frame * (n_frames - 1), view, seed);

        std::vector<Image<double>> crops;
        double mean_gt = 0.0;
        for (int t = 0; t < n_frames; ++t) {
            crops.push_back(crop(pano, shift_per_frame * t, 0, view, view));
            mean_gt += image_mean(crops.back());
        }
        mean_gt /= n_frames;

        std::vector<QuantaFrame> frames;
        for (int t = 0; t < n_frames; ++t) {
            ExposureMap exposure(view, view);
            for (size_t i = 0; i < exposure.size(); ++i)
                exposure[i] = crops[static_cast<size_t>(t)][i] * 3.25 / mean_gt;
            frames.push_back(simulate_frame(exposure, cfg, 2025 + seed, static_cast<uint64_t>(t)));
        }

        const Image<double> den_a = predenoise(sum_window(frames, 3, 3), cfg, 1.5);
        const Image<double> den_b = predenoise(sum_window(frames, 4, 3), cfg, 1.5);

        const FlowField f = estimate_flow(den_a, den_b, FlowParams{});
        const int guard = 10;
        for (int ty = 0; ty < f.grid_h; ++ty)
            for (int tx = 0; tx < f.grid_w; ++tx) {
                const int x0 = tx * f.tile_size, y0 = ty * f.tile_size;
                const int x1 = std::min(x0 + f.tile_size, view);
                const int y1 = std::min(y0 + f.tile_size, view);
                if (x0 - guard < 0 || y0 - guard < 0 || x1 + guard > view || y1 + guard > view)
                    continue;
                epe_sum += std::hypot(f.at(tx, ty).dx + shift_per_frame, f.at(tx, ty).dy);
                ++count;
            }
    }
    REQUIRE(count >= 100);
    CHECK(epe_sum / count <= 1.0);
}

TEST_CASE("flow stays within the configured envelope") {
    const FlowParams params;
    const double bound = params.max_displacement();
    CHECK(bound == Catch::Approx(4 * 4 + 2 * 2 + 2 + 0.5));

    const Image<double> a = make_texture(80, 80, 51);
    const Image<double> b = make_texture(80, 80, 52);
    const FlowField f = estimate_flow(a, b, params);
    for (const Flow& t : f.tiles) {
        CHECK(std::fabs(t.dx) <= bound);
        CHECK(std::fabs(t.dy) <= bound);
    }
}

TEST_CASE("upsampling replicates tiles and scales displacements") {
    FlowField f;
    f.tile_size = 16;
    f.grid_w = 1;
    f.grid_h = 1;
    f.tiles = {Flow{1.0, 2.0}};

    const FlowField up = upsample_flow(f, 2);
    REQUIRE(up.grid_w == 2);
    REQUIRE(up.grid_h == 2);
    for (const Flow& t : up.tiles) {
        CHECK(t.dx == 2.0);
        CHECK(t.dy == 4.0);
    }

    FlowField zero;
    zero.tile_size = 16;
    zero.grid_w = 2;
    zero.grid_h = 3;
    zero.tiles.assign(6, Flow{0.0, 0.0});
    const FlowField up0 = upsample_flow(zero, 2);
    for (const Flow& t : up0.tiles) {
        CHECK(t.dx == 0.0);
        CHECK(t.dy == 0.0);
    }
}

TEST_CASE("consistency mask") {
    auto uniform_field = [](int gw, int gh, double dx, double dy) {
        FlowField f;
        f.tile_size = 16;
        f.grid_w = gw;
        f.grid_h = gh;
        f.tiles.assign(static_cast<size_t>(gw) * gh, Flow{dx, dy});
        return f;
    };

    SECTION("exact inverses pass for any tau") {
        const FlowField fwd = uniform_field(4, 4, 2.0, -1.0);
        const FlowField bwd = uniform_field(4, 4, -2.0, 1.0);
        for (const double tau : {0.0, 1.0}) {
            const Image<uint8_t> mask = consistency_mask(fwd, bwd, tau);
            for (uint8_t m : mask) CHECK(m == 1);
        }
    }
    SECTION("residual above tau fails") {
        const FlowField fwd = uniform_field(4, 4, 3.0, 0.0);
        const FlowField bwd = uniform_field(4, 4, 0.0, 0.0);
        const Image<uint8_t> mask = consistency_mask(fwd, bwd, 1.0);
        for (uint8_t m : mask) CHECK(m == 0);
    }
    SECTION("estimated translation pair passes on interior tiles") {
        const int view = 96, margin = 24, sx = 3, sy = 2;
        const Image<double> pano = make_texture(view + 2 * margin, view + 2 * margin, 61);
        const Image<double> a = crop(pano, margin, margin, view, view);
        const Image<double> b = crop(pano, margin + sx, margin + sy, view, view);
        FlowParams params;
        params.subpixel = false;
        const FlowField fwd = estimate_flow(a, b, params);
        const FlowField bwd = estimate_flow(b, a, params);
        const Image<uint8_t> mask = consistency_mask(fwd, bwd, 1.0);
        for (int ty = 1; ty + 1 < mask.height(); ++ty)
            for (int tx = 1; tx + 1 < mask.width(); ++tx) CHECK(mask(tx, ty) == 1);
    }
    SECTION("grid mismatch throws") {
        CHECK_THROWS_AS(consistency_mask(uniform_field(4, 4, 0, 0), uniform_field(3, 4, 0, 0), 1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("flow parameter validation") {
    FlowParams p;
    p.tile_size = 2;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = FlowParams{};
    p.levels = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);

    const Image<double> a(32, 32, 0.0);
    const Image<double> b(16, 32, 0.0);
    CHECK_THROWS_AS(estimate_flow(a, b, FlowParams{}), std::invalid_argument);

    FlowParams deep;
    deep.levels = 4;  // 32 -> 16 -> 8 -> 4, below tile_size 16
    CHECK_THROWS_AS(estimate_flow(a, a, deep), std::invalid_argument);
}
