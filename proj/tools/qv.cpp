// qv: few-bit quanta sensor simulation, classical burst restoration, and
// evaluation tools around the QVS stream format.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qv/errors.hpp"
#include "qv/image_io.hpp"
#include "qv/metrics.hpp"
#include "qv/restore.hpp"
#include "qv/sensor.hpp"
#include "qv/stream.hpp"
#include "qv/threading.hpp"
#include "qv/tradeoff.hpp"

namespace fs = std::filesystem;
using namespace qv;

namespace {

constexpr const char* kVersion = "0.1.0";

bool has_image_ext(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && has_image_ext(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

// Line-oriented key=value config overlay: each key names a long option of
// the invoked subcommand. Precedence is flag > config file > default, so a
// key is ignored when the flag already appears on the command line.
std::vector<std::string> apply_config_overlay(const CLI::App& app,
                                              std::vector<std::string> args) {
    const CLI::App* sub = nullptr;
    size_t sub_pos = 0;
    for (size_t i = 0; i < args.size(); ++i) {
        if (!args[i].empty() && args[i][0] != '-') {
            sub = app.get_subcommand_no_throw(args[i]);
            sub_pos = i;
            break;
        }
    }
    if (!sub) return args;

    std::string config_path;
    for (size_t i = sub_pos + 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config file: " + config_path);

    auto flag_present = [&](const std::string& name) {
        for (size_t i = sub_pos + 1; i < args.size(); ++i)
            if (args[i] == name || args[i].rfind(name + "=", 0) == 0) return true;
        return false;
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        const size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + " is not key=value");
        const std::string key = "--" + line.substr(start, eq - start);
        const std::string value = line.substr(eq + 1);
        const CLI::Option* opt = sub->get_option_no_throw(key);
        if (!opt)
            throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" +
                             line.substr(start, eq - start) + "' for subcommand " +
                             sub->get_name());
        if (flag_present(key)) continue;
        if (opt->get_expected_min() == 0) {  // flag
            if (value == "1" || value == "true" || value == "yes" || value == "on")
                args.push_back(key);
        } else {
            args.push_back(key);
            args.push_back(value);
        }
    }
    return args;
}

// Inclusive a:b:step selection; empty selects every frame.
std::vector<int> parse_frame_range(const std::string& text, int frame_count) {
    std::vector<int> frames;
    if (text.empty()) {
        for (int i = 0; i < frame_count; ++i) frames.push_back(i);
        return frames;
    }
    int a = 0, b = frame_count - 1, step = 1;
    const size_t c1 = text.find(':');
    try {
        if (c1 == std::string::npos) {
            a = b = std::stoi(text);
        } else {
            a = std::stoi(text.substr(0, c1));
            const size_t c2 = text.find(':', c1 + 1);
            if (c2 == std::string::npos) {
                b = std::stoi(text.substr(c1 + 1));
            } else {
                b = std::stoi(text.substr(c1 + 1, c2 - c1 - 1));
                step = std::stoi(text.substr(c2 + 1));
            }
        }
    } catch (const std::exception&) {
        throw UsageError("bad --frames range: " + text);
    }
    if (step < 1 || a < 0 || b >= frame_count || a > b)
        throw UsageError("--frames out of range for stream with " + std::to_string(frame_count) +
                         " frames: " + text);
    for (int i = a; i <= b; i += step) frames.push_back(i);
    return frames;
}

struct SensorFlags {
    double qe = 0.80;
    double dark = 1.6;
    double read_noise = 0.2;

    void attach(CLI::App* cmd) {
        cmd->add_option("--qe", qe, "Quantum efficiency")->capture_default_str();
        cmd->add_option("--dark", dark, "Dark current, e-/pixel/s")->capture_default_str();
        cmd->add_option("--read-noise", read_noise, "Read noise, e- RMS/readout")
            ->capture_default_str();
    }
};

struct RestoreFlags {
    RestoreParams params;
    std::string frames_range;
    std::string format = "png";
    bool no_invert = false;
    bool no_subpixel = false;
    bool display = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--window", params.window_frames, "Frames per restored output (odd)")
            ->capture_default_str();
        cmd->add_option("--prefilter-window", params.prefilter_window, "Frames per sum image")
            ->capture_default_str();
        cmd->add_option("--strength", params.prefilter_strength,
                        "Pre-denoise strength in the stabilized domain")
            ->capture_default_str();
        cmd->add_option("--flow-tile", params.flow.tile_size, "Block matching tile size")
            ->capture_default_str();
        cmd->add_option("--flow-levels", params.flow.levels, "Pyramid levels")
            ->capture_default_str();
        cmd->add_option("--flow-search", params.flow.search_radius, "Coarsest search radius")
            ->capture_default_str();
        cmd->add_option("--flow-refine", params.flow.refine_radius, "Per-level refine radius")
            ->capture_default_str();
        cmd->add_flag("--no-subpixel", no_subpixel, "Disable subpixel flow");
        cmd->add_option("--merge-tile", params.merge_tile, "Merge tile size (50% overlap)")
            ->capture_default_str();
        cmd->add_option("--mismatch-scale", params.mismatch_scale,
                        "Scale on the predicted merge noise variance")
            ->capture_default_str();
        cmd->add_option("--tau", params.consistency_tau, "Flow consistency threshold, px")
            ->capture_default_str();
        cmd->add_flag("--no-invert", no_invert, "Skip response inversion (direct electron scale)");
        cmd->add_option("--unsharp-amount", params.unsharp_amount, "Unsharp mask amount")
            ->capture_default_str();
        cmd->add_option("--unsharp-radius", params.unsharp_radius, "Unsharp Gaussian sigma, px")
            ->capture_default_str();
        cmd->add_option("--norm-factor", params.norm_factor, "Output normalization factor")
            ->capture_default_str();
        cmd->add_option("--frames", frames_range, "Frame selection a:b:step (inclusive)");
    }

    RestoreParams resolved() const {
        RestoreParams p = params;
        p.invert_response = !no_invert;
        p.flow.subpixel = !no_subpixel;
        p.validate();
        return p;
    }
};

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& input_dir, const std::string& out_path, double ppp,
                 const SensorFlags& sensor, int nbits, double fps, uint64_t seed,
                 const std::string& scale_mode) {
    SensorConfig cfg;
    cfg.qe = sensor.qe;
    cfg.dark_current = sensor.dark;
    cfg.read_noise = sensor.read_noise;
    cfg.nbits = nbits;
    cfg.fps = fps;
    cfg.validate();
    if (!(ppp >= 0)) throw UsageError("--ppp must be >= 0");
    if (scale_mode != "global" && scale_mode != "per-frame")
        throw UsageError("--scale must be global or per-frame");

    const std::vector<fs::path> files = list_images(input_dir);
    if (files.empty()) throw DataError("no frames found in " + input_dir);

    std::vector<Image<double>> gts;
    gts.reserve(files.size());
    for (const fs::path& f : files) {
        Image<double> gt = read_groundtruth(f.string());
        if (!gts.empty() && !gt.same_size(gts.front()))
            throw DataError("mixed frame dimensions: " + f.string());
        gts.push_back(std::move(gt));
    }
    if (gts.front().width() > 65535 || gts.front().height() > 65535)
        throw DataError("frames larger than the stream format allows");

    // Global scaling uses one factor for the whole clip so a static scene
    // keeps constant brightness; per-frame rescales every frame mean to ppp.
    double global_mean = 0.0;
    for (const auto& gt : gts) global_mean += image_mean(gt);
    global_mean /= static_cast<double>(gts.size());

    std::vector<QuantaFrame> frames;
    frames.reserve(gts.size());
    for (size_t i = 0; i < gts.size(); ++i) {
        ExposureMap exposure(gts[i].width(), gts[i].height(), 0.0);
        if (scale_mode == "per-frame") {
            const double mean = image_mean(gts[i]);
            if (mean > 0.0)
                exposure = scale_luminance(gts[i], ppp);
            else if (ppp > 0.0)
                std::cerr << "warning: all-black frame " << i << " kept at zero exposure\n";
        } else {
            if (global_mean > 0.0) {
                const double scale = ppp / global_mean;
                for (size_t p = 0; p < exposure.size(); ++p) exposure[p] = gts[i][p] * scale;
            } else if (ppp > 0.0 && i == 0) {
                std::cerr << "warning: all-black clip kept at zero exposure\n";
            }
        }
        frames.push_back(simulate_frame(exposure, cfg, seed, static_cast<uint64_t>(i)));
    }

    StreamHeader header;
    header.width = static_cast<uint16_t>(gts.front().width());
    header.height = static_cast<uint16_t>(gts.front().height());
    header.nbits = static_cast<uint8_t>(nbits);
    header.frame_count = static_cast<uint32_t>(frames.size());
    header.fps = static_cast<float>(fps);
    header.nominal_ppp = static_cast<float>(ppp);
    write_stream_file(out_path, frames, header);

    std::cout << "wrote " << out_path << ": " << frames.size() << " frames " << header.width << "x"
              << header.height << " @ " << nbits << " bits, ppp " << ppp << ", seed " << seed
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// restore

std::string frame_filename(int index, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.%s", index, ext.c_str());
    return buf;
}

int cmd_restore(const std::string& stream_path, const std::string& out_dir,
                const RestoreFlags& flags, const SensorFlags& sensor, int threads) {
    const Stream stream = read_stream_file(stream_path);
    if (stream.frames.empty()) throw DataError("stream has no frames: " + stream_path);

    SensorConfig cfg;
    cfg.qe = sensor.qe;
    cfg.dark_current = sensor.dark;
    cfg.read_noise = sensor.read_noise;
    cfg.nbits = stream.header.nbits;
    cfg.fps = stream.header.fps;
    cfg.validate();

    const RestoreParams params = flags.resolved();
    const double ppp = stream.header.nominal_ppp;
    if (!(ppp > 0)) throw DataError("stream header has no usable nominal ppp");

    const std::vector<int> selection =
        parse_frame_range(flags.frames_range, static_cast<int>(stream.frames.size()));
    if (flags.format != "png" && flags.format != "pgm")
        throw UsageError("--format must be png or pgm");

    fs::create_directories(out_dir);
    const ResponseTable table(cfg);

    // Worker pool over frames; single-frame runs keep the pool for the
    // stage-internal tile parallelism instead.
    std::vector<uint8_t> truncated_flags(selection.size(), 0);
    std::vector<uint8_t> saturated_flags(selection.size(), 0);
    auto restore_one = [&](int64_t k) {
        const int t = selection[static_cast<size_t>(k)];
        const RestoredFrame out = restore_frame(stream.frames, t, cfg, params, ppp, table);
        truncated_flags[static_cast<size_t>(k)] = out.window_truncated ? 1 : 0;
        saturated_flags[static_cast<size_t>(k)] = out.saturation_warning ? 1 : 0;
        const fs::path path = fs::path(out_dir) / frame_filename(t, flags.format);
        write_linear16(out.image, path.string());
        if (flags.display) {
            const fs::path disp = fs::path(out_dir) / ("display_" + frame_filename(t, "png"));
            export_display(out.image, disp.string());
        }
    };
    if (selection.size() == 1)
        restore_one(0);
    else
        parallel_for(0, static_cast<int64_t>(selection.size()), restore_one, 1);

    int truncated = 0, saturated = 0;
    for (size_t k = 0; k < selection.size(); ++k) {
        truncated += truncated_flags[k];
        saturated += saturated_flags[k];
    }

    // Run manifest: fully resolved configuration, no timestamps, so repeated
    // runs with identical inputs produce identical files.
    std::ofstream manifest(fs::path(out_dir) / "run.manifest");
    manifest << "tool=qv restore\n"
             << "version=" << kVersion << "\n"
             << "stream=" << stream_path << "\n"
             << "stream_width=" << stream.header.width << "\n"
             << "stream_height=" << stream.header.height << "\n"
             << "stream_nbits=" << int(stream.header.nbits) << "\n"
             << "stream_fps=" << stream.header.fps << "\n"
             << "stream_ppp=" << stream.header.nominal_ppp << "\n"
             << "qe=" << cfg.qe << "\n"
             << "dark_current=" << cfg.dark_current << "\n"
             << "read_noise=" << cfg.read_noise << "\n"
             << "window=" << params.window_frames << "\n"
             << "prefilter_window=" << params.prefilter_window << "\n"
             << "prefilter_strength=" << params.prefilter_strength << "\n"
             << "flow_tile=" << params.flow.tile_size << "\n"
             << "flow_levels=" << params.flow.levels << "\n"
             << "flow_search=" << params.flow.search_radius << "\n"
             << "flow_refine=" << params.flow.refine_radius << "\n"
             << "flow_subpixel=" << (params.flow.subpixel ? 1 : 0) << "\n"
             << "merge_tile=" << params.merge_tile << "\n"
             << "mismatch_scale=" << params.mismatch_scale << "\n"
             << "consistency_tau=" << params.consistency_tau << "\n"
             << "invert_response=" << (params.invert_response ? 1 : 0) << "\n"
             << "unsharp_amount=" << params.unsharp_amount << "\n"
             << "unsharp_radius=" << params.unsharp_radius << "\n"
             << "norm_factor=" << params.norm_factor << "\n"
             << "threads=" << threads << "\n"
             << "frames=" << (flags.frames_range.empty() ? "all" : flags.frames_range) << "\n"
             << "format=" << flags.format << "\n"
             << "restored_count=" << selection.size() << "\n"
             << "truncated_windows=" << truncated << "\n"
             << "saturation_warnings=" << saturated << "\n";
    if (!manifest) throw DataError("failed to write run manifest");

    std::cout << "restored " << selection.size() << " frames to " << out_dir;
    if (truncated) std::cout << " (" << truncated << " truncated windows)";
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir,
                 const std::string& metrics_list, const std::string& denoised_dir,
                 const std::string& out_path) {
    std::set<std::string> wanted;
    {
        std::stringstream ss(metrics_list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item != "psnr" && item != "ssim" && item != "eq1")
                throw UsageError("unknown metric: " + item);
            wanted.insert(item);
        }
        if (wanted.empty()) throw UsageError("empty --metrics list");
    }

    auto by_name = [](const std::vector<fs::path>& files) {
        std::map<std::string, fs::path> m;
        for (const fs::path& f : files) m[f.filename().string()] = f;
        return m;
    };
    const auto preds = by_name(list_images(pred_dir));
    const auto gts = by_name(list_images(gt_dir));

    std::vector<std::string> pred_only, gt_only;
    for (const auto& [name, path] : preds)
        if (!gts.count(name)) pred_only.push_back(name);
    for (const auto& [name, path] : gts)
        if (!preds.count(name)) gt_only.push_back(name);
    if (!pred_only.empty() || !gt_only.empty()) {
        std::ostringstream msg;
        msg << "prediction/ground-truth mismatch;";
        if (!pred_only.empty()) {
            msg << " only in predictions:";
            for (const auto& n : pred_only) msg << " " << n;
        }
        if (!gt_only.empty()) {
            msg << " only in ground truth:";
            for (const auto& n : gt_only) msg << " " << n;
        }
        throw DataError(msg.str());
    }
    if (preds.empty()) throw DataError("no frames to evaluate");

    std::map<std::string, fs::path> denoised;
    if (!denoised_dir.empty()) denoised = by_name(list_images(denoised_dir));

    MetricsReport report;
    int index = 0;
    bool eq1_missing_inputs = false;
    for (const auto& [name, pred_path] : preds) {
        const Image<double> pred = read_groundtruth(pred_path.string());
        const Image<double> gt = read_groundtruth(gts.at(name).string());
        if (!pred.same_size(gt)) throw DataError("dimension mismatch for " + name);

        FrameMetrics fm;
        fm.frame = index++;
        if (wanted.count("psnr")) {
            const PsnrResult r = psnr(pred, gt);
            fm.psnr_db = r.db;
            fm.psnr_exact = r.exact;
        }
        if (wanted.count("ssim")) fm.ssim = ssim(pred, gt);
        if (wanted.count("eq1")) {
            std::optional<Image<double>> den;
            if (denoised.count(name)) den.emplace(read_groundtruth(denoised.at(name).string()));
            const MultiscaleLoss loss = multiscale_loss(gt, pred, nullptr, nullptr,
                                                        den ? &*den : nullptr, LossWeights{});
            fm.eq1_loss = loss.value;
            if (!loss.s2_used || !loss.s4_used || !loss.denoised_used) eq1_missing_inputs = true;
        }
        report.frames.push_back(fm);
    }

    const std::string csv = report.to_csv();
    if (out_path.empty() || out_path == "-") {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
        if (!out) throw DataError("failed to write " + out_path);
    }
    if (eq1_missing_inputs)
        std::cerr << "note: eq1 computed without some optional inputs "
                     "(denoised/scale-2/scale-4 terms contribute zero)\n";
    std::cerr << "evaluated " << report.frames.size() << " frames: mean psnr " << report.mean_psnr()
              << " dB, mean ssim " << report.mean_ssim() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// tradeoff

int cmd_tradeoff(const std::vector<int>& nbits_list, double base_fps, double sigma,
                 int64_t npixels, const std::string& rounding_name, const std::string& csv_path) {
    if (rounding_name != "floor" && rounding_name != "nearest")
        throw UsageError("--fps-rounding must be nearest or floor");
    const FpsRounding rounding =
        rounding_name == "floor" ? FpsRounding::down : FpsRounding::nearest;

    std::vector<TradeoffRow> rows;
    for (const int nbits : nbits_list)
        rows.push_back(tradeoff_row(nbits, base_fps, sigma, npixels, rounding));

    std::printf("%-10s %-8s %-22s %-16s\n", "bit-depth", "fps", "read-noise (e-/pix/s)",
                "data-rate (Mb/s)");
    for (const TradeoffRow& r : rows)
        std::printf("%-10d %-8lld %-22.4f %-16.4f\n", r.nbits, static_cast<long long>(r.fps),
                    r.read_noise_rate, r.data_rate_mbps);

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        out << std::setprecision(10);
        out << "nbits,fps,read_noise_e_per_pix_s,data_rate_mbps\n";
        for (const TradeoffRow& r : rows)
            out << r.nbits << "," << r.fps << "," << r.read_noise_rate << "," << r.data_rate_mbps
                << "\n";
        if (!out) throw DataError("failed to write " + csv_path);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const std::string& stream_path, const RestoreFlags& flags, const SensorFlags& sensor,
              int frame_budget, int warmup) {
    const Stream stream = read_stream_file(stream_path);
    if (stream.frames.empty()) throw DataError("stream has no frames: " + stream_path);

    SensorConfig cfg;
    cfg.qe = sensor.qe;
    cfg.dark_current = sensor.dark;
    cfg.read_noise = sensor.read_noise;
    cfg.nbits = stream.header.nbits;
    cfg.fps = stream.header.fps;
    cfg.validate();

    const RestoreParams params = flags.resolved();
    const double ppp = stream.header.nominal_ppp > 0 ? stream.header.nominal_ppp : 1.0;
    const ResponseTable table(cfg);

    const int n = std::min<int>(frame_budget, static_cast<int>(stream.frames.size()));
    if (n < 1) throw UsageError("--bench-frames must be >= 1");
    for (int i = 0; i < std::min(warmup, n); ++i)
        restore_frame(stream.frames, i, cfg, params, ppp, table);

    StageTimings timings;
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) restore_frame(stream.frames, i, cfg, params, ppp, table, &timings);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const double header_mbps = double(stream.header.nbits) * stream.header.fps *
                               stream.header.width * stream.header.height / 1e6;
    const double frames_per_s = n / wall;
    const double processed_mbps = frames_per_s * double(stream.header.nbits) *
                                  stream.header.width * stream.header.height / 1e6;

    std::printf("frames restored     : %d (%d warmup excluded)\n", n, std::min(warmup, n));
    std::printf("wall time           : %.3f s\n", wall);
    std::printf("throughput          : %.3f frames/s, %.3f Mb/s processed\n", frames_per_s,
                processed_mbps);
    std::printf("stream data rate    : %.3f Mb/s (header nbits*fps*pixels)\n", header_mbps);
    std::printf("stage breakdown (s) : prefilter %.3f | flow %.3f | merge %.3f | refine %.3f\n",
                timings.prefilter_s, timings.flow_s, timings.merge_s, timings.refine_s);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qv: quanta sensor simulation and classical burst video restoration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    int threads = 0;  // 0 keeps the pool default
    std::string config_path;  // consumed by the overlay, see apply_config_overlay

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate a quanta stream from grayscale frames");
    sim->add_option("--config", config_path, "key=value config file");
    std::string sim_input, sim_out = "stream.qvs", sim_scale = "global";
    double sim_ppp = 3.25, sim_fps = 2000.0;
    int sim_nbits = 3;
    uint64_t sim_seed = 0;
    SensorFlags sim_sensor;
    sim->add_option("--input", sim_input, "Directory of grayscale frames (png/pgm)")->required();
    sim->add_option("--out", sim_out, "Output QVS path")->capture_default_str();
    sim->add_option("--ppp", sim_ppp, "Photons per pixel per frame")->capture_default_str();
    sim->add_option("--nbits", sim_nbits, "Bit depth")->capture_default_str();
    sim->add_option("--fps", sim_fps, "Frames per second")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Simulation seed")->capture_default_str();
    sim->add_option("--scale", sim_scale, "Luminance scaling: global|per-frame")
        ->capture_default_str();
    sim->add_option("--threads", threads, "Worker threads");
    sim_sensor.attach(sim);

    // restore
    auto* res = app.add_subcommand("restore", "Restore frames from a QVS stream");
    res->add_option("--config", config_path, "key=value config file");
    std::string res_stream, res_out = "restored";
    RestoreFlags res_flags;
    SensorFlags res_sensor;
    res->add_option("--stream", res_stream, "Input QVS stream")->required();
    res->add_option("--out", res_out, "Output directory")->capture_default_str();
    res->add_option("--format", res_flags.format, "Frame file format: png|pgm")
        ->capture_default_str();
    res->add_flag("--display", res_flags.display, "Also write gamma-corrected previews");
    res->add_option("--threads", threads, "Worker threads");
    res_flags.attach(res);
    res_sensor.attach(res);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Score restored frames against ground truth");
    eval->add_option("--config", config_path, "key=value config file");
    std::string eval_pred, eval_gt, eval_metrics = "psnr,ssim", eval_denoised, eval_out;
    eval->add_option("--pred", eval_pred, "Directory of restored frames")->required();
    eval->add_option("--gt", eval_gt, "Directory of ground-truth frames")->required();
    eval->add_option("--metrics", eval_metrics, "Comma list: psnr,ssim,eq1")
        ->capture_default_str();
    eval->add_option("--denoised", eval_denoised, "Optional denoised frames for the eq1 term");
    eval->add_option("--out", eval_out, "Report CSV path (default stdout)");

    // tradeoff
    auto* trade = app.add_subcommand("tradeoff", "Bit-depth / frame-rate / data-rate table");
    trade->add_option("--config", config_path, "key=value config file");
    std::vector<int> trade_nbits{1, 3, 5, 7, 9};
    double trade_base_fps = 10000.0, trade_sigma = 0.2;
    int64_t trade_npixels = 9600;
    std::string trade_rounding = "nearest", trade_csv;
    trade->add_option("--nbits", trade_nbits, "Bit depths")->delimiter(',')->capture_default_str();
    trade->add_option("--base-fps", trade_base_fps, "1-bit frame rate")->capture_default_str();
    trade->add_option("--sigma", trade_sigma, "Read noise per readout, e-")->capture_default_str();
    trade->add_option("--npixels", trade_npixels, "Pixels per frame")->capture_default_str();
    trade->add_option("--fps-rounding", trade_rounding, "fps rounding: nearest|floor")
        ->capture_default_str();
    trade->add_option("--csv", trade_csv, "Also write the table as CSV");

    // bench
    auto* bench = app.add_subcommand("bench", "Measure restoration throughput on a stream");
    bench->add_option("--config", config_path, "key=value config file");
    std::string bench_stream;
    int bench_frames = 5, bench_warmup = 1;
    RestoreFlags bench_flags;
    SensorFlags bench_sensor;
    bench->add_option("--stream", bench_stream, "Input QVS stream")->required();
    bench->add_option("--bench-frames", bench_frames, "Frames to time")->capture_default_str();
    bench->add_option("--warmup", bench_warmup, "Warmup restorations excluded from timing")
        ->capture_default_str();
    bench->add_option("--threads", threads, "Worker threads");
    bench_flags.attach(bench);
    bench_sensor.attach(bench);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = apply_config_overlay(app, std::move(args));
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }
    std::vector<const char*> argv2;
    argv2.push_back(argv[0]);
    for (const std::string& a : args) argv2.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv2.size()), argv2.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (threads > 0) set_thread_count(threads);
        if (sim->parsed())
            return cmd_simulate(sim_input, sim_out, sim_ppp, sim_sensor, sim_nbits, sim_fps,
                                sim_seed, sim_scale);
        if (res->parsed()) return cmd_restore(res_stream, res_out, res_flags, res_sensor, threads);
        if (eval->parsed())
            return cmd_evaluate(eval_pred, eval_gt, eval_metrics, eval_denoised, eval_out);
        if (trade->parsed())
            return cmd_tradeoff(trade_nbits, trade_base_fps, trade_sigma, trade_npixels,
                                trade_rounding, trade_csv);
        if (bench->parsed())
            return cmd_bench(bench_stream, bench_flags, bench_sensor, bench_frames, bench_warmup);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
