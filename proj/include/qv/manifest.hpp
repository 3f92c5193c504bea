#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "qv/errors.hpp"

namespace qv {

// Dataset manifests are line-oriented key=value records separated by blank
// lines:
//
//   path=clips/run01.qvs
//   fps=2000
//   ppp=3.25
//   gt=gt/run01
//
// Unknown keys are ignored (collected as warnings), a missing required key
// is a parse error naming the line.
struct ClipRecord {
    std::string path;
    double fps = 0;
    double ppp = 0;
    std::string gt_path;  // optional
};

struct DatasetManifest {
    std::vector<ClipRecord> clips;
    std::vector<std::string> warnings;
};

inline DatasetManifest parse_manifest(const std::string& text) {
    DatasetManifest manifest;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;

    ClipRecord rec;
    bool in_record = false;
    bool have_fps = false, have_ppp = false;
    int record_start_line = 0;

    auto flush_record = [&](int end_line) {
        if (!in_record) return;
        const std::string where = "record starting at line " + std::to_string(record_start_line);
        if (rec.path.empty()) throw DataError("manifest: missing 'path' in " + where);
        if (!have_fps) throw DataError("manifest: missing 'fps' in " + where);
        if (!have_ppp) throw DataError("manifest: missing 'ppp' in " + where);
        if (!(rec.fps > 0)) throw DataError("manifest: fps must be > 0 in " + where);
        if (!(rec.ppp >= 0)) throw DataError("manifest: ppp must be >= 0 in " + where);
        manifest.clips.push_back(rec);
        rec = ClipRecord{};
        in_record = false;
        have_fps = have_ppp = false;
        (void)end_line;
    };

    while (std::getline(in, line)) {
        ++line_no;
        // Trim trailing CR and surrounding spaces.
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) {
            flush_record(line_no);
            continue;
        }
        if (line[start] == '#') continue;
        const size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw DataError("manifest: line " + std::to_string(line_no) + " is not key=value");
        const std::string key = line.substr(start, eq - start);
        const std::string value = line.substr(eq + 1);
        if (!in_record) {
            in_record = true;
            record_start_line = line_no;
        }
        try {
            if (key == "path") {
                if (value.empty()) throw DataError("empty path");
                rec.path = value;
            } else if (key == "fps") {
                rec.fps = std::stod(value);
                have_fps = true;
            } else if (key == "ppp") {
                rec.ppp = std::stod(value);
                have_ppp = true;
            } else if (key == "gt") {
                if (value.empty()) throw DataError("empty gt path");
                rec.gt_path = value;
            } else {
                manifest.warnings.push_back("manifest: line " + std::to_string(line_no) +
                                            ": unknown key '" + key + "' ignored");
            }
        } catch (const std::invalid_argument&) {
            throw DataError("manifest: line " + std::to_string(line_no) + ": bad value for '" + key + "'");
        }
    }
    flush_record(line_no);
    return manifest;
}

}  // namespace qv
