#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "plumeplace/optimize.hpp"

namespace plumeplace {

namespace iodetail {

/// Shortest round-trip decimal representation, reproducible across runs.
inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace iodetail

/// Layout CSV, header `sensor,x,y`.
inline void write_layout_csv(const std::string& path, const SensorLayout& layout) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write layout file: " + path);
    out << "sensor,x,y\n";
    for (int i = 0; i < layout.size(); ++i)
        out << i << ',' << iodetail::num(layout.coords(i, 0)) << ','
            << iodetail::num(layout.coords(i, 1)) << '\n';
}

inline SensorLayout read_layout_csv(const std::string& path, const Bounds& bounds) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open layout file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "sensor,x,y")
        throw ConfigError(path + ":1: expected header 'sensor,x,y'");
    std::vector<Vector2d> pts;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string tok;
        double vals[3];
        for (int k = 0; k < 3; ++k) {
            if (!std::getline(row, tok, ',')) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
            }
            try {
                vals[k] = std::stod(tok);
            } catch (const std::exception&) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad number '" + tok +
                                  "'");
            }
        }
        pts.emplace_back(vals[1], vals[2]);
    }
    if (pts.empty()) throw ConfigError(path + ": no sensors");
    SensorLayout layout;
    layout.bounds = bounds;
    layout.coords.resize(static_cast<int>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i)
        layout.coords.row(static_cast<int>(i)) = pts[i].transpose();
    return layout;
}

/// Trajectory CSV, header `iter,sensor,x,y,objective,grad_norm`.
inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trajectory file: " + path);
    out << "iter,sensor,x,y,objective,grad_norm\n";
    for (std::size_t m = 0; m < traj.points.size(); ++m) {
        const auto& pt = traj.points[m];
        for (int i = 0; i < pt.coords.rows(); ++i)
            out << m << ',' << i << ',' << iodetail::num(pt.coords(i, 0)) << ','
                << iodetail::num(pt.coords(i, 1)) << ',' << iodetail::num(pt.batch_objective)
                << ',' << iodetail::num(pt.grad_norm) << '\n';
    }
}

/// Per-run rSAA layouts and objective values.
inline void write_rsaa_runs_csv(const std::string& path, const RsaaResult& result) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write rsaa run file: " + path);
    out << "run,sensor,x,y,value\n";
    for (std::size_t k = 0; k < result.run_layouts.size(); ++k)
        for (int i = 0; i < result.run_layouts[k].rows(); ++i)
            out << k << ',' << i << ',' << iodetail::num(result.run_layouts[k](i, 0)) << ','
                << iodetail::num(result.run_layouts[k](i, 1)) << ','
                << iodetail::num(result.run_values[k]) << '\n';
}

inline void write_per_sample_csv(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write per-sample file: " + path);
    out << "sample,value\n";
    for (std::size_t i = 0; i < values.size(); ++i)
        out << i << ',' << iodetail::num(values[i]) << '\n';
}

/// Gridded field CSV, header `x,y,value`.
struct FieldGrid {
    Bounds box;
    int resolution = 100;
    std::vector<double> values;  // row-major by y then x
};

inline void write_field_csv(const std::string& path, const FieldGrid& grid) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write field file: " + path);
    out << "x,y,value\n";
    const Vector2d span = grid.box.hi - grid.box.lo;
    const double dx = span.x() / grid.resolution, dy = span.y() / grid.resolution;
    for (int iy = 0; iy < grid.resolution; ++iy)
        for (int ix = 0; ix < grid.resolution; ++ix) {
            const double x = grid.box.lo.x() + (ix + 0.5) * dx;
            const double y = grid.box.lo.y() + (iy + 0.5) * dy;
            out << iodetail::num(x) << ',' << iodetail::num(y) << ','
                << iodetail::num(grid.values[static_cast<std::size_t>(iy) * grid.resolution + ix])
                << '\n';
        }
}

/// Run summary: `key: value` per line.
class Summary {
public:
    void add(const std::string& key, const std::string& value) { rows_.emplace_back(key, value); }
    void add(const std::string& key, double value) { add(key, iodetail::num(value)); }
    void add(const std::string& key, std::uint64_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, int value) { add(key, std::to_string(value)); }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw ConfigError("cannot write summary file: " + path);
        for (const auto& [k, v] : rows_) out << k << ": " << v << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> rows_;
};

}  // namespace plumeplace
