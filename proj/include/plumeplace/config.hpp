#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <optional>
#include <string>

#include "plumeplace/design.hpp"
#include "plumeplace/evaluate.hpp"
#include "plumeplace/optimize.hpp"

namespace plumeplace {

using json = nlohmann::json;

/// Everything a run needs, parsed from one strict JSON document.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    int threads = 0;  // 0 = hardware default

    PlumeParams plume;
    NoiseModel noise;
    SourceField field;
    WindPrior wind_prior;
    Bounds sensor_bounds;
    std::optional<Bounds> domain;  // for gridded field output; defaults to sensor bounds
    int sensors = 0;

    std::string design_method = "a-optimal";
    DesignConfig design;

    InverseSettings inverse;

    std::string algorithm = "sba";  // "sba" | "rsaa"
    SbaConfig sba;
    RsaaConfig rsaa;

    int eval_samples = 1000;
    double eval_alpha = 0.025;
    bool eval_per_sample_csv = false;

    std::optional<std::string> init_layout;

    std::string echo;  // normalized config for the run summary
};

namespace cfgdetail {

inline void check_keys(const json& j, const std::string& section,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(section + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
T require(const json& j, const char* key, const std::string& section) {
    if (!j.contains(key)) throw ConfigError(section + ": missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(section + ": key '" + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const char* key, const std::string& section, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(section + ": key '" + key + "' has the wrong type");
    }
}

inline VectorXd vector_of(const json& j, const char* key, const std::string& section) {
    const auto v = require<std::vector<double>>(j, key, section);
    VectorXd out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
    return out;
}

inline Vector2d point_of(const json& j, const char* key, const std::string& section) {
    const auto v = require<std::vector<double>>(j, key, section);
    if (v.size() != 2) throw ConfigError(section + ": '" + key + "' must have 2 entries");
    return {v[0], v[1]};
}

inline void positive(double v, const std::string& what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(what + " must be positive and finite");
}

inline void nonnegative(double v, const std::string& what) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(what + " must be >= 0 and finite");
}

}  // namespace cfgdetail

inline RunConfig parse_config(const json& root) {
    using namespace cfgdetail;
    check_keys(root, "config",
               {"seed", "output_dir", "threads", "plume", "noise", "field", "wind_prior",
                "sensor_bounds", "domain", "sensors", "design", "inverse", "algorithm",
                "evaluate", "init_layout"});
    RunConfig cfg;
    cfg.seed = get_or<std::uint64_t>(root, "seed", "config", 1);
    cfg.output_dir = get_or<std::string>(root, "output_dir", "config", "out");
    cfg.threads = get_or<int>(root, "threads", "config", 0);
    if (cfg.threads < 0) throw ConfigError("threads must be >= 0");

    cfg.plume.downwind_cutoff = 0.0;  // 0 = derive from the sensor bounds below
    if (root.contains("plume")) {
        const json& p = root.at("plume");
        check_keys(p, "plume", {"eddy_diffusivity", "use_wind_speed_factor", "downwind_cutoff"});
        cfg.plume.eddy_diffusivity = get_or<double>(p, "eddy_diffusivity", "plume", 1.0);
        cfg.plume.use_wind_speed_factor = get_or<bool>(p, "use_wind_speed_factor", "plume", true);
        cfg.plume.downwind_cutoff = get_or<double>(p, "downwind_cutoff", "plume", 0.0);
        positive(cfg.plume.eddy_diffusivity, "plume.eddy_diffusivity");
        nonnegative(cfg.plume.downwind_cutoff, "plume.downwind_cutoff");
    }

    {
        const json& n = require<json>(root, "noise", "config");
        check_keys(n, "noise", {"sigma"});
        cfg.noise.sigma = require<double>(n, "sigma", "noise");
        positive(cfg.noise.sigma, "noise.sigma");
    }

    {
        const json& f = require<json>(root, "field", "config");
        check_keys(f, "field", {"sources", "emission_prior"});
        const json& sources = require<json>(f, "sources", "field");
        if (!sources.is_array() || sources.empty())
            throw ConfigError("field.sources must be a non-empty array");
        for (const auto& s : sources) {
            check_keys(s, "field.sources[]", {"x", "y", "height"});
            Source src;
            src.position = {require<double>(s, "x", "source"), require<double>(s, "y", "source")};
            src.height = get_or<double>(s, "height", "source", 0.0);
            nonnegative(src.height, "source height");
            cfg.field.sources.push_back(src);
        }
        const json& prior = require<json>(f, "emission_prior", "field");
        check_keys(prior, "emission_prior", {"mode", "mean", "std", "leak_probability"});
        const std::string mode =
            get_or<std::string>(prior, "mode", "emission_prior", "truncated-normal");
        if (mode == "truncated-normal")
            cfg.field.prior.mode = EmissionMode::TruncatedNormal;
        else if (mode == "sparse-leak")
            cfg.field.prior.mode = EmissionMode::SparseLeak;
        else
            throw ConfigError("emission_prior.mode must be 'truncated-normal' or 'sparse-leak'");
        cfg.field.prior.mean = vector_of(prior, "mean", "emission_prior");
        cfg.field.prior.stddev = vector_of(prior, "std", "emission_prior");
        cfg.field.prior.leak_probability =
            get_or<double>(prior, "leak_probability", "emission_prior", 1.0);
        const int np = cfg.field.size();
        if (cfg.field.prior.mean.size() != np || cfg.field.prior.stddev.size() != np)
            throw ConfigError("emission_prior mean/std must match the number of sources");
        for (int j = 0; j < np; ++j) {
            nonnegative(cfg.field.prior.mean[j], "emission_prior.mean");
            positive(cfg.field.prior.stddev[j], "emission_prior.std");
        }
        if (cfg.field.prior.leak_probability < 0.0 || cfg.field.prior.leak_probability > 1.0)
            throw ConfigError("emission_prior.leak_probability must lie in [0, 1]");
    }

    {
        const json& w = require<json>(root, "wind_prior", "config");
        check_keys(w, "wind_prior", {"speed_min", "speed_max", "angle_min", "angle_max"});
        cfg.wind_prior.speed_min = require<double>(w, "speed_min", "wind_prior");
        cfg.wind_prior.speed_max = require<double>(w, "speed_max", "wind_prior");
        cfg.wind_prior.angle_min = require<double>(w, "angle_min", "wind_prior");
        cfg.wind_prior.angle_max = require<double>(w, "angle_max", "wind_prior");
        positive(cfg.wind_prior.speed_min, "wind_prior.speed_min");
        if (cfg.wind_prior.speed_max < cfg.wind_prior.speed_min)
            throw ConfigError("wind_prior: speed_max < speed_min");
        if (cfg.wind_prior.angle_max < cfg.wind_prior.angle_min)
            throw ConfigError("wind_prior: angle_max < angle_min");
    }

    {
        const json& b = require<json>(root, "sensor_bounds", "config");
        check_keys(b, "sensor_bounds", {"min", "max"});
        cfg.sensor_bounds.lo = point_of(b, "min", "sensor_bounds");
        cfg.sensor_bounds.hi = point_of(b, "max", "sensor_bounds");
        cfg.sensor_bounds.validate();
    }
    if (root.contains("domain")) {
        const json& b = root.at("domain");
        check_keys(b, "domain", {"min", "max"});
        Bounds d;
        d.lo = point_of(b, "min", "domain");
        d.hi = point_of(b, "max", "domain");
        d.validate();
        cfg.domain = d;
    }
    if (cfg.plume.downwind_cutoff == 0.0) {
        const double diag = cfg.sensor_bounds.diagonal();
        cfg.plume.downwind_cutoff = diag > 0.0 ? 1e-6 * diag : 1e-9;
    }

    cfg.sensors = get_or<int>(root, "sensors", "config", 0);
    if (cfg.sensors < 0) throw ConfigError("sensors must be >= 0");

    if (root.contains("design")) {
        const json& d = root.at("design");
        check_keys(d, "design",
                   {"method", "wind_samples", "multistarts", "max_sweeps", "kmeans_points",
                    "grid", "kmeans_iterations"});
        cfg.design_method = get_or<std::string>(d, "method", "design", "a-optimal");
        cfg.design.wind_samples = get_or<int>(d, "wind_samples", "design", 32);
        cfg.design.multistarts = get_or<int>(d, "multistarts", "design", 16);
        cfg.design.max_sweeps = get_or<int>(d, "max_sweeps", "design", 40);
        cfg.design.kmeans_points = get_or<int>(d, "kmeans_points", "design", 10000);
        cfg.design.grid = get_or<int>(d, "grid", "design", 100);
        cfg.design.kmeans_iterations = get_or<int>(d, "kmeans_iterations", "design", 100);
        for (int v : {cfg.design.wind_samples, cfg.design.multistarts, cfg.design.max_sweeps,
                      cfg.design.kmeans_points, cfg.design.grid, cfg.design.kmeans_iterations})
            if (v < 1) throw ConfigError("design: counts must be >= 1");
        if (cfg.design_method != "random" && cfg.design_method != "kmeans" &&
            cfg.design_method != "a-optimal")
            throw ConfigError("design.method must be one of {random, kmeans, a-optimal}");
    }

    {
        const json& inv = require<json>(root, "inverse", "config");
        check_keys(inv, "inverse", {"lambda1", "lambda2", "solver", "pd"});
        cfg.inverse.lambda1 = require<double>(inv, "lambda1", "inverse");
        cfg.inverse.lambda2 = require<double>(inv, "lambda2", "inverse");
        nonnegative(cfg.inverse.lambda1, "inverse.lambda1");
        nonnegative(cfg.inverse.lambda2, "inverse.lambda2");
        const std::string solver = get_or<std::string>(inv, "solver", "inverse", "exact");
        if (solver == "exact")
            cfg.inverse.solver = LowerSolver::Exact;
        else if (solver == "pd")
            cfg.inverse.solver = LowerSolver::Pd;
        else if (solver == "oracle")
            cfg.inverse.solver = LowerSolver::Oracle;
        else
            throw ConfigError("inverse.solver must be one of {exact, pd, oracle}");
        if (inv.contains("pd")) {
            const json& pd = inv.at("pd");
            check_keys(pd, "inverse.pd", {"step", "iterations", "penalty", "kkt_tol", "decay"});
            cfg.inverse.pd.step = get_or<double>(pd, "step", "inverse.pd", 5e-4);
            cfg.inverse.pd.max_iterations = get_or<int>(pd, "iterations", "inverse.pd", 1);
            cfg.inverse.pd.penalty = get_or<double>(pd, "penalty", "inverse.pd", 0.0);
            cfg.inverse.pd.kkt_tol = get_or<double>(pd, "kkt_tol", "inverse.pd", 0.0);
            cfg.inverse.pd.step_decay = get_or<bool>(pd, "decay", "inverse.pd", false);
            positive(cfg.inverse.pd.step, "inverse.pd.step");
            if (cfg.inverse.pd.max_iterations < 1)
                throw ConfigError("inverse.pd.iterations must be >= 1");
            nonnegative(cfg.inverse.pd.penalty, "inverse.pd.penalty");
            nonnegative(cfg.inverse.pd.kkt_tol, "inverse.pd.kkt_tol");
        }
    }

    {
        const json& a = require<json>(root, "algorithm", "config");
        check_keys(a, "algorithm", {"type", "sba", "rsaa"});
        cfg.algorithm = require<std::string>(a, "type", "algorithm");
        if (cfg.algorithm != "sba" && cfg.algorithm != "rsaa")
            throw ConfigError("algorithm.type must be 'sba' or 'rsaa'");
        if (a.contains("sba")) {
            const json& s = a.at("sba");
            check_keys(s, "algorithm.sba",
                       {"iterations", "step", "step_decay", "batch", "warm_start",
                        "differentiate_observations"});
            cfg.sba.outer_iterations = get_or<int>(s, "iterations", "sba", 100);
            cfg.sba.step = get_or<double>(s, "step", "sba", 1e-4);
            cfg.sba.step_decay = get_or<bool>(s, "step_decay", "sba", false);
            cfg.sba.batch = get_or<int>(s, "batch", "sba", 10);
            cfg.sba.warm_start = get_or<bool>(s, "warm_start", "sba", true);
            cfg.sba.differentiate_observations =
                get_or<bool>(s, "differentiate_observations", "sba", true);
            if (cfg.sba.outer_iterations < 1) throw ConfigError("sba.iterations must be >= 1");
            if (cfg.sba.batch < 1) throw ConfigError("sba.batch must be >= 1");
            nonnegative(cfg.sba.step, "sba.step");
        }
        if (a.contains("rsaa")) {
            const json& r = a.at("rsaa");
            check_keys(r, "algorithm.rsaa",
                       {"repeats", "batch", "subsolver", "grid_step", "multistarts", "alpha",
                        "eval_samples"});
            cfg.rsaa.repeats = get_or<int>(r, "repeats", "rsaa", 250);
            cfg.rsaa.batch = get_or<int>(r, "batch", "rsaa", 5);
            const std::string sub = get_or<std::string>(r, "subsolver", "rsaa", "grid");
            if (sub == "grid")
                cfg.rsaa.subsolver = RsaaConfig::Subsolver::Grid;
            else if (sub == "multistart-sba")
                cfg.rsaa.subsolver = RsaaConfig::Subsolver::MultistartSba;
            else
                throw ConfigError("rsaa.subsolver must be 'grid' or 'multistart-sba'");
            cfg.rsaa.grid_step = get_or<double>(r, "grid_step", "rsaa", 5.0);
            cfg.rsaa.multistarts = get_or<int>(r, "multistarts", "rsaa", 8);
            cfg.rsaa.alpha = get_or<double>(r, "alpha", "rsaa", 0.025);
            cfg.rsaa.eval_samples = get_or<int>(r, "eval_samples", "rsaa", 10000);
            if (cfg.rsaa.repeats < 2) throw ConfigError("rsaa.repeats must be >= 2");
            if (cfg.rsaa.batch < 1) throw ConfigError("rsaa.batch must be >= 1");
            positive(cfg.rsaa.grid_step, "rsaa.grid_step");
            if (!(cfg.rsaa.alpha > 0.0 && cfg.rsaa.alpha <= 0.5))
                throw ConfigError("rsaa.alpha must lie in (0, 0.5]");
            if (cfg.rsaa.eval_samples < 2) throw ConfigError("rsaa.eval_samples must be >= 2");
        }
    }

    if (root.contains("evaluate")) {
        const json& e = root.at("evaluate");
        check_keys(e, "evaluate", {"samples", "alpha", "per_sample_csv"});
        cfg.eval_samples = get_or<int>(e, "samples", "evaluate", 1000);
        cfg.eval_alpha = get_or<double>(e, "alpha", "evaluate", 0.025);
        cfg.eval_per_sample_csv = get_or<bool>(e, "per_sample_csv", "evaluate", false);
        if (cfg.eval_samples < 2) throw ConfigError("evaluate.samples must be >= 2");
        if (!(cfg.eval_alpha > 0.0 && cfg.eval_alpha <= 0.5))
            throw ConfigError("evaluate.alpha must lie in (0, 0.5]");
    }

    if (root.contains("init_layout"))
        cfg.init_layout = require<std::string>(root, "init_layout", "config");

    // propagate shared blocks into the algorithm configs
    cfg.sba.inner = cfg.inverse.pd;
    cfg.sba.lambda1 = cfg.inverse.lambda1;
    cfg.sba.lambda2 = cfg.inverse.lambda2;
    cfg.sba.seed = cfg.seed;
    cfg.rsaa.inverse = cfg.inverse;
    cfg.rsaa.sba = cfg.sba;
    cfg.rsaa.seed = cfg.seed;

    cfg.echo = root.dump(2);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(root);
}

}  // namespace plumeplace
