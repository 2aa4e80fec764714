// plumeplace: sensor placement for inverse estimation of leaking emission
// sources under uncertain wind. Subcommands cover initial designs, the
// bilevel optimizers (SBA / rSAA), layout evaluation, and gridded mean
// concentration fields. Machine artifacts are CSV plus a key: value summary;
// progress goes to standard error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "plumeplace/config.hpp"
#include "plumeplace/io.hpp"
#include "plumeplace/presets.hpp"

namespace pp = plumeplace;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file (JSON)");
    cmd->add_option("--preset", args.preset,
                    "built-in experiment preset (see `plumeplace presets`)");
    cmd->add_option("--seed", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--threads", args.threads, "cap worker threads (0 = hardware)");
}

pp::RunConfig resolve_config(const CommonArgs& args) {
    if (args.config_path.empty() == args.preset.empty())
        throw pp::ConfigError("exactly one of --config or --preset is required");
    pp::RunConfig cfg;
    if (!args.preset.empty()) {
        cfg = pp::make_preset(args.preset, args.seed_set ? args.seed : 1);
    } else {
        cfg = pp::load_config(args.config_path);
        if (args.seed_set) cfg.seed = args.seed;
    }
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (args.threads >= 0) cfg.threads = args.threads;
    // keep derived seeds in sync with any override
    cfg.sba.seed = cfg.seed;
    cfg.rsaa.seed = cfg.seed;
    cfg.rsaa.sba.seed = cfg.seed;
    pp::set_max_threads(cfg.threads);
    fs::create_directories(cfg.output_dir);
    return cfg;
}

std::string out_path(const pp::RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

pp::SensorLayout build_design(const pp::RunConfig& cfg, const std::string& method) {
    if (cfg.sensors < 1) throw pp::ConfigError("config: 'sensors' must be >= 1 for this command");
    if (method == "random") {
        pp::RngStream rng(pp::mix_seed(cfg.seed, 0xd11c));
        return pp::random_design(cfg.sensor_bounds, cfg.sensors, rng);
    }
    if (method == "kmeans")
        return pp::kmeans_design(cfg.field, cfg.wind_prior, cfg.sensor_bounds, cfg.sensors,
                                 cfg.plume, cfg.design, cfg.seed);
    if (method == "a-optimal")
        return pp::a_optimal_design(cfg.field,
                                    pp::LinearGaussianPrior::from_emission_prior(cfg.field.prior),
                                    cfg.wind_prior, cfg.sensor_bounds, cfg.sensors, cfg.noise,
                                    cfg.plume, cfg.design, cfg.seed);
    throw pp::ConfigError("unknown design method '" + method +
                          "' (choose one of: random, kmeans, a-optimal)");
}

double layout_risk(const pp::RunConfig& cfg, const pp::SensorLayout& layout) {
    const auto winds =
        pp::draw_wind_set(cfg.wind_prior, cfg.design.wind_samples, pp::mix_seed(cfg.seed, 0x77));
    return pp::a_optimal_risk(layout, cfg.field,
                              pp::LinearGaussianPrior::from_emission_prior(cfg.field.prior),
                              winds, cfg.noise, cfg.plume);
}

pp::SensorLayout initial_layout(const pp::RunConfig& cfg, const std::string& layout_path) {
    if (!layout_path.empty()) return pp::read_layout_csv(layout_path, cfg.sensor_bounds);
    if (cfg.init_layout) return pp::read_layout_csv(*cfg.init_layout, cfg.sensor_bounds);
    return build_design(cfg, cfg.design_method);
}

int cmd_init_design(const CommonArgs& args, const std::string& method_override) {
    const pp::RunConfig cfg = resolve_config(args);
    const std::string method = method_override.empty() ? cfg.design_method : method_override;
    const pp::SensorLayout layout = build_design(cfg, method);
    const std::string path = out_path(cfg, "layout.csv");
    pp::write_layout_csv(path, layout);
    std::cout << "layout: " << path << "\n";
    std::cout << "a_optimal_risk: " << layout_risk(cfg, layout) << "\n";
    return 0;
}

int cmd_optimize(const CommonArgs& args, const std::string& layout_path) {
    const pp::RunConfig cfg = resolve_config(args);
    pp::SensorLayout init = initial_layout(cfg, layout_path);
    if (!init.feasible(1e-9))
        throw pp::ConfigError("initial layout lies outside the sensor bounds");
    init.coords = pp::project_box(init.coords, cfg.sensor_bounds);
    init.bounds = cfg.sensor_bounds;

    pp::Summary summary;
    summary.add("algorithm", cfg.algorithm);
    summary.add("seed", cfg.seed);
    summary.add("sensors", init.size());
    summary.add("sources", cfg.field.size());

    if (cfg.algorithm == "sba") {
        const auto t0 = std::chrono::steady_clock::now();
        auto [final_layout, traj] = pp::sba_run(
            cfg.field, cfg.wind_prior, cfg.noise, cfg.plume, init, cfg.sba, nullptr,
            [](int m, const pp::TrajectoryPoint& pt) {
                std::cerr << "m=" << m << " objective=" << pt.batch_objective
                          << " grad_norm=" << pt.grad_norm << " wall_ms=" << pt.wall_ms << "\n";
            });
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        pp::write_trajectory_csv(out_path(cfg, "trajectory.csv"), traj);
        pp::write_layout_csv(out_path(cfg, "final_layout.csv"), final_layout);
        summary.add("outer_iterations", cfg.sba.outer_iterations);
        summary.add("batch", cfg.sba.batch);
        summary.add("final_batch_objective", traj.points.back().batch_objective);
        summary.add("wall_seconds", wall);
    } else {
        const auto t0 = std::chrono::steady_clock::now();
        const pp::RsaaResult result = pp::rsaa_run(cfg.field, cfg.wind_prior, cfg.noise,
                                                   cfg.plume, cfg.sensor_bounds,
                                                   init.size(), cfg.rsaa);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        pp::write_rsaa_runs_csv(out_path(cfg, "rsaa_runs.csv"), result);
        pp::write_layout_csv(out_path(cfg, "final_layout.csv"), result.mean_layout);
        summary.add("repeats", cfg.rsaa.repeats);
        summary.add("k_effective", result.k_effective);
        summary.add("imse_at_mean", result.imse_at_mean.mean);
        summary.add("imse_std_error", result.imse_at_mean.std_error);
        summary.add("gap_upper", result.gap.upper);
        summary.add("gap_lower", result.gap.lower);
        summary.add("gap_delta", result.gap.delta);
        summary.add("gap_alpha", result.gap.alpha);
        summary.add("wall_seconds", wall);
    }
    summary.add("config", pp::json::parse(cfg.echo).dump());
    summary.write(out_path(cfg, "summary.txt"));
    std::cout << "final layout: " << out_path(cfg, "final_layout.csv") << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& layout_path) {
    const pp::RunConfig cfg = resolve_config(args);
    if (layout_path.empty() && !cfg.init_layout)
        throw pp::ConfigError("evaluate needs --layout or config key 'init_layout'");
    const pp::SensorLayout layout =
        pp::read_layout_csv(layout_path.empty() ? *cfg.init_layout : layout_path,
                            cfg.sensor_bounds);
    const pp::LayoutReport report =
        pp::evaluate_layout(layout, cfg.field, cfg.wind_prior, cfg.noise, cfg.plume, cfg.inverse,
                            cfg.eval_samples, cfg.seed, cfg.eval_per_sample_csv);
    pp::Summary summary;
    summary.add("imse_mean", report.imse.mean);
    summary.add("imse_std_error", report.imse.std_error);
    summary.add("samples", report.imse.count);
    summary.add("dropped", report.imse.dropped);
    summary.add("mape_percent", report.mape_percent);
    summary.add("mape_floor", report.mape_floor);
    summary.add("seed", cfg.seed);
    summary.add("config", pp::json::parse(cfg.echo).dump());
    summary.write(out_path(cfg, "evaluation.txt"));
    if (cfg.eval_per_sample_csv)
        pp::write_per_sample_csv(out_path(cfg, "imse_samples.csv"), report.imse.per_sample);
    std::cout << "imse_mean: " << report.imse.mean << "\n"
              << "imse_std_error: " << report.imse.std_error << "\n"
              << "mape_percent: " << report.mape_percent << "\n";
    return 0;
}

int cmd_sample_field(const CommonArgs& args, int resolution) {
    const pp::RunConfig cfg = resolve_config(args);
    pp::FieldGrid grid;
    grid.box = cfg.domain.value_or(cfg.sensor_bounds);
    if (!(grid.box.hi.x() > grid.box.lo.x()) || !(grid.box.hi.y() > grid.box.lo.y()))
        throw pp::ConfigError("sample-field needs a non-degenerate 'domain' box");
    grid.resolution = resolution;
    const auto winds = pp::draw_wind_set(cfg.wind_prior, cfg.design.wind_samples,
                                         pp::mix_seed(cfg.seed, 0xf1e1d));
    grid.values.assign(static_cast<std::size_t>(resolution) * resolution, 0.0);
    const pp::Vector2d span = grid.box.hi - grid.box.lo;
    pp::parallel_for(grid.values.size(), [&](std::size_t cell) {
        const int ix = static_cast<int>(cell % static_cast<std::size_t>(resolution));
        const int iy = static_cast<int>(cell / static_cast<std::size_t>(resolution));
        const pp::Vector2d c{grid.box.lo.x() + (ix + 0.5) * span.x() / resolution,
                             grid.box.lo.y() + (iy + 0.5) * span.y() / resolution};
        double v = 0.0;
        for (const auto& w : winds)
            for (int j = 0; j < cfg.field.size(); ++j)
                v += cfg.field.prior.mean[j] * pp::kernel(cfg.field.sources[j], c, w, cfg.plume);
        grid.values[cell] = v / static_cast<double>(winds.size());
    });
    const std::string path = out_path(cfg, "field.csv");
    pp::write_field_csv(path, grid);
    std::cout << "field: " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensor placement for detecting sparse leaking emission sources"};
    app.require_subcommand(1);

    CommonArgs init_args, opt_args, eval_args, field_args;
    std::string method_override, opt_layout, eval_layout;
    int field_resolution = 100;

    CLI::App* init = app.add_subcommand("init-design", "generate an initial sensor layout");
    add_common(init, init_args);
    init->add_option("--method", method_override, "random | kmeans | a-optimal");

    CLI::App* optimize = app.add_subcommand("optimize", "run the configured optimizer");
    add_common(optimize, opt_args);
    optimize->add_option("--layout", opt_layout, "initial layout CSV");

    CLI::App* evaluate = app.add_subcommand("evaluate", "IMSE + MAPE of a fixed layout");
    add_common(evaluate, eval_args);
    evaluate->add_option("--layout", eval_layout, "layout CSV to evaluate");

    CLI::App* field = app.add_subcommand("sample-field", "gridded mean concentration field");
    add_common(field, field_args);
    field->add_option("--grid", field_resolution, "grid resolution per axis")
        ->check(CLI::PositiveNumber);

    CLI::App* presets = app.add_subcommand("presets", "list built-in presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (presets->parsed()) {
            for (const auto& name : pp::preset_names()) std::cout << name << "\n";
            return 0;
        }
        if (init->parsed()) return cmd_init_design(init_args, method_override);
        if (optimize->parsed()) return cmd_optimize(opt_args, opt_layout);
        if (evaluate->parsed()) return cmd_evaluate(eval_args, eval_layout);
        if (field->parsed()) return cmd_sample_field(field_args, field_resolution);
    } catch (const pp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const pp::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
