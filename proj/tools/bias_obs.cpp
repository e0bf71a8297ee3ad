// bias_obs: render, simulate, observe, observability and selftest commands.
#include "bias_obs/observability.hpp"
#include "bias_obs/plots.hpp"
#include "bias_obs/selftest.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace bias_obs;

namespace {

SimConfig config_or_default(const std::string& path) { return path.empty() ? SimConfig{} : load_config(path); }

std::filesystem::path out_dir(const std::string& flag, const SimConfig& c) {
    return flag.empty() ? std::filesystem::path(c.run.output) : std::filesystem::path(flag);
}

int observe(const SimConfig& cfg, const std::filesystem::path& out, bool quiet) {
    RunOptions ro;
    ro.out_dir = out;
    std::size_t n = 0;
    const std::size_t every = static_cast<std::size_t>(std::max(1.0, cfg.grid.rate));
    if (!quiet) {
        ro.progress = [&](const DiagnosticRow& r) {
            if (n++ % every == 0) {
                std::fprintf(stderr, "t %6.2f  |p_v err| %.4g  |p_w err| %.4g  V %.4g\n", r.t, r.pve.norm(),
                             r.pwe.norm(), r.V);
            }
        };
    }
    const RunReport rep = run_experiment(cfg, ro);
    const PlotFiles plots = emit_plots(rep.csv);
    std::cout << format_summary(rep, cfg) << "wrote " << rep.csv.string() << ", " << plots.translation.string()
              << ", " << plots.rotation.string() << '\n';
    return 0;
}

/// Full-sphere render of the configured scene from the start pose, the best
/// stationary motion, and a calibration scene with a rotation axis.
int observability(const SimConfig& cfg, const std::filesystem::path& out) {
    const LatLongGrid grid = config_latlong(cfg);
    const Frame f = render(make_scene(cfg), start_pose(cfg), grid);
    const double d_ref = mean_depth(f.D, grid);
    const StationaryCandidate c = find_stationary_motion(f.y, f.D, grid, d_ref, cfg.gains.lambda_y, cfg.gains.lambda_D);

    const Vec3 axis = Vec3(0.3, -0.5, 0.8).normalized();
    const Scene calib = make_axisymmetric_scene(
        UnitDir(axis), Sphere{0.4 * axis, 2.0},
        [](double rho, double h) { return 128.0 + 80.0 * std::sin(1.7 * h + 0.3) + 20.0 * std::cos(2.1 * rho); },
        Envelope::around(Vec3::Zero(), 0.1));
    const Frame fc = render(calib, CameraPose{}, grid);
    const StationaryCandidate cc =
        find_stationary_motion(fc.y, fc.D, grid, mean_depth(fc.D, grid), cfg.gains.lambda_y, cfg.gains.lambda_D);
    const ObservabilityVerdict v = classify(c.residual_rms, cc.residual_rms);

    std::filesystem::create_directories(out);
    char buf[1024];
    std::snprintf(buf, sizeof buf,
                  "grid %zux%zu lat-long, reference depth %.4g m\n"
                  "best stationary motion: p_w = (%.5g, %.5g, %.5g) rad/s, p_v = (%.5g, %.5g, %.5g) m/s\n"
                  "residual %.6g (next %.6g)%s\n"
                  "orthogonality measure %.4g\n"
                  "calibration scene residual %.6g, ratio %.3g: %s\n",
                  grid.n_theta(), grid.n_phi(), d_ref, c.p_w.x(), c.p_w.y(), c.p_w.z(), c.p_v.x(), c.p_v.y(),
                  c.p_v.z(), c.residual_rms, c.next_residual, c.degenerate ? " [near tie with the next candidate]" : "",
                  orthogonality_identity_check(f.D, grid, c.p_w, c.p_v), cc.residual_rms, v.ratio,
                  v.observable ? "no stationary motion at this resolution" : "a stationary motion is not excluded");
    std::cout << buf;
    std::ofstream(out / "observability.txt") << buf;

    // Residual along rotations about the coordinate axes and the best axis.
    std::ofstream csv(out / "observability_residuals.csv");
    csv << "candidate,w_x,w_y,w_z,v_x,v_y,v_z,residual\n";
    auto row = [&](const char* name, const Vec3& w, const Vec3& vv) {
        const double r = residual_rms(stationarity_residual(f.y, f.D, grid, w, vv), grid, cfg.gains.lambda_y,
                                      cfg.gains.lambda_D);
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", name, w.x(), w.y(), w.z(), vv.x(),
                      vv.y(), vv.z(), r);
        csv << buf;
    };
    row("best", c.p_w, c.p_v);
    row("spin_x", Vec3::UnitX(), Vec3::Zero());
    row("spin_y", Vec3::UnitY(), Vec3::Zero());
    row("spin_z", Vec3::UnitZ(), Vec3::Zero());
    row("move_x", Vec3::Zero(), d_ref * Vec3::UnitX());
    row("move_y", Vec3::Zero(), d_ref * Vec3::UnitY());
    row("move_z", Vec3::Zero(), d_ref * Vec3::UnitZ());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bias estimation from brightness and depth images"};
    app.require_subcommand(1);
    std::string config, out;
    bool quiet = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config,-c", config, "configuration file (key = value)");
        sub->add_option("--out,-o", out, "output directory (default: run.output)");
    };
    CLI::App* render_cmd = app.add_subcommand("render", "write PGM brightness and PFM depth frames");
    CLI::App* simulate_cmd = app.add_subcommand("simulate", "ground-truth poses and twists, no observer");
    CLI::App* observe_cmd = app.add_subcommand("observe", "run the observer and write CSV, summary and plots");
    CLI::App* obs_cmd = app.add_subcommand("observability", "search for stationary motions of the start frame");
    CLI::App* self_cmd = app.add_subcommand("selftest", "closed-form checks of every module");
    for (CLI::App* s : {render_cmd, simulate_cmd, observe_cmd, obs_cmd}) add_common(s);
    observe_cmd->add_flag("--quiet,-q", quiet, "no progress lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*self_cmd) return run_selftest(std::cout) == 0 ? 0 : 1;
        const SimConfig cfg = config_or_default(config);
        const auto dir = out_dir(out, cfg);
        if (*render_cmd) {
            std::cout << "wrote " << render_sequence(cfg, dir) << " frames to " << dir.string() << '\n';
        } else if (*simulate_cmd) {
            std::cout << "wrote " << simulate_truth(cfg, dir) << " rows to " << (dir / "truth.csv").string() << '\n';
        } else if (*observe_cmd) {
            return observe(cfg, dir, quiet);
        } else if (*obs_cmd) {
            return observability(cfg, dir);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
