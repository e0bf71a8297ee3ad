// End-to-end runs: trajectory -> poses -> frames with noise -> biased twists
// -> observer -> one diagnostic row per frame.
#pragma once

#include "bias_obs/image_io.hpp"
#include "bias_obs/observer_cap.hpp"
#include "bias_obs/sim_config.hpp"
#include "bias_obs/simulation.hpp"

#include <chrono>
#include <optional>

namespace bias_obs {

inline constexpr const char* kCsvHeader =
    "t,pvh_x,pvh_y,pvh_z,pwh_x,pwh_y,pwh_z,pve_x,pve_y,pve_z,pwe_x,pwe_y,pwe_z,V,f,boundary,L,cfl";

struct DiagnosticRow {
    double t = 0.0;
    Vec3 pvh = Vec3::Zero();
    Vec3 pwh = Vec3::Zero();
    Vec3 pve = Vec3::Zero(); // p_v_hat - p_v
    Vec3 pwe = Vec3::Zero(); // p_w_hat - p_w
    double V = 0.0;
    double f = 0.0;
    double boundary = 0.0;
    double L = 0.0;   // running sup of the flow divergence
    double cfl = 0.0; // CFL number of the interval ending at t
};

inline std::string csv_line(const DiagnosticRow& r) {
    std::string out;
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        if (!out.empty()) out += ',';
        out += buf;
    };
    put(r.t);
    for (const Vec3* v : {&r.pvh, &r.pwh, &r.pve, &r.pwe}) {
        for (int c = 0; c < 3; ++c) put((*v)[c]);
    }
    for (double v : {r.V, r.f, r.boundary, r.L, r.cfl}) put(v);
    return out;
}

/// Reads a diagnostics CSV. Throws MissingCSV when the file is absent or
/// holds no data rows.
inline std::vector<DiagnosticRow> read_diagnostics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingCSV("no diagnostics file at " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw MissingCSV(path.string() + " lacks the diagnostics header");
    std::vector<DiagnosticRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto v = detail::numbers("csv", [&] {
            std::string s = line;
            std::replace(s.begin(), s.end(), ',', ' ');
            return s;
        }());
        if (v.size() != 18) throw MissingCSV(path.string() + ": malformed row");
        DiagnosticRow r;
        r.t = v[0];
        r.pvh = Vec3(v[1], v[2], v[3]);
        r.pwh = Vec3(v[4], v[5], v[6]);
        r.pve = Vec3(v[7], v[8], v[9]);
        r.pwe = Vec3(v[10], v[11], v[12]);
        r.V = v[13];
        r.f = v[14];
        r.boundary = v[15];
        r.L = v[16];
        r.cfl = v[17];
        rows.push_back(r);
    }
    if (rows.empty()) throw MissingCSV(path.string() + " has no rows");
    return rows;
}

struct RunSummary {
    std::size_t rows = 0;
    Vec3 mean_abs_pve = Vec3::Zero(); // per axis, final 25% of the rows
    Vec3 mean_abs_pwe = Vec3::Zero();
    double mean_pve_norm = 0.0;
    double mean_pwe_norm = 0.0;
    double V0 = 0.0;
    double V_end = 0.0;
    double V_max = 0.0;
    double V_rise_total = 0.0; // sum of step-to-step increases
    double V_rise_max = 0.0;
    double L = 0.0;
    double gain_margin = 0.0; // min(k_y, k_D) - L/2
    double max_cfl = 0.0;
};

/// Everything here is recomputable from the rows alone (plus the gains).
inline RunSummary summarize(const std::vector<DiagnosticRow>& rows, const ObserverGains& g) {
    RunSummary s;
    s.rows = rows.size();
    if (rows.empty()) return s;
    const std::size_t first = rows.size() - std::max<std::size_t>(1, rows.size() / 4);
    for (std::size_t k = first; k < rows.size(); ++k) {
        s.mean_abs_pve += rows[k].pve.cwiseAbs();
        s.mean_abs_pwe += rows[k].pwe.cwiseAbs();
        s.mean_pve_norm += rows[k].pve.norm();
        s.mean_pwe_norm += rows[k].pwe.norm();
    }
    const double n = static_cast<double>(rows.size() - first);
    s.mean_abs_pve /= n;
    s.mean_abs_pwe /= n;
    s.mean_pve_norm /= n;
    s.mean_pwe_norm /= n;
    s.V0 = rows.front().V;
    s.V_end = rows.back().V;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        s.V_max = std::max(s.V_max, rows[k].V);
        s.L = std::max(s.L, rows[k].L);
        s.max_cfl = std::max(s.max_cfl, rows[k].cfl);
        if (k > 0 && rows[k].V > rows[k - 1].V) {
            s.V_rise_total += rows[k].V - rows[k - 1].V;
            s.V_rise_max = std::max(s.V_rise_max, rows[k].V - rows[k - 1].V);
        }
    }
    s.gain_margin = check_gain_condition(g, s.L).margin;
    return s;
}

struct RunReport {
    std::filesystem::path csv; // empty when the run kept its rows in memory only
    std::vector<DiagnosticRow> rows;
    RunSummary summary;
    double wall_seconds = 0.0;
    int max_substeps = 1;
};

inline std::string format_summary(const RunReport& r, const SimConfig& c) {
    const RunSummary& s = r.summary;
    char buf[1024];
    auto rel = [](double e, double b) { return b > 0.0 ? 100.0 * e / b : 0.0; };
    std::snprintf(buf, sizeof buf,
                  "rows %zu  wall %.1f s  max substeps %d\n"
                  "final-window mean |p_v error| %.6g m/s (%.2f%% of bias)  per axis %.4g %.4g %.4g\n"
                  "final-window mean |p_w error| %.6g rad/s (%.2f%% of bias)  per axis %.4g %.4g %.4g\n"
                  "V: start %.6g  end %.6g  max %.6g  total rise %.6g  largest rise %.6g\n"
                  "L %.6g  gain margin %.6g  max CFL %.3g\n",
                  s.rows, r.wall_seconds, r.max_substeps, s.mean_pve_norm, rel(s.mean_pve_norm, c.bias.p_v.norm()),
                  s.mean_abs_pve.x(), s.mean_abs_pve.y(), s.mean_abs_pve.z(), s.mean_pwe_norm,
                  rel(s.mean_pwe_norm, c.bias.p_w.norm()), s.mean_abs_pwe.x(), s.mean_abs_pwe.y(),
                  s.mean_abs_pwe.z(), s.V0, s.V_end, s.V_max, s.V_rise_total, s.V_rise_max, s.L, s.gain_margin,
                  s.max_cfl);
    return buf;
}

inline double wavy_texture(const Vec3& p, int) {
    return 128.0 + 50.0 * std::sin(1.3 * p.x() + 0.4) * std::cos(0.9 * p.y()) + 30.0 * std::sin(1.7 * p.z());
}

inline Envelope config_envelope(const SimConfig& c) { return Envelope::around(c.camera.position, c.camera.envelope); }

inline Scene make_scene(const SimConfig& c) {
    if (c.scene.type == "sphere") {
        return make_sphere_scene(Sphere{Vec3::Zero(), c.scene.radius}, wavy_texture, config_envelope(c));
    }
    RoomConfig room;
    room.size = c.scene.size;
    room.amplitude = c.scene.amplitude;
    room.freq_h = c.scene.freq_h;
    room.freq_v = c.scene.freq_v;
    room.envelope = config_envelope(c);
    return make_room_scene(room);
}

inline CameraPose start_pose(const SimConfig& c) {
    return {camera_orientation(c.camera.forward, c.camera.up), c.camera.position};
}

inline TrajectoryProfile config_trajectory(const SimConfig& c) {
    TrajectoryProfile p = c.trajectory;
    p.rate = c.grid.rate;
    return p;
}

inline PinholeGrid config_pinhole(const SimConfig& c) {
    return PinholeGrid(c.grid.width, c.grid.height, c.grid.fov_h * kPi / 180.0, c.grid.fov_v * kPi / 180.0);
}

inline LatLongGrid config_latlong(const SimConfig& c) { return LatLongGrid(c.grid.n_theta, 2 * c.grid.n_theta); }

inline ObserverOptions config_options(const SimConfig& c) {
    ObserverOptions o;
    o.transport = c.run.transport == "chart" ? Transport::Chart : Transport::Upwind;
    o.cfl_max = c.run.cfl_max;
    return o;
}

struct RunOptions {
    std::filesystem::path out_dir; // empty: no files
    std::function<void(const DiagnosticRow&)> progress;
};

namespace detail {

/// Streams frames: frame k + 1 is rendered only when the observer needs it.
template <class Grid>
struct FrameSource {
    const Scene& scene;
    const Grid& grid;
    const TrajectoryProfile& profile;
    const SimConfig& cfg;
    std::vector<CameraPose> poses;

    struct Item {
        Frame frame;
        BodyTwist truth;
        BodyTwist measured;
        double t = 0.0;
    };

    Item get(std::size_t k) const {
        const double dt = 1.0 / profile.rate;
        const double t = std::min(static_cast<double>(k) * dt, profile.duration);
        Item it{render(scene, poses[k], grid, cfg.noise, k), sample_trajectory(profile, t), {}, t};
        it.measured = measured_twist(it.truth, cfg.bias, cfg.noise, k);
        return it;
    }
};

template <class Observer>
DiagnosticRow make_row(double t, const Observer& st, const SimConfig& c) {
    DiagnosticRow r;
    r.t = t;
    r.pvh = st.p_v_hat;
    r.pwh = st.p_w_hat;
    r.pve = st.p_v_hat - c.bias.p_v;
    r.pwe = st.p_w_hat - c.bias.p_w;
    return r;
}

} // namespace detail

/// Runs the configured observer over the whole trajectory.
inline RunReport run_experiment(const SimConfig& cfg, const RunOptions& ro = {}) {
    validate(cfg);
    const auto t_start = std::chrono::steady_clock::now();
    const Scene scene = make_scene(cfg);
    const TrajectoryProfile profile = config_trajectory(cfg);
    const std::vector<CameraPose> poses = integrate_trajectory(profile, start_pose(cfg), config_envelope(cfg));
    const ObserverGains& g = cfg.gains;
    const ObserverOptions opt = config_options(cfg);
    const double dt = 1.0 / profile.rate;

    RunReport rep;
    std::ofstream csv;
    if (!ro.out_dir.empty()) {
        std::filesystem::create_directories(ro.out_dir);
        rep.csv = ro.out_dir / "diagnostics.csv";
        csv.open(rep.csv, std::ios::binary);
        if (!csv) throw Error("cannot write " + rep.csv.string());
        csv << kCsvHeader << '\n';
    }
    double L = 0.0;
    auto emit = [&](DiagnosticRow r) {
        rep.rows.push_back(r);
        if (csv.is_open()) csv << csv_line(r) << '\n';
        if (ro.progress) ro.progress(r);
    };
    auto dump = [&](std::size_t k, const ScalarField& a, const ScalarField& b) {
        if (ro.out_dir.empty() || cfg.run.dump_every == 0 || k % cfg.run.dump_every != 0) return;
        char name[64];
        std::snprintf(name, sizeof name, "err_y_%05zu.pfm", k);
        write_pfm(ro.out_dir / name, a);
        std::snprintf(name, sizeof name, "err_D_%05zu.pfm", k);
        write_pfm(ro.out_dir / name, b);
    };

    if (cfg.run.observer == "cap") {
        const PinholeGrid grid = config_pinhole(cfg);
        const WindowFunction win = build_window(grid, WindowMargins::fractions(grid, cfg.window.k1, cfg.window.k2));
        const detail::FrameSource<PinholeGrid> src{scene, grid, profile, cfg, poses};
        auto cur = src.get(0);
        CapObserverState st = initial_cap_state(cur.frame.y, cur.frame.D, win.phi);
        auto row = [&](const decltype(cur)& it, double cfl) {
            L = std::max(L, compute_L(grid, it.frame.D, it.truth.v));
            const CapLyapunovSample ls = cap_lyapunov(grid, st, it.frame.y, it.frame.D, win, cfg.bias, g, it.truth);
            DiagnosticRow r = detail::make_row(it.t, st, cfg);
            r.V = ls.sample.V;
            r.f = ls.sample.f;
            r.boundary = ls.boundary_term;
            r.L = L;
            r.cfl = cfl;
            return r;
        };
        emit(row(cur, 0.0));
        for (std::size_t k = 0; k + 1 < poses.size(); ++k) {
            auto next = src.get(k + 1);
            AdvanceInfo info;
            st = advance_cap(grid, st, {&cur.frame.y, &cur.frame.D, cur.measured},
                             {&next.frame.y, &next.frame.D, next.measured}, window_data(win), g, dt, opt, &info);
            rep.max_substeps = std::max(rep.max_substeps, info.substeps);
            cur = std::move(next);
            emit(row(cur, info.cfl));
            if (cfg.run.dump_every) {
                ScalarField ex = st.X_hat, el = st.L_hat;
                for (std::size_t s = 0; s < ex.size(); ++s) {
                    ex[s] -= win.phi[s] * cur.frame.y[s];
                    el[s] -= win.phi[s] * cur.frame.D[s];
                }
                dump(k + 1, ex, el);
            }
        }
    } else {
        const LatLongGrid grid = config_latlong(cfg);
        const detail::FrameSource<LatLongGrid> src{scene, grid, profile, cfg, poses};
        auto cur = src.get(0);
        ObserverState st = initial_state(cur.frame.y, cur.frame.D);
        auto row = [&](const decltype(cur)& it, double cfl) {
            L = std::max(L, compute_L(grid, it.frame.D, it.truth.v));
            const LyapunovSample ls = lyapunov_value(grid, st, it.frame.y, it.frame.D, cfg.bias, g, L);
            DiagnosticRow r = detail::make_row(it.t, st, cfg);
            r.V = ls.V;
            r.f = ls.f;
            r.L = L;
            r.cfl = cfl;
            return r;
        };
        emit(row(cur, 0.0));
        for (std::size_t k = 0; k + 1 < poses.size(); ++k) {
            auto next = src.get(k + 1);
            AdvanceInfo info;
            st = advance_sphere(grid, st, {&cur.frame.y, &cur.frame.D, cur.measured},
                                {&next.frame.y, &next.frame.D, next.measured}, g, dt, opt, &info);
            rep.max_substeps = std::max(rep.max_substeps, info.substeps);
            cur = std::move(next);
            emit(row(cur, info.cfl));
            if (cfg.run.dump_every) {
                ScalarField ey = st.y_hat, eD = st.D_hat;
                for (std::size_t s = 0; s < ey.size(); ++s) {
                    ey[s] -= cur.frame.y[s];
                    eD[s] -= cur.frame.D[s];
                }
                dump(k + 1, ey, eD);
            }
        }
    }
    rep.summary = summarize(rep.rows, g);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (!ro.out_dir.empty()) {
        std::ofstream(ro.out_dir / "summary.txt") << format_summary(rep, cfg);
    }
    return rep;
}

/// Writes y_NNNNN.pgm and D_NNNNN.pfm for every frame of the configured run
/// (pinhole frames for the cap observer, lat-long frames otherwise).
inline std::size_t render_sequence(const SimConfig& cfg, const std::filesystem::path& out) {
    validate(cfg);
    std::filesystem::create_directories(out);
    const Scene scene = make_scene(cfg);
    const TrajectoryProfile profile = config_trajectory(cfg);
    const auto poses = integrate_trajectory(profile, start_pose(cfg), config_envelope(cfg));
    auto write = [&](const auto& grid) {
        for (std::size_t k = 0; k < poses.size(); ++k) {
            const Frame f = render(scene, poses[k], grid, cfg.noise, k);
            char name[32];
            std::snprintf(name, sizeof name, "y_%05zu.pgm", k);
            write_pgm(out / name, f.y);
            std::snprintf(name, sizeof name, "D_%05zu.pfm", k);
            write_pfm(out / name, f.D);
        }
    };
    if (cfg.run.observer == "cap") {
        write(config_pinhole(cfg));
    } else {
        write(config_latlong(cfg));
    }
    return poses.size();
}

/// Ground truth without the observer: poses, true and measured twists.
inline std::size_t simulate_truth(const SimConfig& cfg, const std::filesystem::path& out) {
    validate(cfg);
    std::filesystem::create_directories(out);
    (void)make_scene(cfg); // checks the envelope against the scene
    const TrajectoryProfile profile = config_trajectory(cfg);
    const auto poses = integrate_trajectory(profile, start_pose(cfg), config_envelope(cfg));
    std::ofstream csv(out / "truth.csv", std::ios::binary);
    if (!csv) throw Error("cannot write " + (out / "truth.csv").string());
    csv << "t,C_x,C_y,C_z,q_w,q_x,q_y,q_z,v_x,v_y,v_z,w_x,w_y,w_z,vm_x,vm_y,vm_z,wm_x,wm_y,wm_z\n";
    char buf[32];
    for (std::size_t k = 0; k < poses.size(); ++k) {
        const double t = std::min(static_cast<double>(k) / profile.rate, profile.duration);
        const BodyTwist tw = sample_trajectory(profile, t);
        const BodyTwist m = measured_twist(tw, cfg.bias, cfg.noise, k);
        std::string line;
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.9g", v);
            if (!line.empty()) line += ',';
            line += buf;
        };
        put(t);
        for (int c = 0; c < 3; ++c) put(poses[k].C[c]);
        for (double v : {poses[k].q.w(), poses[k].q.x(), poses[k].q.y(), poses[k].q.z()}) put(v);
        for (const Vec3* v : {&tw.v, &tw.w, &m.v, &m.w}) {
            for (int c = 0; c < 3; ++c) put((*v)[c]);
        }
        csv << line << '\n';
    }
    return poses.size();
}

} // namespace bias_obs
