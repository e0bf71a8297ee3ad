// Quick self-checks: the closed-form examples of every module, run in a few
// seconds from the CLI.
#pragma once

#include "bias_obs/observability.hpp"
#include "bias_obs/plots.hpp"

#include <iostream>

namespace bias_obs {

struct SelfCheck {
    std::string name;
    std::function<bool()> run;
};

inline std::vector<SelfCheck> self_checks() {
    std::vector<SelfCheck> c;
    c.push_back({"grad_dot is tangent", [] {
                     const UnitDir e(0.3, -0.4, 0.8);
                     return std::abs(grad_dot(e, Vec3(1, 2, 3)).v.dot(e.vec())) <= 1e-12;
                 }});
    c.push_back({"laplacian_dot = -2 eta.P", [] {
                     const UnitDir e(0, 0, 1);
                     return laplacian_dot(e, Vec3(0, 0, 2)) == -4.0;
                 }});
    c.push_back({"pinhole optical axis", [] {
                     return (pinhole_to_sphere(0, 0).vec() - Vec3::UnitZ()).norm() == 0.0;
                 }});
    c.push_back({"lat-long weights sum to 4 pi", [] {
                     const LatLongGrid g(16, 32);
                     double s = 0;
                     for (std::size_t k = 0; k < g.size(); ++k) s += g.weight(k);
                     return std::abs(s - 4 * kPi) <= 1e-12;
                 }});
    c.push_back({"measured twist adds the bias", [] {
                     const BodyTwist m = measured_twist({Vec3(1, 0, 0), Vec3::Zero()}, {Vec3(2.5, 0, 0), Vec3::Zero()}, {}, 0);
                     return m.v == Vec3(3.5, 0, 0);
                 }});
    c.push_back({"zero trajectory stands still", [] {
                     TrajectoryProfile p;
                     p.duration = 1.0;
                     const auto poses = integrate_trajectory(p, CameraPose{}, Envelope{});
                     return poses.back().C == Vec3::Zero();
                 }});
    c.push_back({"constant-texture sphere renders constant", [] {
                     const Scene s = make_sphere_scene(Sphere{Vec3::Zero(), 2.0}, [](const Vec3&, int) { return 77.0; },
                                                       Envelope::around(Vec3::Zero(), 0.1));
                     const Frame f = render(s, CameraPose{}, LatLongGrid(8, 16));
                     for (std::size_t k = 0; k < f.y.size(); ++k) {
                         if (f.y[k] != 77.0 || std::abs(f.D[k] - 2.0) > 1e-12) return false;
                     }
                     return true;
                 }});
    c.push_back({"window centre is 1 with zero gradient", [] {
                     const PinholeGrid g(33, 25, 0.8, 0.6);
                     const WindowFunction w = build_window(g, WindowMargins::fractions(g));
                     const std::size_t k = 12 * 33 + 16;
                     return w.phi[k] == 1.0 && w.grad_phi[k] == Vec3::Zero();
                 }});
    c.push_back({"missing window band is rejected", [] {
                     try {
                         build_window(PinholeGrid(33, 25, 0.8, 0.6), 10.0, 0.0);
                     } catch (const BadMargins&) {
                         return true;
                     }
                     return false;
                 }});
    c.push_back({"gain condition examples", [] {
                     ObserverGains g;
                     const bool ok = check_gain_condition(g, 1.0).satisfied && check_gain_condition(g, 1.0).margin == 1.5;
                     g.k_y = 0.4;
                     return ok && !check_gain_condition(g, 1.0).satisfied;
                 }});
    c.push_back({"exact start gives zero bias rates", [] {
                     const LatLongGrid g(8, 16);
                     const Scene s = make_sphere_scene(Sphere{Vec3(0.2, 0, 0), 2.0}, wavy_texture,
                                                       Envelope::around(Vec3::Zero(), 0.1));
                     const Frame f = render(s, CameraPose{}, g);
                     const auto [dw, dv] = sphere_bias_rates(g, initial_state(f.y, f.D), f.y, f.D, ObserverGains{});
                     return dw == Vec3::Zero() && dv == Vec3::Zero();
                 }});
    c.push_back({"null motion is stationary", [] {
                     const LatLongGrid g(8, 16);
                     const ScalarField y = g.make_field(50.0), D = g.make_field(1.0);
                     return residual_rms(stationarity_residual(y, D, g, Vec3::Zero(), Vec3::Zero()), g) == 0.0;
                 }});
    c.push_back({"orthogonality conventions", [] {
                     const LatLongGrid g(8, 16);
                     const ScalarField D = g.make_field(1.0);
                     return orthogonality_identity_check(D, g, Vec3::Zero(), Vec3(1, 0, 0)) == 0.0 &&
                            orthogonality_identity_check(D, g, Vec3(1, 0, 0), Vec3(0, 1, 0)) == 0.0;
                 }});
    c.push_back({"config round trip", [] {
                     SimConfig a;
                     a.noise.seed = 99;
                     a.scene.amplitude = 90.125;
                     return parse_config_string(serialize(a)) == a;
                 }});
    c.push_back({"csv row format", [] {
                     DiagnosticRow r;
                     r.t = 0.5;
                     r.V = 1.0 / 3.0;
                     return csv_line(r) == "0.5,0,0,0,0,0,0,0,0,0,0,0,0,0.333333333,0,0,0,0";
                 }});
    c.push_back({"missing csv is reported", [] {
                     try {
                         emit_plots(std::filesystem::temp_directory_path() / "bias_obs_no_such_dir" / "none.csv");
                     } catch (const MissingCSV&) {
                         return true;
                     }
                     return false;
                 }});
    return c;
}

/// Runs every check, prints one line each, returns the number of failures.
inline int run_selftest(std::ostream& out) {
    int failures = 0;
    for (const auto& chk : self_checks()) {
        bool ok = false;
        std::string why;
        try {
            ok = chk.run();
        } catch (const std::exception& e) {
            why = std::string(" (") + e.what() + ")";
        }
        out << (ok ? "PASS " : "FAIL ") << chk.name << why << '\n';
        if (!ok) ++failures;
    }
    return failures;
}

} // namespace bias_obs
