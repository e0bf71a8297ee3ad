// Observer restricted to the camera's field of view: windowed virtual
// observations X = phi y, Lambda = phi D on a pinhole (or any chart) grid.
#pragma once

#include "bias_obs/observer_core.hpp"

namespace bias_obs {

/// Pixel margins of the window. phi vanishes within k2 pixels of the frame
/// edge and equals 1 beyond k1 pixels.
struct WindowMargins {
    double k1_h = 0.0;
    double k2_h = 0.0;
    double k1_v = 0.0;
    double k2_v = 0.0;

    /// Defaults: zero band up to 8% of the frame, plateau from 16%.
    static WindowMargins fractions(const PinholeGrid& g, double k1 = 0.16, double k2 = 0.08) {
        const double w = static_cast<double>(g.width() - 1), h = static_cast<double>(g.height() - 1);
        return {k1 * w, k2 * w, k1 * h, k2 * h};
    }
};

/// quintic smoothstep 6t^5 - 15t^4 + 10t^3 and its derivative.
inline std::pair<double, double> smoothstep5(double t) {
    if (t <= 0.0) return {0.0, 0.0};
    if (t >= 1.0) return {1.0, 0.0};
    const double t2 = t * t, t3 = t2 * t;
    return {t3 * (10.0 - 15.0 * t + 6.0 * t2), 30.0 * t2 * (1.0 - t) * (1.0 - t)};
}

/// Smooth window on a pinhole grid and its surface gradient.
struct WindowFunction {
    ScalarField phi;
    std::vector<Vec3> grad_phi;
    Mask support; // phi > 0: samples where the windowed estimates evolve
    WindowMargins margins;
    const PinholeGrid* grid = nullptr;

    /// One-axis profile in fractional pixel index x over n pixels.
    static std::pair<double, double> profile(double x, std::size_t n, double k1, double k2) {
        const double last = static_cast<double>(n - 1);
        const double e = std::min(x, last - x);
        const double sign = x <= last - x ? 1.0 : -1.0;
        const auto [v, dv] = smoothstep5((e - k2) / (k1 - k2));
        return {v, sign * dv / (k1 - k2)};
    }

    /// Window value and gradient at any direction inside the frame (0 outside).
    std::pair<double, Vec3> eval(const Vec3& eta) const {
        double fi = 0.0, fj = 0.0;
        if (!grid->locate(eta, fi, fj)) return {0.0, Vec3::Zero()};
        const auto [p1, d1] = profile(fi, grid->width(), margins.k1_h, margins.k2_h);
        const auto [p2, d2] = profile(fj, grid->height(), margins.k1_v, margins.k2_v);
        // Chart partials: d(index)/dz = 1 / dz.
        const double dz1 = d1 * p2 / grid->dz1(), dz2 = p1 * d2 / grid->dz2();
        if (dz1 == 0.0 && dz2 == 0.0) return {p1 * p2, Vec3::Zero()};
        const Eigen::Vector2d z = sphere_to_pinhole(UnitDir(eta));
        const Vec3 u(z.x(), z.y(), 1.0);
        const double r = u.norm();
        const Vec3 e1 = Vec3::UnitX() / r - u * z.x() / (r * r * r);
        const Vec3 e2 = Vec3::UnitY() / r - u * z.y() / (r * r * r);
        const detail::ChartFrame f = detail::dual_basis(u / r, e1, e2);
        return {p1 * p2, f.b1 * dz1 + f.b2 * dz2};
    }
};

inline WindowFunction build_window(const PinholeGrid& grid, const WindowMargins& m) {
    auto bad = [](double k1, double k2, std::size_t n) {
        return !(k2 > 0.0) || !(k1 > k2) || !(k1 < 0.5 * static_cast<double>(n - 1));
    };
    if (bad(m.k1_h, m.k2_h, grid.width()) || bad(m.k1_v, m.k2_v, grid.height())) {
        throw BadMargins("window margins need 0 < K2 < K1 < half the frame");
    }
    WindowFunction w{grid.make_field(), std::vector<Vec3>(grid.size(), Vec3::Zero()), Mask(grid.size(), 0), m, &grid};
    for (std::size_t j = 0; j < grid.height(); ++j) {
        const auto [p2, d2] = WindowFunction::profile(static_cast<double>(j), grid.height(), m.k1_v, m.k2_v);
        for (std::size_t i = 0; i < grid.width(); ++i) {
            const auto [p1, d1] = WindowFunction::profile(static_cast<double>(i), grid.width(), m.k1_h, m.k2_h);
            const std::size_t k = j * grid.width() + i;
            w.phi[k] = p1 * p2;
            const auto& f = grid.frame(k);
            w.grad_phi[k] = f.b1 * (d1 * p2 / grid.dz1()) + f.b2 * (p1 * d2 / grid.dz2());
            w.support[k] = w.phi[k] > 0.0 ? 1 : 0;
        }
    }
    return w;
}

inline WindowFunction build_window(const PinholeGrid& grid, double k1_margin, double k2_margin) {
    return build_window(grid, WindowMargins{k1_margin, k2_margin, k1_margin, k2_margin});
}

/// Window data on an arbitrary grid (used to run the cap equations with a
/// prescribed phi, e.g. phi = 1 on the full sphere).
struct WindowData {
    const ScalarField* phi = nullptr;
    const std::vector<Vec3>* grad_phi = nullptr;
    const Mask* support = nullptr; // nullptr: every sample evolves
};

inline WindowData window_data(const WindowFunction& w) { return {&w.phi, &w.grad_phi, &w.support}; }

struct CapObserverState {
    ScalarField X_hat;
    ScalarField L_hat;
    Vec3 p_w_hat = Vec3::Zero();
    Vec3 p_v_hat = Vec3::Zero();
    double t = 0.0;
};

inline CapObserverState initial_cap_state(const ScalarField& y0, const ScalarField& D0, const ScalarField& phi,
                                          double t0 = 0.0) {
    CapObserverState s{y0, D0, Vec3::Zero(), Vec3::Zero(), t0};
    for (std::size_t k = 0; k < phi.size(); ++k) {
        s.X_hat[k] = phi[k] * y0[k];
        s.L_hat[k] = phi[k] * D0[k];
    }
    return s;
}

/// Bias-estimate time derivatives of the cap observer.
template <class Grid>
std::pair<Vec3, Vec3> cap_bias_rates(const Grid& grid, const CapObserverState& st, const ScalarField& y,
                                     const ScalarField& D, const WindowData& win, const ObserverGains& g) {
    const std::size_t n = grid.size();
    std::vector<Vec3> iw(n), iv(n);
    parallel_for(n, [&](std::size_t s) {
        const double phi = (*win.phi)[s];
        const Vec3& gphi = (*win.grad_phi)[s];
        const Vec3& eta = grid.dir(s).vec();
        const double eX = st.X_hat[s] - phi * y[s];
        const double eL = st.L_hat[s] - phi * D[s];
        const Vec3 gX = grid.gradient(st.X_hat, s) - y[s] * gphi;
        const Vec3 gL = grid.gradient(st.L_hat, s) - D[s] * gphi;
        const double inv_d = inverse_depth(D[s]);
        const double w = grid.weight(s);
        iw[s] = w * (g.lambda_y * eX * gX.cross(eta) + g.lambda_D * eL * gL.cross(eta));
        iv[s] = w * (g.lambda_D * eL * eta + g.lambda_y * eX * inv_d * eta.cross(eta.cross(gX)) +
                     g.lambda_D * eL * inv_d * eta.cross(eta.cross(gL)));
    });
    Vec3 sw = Vec3::Zero(), sv = Vec3::Zero();
    for (std::size_t s = 0; s < n; ++s) {
        sw += iw[s];
        sv += iv[s];
    }
    return {-g.k_w * sw, -g.k_v * sv};
}

/// One explicit Euler step of the windowed observer. Outside the window
/// support the estimates are held at zero, which is also what the stencils
/// read there. At frame edges where the flow enters, the missing upwind
/// neighbour is a copy of the edge pixel (zero normal derivative).
template <class Grid>
CapObserverState observer_step_cap(const Grid& grid, const CapObserverState& st, const ScalarField& y,
                                   const ScalarField& D, const WindowData& win, const BodyTwist& m,
                                   const ObserverGains& g, double dt, const ObserverOptions& opt = {}) {
    validate(g);
    if (!(dt > 0.0)) throw BadConfig("observer step must be positive");
    for (const ScalarField* f : {&y, &D, &st.X_hat, &st.L_hat, win.phi}) grid.check_shape(*f);
    const Vec3 v = m.v - st.p_v_hat, w = m.w - st.p_w_hat;
    CapObserverState next{grid.make_field(), grid.make_field(), st.p_w_hat, st.p_v_hat, st.t + dt};
    parallel_for(grid.size(), [&](std::size_t s) {
        if (win.support && !(*win.support)[s]) return;
        const double phi = (*win.phi)[s];
        const Vec3& gphi = (*win.grad_phi)[s];
        const Vec3& eta = grid.dir(s).vec();
        const Vec3 a = advection(eta, D[s], v, w);
        const double tX = detail::transport_term(grid, st.X_hat, s, a, opt.transport);
        const double tL = detail::transport_term(grid, st.L_hat, s, a, opt.transport);
        const double ga = gphi.dot(a);
        next.X_hat[s] = st.X_hat[s] + dt * (-tX + y[s] * ga + g.k_y * (phi * y[s] - st.X_hat[s]));
        next.L_hat[s] =
            st.L_hat[s] + dt * (-tL + D[s] * ga - phi * v.dot(eta) + g.k_D * (phi * D[s] - st.L_hat[s]));
    });
    if (!opt.freeze_bias) {
        const auto [dw, dv] = cap_bias_rates(grid, st, y, D, win, g);
        next.p_w_hat += dt * dw;
        next.p_v_hat += dt * dv;
    }
    const bool ok = detail::all_finite(next.X_hat) && detail::all_finite(next.L_hat) &&
                    next.p_w_hat.allFinite() && next.p_v_hat.allFinite();
    if (!ok) {
        throw NonfiniteField("non-finite cap observer state at t = " + std::to_string(next.t) + " (CFL " +
                             std::to_string(observer_cfl(grid, D, m, st.p_w_hat, st.p_v_hat, dt)) + ")");
    }
    return next;
}

/// Advances the cap observer from frame k to k + 1 with CFL-limited
/// substeps and linearly interpolated measurements.
template <class Grid>
CapObserverState advance_cap(const Grid& grid, const CapObserverState& st, const Measurement& m0,
                             const Measurement& m1, const WindowData& win, const ObserverGains& g, double dt,
                             const ObserverOptions& opt = {}, AdvanceInfo* info = nullptr) {
    const double cfl = observer_cfl(grid, *m0.D, m0.twist, st.p_w_hat, st.p_v_hat, dt);
    const int n = substep_count(cfl, opt.cfl_max);
    if (info) *info = {cfl, n};
    CapObserverState cur = st;
    const double h = dt / n;
    for (int i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) / n;
        const ScalarField y = detail::lerp(*m0.y, *m1.y, s);
        const ScalarField D = detail::lerp(*m0.D, *m1.D, s);
        cur = observer_step_cap(grid, cur, y, D, win, detail::lerp(m0.twist, m1.twist, s), g, h, opt);
    }
    cur.t = st.t + dt;
    return cur;
}

struct CapLyapunovSample {
    LyapunovSample sample;
    double boundary_term = 0.0;
};

/// Cap Lyapunov value over the frame, the interior dissipation with the
/// local divergence of W, and the frame-edge flux
/// int_{dK} (lambda_y e_X^2 + lambda_D e_L^2)(W/2).n dl (trapezoid rule).
inline CapLyapunovSample cap_lyapunov(const PinholeGrid& grid, const CapObserverState& st, const ScalarField& y,
                                      const ScalarField& D, const WindowFunction& win, const BiasPair& truth,
                                      const ObserverGains& g, const BodyTwist& true_twist) {
    double Vf = 0.0, f = 0.0;
    auto err2 = [&](std::size_t s) {
        return g.lambda_y * sq(st.X_hat[s] - win.phi[s] * y[s]) + g.lambda_D * sq(st.L_hat[s] - win.phi[s] * D[s]);
    };
    for (std::size_t s = 0; s < grid.size(); ++s) {
        const double eX2 = sq(st.X_hat[s] - win.phi[s] * y[s]);
        const double eL2 = sq(st.L_hat[s] - win.phi[s] * D[s]);
        const double wq = grid.weight(s);
        const double div = flow_divergence(grid.dir(s).vec(), D[s], grid.gradient(D, s), true_twist.v);
        Vf += wq * (g.lambda_y * eX2 + g.lambda_D * eL2);
        f += wq * (g.lambda_y * (g.k_y - 0.5 * div) * eX2 + g.lambda_D * (g.k_D - 0.5 * div) * eL2);
    }
    // Frame edges: outward conormal along +-b1 (vertical edges) or +-b2
    // (horizontal edges); arc length element |d eta / dz| dz.
    double boundary = 0.0;
    const std::size_t W = grid.width(), H = grid.height();
    auto edge = [&](std::size_t i, std::size_t j, const Vec3& normal_dir, double sign, const Vec3& along, double dz,
                    double trap) {
        const std::size_t s = j * W + i;
        const Vec3 a = advection(grid.dir(s).vec(), D[s], true_twist.v, true_twist.w);
        const Vec3 n = sign * normal_dir.normalized();
        boundary += trap * err2(s) * 0.5 * a.dot(n) * along.norm() * dz;
    };
    auto deta = [&](std::size_t s, int axis) {
        const Vec3& e = grid.dir(s).vec();
        const double z = axis == 1 ? e.x() / e.z() : e.y() / e.z();
        const Vec3 u = e / e.z();
        const double r = u.norm();
        return Vec3((axis == 1 ? Vec3::UnitX() : Vec3::UnitY()) / r - u * z / (r * r * r));
    };
    for (std::size_t j = 0; j < H; ++j) {
        const double trap = (j == 0 || j + 1 == H) ? 0.5 : 1.0;
        edge(0, j, grid.frame(j * W).b1, -1.0, deta(j * W, 2), grid.dz2(), trap);
        edge(W - 1, j, grid.frame(j * W + W - 1).b1, 1.0, deta(j * W + W - 1, 2), grid.dz2(), trap);
    }
    for (std::size_t i = 0; i < W; ++i) {
        const double trap = (i == 0 || i + 1 == W) ? 0.5 : 1.0;
        edge(i, 0, grid.frame(i).b2, -1.0, deta(i, 1), grid.dz1(), trap);
        edge(i, H - 1, grid.frame((H - 1) * W + i).b2, 1.0, deta((H - 1) * W + i, 1), grid.dz1(), trap);
    }
    const double Vb = (st.p_w_hat - truth.p_w).squaredNorm() / (2.0 * g.k_w) +
                      (st.p_v_hat - truth.p_v).squaredNorm() / (2.0 * g.k_v);
    return {{0.5 * Vf + Vb, f, st.t}, boundary};
}

} // namespace bias_obs
