// Full-sphere bias observer: transported brightness/depth estimates with
// output injection, integral bias updates, Lyapunov diagnostics.
#pragma once

#include "bias_obs/camera_kinematics.hpp"
#include "bias_obs/parallel.hpp"
#include "bias_obs/sphere_geometry.hpp"
#include "bias_obs/transport_model.hpp"

namespace bias_obs {

/// Correction gains k_y, k_D (1/s), bias gains k_w, k_v and the
/// brightness/depth weights lambda_y, lambda_D. Stored as plain positive
/// reals in the units of the published experiment.
struct ObserverGains {
    double k_y = 2.0;
    double k_D = 2.0;
    double k_w = 1e-5;
    double k_v = 1e-2;
    double lambda_y = 1.0;
    double lambda_D = 5000.0;
};

inline void validate(const ObserverGains& g) {
    for (double v : {g.k_y, g.k_D, g.k_w, g.k_v, g.lambda_y, g.lambda_D}) {
        if (!(v > 0.0) || !std::isfinite(v)) throw BadGains("observer gains must be finite and positive");
    }
}

/// Discretization of the transport term grad(f).a.
enum class Transport {
    Upwind, // first-order upwind on the chart velocities (default)
    Chart   // chart gradient (Sobel or central) dotted with a
};

struct ObserverOptions {
    Transport transport = Transport::Upwind;
    double cfl_max = 0.5;      // substep until the per-substep CFL is below this
    bool freeze_bias = false;  // hold the bias estimates (used by transport studies)
};

inline constexpr double kDepthEstimateFloor = 1e-3;

struct ObserverState {
    ScalarField y_hat;
    ScalarField D_hat;
    Vec3 p_w_hat = Vec3::Zero();
    Vec3 p_v_hat = Vec3::Zero();
    double t = 0.0;
};

/// One measurement frame: brightness, depth and the measured twist.
struct Measurement {
    const ScalarField* y = nullptr;
    const ScalarField* D = nullptr;
    BodyTwist twist; // (v_m, w_m)
};

inline ObserverState initial_state(const ScalarField& y0, const ScalarField& D0, double t0 = 0.0) {
    return {y0, D0, Vec3::Zero(), Vec3::Zero(), t0};
}

struct LyapunovSample {
    double V = 0.0;
    double f = 0.0;
    double t = 0.0;
};

namespace detail {

template <class Grid>
double transport_term(const Grid& grid, const ScalarField& f, std::size_t s, const Vec3& a, Transport tr) {
    if (tr == Transport::Upwind) return grid.advect_upwind(f, s, a);
    return grid.gradient(f, s).dot(a);
}

inline bool all_finite(const ScalarField& f) {
    for (double v : f.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace detail

/// Largest CFL number of the estimated advection field over the grid.
template <class Grid>
double observer_cfl(const Grid& grid, const ScalarField& D, const BodyTwist& m, const Vec3& p_w_hat,
                    const Vec3& p_v_hat, double dt) {
    double c = 0.0;
    const Vec3 v = m.v - p_v_hat, w = m.w - p_w_hat;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        c = std::max(c, grid.cfl(advection(grid.dir(s).vec(), D[s], v, w), s, dt));
    }
    return c;
}

/// Time derivatives of the bias estimates (without the freeze option).
template <class Grid>
std::pair<Vec3, Vec3> sphere_bias_rates(const Grid& grid, const ObserverState& st, const ScalarField& y,
                                        const ScalarField& D, const ObserverGains& g) {
    const std::size_t n = grid.size();
    std::vector<Vec3> iw(n), iv(n);
    parallel_for(n, [&](std::size_t s) {
        const Vec3& eta = grid.dir(s).vec();
        const double ey = st.y_hat[s] - y[s];
        const double eD = st.D_hat[s] - D[s];
        const Vec3 gy = grid.gradient(st.y_hat, s);
        const Vec3 gD = grid.gradient(st.D_hat, s);
        const double inv_d = inverse_depth(D[s]);
        const double w = grid.weight(s);
        iw[s] = w * (g.lambda_y * ey * gy.cross(eta) + g.lambda_D * eD * gD.cross(eta));
        iv[s] = w * (g.lambda_D * eD * eta + g.lambda_y * ey * inv_d * eta.cross(eta.cross(gy)) +
                     g.lambda_D * eD * inv_d * eta.cross(eta.cross(gD)));
    });
    Vec3 sw = Vec3::Zero(), sv = Vec3::Zero();
    for (std::size_t s = 0; s < n; ++s) {
        sw += iw[s];
        sv += iv[s];
    }
    return {-g.k_w * sw, -g.k_v * sv};
}

/// One explicit Euler step of the full-sphere observer with the measurement
/// held over [t, t + dt].
template <class Grid>
ObserverState observer_step_sphere(const Grid& grid, const ObserverState& st, const ScalarField& y,
                                   const ScalarField& D, const BodyTwist& m, const ObserverGains& g, double dt,
                                   const ObserverOptions& opt = {}) {
    validate(g);
    if (!(dt > 0.0)) throw BadConfig("observer step must be positive");
    grid.check_shape(y);
    grid.check_shape(D);
    grid.check_shape(st.y_hat);
    grid.check_shape(st.D_hat);
    const Vec3 v = m.v - st.p_v_hat, w = m.w - st.p_w_hat;
    ObserverState next{grid.make_field(), grid.make_field(), st.p_w_hat, st.p_v_hat, st.t + dt};
    parallel_for(grid.size(), [&](std::size_t s) {
        const Vec3& eta = grid.dir(s).vec();
        const Vec3 a = advection(eta, D[s], v, w);
        const double ty = detail::transport_term(grid, st.y_hat, s, a, opt.transport);
        const double tD = detail::transport_term(grid, st.D_hat, s, a, opt.transport);
        next.y_hat[s] = st.y_hat[s] + dt * (-ty + g.k_y * (y[s] - st.y_hat[s]));
        next.D_hat[s] = std::max(kDepthEstimateFloor,
                                 st.D_hat[s] + dt * (-tD - v.dot(eta) + g.k_D * (D[s] - st.D_hat[s])));
    });
    if (!opt.freeze_bias) {
        const auto [dw, dv] = sphere_bias_rates(grid, st, y, D, g);
        next.p_w_hat += dt * dw;
        next.p_v_hat += dt * dv;
    }
    const bool ok = detail::all_finite(next.y_hat) && detail::all_finite(next.D_hat) &&
                    next.p_w_hat.allFinite() && next.p_v_hat.allFinite();
    if (!ok) {
        throw NonfiniteField("non-finite observer state at t = " + std::to_string(next.t) + " (CFL " +
                             std::to_string(observer_cfl(grid, D, m, st.p_w_hat, st.p_v_hat, dt)) + ")");
    }
    return next;
}

namespace detail {

inline ScalarField lerp(const ScalarField& a, const ScalarField& b, double s) {
    if (s == 0.0) return a;
    ScalarField out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1 - s) * a[k] + s * b[k];
    return out;
}

inline BodyTwist lerp(const BodyTwist& a, const BodyTwist& b, double s) {
    return {(1 - s) * a.v + s * b.v, (1 - s) * a.w + s * b.w};
}

} // namespace detail

/// Number of explicit substeps needed to keep the CFL number below the
/// configured limit over one frame interval.
inline int substep_count(double cfl, double cfl_max) {
    if (!(cfl_max > 0.0)) throw BadConfig("cfl_max must be positive");
    return std::max(1, static_cast<int>(std::ceil(cfl / cfl_max - 1e-12)));
}

struct AdvanceInfo {
    double cfl = 0.0; // full-frame CFL number at the start of the interval
    int substeps = 1;
};

/// Advances the full-sphere observer from frame k to frame k + 1.
/// Measurements are interpolated linearly between the two frames and the
/// interval is split so each Euler substep satisfies the CFL limit.
template <class Grid>
ObserverState advance_sphere(const Grid& grid, const ObserverState& st, const Measurement& m0,
                             const Measurement& m1, const ObserverGains& g, double dt,
                             const ObserverOptions& opt = {}, AdvanceInfo* info = nullptr) {
    const double cfl = observer_cfl(grid, *m0.D, m0.twist, st.p_w_hat, st.p_v_hat, dt);
    const int n = substep_count(cfl, opt.cfl_max);
    if (info) *info = {cfl, n};
    ObserverState cur = st;
    const double h = dt / n;
    for (int i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) / n;
        const ScalarField y = detail::lerp(*m0.y, *m1.y, s);
        const ScalarField D = detail::lerp(*m0.D, *m1.D, s);
        cur = observer_step_sphere(grid, cur, y, D, detail::lerp(m0.twist, m1.twist, s), g, h, opt);
    }
    cur.t = st.t + dt;
    return cur;
}

/// Local divergence of W = (1/D) eta x (eta x v):
/// (1/D)(2 eta.v - (grad D / D).(eta x (eta x v))).
inline double flow_divergence(const Vec3& eta, double D, const Vec3& gradD, const Vec3& v) {
    const double inv = inverse_depth(D);
    return inv * (2.0 * eta.dot(v) - inv * gradD.dot(eta.cross(eta.cross(v))));
}

/// sup over samples of |flow_divergence| for one frame.
template <class Grid>
double compute_L(const Grid& grid, const ScalarField& D, const Vec3& v) {
    grid.check_shape(D);
    double L = 0.0;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        L = std::max(L, std::abs(flow_divergence(grid.dir(s).vec(), D[s], grid.gradient(D, s), v)));
    }
    return L;
}

/// sup over a whole sequence of depth frames and linear velocities.
template <class Grid>
double compute_L(const Grid& grid, const std::vector<ScalarField>& D_seq, const std::vector<Vec3>& v_seq) {
    if (D_seq.size() != v_seq.size()) throw GridMismatch("depth and velocity sequences differ in length");
    double L = 0.0;
    for (std::size_t k = 0; k < D_seq.size(); ++k) L = std::max(L, compute_L(grid, D_seq[k], v_seq[k]));
    return L;
}

struct GainCondition {
    bool satisfied = false;
    double margin = 0.0; // min(k_y, k_D) - L/2
};

inline GainCondition check_gain_condition(const ObserverGains& g, double L) {
    const double margin = std::min(g.k_y, g.k_D) - 0.5 * L;
    return {margin > 0.0, margin};
}

/// V = 1/2 int(lambda_y e_y^2 + lambda_D e_D^2) + |e_w|^2/2k_w + |e_v|^2/2k_v
/// and f = int(lambda_y (k_y - L/2) e_y^2 + lambda_D (k_D - L/2) e_D^2).
/// Diagnostic only: needs the true bias.
template <class Grid>
LyapunovSample lyapunov_value(const Grid& grid, const ObserverState& st, const ScalarField& y,
                              const ScalarField& D, const BiasPair& truth, const ObserverGains& g, double L) {
    double Vf = 0.0, f = 0.0;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        const double ey2 = sq(st.y_hat[s] - y[s]), eD2 = sq(st.D_hat[s] - D[s]);
        const double w = grid.weight(s);
        Vf += w * (g.lambda_y * ey2 + g.lambda_D * eD2);
        f += w * (g.lambda_y * (g.k_y - 0.5 * L) * ey2 + g.lambda_D * (g.k_D - 0.5 * L) * eD2);
    }
    const double Vb = (st.p_w_hat - truth.p_w).squaredNorm() / (2.0 * g.k_w) +
                      (st.p_v_hat - truth.p_v).squaredNorm() / (2.0 * g.k_v);
    return {0.5 * Vf + Vb, f, st.t};
}

} // namespace bias_obs
