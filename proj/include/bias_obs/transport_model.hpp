// Brightness/depth transport on the sphere: advection fields, PDE residuals
// of rendered sequences, and a method-of-characteristics reference solver.
#pragma once

#include "bias_obs/camera_kinematics.hpp"
#include "bias_obs/parallel.hpp"
#include "bias_obs/sphere_geometry.hpp"

#include <functional>
#include <optional>

namespace bias_obs {

/// Depth below which 1/D is no longer trusted (noisy depth can approach 0).
inline constexpr double kInverseDepthFloor = 0.05;

inline double inverse_depth(double d) { return 1.0 / std::max(d, kInverseDepthFloor); }

/// eta x (w + (1/D) eta x v).
inline Vec3 advection(const Vec3& eta, double depth, const Vec3& v, const Vec3& w) {
    return eta.cross(w + inverse_depth(depth) * eta.cross(v));
}

enum class Quantity { Brightness, Depth };

/// Per-sample W = eta x (w + (1/D) eta x v), or eta x ((1/D) eta x v) with
/// the rotation left out.
template <class Grid>
std::vector<Vec3> flow_field(const Grid& grid, const ScalarField& D, const BodyTwist& twist,
                             bool include_rotation = true) {
    grid.check_shape(D);
    const Vec3 w = include_rotation ? twist.w : Vec3::Zero();
    std::vector<Vec3> out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) out[k] = advection(grid.dir(k).vec(), D[k], twist.v, w);
    return out;
}

/// Frames sampled at t0 + k dt with the twist at each frame.
struct FrameSequence {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<ScalarField> y;
    std::vector<ScalarField> D;
    std::vector<BodyTwist> twist;

    std::size_t size() const { return y.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

/// r = df/dt + grad f . eta x (w + (1/D) eta x v)  [+ v . eta for depth],
/// with a centred time difference around frame k.
template <class Grid>
ScalarField pde_residual(const FrameSequence& seq, const Grid& grid, std::size_t k, Quantity q) {
    if (seq.size() < 3 || k == 0 || k + 1 >= seq.size() || seq.D.size() != seq.size() ||
        seq.twist.size() != seq.size()) {
        throw InsufficientFrames("residual needs the frames before and after the evaluation index");
    }
    if (!(seq.dt > 0.0)) throw BadConfig("frame interval must be positive");
    const auto& f = q == Quantity::Brightness ? seq.y : seq.D;
    grid.check_shape(f[k]);
    const BodyTwist& tw = seq.twist[k];
    ScalarField r = grid.make_field();
    parallel_for(grid.size(), [&](std::size_t s) {
        const Vec3& eta = grid.dir(s).vec();
        const double dfdt = (f[k + 1][s] - f[k - 1][s]) / (2.0 * seq.dt);
        const Vec3 a = advection(eta, seq.D[k][s], tw.v, tw.w);
        double v = dfdt + grid.gradient(f[k], s).dot(a);
        if (q == Quantity::Depth) v += tw.v.dot(eta);
        r[s] = v;
    });
    return r;
}

/// Root-mean-square of a field.
inline double rms(const ScalarField& f) {
    double s = 0.0;
    for (double v : f.data) s += v * v;
    return f.size() ? std::sqrt(s / static_cast<double>(f.size())) : 0.0;
}

struct CharacteristicPath {
    std::vector<double> t;
    std::vector<UnitDir> eta;
    double t0 = 0.0;
    double t1 = 0.0;
};

/// Data seen by the observer between frames, interpolated linearly in time
/// and bilinearly on the pinhole chart.
struct ObserverInputs {
    const PinholeGrid* grid = nullptr;
    double t0 = 0.0;
    double dt = 0.0;
    const std::vector<ScalarField>* y = nullptr;
    const std::vector<ScalarField>* D = nullptr;
    std::vector<BodyTwist> measured;  // (v_m, w_m) per frame
    std::vector<BiasPair> bias_hat;   // estimated biases per frame

    std::size_t frames() const { return measured.size(); }

    void frame_weights(double t, std::size_t& k0, std::size_t& k1, double& s) const {
        const double last = static_cast<double>(frames() - 1);
        const double f = std::clamp((t - t0) / dt, 0.0, last);
        k0 = std::min(static_cast<std::size_t>(f), frames() - 1);
        k1 = std::min(k0 + 1, frames() - 1);
        s = f - static_cast<double>(k0);
    }

    /// (v_m - p_v_hat, w_m - p_w_hat) at time t.
    BodyTwist effective(double t) const {
        std::size_t k0 = 0, k1 = 0;
        double s = 0.0;
        frame_weights(t, k0, k1, s);
        auto eff = [&](std::size_t k) {
            const BiasPair& b = bias_hat.empty() ? BiasPair{} : bias_hat[std::min(k, bias_hat.size() - 1)];
            return BodyTwist{measured[k].v - b.p_v, measured[k].w - b.p_w};
        };
        const BodyTwist a = eff(k0), b = eff(k1);
        return {(1 - s) * a.v + s * b.v, (1 - s) * a.w + s * b.w};
    }

    /// Bilinear/linear sample of a frame sequence; nullopt outside the frame.
    std::optional<double> sample(const std::vector<ScalarField>& seq, const Vec3& eta, double t) const {
        double fi = 0.0, fj = 0.0;
        if (!grid->locate(eta, fi, fj)) return std::nullopt;
        std::size_t k0 = 0, k1 = 0;
        double s = 0.0;
        frame_weights(t, k0, k1, s);
        return (1 - s) * grid->sample_bilinear(seq[k0], fi, fj) + s * grid->sample_bilinear(seq[k1], fi, fj);
    }
};

namespace detail {

inline Vec3 characteristic_rate(const ObserverInputs& in, const Vec3& eta, double t) {
    const BodyTwist e = in.effective(t);
    if (e.v.squaredNorm() == 0.0) return eta.cross(e.w);
    const auto d = in.sample(*in.D, eta, t);
    if (!d) throw LeftDomain("characteristic left the pinhole frustum");
    return advection(eta, *d, e.v, e.w);
}

} // namespace detail

/// RK4 integration of d(eta)/dt = eta x (w_m - p_w_hat + (1/D) eta x (v_m -
/// p_v_hat)) from t0 to t1 (t1 < t0 integrates backward), with
/// renormalization after every step.
inline CharacteristicPath characteristic_flow(const UnitDir& eta0, double t0, double t1, const ObserverInputs& in,
                                              int steps_per_frame = 8) {
    if (in.frames() == 0 || !(in.dt > 0.0)) throw InsufficientFrames("no observer inputs to follow");
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / in.dt * steps_per_frame - 1e-9)));
    const double h = (t1 - t0) / n;
    CharacteristicPath path;
    path.t0 = t0;
    path.t1 = t1;
    path.t.reserve(n + 1);
    path.eta.reserve(n + 1);
    Vec3 e = eta0.vec();
    double t = t0;
    path.t.push_back(t);
    path.eta.emplace_back(e);
    for (int s = 0; s < n; ++s) {
        const Vec3 k1 = detail::characteristic_rate(in, e, t);
        const Vec3 k2 = detail::characteristic_rate(in, (e + 0.5 * h * k1).normalized(), t + 0.5 * h);
        const Vec3 k3 = detail::characteristic_rate(in, (e + 0.5 * h * k2).normalized(), t + 0.5 * h);
        const Vec3 k4 = detail::characteristic_rate(in, (e + h * k3).normalized(), t + h);
        e = (e + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).normalized();
        t = t0 + (s + 1) * h;
        path.t.push_back(t);
        path.eta.emplace_back(e);
    }
    if (in.D != nullptr) {
        double fi = 0.0, fj = 0.0;
        if (!in.grid->locate(e, fi, fj) && in.effective(t).v.squaredNorm() != 0.0) {
            throw LeftDomain("characteristic left the pinhole frustum");
        }
    }
    return path;
}

/// Window value and gradient at an arbitrary direction.
using WindowEval = std::function<std::pair<double, Vec3>(const Vec3& eta)>;

struct ReferenceField {
    ScalarField value;
    Mask valid; // 0 where the backward characteristic left the frame
};

/// Exact transport-relaxation solution along characteristics:
///   f(t, eta) = e^{-k(t-t0)} f0(Phi_{t0}) + int e^{-k(t-tau)} s(tau) dtau
/// with s = k phi y + y grad(phi).a for brightness and
///      s = k phi D + D grad(phi).a - phi (v_m - p_v_hat).eta for depth,
/// where phi = 1 when no window is given. Between RK4 nodes the source is
/// linear and the exponential kernel is integrated exactly.
inline ReferenceField characteristics_reference_solution(const ScalarField& f0, Quantity q, const ObserverInputs& in,
                                                         double k, double t, const WindowEval& window = {},
                                                         int steps_per_frame = 8) {
    if (!(k > 0.0)) throw BadGains("relaxation gain must be positive");
    const PinholeGrid& grid = *in.grid;
    grid.check_shape(f0);
    ReferenceField out{grid.make_field(), Mask(grid.size(), 0)};
    const std::vector<ScalarField>& meas = q == Quantity::Brightness ? *in.y : *in.D;
    parallel_for(grid.size(), [&](std::size_t p) {
        CharacteristicPath path;
        try {
            path = characteristic_flow(grid.dir(p), t, in.t0, in, steps_per_frame);
        } catch (const LeftDomain&) {
            return;
        }
        // Path runs backward; walk it forward in time.
        const std::size_t n = path.t.size();
        double fi = 0.0, fj = 0.0;
        const Vec3& start = path.eta[n - 1].vec();
        if (!grid.locate(start, fi, fj)) return;
        double acc = std::exp(-k * (t - in.t0)) * grid.sample_bilinear(f0, fi, fj);
        std::vector<double> src(n);
        for (std::size_t m = 0; m < n; ++m) {
            const Vec3& e = path.eta[m].vec();
            const double tau = path.t[m];
            const auto fm = in.sample(meas, e, tau);
            const auto dm = in.sample(*in.D, e, tau);
            if (!fm || !dm) return;
            const BodyTwist eff = in.effective(tau);
            double phi = 1.0;
            Vec3 gphi = Vec3::Zero();
            if (window) std::tie(phi, gphi) = window(e);
            const Vec3 a = advection(e, *dm, eff.v, eff.w);
            double s = k * phi * *fm + *fm * gphi.dot(a);
            if (q == Quantity::Depth) s -= phi * eff.v.dot(e);
            src[m] = s;
        }
        // path.t[m] > path.t[m + 1]; the kernel decays away from node m
        double integral = 0.0;
        for (std::size_t m = 0; m + 1 < n; ++m) {
            const double h = path.t[m] - path.t[m + 1], kh = k * h;
            const double e1 = -std::expm1(-kh) / k;
            const double e2 = (-std::expm1(-kh) - kh * std::exp(-kh)) / (k * k);
            integral += std::exp(-k * (t - path.t[m])) * (src[m] * e1 - (src[m] - src[m + 1]) / h * e2);
        }
        out.value[p] = acc + integral;
        out.valid[p] = 1;
    });
    return out;
}

} // namespace bias_obs
