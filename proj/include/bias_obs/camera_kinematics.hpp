// Rigid camera motion: pose integration, smooth trajectories, biased and
// noisy velocity measurements.
#pragma once

#include "bias_obs/core.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace bias_obs {

/// Orientation q (camera to reference frame) and optical centre C.
struct CameraPose {
    Quat q = Quat::Identity();
    Vec3 C = Vec3::Zero();

    /// Camera-frame direction to reference frame: q eta q*.
    Vec3 to_world(const Vec3& eta) const { return q * eta; }
    Vec3 to_camera(const Vec3& world_dir) const { return q.conjugate() * world_dir; }
};

/// Linear and angular velocity in the camera frame.
struct BodyTwist {
    Vec3 v = Vec3::Zero();
    Vec3 w = Vec3::Zero();
};

/// Constant measurement biases, camera frame.
struct BiasPair {
    Vec3 p_v = Vec3::Zero();
    Vec3 p_w = Vec3::Zero();
};

struct NoiseSpec {
    double sigma_y = 0.0;
    double sigma_D = 0.0;
    double sigma_v = 0.0;
    double sigma_w = 0.0;
    std::uint64_t seed = 0;
};

/// Axis-aligned box that must contain the optical centre.
struct Envelope {
    Vec3 lo = Vec3::Constant(-std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(std::numeric_limits<double>::infinity());

    static Envelope around(const Vec3& centre, double half) {
        return {centre - Vec3::Constant(half), centre + Vec3::Constant(half)};
    }
    bool contains(const Vec3& c) const {
        return (c.array() >= lo.array()).all() && (c.array() <= hi.array()).all();
    }
    bool bounded() const { return lo.allFinite() && hi.allFinite(); }
    std::array<Vec3, 8> corners() const {
        std::array<Vec3, 8> out;
        for (int m = 0; m < 8; ++m) {
            out[m] = Vec3(m & 1 ? hi.x() : lo.x(), m & 2 ? hi.y() : lo.y(), m & 4 ? hi.z() : lo.z());
        }
        return out;
    }
};

// Counter-based seeding: every (seed, stream, frame) triple gets its own
// engine, so results do not depend on evaluation order.
namespace noise_stream {
inline constexpr std::uint64_t kBrightness = 1;
inline constexpr std::uint64_t kDepth = 2;
inline constexpr std::uint64_t kTwist = 3;
} // namespace noise_stream

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 noise_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t frame) {
    return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ frame));
}

/// One sinusoid a * sin(2 pi f t + phase).
struct SinTerm {
    double amplitude = 0.0;
    double frequency = 0.0; // Hz
    double phase = 0.0;     // rad

    double value(double t) const { return amplitude * std::sin(2.0 * kPi * frequency * t + phase); }
    double derivative(double t) const {
        const double om = 2.0 * kPi * frequency;
        return amplitude * om * std::cos(om * t + phase);
    }
};

struct TrajectoryProfile {
    std::array<std::vector<SinTerm>, 3> v; // per camera axis, m/s
    std::array<std::vector<SinTerm>, 3> w; // per camera axis, rad/s
    double duration = 12.0;                // s
    double rate = 42.0;                    // Hz
    double v_cap = 1.0;                    // m/s, bound on |v|
    double w_cap = 1.0;                    // rad/s, bound on |w|

    std::size_t frame_count() const {
        return static_cast<std::size_t>(std::floor(duration * rate + 1e-9)) + 1;
    }

    /// Worst-case speeds from the amplitude sums.
    double v_bound() const { return bound(v); }
    double w_bound() const { return bound(w); }

private:
    static double bound(const std::array<std::vector<SinTerm>, 3>& axes) {
        double s2 = 0.0;
        for (const auto& terms : axes) {
            double a = 0.0;
            for (const auto& term : terms) a += std::abs(term.amplitude);
            s2 += a * a;
        }
        return std::sqrt(s2);
    }
};

/// Hand-held-like default: every axis moves, periods of a few seconds, and
/// cosine phases for the linear velocity so positions oscillate around the
/// start point.
inline TrajectoryProfile default_trajectory() {
    TrajectoryProfile p;
    const double c = kPi / 2;
    p.v[0] = {{0.25, 0.25, c}};
    p.v[1] = {{0.20, 0.30, c}};
    p.v[2] = {{0.30, 0.20, c}};
    p.w[0] = {{0.20, 0.35, 0.0}};
    p.w[1] = {{0.25, 0.30, 0.0}};
    p.w[2] = {{0.15, 0.25, 0.0}};
    p.v_cap = 0.6;
    p.w_cap = 0.4;
    return p;
}

inline void validate(const TrajectoryProfile& p) {
    if (!(p.duration > 0.0) || !(p.rate > 0.0)) throw BadConfig("trajectory duration and rate must be positive");
    if (p.duration * p.rate > 1e6) throw BadConfig("trajectory exceeds 1e6 frames");
    for (const auto* axes : {&p.v, &p.w}) {
        for (const auto& terms : *axes) {
            for (const auto& t : terms) {
                if (!std::isfinite(t.amplitude) || !std::isfinite(t.frequency) || !std::isfinite(t.phase) ||
                    t.frequency < 0.0) {
                    throw BadConfig("trajectory terms must be finite with non-negative frequency");
                }
            }
        }
    }
    if (p.v_bound() > p.v_cap + 1e-12) throw BadConfig("linear velocity amplitudes exceed the cap");
    if (p.w_bound() > p.w_cap + 1e-12) throw BadConfig("angular velocity amplitudes exceed the cap");
}

inline BodyTwist sample_trajectory(const TrajectoryProfile& profile, double t) {
    if (!(t >= -1e-12 && t <= profile.duration + 1e-9)) {
        throw OutOfRange("trajectory time " + std::to_string(t) + " outside [0, duration]");
    }
    BodyTwist out;
    for (int c = 0; c < 3; ++c) {
        for (const auto& term : profile.v[c]) out.v[c] += term.value(t);
        for (const auto& term : profile.w[c]) out.w[c] += term.value(t);
    }
    return out;
}

/// Biased measurement v_m = v + p_v (+ noise), w_m = w + p_w (+ noise).
/// Noise draws are keyed on (seed, frame).
inline BodyTwist measured_twist(const BodyTwist& truth, const BiasPair& bias, const NoiseSpec& noise,
                                std::uint64_t frame) {
    BodyTwist m{truth.v + bias.p_v, truth.w + bias.p_w};
    if (noise.sigma_v > 0.0 || noise.sigma_w > 0.0) {
        auto eng = noise_engine(noise.seed, noise_stream::kTwist, frame);
        std::normal_distribution<double> n;
        for (int c = 0; c < 3; ++c) m.v[c] += noise.sigma_v * n(eng);
        for (int c = 0; c < 3; ++c) m.w[c] += noise.sigma_w * n(eng);
    }
    return m;
}

namespace detail {

inline Quat rotvec_exp(const Vec3& r) {
    const double a = r.norm();
    if (a < 1e-300) return Quat::Identity();
    return Quat(Eigen::AngleAxisd(a, r / a));
}

/// Fourth-order Magnus step for qdot = q w / 2 over [t, t + h].
template <class TwistFn>
Quat magnus_step(const Quat& q, TwistFn&& twist, double t, double h) {
    const double c = std::sqrt(3.0) / 6.0;
    const Vec3 w1 = twist(t + (0.5 - c) * h).w;
    const Vec3 w2 = twist(t + (0.5 + c) * h).w;
    const Vec3 omega = 0.5 * h * (w1 + w2) + (std::sqrt(3.0) * h * h / 12.0) * w1.cross(w2);
    return (q * rotvec_exp(omega)).normalized();
}

} // namespace detail

/// Advances (q, C) over [t, t + dt] for a time-varying twist. Orientation
/// uses a fourth-order Magnus exponential (exact for constant w), position
/// the classical RK4 quadrature of C' = q v q* with stage orientations.
template <class TwistFn>
CameraPose integrate_pose(const CameraPose& pose, TwistFn&& twist, double t, double dt,
                          const Envelope& envelope = {}) {
    if (!(dt > 0.0)) throw BadConfig("integration step must be positive");
    const Quat q0 = pose.q.normalized();
    const Quat q_half = detail::magnus_step(q0, twist, t, 0.5 * dt);
    const Quat q1 = detail::magnus_step(q0, twist, t, dt);
    const Vec3 k1 = q0 * twist(t).v;
    const Vec3 k2 = q_half * twist(t + 0.5 * dt).v;
    const Vec3 k4 = q1 * twist(t + dt).v;
    CameraPose out{q1, pose.C + dt / 6.0 * (k1 + 4.0 * k2 + k4)};
    if (!envelope.contains(out.C)) {
        throw EnvelopeExit("camera centre left the trajectory envelope at t = " + std::to_string(t + dt));
    }
    return out;
}

/// Constant-twist step.
inline CameraPose integrate_pose(const CameraPose& pose, const BodyTwist& twist, double dt,
                                 const Envelope& envelope = {}) {
    return integrate_pose(pose, [&](double) { return twist; }, 0.0, dt, envelope);
}

/// Pose at every frame time k / rate, integrated with `substeps` steps per
/// frame.
inline std::vector<CameraPose> integrate_trajectory(const TrajectoryProfile& profile, const CameraPose& start,
                                                    const Envelope& envelope, int substeps = 4) {
    const std::size_t frames = profile.frame_count();
    std::vector<CameraPose> poses;
    poses.reserve(frames);
    poses.push_back(start);
    if (!envelope.contains(start.C)) throw EnvelopeExit("initial camera centre outside the envelope");
    const double dt = 1.0 / profile.rate / substeps;
    auto twist = [&](double t) { return sample_trajectory(profile, std::min(t, profile.duration)); };
    CameraPose p = start;
    for (std::size_t k = 1; k < frames; ++k) {
        for (int s = 0; s < substeps; ++s) {
            const double t = (static_cast<double>(k - 1) + static_cast<double>(s) / substeps) / profile.rate;
            p = integrate_pose(p, twist, t, dt, envelope);
        }
        poses.push_back(p);
    }
    return poses;
}

} // namespace bias_obs
