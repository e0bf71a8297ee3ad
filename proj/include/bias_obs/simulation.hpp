// Ground-truth data generation: trajectory -> poses -> rendered frames and
// biased, noisy velocity measurements.
#pragma once

#include "bias_obs/camera_kinematics.hpp"
#include "bias_obs/scene_model.hpp"
#include "bias_obs/transport_model.hpp"

namespace bias_obs {

struct SimulatedData {
    double dt = 0.0;
    std::vector<CameraPose> poses;
    std::vector<BodyTwist> truth;
    std::vector<BodyTwist> measured;
    std::vector<ScalarField> y;
    std::vector<ScalarField> D;

    std::size_t size() const { return poses.size(); }

    /// Frames with the true twists (for PDE residuals).
    FrameSequence sequence() const { return {0.0, dt, y, D, truth}; }
};

/// Renders every frame of the trajectory on `grid`.
template <class Grid>
SimulatedData simulate(const Scene& scene, const TrajectoryProfile& profile, const CameraPose& start,
                       const Envelope& envelope, const Grid& grid, const BiasPair& bias = {},
                       const NoiseSpec& noise = {}, int pose_substeps = 4) {
    validate(profile);
    SimulatedData out;
    out.dt = 1.0 / profile.rate;
    out.poses = integrate_trajectory(profile, start, envelope, pose_substeps);
    const std::size_t n = out.poses.size();
    out.truth.resize(n);
    out.measured.resize(n);
    out.y.resize(n);
    out.D.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = std::min(static_cast<double>(k) * out.dt, profile.duration);
        out.truth[k] = sample_trajectory(profile, t);
        out.measured[k] = measured_twist(out.truth[k], bias, noise, k);
        Frame f = render(scene, out.poses[k], grid, noise, k);
        out.y[k] = std::move(f.y);
        out.D[k] = std::move(f.D);
    }
    return out;
}

/// Rotation taking camera axes (x right, y down, z forward) onto the given
/// world forward and up directions.
inline Quat camera_orientation(const Vec3& forward, const Vec3& up) {
    const Vec3 z = forward.normalized();
    const Vec3 down = -(up - up.dot(z) * z);
    if (down.norm() < 1e-9) throw BadConfig("camera up direction is parallel to forward");
    const Vec3 y = down.normalized();
    Mat3 r;
    r.col(0) = y.cross(z);
    r.col(1) = y;
    r.col(2) = z;
    return Quat(r);
}

} // namespace bias_obs
