#include "bias_obs/observability.hpp"
#include "bias_obs/simulation.hpp"

#include <gtest/gtest.h>

using namespace bias_obs;

namespace {

// Camera at the origin, sphere centre on an oblique axis through it.
const Vec3 kAxis = Vec3(0.3, -0.5, 0.8).normalized();

Scene symmetric_ball() {
    return make_axisymmetric_scene(
        UnitDir(kAxis), Sphere{0.4 * kAxis, 2.0},
        [](double rho, double h) { return 128.0 + 80.0 * std::sin(1.7 * h + 0.3) + 20.0 * std::cos(2.1 * rho); },
        Envelope::around(Vec3::Zero(), 0.1));
}

Frame symmetric_view(std::size_t n_theta, const Quat& q = Quat::Identity()) {
    return render(symmetric_ball(), CameraPose{q, Vec3::Zero()}, LatLongGrid(n_theta, 2 * n_theta));
}

Frame room_view(std::size_t n_theta) {
    return render(make_room_scene(RoomConfig{}), CameraPose{Quat::Identity(), Vec3(0.5, 0.2, -0.1)},
                  LatLongGrid(n_theta, 2 * n_theta));
}

} // namespace

TEST(StationarityResidual, NullMotionIsStationary) {
    const LatLongGrid grid(32, 64);
    const Frame f = room_view(32);
    const auto r = stationarity_residual(f.y, f.D, grid, Vec3::Zero(), Vec3::Zero());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        EXPECT_EQ(r.r_y[k], 0.0);
        EXPECT_EQ(r.r_D[k], 0.0);
    }
}

TEST(StationarityResidual, ConstantSphereFromItsCentre) {
    const LatLongGrid grid(32, 64);
    const Scene s = make_sphere_scene(Sphere{Vec3::Zero(), 2.0}, [](const Vec3&, int) { return 90.0; },
                                      Envelope::around(Vec3::Zero(), 0.1));
    const Frame f = render(s, CameraPose{}, grid);
    const auto r = stationarity_residual(f.y, f.D, grid, Vec3(0.3, -0.2, 0.5), Vec3::Zero());
    EXPECT_LE(residual_rms(r, grid), 1e-9);
}

TEST(StationarityResidual, LinearInTheMotion) {
    const LatLongGrid grid(32, 64);
    const Frame f = room_view(32);
    const Vec3 w(0.1, -0.3, 0.2), v(0.4, 0.1, -0.2);
    const auto r1 = stationarity_residual(f.y, f.D, grid, w, v);
    const auto r3 = stationarity_residual(f.y, f.D, grid, 3.0 * w, 3.0 * v);
    const auto rw = stationarity_residual(f.y, f.D, grid, w, Vec3::Zero());
    const auto rv = stationarity_residual(f.y, f.D, grid, Vec3::Zero(), v);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        EXPECT_NEAR(r3.r_y[k], 3.0 * r1.r_y[k], 1e-9 * (1.0 + std::abs(r1.r_y[k])));
        EXPECT_NEAR(r3.r_D[k], 3.0 * r1.r_D[k], 1e-9 * (1.0 + std::abs(r1.r_D[k])));
        EXPECT_NEAR(r1.r_y[k], rw.r_y[k] + rv.r_y[k], 1e-9 * (1.0 + std::abs(r1.r_y[k])));
        EXPECT_NEAR(r1.r_D[k], rw.r_D[k] + rv.r_D[k], 1e-9 * (1.0 + std::abs(r1.r_D[k])));
    }
}

TEST(StationarityResidual, AxialSpinVanishesUnderRefinement) {
    std::vector<double> res;
    for (std::size_t n : {32, 64}) {
        const LatLongGrid grid(n, 2 * n);
        const Frame f = symmetric_view(n);
        res.push_back(residual_rms(stationarity_residual(f.y, f.D, grid, 0.3 * kAxis, Vec3::Zero()), grid));
    }
    EXPECT_GT(res[0] / res[1], 1.5);
    const LatLongGrid grid(64, 128);
    const Frame f = symmetric_view(64);
    const double off_axis = residual_rms(
        stationarity_residual(f.y, f.D, grid, 0.3 * kAxis.cross(Vec3::UnitX()).normalized(), Vec3::Zero()), grid);
    EXPECT_GT(off_axis, 20.0 * res[1]);
}

TEST(FindStationaryMotion, RecoversTheSymmetryAxis) {
    const LatLongGrid grid(64, 128);
    const Frame f = symmetric_view(64);
    const StationaryCandidate c = find_stationary_motion(f.y, f.D, grid, mean_depth(f.D, grid));
    EXPECT_TRUE(c.normalized);
    EXPECT_FALSE(c.degenerate);
    EXPECT_GT(std::abs(c.p_w.normalized().dot(kAxis)), 0.999);
    EXPECT_LT(c.p_v.norm() / mean_depth(f.D, grid), 0.02);
    EXPECT_NEAR(sq(c.p_w.norm()) + sq(c.p_v.norm() / mean_depth(f.D, grid)), 1.0, 1e-12);
}

TEST(FindStationaryMotion, MatchesTheResidualOfItsCandidate) {
    const LatLongGrid grid(32, 64);
    const Frame f = room_view(32);
    const double d = mean_depth(f.D, grid);
    const StationaryCandidate c = find_stationary_motion(f.y, f.D, grid, d);
    const double direct = residual_rms(stationarity_residual(f.y, f.D, grid, c.p_w, c.p_v), grid);
    EXPECT_NEAR(direct, c.residual_rms, 1e-9 * (1.0 + direct));
    // No unit motion does better (random probes of the 5-sphere).
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    for (int i = 0; i < 50; ++i) {
        Eigen::Matrix<double, 6, 1> x;
        for (auto& v : x) v = n(rng);
        x.normalize();
        const double r = residual_rms(stationarity_residual(f.y, f.D, grid, x.head<3>(), d * x.tail<3>()), grid);
        EXPECT_GE(r, c.residual_rms * (1 - 1e-9));
    }
}

TEST(FindStationaryMotion, GenericRoomStaysAwayFromZero) {
    const LatLongGrid grid(32, 64);
    const Frame sym = symmetric_view(32), room = room_view(32);
    const StationaryCandidate a = find_stationary_motion(sym.y, sym.D, grid, mean_depth(sym.D, grid));
    const StationaryCandidate b = find_stationary_motion(room.y, room.D, grid, mean_depth(room.D, grid));
    EXPECT_GT(b.residual_rms, 10.0 * a.residual_rms);
    EXPECT_TRUE(classify(b.residual_rms, a.residual_rms).observable);
}

TEST(FindStationaryMotion, FullySymmetricSceneIsFlagged) {
    const LatLongGrid grid(16, 32);
    const Scene s = make_sphere_scene(Sphere{Vec3::Zero(), 2.0}, [](const Vec3&, int) { return 90.0; },
                                      Envelope::around(Vec3::Zero(), 0.1));
    const Frame f = render(s, CameraPose{}, grid);
    const StationaryCandidate c = find_stationary_motion(f.y, f.D, grid, 2.0);
    EXPECT_LE(c.residual_rms, 1e-9);
    EXPECT_TRUE(c.degenerate);
    EXPECT_LE(c.p_v.norm(), 1e-6);
}

TEST(FindStationaryMotion, RotatingTheCameraRotatesTheMinimizer) {
    const Quat q(Eigen::AngleAxisd(0.7, Vec3(1, 2, -1).normalized()));
    const LatLongGrid grid(48, 96);
    const Frame f = symmetric_view(48, q);
    const StationaryCandidate c = find_stationary_motion(f.y, f.D, grid, mean_depth(f.D, grid));
    EXPECT_GT(std::abs(c.p_w.normalized().dot(q.conjugate() * kAxis)), 0.999);
}

TEST(OrthogonalityIdentity, Conventions) {
    const LatLongGrid grid(8, 16);
    const ScalarField D = grid.make_field(2.0);
    EXPECT_EQ(orthogonality_identity_check(D, grid, Vec3::Zero(), Vec3(1, 0, 0)), 0.0);
    EXPECT_EQ(orthogonality_identity_check(D, grid, Vec3(1, 0, 0), Vec3::Zero()), 0.0);
    EXPECT_NEAR(orthogonality_identity_check(D, grid, Vec3(1, 0, 0), Vec3(0, 3, 0)), 0.0, 1e-15);
    EXPECT_NEAR(orthogonality_identity_check(D, grid, Vec3(1, 0, 0), Vec3(-2, 0, 0)), 1.0, 1e-15);
}

TEST(OrthogonalityIdentity, HoldsForTheBestSymmetricCandidate) {
    const LatLongGrid grid(64, 128);
    const Frame f = symmetric_view(64);
    const StationaryCandidate c = find_stationary_motion(f.y, f.D, grid, mean_depth(f.D, grid));
    EXPECT_LE(orthogonality_identity_check(f.D, grid, c.p_w, c.p_v), 0.05);
}
