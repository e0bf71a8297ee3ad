#include "bias_obs/camera_kinematics.hpp"

#include <gtest/gtest.h>

using namespace bias_obs;

namespace {

BodyTwist wobbly(double t) {
    return {Vec3(0.3 * std::cos(1.3 * t), 0.2 * std::sin(0.7 * t + 0.4), -0.25 * std::cos(2.1 * t)),
            Vec3(0.4 * std::sin(1.1 * t), -0.3 * std::cos(0.9 * t), 0.5 * std::sin(1.7 * t + 1.0))};
}

CameraPose integrate(double t_end, int steps) {
    CameraPose p;
    const double h = t_end / steps;
    for (int k = 0; k < steps; ++k) p = integrate_pose(p, wobbly, k * h, h);
    return p;
}

double pose_error(const CameraPose& a, const CameraPose& b) {
    return std::max(a.q.angularDistance(b.q), (a.C - b.C).norm());
}

} // namespace

TEST(IntegratePose, PureTranslation) {
    const CameraPose p = integrate_pose(CameraPose{}, BodyTwist{Vec3(1, 0, 0), Vec3::Zero()}, 0.1);
    EXPECT_LE(p.q.angularDistance(Quat::Identity()), 1e-15);
    EXPECT_LE((p.C - Vec3(0.1, 0, 0)).norm(), 1e-15);
}

TEST(IntegratePose, HalfTurnAboutZ) {
    const CameraPose p = integrate_pose(CameraPose{}, BodyTwist{Vec3::Zero(), Vec3(0, 0, kPi)}, 1.0);
    const Quat expect(Eigen::AngleAxisd(kPi, Vec3::UnitZ()));
    EXPECT_NEAR(std::abs(p.q.dot(expect)), 1.0, 1e-12);
    EXPECT_NEAR(p.q.norm(), 1.0, 1e-12);
}

TEST(IntegratePose, RotatedTranslationUsesWorldFrame) {
    CameraPose start;
    start.q = Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()));
    const CameraPose p = integrate_pose(start, BodyTwist{Vec3(1, 0, 0), Vec3::Zero()}, 0.5);
    EXPECT_LE((p.C - Vec3(0, 0.5, 0)).norm(), 1e-14);
}

TEST(IntegratePose, FourthOrderAgainstRefinedReference) {
    const double t_end = 2.0;
    const CameraPose ref = integrate(t_end, 4096);
    const double e1 = pose_error(integrate(t_end, 16), ref);
    const double e2 = pose_error(integrate(t_end, 32), ref);
    const double e3 = pose_error(integrate(t_end, 64), ref);
    EXPECT_GT(e1 / e2, 12.0);
    EXPECT_GT(e2 / e3, 12.0);
    EXPECT_LT(e3, 1e-7);
}

TEST(IntegratePose, QuaternionNormPreserved) {
    CameraPose p;
    const double h = 1e-3;
    double worst = 0.0;
    for (int k = 0; k < 100000; ++k) {
        p = integrate_pose(p, wobbly, k * h, h);
        worst = std::max(worst, std::abs(p.q.norm() - 1.0));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(IntegratePose, EnvelopeExitThrows) {
    const Envelope env = Envelope::around(Vec3::Zero(), 0.05);
    EXPECT_THROW(integrate_pose(CameraPose{}, BodyTwist{Vec3(1, 0, 0), Vec3::Zero()}, 0.1, env), EnvelopeExit);
    EXPECT_NO_THROW(integrate_pose(CameraPose{}, BodyTwist{Vec3(0.1, 0, 0), Vec3::Zero()}, 0.1, env));
}

TEST(MeasuredTwist, BiasExamples) {
    const NoiseSpec off;
    const BodyTwist m1 = measured_twist({Vec3(1, 0, 0), Vec3::Zero()}, {Vec3(2.5, 0, 0), Vec3::Zero()}, off, 0);
    EXPECT_EQ(m1.v, Vec3(3.5, 0, 0));
    const BodyTwist m2 = measured_twist({}, {Vec3::Zero(), Vec3(0.05, 0, 0)}, off, 0);
    EXPECT_EQ(m2.w, Vec3(0.05, 0, 0));
    const BodyTwist truth{Vec3(0.1, -0.2, 0.3), Vec3(-0.4, 0.5, 0.6)};
    const BodyTwist m3 = measured_twist(truth, {}, off, 7);
    EXPECT_EQ(m3.v, truth.v);
    EXPECT_EQ(m3.w, truth.w);
}

TEST(MeasuredTwist, NoiseStatisticsAndDeterminism) {
    NoiseSpec n;
    n.sigma_v = 0.05;
    n.sigma_w = 0.005;
    n.seed = 42;
    double sv = 0, sw = 0, mv = 0;
    const int frames = 20000;
    for (int k = 0; k < frames; ++k) {
        const BodyTwist m = measured_twist({}, {}, n, k);
        mv += m.v.sum();
        sv += m.v.squaredNorm();
        sw += m.w.squaredNorm();
    }
    EXPECT_NEAR(std::sqrt(sv / (3 * frames)), 0.05, 0.002);
    EXPECT_NEAR(std::sqrt(sw / (3 * frames)), 0.005, 0.0002);
    EXPECT_NEAR(mv / (3 * frames), 0.0, 0.002);
    const BodyTwist a = measured_twist({}, {}, n, 123), b = measured_twist({}, {}, n, 123);
    EXPECT_EQ(a.v, b.v);
    EXPECT_EQ(a.w, b.w);
}

TEST(SampleTrajectory, Examples) {
    TrajectoryProfile p;
    p.duration = 5.0;
    const BodyTwist z = sample_trajectory(p, 2.0);
    EXPECT_EQ(z.v, Vec3::Zero());
    EXPECT_EQ(z.w, Vec3::Zero());
    p.v[0] = {{0.3, 0.2, 0.0}};
    EXPECT_NEAR(sample_trajectory(p, 1.25).v.x(), 0.3, 1e-15);
    EXPECT_THROW(sample_trajectory(p, -0.1), OutOfRange);
    EXPECT_THROW(sample_trajectory(p, 5.5), OutOfRange);
}

TEST(SampleTrajectory, FiniteDifferenceMatchesDerivative) {
    const TrajectoryProfile p = default_trajectory();
    const double t = 3.7;
    std::vector<double> err;
    for (double h : {1e-2, 5e-3}) {
        const Vec3 fd = (sample_trajectory(p, t + h).v - sample_trajectory(p, t - h).v) / (2 * h);
        Vec3 exact;
        for (int c = 0; c < 3; ++c) exact[c] = p.v[c][0].derivative(t);
        err.push_back((fd - exact).norm());
    }
    EXPECT_LT(err[0], 1e-4);
    EXPECT_GT(err[0] / err[1], 3.5);
}

TEST(Trajectory, DefaultFitsCapsAndEnvelope) {
    TrajectoryProfile p = default_trajectory();
    EXPECT_NO_THROW(validate(p));
    EXPECT_LE(p.v_bound(), 0.5 + 1e-12);
    EXPECT_LE(p.w_bound(), 0.4);
    const auto poses = integrate_trajectory(p, CameraPose{Quat::Identity(), Vec3(0.5, 0, 0)},
                                            Envelope::around(Vec3(0.5, 0, 0), 0.5));
    EXPECT_EQ(poses.size(), p.frame_count());
    p.v_cap = 0.1;
    EXPECT_THROW(validate(p), BadConfig);
}
