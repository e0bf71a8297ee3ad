#include "bias_obs/scene_model.hpp"

#include <gtest/gtest.h>

using namespace bias_obs;

namespace {

Scene box_scene(double half, double amplitude = 100.0) {
    RoomConfig cfg;
    cfg.size = Vec3::Constant(2 * half);
    cfg.amplitude = amplitude;
    cfg.envelope = Envelope::around(Vec3::Zero(), 0.1);
    return make_room_scene(cfg);
}

// Barrel: convex revolution surface about the z axis.
std::vector<Eigen::Vector2d> barrel_profile() {
    return {{-1.5, 0.0}, {-1.5, 0.8}, {-0.75, 1.1}, {0.0, 1.2}, {0.75, 1.1}, {1.5, 0.8}, {1.5, 0.0}};
}

double ring_texture(double rho, double h) { return 128.5 + 60 * std::sin(3 * h) + 30 * std::cos(2 * rho); }

Quat looking_along(const Vec3& forward, const Vec3& up) {
    const Vec3 z = forward.normalized();
    const Vec3 y = (-up + up.dot(z) * z).normalized();
    Mat3 r;
    r.col(0) = y.cross(z);
    r.col(1) = y;
    r.col(2) = z;
    return Quat(r);
}

} // namespace

TEST(RayCast, BoxExamples) {
    const Scene s = box_scene(2.0);
    EXPECT_NEAR(ray_cast(s, Vec3::Zero(), UnitDir(0, 0, 1)).distance, 2.0, 1e-15);
    EXPECT_NEAR(ray_cast(s, Vec3::Zero(), pinhole_to_sphere(0.5, 0.5)).distance, 2 * std::sqrt(1.5), 1e-12);
    EXPECT_THROW(ray_cast(s, Vec3(3, 0, 0), UnitDir(0, 0, 1)), OriginOutside);
}

TEST(RayCast, SphereDistanceIsRadius) {
    const Scene s = make_sphere_scene({Vec3(1, 2, 3), 2.5}, [](const Vec3&, int) { return 100.0; },
                                      Envelope::around(Vec3(1, 2, 3), 0.1));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int k = 0; k < 100; ++k) {
        const SurfaceHit h = ray_cast(s, Vec3(1, 2, 3), UnitDir(n(rng), n(rng), n(rng)));
        EXPECT_NEAR(h.distance, 2.5, 1e-12);
        EXPECT_NEAR((h.point - Vec3(1, 2, 3)).norm(), 2.5, 1e-9);
    }
}

TEST(RayCast, RevolutionHitsLieOnSurface) {
    const Scene s = make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), barrel_profile(), ring_texture,
                                            Envelope::around(Vec3::Zero(), 0.2));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int k = 0; k < 500; ++k) {
        const Vec3 o(0.3 * n(rng), 0.3 * n(rng), 0.5 * n(rng));
        if (!is_interior(s.surface, o)) continue;
        const SurfaceHit h = ray_cast(s, o, UnitDir(n(rng), n(rng), n(rng)));
        EXPECT_LE(distance_to_surface(s.surface, h.point), 1e-9);
    }
}

TEST(RayCast, ConvexScenesHaveExactlyOneIntersection) {
    const Scene s = make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), barrel_profile(), ring_texture,
                                            Envelope::around(Vec3::Zero(), 0.2));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    int tested = 0;
    while (tested < 10000) {
        const Vec3 o(u(rng) * 0.8, u(rng) * 0.8, u(rng));
        if (!is_interior(s.surface, o)) continue;
        ++tested;
        ASSERT_EQ(count_intersections(s.surface, o, Vec3(n(rng), n(rng), n(rng))), 1u);
    }
}

TEST(Render, CenterPixelAtBoxCenter) {
    const Scene s = box_scene(2.0);
    PinholeGrid g(41, 31, 0.8, 0.6);
    const Frame f = render(s, CameraPose{}, g);
    const SurfaceHit h = ray_cast(s, Vec3::Zero(), UnitDir(0, 0, 1));
    EXPECT_DOUBLE_EQ(f.D(20, 15), 2.0);
    EXPECT_DOUBLE_EQ(f.y(20, 15), h.brightness);
}

TEST(Render, NoiselessIsDeterministic) {
    const Scene s = box_scene(2.0);
    PinholeGrid g(32, 24, 0.8, 0.6);
    NoiseSpec n;
    n.seed = 9;
    const CameraPose pose{Quat(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized())), Vec3(0.05, 0, -0.02)};
    const Frame a = render(s, pose, g, n, 4), b = render(s, pose, g, n, 4);
    EXPECT_EQ(a.y.data, b.y.data);
    EXPECT_EQ(a.D.data, b.D.data);
}

TEST(Render, BrightnessNoiseHasPaperSigma) {
    const Scene s = box_scene(2.0, 0.0);
    PinholeGrid g(400, 250, 0.9, 0.7);
    NoiseSpec n;
    n.sigma_y = 30.0;
    n.seed = 1234;
    const Frame clean = render(s, CameraPose{}, g);
    const Frame noisy = render(s, CameraPose{}, g, n, 0);
    double s2 = 0;
    for (std::size_t k = 0; k < g.size(); ++k) s2 += sq(noisy.y[k] - clean.y[k]);
    const double sd = std::sqrt(s2 / static_cast<double>(g.size()));
    EXPECT_GE(sd, 29.0);
    EXPECT_LE(sd, 31.0);
    const Frame again = render(s, CameraPose{}, g, n, 0);
    EXPECT_EQ(again.y.data, noisy.y.data);
    const Frame other = render(s, CameraPose{}, g, n, 1);
    EXPECT_NE(other.y.data, noisy.y.data);
}

TEST(Render, ClampsBrightnessAndDepth) {
    const Scene s = box_scene(2.0);
    PinholeGrid g(64, 48, 0.9, 0.7);
    NoiseSpec n;
    n.sigma_y = 300.0;
    n.sigma_D = 50.0;
    const Frame f = render(s, CameraPose{}, g, n, 0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        EXPECT_GE(f.y[k], 1.0);
        EXPECT_LE(f.y[k], 256.0);
        EXPECT_GE(f.D[k], 1e-3);
    }
}

TEST(RoomScene, TextureExamples) {
    const Box box{Vec3::Zero(), Vec3(2, 1.5, 1.25)};
    const Texture flat = room_texture(box, 0.0, 0.5, 0.5);
    EXPECT_DOUBLE_EQ(flat(Vec3(2, 0.3, -0.1), 1), 128.5);
    EXPECT_DOUBLE_EQ(flat(Vec3(-1, 1.5, 0.7), 3), 128.5);
    const Texture t = room_texture(box, 100.0, 0.25, 0.25);
    // Wall x = +2: u = y + 1.5, v = z + 1.25; wall-local (1, 1).
    EXPECT_NEAR(t(Vec3(2.0, -0.5, -0.25), 1), 228.5, 1e-12);
}

TEST(RoomScene, RejectsBadConfig) {
    RoomConfig c;
    c.size = Vec3(4, -3, 2.5);
    EXPECT_THROW(make_room_scene(c), BadConfig);
    c = RoomConfig{};
    c.freq_h = 0.0;
    EXPECT_THROW(make_room_scene(c), BadConfig);
    c = RoomConfig{};
    c.amplitude = 130.0;
    EXPECT_THROW(make_room_scene(c), BadConfig);
}

TEST(RoomScene, DefaultViewMinDepthIsWallDistance) {
    const Scene s = make_room_scene(RoomConfig{});
    const CameraPose pose{looking_along(Vec3::UnitX(), Vec3::UnitZ()), Vec3(0.5, 0, 0)};
    PinholeGrid g(161, 121, 50 * kPi / 180, 40 * kPi / 180);
    const Frame f = render(s, pose, g);
    const double dmin = *std::min_element(f.D.data.begin(), f.D.data.end());
    EXPECT_NEAR(dmin, 1.5, 1e-12);
    // Only the far wall is visible.
    for (std::size_t k = 0; k < g.size(); ++k) {
        EXPECT_EQ(ray_cast(s, pose.C, UnitDir(pose.q * g.dir(k).vec())).face, 1);
    }
    // Floor and ceiling at 1.25 m, envelope reaches 0.5 m towards them.
    EXPECT_NEAR(s.d_star, 0.75, 1e-12);
}

TEST(RoomScene, DepthStaysAboveDStarInEnvelope) {
    const Scene s = make_room_scene(RoomConfig{});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PinholeGrid g(40, 30, 50 * kPi / 180, 40 * kPi / 180);
    const Envelope env = RoomConfig{}.envelope;
    for (int k = 0; k < 30; ++k) {
        const Vec3 c = env.lo + (env.hi - env.lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
        const CameraPose pose{Quat::UnitRandom(), c};
        const Frame f = render(s, pose, g);
        for (double d : f.D.data) EXPECT_GE(d, s.d_star);
    }
}

TEST(Axisymmetric, ConstantSphereAcceptsAnyAxis) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    const Sphere sph{Vec3::Zero(), 2.0};
    for (int k = 0; k < 5; ++k) {
        const UnitDir axis(n(rng), n(rng), n(rng));
        EXPECT_NO_THROW(make_axisymmetric_scene(axis, Vec3::Zero(), sph, [](const Vec3&, int) { return 77.0; },
                                                Envelope::around(Vec3::Zero(), 0.5)));
    }
}

TEST(Axisymmetric, AzimuthalTextureRejected) {
    const Sphere sph{Vec3::Zero(), 2.0};
    auto tex = [](const Vec3& p, int) { return 128.5 + 50 * std::atan2(p.y(), p.x()); };
    EXPECT_THROW(make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), sph, tex, Envelope::around(Vec3::Zero(), 0.5)),
                 NotAxisymmetric);
    SurfaceOfRevolution rev{Vec3::Zero(), Vec3::UnitZ(), barrel_profile()};
    EXPECT_THROW(make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), rev, tex, Envelope::around(Vec3::Zero(), 0.2)),
                 NotAxisymmetric);
    auto ok = [](const Vec3& p, int) { return ring_texture(p.head<2>().norm(), p.z()); };
    EXPECT_NO_THROW(make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), rev, ok, Envelope::around(Vec3::Zero(), 0.2)));
}

TEST(Axisymmetric, NonConvexProfileRejected) {
    std::vector<Eigen::Vector2d> waist = {{-1, 0}, {-1, 1}, {0, 0.5}, {1, 1}, {1, 0}};
    EXPECT_THROW(make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), waist, ring_texture,
                                         Envelope::around(Vec3::Zero(), 0.1)),
                 NonConvexProfile);
    std::vector<Eigen::Vector2d> backwards = {{1, 0}, {0, 1}, {-1, 0}};
    EXPECT_THROW(make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), backwards, ring_texture,
                                         Envelope::around(Vec3::Zero(), 0.1)),
                 NonConvexProfile);
}

TEST(Axisymmetric, OnAxisRenderInvariantUnderImageRotation) {
    const Scene s = make_axisymmetric_scene(UnitDir(0, 0, 1), Vec3::Zero(), barrel_profile(), ring_texture,
                                            Envelope::around(Vec3::Zero(), 0.2));
    // Optical axis along the symmetry axis; square pixels and field of view.
    const CameraPose pose{Quat::Identity(), Vec3(0, 0, -0.3)};
    PinholeGrid g(81, 81, 1.2, 1.2);
    const Frame f = render(s, pose, g);
    // Quarter turn maps the grid onto itself.
    for (std::size_t j = 0; j < 81; ++j) {
        for (std::size_t i = 0; i < 81; ++i) {
            EXPECT_NEAR(f.D(i, j), f.D(80 - j, i), 1e-12);
            EXPECT_NEAR(f.y(i, j), f.y(80 - j, i), 1e-9);
        }
    }
    // Generic angle: bilinear samples at the rotated pixel agree up to the
    // interpolation error. Depth has kinks along the profile vertex rings,
    // so the error shrinks at first order there.
    auto rotated_mismatch = [&](std::size_t n) {
        PinholeGrid gg(n, n, 1.2, 1.2);
        const Frame ff = render(s, pose, gg);
        const double ang = 0.4;
        double worst = 0.0;
        for (std::size_t j = n / 4; j < 3 * n / 4; ++j) {
            for (std::size_t i = n / 4; i < 3 * n / 4; ++i) {
                const Vec3 e = Eigen::AngleAxisd(ang, Vec3::UnitZ()) * gg.dir(i, j).vec();
                double fi = 0, fj = 0;
                if (!gg.locate(e, fi, fj)) continue;
                worst = std::max(worst, std::abs(gg.sample_bilinear(ff.D, fi, fj) - ff.D(i, j)));
            }
        }
        return worst;
    };
    const double coarse = rotated_mismatch(81), fine = rotated_mismatch(161);
    EXPECT_LE(coarse, 1e-2);
    EXPECT_GT(coarse / fine, 1.7);
}

TEST(Scene, BrightnessIsPoseIndependent) {
    const Scene s = make_room_scene(RoomConfig{});
    PinholeGrid g(64, 48, 50 * kPi / 180, 40 * kPi / 180);
    const CameraPose p1{looking_along(Vec3::UnitX(), Vec3::UnitZ()), Vec3(0.5, 0, 0)};
    const CameraPose p2{looking_along(Vec3(1, 0.15, -0.1), Vec3::UnitZ()), Vec3(0.3, 0.2, 0.1)};
    const Frame f1 = render(s, p1, g);
    const Frame f2 = render(s, p2, g);
    double worst_exact = 0.0, worst_interp = 0.0;
    for (std::size_t j = 4; j < 44; j += 3) {
        for (std::size_t i = 4; i < 60; i += 3) {
            const SurfaceHit h = ray_cast(s, p1.C, UnitDir(p1.q * g.dir(i, j).vec()));
            const Vec3 eta2 = p2.to_camera((h.point - p2.C).normalized());
            const SurfaceHit h2 = ray_cast(s, p2.C, UnitDir(p2.q * eta2));
            worst_exact = std::max(worst_exact, std::abs(h2.brightness - f1.y(i, j)));
            EXPECT_NEAR(h2.distance, (h.point - p2.C).norm(), 1e-9);
            double fi = 0, fj = 0;
            if (g.locate(eta2, fi, fj)) {
                worst_interp = std::max(worst_interp, std::abs(g.sample_bilinear(f2.y, fi, fj) - f1.y(i, j)));
            }
        }
    }
    EXPECT_LE(worst_exact, 1e-9);
    // Bilinear error bound: |f''| h^2 / 8 per axis; texture second
    // derivative <= A (2 pi f)^2 (sum of two axes), pixel footprint ~ 2.2 cm.
    const double pix = 2.2 * 0.0145;
    EXPECT_LE(worst_interp, 2 * 100 * sq(2 * kPi * 0.5) * pix * pix / 8 + 1e-9);
}

TEST(Scene, ApproachAlongOpticalAxisReducesDepth) {
    const Scene s = make_room_scene(RoomConfig{});
    PinholeGrid g(21, 21, 0.5, 0.5);
    CameraPose pose{looking_along(Vec3::UnitX(), Vec3::UnitZ()), Vec3(0.5, 0, 0)};
    double prev = render(s, pose, g).D(10, 10);
    for (int k = 0; k < 10; ++k) {
        pose = integrate_pose(pose, BodyTwist{Vec3(0, 0, 0.2), Vec3::Zero()}, 0.1);
        const double d = render(s, pose, g).D(10, 10);
        EXPECT_LT(d, prev);
        prev = d;
    }
}

TEST(Scene, RotationInvariance) {
    const Mat3 r = Quat(Eigen::AngleAxisd(0.9, Vec3(0.3, -1, 0.5).normalized())).toRotationMatrix();
    auto tex = [](const Vec3& p, int) { return 128.5 + 50 * std::sin(2 * p.x() + p.y()) * std::cos(1.5 * p.z()); };
    const Scene a = make_sphere_scene({Vec3(0.1, 0.2, -0.1), 2.0}, tex, Envelope::around(Vec3::Zero(), 0.3));
    const Scene b = make_sphere_scene({r * Vec3(0.1, 0.2, -0.1), 2.0},
                                      [=](const Vec3& p, int f) { return tex(r.transpose() * p, f); },
                                      Envelope::around(Vec3::Zero(), 0.3));
    const CameraPose pa{Quat(Eigen::AngleAxisd(0.2, Vec3::UnitY())), Vec3(0.2, -0.1, 0.1)};
    const CameraPose pb{Quat(r) * pa.q, r * pa.C};
    PinholeGrid g(48, 36, 0.9, 0.7);
    const Frame fa = render(a, pa, g), fb = render(b, pb, g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        EXPECT_NEAR(fa.D[k], fb.D[k], 1e-10);
        EXPECT_NEAR(fa.y[k], fb.y[k], 1e-10);
    }
}

TEST(Scene, FullSphereRender) {
    const Scene s = box_scene(2.0);
    LatLongGrid g(32, 64);
    const Frame f = render(s, CameraPose{}, g);
    double dmin = 1e9, dmax = 0;
    for (double d : f.D.data) {
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    EXPECT_GE(dmin, 2.0);
    EXPECT_LE(dmax, 2 * std::sqrt(3.0) + 1e-12);
}
