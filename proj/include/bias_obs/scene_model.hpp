// Static convex scenes with Lambertian textures, ray casting and rendering
// of brightness/depth frames.
#pragma once

#include "bias_obs/camera_kinematics.hpp"
#include "bias_obs/parallel.hpp"
#include "bias_obs/sphere_geometry.hpp"

#include <functional>
#include <optional>
#include <variant>

namespace bias_obs {

struct Box {
    Vec3 center = Vec3::Zero();
    Vec3 half = Vec3::Ones(); // half extents, m
};

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
};

/// Closed surface swept by a profile polyline of (height, radius) pairs
/// around `axis` through `base`. Heights must be non-decreasing; the
/// profile is closed at both ends on the axis.
struct SurfaceOfRevolution {
    Vec3 base = Vec3::Zero();
    Vec3 axis = Vec3::UnitZ();
    std::vector<Eigen::Vector2d> profile;
};

using Surface = std::variant<Box, Sphere, SurfaceOfRevolution>;

/// Brightness at a surface point. `face` identifies the smooth patch
/// (box face 0..5, profile segment, 0 for the sphere).
using Texture = std::function<double(const Vec3& point, int face)>;

struct Scene {
    Surface surface;
    Texture texture;
    double d_star = 0.0; // lower bound of the camera-surface distance over the envelope
    // Symmetry axis for scenes built as axisymmetric.
    std::optional<std::pair<Vec3, Vec3>> symmetry_axis;
};

struct SurfaceHit {
    Vec3 point;
    double distance = 0.0;
    double brightness = 0.0;
    int face = 0;
};

namespace detail {

inline bool revolution_inside(const SurfaceOfRevolution& s, const Vec3& x, double margin = 0.0);

inline double revolution_radius_at(const SurfaceOfRevolution& s, double h) {
    const auto& p = s.profile;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const double h0 = p[i].x(), h1 = p[i + 1].x();
        if (h1 > h0 && h >= h0 && h <= h1) return p[i].y() + (p[i + 1].y() - p[i].y()) * (h - h0) / (h1 - h0);
    }
    return -1.0;
}

inline bool revolution_inside(const SurfaceOfRevolution& s, const Vec3& x, double margin) {
    const Vec3 d = x - s.base;
    const double h = d.dot(s.axis);
    const double rho = (d - h * s.axis).norm();
    const double r = revolution_radius_at(s, h);
    return r >= 0.0 && h > s.profile.front().x() + margin && h < s.profile.back().x() - margin &&
           rho < r - margin;
}

/// Distance from a point to a segment in the (height, radius) half-plane.
inline double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double l2 = ab.squaredNorm();
    const double s = l2 > 0.0 ? std::clamp((p - a).dot(ab) / l2, 0.0, 1.0) : 0.0;
    return (a + s * ab - p).norm();
}

/// All ray parameters t > 0 where o + t d meets the revolution surface,
/// with the segment index of each hit.
inline std::vector<std::pair<double, int>> revolution_hits(const SurfaceOfRevolution& s, const Vec3& o,
                                                           const Vec3& d) {
    std::vector<std::pair<double, int>> hits;
    const Vec3& a = s.axis;
    const Vec3 op = o - s.base;
    const double ho = op.dot(a), da = d.dot(a);
    const Vec3 o_perp = op - ho * a, d_perp = d - da * a;
    const double A = d_perp.squaredNorm(), B = o_perp.dot(d_perp), C = o_perp.squaredNorm();
    const double eps = 1e-10;
    const auto& p = s.profile;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const double h0 = p[i].x(), h1 = p[i + 1].x(), r0 = p[i].y(), r1 = p[i + 1].y();
        auto accept = [&](double t) {
            if (!(t > eps)) return;
            const double h = ho + t * da;
            if (h < std::min(h0, h1) - eps || h > std::max(h0, h1) + eps) return;
            const double rho = (o_perp + t * d_perp).norm();
            if (h1 == h0) {
                if (rho < std::min(r0, r1) - eps || rho > std::max(r0, r1) + eps) return;
            }
            hits.emplace_back(t, static_cast<int>(i));
        };
        if (h1 == h0) {
            if (std::abs(da) > 1e-15) accept((h0 - ho) / da);
            continue;
        }
        const double slope = (r1 - r0) / (h1 - h0);
        const double alpha = r0 + slope * (ho - h0), beta = slope * da;
        const double qa = A - beta * beta, qb = 2.0 * (B - alpha * beta), qc = C - alpha * alpha;
        auto accept_cone = [&](double t) {
            if (alpha + beta * t < -eps) return; // mirrored nappe
            accept(t);
        };
        if (std::abs(qa) < 1e-14) {
            if (std::abs(qb) > 1e-300) accept_cone(-qc / qb);
            continue;
        }
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc < 0.0) continue;
        const double sq_disc = std::sqrt(disc);
        // Numerically stable pair of roots.
        const double qq = -0.5 * (qb + std::copysign(sq_disc, qb));
        const double t1 = qq / qa;
        const double t2 = qq != 0.0 ? qc / qq : -qb / (2.0 * qa);
        accept_cone(t1);
        accept_cone(t2);
    }
    std::sort(hits.begin(), hits.end());
    // Hits on a shared vertex ring show up once per adjacent segment.
    std::vector<std::pair<double, int>> unique;
    for (const auto& h : hits) {
        if (unique.empty() || h.first - unique.back().first > 1e-9) unique.push_back(h);
    }
    return unique;
}

} // namespace detail

/// True if x lies strictly inside the closed surface.
inline bool is_interior(const Surface& surface, const Vec3& x) {
    return std::visit(
        [&](const auto& s) -> bool {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Box>) {
                return ((x - s.center).cwiseAbs().array() < s.half.array()).all();
            } else if constexpr (std::is_same_v<T, Sphere>) {
                return (x - s.center).norm() < s.radius;
            } else {
                return detail::revolution_inside(s, x);
            }
        },
        surface);
}

/// Euclidean distance from an interior point to the surface.
inline double distance_to_surface(const Surface& surface, const Vec3& x) {
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Box>) {
                return (s.half - (x - s.center).cwiseAbs()).minCoeff();
            } else if constexpr (std::is_same_v<T, Sphere>) {
                return s.radius - (x - s.center).norm();
            } else {
                const Vec3 d = x - s.base;
                const double h = d.dot(s.axis);
                const Eigen::Vector2d p(h, (d - h * s.axis).norm());
                double m = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i + 1 < s.profile.size(); ++i) {
                    m = std::min(m, detail::segment_distance(p, s.profile[i], s.profile[i + 1]));
                }
                return m;
            }
        },
        surface);
}

/// Certified lower bound of the distance to the surface for camera centres
/// in the envelope. The distance to the boundary of a convex body is a
/// concave function of the interior point, so its minimum over the box is
/// attained at a corner.
inline double certified_d_star(const Surface& surface, const Envelope& env) {
    if (!env.bounded()) throw BadConfig("trajectory envelope must be bounded");
    double m = std::numeric_limits<double>::infinity();
    for (const Vec3& c : env.corners()) {
        if (!is_interior(surface, c)) throw BadConfig("trajectory envelope reaches outside the scene");
        m = std::min(m, distance_to_surface(surface, c));
    }
    return m;
}

/// Number of distinct intersections of the ray with the surface.
inline std::size_t count_intersections(const Surface& surface, const Vec3& origin, const Vec3& dir) {
    if (const auto* rev = std::get_if<SurfaceOfRevolution>(&surface)) {
        return detail::revolution_hits(*rev, origin, dir.normalized()).size();
    }
    return 1;
}

inline SurfaceHit ray_cast(const Scene& scene, const Vec3& origin, const UnitDir& dir_world) {
    if (!is_interior(scene.surface, origin)) throw OriginOutside("ray origin is not inside the scene");
    const Vec3& d = dir_world.vec();
    SurfaceHit hit;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Box>) {
                const Vec3 o = origin - s.center;
                double best = std::numeric_limits<double>::infinity();
                for (int c = 0; c < 3; ++c) {
                    if (d[c] == 0.0) continue;
                    const double t = ((d[c] > 0.0 ? s.half[c] : -s.half[c]) - o[c]) / d[c];
                    if (t < best) {
                        best = t;
                        hit.face = 2 * c + (d[c] > 0.0 ? 1 : 0);
                    }
                }
                hit.distance = best;
            } else if constexpr (std::is_same_v<T, Sphere>) {
                const Vec3 o = origin - s.center;
                const double b = o.dot(d);
                hit.distance = -b + std::sqrt(b * b - (o.squaredNorm() - s.radius * s.radius));
                hit.face = 0;
            } else {
                const auto hits = detail::revolution_hits(s, origin, d);
                if (hits.empty()) throw NumericError("ray missed the surface of revolution");
                hit.distance = hits.front().first;
                hit.face = hits.front().second;
            }
        },
        scene.surface);
    hit.point = origin + hit.distance * d;
    hit.brightness = scene.texture(hit.point, hit.face);
    return hit;
}

struct Frame {
    ScalarField y;
    ScalarField D;
};

inline constexpr double kBrightnessMin = 1.0;
inline constexpr double kBrightnessMax = 256.0;
inline constexpr double kDepthClamp = 1e-3;

/// Renders brightness and depth seen from `pose` on any chart grid. Noise
/// draws are keyed on (noise.seed, frame).
template <class Grid>
Frame render(const Scene& scene, const CameraPose& pose, const Grid& grid, const NoiseSpec& noise = {},
             std::uint64_t frame = 0) {
    if (!is_interior(scene.surface, pose.C)) throw OriginOutside("camera centre is not inside the scene");
    Frame out{grid.make_field(), grid.make_field()};
    const Mat3 r = pose.q.normalized().toRotationMatrix();
    parallel_for(grid.size(), [&](std::size_t k) {
        const SurfaceHit h = ray_cast(scene, pose.C, UnitDir(r * grid.dir(k).vec()));
        out.y[k] = h.brightness;
        out.D[k] = h.distance;
    });
    if (noise.sigma_y > 0.0) {
        auto eng = noise_engine(noise.seed, noise_stream::kBrightness, frame);
        std::normal_distribution<double> n;
        for (auto& v : out.y.data) v += noise.sigma_y * n(eng);
    }
    if (noise.sigma_D > 0.0) {
        auto eng = noise_engine(noise.seed, noise_stream::kDepth, frame);
        std::normal_distribution<double> n;
        for (auto& v : out.D.data) v += noise.sigma_D * n(eng);
    }
    for (auto& v : out.y.data) v = std::clamp(v, kBrightnessMin, kBrightnessMax);
    for (auto& v : out.D.data) v = std::max(v, kDepthClamp);
    return out;
}

struct RoomConfig {
    Vec3 size = Vec3(4.0, 3.0, 2.5); // full extents, m
    Vec3 center = Vec3::Zero();
    double amplitude = 100.0;        // grey levels
    double freq_h = 0.5;             // 1/m
    double freq_v = 0.5;             // 1/m
    Envelope envelope = Envelope::around(Vec3(0.5, 0.0, 0.0), 0.5);
};

/// Sinusoidal wall texture in wall-local metres (u, v) measured from the
/// face's minimum corner. Walls use (horizontal, height); floor and ceiling
/// use (x, y).
inline Texture room_texture(const Box& box, double amplitude, double freq_h, double freq_v) {
    const Vec3 lo = box.center - box.half;
    return [=](const Vec3& p, int face) {
        const int axis = face / 2;
        double u = 0.0, v = 0.0;
        if (axis == 0) {
            u = p.y() - lo.y();
            v = p.z() - lo.z();
        } else if (axis == 1) {
            u = p.x() - lo.x();
            v = p.z() - lo.z();
        } else {
            u = p.x() - lo.x();
            v = p.y() - lo.y();
        }
        return 128.5 + amplitude * std::sin(2.0 * kPi * freq_h * u) * std::sin(2.0 * kPi * freq_v * v);
    };
}

inline Scene make_room_scene(const RoomConfig& cfg) {
    if (!((cfg.size.array() > 0.0).all()) || !cfg.size.allFinite()) {
        throw BadConfig("room dimensions must be positive");
    }
    if (!(cfg.freq_h > 0.0) || !(cfg.freq_v > 0.0)) throw BadConfig("texture frequencies must be positive");
    if (!(std::abs(cfg.amplitude) <= 127.5)) throw BadConfig("texture amplitude must not exceed 127.5");
    Box box{cfg.center, 0.5 * cfg.size};
    Scene s{box, room_texture(box, cfg.amplitude, cfg.freq_h, cfg.freq_v), 0.0, std::nullopt};
    s.d_star = certified_d_star(s.surface, cfg.envelope);
    return s;
}

/// Texture as a function of (distance to axis, height along axis).
using AxisymmetricTexture = std::function<double(double rho, double height)>;

namespace detail {

inline Texture revolve_texture(const Vec3& base, const Vec3& axis, AxisymmetricTexture tex) {
    return [=](const Vec3& p, int) {
        const Vec3 d = p - base;
        const double h = d.dot(axis);
        return tex((d - h * axis).norm(), h);
    };
}

/// Samples the texture on surface points and their rotations about the
/// axis; any azimuthal variation is rejected.
inline void check_axisymmetric(const Scene& s, const Vec3& inner_point, const Vec3& base, const Vec3& axis) {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
    double scale = 1.0;
    for (int k = 0; k < 64; ++k) {
        const Vec3 dir = Vec3(n(rng), n(rng), n(rng)).normalized();
        const SurfaceHit h = ray_cast(s, inner_point, UnitDir(dir));
        scale = std::max(scale, std::abs(h.brightness));
        for (int r = 0; r < 4; ++r) {
            const Eigen::AngleAxisd rot(ang(rng), axis);
            const Vec3 q = base + rot * (h.point - base);
            if (std::abs(s.texture(q, h.face) - h.brightness) > 1e-9 * scale) {
                throw NotAxisymmetric("texture varies with azimuth about the symmetry axis");
            }
        }
    }
}

inline void close_and_check_profile(std::vector<Eigen::Vector2d>& p) {
    if (p.size() < 2) throw NonConvexProfile("profile needs at least two points");
    for (const auto& q : p) {
        if (!q.allFinite() || q.y() < 0.0) throw NonConvexProfile("profile radii must be finite and non-negative");
    }
    if (p.front().y() > 0.0) p.insert(p.begin(), Eigen::Vector2d(p.front().x(), 0.0));
    if (p.back().y() > 0.0) p.push_back(Eigen::Vector2d(p.back().x(), 0.0));
    for (std::size_t i = 1; i + 1 < p.size(); ++i) {
        if (!(p[i].y() > 0.0)) throw NonConvexProfile("profile touches the axis between its ends");
    }
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        if (p[i + 1].x() < p[i].x()) throw NonConvexProfile("profile heights must be non-decreasing");
        if (p[i + 1].x() == p[i].x() && i != 0 && i + 2 != p.size()) {
            throw NonConvexProfile("flat profile segments are only allowed at the ends");
        }
    }
    // Walking up the axis the outline must turn clockwise in (height, radius).
    for (std::size_t i = 0; i + 2 < p.size(); ++i) {
        const Eigen::Vector2d e0 = p[i + 1] - p[i], e1 = p[i + 2] - p[i + 1];
        const double cross = e0.x() * e1.y() - e0.y() * e1.x();
        if (cross > 1e-12 * e0.norm() * e1.norm()) throw NonConvexProfile("profile is not convex");
    }
    if (!(p.back().x() > p.front().x())) throw NonConvexProfile("profile has zero height");
}

} // namespace detail

/// Surface of revolution about `axis` through `base` with a texture that
/// depends only on (distance to axis, height).
inline Scene make_axisymmetric_scene(const UnitDir& axis, const Vec3& base, std::vector<Eigen::Vector2d> profile,
                                     AxisymmetricTexture texture, const Envelope& envelope) {
    detail::close_and_check_profile(profile);
    SurfaceOfRevolution surf{base, axis.vec(), std::move(profile)};
    Scene s{surf, detail::revolve_texture(base, axis.vec(), std::move(texture)), 0.0,
            std::make_pair(base, axis.vec())};
    s.d_star = certified_d_star(s.surface, envelope);
    return s;
}

/// Sphere with a texture revolved about `axis` through the sphere centre.
inline Scene make_axisymmetric_scene(const UnitDir& axis, const Sphere& sphere, AxisymmetricTexture texture,
                                     const Envelope& envelope) {
    if (!(sphere.radius > 0.0)) throw BadConfig("sphere radius must be positive");
    Scene s{sphere, detail::revolve_texture(sphere.center, axis.vec(), std::move(texture)), 0.0,
            std::make_pair(sphere.center, axis.vec())};
    s.d_star = certified_d_star(s.surface, envelope);
    return s;
}

/// Validates a general texture as axisymmetric about (base, axis) before
/// wrapping it into a scene.
inline Scene make_axisymmetric_scene(const UnitDir& axis, const Vec3& base, const Surface& surface, Texture texture,
                                     const Envelope& envelope) {
    Scene s{surface, std::move(texture), 0.0, std::make_pair(base, axis.vec())};
    if (auto* rev = std::get_if<SurfaceOfRevolution>(&s.surface)) {
        detail::close_and_check_profile(rev->profile);
        if ((rev->axis.normalized() - axis.vec()).norm() > 1e-12 && (rev->axis.normalized() + axis.vec()).norm() > 1e-12) {
            throw NotAxisymmetric("surface axis differs from the requested symmetry axis");
        }
        rev->axis = rev->axis.normalized();
    } else if (std::holds_alternative<Box>(s.surface)) {
        throw NotAxisymmetric("a box is not a surface of revolution");
    }
    s.d_star = certified_d_star(s.surface, envelope);
    Vec3 inner = base;
    if (const auto* rev = std::get_if<SurfaceOfRevolution>(&s.surface)) {
        inner = rev->base + rev->axis * 0.5 * (rev->profile.front().x() + rev->profile.back().x());
    } else if (const auto* sph = std::get_if<Sphere>(&s.surface)) {
        inner = sph->center;
        if ((base - sph->center).cross(axis.vec()).norm() > 1e-12) {
            throw NotAxisymmetric("symmetry axis does not pass through the sphere centre");
        }
    }
    detail::check_axisymmetric(s, inner, base, axis.vec());
    return s;
}

/// Sphere with an arbitrary texture (no symmetry claimed).
inline Scene make_sphere_scene(const Sphere& sphere, Texture texture, const Envelope& envelope) {
    if (!(sphere.radius > 0.0)) throw BadConfig("sphere radius must be positive");
    Scene s{sphere, std::move(texture), 0.0, std::nullopt};
    s.d_star = certified_d_star(s.surface, envelope);
    return s;
}

} // namespace bias_obs
