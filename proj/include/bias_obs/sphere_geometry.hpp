// Differential calculus on the unit sphere and the two sampling charts
// (pinhole window, full-sphere latitude/longitude) used by the observers.
#pragma once

#include "bias_obs/core.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cassert>
#include <span>
#include <string>
#include <vector>

namespace bias_obs {

/// A pixel direction: a point of S^2. Always renormalized on construction.
class UnitDir {
public:
    UnitDir() : v_(0.0, 0.0, 1.0) {}
    explicit UnitDir(const Vec3& v) : v_(v.normalized()) {}
    UnitDir(double x, double y, double z) : UnitDir(Vec3(x, y, z)) {}

    const Vec3& vec() const { return v_; }
    operator const Vec3&() const { return v_; }
    double x() const { return v_.x(); }
    double y() const { return v_.y(); }
    double z() const { return v_.z(); }

private:
    Vec3 v_;
};

/// A vector tangent to S^2 at `base`.
struct TangentVec {
    UnitDir base;
    Vec3 v = Vec3::Zero();
};

/// Gradient on S^2 of eta -> eta.P, i.e. -eta x (eta x P) = P - (eta.P) eta.
inline TangentVec grad_dot(const UnitDir& eta, const Vec3& p) {
    const Vec3& e = eta.vec();
    return {eta, -e.cross(e.cross(p))};
}

/// Laplace-Beltrami of eta -> eta.P.
inline double laplacian_dot(const UnitDir& eta, const Vec3& p) { return -2.0 * eta.vec().dot(p); }

/// Divergence of the rotation field eta -> eta x P. Identically zero.
inline double div_cross(const UnitDir& /*eta*/, const Vec3& /*p*/) { return 0.0; }

inline UnitDir pinhole_to_sphere(double z1, double z2) { return UnitDir(z1, z2, 1.0); }

/// Chart inverse z = (x/z, y/z); only meaningful for eta.z > 0.
inline Eigen::Vector2d sphere_to_pinhole(const UnitDir& eta) {
    return {eta.x() / eta.z(), eta.y() / eta.z()};
}

/// Scalar samples on a chart grid, stored row-major (row 0 first).
struct ScalarField {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> data;

    ScalarField() = default;
    ScalarField(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), data(w * h, fill) {}

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t k) { return data[k]; }
    double operator[](std::size_t k) const { return data[k]; }
    double& operator()(std::size_t i, std::size_t j) { return data[j * width + i]; }
    double operator()(std::size_t i, std::size_t j) const { return data[j * width + i]; }
    bool same_shape(const ScalarField& o) const { return width == o.width && height == o.height; }
};

/// Chart-partial stencil for pinhole images.
enum class Stencil { Sobel, Central };

/// Samples with a true entry take part in the evolution; others are frozen.
using Mask = std::vector<unsigned char>;

namespace detail {

/// Dual basis of a chart at one sample: the unique tangent vectors b1, b2
/// with b_a . d(eta)/dz_b = delta_ab and b_a . eta = 0. A field gradient is
/// then b1 * df/dz1 + b2 * df/dz2.
struct ChartFrame {
    Vec3 b1;
    Vec3 b2;
};

inline ChartFrame dual_basis(const Vec3& eta, const Vec3& deta1, const Vec3& deta2) {
    Mat3 m;
    m.row(0) = eta.transpose();
    m.row(1) = deta1.transpose();
    m.row(2) = deta2.transpose();
    const double scale = deta1.norm() * deta2.norm();
    if (!(std::abs(m.determinant()) > 1e-14 * scale)) {
        throw SingularChart("chart Jacobian is singular");
    }
    const Mat3 inv = m.inverse();
    return {inv.col(1), inv.col(2)};
}

/// Solid angle of the tangent-plane rectangle [a1,a2]x[b1,b2] at distance 1.
inline double rectangle_solid_angle(double a1, double a2, double b1, double b2) {
    auto f = [](double a, double b) { return std::atan(a * b / std::sqrt(1.0 + a * a + b * b)); };
    return f(a2, b2) - f(a1, b2) - f(a2, b1) + f(a1, b1);
}

} // namespace detail

/// Rectangular pixel grid of a pinhole camera. Pixel (i, j) sits at
/// chart coordinates (z1(i), z2(j)); row 0 is the top image row and z2 grows
/// downward. Pixel centers span [-tan(fov/2), tan(fov/2)] on both axes.
class PinholeGrid {
public:
    PinholeGrid(std::size_t width, std::size_t height, double fov_h, double fov_v,
                Stencil stencil = Stencil::Sobel)
        : width_(width), height_(height), fov_h_(fov_h), fov_v_(fov_v), stencil_(stencil) {
        if (width < 3 || height < 3) throw BadConfig("pinhole grid needs at least 3x3 pixels");
        if (!(fov_h > 0.0 && fov_h < kPi && fov_v > 0.0 && fov_v < kPi)) {
            throw BadConfig("pinhole field of view must lie in (0, pi)");
        }
        half1_ = std::tan(0.5 * fov_h);
        half2_ = std::tan(0.5 * fov_v);
        dz1_ = 2.0 * half1_ / static_cast<double>(width - 1);
        dz2_ = 2.0 * half2_ / static_cast<double>(height - 1);
        const std::size_t n = width * height;
        dirs_.resize(n);
        frames_.resize(n);
        weights_.resize(n);
        for (std::size_t j = 0; j < height; ++j) {
            for (std::size_t i = 0; i < width; ++i) {
                const double a = z1(i), b = z2(j);
                const double r2 = 1.0 + a * a + b * b;
                const double r = std::sqrt(r2);
                const std::size_t k = j * width + i;
                dirs_[k] = UnitDir(Vec3(a, b, 1.0) / r);
                const Vec3 u(a, b, 1.0);
                const Vec3 d1 = Vec3::UnitX() / r - u * (a / (r2 * r));
                const Vec3 d2 = Vec3::UnitY() / r - u * (b / (r2 * r));
                frames_[k] = detail::dual_basis(dirs_[k].vec(), d1, d2);
                weights_[k] = dz1_ * dz2_ / (r2 * r);
            }
        }
    }

    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }
    std::size_t size() const { return dirs_.size(); }
    double fov_h() const { return fov_h_; }
    double fov_v() const { return fov_v_; }
    double dz1() const { return dz1_; }
    double dz2() const { return dz2_; }
    Stencil stencil() const { return stencil_; }
    PinholeGrid with_stencil(Stencil s) const {
        PinholeGrid g = *this;
        g.stencil_ = s;
        return g;
    }

    double z1(std::size_t i) const { return -half1_ + static_cast<double>(i) * dz1_; }
    double z2(std::size_t j) const { return -half2_ + static_cast<double>(j) * dz2_; }
    const UnitDir& dir(std::size_t k) const { return dirs_[k]; }
    const UnitDir& dir(std::size_t i, std::size_t j) const { return dirs_[j * width_ + i]; }
    double weight(std::size_t k) const { return weights_[k]; }
    double quad_weight(std::size_t i, std::size_t j) const { return weights_[j * width_ + i]; }
    const detail::ChartFrame& frame(std::size_t k) const { return frames_[k]; }
    ScalarField make_field(double fill = 0.0) const { return ScalarField(width_, height_, fill); }

    /// Exact solid angle covered by the pixel cells (centers +- half a pixel).
    double cell_solid_angle() const {
        return detail::rectangle_solid_angle(-half1_ - 0.5 * dz1_, half1_ + 0.5 * dz1_,
                                             -half2_ - 0.5 * dz2_, half2_ + 0.5 * dz2_);
    }
    /// Exact solid angle of the nominal field of view.
    double fov_solid_angle() const {
        return detail::rectangle_solid_angle(-half1_, half1_, -half2_, half2_);
    }

    /// Fractional pixel coordinates of a camera-frame direction. Returns
    /// false when the direction is behind the camera or outside the frame.
    bool locate(const Vec3& eta, double& fi, double& fj) const {
        if (eta.z() <= 1e-12) return false;
        fi = (eta.x() / eta.z() + half1_) / dz1_;
        fj = (eta.y() / eta.z() + half2_) / dz2_;
        const double eps = 1e-9;
        return fi >= -eps && fj >= -eps && fi <= static_cast<double>(width_ - 1) + eps &&
               fj <= static_cast<double>(height_ - 1) + eps;
    }

    double sample_bilinear(const ScalarField& f, double fi, double fj) const {
        fi = std::clamp(fi, 0.0, static_cast<double>(width_ - 1));
        fj = std::clamp(fj, 0.0, static_cast<double>(height_ - 1));
        const std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(fi), width_ - 2);
        const std::size_t j0 = std::min<std::size_t>(static_cast<std::size_t>(fj), height_ - 2);
        const double s = fi - static_cast<double>(i0), t = fj - static_cast<double>(j0);
        return (1 - s) * (1 - t) * f(i0, j0) + s * (1 - t) * f(i0 + 1, j0) +
               (1 - s) * t * f(i0, j0 + 1) + s * t * f(i0 + 1, j0 + 1);
    }

    /// Chart partials (df/dz1, df/dz2) at pixel (i, j). Interior pixels use
    /// the configured stencil; edge pixels fall back to one-sided
    /// second-order differences across the edge and plain central
    /// differences along it.
    Eigen::Vector2d chart_partials(const ScalarField& f, std::size_t i, std::size_t j) const {
        return {partial(f, i, j, true), partial(f, i, j, false)};
    }

    Vec3 gradient(const ScalarField& f, std::size_t k) const {
        const std::size_t i = k % width_, j = k / width_;
        const auto d = chart_partials(f, i, j);
        return frames_[k].b1 * d.x() + frames_[k].b2 * d.y();
    }

    TangentVec chart_gradient(const ScalarField& f, std::size_t i, std::size_t j) const {
        check_shape(f);
        const std::size_t k = j * width_ + i;
        return {dirs_[k], gradient(f, k)};
    }

    std::vector<Vec3> gradient(const ScalarField& f) const {
        check_shape(f);
        std::vector<Vec3> g(size());
        for (std::size_t k = 0; k < size(); ++k) g[k] = gradient(f, k);
        return g;
    }

    /// Chart velocity (dz1/dt, dz2/dt) of a tangent advection vector.
    Eigen::Vector2d chart_velocity(const Vec3& a, std::size_t k) const {
        return {frames_[k].b1.dot(a), frames_[k].b2.dot(a)};
    }

    double cfl(const Vec3& a, std::size_t k, double dt) const {
        const auto c = chart_velocity(a, k);
        return dt * (std::abs(c.x()) / dz1_ + std::abs(c.y()) / dz2_);
    }

    /// First-order upwind approximation of a . grad f at sample k. A
    /// neighbour outside the frame is only needed at an
    /// inflow edge; there the zero-normal-derivative ghost (copy of the
    /// pixel itself) is used.
    double advect_upwind(const ScalarField& f, std::size_t k, const Vec3& a) const {
        const std::size_t i = k % width_, j = k / width_;
        const auto c = chart_velocity(a, k);
        const double fk = f[k];
        double d1 = 0.0, d2 = 0.0;
        if (c.x() > 0.0) {
            if (i > 0) d1 = (fk - f(i - 1, j)) / dz1_;
        } else if (c.x() < 0.0) {
            if (i + 1 < width_) d1 = (f(i + 1, j) - fk) / dz1_;
        }
        if (c.y() > 0.0) {
            if (j > 0) d2 = (fk - f(i, j - 1)) / dz2_;
        } else if (c.y() < 0.0) {
            if (j + 1 < height_) d2 = (f(i, j + 1) - fk) / dz2_;
        }
        return c.x() * d1 + c.y() * d2;
    }

    void check_shape(const ScalarField& f) const {
        if (f.width != width_ || f.height != height_) {
            throw GridMismatch("field shape " + std::to_string(f.width) + "x" +
                               std::to_string(f.height) + " does not match pinhole grid " +
                               std::to_string(width_) + "x" + std::to_string(height_));
        }
    }

private:
    double partial(const ScalarField& f, std::size_t i, std::size_t j, bool along1) const {
        const std::size_t n = along1 ? width_ : height_;
        const std::size_t m = along1 ? height_ : width_;
        const std::size_t p = along1 ? i : j; // index along the derivative
        const std::size_t q = along1 ? j : i; // transverse index
        const double h = along1 ? dz1_ : dz2_;
        auto at = [&](std::size_t pp, std::size_t qq) { return along1 ? f(pp, qq) : f(qq, pp); };
        if (p == 0) return (-3.0 * at(0, q) + 4.0 * at(1, q) - at(2, q)) / (2.0 * h);
        if (p == n - 1) return (3.0 * at(n - 1, q) - 4.0 * at(n - 2, q) + at(n - 3, q)) / (2.0 * h);
        const double centre = at(p + 1, q) - at(p - 1, q);
        if (stencil_ == Stencil::Central || q == 0 || q == m - 1) return centre / (2.0 * h);
        const double lo = at(p + 1, q - 1) - at(p - 1, q - 1);
        const double hi = at(p + 1, q + 1) - at(p - 1, q + 1);
        return (lo + 2.0 * centre + hi) / (8.0 * h);
    }

    std::size_t width_, height_;
    double fov_h_, fov_v_;
    Stencil stencil_;
    double half1_ = 0, half2_ = 0, dz1_ = 0, dz2_ = 0;
    std::vector<UnitDir> dirs_;
    std::vector<detail::ChartFrame> frames_;
    std::vector<double> weights_;
};

/// Full-sphere latitude/longitude grid. Colatitudes are offset by half a
/// cell so no sample sits on a pole; samples are stored with the longitude
/// index running fastest. Stencils that cross a pole read the sample on the
/// opposite meridian (n_phi must be even).
class LatLongGrid {
public:
    LatLongGrid(std::size_t n_theta, std::size_t n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
        if (n_theta < 2 || n_phi < 4 || n_phi % 2 != 0) {
            throw BadConfig("lat-long grid needs n_theta >= 2 and an even n_phi >= 4");
        }
        dtheta_ = kPi / static_cast<double>(n_theta);
        dphi_ = 2.0 * kPi / static_cast<double>(n_phi);
        const std::size_t n = n_theta * n_phi;
        dirs_.resize(n);
        frames_.resize(n);
        weights_.resize(n);
        for (std::size_t j = 0; j < n_theta; ++j) {
            const double th = theta(j);
            const double band = std::cos(th - 0.5 * dtheta_) - std::cos(th + 0.5 * dtheta_);
            for (std::size_t i = 0; i < n_phi; ++i) {
                const double ph = phi(i);
                const std::size_t k = j * n_phi + i;
                const Vec3 e(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
                dirs_[k] = UnitDir(e);
                const Vec3 e_th(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th));
                const Vec3 d_ph(-std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph), 0.0);
                // Coordinate 1 is longitude (fast index), coordinate 2 colatitude.
                frames_[k] = detail::dual_basis(dirs_[k].vec(), d_ph, e_th);
                weights_[k] = band * dphi_;
            }
        }
    }

    std::size_t n_theta() const { return n_theta_; }
    std::size_t n_phi() const { return n_phi_; }
    std::size_t width() const { return n_phi_; }
    std::size_t height() const { return n_theta_; }
    std::size_t size() const { return dirs_.size(); }
    double dtheta() const { return dtheta_; }
    double dphi() const { return dphi_; }
    double theta(std::size_t j) const { return (static_cast<double>(j) + 0.5) * dtheta_; }
    double phi(std::size_t i) const { return static_cast<double>(i) * dphi_; }
    const UnitDir& dir(std::size_t k) const { return dirs_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }
    const detail::ChartFrame& frame(std::size_t k) const { return frames_[k]; }
    ScalarField make_field(double fill = 0.0) const { return ScalarField(n_phi_, n_theta_, fill); }

    /// Chart partials (df/dphi, df/dtheta), central differences with
    /// periodic longitude and across-pole reflection.
    Eigen::Vector2d chart_partials(const ScalarField& f, std::size_t i, std::size_t j) const {
        const double dph = (f(east(i), j) - f(west(i), j)) / (2.0 * dphi_);
        const double dth = (south_value(f, i, j) - north_value(f, i, j)) / (2.0 * dtheta_);
        return {dph, dth};
    }

    Vec3 gradient(const ScalarField& f, std::size_t k) const {
        const auto d = chart_partials(f, k % n_phi_, k / n_phi_);
        return frames_[k].b1 * d.x() + frames_[k].b2 * d.y();
    }

    std::vector<Vec3> gradient(const ScalarField& f) const {
        check_shape(f);
        std::vector<Vec3> g(size());
        for (std::size_t k = 0; k < size(); ++k) g[k] = gradient(f, k);
        return g;
    }

    /// Surface divergence of a tangent field given by Cartesian samples:
    /// the trace of the surface gradients of its three components.
    std::vector<double> divergence(std::span<const Vec3> field) const {
        if (field.size() != size()) throw GridMismatch("vector field size does not match grid");
        std::vector<double> out(size(), 0.0);
        ScalarField comp = make_field();
        for (int c = 0; c < 3; ++c) {
            for (std::size_t k = 0; k < size(); ++k) comp[k] = field[k][c];
            for (std::size_t k = 0; k < size(); ++k) out[k] += gradient(comp, k)[c];
        }
        return out;
    }

    Eigen::Vector2d chart_velocity(const Vec3& a, std::size_t k) const {
        return {frames_[k].b1.dot(a), frames_[k].b2.dot(a)};
    }

    double cfl(const Vec3& a, std::size_t k, double dt) const {
        const auto c = chart_velocity(a, k);
        return dt * (std::abs(c.x()) / dphi_ + std::abs(c.y()) / dtheta_);
    }

    /// First-order upwind a . grad f (the sphere has no boundary).
    double advect_upwind(const ScalarField& f, std::size_t k, const Vec3& a) const {
        const std::size_t i = k % n_phi_, j = k / n_phi_;
        const auto c = chart_velocity(a, k);
        const double fk = f[k];
        const double d1 = c.x() > 0.0 ? (fk - f(west(i), j)) / dphi_ : (f(east(i), j) - fk) / dphi_;
        const double d2 = c.y() > 0.0 ? (fk - north_value(f, i, j)) / dtheta_
                                      : (south_value(f, i, j) - fk) / dtheta_;
        return c.x() * d1 + c.y() * d2;
    }

    void check_shape(const ScalarField& f) const {
        if (f.width != n_phi_ || f.height != n_theta_) {
            throw GridMismatch("field shape does not match lat-long grid");
        }
    }

private:
    std::size_t east(std::size_t i) const { return i + 1 == n_phi_ ? 0 : i + 1; }
    std::size_t west(std::size_t i) const { return i == 0 ? n_phi_ - 1 : i - 1; }
    std::size_t opposite(std::size_t i) const { return (i + n_phi_ / 2) % n_phi_; }
    double north_value(const ScalarField& f, std::size_t i, std::size_t j) const {
        return j == 0 ? f(opposite(i), 0) : f(i, j - 1);
    }
    double south_value(const ScalarField& f, std::size_t i, std::size_t j) const {
        return j + 1 == n_theta_ ? f(opposite(i), j) : f(i, j + 1);
    }

    std::size_t n_theta_, n_phi_;
    double dtheta_ = 0, dphi_ = 0;
    std::vector<UnitDir> dirs_;
    std::vector<detail::ChartFrame> frames_;
    std::vector<double> weights_;
};

/// Sum of field * quad_weight over a grid.
template <class Grid>
double sphere_quadrature(const ScalarField& f, const Grid& grid) {
    grid.check_shape(f);
    double s = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) s += f[k] * grid.weight(k);
    return s;
}

/// Vector-valued quadrature.
template <class Grid>
Vec3 sphere_quadrature(std::span<const Vec3> f, const Grid& grid) {
    if (f.size() != grid.size()) throw GridMismatch("vector integrand size does not match grid");
    Vec3 s = Vec3::Zero();
    for (std::size_t k = 0; k < grid.size(); ++k) s += f[k] * grid.weight(k);
    return s;
}

/// Samples a function of the direction on every grid point.
template <class Grid, class Fn>
ScalarField sample_field(const Grid& grid, Fn&& fn) {
    ScalarField f = grid.make_field();
    for (std::size_t k = 0; k < grid.size(); ++k) f[k] = fn(grid.dir(k).vec());
    return f;
}

} // namespace bias_obs
