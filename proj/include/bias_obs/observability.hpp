// Stationary motions of a single frame: pairs (p_w, p_v) that leave both the
// brightness and the depth field unchanged to first order. A scene admits a
// non-trivial one exactly when it has a rotation axis.
#pragma once

#include "bias_obs/observer_core.hpp"

#include <Eigen/Eigenvalues>

namespace bias_obs {

struct StationaryCandidate {
    Vec3 p_w = Vec3::Zero();  // rad/s
    Vec3 p_v = Vec3::Zero();  // m/s
    double residual_rms = 0.0;
    bool normalized = false;  // |(p_w, p_v / d_ref)| = 1
    double next_residual = 0.0; // best residual orthogonal to this candidate
    bool degenerate = false;    // the minimizer is not isolated
};

struct StationarityResidual {
    ScalarField r_y;
    ScalarField r_D;
};

/// r_y = grad y . eta x (p_w + (1/D) eta x p_v)
/// r_D = grad D . eta x (p_w + (1/D) eta x p_v) + eta . p_v
template <class Grid>
StationarityResidual stationarity_residual(const ScalarField& y, const ScalarField& D, const Grid& grid,
                                           const Vec3& p_w, const Vec3& p_v) {
    grid.check_shape(y);
    grid.check_shape(D);
    StationarityResidual r{grid.make_field(), grid.make_field()};
    parallel_for(grid.size(), [&](std::size_t s) {
        const Vec3& eta = grid.dir(s).vec();
        const Vec3 a = advection(eta, D[s], p_v, p_w);
        r.r_y[s] = grid.gradient(y, s).dot(a);
        r.r_D[s] = grid.gradient(D, s).dot(a) + eta.dot(p_v);
    });
    return r;
}

/// sqrt( int(lambda_y r_y^2 + lambda_D r_D^2) / int 1 ).
template <class Grid>
double residual_rms(const StationarityResidual& r, const Grid& grid, double lambda_y = ObserverGains{}.lambda_y,
                    double lambda_D = ObserverGains{}.lambda_D) {
    double num = 0.0, area = 0.0;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        num += grid.weight(s) * (lambda_y * sq(r.r_y[s]) + lambda_D * sq(r.r_D[s]));
        area += grid.weight(s);
    }
    return std::sqrt(num / area);
}

namespace detail {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Both residuals are linear in x = (p_w, p_v / d_ref):
///   r_y = (grad y x eta) . p_w - (grad y / D) . p_v
///   r_D = (grad D x eta) . p_w + (eta - grad D / D) . p_v
/// so the weighted mean square is x' M x.
template <class Grid>
Mat6 residual_form(const ScalarField& y, const ScalarField& D, const Grid& grid, double d_ref, double lambda_y,
                   double lambda_D) {
    Mat6 M = Mat6::Zero();
    double area = 0.0;
    for (std::size_t s = 0; s < grid.size(); ++s) {
        const Vec3& eta = grid.dir(s).vec();
        const Vec3 gy = grid.gradient(y, s), gD = grid.gradient(D, s);
        const double inv = inverse_depth(D[s]);
        Vec6 a, b;
        a << gy.cross(eta), -d_ref * inv * gy;
        b << gD.cross(eta), d_ref * (eta - inv * gD);
        const double w = grid.weight(s);
        M += w * (lambda_y * a * a.transpose() + lambda_D * b * b.transpose());
        area += w;
    }
    return M / area;
}

} // namespace detail

/// Minimizes the residual over the unit 5-sphere {|(p_w, p_v / d_ref)| = 1}.
/// The mean square residual is a quadratic form in (p_w, p_v / d_ref), so the
/// minimizer is its lowest eigenvector and the minimum its lowest eigenvalue.
template <class Grid>
StationaryCandidate find_stationary_motion(const ScalarField& y, const ScalarField& D, const Grid& grid, double d_ref,
                                           double lambda_y = ObserverGains{}.lambda_y,
                                           double lambda_D = ObserverGains{}.lambda_D) {
    if (!(d_ref > 0.0)) throw BadConfig("reference depth must be positive");
    grid.check_shape(y);
    grid.check_shape(D);
    const detail::Mat6 M = detail::residual_form(y, D, grid, d_ref, lambda_y, lambda_D);
    const Eigen::SelfAdjointEigenSolver<detail::Mat6> eig(M);
    const auto& ev = eig.eigenvalues();
    const detail::Vec6 x = eig.eigenvectors().col(0);
    StationaryCandidate c;
    c.p_w = x.head<3>();
    c.p_v = d_ref * x.tail<3>();
    // Sign convention: the largest component positive.
    Eigen::Index big = 0;
    x.cwiseAbs().maxCoeff(&big);
    if (x[big] < 0.0) {
        c.p_w = -c.p_w;
        c.p_v = -c.p_v;
    }
    c.residual_rms = std::sqrt(std::max(0.0, ev[0]));
    c.next_residual = std::sqrt(std::max(0.0, ev[1]));
    c.normalized = true;
    c.degenerate = c.next_residual <= 2.0 * c.residual_rms;
    return c;
}

/// Quadrature mean of D.
template <class Grid>
double mean_depth(const ScalarField& D, const Grid& grid) {
    double s = 0.0, a = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        s += grid.weight(k) * D[k];
        a += grid.weight(k);
    }
    return s / a;
}

/// |(p_v . p_w) int D^3| / (|p_v| |p_w| int D^3): the cosine between the two
/// halves of a stationary motion, which must vanish for exact ones. Zero by
/// convention when either half is zero.
inline double orthogonality_identity_check(const ScalarField& D, const LatLongGrid& grid, const Vec3& p_w,
                                           const Vec3& p_v) {
    grid.check_shape(D);
    const double nw = p_w.norm(), nv = p_v.norm();
    if (nw == 0.0 || nv == 0.0) return 0.0;
    double m3 = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) m3 += grid.weight(k) * D[k] * D[k] * D[k];
    return std::abs(p_v.dot(p_w) * m3) / (nv * nw * m3);
}

struct ObservabilityVerdict {
    double residual = 0.0;
    double baseline = 0.0; // residual of the calibration scene at the same resolution
    double ratio = 0.0;
    bool observable = false; // ratio > 5
};

/// Reported, never certified: discretization keeps residuals off zero.
inline ObservabilityVerdict classify(double residual, double baseline) {
    ObservabilityVerdict v{residual, baseline, 0.0, false};
    v.ratio = baseline > 0.0 ? residual / baseline : std::numeric_limits<double>::infinity();
    v.observable = v.ratio > 5.0;
    return v;
}

} // namespace bias_obs
