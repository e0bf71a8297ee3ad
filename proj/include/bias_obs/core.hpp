// Common vocabulary types and error classes for the bias observer toolkit.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bias_obs {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;

/// Base class of every error raised by the library. The CLI maps
/// subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during a run (CLI exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

#define BIAS_OBS_DEFINE_ERROR(Name, Base)  \
    class Name : public Base {             \
    public:                                \
        using Base::Base;                  \
    }

BIAS_OBS_DEFINE_ERROR(SingularChart, NumericError);
BIAS_OBS_DEFINE_ERROR(GridMismatch, Error);
BIAS_OBS_DEFINE_ERROR(OriginOutside, NumericError);
BIAS_OBS_DEFINE_ERROR(BadConfig, ConfigError);
BIAS_OBS_DEFINE_ERROR(NonConvexProfile, ConfigError);
BIAS_OBS_DEFINE_ERROR(NotAxisymmetric, ConfigError);
BIAS_OBS_DEFINE_ERROR(EnvelopeExit, NumericError);
BIAS_OBS_DEFINE_ERROR(OutOfRange, Error);
BIAS_OBS_DEFINE_ERROR(InsufficientFrames, Error);
BIAS_OBS_DEFINE_ERROR(LeftDomain, NumericError);
BIAS_OBS_DEFINE_ERROR(NonfiniteField, NumericError);
BIAS_OBS_DEFINE_ERROR(BadGains, ConfigError);
BIAS_OBS_DEFINE_ERROR(BadMargins, ConfigError);
BIAS_OBS_DEFINE_ERROR(MissingCSV, Error);

#undef BIAS_OBS_DEFINE_ERROR

inline double sq(double x) { return x * x; }

} // namespace bias_obs
