#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace chaosld {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

enum class Label { Regular = 0, Chaotic = 1 };

/// Invalid parameters, malformed configuration or schema violations.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Requested operation does not exist for this system kind
/// (e.g. a vector field of a discrete map).
struct UnsupportedOperation : std::logic_error {
    using std::logic_error::logic_error;
};

/// The data itself does not admit the requested computation
/// (unimodal histogram, untrainable feature column, degenerate energy...).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stencil neighbor left the energetically allowed region.
struct StencilInfeasible : DataError {
    using DataError::DataError;
};

/// File system / serialization failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Adaptive integration could not continue (step-size underflow, blow-up).
struct IntegrationFailure : std::runtime_error {
    double t_reached;
    explicit IntegrationFailure(const std::string& what, double t)
        : std::runtime_error(what), t_reached(t) {}
};

} // namespace chaosld
