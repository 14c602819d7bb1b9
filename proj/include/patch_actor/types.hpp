#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace patch_actor {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// A point in pixel coordinates. Fractional values are legal (cluster
/// centers land between pixels); consumers round only when they must.
struct PixelPoint {
    Scalar x = 0.0;
    Scalar y = 0.0;
};

inline bool operator==(const PixelPoint& a, const PixelPoint& b) {
    return a.x == b.x && a.y == b.y;
}

} // namespace patch_actor
