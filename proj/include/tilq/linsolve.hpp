#pragma once

#include <Eigen/Dense>

#include "tilq/errors.hpp"

namespace tilq {

/// LU solve of K x = rhs with an SVD condition-number gate. K is the small
/// dense stage matrix R + M D'D (2l x 2l), so the SVD is cheap.
inline Eigen::VectorXd solve_gated(const Eigen::MatrixXd& K, const Eigen::VectorXd& rhs,
                                   double s, double cond_threshold = 1e12) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
    double smax = svd.singularValues().maxCoeff();
    double smin = svd.singularValues().minCoeff();
    if (!(smin > 0.0) || smax / smin > cond_threshold) {
        double cond = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
        throw SingularLinearSystem(s, cond);
    }
    return K.partialPivLu().solve(rhs);
}

}  // namespace tilq
