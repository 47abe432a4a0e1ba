#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tilq/grid.hpp"

namespace tilq {

// Time-dependent coefficients are stored as samples at the grid points and
// linearly interpolated in between. The piecewise-linear interpolant is the
// coefficient function as far as every solver in this project is concerned.

/// Scalar function of time, sampled on the grid.
struct SampledScalar {
    Eigen::ArrayXd v;  // size n_points

    double at(const TimeGrid& g, double s) const {
        int k = g.cell(s);
        double th = g.theta(s, k);
        return (1.0 - th) * v[k] + th * v[k + 1];
    }
    double node(int k) const { return v[k]; }
};

/// Vector-valued function of time; row k holds the value at s_k.
struct SampledVector {
    Eigen::MatrixXd v;  // n_points x dim

    Eigen::VectorXd at(const TimeGrid& g, double s) const {
        int k = g.cell(s);
        double th = g.theta(s, k);
        return (1.0 - th) * v.row(k).transpose() + th * v.row(k + 1).transpose();
    }
    Eigen::VectorXd node(int k) const { return v.row(k).transpose(); }
    int dim() const { return static_cast<int>(v.cols()); }
};

/// Matrix-valued function of time.
struct SampledMatrix {
    std::vector<Eigen::MatrixXd> v;  // size n_points

    Eigen::MatrixXd at(const TimeGrid& g, double s) const {
        int k = g.cell(s);
        double th = g.theta(s, k);
        return (1.0 - th) * v[static_cast<size_t>(k)] + th * v[static_cast<size_t>(k) + 1];
    }
    const Eigen::MatrixXd& node(int k) const { return v[static_cast<size_t>(k)]; }
    int rows() const { return static_cast<int>(v.front().rows()); }
    int cols() const { return static_cast<int>(v.front().cols()); }
};

inline SampledScalar constant_scalar(const TimeGrid& g, double value) {
    SampledScalar f;
    f.v = Eigen::ArrayXd::Constant(g.n_points(), value);
    return f;
}

inline SampledVector constant_vector(const TimeGrid& g, const Eigen::VectorXd& value) {
    SampledVector f;
    f.v = value.transpose().replicate(g.n_points(), 1);
    return f;
}

inline SampledMatrix constant_matrix(const TimeGrid& g, const Eigen::MatrixXd& value) {
    SampledMatrix f;
    f.v.assign(static_cast<size_t>(g.n_points()), value);
    return f;
}

}  // namespace tilq
