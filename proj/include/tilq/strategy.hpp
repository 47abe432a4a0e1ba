#pragma once

#include <Eigen/Dense>

#include "tilq/problem.hpp"
#include "tilq/riccati.hpp"

namespace tilq {

/// Coefficient-side stacking at one time point:
///   B = (B1; B2) in R^{2l},  D = (D1, D2) in R^{d x 2l},
///   R = diag(R1, R2) in R^{2l x 2l},
/// plus the products D'D, D'C, D'sigma that every driver needs.
struct CoeffBlocks {
    double A = 0.0, b = 0.0, Q1 = 0.0, Q2 = 0.0;
    double c2 = 0.0;  // |C|^2
    Eigen::VectorXd B;
    Eigen::VectorXd C, sigma;
    Eigen::MatrixXd D;
    Eigen::MatrixXd R;
    Eigen::MatrixXd DtD;
    Eigen::VectorXd DtC, Dtsig;
};

CoeffBlocks stack_coeffs(const ProblemSpec& spec, double s);

/// Coefficient and solution blocks at one time point, matching the block
/// convention M = diag(M1 I_l, M2 I_l) etc.
struct BlockSet {
    double s = 0.0;
    double A = 0.0, b = 0.0;
    Eigen::MatrixXd M, N, Gam, Phi;  // 2l x 2l block-diagonal
    Eigen::MatrixXd R;               // 2l x 2l
    Eigen::VectorXd B;               // 2l
    Eigen::MatrixXd D;               // d x 2l
    Eigen::VectorXd C, sigma;        // d
};

/// Linear interpolation of spec and solution at s.
BlockSet assemble(const ProblemSpec& spec, const RiccatiSolution& sol, double s);

/// The linear-feedback pair u* = alpha X + beta sampled on the grid.
/// Player slices: entries [0, l) belong to player 1, [l, 2l) to player 2.
struct FeedbackStrategy {
    TimeGrid grid;
    int l = 1;
    Eigen::MatrixXd alpha;  // n_points x 2l
    Eigen::MatrixXd beta;   // n_points x 2l

    Eigen::VectorXd alpha_at(double s) const {
        int k = grid.cell(s);
        double th = grid.theta(s, k);
        return (1.0 - th) * alpha.row(k).transpose() + th * alpha.row(k + 1).transpose();
    }
    Eigen::VectorXd beta_at(double s) const {
        int k = grid.cell(s);
        double th = grid.theta(s, k);
        return (1.0 - th) * beta.row(k).transpose() + th * beta.row(k + 1).transpose();
    }
    Eigen::VectorXd control(double s, double x) const {
        return alpha_at(s) * x + beta_at(s);
    }
};

/// alpha_s = -(R + M D'D)^{-1} [(M - N - Gam) B + M D'C]
/// beta_s  = -(R + M D'D)^{-1} (Phi B + M D'sigma)
/// at every grid point, via gated dense solves.
FeedbackStrategy feedback(const ProblemSpec& spec, const RiccatiSolution& sol,
                          const RiccatiTolerances& tol = {});

/// Feedback coefficients recomputed from interpolated blocks at an arbitrary
/// time (not an interpolation of the grid alpha/beta).
void feedback_at(const ProblemSpec& spec, const RiccatiSolution& sol, double s,
                 Eigen::VectorXd& alpha, Eigen::VectorXd& beta,
                 const RiccatiTolerances& tol = {});

/// The first-order equilibrium residual at the diagonal s = t:
///   Lambda(t;t) = (R + M D'D) u* + [M(B + D'C) - N B - Gam B] x_t
///                 + (Phi B + M D'sigma),   u* = alpha(t) x_t + beta(t).
/// Vanishes identically for the synthesized feedback; u* is taken from the
/// supplied strategy so corrupted strategies are detected.
Eigen::VectorXd lambda_diag(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const FeedbackStrategy& strat, double t, double x_t);

}  // namespace tilq
