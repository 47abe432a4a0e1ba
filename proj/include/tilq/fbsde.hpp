#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "tilq/mc.hpp"
#include "tilq/problem.hpp"
#include "tilq/riccati.hpp"
#include "tilq/strategy.hpp"

namespace tilq {

/// Adjoint pair at (s; t) reconstructed from the affine representation.
struct AdjointEval {
    double t = 0.0, s = 0.0;
    double p1 = 0.0, p2 = 0.0;
    Eigen::VectorXd k1, k2;  // d-vectors
};

/// p_i(s;t) = M_i(s) x_s - N_i(s) m_s - Gam_i(s) x_t + Phi_i(s),
/// m_s = E_t[X*_s].
std::pair<double, double> ansatz_p(const RiccatiSolution& sol, double t, double s,
                                   double x_s, double m_s, double x_t);

/// k_i(s) = M_i(s) [C(s) x_s + D(s) u*(s, x_s) + sigma(s)]; independent of t.
std::pair<Eigen::VectorXd, Eigen::VectorXd> ansatz_k(const ProblemSpec& spec,
                                                     const RiccatiSolution& sol,
                                                     const FeedbackStrategy& strat,
                                                     double s, double x_s);

/// Lambda_i(s;t) = R_i u*_i + B_i p_i(s;t) + D_i' k_i(s), stacked over players.
/// At s = t this must vanish (adjoint route of the equilibrium identity).
Eigen::VectorXd lambda_path(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const FeedbackStrategy& strat, double t, double s, double x_s,
                            double m_s, double x_t);

/// E_t[Lambda(s;t)] evaluated analytically (the state enters linearly, so the
/// conditional mean substitutes m(s) from the deterministic mean flow).
Eigen::VectorXd lambda_mean(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const FeedbackStrategy& strat, double t, double s, double x_t);

/// Monte-Carlo check of the integral (martingale) form of the adjoint BSDE:
///   p_i(t;t) = E_t[ p_i(T;t) + int_t^T (A p_i + C'k_i + Q_i X*) ds ].
struct BsdeReport {
    double t = 0.0;
    double residual_p1 = 0.0, residual_p2 = 0.0;
    double std_err_p1 = 0.0, std_err_p2 = 0.0;
    double lambda_diag_inf = 0.0;  // max over x_t probes of |Lambda(t;t)|_inf
};

BsdeReport bsde_residual(const ProblemSpec& spec, const RiccatiSolution& sol,
                         const FeedbackStrategy& strat, double t, int64_t n_paths,
                         uint64_t base_seed, int n_outer = 64);

}  // namespace tilq
