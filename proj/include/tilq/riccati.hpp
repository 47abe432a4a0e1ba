#pragma once

#include <Eigen/Dense>
#include <limits>
#include <utility>

#include "tilq/conditions.hpp"
#include "tilq/problem.hpp"

namespace tilq {

/// Exact backward integrals of the piecewise-linear coefficients:
///   intA(s)   = int_s^T A du
///   intAC2(s) = int_s^T (2A + |C|^2) du
/// |C|^2 is piecewise quadratic; both integrals are evaluated cell-exactly,
/// so the closed forms built on them carry no quadrature error.
class BackwardIntegrals {
public:
    explicit BackwardIntegrals(const ProblemSpec& spec);

    double intA(double s) const;
    double intAC2(double s) const;
    double gamma1(double s) const { return lam1_ * std::exp(intA(s)); }
    double gamma2(double s) const { return lam2_ * std::exp(intA(s)); }

private:
    double cellA(int k, double theta) const;   // int over [s_k + theta*dt, s_{k+1}] of A
    double cellC2(int k, double theta) const;  // same for |C|^2

    TimeGrid grid_;
    Eigen::ArrayXd Anodes_;
    Eigen::MatrixXd Cnodes_;  // n_points x d
    Eigen::ArrayXd FA_;       // int_{s_k}^T A
    Eigen::ArrayXd FC2_;      // int_{s_k}^T |C|^2
    double lam1_ = 0.0, lam2_ = 0.0;
};

struct RiccatiTolerances {
    double cond_threshold = 1e12;  // condition-number gate for R + M D'D
    double div_guard = 1e-14;      // denominator guard
    double bracket_slack = 1e-9;   // relative slack on the Mtilde bracket
};

/// Grid-sampled solution of the backward system: the coupled core
/// (M1, Mtilde, J1), the recovered (M2, N1, N2), the closed forms Gamma_i and
/// P_i, and the jointly integrated (Phi1, Phi2).
struct RiccatiSolution {
    TimeGrid grid;
    Eigen::ArrayXd M1, M2, N1, N2;
    Eigen::ArrayXd Gam1, Gam2;
    Eigen::ArrayXd Phi1, Phi2;
    Eigen::ArrayXd Mtilde, J1;
    Eigen::ArrayXd P1, P2;

    // Node derivatives of the core states (for dense cubic-Hermite output
    // inside solve_phi; public evaluation stays linear).
    Eigen::ArrayXd dM1, dMtilde, dJ1;

    double L1 = 0.0, L2 = 0.0;  // Mtilde bracket recorded by solve_all
    bool zero_h = false;        // h1 == h2 == 0: N == 0 and J1 == +inf

    double at(const Eigen::ArrayXd& traj, double s) const {
        int k = grid.cell(s);
        double th = grid.theta(s, k);
        return (1.0 - th) * traj[k] + th * traj[k + 1];
    }
};

/// Core backward state with node derivatives.
struct CoreSolution {
    Eigen::ArrayXd M1, Mtilde, J1;
    Eigen::ArrayXd dM1, dMtilde, dJ1;
    bool zero_h = false;
};

/// Gamma_i(s) = lam_i exp(int_s^T A): closed form on the grid.
std::pair<Eigen::ArrayXd, Eigen::ArrayXd> solve_gamma(const ProblemSpec& spec);

/// P_i(s) = G_i e^{int_s^T(2A+|C|^2)} + int_s^T e^{int_v^T(2A+|C|^2)} Q_i(v) dv,
/// the exponent integrals cell-exact, the Q integral by composite Simpson.
std::pair<Eigen::ArrayXd, Eigen::ArrayXd> solve_P(const ProblemSpec& spec);

/// Backward RK4 on the coupled (M1, Mtilde, J1) system from s=T with terminal
/// data (G1, G1/G2, G1/h1). Requires G2 != 0; requires h1 != 0 unless
/// h1 == h2 == 0, in which case N == 0 drops out of the drivers and J1 is
/// reported as +inf.
CoreSolution solve_core(const ProblemSpec& spec, const BackwardIntegrals& integrals,
                        const RiccatiTolerances& tol = {});

/// M2 = M1/Mtilde, N1 = M1/J1, N2 = (h2/h1) N1, pointwise on the grid.
void recover(const ProblemSpec& spec, const CoreSolution& core, Eigen::ArrayXd& M2,
             Eigen::ArrayXd& N1, Eigen::ArrayXd& N2,
             const RiccatiTolerances& tol = {});

/// Joint backward RK4 on the coupled linear pair (Phi1, Phi2); the driver
/// couples the two through the stacked feedback offset beta.
std::pair<Eigen::ArrayXd, Eigen::ArrayXd> solve_phi(const ProblemSpec& spec,
                                                    const CoreSolution& core,
                                                    const BackwardIntegrals& integrals,
                                                    const RiccatiTolerances& tol = {});

/// Full pipeline: gamma -> core -> recover -> phi -> P. Records the bracket
/// [L1, L2] and enforces it (and positivity) when check_conditions passes.
RiccatiSolution solve_all(const ProblemSpec& spec, const RiccatiTolerances& tol = {});

}  // namespace tilq
