#include "tilq/riccati.hpp"

#include <cmath>

#include "tilq/linsolve.hpp"
#include "tilq/strategy.hpp"

namespace tilq {

// ── Backward integrals ────────────────────────────────────────────────────

BackwardIntegrals::BackwardIntegrals(const ProblemSpec& spec)
    : grid_(spec.grid),
      Anodes_(spec.A.v),
      Cnodes_(spec.C.v),
      lam1_(spec.lam1),
      lam2_(spec.lam2) {
    const int n = grid_.n_steps;
    FA_.setZero(n + 1);
    FC2_.setZero(n + 1);
    for (int k = n - 1; k >= 0; --k) {
        FA_[k] = FA_[k + 1] + cellA(k, 0.0);
        FC2_[k] = FC2_[k + 1] + cellC2(k, 0.0);
    }
}

double BackwardIntegrals::cellA(int k, double theta) const {
    // A linear on the cell: trapezoid over [s_k + theta dt, s_{k+1}] is exact.
    double a0 = (1.0 - theta) * Anodes_[k] + theta * Anodes_[k + 1];
    return grid_.dt() * (1.0 - theta) * 0.5 * (a0 + Anodes_[k + 1]);
}

double BackwardIntegrals::cellC2(int k, double theta) const {
    // C(v) = C_k + phi (C_{k+1} - C_k); integrate |C|^2 over phi in [theta, 1].
    Eigen::VectorXd c0 = Cnodes_.row(k).transpose();
    Eigen::VectorXd dC = Cnodes_.row(k + 1).transpose() - c0;
    double t2 = theta * theta, t3 = t2 * theta;
    return grid_.dt() * (c0.squaredNorm() * (1.0 - theta) + c0.dot(dC) * (1.0 - t2) +
                         dC.squaredNorm() * (1.0 - t3) / 3.0);
}

double BackwardIntegrals::intA(double s) const {
    int k = grid_.cell(s);
    return FA_[k + 1] + cellA(k, grid_.theta(s, k));
}

double BackwardIntegrals::intAC2(double s) const {
    int k = grid_.cell(s);
    return 2.0 * (FA_[k + 1] + cellA(k, grid_.theta(s, k))) + FC2_[k + 1] +
           cellC2(k, grid_.theta(s, k));
}

// ── Closed forms ──────────────────────────────────────────────────────────

std::pair<Eigen::ArrayXd, Eigen::ArrayXd> solve_gamma(const ProblemSpec& spec) {
    BackwardIntegrals bi(spec);
    const int np = spec.grid.n_points();
    Eigen::ArrayXd g1(np), g2(np);
    for (int k = 0; k < np; ++k) {
        double s = spec.grid.point(k);
        g1[k] = bi.gamma1(s);
        g2[k] = bi.gamma2(s);
    }
    return {g1, g2};
}

std::pair<Eigen::ArrayXd, Eigen::ArrayXd> solve_P(const ProblemSpec& spec) {
    BackwardIntegrals bi(spec);
    const int n = spec.grid.n_steps;
    const double dt = spec.grid.dt();

    // I_i[k] = int_{s_k}^T e^{intAC2(v)} Q_i(v) dv, composite Simpson per cell.
    Eigen::ArrayXd I1 = Eigen::ArrayXd::Zero(n + 1), I2 = Eigen::ArrayXd::Zero(n + 1);
    for (int k = n - 1; k >= 0; --k) {
        double sl = spec.grid.point(k);
        double sm = sl + 0.5 * dt;
        double el = std::exp(bi.intAC2(sl));
        double em = std::exp(bi.intAC2(sm));
        double er = std::exp(bi.intAC2(spec.grid.point(k + 1)));
        double q1l = spec.Q1.v[k], q1r = spec.Q1.v[k + 1], q1m = 0.5 * (q1l + q1r);
        double q2l = spec.Q2.v[k], q2r = spec.Q2.v[k + 1], q2m = 0.5 * (q2l + q2r);
        I1[k] = I1[k + 1] + dt / 6.0 * (el * q1l + 4.0 * em * q1m + er * q1r);
        I2[k] = I2[k + 1] + dt / 6.0 * (el * q2l + 4.0 * em * q2m + er * q2r);
    }

    Eigen::ArrayXd P1(n + 1), P2(n + 1);
    for (int k = 0; k <= n; ++k) {
        double w = std::exp(bi.intAC2(spec.grid.point(k)));
        P1[k] = spec.G1 * w + I1[k];
        P2[k] = spec.G2 * w + I2[k];
    }
    return {P1, P2};
}

// ── Core system ───────────────────────────────────────────────────────────

namespace {

struct CoreState {
    double M1, Mt, J1;
};

// Right-hand side of the coupled (M1, Mtilde, J1) system. N and M blocks are
// rebuilt from the current state at every stage. zero_h drops N entirely.
CoreState core_rhs(const ProblemSpec& spec, const BackwardIntegrals& bi, double s,
                   const CoreState& y, bool zero_h, const RiccatiTolerances& tol) {
    if (std::abs(y.M1) < tol.div_guard) throw DivisionByZero(s, "M1");
    if (std::abs(y.Mt) < tol.div_guard) throw DivisionByZero(s, "Mtilde");
    if (!zero_h && std::abs(y.J1) < tol.div_guard) throw DivisionByZero(s, "J1");

    CoeffBlocks cb = stack_coeffs(spec, s);
    const int l = spec.l;

    double M2 = y.M1 / y.Mt;
    double N1 = zero_h ? 0.0 : y.M1 / y.J1;
    double N2 = zero_h ? 0.0 : (spec.h2 / spec.h1) * N1;
    double g1 = bi.gamma1(s), g2 = bi.gamma2(s);

    Eigen::VectorXd mdiag(2 * l), ndiag(2 * l), gdiag(2 * l);
    mdiag.head(l).setConstant(y.M1);
    mdiag.tail(l).setConstant(M2);
    ndiag.head(l).setConstant(N1);
    ndiag.tail(l).setConstant(N2);
    gdiag.head(l).setConstant(g1);
    gdiag.tail(l).setConstant(g2);

    Eigen::MatrixXd K = cb.R + mdiag.asDiagonal() * cb.DtD;
    Eigen::VectorXd rhs =
        (mdiag - ndiag - gdiag).cwiseProduct(cb.B) + mdiag.cwiseProduct(cb.DtC);
    Eigen::VectorXd psi = solve_gated(K, rhs, s, tol.cond_threshold);

    CoreState dy;
    dy.M1 = -(2.0 * cb.A + cb.c2) * y.M1 - cb.Q1 + y.M1 * (cb.B + cb.DtC).dot(psi);
    dy.Mt = -(cb.Q1 / y.M1 - (cb.Q2 / y.M1) * y.Mt) * y.Mt;
    dy.J1 = zero_h ? 0.0
                   : -(cb.c2 + cb.Q1 / y.M1) * y.J1 + y.J1 * cb.DtC.dot(psi);
    return dy;
}

}  // namespace

CoreSolution solve_core(const ProblemSpec& spec, const BackwardIntegrals& bi,
                        const RiccatiTolerances& tol) {
    if (spec.G2 == 0.0)
        throw SpecError("solve_core: G2 = 0 makes the Mtilde terminal value undefined");
    const bool zero_h = (spec.h1 == 0.0 && spec.h2 == 0.0);
    if (!zero_h && spec.h1 == 0.0)
        throw SpecError("solve_core: h1 = 0 with h2 != 0 is outside the reduction");

    const int n = spec.grid.n_steps;
    const double dt = spec.grid.dt();
    const double inf = std::numeric_limits<double>::infinity();

    CoreSolution out;
    out.zero_h = zero_h;
    out.M1.resize(n + 1);
    out.Mtilde.resize(n + 1);
    out.J1.resize(n + 1);
    out.dM1.resize(n + 1);
    out.dMtilde.resize(n + 1);
    out.dJ1.resize(n + 1);

    CoreState y{spec.G1, spec.G1 / spec.G2, zero_h ? inf : spec.G1 / spec.h1};
    out.M1[n] = y.M1;
    out.Mtilde[n] = y.Mt;
    out.J1[n] = y.J1;

    const double h = -dt;  // backward sweep
    for (int k = n; k >= 0; --k) {
        double s = spec.grid.point(k);
        CoreState f1 = core_rhs(spec, bi, s, y, zero_h, tol);
        out.dM1[k] = f1.M1;
        out.dMtilde[k] = f1.Mt;
        out.dJ1[k] = zero_h ? 0.0 : f1.J1;
        if (k == 0) break;

        auto step = [&](const CoreState& c, double w, const CoreState& d) {
            return CoreState{c.M1 + w * d.M1, c.Mt + w * d.Mt,
                             zero_h ? inf : c.J1 + w * d.J1};
        };
        CoreState f2 = core_rhs(spec, bi, s + 0.5 * h, step(y, 0.5 * h, f1), zero_h, tol);
        CoreState f3 = core_rhs(spec, bi, s + 0.5 * h, step(y, 0.5 * h, f2), zero_h, tol);
        CoreState f4 = core_rhs(spec, bi, s + h, step(y, h, f3), zero_h, tol);

        y.M1 += h / 6.0 * (f1.M1 + 2.0 * f2.M1 + 2.0 * f3.M1 + f4.M1);
        y.Mt += h / 6.0 * (f1.Mt + 2.0 * f2.Mt + 2.0 * f3.Mt + f4.Mt);
        if (!zero_h) y.J1 += h / 6.0 * (f1.J1 + 2.0 * f2.J1 + 2.0 * f3.J1 + f4.J1);

        double s_next = spec.grid.point(k - 1);
        if (y.M1 <= 0.0) throw NonPositive(s_next, "M1", y.M1);
        if (y.Mt <= 0.0) throw NonPositive(s_next, "Mtilde", y.Mt);

        out.M1[k - 1] = y.M1;
        out.Mtilde[k - 1] = y.Mt;
        out.J1[k - 1] = y.J1;
    }
    return out;
}

void recover(const ProblemSpec& spec, const CoreSolution& core, Eigen::ArrayXd& M2,
             Eigen::ArrayXd& N1, Eigen::ArrayXd& N2, const RiccatiTolerances& tol) {
    const int np = static_cast<int>(core.M1.size());
    M2.resize(np);
    N1.resize(np);
    N2.resize(np);
    if (core.zero_h) {
        M2 = core.M1 / core.Mtilde;
        N1.setZero();
        N2.setZero();
        return;
    }
    if (std::abs(spec.h1) < tol.div_guard)
        throw DivisionByZero(-1.0, "h1");
    const double ratio = spec.h2 / spec.h1;
    for (int k = 0; k < np; ++k) {
        double s = spec.grid.point(k);
        if (std::abs(core.Mtilde[k]) < tol.div_guard) throw DivisionByZero(s, "Mtilde");
        if (std::abs(core.J1[k]) < tol.div_guard) throw DivisionByZero(s, "J1");
        M2[k] = core.M1[k] / core.Mtilde[k];
        N1[k] = core.M1[k] / core.J1[k];
        N2[k] = ratio * N1[k];
    }
}

// ── Phi pair ──────────────────────────────────────────────────────────────

namespace {

// Cubic Hermite evaluation of the core state inside a cell; keeps the Phi
// integrator at full RK4 order (linear interpolation of the core would cap
// it at second order).
struct CoreEval {
    const ProblemSpec& spec;
    const CoreSolution& core;

    void at(double s, double& M1, double& Mt, double& J1) const {
        const TimeGrid& g = spec.grid;
        int k = g.cell(s);
        double th = g.theta(s, k);
        double dt = g.dt();
        auto hermite = [&](const Eigen::ArrayXd& y, const Eigen::ArrayXd& dy) {
            double t2 = th * th, t3 = t2 * th;
            double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + th;
            double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
            return h00 * y[k] + h10 * dt * dy[k] + h01 * y[k + 1] + h11 * dt * dy[k + 1];
        };
        M1 = hermite(core.M1, core.dM1);
        Mt = hermite(core.Mtilde, core.dMtilde);
        J1 = core.zero_h ? std::numeric_limits<double>::infinity()
                         : hermite(core.J1, core.dJ1);
    }
};

}  // namespace

std::pair<Eigen::ArrayXd, Eigen::ArrayXd> solve_phi(const ProblemSpec& spec,
                                                    const CoreSolution& core,
                                                    const BackwardIntegrals& /*bi*/,
                                                    const RiccatiTolerances& tol) {
    const int n = spec.grid.n_steps;
    const double dt = spec.grid.dt();
    const int l = spec.l;
    CoreEval ce{spec, core};

    auto rhs = [&](double s, const Eigen::Vector2d& phi) -> Eigen::Vector2d {
        double M1, Mt, J1;
        ce.at(s, M1, Mt, J1);
        if (std::abs(Mt) < tol.div_guard) throw DivisionByZero(s, "Mtilde");
        double M2 = M1 / Mt;
        double N1 = core.zero_h ? 0.0 : M1 / J1;
        double N2 = core.zero_h ? 0.0 : (spec.h2 / spec.h1) * N1;

        CoeffBlocks cb = stack_coeffs(spec, s);
        Eigen::VectorXd mdiag(2 * l), phivec(2 * l);
        mdiag.head(l).setConstant(M1);
        mdiag.tail(l).setConstant(M2);
        phivec.head(l) = phi[0] * cb.B.head(l);
        phivec.tail(l) = phi[1] * cb.B.tail(l);

        Eigen::MatrixXd K = cb.R + mdiag.asDiagonal() * cb.DtD;
        Eigen::VectorXd beta =
            -solve_gated(K, phivec + mdiag.cwiseProduct(cb.Dtsig), s, tol.cond_threshold);

        double Bbeta = cb.B.dot(beta);
        double Cterm = cb.DtC.dot(beta) + cb.C.dot(cb.sigma);
        Eigen::Vector2d dphi;
        dphi[0] = -cb.A * phi[0] - (M1 - N1) * (Bbeta + cb.b) - M1 * Cterm;
        dphi[1] = -cb.A * phi[1] - (M2 - N2) * (Bbeta + cb.b) - M2 * Cterm;
        return dphi;
    };

    Eigen::ArrayXd Phi1(n + 1), Phi2(n + 1);
    Eigen::Vector2d y(-spec.mu1, -spec.mu2);
    Phi1[n] = y[0];
    Phi2[n] = y[1];
    const double h = -dt;
    for (int k = n; k > 0; --k) {
        double s = spec.grid.point(k);
        Eigen::Vector2d f1 = rhs(s, y);
        Eigen::Vector2d f2 = rhs(s + 0.5 * h, y + 0.5 * h * f1);
        Eigen::Vector2d f3 = rhs(s + 0.5 * h, y + 0.5 * h * f2);
        Eigen::Vector2d f4 = rhs(s + h, y + h * f3);
        y += h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        Phi1[k - 1] = y[0];
        Phi2[k - 1] = y[1];
    }
    return {Phi1, Phi2};
}

// ── Pipeline ──────────────────────────────────────────────────────────────

RiccatiSolution solve_all(const ProblemSpec& spec, const RiccatiTolerances& tol) {
    BackwardIntegrals bi(spec);

    RiccatiSolution sol;
    sol.grid = spec.grid;
    std::tie(sol.Gam1, sol.Gam2) = solve_gamma(spec);

    CoreSolution core = solve_core(spec, bi, tol);
    sol.M1 = core.M1;
    sol.Mtilde = core.Mtilde;
    sol.J1 = core.J1;
    sol.dM1 = core.dM1;
    sol.dMtilde = core.dMtilde;
    sol.dJ1 = core.dJ1;
    sol.zero_h = core.zero_h;
    recover(spec, core, sol.M2, sol.N1, sol.N2, tol);
    std::tie(sol.Phi1, sol.Phi2) = solve_phi(spec, core, bi, tol);
    std::tie(sol.P1, sol.P2) = solve_P(spec);

    // Mtilde bracket from the existence proof: L1 = min(Q1/Q2) ^ G1/G2,
    // L2 = max(Q1/Q2) v G1/G2 (Q ratio ignored where Q2 == 0).
    double lo = spec.G1 / spec.G2, hi = spec.G1 / spec.G2;
    for (int k = 0; k < spec.grid.n_points(); ++k) {
        if (spec.Q2.v[k] > 0.0) {
            double r = spec.Q1.v[k] / spec.Q2.v[k];
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        } else if (spec.Q1.v[k] > 0.0) {
            hi = std::numeric_limits<double>::infinity();  // Q1/Q2 unbounded
        }  // Q1 == Q2 == 0: no contribution to the Mtilde drift
    }
    sol.L1 = lo;
    sol.L2 = hi;

    ConditionReport rep = check_conditions(spec);
    if (rep.overall) {
        double slack = tol.bracket_slack * (1.0 + std::abs(hi));
        for (int k = 0; k < spec.grid.n_points(); ++k) {
            double mt = sol.Mtilde[k];
            if (mt < lo - slack || mt > hi + slack)
                throw BoundViolation(spec.grid.point(k), mt, lo, hi);
        }
    }
    return sol;
}

}  // namespace tilq
