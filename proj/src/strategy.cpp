#include "tilq/strategy.hpp"

#include "tilq/linsolve.hpp"

namespace tilq {

CoeffBlocks stack_coeffs(const ProblemSpec& spec, double s) {
    const TimeGrid& g = spec.grid;
    const int l = spec.l, d = spec.d;
    CoeffBlocks cb;
    cb.A = spec.A.at(g, s);
    cb.b = spec.b.at(g, s);
    cb.Q1 = spec.Q1.at(g, s);
    cb.Q2 = spec.Q2.at(g, s);

    cb.B.resize(2 * l);
    cb.B << spec.B1.at(g, s), spec.B2.at(g, s);
    cb.C = spec.C.at(g, s);
    cb.sigma = spec.sigma.at(g, s);
    cb.c2 = cb.C.squaredNorm();

    cb.D.resize(d, 2 * l);
    cb.D << spec.D1.at(g, s), spec.D2.at(g, s);
    cb.R = Eigen::MatrixXd::Zero(2 * l, 2 * l);
    cb.R.topLeftCorner(l, l) = spec.R1.at(g, s);
    cb.R.bottomRightCorner(l, l) = spec.R2.at(g, s);

    cb.DtD = cb.D.transpose() * cb.D;
    cb.DtC = cb.D.transpose() * cb.C;
    cb.Dtsig = cb.D.transpose() * cb.sigma;
    return cb;
}

namespace {

Eigen::MatrixXd scalar_block(double v1, double v2, int l) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * l, 2 * l);
    m.topLeftCorner(l, l) = v1 * Eigen::MatrixXd::Identity(l, l);
    m.bottomRightCorner(l, l) = v2 * Eigen::MatrixXd::Identity(l, l);
    return m;
}

}  // namespace

BlockSet assemble(const ProblemSpec& spec, const RiccatiSolution& sol, double s) {
    CoeffBlocks cb = stack_coeffs(spec, s);
    BlockSet bs;
    bs.s = s;
    bs.A = cb.A;
    bs.b = cb.b;
    bs.B = cb.B;
    bs.D = cb.D;
    bs.C = cb.C;
    bs.sigma = cb.sigma;
    bs.R = cb.R;
    const int l = spec.l;
    bs.M = scalar_block(sol.at(sol.M1, s), sol.at(sol.M2, s), l);
    bs.N = scalar_block(sol.at(sol.N1, s), sol.at(sol.N2, s), l);
    bs.Gam = scalar_block(sol.at(sol.Gam1, s), sol.at(sol.Gam2, s), l);
    bs.Phi = scalar_block(sol.at(sol.Phi1, s), sol.at(sol.Phi2, s), l);
    return bs;
}

void feedback_at(const ProblemSpec& spec, const RiccatiSolution& sol, double s,
                 Eigen::VectorXd& alpha, Eigen::VectorXd& beta,
                 const RiccatiTolerances& tol) {
    CoeffBlocks cb = stack_coeffs(spec, s);
    const int l = spec.l;

    Eigen::VectorXd mdiag(2 * l), ndiag(2 * l), gdiag(2 * l), phivec(2 * l);
    mdiag.head(l).setConstant(sol.at(sol.M1, s));
    mdiag.tail(l).setConstant(sol.at(sol.M2, s));
    ndiag.head(l).setConstant(sol.at(sol.N1, s));
    ndiag.tail(l).setConstant(sol.at(sol.N2, s));
    gdiag.head(l).setConstant(sol.at(sol.Gam1, s));
    gdiag.tail(l).setConstant(sol.at(sol.Gam2, s));
    phivec.head(l) = sol.at(sol.Phi1, s) * cb.B.head(l);
    phivec.tail(l) = sol.at(sol.Phi2, s) * cb.B.tail(l);

    Eigen::MatrixXd K = cb.R + mdiag.asDiagonal() * cb.DtD;
    Eigen::VectorXd rhs_a =
        (mdiag - ndiag - gdiag).cwiseProduct(cb.B) + mdiag.cwiseProduct(cb.DtC);
    alpha = -solve_gated(K, rhs_a, s, tol.cond_threshold);
    beta = -solve_gated(K, phivec + mdiag.cwiseProduct(cb.Dtsig), s, tol.cond_threshold);
}

FeedbackStrategy feedback(const ProblemSpec& spec, const RiccatiSolution& sol,
                          const RiccatiTolerances& tol) {
    FeedbackStrategy fs;
    fs.grid = spec.grid;
    fs.l = spec.l;
    const int np = spec.grid.n_points();
    fs.alpha.resize(np, 2 * spec.l);
    fs.beta.resize(np, 2 * spec.l);
    for (int k = 0; k < np; ++k) {
        Eigen::VectorXd a, b;
        feedback_at(spec, sol, spec.grid.point(k), a, b, tol);
        fs.alpha.row(k) = a.transpose();
        fs.beta.row(k) = b.transpose();
    }
    return fs;
}

Eigen::VectorXd lambda_diag(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const FeedbackStrategy& strat, double t, double x_t) {
    CoeffBlocks cb = stack_coeffs(spec, t);
    const int l = spec.l;

    Eigen::VectorXd mdiag(2 * l), ndiag(2 * l), gdiag(2 * l), phivec(2 * l);
    mdiag.head(l).setConstant(sol.at(sol.M1, t));
    mdiag.tail(l).setConstant(sol.at(sol.M2, t));
    ndiag.head(l).setConstant(sol.at(sol.N1, t));
    ndiag.tail(l).setConstant(sol.at(sol.N2, t));
    gdiag.head(l).setConstant(sol.at(sol.Gam1, t));
    gdiag.tail(l).setConstant(sol.at(sol.Gam2, t));
    phivec.head(l) = sol.at(sol.Phi1, t) * cb.B.head(l);
    phivec.tail(l) = sol.at(sol.Phi2, t) * cb.B.tail(l);

    Eigen::MatrixXd K = cb.R + mdiag.asDiagonal() * cb.DtD;
    Eigen::VectorXd u = strat.control(t, x_t);

    // (R + M D'D) u* + [(M - N - Gam) B + M D'C] x_t + (Phi B + M D'sigma)
    return K * u +
           ((mdiag - ndiag - gdiag).cwiseProduct(cb.B) + mdiag.cwiseProduct(cb.DtC)) * x_t +
           phivec + mdiag.cwiseProduct(cb.Dtsig);
}

}  // namespace tilq
