#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tilq/strategy.hpp"

using namespace tilq;
using namespace tilq::testing;

namespace {

// Doctored solution with constant trajectories; bypasses the solver so the
// assembly and feedback formulas can be checked against hand arithmetic.
RiccatiSolution constant_solution(const TimeGrid& grid, double M1, double M2, double N1,
                                  double N2, double G1, double G2, double F1, double F2) {
    RiccatiSolution sol;
    sol.grid = grid;
    const int np = grid.n_points();
    sol.M1 = Eigen::ArrayXd::Constant(np, M1);
    sol.M2 = Eigen::ArrayXd::Constant(np, M2);
    sol.N1 = Eigen::ArrayXd::Constant(np, N1);
    sol.N2 = Eigen::ArrayXd::Constant(np, N2);
    sol.Gam1 = Eigen::ArrayXd::Constant(np, G1);
    sol.Gam2 = Eigen::ArrayXd::Constant(np, G2);
    sol.Phi1 = Eigen::ArrayXd::Constant(np, F1);
    sol.Phi2 = Eigen::ArrayXd::Constant(np, F2);
    sol.Mtilde = sol.M1 / sol.M2;
    sol.J1 = sol.M1 / sol.N1;
    sol.P1 = sol.M1;
    sol.P2 = sol.M2;
    sol.dM1 = Eigen::ArrayXd::Zero(np);
    sol.dMtilde = Eigen::ArrayXd::Zero(np);
    sol.dJ1 = Eigen::ArrayXd::Zero(np);
    return sol;
}

}  // namespace

TEST_CASE("assemble: block-diagonal structure, l = 1 and l = 2") {
    ProblemSpec spec = decoupled_spec();
    RiccatiSolution sol = constant_solution(spec.grid, 2, 3, 0, 0, 0, 0, 0, 0);
    BlockSet bs = assemble(spec, sol, 0.5);
    Eigen::MatrixXd expect(2, 2);
    expect << 2, 0, 0, 3;
    CHECK((bs.M - expect).cwiseAbs().maxCoeff() == 0.0);

    ConstantSpecBuilder b(2, 2);
    b.G1 = 1;
    b.G2 = 1;
    b.h1 = 1;
    b.h2 = 1;
    ProblemSpec spec2 = b.build();
    RiccatiSolution sol2 = constant_solution(spec2.grid, 2, 3, 0, 0, 0, 0, 0, 0);
    BlockSet bs2 = assemble(spec2, sol2, 0.25);
    Eigen::VectorXd diag = bs2.M.diagonal();
    CHECK(diag[0] == 2.0);
    CHECK(diag[1] == 2.0);
    CHECK(diag[2] == 3.0);
    CHECK(diag[3] == 3.0);
    CHECK(bs2.M.cwiseAbs().sum() == doctest::Approx(10.0));  // off-diagonals zero
}

TEST_CASE("assemble: D concatenation gives the identity") {
    ConstantSpecBuilder b(1, 2);
    b.D1 << 1, 0;
    b.D2 << 0, 1;
    b.G1 = 1;
    b.G2 = 1;
    b.h1 = 1;
    b.h2 = 1;
    ProblemSpec spec = b.build();
    RiccatiSolution sol = constant_solution(spec.grid, 1, 1, 0, 0, 0, 0, 0, 0);
    BlockSet bs = assemble(spec, sol, 0.0);
    CHECK((bs.D - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feedback: zero right-hand sides give the zero strategy") {
    ProblemSpec spec = decoupled_spec();  // B = D = 0, sigma = 0
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    CHECK(fs.alpha.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fs.beta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feedback: homogeneous case has zero offset") {
    ProblemSpec spec = standard_case_spec();
    spec.b = constant_scalar(spec.grid, 0.0);
    spec.sigma = constant_vector(spec.grid, Eigen::VectorXd::Zero(3));
    spec.mu1 = spec.mu2 = 0.0;
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    CHECK(fs.beta.cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(fs.alpha.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("feedback: scalar instance against a hand 2x2 solve") {
    // l = d = 1 with doctored constants; alpha solves
    //   (R + M D'D) alpha = -[(M - N - Gam) B + M D'C]
    // with K and the right side evaluated by hand via Cramer's rule.
    ConstantSpecBuilder b(1, 1);
    b.B1 << 0.4;
    b.B2 << 0.7;
    b.D1 << 0.6;
    b.D2 << 0.9;
    b.C << 0.8;
    b.sigma << 0.3;
    b.R1 << 1.0;
    b.R2 << 1.2;
    b.G1 = 1;
    b.G2 = 1;
    b.h1 = 1;
    b.h2 = 1;
    ProblemSpec spec = b.build();
    RiccatiSolution sol =
        constant_solution(spec.grid, 2.0, 1.5, 0.5, 0.25, 0.3, 0.1, 0.2, -0.4);
    FeedbackStrategy fs = feedback(spec, sol);

    // K = R + M D'D, with D'D = [[0.36, 0.54], [0.54, 0.81]]
    Eigen::Matrix2d K;
    K << 1.0 + 2.0 * 0.36, 2.0 * 0.54, 1.5 * 0.54, 1.2 + 1.5 * 0.81;
    Eigen::Vector2d rhs_a;
    rhs_a << (2.0 - 0.5 - 0.3) * 0.4 + 2.0 * 0.6 * 0.8,
        (1.5 - 0.25 - 0.1) * 0.7 + 1.5 * 0.9 * 0.8;
    Eigen::Vector2d rhs_b;
    rhs_b << 0.2 * 0.4 + 2.0 * 0.6 * 0.3, -0.4 * 0.7 + 1.5 * 0.9 * 0.3;
    double det = K(0, 0) * K(1, 1) - K(0, 1) * K(1, 0);
    Eigen::Vector2d alpha_hand;
    alpha_hand << -(rhs_a[0] * K(1, 1) - K(0, 1) * rhs_a[1]) / det,
        -(K(0, 0) * rhs_a[1] - rhs_a[0] * K(1, 0)) / det;
    Eigen::Vector2d beta_hand;
    beta_hand << -(rhs_b[0] * K(1, 1) - K(0, 1) * rhs_b[1]) / det,
        -(K(0, 0) * rhs_b[1] - rhs_b[0] * K(1, 0)) / det;

    CHECK(fs.alpha(0, 0) == doctest::Approx(alpha_hand[0]).epsilon(1e-13));
    CHECK(fs.alpha(0, 1) == doctest::Approx(alpha_hand[1]).epsilon(1e-13));
    CHECK(fs.beta(0, 0) == doctest::Approx(beta_hand[0]).epsilon(1e-13));
    CHECK(fs.beta(0, 1) == doctest::Approx(beta_hand[1]).epsilon(1e-13));
}

TEST_CASE("lambda_diag: vanishes at grid diagonals for the synthesized pair") {
    for (ProblemSpec spec : {standard_case_spec(), singular_case_spec()}) {
        RiccatiSolution sol = solve_all(spec);
        FeedbackStrategy fs = feedback(spec, sol);
        for (double x : {0.0, 17.3}) {
            double worst = 0.0;
            for (int k = 0; k <= spec.grid.n_steps; k += 7) {
                Eigen::VectorXd lam = lambda_diag(spec, sol, fs, spec.grid.point(k), x);
                worst = std::max(worst, lam.cwiseAbs().maxCoeff());
            }
            CHECK(worst <= 1e-9 * (1.0 + std::abs(x)));
        }
    }
}

TEST_CASE("lambda_diag: state coefficient cancels") {
    ProblemSpec spec = standard_case_spec();
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    double x1 = -3.0, x2 = 41.5;
    Eigen::VectorXd l1 = lambda_diag(spec, sol, fs, 0.37, x1);
    Eigen::VectorXd l2 = lambda_diag(spec, sol, fs, 0.37, x2);
    CHECK((l1 - l2).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + std::abs(x1 - x2)));
}

TEST_CASE("lambda_diag: beta perturbation forward-substitutes through K") {
    ProblemSpec spec = standard_case_spec();
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    FeedbackStrategy bad = fs;
    Eigen::VectorXd delta(2);
    delta << 1e-3, -2e-3;
    bad.beta.rowwise() += delta.transpose();

    double t = spec.grid.point(30);
    Eigen::VectorXd lam_good = lambda_diag(spec, sol, fs, t, 1.0);
    Eigen::VectorXd lam_bad = lambda_diag(spec, sol, bad, t, 1.0);

    CoeffBlocks cb = stack_coeffs(spec, t);
    Eigen::VectorXd mdiag(2);
    mdiag << sol.at(sol.M1, t), sol.at(sol.M2, t);
    Eigen::MatrixXd K = cb.R + mdiag.asDiagonal() * cb.DtD;
    Eigen::VectorXd expect = K * delta;
    CHECK((lam_bad - lam_good - expect).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(lam_bad.cwiseAbs().maxCoeff() > 1e-4);
}

TEST_CASE("feedback: player relabeling swaps the strategy slices") {
    ProblemSpec spec = standard_case_spec();
    ProblemSpec swapped = spec;
    std::swap(swapped.B1, swapped.B2);
    std::swap(swapped.D1, swapped.D2);
    std::swap(swapped.Q1, swapped.Q2);
    std::swap(swapped.R1, swapped.R2);
    std::swap(swapped.G1, swapped.G2);
    std::swap(swapped.h1, swapped.h2);
    std::swap(swapped.lam1, swapped.lam2);
    std::swap(swapped.mu1, swapped.mu2);

    FeedbackStrategy fs = feedback(spec, solve_all(spec));
    FeedbackStrategy gs = feedback(swapped, solve_all(swapped));
    const int l = spec.l;
    for (int k = 0; k < spec.grid.n_points(); k += 11) {
        for (int i = 0; i < l; ++i) {
            CHECK(fs.alpha(k, i) == doctest::Approx(gs.alpha(k, l + i)).epsilon(1e-11));
            CHECK(fs.alpha(k, l + i) == doctest::Approx(gs.alpha(k, i)).epsilon(1e-11));
            CHECK(fs.beta(k, i) == doctest::Approx(gs.beta(k, l + i)).epsilon(1e-11));
            CHECK(fs.beta(k, l + i) == doctest::Approx(gs.beta(k, i)).epsilon(1e-11));
        }
    }
}

TEST_CASE("feedback: gains are grid-continuous") {
    double jump100 = 0.0, jump200 = 0.0;
    {
        ProblemSpec spec = standard_case_spec(100);
        FeedbackStrategy fs = feedback(spec, solve_all(spec));
        for (int k = 0; k + 1 < spec.grid.n_points(); ++k)
            jump100 = std::max(jump100,
                               (fs.alpha.row(k + 1) - fs.alpha.row(k)).cwiseAbs().maxCoeff());
    }
    {
        ProblemSpec spec = standard_case_spec(200);
        FeedbackStrategy fs = feedback(spec, solve_all(spec));
        for (int k = 0; k + 1 < spec.grid.n_points(); ++k)
            jump200 = std::max(jump200,
                               (fs.alpha.row(k + 1) - fs.alpha.row(k)).cwiseAbs().maxCoeff());
    }
    // jumps scale like the Lipschitz constant times dt
    CHECK(jump200 <= 0.75 * jump100);
    CHECK(jump100 <= 1.0);  // smoke bound for this instance
}

TEST_CASE("feedback_at: interpolated blocks reproduce grid values") {
    ProblemSpec spec = standard_case_spec();
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    Eigen::VectorXd a, b2;
    feedback_at(spec, sol, spec.grid.point(17), a, b2);
    CHECK((a - fs.alpha.row(17).transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((b2 - fs.beta.row(17).transpose()).cwiseAbs().maxCoeff() <= 1e-14);
}
