#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tilq/fbsde.hpp"

using namespace tilq;
using namespace tilq::testing;

TEST_CASE("ansatz_p: collapse at s = t and zero coefficients") {
    ProblemSpec spec = standard_case_spec();
    RiccatiSolution sol = solve_all(spec);
    double t = 0.4, x = 1.3;
    auto [p1, p2] = ansatz_p(sol, t, t, x, x, x);
    double e1 = (sol.at(sol.M1, t) - sol.at(sol.N1, t) - sol.at(sol.Gam1, t)) * x +
                sol.at(sol.Phi1, t);
    double e2 = (sol.at(sol.M2, t) - sol.at(sol.N2, t) - sol.at(sol.Gam2, t)) * x +
                sol.at(sol.Phi2, t);
    CHECK(p1 == doctest::Approx(e1).epsilon(1e-14));
    CHECK(p2 == doctest::Approx(e2).epsilon(1e-14));

    RiccatiSolution zero = sol;
    zero.M1.setZero(); zero.M2.setZero();
    zero.N1.setZero(); zero.N2.setZero();
    zero.Gam1.setZero(); zero.Gam2.setZero();
    zero.Phi1.setZero(); zero.Phi2.setZero();
    auto [z1, z2] = ansatz_p(zero, 0.2, 0.6, 3.0, 2.0, 1.0);
    CHECK(z1 == 0.0);
    CHECK(z2 == 0.0);
}

TEST_CASE("ansatz_p: terminal values reproduce the adjoint terminal condition") {
    for (ProblemSpec spec : {standard_case_spec(), singular_case_spec()}) {
        RiccatiSolution sol = solve_all(spec);
        double t = 0.25, xT = 1.7, mT = 1.1, xt = 0.9;
        auto [p1, p2] = ansatz_p(sol, t, spec.grid.T, xT, mT, xt);
        double e1 = spec.G1 * xT - spec.h1 * mT - spec.lam1 * xt - spec.mu1;
        double e2 = spec.G2 * xT - spec.h2 * mT - spec.lam2 * xt - spec.mu2;
        CHECK(p1 == doctest::Approx(e1).epsilon(1e-13));
        CHECK(p2 == doctest::Approx(e2).epsilon(1e-13));
    }
}

TEST_CASE("ansatz_k: zero cases and hand arithmetic") {
    ProblemSpec spec = standard_case_spec();
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);

    // C = sigma = 0, D = 0 => k = 0
    ProblemSpec s0 = standard_case_spec();
    s0.C = constant_vector(s0.grid, Eigen::VectorXd::Zero(3));
    s0.sigma = constant_vector(s0.grid, Eigen::VectorXd::Zero(3));
    s0.D1 = constant_matrix(s0.grid, Eigen::MatrixXd::Zero(3, 1));
    s0.D2 = constant_matrix(s0.grid, Eigen::MatrixXd::Zero(3, 1));
    RiccatiSolution sol0 = solve_all(s0);
    FeedbackStrategy fs0 = feedback(s0, sol0);
    auto [k01, k02] = ansatz_k(s0, sol0, fs0, 0.5, 2.0);
    CHECK(k01.cwiseAbs().maxCoeff() == 0.0);
    CHECK(k02.cwiseAbs().maxCoeff() == 0.0);

    // M = 0 (doctored) => k = 0
    RiccatiSolution zM = sol;
    zM.M1.setZero();
    zM.M2.setZero();
    auto [kz1, kz2] = ansatz_k(spec, zM, fs, 0.5, 2.0);
    CHECK(kz1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(kz2.cwiseAbs().maxCoeff() == 0.0);

    // hand value: l = d = 1, C=1, D=(1,1), sigma=0.1, u=(0.2,-0.3), x=2, M1=1.5
    ConstantSpecBuilder b(1, 1);
    b.C << 1.0;
    b.D1 << 1.0;
    b.D2 << 1.0;
    b.sigma << 0.1;
    b.G1 = 1; b.G2 = 1; b.h1 = 1; b.h2 = 1;
    ProblemSpec hs = b.build();
    RiccatiSolution hsol;
    hsol.grid = hs.grid;
    const int np = hs.grid.n_points();
    hsol.M1 = Eigen::ArrayXd::Constant(np, 1.5);
    hsol.M2 = Eigen::ArrayXd::Constant(np, 0.7);
    FeedbackStrategy hfs;
    hfs.grid = hs.grid;
    hfs.l = 1;
    hfs.alpha = Eigen::MatrixXd::Zero(np, 2);
    hfs.beta.resize(np, 2);
    hfs.beta.col(0).setConstant(0.2);
    hfs.beta.col(1).setConstant(-0.3);
    auto [hk1, hk2] = ansatz_k(hs, hsol, hfs, 0.5, 2.0);
    CHECK(hk1(0) == doctest::Approx(3.0).epsilon(1e-14));  // 1.5 (2 + 0.2 - 0.3 + 0.1)
    CHECK(hk2(0) == doctest::Approx(1.4).epsilon(1e-14));
}

TEST_CASE("lambda_path: t-independence of k shows in the Lambda difference") {
    ProblemSpec spec = standard_case_spec();
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    double s = 0.62, x_s = 1.4;
    double t1 = 0.1, m1 = 1.25, x_t1 = 0.8;
    double t2 = 0.4, m2 = 1.05, x_t2 = 1.6;
    Eigen::VectorXd lam1 = lambda_path(spec, sol, fs, t1, s, x_s, m1, x_t1);
    Eigen::VectorXd lam2 = lambda_path(spec, sol, fs, t2, s, x_s, m2, x_t2);
    // k(s) cancels exactly; the difference is B_i (p_i(s;t1) - p_i(s;t2))
    auto [pa1, pa2] = ansatz_p(sol, t1, s, x_s, m1, x_t1);
    auto [pb1, pb2] = ansatz_p(sol, t2, s, x_s, m2, x_t2);
    Eigen::VectorXd expect(2);
    expect << spec.B1.at(spec.grid, s)(0) * (pa1 - pb1),
        spec.B2.at(spec.grid, s)(0) * (pa2 - pb2);
    CHECK((lam1 - lam2 - expect).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("lambda_path: all terms vanish without R, B, D") {
    ProblemSpec spec = decoupled_spec();
    spec.R1 = constant_matrix(spec.grid, Eigen::MatrixXd::Zero(1, 1));
    spec.R2 = constant_matrix(spec.grid, Eigen::MatrixXd::Zero(1, 1));
    // K = R + M D'D would be singular; dodge feedback by a zero strategy
    RiccatiSolution sol;
    sol.grid = spec.grid;
    const int np = spec.grid.n_points();
    for (Eigen::ArrayXd* a : {&sol.M1, &sol.M2, &sol.N1, &sol.N2, &sol.Gam1, &sol.Gam2,
                              &sol.Phi1, &sol.Phi2})
        *a = Eigen::ArrayXd::Constant(np, 0.5);
    FeedbackStrategy fs;
    fs.grid = spec.grid;
    fs.l = 1;
    fs.alpha = Eigen::MatrixXd::Zero(np, 2);
    fs.beta = fs.alpha;
    Eigen::VectorXd lam = lambda_path(spec, sol, fs, 0.1, 0.5, 1.0, 0.9, 0.8);
    CHECK(lam.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-route agreement: lambda_diag vs lambda_path on the diagonal") {
    for (ProblemSpec spec : {standard_case_spec(), singular_case_spec()}) {
        RiccatiSolution sol = solve_all(spec);
        FeedbackStrategy fs = feedback(spec, sol);
        for (int k = 0; k <= spec.grid.n_steps; k += 13) {
            double t = spec.grid.point(k);
            for (double x : {0.0, 1.0, -2.4}) {
                Eigen::VectorXd a = lambda_diag(spec, sol, fs, t, x);
                Eigen::VectorXd b = lambda_path(spec, sol, fs, t, t, x, x, x);
                CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
            }
        }
    }
}

TEST_CASE("lambda_mean: vanishes at s = t and grows linearly") {
    ProblemSpec spec = standard_case_spec(200);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    double t = 0.2, x_t = 1.1;
    CHECK(lambda_mean(spec, sol, fs, t, t, x_t).cwiseAbs().maxCoeff() <= 1e-11);
    double r1 = lambda_mean(spec, sol, fs, t, t + 0.1, x_t).cwiseAbs().maxCoeff() / 0.1;
    double r2 = lambda_mean(spec, sol, fs, t, t + 0.05, x_t).cwiseAbs().maxCoeff() / 0.05;
    double r3 = lambda_mean(spec, sol, fs, t, t + 0.025, x_t).cwiseAbs().maxCoeff() / 0.025;
    // finite slope: the ratios stabilize instead of blowing up
    CHECK(r2 <= 2.0 * r1 + 1e-9);
    CHECK(r3 <= 2.0 * r2 + 1e-9);
}

TEST_CASE("bsde_residual: frozen dynamics are exact") {
    ProblemSpec spec = decoupled_spec();
    spec.lam1 = 0.4;
    spec.mu1 = 0.2;
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    BsdeReport rep = bsde_residual(spec, sol, fs, 0.0, 256, 42);
    CHECK(rep.residual_p1 <= 1e-12);
    CHECK(rep.residual_p2 <= 1e-12);
    CHECK(rep.lambda_diag_inf <= 1e-12);
}

TEST_CASE("bsde_residual: generic instance within tolerance") {
    ProblemSpec spec = standard_case_spec(200);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    BsdeReport rep = bsde_residual(spec, sol, fs, 0.0, 20000, 42);
    double dt = spec.grid.dt();
    CHECK(rep.residual_p1 <= std::max(4.0 * rep.std_err_p1, 5.0 * dt));
    CHECK(rep.residual_p2 <= std::max(4.0 * rep.std_err_p2, 5.0 * dt));
    CHECK(rep.lambda_diag_inf <= 1e-10);
}

TEST_CASE("bsde_residual: corrupted Phi is detected at the propagated size") {
    // A constant shift delta on the Phi1 trajectory moves the left side by
    // delta and the right side by delta + delta int_0^T A ds, so the
    // residual lands at |delta int A| = 0.5 * 0.3 = 0.15 up to the clean
    // run's discretization bias and noise.
    ProblemSpec spec = standard_case_spec(400);
    spec.A = constant_scalar(spec.grid, 0.3);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    BsdeReport clean = bsde_residual(spec, sol, fs, 0.0, 40000, 42);
    RiccatiSolution bad = sol;
    bad.Phi1 += 0.5;
    BsdeReport rep = bsde_residual(spec, bad, fs, 0.0, 40000, 42);
    CHECK(rep.residual_p1 >= 0.10);
    CHECK(rep.residual_p1 <= 0.20);
    CHECK(rep.residual_p1 > 3.0 * clean.residual_p1);
}

TEST_CASE("bsde_residual: nested estimate at t > 0") {
    ProblemSpec spec = standard_case_spec(100);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy fs = feedback(spec, sol);
    BsdeReport rep = bsde_residual(spec, sol, fs, 0.5, 8000, 42, 16);
    double dt = spec.grid.dt();
    CHECK(rep.residual_p1 <= std::max(4.0 * rep.std_err_p1, 5.0 * dt));
    CHECK(rep.residual_p2 <= std::max(4.0 * rep.std_err_p2, 5.0 * dt));
}
