#include "tilq/conditions.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace tilq {

std::string to_string(CaseTag tag) {
    switch (tag) {
        case CaseTag::standard_R: return "standard_R";
        case CaseTag::singular_R: return "singular_R";
        default: return "neither";
    }
}

namespace {

Eigen::VectorXd stacked_B(const ProblemSpec& spec, int k) {
    Eigen::VectorXd B(2 * spec.l);
    B << spec.B1.node(k), spec.B2.node(k);
    return B;
}

Eigen::MatrixXd stacked_D(const ProblemSpec& spec, int k) {
    Eigen::MatrixXd D(spec.d, 2 * spec.l);
    D << spec.D1.node(k), spec.D2.node(k);
    return D;
}

}  // namespace

std::pair<double, double> fit_lambda(const ProblemSpec& spec) {
    const int np = spec.grid.n_points();
    double num = 0.0, den = 0.0;
    for (int k = 0; k < np; ++k) {
        Eigen::VectorXd B = stacked_B(spec, k);
        Eigen::VectorXd DtC = stacked_D(spec, k).transpose() * spec.C.node(k);
        num += B.dot(DtC);
        den += DtC.squaredNorm();
    }
    double maxB = 0.0;
    for (int k = 0; k < np; ++k)
        maxB = std::max(maxB, stacked_B(spec, k).cwiseAbs().maxCoeff());

    if (den == 0.0) return {0.0, maxB};  // D'C == 0: residual is just |B|_inf

    double lambda = std::max(0.0, num / den);
    double res = 0.0;
    for (int k = 0; k < np; ++k) {
        Eigen::VectorXd B = stacked_B(spec, k);
        Eigen::VectorXd DtC = stacked_D(spec, k).transpose() * spec.C.node(k);
        res = std::max(res, (B - lambda * DtC).cwiseAbs().maxCoeff());
    }
    return {lambda, res};
}

ConditionReport check_conditions(const ProblemSpec& spec, const ConditionTolerances& tol) {
    ConditionReport rep;
    const int np = spec.grid.n_points();
    const int twol = 2 * spec.l;

    // (a) terminal-weight ordering, player 1
    rep.checks.push_back({"G1>=h1>=1",
                          spec.G1 >= spec.h1 && spec.h1 >= 1.0,
                          std::min(spec.G1 - spec.h1, spec.h1 - 1.0)});

    // (b) proportionality B = lambda D'C
    auto [lambda, residual] = fit_lambda(spec);
    rep.lambda = lambda;
    rep.residual = residual;
    rep.checks.push_back({"B=lambda*D'C", residual <= tol.prop_tol, residual});

    // classify the R regime
    double min_eig_R = std::numeric_limits<double>::infinity();
    double max_abs_R = 0.0;
    for (int k = 0; k < np; ++k) {
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(twol, twol);
        R.topLeftCorner(spec.l, spec.l) = spec.R1.node(k);
        R.bottomRightCorner(spec.l, spec.l) = spec.R2.node(k);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
        min_eig_R = std::min(min_eig_R, es.eigenvalues().minCoeff());
        max_abs_R = std::max(max_abs_R, R.cwiseAbs().maxCoeff());
    }

    if (min_eig_R > 0.0) {
        rep.case_tag = CaseTag::standard_R;
        rep.checks.push_back({"R>=delta*I", true, min_eig_R});
        // |C|^2/(2l) D'D - (lambda+1) D'C C'D >= 0 at every grid point
        double worst = std::numeric_limits<double>::infinity();
        for (int k = 0; k < np; ++k) {
            Eigen::MatrixXd D = stacked_D(spec, k);
            Eigen::VectorXd C = spec.C.node(k);
            Eigen::VectorXd w = D.transpose() * C;
            Eigen::MatrixXd H = (C.squaredNorm() / (2.0 * spec.l)) * (D.transpose() * D) -
                                (lambda + 1.0) * (w * w.transpose());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
            worst = std::min(worst, es.eigenvalues().minCoeff());
        }
        rep.checks.push_back({"|C|^2/(2l)D'D-(lambda+1)D'CC'D>=0",
                              worst >= -tol.psd_slack, worst});
    } else if (max_abs_R == 0.0) {
        rep.case_tag = CaseTag::singular_R;
        rep.checks.push_back({"R==0", true, 0.0});
        // |C|^2 - (lambda+1) C'D (D'D)^{-1} D'C >= 0 at every grid point
        double worst = std::numeric_limits<double>::infinity();
        bool dd_ok = true;
        double min_sv = std::numeric_limits<double>::infinity();
        for (int k = 0; k < np; ++k) {
            Eigen::MatrixXd D = stacked_D(spec, k);
            Eigen::MatrixXd DtD = D.transpose() * D;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(DtD);
            double smin = svd.singularValues().minCoeff();
            double smax = svd.singularValues().maxCoeff();
            min_sv = std::min(min_sv, smin);
            if (smin <= 0.0 || smax / smin > 1e12) {
                dd_ok = false;
                continue;
            }
            Eigen::VectorXd C = spec.C.node(k);
            Eigen::VectorXd w = D.transpose() * C;
            double val = C.squaredNorm() - (lambda + 1.0) * w.dot(DtD.ldlt().solve(w));
            worst = std::min(worst, val);
        }
        if (!dd_ok) {
            rep.checks.push_back({"|C|^2-(lambda+1)C'D(D'D)^-1D'C>=0", false, min_sv});
        } else {
            rep.checks.push_back({"|C|^2-(lambda+1)C'D(D'D)^-1D'C>=0",
                                  worst >= -tol.psd_slack, worst});
        }
    } else {
        rep.case_tag = CaseTag::neither;
        rep.checks.push_back({"R>=delta*I or R==0", false, min_eig_R});
    }

    rep.overall = std::all_of(rep.checks.begin(), rep.checks.end(),
                              [](const Check& c) { return c.pass; });
    return rep;
}

}  // namespace tilq
