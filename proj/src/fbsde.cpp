#include "tilq/fbsde.hpp"

#include <cmath>

#include "tilq/rng.hpp"
#include "tilq/strategy.hpp"
#include "tilq/threads.hpp"

namespace tilq {

std::pair<double, double> ansatz_p(const RiccatiSolution& sol, double /*t*/, double s,
                                   double x_s, double m_s, double x_t) {
    double p1 = sol.at(sol.M1, s) * x_s - sol.at(sol.N1, s) * m_s -
                sol.at(sol.Gam1, s) * x_t + sol.at(sol.Phi1, s);
    double p2 = sol.at(sol.M2, s) * x_s - sol.at(sol.N2, s) * m_s -
                sol.at(sol.Gam2, s) * x_t + sol.at(sol.Phi2, s);
    return {p1, p2};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ansatz_k(const ProblemSpec& spec,
                                                     const RiccatiSolution& sol,
                                                     const FeedbackStrategy& strat,
                                                     double s, double x_s) {
    const TimeGrid& g = spec.grid;
    Eigen::VectorXd u = strat.control(s, x_s);
    Eigen::MatrixXd D(spec.d, 2 * spec.l);
    D << spec.D1.at(g, s), spec.D2.at(g, s);
    Eigen::VectorXd base = spec.C.at(g, s) * x_s + D * u + spec.sigma.at(g, s);
    return {sol.at(sol.M1, s) * base, sol.at(sol.M2, s) * base};
}

Eigen::VectorXd lambda_path(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const FeedbackStrategy& strat, double t, double s, double x_s,
                            double m_s, double x_t) {
    const TimeGrid& g = spec.grid;
    const int l = spec.l;
    auto [p1, p2] = ansatz_p(sol, t, s, x_s, m_s, x_t);
    auto [k1, k2] = ansatz_k(spec, sol, strat, s, x_s);
    Eigen::VectorXd u = strat.control(s, x_s);

    Eigen::VectorXd lam(2 * l);
    lam.head(l) = spec.R1.at(g, s) * u.head(l) + spec.B1.at(g, s) * p1 +
                  spec.D1.at(g, s).transpose() * k1;
    lam.tail(l) = spec.R2.at(g, s) * u.tail(l) + spec.B2.at(g, s) * p2 +
                  spec.D2.at(g, s).transpose() * k2;
    return lam;
}

Eigen::VectorXd lambda_mean(const ProblemSpec& spec, const RiccatiSolution& sol,
                            const FeedbackStrategy& strat, double t, double s,
                            double x_t) {
    Eigen::ArrayXd m = expected_state(spec, strat, t, x_t);
    int k = spec.grid.cell(s);
    double th = spec.grid.theta(s, k);
    double m_s = (1.0 - th) * m[k] + th * m[k + 1];
    return lambda_path(spec, sol, strat, t, s, m_s, m_s, x_t);
}

BsdeReport bsde_residual(const ProblemSpec& spec, const RiccatiSolution& sol,
                         const FeedbackStrategy& strat, double t, int64_t n_paths,
                         uint64_t base_seed, int n_outer) {
    const TimeGrid& g = spec.grid;
    const int n = g.n_steps, d = spec.d, l2 = 2 * spec.l;
    const double dt = g.dt();
    int kt = static_cast<int>(std::lround(t / dt));
    if (std::abs(kt * dt - t) > 1e-9 * g.T)
        throw SpecError("bsde_residual: t must be a grid point");

    // Node tables for the integrand.
    std::vector<Eigen::VectorXd> alpha(static_cast<size_t>(n + 1)),
        beta(static_cast<size_t>(n + 1)), Cn(static_cast<size_t>(n + 1)),
        sig(static_cast<size_t>(n + 1)), Bn(static_cast<size_t>(n + 1));
    std::vector<Eigen::MatrixXd> Dn(static_cast<size_t>(n + 1));
    for (int k = 0; k <= n; ++k) {
        alpha[k] = strat.alpha.row(k).transpose();
        beta[k] = strat.beta.row(k).transpose();
        Cn[k] = spec.C.node(k);
        sig[k] = spec.sigma.node(k);
        Eigen::VectorXd B(l2);
        B << spec.B1.node(k), spec.B2.node(k);
        Bn[k] = B;
        Eigen::MatrixXd D(d, l2);
        D << spec.D1.node(k), spec.D2.node(k);
        Dn[k] = D;
    }

    // One conditional estimate from (kt, x_t) with its own stream.
    auto conditional = [&](double x_t, const CounterRng& rng, int64_t paths, double& r1,
                           double& r2, double& se1, double& se2) {
        Eigen::ArrayXd m = expected_state(spec, strat, t, x_t);

        const int64_t n_chunks = (paths + kChunk - 1) / kChunk;
        struct Slot {
            double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
        };
        std::vector<Slot> slots(static_cast<size_t>(n_chunks));
        const double sqdt = std::sqrt(dt);

        parallel_chunks(paths, [&](int64_t c, int64_t lo, int64_t hi) {
            Slot acc;
            std::vector<double> z(static_cast<size_t>(d));
            Eigen::VectorXd u(l2);
            for (int64_t p = lo; p < hi; ++p) {
                double x = x_t;
                double I1 = 0.0, I2 = 0.0;
                double pT1 = 0.0, pT2 = 0.0;
                for (int k = kt; k <= n; ++k) {
                    double w = (k == kt || k == n) ? 0.5 * dt : dt;
                    u.noalias() = alpha[k] * x + beta[k];
                    auto [p1, p2] = ansatz_p(sol, t, g.point(k), x, m[k], x_t);
                    Eigen::VectorXd kbase = Cn[k] * x + Dn[k] * u + sig[k];
                    double M1k = sol.M1[k], M2k = sol.M2[k];
                    double Ck1 = Cn[k].dot(kbase) * M1k;
                    double Ck2 = Cn[k].dot(kbase) * M2k;
                    double Ak = spec.A.v[k];
                    I1 += w * (Ak * p1 + Ck1 + spec.Q1.v[k] * x);
                    I2 += w * (Ak * p2 + Ck2 + spec.Q2.v[k] * x);
                    if (k == n) {
                        pT1 = p1;
                        pT2 = p2;
                        break;
                    }
                    rng.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), d,
                                z.data());
                    double drift = spec.A.v[k] * x + Bn[k].dot(u) + spec.b.v[k];
                    double diff = 0.0;
                    for (int j = 0; j < d; ++j) diff += kbase[j] * sqdt * z[j];
                    x += drift * dt + diff;
                }
                double t1 = pT1 + I1, t2 = pT2 + I2;
                acc.s1 += t1;
                acc.s2 += t2;
                acc.q1 += t1 * t1;
                acc.q2 += t2 * t2;
            }
            slots[static_cast<size_t>(c)] = acc;
        });

        Slot tot;
        for (const auto& s : slots) {
            tot.s1 += s.s1;
            tot.s2 += s.s2;
            tot.q1 += s.q1;
            tot.q2 += s.q2;
        }
        const double nn = static_cast<double>(paths);
        double mean1 = tot.s1 / nn, mean2 = tot.s2 / nn;
        se1 = std::sqrt(std::max(0.0, tot.q1 / nn - mean1 * mean1) / nn);
        se2 = std::sqrt(std::max(0.0, tot.q2 / nn - mean2 * mean2) / nn);
        auto [lhs1, lhs2] = ansatz_p(sol, t, t, x_t, x_t, x_t);
        r1 = lhs1 - mean1;
        r2 = lhs2 - mean2;
    };

    BsdeReport rep;
    rep.t = t;
    double probe_x = spec.x0;

    if (kt == 0) {
        double r1, r2, se1, se2;
        conditional(spec.x0, CounterRng(base_seed), n_paths, r1, r2, se1, se2);
        rep.residual_p1 = std::abs(r1);
        rep.residual_p2 = std::abs(r2);
        rep.std_err_p1 = se1;
        rep.std_err_p2 = se2;
    } else {
        // Outer states by simulating to t, inner conditional estimates.
        n_outer = static_cast<int>(std::min<int64_t>(n_outer, n_paths));
        int64_t n_inner = std::max<int64_t>(1, n_paths / n_outer);
        CounterRng outer(base_seed);
        std::vector<double> z(static_cast<size_t>(d));
        Eigen::VectorXd u(l2);
        const double sqdt = std::sqrt(dt);
        Eigen::ArrayXd e1(n_outer), e2(n_outer);
        for (int p = 0; p < n_outer; ++p) {
            double x = spec.x0;
            for (int k = 0; k < kt; ++k) {
                outer.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), d,
                              z.data());
                u.noalias() = alpha[k] * x + beta[k];
                double drift = spec.A.v[k] * x + Bn[k].dot(u) + spec.b.v[k];
                Eigen::VectorXd kbase = Cn[k] * x + Dn[k] * u + sig[k];
                double diff = 0.0;
                for (int j = 0; j < d; ++j) diff += kbase[j] * sqdt * z[j];
                x += drift * dt + diff;
            }
            if (p == 0) probe_x = x;
            double r1, r2, se1, se2;
            conditional(x, CounterRng(mix_seed(base_seed, static_cast<uint64_t>(p))),
                        n_inner, r1, r2, se1, se2);
            e1[p] = r1;
            e2[p] = r2;
        }
        rep.residual_p1 = std::abs(e1.mean());
        rep.residual_p2 = std::abs(e2.mean());
        rep.std_err_p1 =
            std::sqrt((e1 - e1.mean()).square().sum() / std::max(1, n_outer - 1) / n_outer);
        rep.std_err_p2 =
            std::sqrt((e2 - e2.mean()).square().sum() / std::max(1, n_outer - 1) / n_outer);
    }

    for (double x : {0.0, 1.0, probe_x}) {
        Eigen::VectorXd lam = lambda_diag(spec, sol, strat, t, x);
        rep.lambda_diag_inf = std::max(rep.lambda_diag_inf, lam.cwiseAbs().maxCoeff());
    }
    return rep;
}

}  // namespace tilq
