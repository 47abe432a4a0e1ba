#include "tilq/mc.hpp"

#include <algorithm>
#include <cmath>

#include "tilq/rng.hpp"
#include "tilq/threads.hpp"

namespace tilq {

namespace {

// ── Flattened node tables ─────────────────────────────────────────────────
// Contiguous per-node coefficient storage; the per-step kernels below are the
// single source of stepping arithmetic for every simulation surface, so
// materialized and streaming runs agree bitwise.

struct FlatTables {
    int n = 0, np = 0, l = 1, d = 1, l2 = 2;
    double dt = 0.0, x0 = 0.0;
    double G1 = 0, G2 = 0, h1 = 0, h2 = 0, lam1 = 0, lam2 = 0, mu1 = 0, mu2 = 0;
    std::vector<double> A, b, Q1, Q2;      // np
    std::vector<double> B, alpha, beta;    // np * l2
    std::vector<double> C, sig;            // np * d
    std::vector<double> D;                 // np * d * l2, row-major in (j, i)
    std::vector<double> R1, R2;            // np * l * l

    FlatTables(const ProblemSpec& spec, const FeedbackStrategy& strat) {
        n = spec.grid.n_steps;
        np = n + 1;
        l = spec.l;
        d = spec.d;
        l2 = 2 * l;
        dt = spec.grid.dt();
        x0 = spec.x0;
        G1 = spec.G1; G2 = spec.G2; h1 = spec.h1; h2 = spec.h2;
        lam1 = spec.lam1; lam2 = spec.lam2; mu1 = spec.mu1; mu2 = spec.mu2;
        A.resize(np); b.resize(np); Q1.resize(np); Q2.resize(np);
        B.resize(static_cast<size_t>(np) * l2);
        alpha.resize(static_cast<size_t>(np) * l2);
        beta.resize(static_cast<size_t>(np) * l2);
        C.resize(static_cast<size_t>(np) * d);
        sig.resize(static_cast<size_t>(np) * d);
        D.resize(static_cast<size_t>(np) * d * l2);
        R1.resize(static_cast<size_t>(np) * l * l);
        R2.resize(static_cast<size_t>(np) * l * l);
        for (int k = 0; k < np; ++k) {
            A[k] = spec.A.v[k];
            b[k] = spec.b.v[k];
            Q1[k] = spec.Q1.v[k];
            Q2[k] = spec.Q2.v[k];
            for (int i = 0; i < l; ++i) {
                B[static_cast<size_t>(k) * l2 + i] = spec.B1.v(k, i);
                B[static_cast<size_t>(k) * l2 + l + i] = spec.B2.v(k, i);
            }
            for (int i = 0; i < l2; ++i) {
                alpha[static_cast<size_t>(k) * l2 + i] = strat.alpha(k, i);
                beta[static_cast<size_t>(k) * l2 + i] = strat.beta(k, i);
            }
            for (int j = 0; j < d; ++j) {
                C[static_cast<size_t>(k) * d + j] = spec.C.v(k, j);
                sig[static_cast<size_t>(k) * d + j] = spec.sigma.v(k, j);
                for (int i = 0; i < l; ++i) {
                    D[(static_cast<size_t>(k) * d + j) * l2 + i] = spec.D1.node(k)(j, i);
                    D[(static_cast<size_t>(k) * d + j) * l2 + l + i] = spec.D2.node(k)(j, i);
                }
            }
            for (int r = 0; r < l; ++r)
                for (int c = 0; c < l; ++c) {
                    R1[(static_cast<size_t>(k) * l + r) * l + c] = spec.R1.node(k)(r, c);
                    R2[(static_cast<size_t>(k) * l + r) * l + c] = spec.R2.node(k)(r, c);
                }
        }
    }

    const double* Bk(int k) const { return B.data() + static_cast<size_t>(k) * l2; }
    const double* alphak(int k) const { return alpha.data() + static_cast<size_t>(k) * l2; }
    const double* betak(int k) const { return beta.data() + static_cast<size_t>(k) * l2; }
    const double* Ck(int k) const { return C.data() + static_cast<size_t>(k) * d; }
    const double* sigk(int k) const { return sig.data() + static_cast<size_t>(k) * d; }
    const double* Dk(int k) const { return D.data() + static_cast<size_t>(k) * d * l2; }
    const double* Rk(int k, int player) const {
        return (player == 1 ? R1.data() : R2.data()) + static_cast<size_t>(k) * l * l;
    }

    double trap_w(int k, int k_lo) const {  // trapezoid weight on [s_{k_lo}, T]
        return (k == k_lo || k == n) ? 0.5 * dt : dt;
    }
};

inline void flat_control(const FlatTables& t, int k, double x, double* u) {
    const double* a = t.alphak(k);
    const double* be = t.betak(k);
    for (int i = 0; i < t.l2; ++i) u[i] = a[i] * x + be[i];
}

inline double flat_step(const FlatTables& t, int k, double x, const double* u,
                        const double* dw) {
    const double* B = t.Bk(k);
    double drift = t.A[k] * x + t.b[k];
    for (int i = 0; i < t.l2; ++i) drift += B[i] * u[i];
    const double* C = t.Ck(k);
    const double* sg = t.sigk(k);
    const double* D = t.Dk(k);
    double diff = 0.0;
    for (int j = 0; j < t.d; ++j) {
        double dj = C[j] * x + sg[j];
        const double* Dr = D + static_cast<size_t>(j) * t.l2;
        for (int i = 0; i < t.l2; ++i) dj += Dr[i] * u[i];
        diff += dj * dw[j];
    }
    return x + drift * t.dt + diff;
}

// Q_i x^2 + u_i' R_i u_i
inline double flat_runcost(const FlatTables& t, int k, int player, double x,
                           const double* u) {
    const double* R = t.Rk(k, player);
    const double* ui = u + (player - 1) * t.l;
    double quad = 0.0;
    for (int r = 0; r < t.l; ++r) {
        double rowsum = 0.0;
        for (int c = 0; c < t.l; ++c) rowsum += R[static_cast<size_t>(r) * t.l + c] * ui[c];
        quad += ui[r] * rowsum;
    }
    double q = (player == 1) ? t.Q1[k] : t.Q2[k];
    return q * x * x + quad;
}

struct Window {
    int k0 = 0;  // first step inside [t, t+eps)
    int m = 0;   // number of steps
    bool contains(int k) const { return k >= k0 && k < k0 + m; }
};

Window resolve_window(const TimeGrid& grid, double t, double eps) {
    const double dt = grid.dt();
    int k0 = static_cast<int>(std::lround(t / dt));
    int m = static_cast<int>(std::lround(eps / dt));
    if (std::abs(k0 * dt - t) > 1e-9 * grid.T)
        throw SpecError("spike: t must be a grid point");
    if (m < 1 || std::abs(m * dt - eps) > 1e-9 * grid.T)
        throw SpecError("spike: eps must be a positive multiple of dt");
    if (k0 < 0 || k0 + m > grid.n_steps)
        throw SpecError("spike: window [t, t+eps) must lie inside [0, T)");
    return {k0, m};
}

Eigen::VectorXd embed_v(const SpikeConfig& cfg, int l) {
    if (cfg.player != 1 && cfg.player != 2) throw SpecError("spike: player must be 1 or 2");
    if (cfg.v.size() != l) throw SpecError("spike: v must have length l");
    if (!cfg.v.allFinite()) throw SpecError("spike: v must be finite");
    Eigen::VectorXd vv = Eigen::VectorXd::Zero(2 * l);
    vv.segment((cfg.player - 1) * l, l) = cfg.v;
    return vv;
}

}  // namespace

// ── simulate / cost / spike (materialized) ────────────────────────────────

PathBatch simulate(const ProblemSpec& spec, const FeedbackStrategy& strat,
                   int64_t n_paths, uint64_t base_seed) {
    FlatTables tb(spec, strat);
    CounterRng rng(base_seed);

    PathBatch batch;
    batch.n_paths = n_paths;
    batch.grid = spec.grid;
    batch.d = tb.d;
    batch.l2 = tb.l2;
    batch.base_seed = base_seed;
    batch.X.resize(n_paths, tb.np);
    batch.dW.resize(n_paths, static_cast<int64_t>(tb.n) * tb.d);
    batch.u.resize(n_paths, static_cast<int64_t>(tb.np) * tb.l2);
    batch.valid.assign(static_cast<size_t>(n_paths), 1);

    const double sqdt = std::sqrt(tb.dt);
    parallel_chunks(n_paths, [&](int64_t, int64_t lo, int64_t hi) {
        std::vector<double> z(static_cast<size_t>(tb.d));
        for (int64_t p = lo; p < hi; ++p) {
            double x = tb.x0;
            bool ok = true;
            for (int k = 0; k < tb.n; ++k) {
                batch.X(p, k) = x;
                rng.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), tb.d,
                            z.data());
                double* dw = batch.dW.row(p).data() + static_cast<int64_t>(k) * tb.d;
                for (int j = 0; j < tb.d; ++j) dw[j] = sqdt * z[j];
                double* u = batch.u.row(p).data() + static_cast<int64_t>(k) * tb.l2;
                flat_control(tb, k, x, u);
                x = flat_step(tb, k, x, u, dw);
                if (!std::isfinite(x)) { ok = false; x = 0.0; }
            }
            batch.X(p, tb.n) = x;
            flat_control(tb, tb.n, x,
                         batch.u.row(p).data() + static_cast<int64_t>(tb.n) * tb.l2);
            batch.valid[static_cast<size_t>(p)] = ok ? 1 : 0;
        }
    });
    return batch;
}

Eigen::ArrayXd expected_state(const ProblemSpec& spec, const FeedbackStrategy& strat,
                              double t, double x_t) {
    const TimeGrid& g = spec.grid;
    auto rhs = [&](double s, double m) {
        Eigen::VectorXd a = strat.alpha_at(s), be = strat.beta_at(s);
        Eigen::VectorXd B(2 * spec.l);
        B << spec.B1.at(g, s), spec.B2.at(g, s);
        return (spec.A.at(g, s) + B.dot(a)) * m + B.dot(be) + spec.b.at(g, s);
    };
    Eigen::ArrayXd m = Eigen::ArrayXd::Constant(g.n_points(), x_t);
    int k0 = g.cell(t);
    if (g.theta(t, k0) > 0.5) ++k0;  // nearest node; t is a node in practice
    double y = x_t;
    const double h = g.dt();
    for (int k = k0; k < g.n_steps; ++k) {
        double s = g.point(k);
        double f1 = rhs(s, y);
        double f2 = rhs(s + 0.5 * h, y + 0.5 * h * f1);
        double f3 = rhs(s + 0.5 * h, y + 0.5 * h * f2);
        double f4 = rhs(s + h, y + h * f3);
        y += h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        m[k + 1] = y;
    }
    return m;
}

CostEstimate cost(const ProblemSpec& spec, const PathBatch& batch, int player,
                  int t_index) {
    if (t_index != 0)
        throw SpecError("cost: only the unconditional t_index = 0 estimate is defined");
    if (player != 1 && player != 2) throw SpecError("cost: player must be 1 or 2");

    FeedbackStrategy dummy;  // tables only read spec coefficients below
    dummy.grid = spec.grid;
    dummy.l = spec.l;
    dummy.alpha = Eigen::MatrixXd::Zero(spec.grid.n_points(), 2 * spec.l);
    dummy.beta = dummy.alpha;
    FlatTables tb(spec, dummy);

    const int64_t n = batch.n_paths;
    int64_t invalid = std::count(batch.valid.begin(), batch.valid.end(), 0);
    if (invalid * 1000 > n)  // > 0.1% blown-up paths: estimates are garbage
        throw SpecError("cost: invalid path fraction exceeds 0.1%");

    const double G = (player == 1) ? tb.G1 : tb.G2;
    const double h = (player == 1) ? tb.h1 : tb.h2;
    const double lam = (player == 1) ? tb.lam1 : tb.lam2;
    const double mu = (player == 1) ? tb.mu1 : tb.mu2;

    Eigen::ArrayXd L(n), XT(n);
    parallel_chunks(n, [&](int64_t, int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
            double acc = 0.0;
            const double* urow = batch.u.row(p).data();
            for (int k = 0; k <= tb.n; ++k)
                acc += tb.trap_w(k, 0) *
                       flat_runcost(tb, k, player, batch.X(p, k),
                                    urow + static_cast<int64_t>(k) * tb.l2);
            double xT = batch.X(p, tb.n);
            L[p] = 0.5 * acc + 0.5 * G * xT * xT;
            XT[p] = xT;
        }
    });

    double Lbar = L.mean(), Xbar = XT.mean();
    double varL = (L - Lbar).square().sum() / std::max<int64_t>(1, n - 1);
    double varX = (XT - Xbar).square().sum() / std::max<int64_t>(1, n - 1);

    CostEstimate est;
    est.mean = Lbar - 0.5 * h * Xbar * Xbar - (lam * spec.x0 + mu) * Xbar;
    est.std_err = std::sqrt(varL / static_cast<double>(n));
    est.var_xbar = varX / static_cast<double>(n);
    return est;
}

PathBatch spike(const PathBatch& batch, const SpikeConfig& cfg, const ProblemSpec& spec,
                const FeedbackStrategy& strat) {
    FlatTables tb(spec, strat);
    Window w = resolve_window(spec.grid, cfg.t, cfg.eps);
    Eigen::VectorXd vv = embed_v(cfg, spec.l);
    const bool open_loop = (cfg.mode == SpikeConfig::Mode::OpenLoop);

    PathBatch out = batch;
    parallel_chunks(batch.n_paths, [&](int64_t, int64_t lo, int64_t hi) {
        std::vector<double> u(static_cast<size_t>(tb.l2));
        for (int64_t p = lo; p < hi; ++p) {
            double x = batch.X(p, w.k0);
            bool ok = batch.valid[static_cast<size_t>(p)] != 0;
            for (int k = w.k0; k < tb.n; ++k) {
                out.X(p, k) = x;
                if (open_loop) {
                    const double* ub = batch.u.row(p).data() + static_cast<int64_t>(k) * tb.l2;
                    std::copy(ub, ub + tb.l2, u.begin());
                } else {
                    flat_control(tb, k, x, u.data());
                }
                if (w.contains(k))
                    for (int i = 0; i < tb.l2; ++i) u[static_cast<size_t>(i)] += vv[i];
                std::copy(u.begin(), u.end(),
                          out.u.row(p).data() + static_cast<int64_t>(k) * tb.l2);
                x = flat_step(tb, k, x, u.data(),
                              batch.dW.row(p).data() + static_cast<int64_t>(k) * tb.d);
                if (!std::isfinite(x)) { ok = false; x = 0.0; }
            }
            out.X(p, tb.n) = x;
            if (open_loop) {
                const double* ub = batch.u.row(p).data() + static_cast<int64_t>(tb.n) * tb.l2;
                std::copy(ub, ub + tb.l2,
                          out.u.row(p).data() + static_cast<int64_t>(tb.n) * tb.l2);
            } else {
                flat_control(tb, tb.n, x,
                             out.u.row(p).data() + static_cast<int64_t>(tb.n) * tb.l2);
            }
            out.valid[static_cast<size_t>(p)] = ok ? 1 : 0;
        }
    });
    return out;
}

// ── First-order prediction ────────────────────────────────────────────────

namespace {

// Phi recomputed for the strategy actually simulated (beta from the table;
// alpha is assumed to be the equilibrium gain, which keeps M, N valid).
// With beta given as data the pair decouples into two driven linear ODEs.
std::pair<Eigen::ArrayXd, Eigen::ArrayXd> phi_for_strategy(const ProblemSpec& spec,
                                                           const RiccatiSolution& sol,
                                                           const FeedbackStrategy& strat) {
    const TimeGrid& g = spec.grid;
    const int n = g.n_steps, l = spec.l;

    auto hermite = [&](const Eigen::ArrayXd& y, const Eigen::ArrayXd& dy, double s) {
        int k = g.cell(s);
        double th = g.theta(s, k), dt = g.dt();
        double t2 = th * th, t3 = t2 * th;
        return (2 * t3 - 3 * t2 + 1) * y[k] + (t3 - 2 * t2 + th) * dt * dy[k] +
               (-2 * t3 + 3 * t2) * y[k + 1] + (t3 - t2) * dt * dy[k + 1];
    };

    auto rhs = [&](double s, const Eigen::Vector2d& phi) -> Eigen::Vector2d {
        double M1 = hermite(sol.M1, sol.dM1, s);
        double Mt = hermite(sol.Mtilde, sol.dMtilde, s);
        double M2 = M1 / Mt;
        double N1 = sol.zero_h ? 0.0 : M1 / hermite(sol.J1, sol.dJ1, s);
        double N2 = sol.zero_h ? 0.0 : (spec.h2 / spec.h1) * N1;

        Eigen::VectorXd B(2 * l);
        B << spec.B1.at(g, s), spec.B2.at(g, s);
        Eigen::MatrixXd D(spec.d, 2 * l);
        D << spec.D1.at(g, s), spec.D2.at(g, s);
        Eigen::VectorXd C = spec.C.at(g, s), sg = spec.sigma.at(g, s);
        Eigen::VectorXd beta = strat.beta_at(s);

        double Bbeta = B.dot(beta);
        double Cterm = C.dot(D * beta) + C.dot(sg);
        double bb = spec.b.at(g, s);
        double As = spec.A.at(g, s);
        return {-As * phi[0] - (M1 - N1) * (Bbeta + bb) - M1 * Cterm,
                -As * phi[1] - (M2 - N2) * (Bbeta + bb) - M2 * Cterm};
    };

    Eigen::ArrayXd Phi1(n + 1), Phi2(n + 1);
    Eigen::Vector2d y(-spec.mu1, -spec.mu2);
    Phi1[n] = y[0];
    Phi2[n] = y[1];
    const double h = -g.dt();
    for (int k = n; k > 0; --k) {
        double s = g.point(k);
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

// int_t^{t+eps} [ <E_t Lambda_i(s;t), v> + 1/2 <H_i(s) v, v> ] ds by
// trapezoid over the window nodes. E_t Lambda is analytic: X* enters
// linearly, so the conditional mean just substitutes m(s).
double first_order_pred(const ProblemSpec& spec, const RiccatiSolution& sol,
                        const FeedbackStrategy& strat, const Eigen::ArrayXd& PhiHat1,
                        const Eigen::ArrayXd& PhiHat2, const SpikeConfig& cfg, double x_t,
                        const Eigen::ArrayXd& m) {
    const TimeGrid& g = spec.grid;
    Window w = resolve_window(g, cfg.t, cfg.eps);
    const int i = cfg.player, l = spec.l;

    double acc = 0.0;
    for (int k = w.k0; k <= w.k0 + w.m; ++k) {
        double s = g.point(k);
        double Mi = (i == 1) ? sol.M1[k] : sol.M2[k];
        double Ni = (i == 1) ? sol.N1[k] : sol.N2[k];
        double Gi = (i == 1) ? sol.Gam1[k] : sol.Gam2[k];
        double Pi = (i == 1) ? sol.P1[k] : sol.P2[k];
        double Phii = (i == 1) ? PhiHat1[k] : PhiHat2[k];

        Eigen::VectorXd ubar =
            strat.alpha.row(k).transpose() * m[k] + strat.beta.row(k).transpose();
        Eigen::VectorXd Bi = (i == 1) ? spec.B1.node(k) : spec.B2.node(k);
        Eigen::MatrixXd Di = (i == 1) ? spec.D1.node(k) : spec.D2.node(k);
        Eigen::MatrixXd Ri = (i == 1) ? spec.R1.node(k) : spec.R2.node(k);

        double pbar = (Mi - Ni) * m[k] - Gi * x_t + Phii;
        Eigen::MatrixXd Dfull(spec.d, 2 * l);
        Dfull << spec.D1.node(k), spec.D2.node(k);
        Eigen::VectorXd kbar =
            Mi * (spec.C.node(k) * m[k] + Dfull * ubar + spec.sigma.node(k));
        Eigen::VectorXd lam_bar =
            Ri * ubar.segment((i - 1) * l, l) + Bi * pbar + Di.transpose() * kbar;
        Eigen::MatrixXd H = Ri + Pi * (Di.transpose() * Di);

        double f = lam_bar.dot(cfg.v) + 0.5 * cfg.v.dot(H * cfg.v);
        double wgt = (k == w.k0 || k == w.k0 + w.m) ? 0.5 : 1.0;
        acc += wgt * g.dt() * f;
    }
    return acc;
}

// ── Streaming paired gap estimator ────────────────────────────────────────

struct PairSums {
    double dL = 0, dX = 0, dL2 = 0, dX2 = 0, dLdX = 0, xb = 0, xp = 0;
};

// Simulates base + one perturbed trajectory per variant, sharing draws, and
// accumulates paired cost statistics. Paths start at node k_start with state
// x_start; costs integrate over [s_{k_start}, T].
std::vector<PairSums> paired_sweep(const FlatTables& tb, const CounterRng& rng,
                                   int64_t n_paths, int k_start, double x_start,
                                   const std::vector<SpikeConfig>& cfgs,
                                   const TimeGrid& grid) {
    const int V = static_cast<int>(cfgs.size());
    std::vector<Window> wins(cfgs.size());
    std::vector<Eigen::VectorXd> vvs(cfgs.size());
    std::vector<char> open(cfgs.size());
    for (int v = 0; v < V; ++v) {
        wins[v] = resolve_window(grid, cfgs[v].t, cfgs[v].eps);
        if (wins[v].k0 < k_start)
            throw SpecError("verify: spike window precedes the start time");
        vvs[v] = embed_v(cfgs[v], tb.l);
        open[v] = (cfgs[v].mode == SpikeConfig::Mode::OpenLoop) ? 1 : 0;
    }

    const int64_t n_chunks = (n_paths + kChunk - 1) / kChunk;
    std::vector<std::vector<PairSums>> slots(static_cast<size_t>(n_chunks));

    const double sqdt = std::sqrt(tb.dt);
    parallel_chunks(n_paths, [&](int64_t c, int64_t lo, int64_t hi) {
        std::vector<PairSums> acc(static_cast<size_t>(V));
        std::vector<double> ub(static_cast<size_t>(tb.l2)), uv(static_cast<size_t>(tb.l2));
        std::vector<double> z(static_cast<size_t>(tb.d)), dw(static_cast<size_t>(tb.d));
        std::vector<double> xs(static_cast<size_t>(V)), Lv(static_cast<size_t>(V));
        double Lb[2];
        for (int64_t p = lo; p < hi; ++p) {
            double xb = x_start;
            std::fill(xs.begin(), xs.end(), x_start);
            std::fill(Lv.begin(), Lv.end(), 0.0);
            Lb[0] = Lb[1] = 0.0;
            for (int k = k_start; k <= tb.n; ++k) {
                const double wgt = tb.trap_w(k, k_start);
                flat_control(tb, k, xb, ub.data());
                Lb[0] += wgt * flat_runcost(tb, k, 1, xb, ub.data());
                Lb[1] += wgt * flat_runcost(tb, k, 2, xb, ub.data());
                const bool last = (k == tb.n);
                if (!last) {
                    rng.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), tb.d,
                                z.data());
                    for (int j = 0; j < tb.d; ++j) dw[j] = sqdt * z[j];
                }
                for (int v = 0; v < V; ++v) {
                    double& xv = xs[static_cast<size_t>(v)];
                    if (open[v])
                        uv = ub;
                    else
                        flat_control(tb, k, xv, uv.data());
                    if (!last && wins[v].contains(k)) {
                        const Eigen::VectorXd& vv = vvs[static_cast<size_t>(v)];
                        for (int i = 0; i < tb.l2; ++i) uv[static_cast<size_t>(i)] += vv[i];
                    }
                    Lv[static_cast<size_t>(v)] +=
                        wgt * flat_runcost(tb, k, cfgs[static_cast<size_t>(v)].player, xv,
                                           uv.data());
                    if (!last) xv = flat_step(tb, k, xv, uv.data(), dw.data());
                }
                if (!last) xb = flat_step(tb, k, xb, ub.data(), dw.data());
            }
            for (int v = 0; v < V; ++v) {
                const int player = cfgs[static_cast<size_t>(v)].player;
                const double G = (player == 1) ? tb.G1 : tb.G2;
                double xT = xs[static_cast<size_t>(v)];
                double lpert = 0.5 * Lv[static_cast<size_t>(v)] + 0.5 * G * xT * xT;
                double lbase = 0.5 * Lb[player - 1] + 0.5 * G * xb * xb;
                PairSums& a = acc[static_cast<size_t>(v)];
                double dL = lpert - lbase, dX = xT - xb;
                a.dL += dL;
                a.dX += dX;
                a.dL2 += dL * dL;
                a.dX2 += dX * dX;
                a.dLdX += dL * dX;
                a.xb += xb;
                a.xp += xT;
            }
        }
        slots[static_cast<size_t>(c)] = std::move(acc);
    });

    std::vector<PairSums> total(static_cast<size_t>(V));
    for (const auto& s : slots)
        for (int v = 0; v < V; ++v) {
            total[v].dL += s[v].dL;
            total[v].dX += s[v].dX;
            total[v].dL2 += s[v].dL2;
            total[v].dX2 += s[v].dX2;
            total[v].dLdX += s[v].dLdX;
            total[v].xb += s[v].xb;
            total[v].xp += s[v].xp;
        }
    return total;
}

// gap = mean(dL) - kappa mean(dX), kappa = h/2 (Xbar' + Xbar) + lam x_t + mu:
// exact algebra for the difference of the two plug-in cost estimates.
GapEstimate finish_gap(const PairSums& s, int64_t n, int player, const FlatTables& tb,
                       double x_t) {
    const double h = (player == 1) ? tb.h1 : tb.h2;
    const double lam = (player == 1) ? tb.lam1 : tb.lam2;
    const double mu = (player == 1) ? tb.mu1 : tb.mu2;
    const double nn = static_cast<double>(n);
    double xbar_b = s.xb / nn, xbar_p = s.xp / nn;
    double kappa = 0.5 * h * (xbar_p + xbar_b) + lam * x_t + mu;

    GapEstimate g;
    g.n_paths = n;
    g.mean = s.dL / nn - kappa * s.dX / nn;
    double varD = (s.dL2 - s.dL * s.dL / nn) - 2.0 * kappa * (s.dLdX - s.dL * s.dX / nn) +
                  kappa * kappa * (s.dX2 - s.dX * s.dX / nn);
    varD = std::max(0.0, varD) / std::max(1.0, nn - 1.0);
    g.std_err = std::sqrt(varD / nn);
    return g;
}

}  // namespace

GapEstimate verify_equilibrium(const ProblemSpec& spec, const FeedbackStrategy& strat,
                               const RiccatiSolution& sol, const SpikeConfig& cfg,
                               int64_t n_paths, uint64_t base_seed, int n_outer) {
    FlatTables tb(spec, strat);
    auto [PhiHat1, PhiHat2] = phi_for_strategy(spec, sol, strat);
    Window w = resolve_window(spec.grid, cfg.t, cfg.eps);

    if (w.k0 == 0) {
        auto sums = paired_sweep(tb, CounterRng(base_seed), n_paths, 0, spec.x0, {cfg},
                                 spec.grid);
        GapEstimate g = finish_gap(sums[0], n_paths, cfg.player, tb, spec.x0);
        Eigen::ArrayXd m = expected_state(spec, strat, 0.0, spec.x0);
        g.first_order_pred =
            first_order_pred(spec, sol, strat, PhiHat1, PhiHat2, cfg, spec.x0, m);
        return g;
    }

    // Nested conditional estimate: outer states at t, inner sub-batches.
    n_outer = static_cast<int>(std::min<int64_t>(n_outer, n_paths));
    int64_t n_inner = std::max<int64_t>(1, n_paths / n_outer);
    CounterRng outer_rng(base_seed);

    Eigen::ArrayXd xt(n_outer);
    {
        std::vector<double> u(static_cast<size_t>(tb.l2));
        std::vector<double> z(static_cast<size_t>(tb.d)), dw(static_cast<size_t>(tb.d));
        const double sqdt = std::sqrt(tb.dt);
        for (int p = 0; p < n_outer; ++p) {
            double x = tb.x0;
            for (int k = 0; k < w.k0; ++k) {
                outer_rng.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), tb.d,
                                  z.data());
                for (int j = 0; j < tb.d; ++j) dw[j] = sqdt * z[j];
                flat_control(tb, k, x, u.data());
                x = flat_step(tb, k, x, u.data(), dw.data());
            }
            xt[p] = x;
        }
    }

    Eigen::ArrayXd gaps(n_outer), preds(n_outer);
    for (int p = 0; p < n_outer; ++p) {
        CounterRng inner(mix_seed(base_seed, static_cast<uint64_t>(p)));
        auto sums = paired_sweep(tb, inner, n_inner, w.k0, xt[p], {cfg}, spec.grid);
        gaps[p] = finish_gap(sums[0], n_inner, cfg.player, tb, xt[p]).mean;
        Eigen::ArrayXd m = expected_state(spec, strat, cfg.t, xt[p]);
        preds[p] = first_order_pred(spec, sol, strat, PhiHat1, PhiHat2, cfg, xt[p], m);
    }

    GapEstimate g;
    g.n_paths = n_paths;
    g.mean = gaps.mean();
    double var_between = (gaps - g.mean).square().sum() / std::max(1, n_outer - 1);
    g.std_err = std::sqrt(var_between / n_outer);
    g.first_order_pred = preds.mean();
    return g;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> h_matrix(const ProblemSpec& spec,
                                                     const RiccatiSolution& sol,
                                                     double s) {
    const TimeGrid& g = spec.grid;
    Eigen::MatrixXd D1 = spec.D1.at(g, s), D2 = spec.D2.at(g, s);
    Eigen::MatrixXd H1 = spec.R1.at(g, s) + sol.at(sol.P1, s) * (D1.transpose() * D1);
    Eigen::MatrixXd H2 = spec.R2.at(g, s) + sol.at(sol.P2, s) * (D2.transpose() * D2);
    for (const auto* H : {&H1, &H2}) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*H);
        double mn = es.eigenvalues().minCoeff();
        if (mn < -1e-10) throw NotPSD(s, mn);
    }
    return {H1, H2};
}

VariationReport variation_processes(const ProblemSpec& spec, const FeedbackStrategy& strat,
                                    const SpikeConfig& cfg, int64_t n_paths,
                                    uint64_t base_seed) {
    FlatTables tb(spec, strat);
    Window w = resolve_window(spec.grid, cfg.t, cfg.eps);
    Eigen::VectorXd vv = embed_v(cfg, spec.l);
    CounterRng rng(base_seed);

    const int np = tb.np;
    const int64_t n_chunks = (n_paths + kChunk - 1) / kChunk;
    struct Slot {
        double supY2 = 0, supY4 = 0, supZ2 = 0, supZ4 = 0;
        Eigen::ArrayXd sumY, sumY2;
    };
    std::vector<Slot> slots(static_cast<size_t>(n_chunks));

    // Dv and B'v per node (window forcing).
    std::vector<double> Dv(static_cast<size_t>(np) * tb.d), Bv(static_cast<size_t>(np));
    for (int k = 0; k < np; ++k) {
        const double* D = tb.Dk(k);
        const double* B = tb.Bk(k);
        double bv = 0.0;
        for (int i = 0; i < tb.l2; ++i) bv += B[i] * vv[i];
        Bv[static_cast<size_t>(k)] = bv;
        for (int j = 0; j < tb.d; ++j) {
            double acc = 0.0;
            const double* Dr = D + static_cast<size_t>(j) * tb.l2;
            for (int i = 0; i < tb.l2; ++i) acc += Dr[i] * vv[i];
            Dv[static_cast<size_t>(k) * tb.d + j] = acc;
        }
    }

    const double sqdt = std::sqrt(tb.dt);
    parallel_chunks(n_paths, [&](int64_t c, int64_t lo, int64_t hi) {
        Slot acc;
        acc.sumY = Eigen::ArrayXd::Zero(np);
        acc.sumY2 = Eigen::ArrayXd::Zero(np);
        std::vector<double> z(static_cast<size_t>(tb.d));
        for (int64_t p = lo; p < hi; ++p) {
            double Y = 0.0, Z = 0.0, supY = 0.0, supZ = 0.0;
            for (int k = w.k0; k < tb.n; ++k) {
                acc.sumY[k] += Y;
                acc.sumY2[k] += Y * Y;
                rng.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), tb.d,
                            z.data());
                const bool in_w = w.contains(k);
                double dY = tb.A[k] * Y * tb.dt;
                double dZ = (tb.A[k] * Z + (in_w ? Bv[static_cast<size_t>(k)] : 0.0)) * tb.dt;
                const double* Ck = tb.Ck(k);
                for (int j = 0; j < tb.d; ++j) {
                    double dwj = sqdt * z[j];
                    dY += (Ck[j] * Y + (in_w ? Dv[static_cast<size_t>(k) * tb.d + j] : 0.0)) *
                          dwj;
                    dZ += Ck[j] * Z * dwj;
                }
                Y += dY;
                Z += dZ;
                supY = std::max(supY, std::abs(Y));
                supZ = std::max(supZ, std::abs(Z));
            }
            acc.sumY[tb.n] += Y;
            acc.sumY2[tb.n] += Y * Y;
            acc.supY2 += supY * supY;
            acc.supY4 += supY * supY * supY * supY;
            acc.supZ2 += supZ * supZ;
            acc.supZ4 += supZ * supZ * supZ * supZ;
        }
        slots[static_cast<size_t>(c)] = std::move(acc);
    });

    Slot tot;
    tot.sumY = Eigen::ArrayXd::Zero(np);
    tot.sumY2 = Eigen::ArrayXd::Zero(np);
    for (const auto& s : slots) {
        tot.supY2 += s.supY2;
        tot.supY4 += s.supY4;
        tot.supZ2 += s.supZ2;
        tot.supZ4 += s.supZ4;
        tot.sumY += s.sumY;
        tot.sumY2 += s.sumY2;
    }

    const double nn = static_cast<double>(n_paths);
    VariationReport rep;
    rep.mean_sup_y2 = tot.supY2 / nn;
    rep.mean_sup_z2 = tot.supZ2 / nn;
    rep.se_sup_y2 =
        std::sqrt(std::max(0.0, tot.supY4 / nn - rep.mean_sup_y2 * rep.mean_sup_y2) / nn);
    rep.se_sup_z2 =
        std::sqrt(std::max(0.0, tot.supZ4 / nn - rep.mean_sup_z2 * rep.mean_sup_z2) / nn);
    for (int k = w.k0; k < np; ++k) {
        double meanY = tot.sumY[k] / nn;
        double varY = std::max(0.0, tot.sumY2[k] / nn - meanY * meanY);
        double se = std::sqrt(varY / nn);
        rep.max_abs_mean_y = std::max(rep.max_abs_mean_y, std::abs(meanY));
        if (se > 0.0)
            rep.max_mean_y_over_se = std::max(rep.max_mean_y_over_se, std::abs(meanY) / se);
    }
    return rep;
}

void simulate_moments(const ProblemSpec& spec, const FeedbackStrategy& strat,
                      int64_t n_paths, uint64_t base_seed, Eigen::ArrayXd& mean,
                      Eigen::ArrayXd& var) {
    FlatTables tb(spec, strat);
    CounterRng rng(base_seed);
    const int np = tb.np;
    const int64_t n_chunks = (n_paths + kChunk - 1) / kChunk;
    std::vector<Eigen::ArrayXd> sums(static_cast<size_t>(n_chunks)),
        sqs(static_cast<size_t>(n_chunks));

    const double sqdt = std::sqrt(tb.dt);
    parallel_chunks(n_paths, [&](int64_t c, int64_t lo, int64_t hi) {
        Eigen::ArrayXd s = Eigen::ArrayXd::Zero(np), q = Eigen::ArrayXd::Zero(np);
        std::vector<double> u(static_cast<size_t>(tb.l2));
        std::vector<double> z(static_cast<size_t>(tb.d)), dw(static_cast<size_t>(tb.d));
        for (int64_t p = lo; p < hi; ++p) {
            double x = tb.x0;
            for (int k = 0; k < tb.n; ++k) {
                s[k] += x;
                q[k] += x * x;
                rng.normals(static_cast<uint64_t>(p), static_cast<uint32_t>(k), tb.d,
                            z.data());
                for (int j = 0; j < tb.d; ++j) dw[j] = sqdt * z[j];
                flat_control(tb, k, x, u.data());
                x = flat_step(tb, k, x, u.data(), dw.data());
            }
            s[tb.n] += x;
            q[tb.n] += x * x;
        }
        sums[static_cast<size_t>(c)] = std::move(s);
        sqs[static_cast<size_t>(c)] = std::move(q);
    });

    Eigen::ArrayXd S = Eigen::ArrayXd::Zero(np), Q = Eigen::ArrayXd::Zero(np);
    for (int64_t c = 0; c < n_chunks; ++c) {
        S += sums[static_cast<size_t>(c)];
        Q += sqs[static_cast<size_t>(c)];
    }
    const double nn = static_cast<double>(n_paths);
    mean = S / nn;
    var = (Q / nn - mean.square()).max(0.0) * (nn / std::max(1.0, nn - 1.0));
}

std::vector<VerifyRow> verify_suite(const ProblemSpec& spec, const FeedbackStrategy& strat,
                                    const RiccatiSolution& sol, double t,
                                    const std::vector<double>& eps_list, int64_t n_paths,
                                    uint64_t base_seed) {
    FlatTables tb(spec, strat);
    auto [PhiHat1, PhiHat2] = phi_for_strategy(spec, sol, strat);
    const int l = spec.l;

    // variant ladder: players x (+-e_j)
    std::vector<SpikeConfig> protos;
    for (int player = 1; player <= 2; ++player)
        for (int j = 0; j < l; ++j)
            for (double sign : {+1.0, -1.0}) {
                SpikeConfig c;
                c.player = player;
                c.t = t;
                c.v = sign * Eigen::VectorXd::Unit(l, j);
                protos.push_back(c);
            }

    struct Entry {
        VerifyRow row;
        double eps;
    };
    std::vector<Entry> entries;

    for (double eps : eps_list) {
        std::vector<SpikeConfig> cfgs = protos;
        for (auto& c : cfgs) c.eps = eps;
        if (t == 0.0) {
            auto sums = paired_sweep(tb, CounterRng(base_seed), n_paths, 0, spec.x0, cfgs,
                                     spec.grid);
            Eigen::ArrayXd m = expected_state(spec, strat, 0.0, spec.x0);
            for (size_t v = 0; v < cfgs.size(); ++v) {
                GapEstimate g = finish_gap(sums[v], n_paths, cfgs[v].player, tb, spec.x0);
                g.first_order_pred = first_order_pred(spec, sol, strat, PhiHat1, PhiHat2,
                                                      cfgs[v], spec.x0, m);
                VerifyRow row;
                row.player = cfgs[v].player;
                row.t = t;
                row.eps = eps;
                row.v_index = static_cast<int>(v % (2 * static_cast<size_t>(l)));
                row.gap = g.mean;
                row.std_err = g.std_err;
                row.pred = g.first_order_pred;
                entries.push_back({row, eps});
            }
        } else {
            for (size_t v = 0; v < cfgs.size(); ++v) {
                GapEstimate g =
                    verify_equilibrium(spec, strat, sol, cfgs[v], n_paths, base_seed);
                VerifyRow row;
                row.player = cfgs[v].player;
                row.t = t;
                row.eps = eps;
                row.v_index = static_cast<int>(v % (2 * static_cast<size_t>(l)));
                row.gap = g.mean;
                row.std_err = g.std_err;
                row.pred = g.first_order_pred;
                entries.push_back({row, eps});
            }
        }
    }

    // Expansion-consistency gate: fit C in |gap - pred| ~ C eps^2 per
    // (player, v_index) ladder, then check every rung.
    const size_t per_eps = protos.size();
    std::vector<VerifyRow> rows;
    rows.reserve(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        size_t variant = i % per_eps;
        double num = 0.0, den = 0.0;
        for (size_t j = variant; j < entries.size(); j += per_eps) {
            double dd = std::abs(entries[j].row.gap - entries[j].row.pred);
            double e2 = entries[j].eps * entries[j].eps;
            num += dd * e2;
            den += e2 * e2;
        }
        double C = (den > 0.0) ? num / den : 0.0;
        VerifyRow row = entries[i].row;
        double dd = std::abs(row.gap - row.pred);
        bool expansion_ok =
            dd <= std::max(3.0 * row.std_err, C * row.eps * row.eps) * (1.0 + 1e-12);
        bool gap_ok = row.gap >= -3.0 * row.std_err;
        row.pass = expansion_ok && gap_ok;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace tilq
