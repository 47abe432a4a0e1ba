#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "tilq/problem.hpp"
#include "tilq/riccati.hpp"
#include "tilq/strategy.hpp"

namespace tilq {

/// Row-major so each path's data is one contiguous span.
using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Euler-Maruyama ensemble. Path p is a deterministic function of
/// (base_seed, p); dW is the exact increment sequence consumed by the
/// stepper. Materialize only at desk scale - the verification drivers below
/// stream instead of storing.
struct PathBatch {
    int64_t n_paths = 0;
    TimeGrid grid;
    int d = 1, l2 = 2;  // Brownian dim, stacked control dim 2l
    uint64_t base_seed = 0;
    PathMatrix X;   // n_paths x (n_steps+1)
    PathMatrix dW;  // n_paths x (n_steps*d), step-major
    PathMatrix u;   // n_paths x ((n_steps+1)*2l), node-major
    std::vector<uint8_t> valid;

    double x(int64_t p, int k) const { return X(p, k); }
    Eigen::Map<const Eigen::VectorXd> control(int64_t p, int k) const {
        return {u.row(p).data() + static_cast<int64_t>(k) * l2, l2};
    }
    Eigen::Map<const Eigen::VectorXd> incr(int64_t p, int k) const {
        return {dW.row(p).data() + static_cast<int64_t>(k) * d, d};
    }
};

/// Spike perturbation u_player += v on [t, t+eps).
///
/// OpenLoop (default) holds both players' realized base controls fixed and
/// adds v on the window, matching the open-loop deviation the equilibrium
/// definition is stated for; the first-order expansion then applies verbatim.
/// ClosedLoop re-applies the feedback rule on the perturbed trajectory
/// (spiking player gets feedback + v inside the window).
struct SpikeConfig {
    double t = 0.0;
    double eps = 0.1;
    Eigen::VectorXd v;  // l-vector
    int player = 1;
    enum class Mode { OpenLoop, ClosedLoop };
    Mode mode = Mode::OpenLoop;
};

struct CostEstimate {
    double mean = 0.0;
    double std_err = 0.0;   // from the path variance of the linear part
    double var_xbar = 0.0;  // plug-in bias scale of the (E X_T)^2 term
};

struct GapEstimate {
    double mean = 0.0;
    double std_err = 0.0;  // paired (common random numbers) standard error
    int64_t n_paths = 0;
    double first_order_pred = 0.0;  // analytic int of <Lambda,v> + 1/2 <Hv,v>
};

struct VariationReport {
    double mean_sup_y2 = 0.0, se_sup_y2 = 0.0;
    double mean_sup_z2 = 0.0, se_sup_z2 = 0.0;
    double max_abs_mean_y = 0.0;      // max_s |mean Y_s|
    double max_mean_y_over_se = 0.0;  // max_s |mean Y_s| / SE(Y_s)
};

struct VerifyRow {
    int player = 1;
    double t = 0.0, eps = 0.0;
    int v_index = 0;  // index into the +-unit-vector ladder
    double gap = 0.0, std_err = 0.0, pred = 0.0;
    bool pass = false;
};

/// Euler-Maruyama under the feedback strategy; controls recorded at every
/// node (including T, where the running-cost trapezoid needs one).
PathBatch simulate(const ProblemSpec& spec, const FeedbackStrategy& strat,
                   int64_t n_paths, uint64_t base_seed);

/// m(s) = E_t[X*_s] on [t, T]: RK4 on dm/ds = (A + B'alpha) m + B'beta + b.
/// Entries of the returned grid array before t hold x_t.
Eigen::ArrayXd expected_state(const ProblemSpec& spec, const FeedbackStrategy& strat,
                              double t, double x_t);

/// Cost functional estimate for one player from a materialized batch
/// (unconditional, t_index = 0). The (E X_T)^2 and E X_T terms use the batch
/// mean; the documented O(1/n) plug-in bias scale is reported as var_xbar.
CostEstimate cost(const ProblemSpec& spec, const PathBatch& batch, int player,
                  int t_index = 0);

/// Re-simulates every path from cfg.t with the spike applied, reusing the
/// batch's increments bitwise (common random numbers).
PathBatch spike(const PathBatch& batch, const SpikeConfig& cfg, const ProblemSpec& spec,
                const FeedbackStrategy& strat);

/// Streaming paired estimator of J_i(perturbed) - J_i(base) plus the
/// analytic first-order prediction. For cfg.t > 0 the conditional estimate
/// uses nested Monte Carlo (n_outer outer states, n_paths/n_outer inner
/// paths per state).
GapEstimate verify_equilibrium(const ProblemSpec& spec, const FeedbackStrategy& strat,
                               const RiccatiSolution& sol, const SpikeConfig& cfg,
                               int64_t n_paths, uint64_t base_seed, int n_outer = 64);

/// H_i(s) = R_i(s) + P_i(s) D_i(s)'D_i(s); throws NotPSD below -1e-10.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> h_matrix(const ProblemSpec& spec,
                                                     const RiccatiSolution& sol, double s);

/// Order checks for the spike-variation processes Y (diffusion-forced) and
/// Z (drift-forced), driven by the same increments as the ensemble.
VariationReport variation_processes(const ProblemSpec& spec, const FeedbackStrategy& strat,
                                    const SpikeConfig& cfg, int64_t n_paths,
                                    uint64_t base_seed);

/// Streaming per-node ensemble moments of X (no batch materialization);
/// byte-identical to the materialized path for any worker count.
void simulate_moments(const ProblemSpec& spec, const FeedbackStrategy& strat,
                      int64_t n_paths, uint64_t base_seed, Eigen::ArrayXd& mean,
                      Eigen::ArrayXd& var);

/// Full spike ladder at one t: both players, v in {+-e_1..+-e_l}, every eps in
/// eps_list; one base sweep per eps feeds all variants (draws are keyed by
/// (seed, path, step), so sharing them across variants changes nothing).
/// The pass flag encodes gap >= -3 SE and the expansion-consistency bound
/// |gap - pred| <= max(3 SE, C eps^2) with C fitted across the eps ladder.
std::vector<VerifyRow> verify_suite(const ProblemSpec& spec, const FeedbackStrategy& strat,
                                    const RiccatiSolution& sol, double t,
                                    const std::vector<double>& eps_list, int64_t n_paths,
                                    uint64_t base_seed);

}  // namespace tilq
