#pragma once

#include <string>
#include <vector>

#include "tilq/grid.hpp"
#include "tilq/sampled.hpp"

namespace tilq {

/// Full data of the two-player game: scalar state, l-dimensional controls,
/// d-dimensional Brownian motion, deterministic coefficients sampled on the
/// grid.
///
/// Dynamics:  dX = [A X + B1'u1 + B2'u2 + b] ds + [C X + D1 u1 + D2 u2 + sigma]' dW
/// Cost i:    1/2 E_t int [Q_i X^2 + u_i' R_i u_i] ds + 1/2 E_t[G_i X_T^2]
///            - 1/2 h_i (E_t X_T)^2 - (lam_i x_t + mu_i) E_t X_T
struct ProblemSpec {
    int l = 1;  // control dimension per player
    int d = 1;  // Brownian dimension
    TimeGrid grid;
    double x0 = 0.0;

    double G1 = 0.0, G2 = 0.0;
    double h1 = 0.0, h2 = 0.0;
    double lam1 = 0.0, lam2 = 0.0;
    double mu1 = 0.0, mu2 = 0.0;

    SampledScalar A, b, Q1, Q2;
    SampledVector B1, B2;   // l
    SampledVector C, sigma; // d
    SampledMatrix D1, D2;   // d x l
    SampledMatrix R1, R2;   // l x l, symmetric PSD
};

struct Violation {
    std::string field;
    int index = -1;  // grid index, -1 when not grid-local
    double value = 0.0;
    std::string message;
};

/// Checks every ProblemSpec invariant: shapes against (l, d, grid),
/// Q_i >= 0, G_i >= 0, R_i symmetric PSD, finiteness. Empty result means
/// the spec is well formed.
std::vector<Violation> validate(const ProblemSpec& spec);

/// Builds a spec where every coefficient is constant in time. Handy for
/// tests; uses the same validation path as loaded specs.
struct ConstantSpecBuilder {
    int l = 1, d = 1;
    double T = 1.0;
    int n_steps = 100;
    double x0 = 1.0;
    double A = 0.0, b = 0.0, Q1 = 0.0, Q2 = 0.0;
    Eigen::VectorXd B1, B2, C, sigma;
    Eigen::MatrixXd D1, D2, R1, R2;
    double G1 = 0.0, G2 = 0.0, h1 = 0.0, h2 = 0.0;
    double lam1 = 0.0, lam2 = 0.0, mu1 = 0.0, mu2 = 0.0;

    ConstantSpecBuilder(int l_, int d_) : l(l_), d(d_) {
        B1 = Eigen::VectorXd::Zero(l);
        B2 = Eigen::VectorXd::Zero(l);
        C = Eigen::VectorXd::Zero(d);
        sigma = Eigen::VectorXd::Zero(d);
        D1 = Eigen::MatrixXd::Zero(d, l);
        D2 = Eigen::MatrixXd::Zero(d, l);
        R1 = Eigen::MatrixXd::Identity(l, l);
        R2 = Eigen::MatrixXd::Identity(l, l);
    }

    ProblemSpec build() const;
};

/// Parses the JSON configuration format:
///   {l, d, T, n_steps, x0,
///    constants: {G1,G2,h1,h2,lam1,lam2,mu1,mu2},
///    functions: {A,B1,B2,C,D1,D2,b,sigma,Q1,Q2,R1,R2}}
/// where each function is {"constant": v} or {"samples": [v_0..v_n]}.
ProblemSpec parse_spec_json(const std::string& text);
ProblemSpec load_spec(const std::string& path);

/// Serializes a spec back to the config JSON (samples form). Used by sweep
/// to derive per-point configs without mutating the input file.
std::string spec_to_json(const ProblemSpec& spec);

/// Resamples every coefficient onto a grid with new_n_steps cells
/// (linear interpolation of the stored samples).
ProblemSpec resample(const ProblemSpec& spec, int new_n_steps);

}  // namespace tilq
