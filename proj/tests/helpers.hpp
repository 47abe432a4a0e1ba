#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tilq/problem.hpp"

namespace tilq::testing {

// Standard-case instance of the existence theorem (case i): l=1, d=3,
// orthonormal diffusion-control columns, C mostly outside their span so the
// definiteness condition holds with lambda = 2.
inline ProblemSpec standard_case_spec(int n_steps = 100) {
    ConstantSpecBuilder b(1, 3);
    b.T = 1.0;
    b.n_steps = n_steps;
    b.x0 = 1.0;
    b.A = 0.1;
    b.b = 0.05;
    b.Q1 = 0.5;
    b.Q2 = 0.4;
    b.C << 0.05, 0.05, 0.5;
    b.D1 << 1, 0, 0;
    b.D2 << 0, 1, 0;
    b.B1 << 0.1;  // lambda = 2: B = lambda D'C
    b.B2 << 0.1;
    b.sigma << 0.1, 0.05, 0.15;
    b.R1 << 0.5;
    b.R2 << 0.5;
    b.G1 = 2.0;
    b.G2 = 1.8;
    b.h1 = 1.5;
    b.h2 = 1.2;
    b.lam1 = 0.3;
    b.lam2 = -0.2;
    b.mu1 = 0.1;
    b.mu2 = -0.05;
    return b.build();
}

// Singular-case instance (case ii): R == 0, D'D invertible, lambda = 3.
inline ProblemSpec singular_case_spec(int n_steps = 100) {
    ConstantSpecBuilder b(1, 3);
    b.T = 1.0;
    b.n_steps = n_steps;
    b.x0 = 0.8;
    b.A = -0.05;
    b.b = 0.02;
    b.Q1 = 0.3;
    b.Q2 = 0.25;
    b.C << 0.1, 0.05, 0.5;
    b.D1 << 1, 0, 0;
    b.D2 << 0, 1, 0;
    b.B1 << 0.3;  // lambda = 3
    b.B2 << 0.15;
    b.sigma << 0.08, 0.1, 0.04;
    b.R1 << 0.0;
    b.R2 << 0.0;
    b.G1 = 1.5;
    b.G2 = 1.4;
    b.h1 = 1.0;
    b.h2 = 1.1;
    b.lam1 = 0.1;
    b.lam2 = 0.2;
    b.mu1 = -0.02;
    b.mu2 = 0.03;
    return b.build();
}

// Decoupled instance: no controls in the dynamics, unit R. M, N, Gamma, Phi
// all have elementary closed forms.
inline ProblemSpec decoupled_spec(int n_steps = 100) {
    ConstantSpecBuilder b(1, 1);
    b.T = 1.0;
    b.n_steps = n_steps;
    b.x0 = 1.0;
    b.G1 = 2.0;
    b.G2 = 1.0;
    b.h1 = 1.0;
    b.h2 = 1.0;
    return b.build();
}

// Backward RK4 oracle for scalar linear/Riccati ODEs: integrates dy/ds =
// rhs(s, y) from (T, yT) down to exactly s_lo, using steps of size ~step_hint.
template <class F>
double backward_rk4(F&& rhs, double T, double yT, double s_lo, double step_hint) {
    int N = std::max(1, static_cast<int>(std::lround((T - s_lo) / step_hint)));
    double h = -(T - s_lo) / N;
    double y = yT;
    for (int k = 0; k < N; ++k) {
        double s = T + k * h;
        double f1 = rhs(s, y);
        double f2 = rhs(s + 0.5 * h, y + 0.5 * h * f1);
        double f3 = rhs(s + 0.5 * h, y + 0.5 * h * f2);
        double f4 = rhs(s + h, y + h * f3);
        y += h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
    }
    return y;
}

}  // namespace tilq::testing
