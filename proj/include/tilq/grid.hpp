#pragma once

#include <cmath>

#include "tilq/errors.hpp"

namespace tilq {

/// Uniform grid on [0, T] with n_steps cells: s_k = k*T/n_steps.
struct TimeGrid {
    double T = 1.0;
    int n_steps = 2;

    TimeGrid() = default;
    TimeGrid(double horizon, int steps) : T(horizon), n_steps(steps) {
        if (!(T > 0.0)) throw SpecError("TimeGrid: T must be > 0");
        if (n_steps < 2) throw SpecError("TimeGrid: n_steps must be >= 2");
    }

    double dt() const { return T / n_steps; }
    int n_points() const { return n_steps + 1; }
    double point(int k) const { return (k == n_steps) ? T : k * dt(); }

    /// Cell index for time s, clamped to [0, n_steps-1].
    int cell(double s) const {
        int k = static_cast<int>(std::floor(s / dt()));
        if (k < 0) k = 0;
        if (k > n_steps - 1) k = n_steps - 1;
        return k;
    }

    /// Barycentric position of s inside its cell, in [0, 1].
    double theta(double s, int k) const {
        double th = (s - point(k)) / dt();
        if (th < 0.0) th = 0.0;
        if (th > 1.0) th = 1.0;
        return th;
    }

    bool operator==(const TimeGrid&) const = default;
};

}  // namespace tilq
