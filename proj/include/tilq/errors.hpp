#pragma once

#include <stdexcept>
#include <string>

namespace tilq {

/// Base class for all solver-side failures. Carries the time location s at
/// which the failure was detected (negative when not applicable).
class SolverError : public std::runtime_error {
public:
    SolverError(std::string what, double s = -1.0)
        : std::runtime_error(std::move(what)), s_(s) {}

    double where() const noexcept { return s_; }

private:
    double s_;
};

/// R + M D'D (or another stage matrix) is numerically singular:
/// condition number above threshold.
class SingularLinearSystem : public SolverError {
public:
    SingularLinearSystem(double s, double cond)
        : SolverError("singular linear system at s=" + std::to_string(s) +
                          " (cond=" + std::to_string(cond) + ")",
                      s),
          cond_(cond) {}

    double cond() const noexcept { return cond_; }

private:
    double cond_;
};

/// M1 or Mtilde lost positivity during the backward sweep.
class NonPositive : public SolverError {
public:
    NonPositive(double s, const std::string& which, double value)
        : SolverError(which + " <= 0 at s=" + std::to_string(s) +
                          " (value=" + std::to_string(value) + ")",
                      s) {}
};

/// A denominator fell below the guard threshold (1e-14).
class DivisionByZero : public SolverError {
public:
    DivisionByZero(double s, const std::string& which)
        : SolverError("division by ~0 in " + which + " at s=" + std::to_string(s), s) {}
};

/// Mtilde left the [L1, L2] bracket although the existence conditions passed.
class BoundViolation : public SolverError {
public:
    BoundViolation(double s, double value, double lo, double hi)
        : SolverError("Mtilde=" + std::to_string(value) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) +
                          "] at s=" + std::to_string(s),
                      s) {}
};

/// H_i lost nonnegative definiteness (upstream data violates the standing
/// assumptions).
class NotPSD : public SolverError {
public:
    NotPSD(double s, double min_eig)
        : SolverError("H not PSD at s=" + std::to_string(s) +
                          " (min eig=" + std::to_string(min_eig) + ")",
                      s) {}
};

/// Config/spec level failure (parsing, shape, reduction preconditions).
class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tilq
