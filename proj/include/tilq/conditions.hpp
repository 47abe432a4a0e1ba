#pragma once

#include <string>
#include <vector>

#include "tilq/problem.hpp"

namespace tilq {

enum class CaseTag { standard_R, singular_R, neither };

std::string to_string(CaseTag tag);

struct Check {
    std::string name;
    bool pass = false;
    double witness = 0.0;
};

/// Machine-checkable record of the existence hypotheses: the terminal-weight
/// ordering G1 >= h1 >= 1, the proportionality B = lambda D'C, and the
/// case-specific definiteness conditions for the standard (R >= delta I > 0)
/// and singular (R == 0) regimes.
struct ConditionReport {
    double lambda = 0.0;    // fitted proportionality constant, >= 0
    double residual = 0.0;  // max-norm residual of B - lambda D'C
    CaseTag case_tag = CaseTag::neither;
    std::vector<Check> checks;
    bool overall = false;
};

struct ConditionTolerances {
    double prop_tol = 1e-9;   // inf-norm tolerance for B = lambda D'C
    double psd_slack = 1e-10; // eigenvalue slack for the definiteness checks
};

/// Least-squares fit of lambda in B(s) = lambda D(s)'C(s) over all grid
/// points (stacked blocks), clamped to lambda >= 0. Returns the fitted value
/// and the max-norm residual at that value.
std::pair<double, double> fit_lambda(const ProblemSpec& spec);

/// Evaluates the existence hypotheses on the whole grid. Pure; identical
/// inputs give identical reports.
ConditionReport check_conditions(const ProblemSpec& spec,
                                 const ConditionTolerances& tol = {});

}  // namespace tilq
