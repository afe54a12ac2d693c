#pragma once

#include "otcal/hjb.hpp"
#include "otcal/pricing.hpp"

#include <vector>

namespace otcal {

// One evaluation of the dual objective at a fixed multiplier vector:
//   L(lambda) = lambda . targets - phi(0, x0),
//   dL/dlambda_i = target_i - price_i,
// where price_i reprices constraint i linearly under the controls frozen by
// the nonlinear solve. Both marches share their discrete operators, so the
// gradient is exact up to the policy-iteration tolerance.
struct EvalResult {
    double L = 0.0;
    double value_at_x0 = 0.0;
    std::vector<double> gradient; // targets - model prices
    std::vector<double> prices;
    ControlField controls;     // unsplit field, or the alive field when split
    ControlField controls_hit; // split problems only
    int max_policy_iterations = 0;
};

EvalResult eval_dual(const CalibrationProblem& p, const std::vector<double>& lambda);

struct IterationRecord {
    int iter = 0;
    double objective = 0.0; // L after the accepted step
    double residual_inf = 0.0; // max_i |g_i| / max(1, |c_i|)
    int evals = 0;             // objective evaluations spent on the step
    double step = 0.0;         // accepted line-search step length
};

struct MaximizeOptions {
    double tol = 1e-6; // per-constraint: |g_i| <= tol * max(1, |c_i|)
    int max_iter = 500;
    int memory = 10;
    std::vector<double> lambda0; // empty = start from zero
};

struct DualState {
    std::vector<double> lambda;
    double L = 0.0;
    std::vector<double> gradient;  // targets - prices at lambda
    std::vector<double> residuals; // == gradient; kept under the reporting name
    bool converged = false;
    int iterations = 0;
    int objective_evals = 0;
    std::vector<IterationRecord> log;
    std::vector<double> L_history; // L at lambda0, then after each accepted step
};

// Limited-memory BFGS ascent on the concave dual. Strong-Wolfe line search;
// if it stalls, the best multiplier seen so far is returned with
// converged == false.
DualState maximize_objective(const CalibrationProblem& p, const MaximizeOptions& opts = {});

struct CalibrationOutcome {
    DualState state;
    EvalResult fit; // evaluation at state.lambda (controls, prices)
};

CalibrationOutcome maximize(const CalibrationProblem& p, const MaximizeOptions& opts = {});

// Worst relative gap between the analytic gradient and a central difference
// of L with spacing h, over all constraints. Relative to
// max(|analytic|, |difference|, 1e-3).
double fd_gradient_check(const CalibrationProblem& p, const std::vector<double>& lambda,
                         double h);

} // namespace otcal
