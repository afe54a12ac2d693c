#pragma once

#include "otcal/model.hpp"

#include <vector>

namespace otcal {

// Linear backward march of one terminal payoff under frozen controls, using
// the same discrete operators and substep schedule as the nonlinear solver.
// maturity must be one of the grid's constraint-bearing times. Returns the
// value at (0, x0).
double price_payoff(const CalibrationProblem& p, const ControlField& controls,
                    const std::vector<double>& payoff, double maturity);

// Split-regime variant: the hit field carries knock-in terminal data, the
// alive field knock-out data, coupled through the barrier row each step.
double price_payoff_barrier(const CalibrationProblem& p,
                            const ControlField& controls_alive,
                            const ControlField& controls_hit,
                            const std::vector<double>& payoff, double maturity,
                            Regime regime);

// Prices every constraint (in constraint order). Constraint prices are
// independent linear solves and run concurrently.
std::vector<double> model_prices(const CalibrationProblem& p, const ControlField& controls);

std::vector<double> model_prices_barrier(const CalibrationProblem& p,
                                         const ControlField& controls_alive,
                                         const ControlField& controls_hit);

} // namespace otcal
