#pragma once

#include "otcal/model.hpp"

#include <map>
#include <vector>

namespace otcal {

// Which value function of a split solve a jump injection targets. Unsplit
// problems take every constraint; the alive field takes vanilla and
// knock-out constraints, the hit field vanilla and knock-in ones.
enum class FieldKind { Unsplit, Alive, Hit };

// phi += lambda_i * G_i over constraints maturing exactly at t (which must be
// a grid time) that route to the given field.
std::vector<double> inject_jump(const SpaceTimeGrid& g, std::vector<double> phi,
                                const std::vector<ConstraintSpec>& constraints,
                                const std::vector<double>& lambda, double t,
                                FieldKind field);

struct HJBSolution {
    double value_at_x0 = 0.0; // phi(0, x0)
    ControlField controls;
    // slices[k] = phi at schedule[k].t_left after any jump there;
    // slices[schedule.size()] = terminal slice at T after terminal jumps.
    std::vector<std::vector<double>> slices;
    // phi immediately above (pre_jump) and below (post_jump) each
    // constraint-bearing time, keyed by maturity.
    std::map<double, std::vector<double>> pre_jump, post_jump;
    int max_policy_iterations = 0;
};

// Backward march of the nonlinear equation from T to 0: terminal value zero,
// constraint payoffs injected as jumps, one policy-iterated implicit step per
// schedule substep. Throws PolicyIterationError if a step fails to contract
// within 50 policy improvements.
HJBSolution solve_hjb(const CalibrationProblem& p, const std::vector<double>& lambda);

struct BarrierSolution {
    double value_at_x0 = 0.0; // alive field at (0, x0)
    ControlField controls_alive, controls_hit;
    std::vector<std::vector<double>> slices_alive, slices_hit;
    int max_policy_iterations = 0;
};

// Two coupled value functions: the hit field on the full domain, the alive
// field on {x >= barrier} with the hit field's fresh value as Dirichlet datum
// at the barrier row each step. An inert barrier (below the domain) drops the
// coupling and the alive field coincides with the unsplit problem.
BarrierSolution solve_hjb_barrier(const CalibrationProblem& p,
                                  const std::vector<double>& lambda);

} // namespace otcal
