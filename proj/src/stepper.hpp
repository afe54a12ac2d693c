#pragma once

// Internal discrete operators shared by the nonlinear backward solver and the
// linear pricing engine. Both sides must assemble identical stencils for a
// given control field: the pricing march is then the exact linearization of
// the value-function march, which is what makes the dual gradient exact up to
// the policy-iteration tolerance.

#include "otcal/model.hpp"

#include <optional>
#include <vector>

namespace otcal::detail {

struct DerivArrays {
    std::vector<double> d1, d11;      // always
    std::vector<double> d2, d22, d12; // dim == 2
};

// Ghost-extrapolated central stencils: one-sided first derivatives and zero
// curvature on faces, matching the operator rows exactly there. i_begin > 0
// restricts dimension 0 to [i_begin, n0) and treats i_begin as a face.
void compute_derivs(const SpaceTimeGrid& g, const std::vector<double>& phi,
                    int i_begin, DerivArrays& out);

struct PolicySlice {
    std::vector<double> b11, b12, b22;
    bool operator==(const PolicySlice&) const = default;
};

// Per-node Hamiltonian argmax, warm-started from the incoming slice.
// neg_cost receives -F(beta*) (the implicit step's source term), zero outside
// [i_begin, n0).
void optimize_policy(const CalibrationProblem& p, int substep, const DerivArrays& dv,
                     int i_begin, PolicySlice& pol, std::vector<double>& neg_cost);

PolicySlice reference_slice(const CalibrationProblem& p, int substep);

// One implicit backward step of size dt:
//   (I - dt*L) phi_new = phi_old + dt*neg_cost
// In 2D, L is split into directional sweeps (fully implicit, theta = 1) with
// the mixed term applied explicitly, plus one corrector re-sweep when the
// cross-correlation of the coefficients exceeds 0.5 anywhere.
// pin_left pins row i_begin to a Dirichlet value (1D only; barrier coupling).
std::vector<double> backward_linear_step(const CalibrationProblem& p, int substep,
                                         const CoefSlice& coef,
                                         const std::vector<double>& phi_old, double dt,
                                         const std::vector<double>* neg_cost,
                                         int i_begin,
                                         std::optional<double> pin_left);

} // namespace otcal::detail
