#include "otcal/hjb.hpp"
#include "otcal/errors.hpp"

#include "stepper.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace otcal {

namespace {

bool routes_to(Regime r, FieldKind f) {
    switch (f) {
    case FieldKind::Unsplit: return true;
    case FieldKind::Alive: return r == Regime::Vanilla || r == Regime::AliveOnly;
    case FieldKind::Hit: return r == Regime::Vanilla || r == Regime::HitOnly;
    }
    return false;
}

// One policy-iterated implicit substep. pol enters as the warm start and
// leaves as the policy that produced the returned slice.
std::vector<double> backward_substep(const CalibrationProblem& p, int k,
                                     const std::vector<double>& phi_next,
                                     detail::PolicySlice& pol, int& iters_out,
                                     int i_begin, std::optional<double> pin_left) {
    const auto& sub = p.grid.schedule[k];
    const double dt = sub.t_right - sub.t_left;
    detail::DerivArrays dv;
    detail::compute_derivs(p.grid, phi_next, i_begin, dv);
    std::vector<double> neg_cost;
    detail::optimize_policy(p, k, dv, i_begin, pol, neg_cost);

    // Convergence is judged relative to the magnitude of the value slice:
    // an absolute floor would be unreachable once |phi| ~ 1e3 puts successive
    // iterates within a few ulps of each other.
    double scale = 1.0;
    for (double v : phi_next) scale = std::max(scale, std::abs(v));
    const double tol = 1e-10 * scale;

    // Interior stationary points make the value update contract the policy
    // superlinearly, so a handful of sweeps normally suffice. When the
    // stationary matrix leaves the positive-semidefinite cone the projected
    // optimum couples to the split value update only linearly, and with
    // near-degenerate correlation the observed contraction factor gets as
    // high as ~0.96 per sweep; budget for a few hundred sweeps before
    // declaring a stall.
    constexpr int max_sweeps = 500;

    CoefSlice coef;
    std::vector<double> phi_prev;
    for (int it = 0; it <= max_sweeps; ++it) {
        const auto* b12 = pol.b12.empty() ? nullptr : &pol.b12;
        const auto* b22 = pol.b22.empty() ? nullptr : &pol.b22;
        control_coefficients(p, k, pol.b11, b12, b22, coef);
        auto phi = detail::backward_linear_step(p, k, coef, phi_next, dt,
                                                &neg_cost, i_begin, pin_left);
        // NaN would slip through the max-norm convergence test below (every
        // comparison against it is false), so refuse it here.
        bool bad = false;
        for (std::size_t n = 0; n < phi.size() && !bad; ++n)
            if (!std::isfinite(phi[n])) bad = true;
        if (bad) {
            std::size_t nbad = 0, first_bad = 0;
            for (std::size_t n = 0; n < phi.size(); ++n)
                if (!std::isfinite(phi[n])) { if (!nbad) first_bad = n; ++nbad; }
            double mb11 = 0, mb12 = 0, mb22 = 0, mneg = 0, mnext = 0;
            std::size_t ab11 = 0;
            for (std::size_t n = 0; n < phi.size(); ++n) {
                if (std::abs(pol.b11[n]) > mb11) { mb11 = std::abs(pol.b11[n]); ab11 = n; }
                if (!pol.b12.empty()) mb12 = std::max(mb12, std::abs(pol.b12[n]));
                if (!pol.b22.empty()) mb22 = std::max(mb22, std::abs(pol.b22[n]));
                mneg = std::max(mneg, std::abs(neg_cost[n]));
                mnext = std::max(mnext, std::abs(phi_next[n]));
            }
            std::fprintf(stderr,
                         "DBG nonfinite k=%d it=%d nbad=%zu first=%zu | max|b11|=%g@%zu max|b12|=%g max|b22|=%g max|neg|=%g max|next|=%g\n",
                         k, it, nbad, first_bad, mb11, ab11, mb12, mb22, mneg, mnext);
            std::ostringstream os;
            os << "implicit step produced a non-finite value at substep " << k;
            throw PolicyIterationError(os.str(), 0.0, k);
        }
        if (!phi_prev.empty()) {
            double change = 0.0;
            for (std::size_t n = 0; n < phi.size(); ++n)
                change = std::max(change, std::abs(phi[n] - phi_prev[n]));
            if (change <= tol) {
                iters_out = it;
                return phi;
            }
            if (it == max_sweeps) {
                std::ostringstream os;
                os << "policy iteration stalled at substep " << k
                   << " (residual " << change << ")";
                throw PolicyIterationError(os.str(), change, k);
            }
        }
        detail::compute_derivs(p.grid, phi, i_begin, dv);
        detail::PolicySlice pol2 = pol;
        std::vector<double> neg2;
        detail::optimize_policy(p, k, dv, i_begin, pol2, neg2);
        if (pol2 == pol) {
            iters_out = it;
            return phi;
        }
        pol = std::move(pol2);
        neg_cost = std::move(neg2);
        phi_prev = std::move(phi);
    }
    throw PolicyIterationError("policy iteration failed to start", 0.0, k);
}

void validate_lambda(const CalibrationProblem& p, const std::vector<double>& lambda) {
    if (lambda.size() != p.constraints.size())
        throw std::invalid_argument("multiplier count does not match constraint count");
    for (double l : lambda)
        if (!std::isfinite(l)) throw std::invalid_argument("non-finite multiplier");
}

} // namespace

std::vector<double> inject_jump(const SpaceTimeGrid& g, std::vector<double> phi,
                                const std::vector<ConstraintSpec>& constraints,
                                const std::vector<double>& lambda, double t,
                                FieldKind field) {
    if (!g.is_maturity(t))
        throw std::invalid_argument("inject_jump: t is not a constraint-bearing grid time");
    if (lambda.size() != constraints.size())
        throw std::invalid_argument("inject_jump: multiplier count mismatch");
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        const auto& cs = constraints[i];
        if (cs.maturity != t || !routes_to(cs.regime, field)) continue;
        if (static_cast<int>(cs.payoff.size()) != g.node_count())
            throw std::invalid_argument("inject_jump: payoff size mismatch");
        if (lambda[i] == 0.0) continue;
        for (int k = 0; k < g.node_count(); ++k)
            phi[k] += lambda[i] * cs.payoff[k];
    }
    return phi;
}

HJBSolution solve_hjb(const CalibrationProblem& p, const std::vector<double>& lambda) {
    validate_lambda(p, lambda);
    if (p.barrier && !p.barrier->inert)
        throw std::invalid_argument("solve_hjb: barrier problems use solve_hjb_barrier");
    const auto& g = p.grid;
    const int S = static_cast<int>(g.schedule.size());
    HJBSolution sol;
    sol.slices.resize(S + 1);
    sol.controls.variant = p.cost.variant;
    sol.controls.b11.resize(S);
    if (p.cost.variant == Variant::Joint) {
        sol.controls.b12.resize(S);
        sol.controls.b22.resize(S);
    }

    std::vector<double> phi(g.node_count(), 0.0);
    const double T = g.horizon();
    sol.pre_jump[T] = phi;
    phi = inject_jump(g, std::move(phi), p.constraints, lambda, T, FieldKind::Unsplit);
    sol.post_jump[T] = phi;
    sol.slices[S] = phi;

    detail::PolicySlice pol = detail::reference_slice(p, S - 1);
    for (int k = S - 1; k >= 0; --k) {
        int iters = 0;
        phi = backward_substep(p, k, phi, pol, iters, 0, std::nullopt);
        sol.max_policy_iterations = std::max(sol.max_policy_iterations, iters);
        sol.controls.b11[k] = pol.b11;
        if (p.cost.variant == Variant::Joint) {
            sol.controls.b12[k] = pol.b12;
            sol.controls.b22[k] = pol.b22;
        }
        const double tl = g.schedule[k].t_left;
        if (g.is_maturity(tl)) {
            sol.pre_jump[tl] = phi;
            phi = inject_jump(g, std::move(phi), p.constraints, lambda, tl, FieldKind::Unsplit);
            sol.post_jump[tl] = phi;
        }
        sol.slices[k] = phi;
    }
    sol.value_at_x0 = value_at(g, sol.slices[0], g.x0);
    return sol;
}

BarrierSolution solve_hjb_barrier(const CalibrationProblem& p,
                                  const std::vector<double>& lambda) {
    validate_lambda(p, lambda);
    if (!p.barrier) throw std::invalid_argument("solve_hjb_barrier: problem has no barrier");
    if (p.grid.dim != 1) throw std::invalid_argument("solve_hjb_barrier: 1D only");
    const auto& g = p.grid;
    const int S = static_cast<int>(g.schedule.size());
    const bool coupled = !p.barrier->inert;
    const int ib = coupled ? p.barrier->node : 0;

    BarrierSolution sol;
    sol.controls_alive.variant = sol.controls_hit.variant = p.cost.variant;
    sol.controls_alive.b11.resize(S);
    sol.controls_hit.b11.resize(S);
    sol.slices_alive.resize(S + 1);
    sol.slices_hit.resize(S + 1);

    const double T = g.horizon();
    std::vector<double> phi1(g.node_count(), 0.0), phi0(g.node_count(), 0.0);
    phi1 = inject_jump(g, std::move(phi1), p.constraints, lambda, T, FieldKind::Hit);
    phi0 = inject_jump(g, std::move(phi0), p.constraints, lambda, T, FieldKind::Alive);
    for (int i = 0; i < ib; ++i) phi0[i] = phi1[i];
    sol.slices_hit[S] = phi1;
    sol.slices_alive[S] = phi0;

    detail::PolicySlice pol1 = detail::reference_slice(p, S - 1);
    detail::PolicySlice pol0 = pol1;
    for (int k = S - 1; k >= 0; --k) {
        int it1 = 0, it0 = 0;
        phi1 = backward_substep(p, k, phi1, pol1, it1, 0, std::nullopt);
        const std::optional<double> pin =
            coupled ? std::optional<double>(phi1[ib]) : std::nullopt;
        phi0 = backward_substep(p, k, phi0, pol0, it0, ib, pin);
        sol.max_policy_iterations = std::max({sol.max_policy_iterations, it1, it0});

        sol.controls_hit.b11[k] = pol1.b11;
        sol.controls_alive.b11[k] = pol0.b11;
        for (int i = 0; i < ib; ++i) sol.controls_alive.b11[k][i] = pol1.b11[i];

        const double tl = g.schedule[k].t_left;
        if (g.is_maturity(tl)) {
            phi1 = inject_jump(g, std::move(phi1), p.constraints, lambda, tl, FieldKind::Hit);
            phi0 = inject_jump(g, std::move(phi0), p.constraints, lambda, tl, FieldKind::Alive);
        }
        for (int i = 0; i < ib; ++i) phi0[i] = phi1[i];
        sol.slices_hit[k] = phi1;
        sol.slices_alive[k] = phi0;
    }
    sol.value_at_x0 = value_at(g, sol.slices_alive[0], g.x0);
    return sol;
}

} // namespace otcal
