#pragma once

namespace otcal {

// Two-sided power penalty F(u) = a*u^p + b*u^(-q) + c on the normalized
// variable u = beta / reference. make_power_cost picks b and c so the minimum
// is exactly 0 at u = 1.
struct PowerCostParams {
    double a = 1.0;
    double p = 2.0;
    double q = 2.0;
    double b = 1.0;
    double c = -2.0;
};

// Requires a > 0, p > 1, q > 1 (strict convexity and a finite minimizer).
PowerCostParams make_power_cost(double a, double p, double q);

// F(beta) against a constant reference variance ref_var. Returns +infinity
// for beta <= 0.
double eval_cost_lv(double beta, double ref_var, const PowerCostParams& pc);

// Anchored variant on the shifted variable u = (x - s) / (xbar - s).
// +infinity for x <= s; requires xbar > s.
double eval_cost_anchored(double x, double xbar, double s, const PowerCostParams& pc);

struct HestonParams {
    double kappa = 0.0;
    double theta = 0.0;
    double xi = 0.0;
    double eta = 0.0; // spot/variance correlation, |eta| < 1
    double v0 = 0.0;
};

// Derivative bundle of the value function at one node.
struct Derivs2 {
    double d1 = 0.0;  // d/dx1
    double d2 = 0.0;  // d/dx2
    double d11 = 0.0; // d2/dx1^2
    double d22 = 0.0; // d2/dx2^2
    double d12 = 0.0; // d2/dx1 dx2
};

struct Sym2 {
    double a11 = 0.0;
    double a12 = 0.0;
    double a22 = 0.0;
};

struct SupScalar {
    double beta = 0.0;
    double value = 0.0;
};

struct SupMatrix {
    Sym2 beta;
    double value = 0.0;
};

// sup over beta in [1e-8, 100*ref_var] of g*beta - F(beta). Solved by a
// safeguarded Newton iteration on the first-order condition (F' strictly
// increasing), warm-started at beta_init; relative tolerance 1e-12.
SupScalar sup_hamiltonian_lv(double g, double ref_var, const PowerCostParams& pc,
                             double beta_init);

// sup over beta11 in (eta^2*x2, beta_hi] of g*beta11 - H(beta11) plus the
// frozen mean-reversion / vol-of-vol / correlation terms, where
// g = (d11 - d1)/2 and H anchors beta11 at x2 with floor eta^2*x2.
// The search bracket is [eta^2*x2*(1+1e-8) + 1e-12, s + 100*(x2 - s)].
SupScalar sup_hamiltonian_lsv(const Derivs2& dv, double x2, const HestonParams& hp,
                              const PowerCostParams& pc, double beta_init);

// sup over symmetric PSD beta of
//   c11*b11 + c22*b22 + c12*b12 - [(b11-r11)^2 + 2*(b12-r12)^2 + (b22-r22)^2]
// with c11 = (d11 - d1 - d2)/2, c22 = d22/2, c12 = d12. The unconstrained
// stationary point is projected onto the PSD cone (eigenvalues clipped at
// 1e-10) only when it is indefinite, and the objective is re-evaluated at the
// projected point.
SupMatrix sup_hamiltonian_joint(const Derivs2& dv, const Sym2& beta_ref);

double quadratic_anchor_cost(const Sym2& beta, const Sym2& beta_ref);

double min_eigenvalue(const Sym2& m);

// Eigenvalue clip: eigenvalues below floor_ are raised to floor_. Input with
// all eigenvalues >= floor_ is returned unchanged.
Sym2 psd_project(const Sym2& m, double floor_);

} // namespace otcal
