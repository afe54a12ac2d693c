#include "otcal/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace otcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// F, F', F'' in the normalized variable u, divided by the appropriate scale
// by the callers.
double pot(const PowerCostParams& pc, double u) {
    return pc.a * std::pow(u, pc.p) + pc.b * std::pow(u, -pc.q) + pc.c;
}
double pot_d(const PowerCostParams& pc, double u) {
    return pc.a * pc.p * std::pow(u, pc.p - 1.0) - pc.b * pc.q * std::pow(u, -pc.q - 1.0);
}
double pot_dd(const PowerCostParams& pc, double u) {
    return pc.a * pc.p * (pc.p - 1.0) * std::pow(u, pc.p - 2.0)
         + pc.b * pc.q * (pc.q + 1.0) * std::pow(u, -pc.q - 2.0);
}

// Solves pot_d(u)/scale = g for u in [ulo, uhi]; pot_d is strictly
// increasing on u > 0. Newton with a shrinking bisection bracket.
double solve_foc(const PowerCostParams& pc, double g_scaled, double ulo, double uhi,
                 double u_init) {
    if (pot_d(pc, ulo) >= g_scaled) return ulo;
    if (pot_d(pc, uhi) <= g_scaled) return uhi;
    double lo = ulo, hi = uhi;
    double u = std::clamp(u_init, ulo, uhi);
    for (int it = 0; it < 100; ++it) {
        const double h = pot_d(pc, u) - g_scaled;
        if (h > 0.0) hi = u; else lo = u;
        const double step = h / pot_dd(pc, u);
        double un = u - step;
        if (!(un > lo && un < hi)) un = 0.5 * (lo + hi);
        if (std::abs(un - u) <= 1e-12 * un) return un;
        u = un;
    }
    return u;
}

} // namespace

PowerCostParams make_power_cost(double a, double p, double q) {
    if (!(a > 0.0) || !(p > 1.0) || !(q > 1.0))
        throw std::invalid_argument("make_power_cost: need a > 0, p > 1, q > 1");
    PowerCostParams pc;
    pc.a = a;
    pc.p = p;
    pc.q = q;
    pc.b = a * p / q;      // stationarity of a*u^p + b*u^-q at u = 1
    pc.c = -(a + pc.b);    // minimum value 0
    return pc;
}

double eval_cost_lv(double beta, double ref_var, const PowerCostParams& pc) {
    if (!(ref_var > 0.0)) throw std::invalid_argument("eval_cost_lv: reference variance must be positive");
    if (!(beta > 0.0)) return kInf;
    if (beta == ref_var) return 0.0; // exact at the anchor
    return pot(pc, beta / ref_var);
}

double eval_cost_anchored(double x, double xbar, double s, const PowerCostParams& pc) {
    if (!(xbar > s)) throw std::invalid_argument("eval_cost_anchored: requires xbar > s");
    if (!(x > s)) return kInf;
    if (x == xbar) return 0.0;
    return pot(pc, (x - s) / (xbar - s));
}

SupScalar sup_hamiltonian_lv(double g, double ref_var, const PowerCostParams& pc,
                             double beta_init) {
    if (!(ref_var > 0.0)) throw std::invalid_argument("sup_hamiltonian_lv: bad reference variance");
    if (g == 0.0) return {ref_var, 0.0};
    const double ulo = 1e-8 / ref_var;
    const double uhi = 100.0;
    const double u = solve_foc(pc, g * ref_var, ulo, uhi,
                               beta_init > 0.0 ? beta_init / ref_var : 1.0);
    const double beta = u * ref_var;
    return {beta, g * beta - pot(pc, u)};
}

SupScalar sup_hamiltonian_lsv(const Derivs2& dv, double x2, const HestonParams& hp,
                              const PowerCostParams& pc, double beta_init) {
    if (!(x2 > 0.0)) throw std::invalid_argument("sup_hamiltonian_lsv: x2 must be positive");
    const double s = hp.eta * hp.eta * x2;
    const double span = x2 - s; // x2*(1 - eta^2) > 0
    const double fixed = hp.kappa * (hp.theta - x2) * dv.d2
                       + 0.5 * hp.xi * hp.xi * x2 * dv.d22
                       + hp.eta * hp.xi * x2 * dv.d12;
    const double g = 0.5 * (dv.d11 - dv.d1);
    if (g == 0.0) return {x2, fixed};
    const double lo = s * (1.0 + 1e-8) + 1e-12;
    const double ulo = (lo - s) / span;
    const double uhi = 100.0;
    const double u = solve_foc(pc, g * span, ulo, uhi,
                               beta_init > s ? (beta_init - s) / span : 1.0);
    const double beta = s + u * span;
    return {beta, g * beta - pot(pc, u) + fixed};
}

double quadratic_anchor_cost(const Sym2& b, const Sym2& r) {
    const double e11 = b.a11 - r.a11, e12 = b.a12 - r.a12, e22 = b.a22 - r.a22;
    return e11 * e11 + 2.0 * e12 * e12 + e22 * e22;
}

double min_eigenvalue(const Sym2& m) {
    const double half_tr = 0.5 * (m.a11 + m.a22);
    const double d = 0.5 * (m.a11 - m.a22);
    return half_tr - std::sqrt(d * d + m.a12 * m.a12);
}

Sym2 psd_project(const Sym2& m, double floor_) {
    const double half_tr = 0.5 * (m.a11 + m.a22);
    const double d = 0.5 * (m.a11 - m.a22);
    const double disc = std::sqrt(d * d + m.a12 * m.a12);
    const double lam1 = half_tr + disc, lam2 = half_tr - disc;
    if (lam2 >= floor_) return m;
    const double l1 = std::max(lam1, floor_), l2 = std::max(lam2, floor_);
    if (m.a12 == 0.0) {
        // axis-aligned; keep the diagonal layout
        return {std::max(m.a11, floor_), 0.0, std::max(m.a22, floor_)};
    }
    // eigenvector of lam1 is (a12, lam1 - a11)
    const double v1 = m.a12, v2 = lam1 - m.a11;
    const double nn = v1 * v1 + v2 * v2;
    const double c2 = v1 * v1 / nn, s2 = v2 * v2 / nn, cs = v1 * v2 / nn;
    return {l1 * c2 + l2 * s2, (l1 - l2) * cs, l1 * s2 + l2 * c2};
}

SupMatrix sup_hamiltonian_joint(const Derivs2& dv, const Sym2& r) {
    const double c11 = 0.5 * (dv.d11 - dv.d1 - dv.d2);
    const double c22 = 0.5 * dv.d22;
    const double c12 = dv.d12;
    Sym2 b{r.a11 + 0.5 * c11, r.a12 + 0.25 * c12, r.a22 + 0.5 * c22};
    // project only a genuinely indefinite stationary point; PSD targets must
    // pass through untouched so the reference (which can sit on the cone
    // boundary) stays an exact fixed point. The projection floor is zero:
    // a positive floor would jump the control by that amount right at the
    // cone boundary and leave policy iteration oscillating across it.
    if (min_eigenvalue(b) < 0.0) b = psd_project(b, 0.0);
    const double value = c11 * b.a11 + c22 * b.a22 + c12 * b.a12 - quadratic_anchor_cost(b, r);
    return {b, value};
}

} // namespace otcal
