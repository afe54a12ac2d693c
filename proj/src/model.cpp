#include "otcal/model.hpp"

#include <cmath>
#include <stdexcept>

namespace otcal {

Sym2 joint_anchor(double t, double x2, const JointRefParams& jr, double T) {
    const double tau = T - t;
    double A = (1.0 - std::exp(-jr.kappa * tau)) / jr.kappa;
    if (A < 1e-8) A = 1e-8;
    double nu = (2.0 * x2 - jr.theta * tau) / A + jr.theta;
    if (nu < 0.0) nu = 0.0;
    Sym2 b;
    b.a11 = nu;
    b.a12 = 0.5 * jr.eta * jr.omega * A * nu;
    b.a22 = 0.25 * jr.omega * jr.omega * A * A * nu;
    return b;
}

double vix_payout(double x2, double window) {
    if (!(window > 0.0)) throw std::invalid_argument("vix_payout: window must be positive");
    if (x2 < 0.0) x2 = 0.0;
    return 100.0 * std::sqrt(2.0 * x2 / window);
}

double terminal_pin_payout(double x2) {
    if (x2 < 0.0) x2 = 0.0; // variance states are clamped, not extrapolated
    return 1.0 - std::exp(-x2 * x2);
}

void control_coefficients(const CalibrationProblem& p, int substep,
                          const std::vector<double>& b11,
                          const std::vector<double>* b12,
                          const std::vector<double>* b22,
                          CoefSlice& out) {
    const auto& g = p.grid;
    const int nn = g.node_count();
    (void)substep;
    out.a1.resize(nn);
    out.b11 = b11;
    if (g.dim == 2) {
        out.a2.resize(nn);
        out.b12.resize(nn);
        out.b22.resize(nn);
    } else {
        out.a2.clear();
        out.b12.clear();
        out.b22.clear();
    }
    switch (p.cost.variant) {
    case Variant::LocalVol:
        for (int i = 0; i < nn; ++i) out.a1[i] = -0.5 * b11[i];
        break;
    case Variant::LocalStochastic: {
        const auto& hp = p.cost.heston;
        for (int j = 0; j < g.n[1]; ++j) {
            const double x2 = g.x(1, j);
            for (int i = 0; i < g.n[0]; ++i) {
                const int k = g.idx(i, j);
                out.a1[k] = -0.5 * b11[k];
                out.a2[k] = hp.kappa * (hp.theta - x2);
                out.b12[k] = hp.eta * hp.xi * x2;
                out.b22[k] = hp.xi * hp.xi * x2;
            }
        }
        break;
    }
    case Variant::Joint:
        if (!b12 || !b22)
            throw std::invalid_argument("control_coefficients: joint variant needs b12/b22");
        out.b12 = *b12;
        out.b22 = *b22;
        for (int i = 0; i < nn; ++i) {
            out.a1[i] = -0.5 * b11[i];
            out.a2[i] = -0.5 * b11[i];
        }
        break;
    }
}

void control_coefficients(const CalibrationProblem& p, int substep,
                          const ControlField& cf, CoefSlice& out) {
    const auto* b12 = cf.b12.empty() ? nullptr : &cf.b12[substep];
    const auto* b22 = cf.b22.empty() ? nullptr : &cf.b22[substep];
    control_coefficients(p, substep, cf.b11[substep], b12, b22, out);
}

void reference_policy(const CalibrationProblem& p, int substep,
                      std::vector<double>& b11,
                      std::vector<double>* b12, std::vector<double>* b22) {
    const auto& g = p.grid;
    const int nn = g.node_count();
    b11.resize(nn);
    switch (p.cost.variant) {
    case Variant::LocalVol:
        b11 = p.cost.ref_var.at(substep);
        break;
    case Variant::LocalStochastic:
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                b11[g.idx(i, j)] = g.x(1, j);
        break;
    case Variant::Joint: {
        if (!b12 || !b22)
            throw std::invalid_argument("reference_policy: joint variant needs b12/b22");
        b12->resize(nn);
        b22->resize(nn);
        const double t = g.schedule.at(substep).t_left;
        for (int j = 0; j < g.n[1]; ++j) {
            const Sym2 a = joint_anchor(t, g.x(1, j), p.cost.joint_ref, g.horizon());
            for (int i = 0; i < g.n[0]; ++i) {
                const int k = g.idx(i, j);
                b11[k] = a.a11;
                (*b12)[k] = a.a12;
                (*b22)[k] = a.a22;
            }
        }
        break;
    }
    }
}

} // namespace otcal
