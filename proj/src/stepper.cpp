#include "stepper.hpp"

#include "otcal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otcal::detail {

namespace {

// Mixed derivative on interior nodes only; every boundary node gets zero.
// Extrapolated ghosts would hand the corner argmax a nonzero d12 with a zero
// anchor: the projected control then feeds the explicit cross term, which
// grows d12 on the next sweep, and the policy runs away geometrically. The
// operator applies no cross stencil on the boundary, so the argmax must see
// the same zero there.
inline double cross_at(const SpaceTimeGrid& g, const std::vector<double>& phi,
                       int i, int j, int i_begin) {
    if (i <= i_begin || i >= g.n[0] - 1 || j <= 0 || j >= g.n[1] - 1) return 0.0;
    const double s = phi[g.idx(i + 1, j + 1)] - phi[g.idx(i + 1, j - 1)]
                   - phi[g.idx(i - 1, j + 1)] + phi[g.idx(i - 1, j - 1)];
    return s / (4.0 * g.dx[0] * g.dx[1]);
}

// Upwind weight: 0 = central, 1 = one-sided, ramped over Pe in [1.8, 2.2] so
// the operator stays continuous in the controls.
inline double upwind_weight(double a, double b, double h) {
    if (a == 0.0) return 0.0;
    if (b <= 0.0) return 1.0;
    const double pe = std::abs(a) * h / (0.5 * b);
    return std::clamp((pe - 1.8) / 0.4, 0.0, 1.0);
}

// Generator rows along one line of m nodes with spacing h. Faces get zero
// curvature; the face drift row survives only when it points into the
// domain. An outflowing face drift under the zero-curvature ghost would be
// anti-dissipative (the implicit diagonal 1 + dt*a/h crosses zero once
// dt*|a| >= h, which large anchor drifts near the horizon do reach), so it
// is dropped; the argmax stencils apply the same rule, keeping the policy
// derivative of the step consistent.
void line_generator(int m, double h, const double* a, const double* b,
                    double* lo, double* di, double* up) {
    lo[0] = 0.0;
    di[0] = a[0] >= 0.0 ? -a[0] / h : 0.0;
    up[0] = a[0] >= 0.0 ? a[0] / h : 0.0;
    for (int k = 1; k < m - 1; ++k) {
        const double diff = 0.5 * b[k] / (h * h);
        double l = diff, d = -2.0 * diff, u = diff;
        const double w = upwind_weight(a[k], b[k], h);
        const double cen = (1.0 - w) * a[k] / (2.0 * h);
        l -= cen;
        u += cen;
        if (w != 0.0) {
            const double adv = w * a[k] / h;
            if (a[k] >= 0.0) {
                d -= adv;
                u += adv;
            } else {
                d += adv;
                l -= adv;
            }
        }
        lo[k] = l;
        di[k] = d;
        up[k] = u;
    }
    lo[m - 1] = a[m - 1] <= 0.0 ? -a[m - 1] / h : 0.0;
    di[m - 1] = a[m - 1] <= 0.0 ? a[m - 1] / h : 0.0;
    up[m - 1] = 0.0;
}

struct LineWork {
    std::vector<double> a, b, lo, di, up, aa, bb, cc, rhs, sol;
    void resize(int m) {
        a.resize(m); b.resize(m); lo.resize(m); di.resize(m); up.resize(m);
        aa.resize(m); bb.resize(m); cc.resize(m); rhs.resize(m); sol.resize(m);
    }
};

// Thomas solve of (I - dt*L_line) x = rhs with optional pinned first row.
void solve_line(LineWork& w, int m, double dt, bool pin_first, double pin_value) {
    for (int k = 0; k < m; ++k) {
        w.aa[k] = -dt * w.lo[k];
        w.bb[k] = 1.0 - dt * w.di[k];
        w.cc[k] = -dt * w.up[k];
    }
    if (pin_first) {
        w.aa[0] = w.cc[0] = 0.0;
        w.bb[0] = 1.0;
        w.rhs[0] = pin_value;
    }
    // in-place Thomas
    double piv = w.bb[0];
    if (piv == 0.0) throw SingularSystemError("implicit step: zero pivot");
    w.cc[0] /= piv;
    w.sol[0] = w.rhs[0] / piv;
    for (int k = 1; k < m; ++k) {
        piv = w.bb[k] - w.aa[k] * w.cc[k - 1];
        if (piv == 0.0) throw SingularSystemError("implicit step: zero pivot");
        w.cc[k] /= piv;
        w.sol[k] = (w.rhs[k] - w.aa[k] * w.sol[k - 1]) / piv;
    }
    for (int k = m - 1; k-- > 0;)
        w.sol[k] -= w.cc[k] * w.sol[k + 1];
}

} // namespace

void compute_derivs(const SpaceTimeGrid& g, const std::vector<double>& phi,
                    int i_begin, DerivArrays& out) {
    const int nn = g.node_count();
    out.d1.assign(nn, 0.0);
    out.d11.assign(nn, 0.0);
    if (g.dim == 2) {
        out.d2.assign(nn, 0.0);
        out.d22.assign(nn, 0.0);
        out.d12.assign(nn, 0.0);
    }
    const double h1 = g.dx[0];
    for (int j = 0; j < g.n[1]; ++j) {
        for (int i = i_begin; i < g.n[0]; ++i) {
            const int k = g.idx(i, j);
            if (i == i_begin) {
                // The drift these stencils feed is -beta/2 < 0, outflowing at
                // the lower face, where the operator drops its row; the
                // argmax must see the same zero.
                out.d1[k] = 0.0;
            } else if (i == g.n[0] - 1) {
                out.d1[k] = (phi[k] - phi[g.idx(i - 1, j)]) / h1;
            } else {
                out.d1[k] = (phi[g.idx(i + 1, j)] - phi[g.idx(i - 1, j)]) / (2.0 * h1);
                out.d11[k] = (phi[g.idx(i + 1, j)] - 2.0 * phi[k] + phi[g.idx(i - 1, j)]) / (h1 * h1);
            }
        }
    }
    if (g.dim == 2) {
        const double h2 = g.dx[1];
        for (int j = 0; j < g.n[1]; ++j) {
            for (int i = i_begin; i < g.n[0]; ++i) {
                const int k = g.idx(i, j);
                if (j == 0) {
                    out.d2[k] = 0.0; // same rule as d1 at the lower face
                } else if (j == g.n[1] - 1) {
                    out.d2[k] = (phi[k] - phi[g.idx(i, j - 1)]) / h2;
                } else {
                    out.d2[k] = (phi[g.idx(i, j + 1)] - phi[g.idx(i, j - 1)]) / (2.0 * h2);
                    out.d22[k] = (phi[g.idx(i, j + 1)] - 2.0 * phi[k] + phi[g.idx(i, j - 1)]) / (h2 * h2);
                }
                out.d12[k] = cross_at(g, phi, i, j, i_begin);
            }
        }
    }
}

PolicySlice reference_slice(const CalibrationProblem& p, int substep) {
    PolicySlice s;
    if (p.cost.variant == Variant::Joint)
        reference_policy(p, substep, s.b11, &s.b12, &s.b22);
    else
        reference_policy(p, substep, s.b11, nullptr, nullptr);
    return s;
}

void optimize_policy(const CalibrationProblem& p, int substep, const DerivArrays& dv,
                     int i_begin, PolicySlice& pol, std::vector<double>& neg_cost) {
    const auto& g = p.grid;
    const int nn = g.node_count();
    if (pol.b11.empty()) pol = reference_slice(p, substep);
    neg_cost.assign(nn, 0.0);
    switch (p.cost.variant) {
    case Variant::LocalVol: {
        const auto& rv = p.cost.ref_var.at(substep);
        for (int i = i_begin; i < g.n[0]; ++i) {
            const double gl = 0.5 * (dv.d11[i] - dv.d1[i]);
            const auto s = sup_hamiltonian_lv(gl, rv[i], p.cost.power, pol.b11[i]);
            pol.b11[i] = s.beta;
            neg_cost[i] = s.value - gl * s.beta; // -F(beta*), exact 0 at the anchor
        }
        break;
    }
    case Variant::LocalStochastic: {
        for (int j = 0; j < g.n[1]; ++j) {
            const double x2 = g.x(1, j);
            for (int i = i_begin; i < g.n[0]; ++i) {
                const int k = g.idx(i, j);
                Derivs2 d{dv.d1[k], dv.d2[k], dv.d11[k], dv.d22[k], dv.d12[k]};
                const auto s = sup_hamiltonian_lsv(d, x2, p.cost.heston, p.cost.power, pol.b11[k]);
                const double gl = 0.5 * (d.d11 - d.d1);
                const double fixed = p.cost.heston.kappa * (p.cost.heston.theta - x2) * d.d2
                                   + 0.5 * p.cost.heston.xi * p.cost.heston.xi * x2 * d.d22
                                   + p.cost.heston.eta * p.cost.heston.xi * x2 * d.d12;
                pol.b11[k] = s.beta;
                neg_cost[k] = s.value - fixed - gl * s.beta;
            }
        }
        break;
    }
    case Variant::Joint: {
        const double t = g.schedule.at(substep).t_left;
        if (pol.b12.empty() || pol.b22.empty())
            throw std::invalid_argument("optimize_policy: joint slice missing b12/b22");
        for (int j = 0; j < g.n[1]; ++j) {
            const Sym2 anchor = joint_anchor(t, g.x(1, j), p.cost.joint_ref, g.horizon());
            for (int i = i_begin; i < g.n[0]; ++i) {
                const int k = g.idx(i, j);
                Derivs2 d{dv.d1[k], dv.d2[k], dv.d11[k], dv.d22[k], dv.d12[k]};
                const auto s = sup_hamiltonian_joint(d, anchor);
                pol.b11[k] = s.beta.a11;
                pol.b12[k] = s.beta.a12;
                pol.b22[k] = s.beta.a22;
                const double c11 = 0.5 * (d.d11 - d.d1 - d.d2);
                const double c22 = 0.5 * d.d22;
                const double c12 = d.d12;
                neg_cost[k] = s.value - (c11 * s.beta.a11 + c22 * s.beta.a22 + c12 * s.beta.a12);
            }
        }
        break;
    }
    }
}

namespace {

std::vector<double> step_1d(const SpaceTimeGrid& g, const BoundaryPolicy& bp,
                            const CoefSlice& coef, const std::vector<double>& phi_old,
                            double dt, const std::vector<double>* neg_cost,
                            int i_begin, std::optional<double> pin_left) {
    const int n = g.n[0];
    const int m = n - i_begin;
    LineWork w;
    w.resize(m);
    for (int k = 0; k < m; ++k) {
        w.a[k] = coef.a1[i_begin + k];
        w.b[k] = coef.b11[i_begin + k];
    }
    line_generator(m, g.dx[0], w.a.data(), w.b.data(), w.lo.data(), w.di.data(), w.up.data());
    bool pin_first = pin_left.has_value();
    double pin_value = pin_left.value_or(0.0);
    if (!pin_first && bp.kind[0][0] == BoundaryPolicy::Kind::Dirichlet && i_begin == 0) {
        pin_first = true;
        pin_value = bp.value[0][0];
    }
    bool pin_last = bp.kind[0][1] == BoundaryPolicy::Kind::Dirichlet;
    for (int k = 0; k < m; ++k) {
        const int i = i_begin + k;
        w.rhs[k] = phi_old[i] + (neg_cost ? dt * (*neg_cost)[i] : 0.0);
    }
    if (pin_last) {
        w.lo[m - 1] = w.di[m - 1] = w.up[m - 1] = 0.0;
        w.rhs[m - 1] = bp.value[0][1];
        // encode as identity row through solve_line's generic path
        // (aa = cc = 0, bb = 1 after assembly below since generator row is 0)
    }
    solve_line(w, m, dt, pin_first, pin_value);
    std::vector<double> out = phi_old;
    for (int k = 0; k < m; ++k) out[i_begin + k] = w.sol[k];
    return out;
}

std::vector<double> step_2d(const SpaceTimeGrid& g, const BoundaryPolicy& bp,
                            const CoefSlice& coef, const std::vector<double>& phi_old,
                            double dt, const std::vector<double>* neg_cost) {
    const int n0 = g.n[0], n1 = g.n[1], nn = n0 * n1;

    // The corrector re-sweep runs whenever a cross term exists. Gating it on
    // the size of the correlation would make the step operator discontinuous
    // in the controls and lets policy iteration cycle across the gate.
    bool corrector = false;
    for (int k = 0; k < nn; ++k) {
        if (coef.b12[k] != 0.0) {
            corrector = true;
            break;
        }
    }

    const bool dir0_lo = bp.kind[0][0] == BoundaryPolicy::Kind::Dirichlet;
    const bool dir0_hi = bp.kind[0][1] == BoundaryPolicy::Kind::Dirichlet;
    const bool dir1_lo = bp.kind[1][0] == BoundaryPolicy::Kind::Dirichlet;
    const bool dir1_hi = bp.kind[1][1] == BoundaryPolicy::Kind::Dirichlet;

    std::vector<double> a1u(nn), a2u(nn), a0u(nn);
    LineWork w1, w2;
    w1.resize(n0);
    w2.resize(n1);
    std::vector<double> lo1((std::size_t)nn), di1((std::size_t)nn), up1((std::size_t)nn);
    std::vector<double> lo2((std::size_t)nn), di2((std::size_t)nn), up2((std::size_t)nn);

    // assemble all directional rows once
    for (int j = 0; j < n1; ++j) {
        for (int i = 0; i < n0; ++i) {
            w1.a[i] = coef.a1[g.idx(i, j)];
            w1.b[i] = coef.b11[g.idx(i, j)];
        }
        line_generator(n0, g.dx[0], w1.a.data(), w1.b.data(), w1.lo.data(), w1.di.data(), w1.up.data());
        if (dir0_lo) w1.lo[0] = w1.di[0] = w1.up[0] = 0.0;
        if (dir0_hi) w1.lo[n0 - 1] = w1.di[n0 - 1] = w1.up[n0 - 1] = 0.0;
        for (int i = 0; i < n0; ++i) {
            const int k = g.idx(i, j);
            lo1[k] = w1.lo[i];
            di1[k] = w1.di[i];
            up1[k] = w1.up[i];
        }
    }
    for (int i = 0; i < n0; ++i) {
        for (int j = 0; j < n1; ++j) {
            w2.a[j] = coef.a2[g.idx(i, j)];
            w2.b[j] = coef.b22[g.idx(i, j)];
        }
        line_generator(n1, g.dx[1], w2.a.data(), w2.b.data(), w2.lo.data(), w2.di.data(), w2.up.data());
        if (dir1_lo) w2.lo[0] = w2.di[0] = w2.up[0] = 0.0;
        if (dir1_hi) w2.lo[n1 - 1] = w2.di[n1 - 1] = w2.up[n1 - 1] = 0.0;
        for (int j = 0; j < n1; ++j) {
            const int k = g.idx(i, j);
            lo2[k] = w2.lo[j];
            di2[k] = w2.di[j];
            up2[k] = w2.up[j];
        }
    }

    auto apply1 = [&](const std::vector<double>& x, std::vector<double>& out) {
        for (int j = 0; j < n1; ++j) {
            const int base = g.idx(0, j);
            out[base] = di1[base] * x[base] + up1[base] * x[base + 1];
            for (int i = 1; i < n0 - 1; ++i) {
                const int k = base + i;
                out[k] = lo1[k] * x[k - 1] + di1[k] * x[k] + up1[k] * x[k + 1];
            }
            const int k = base + n0 - 1;
            out[k] = lo1[k] * x[k - 1] + di1[k] * x[k];
        }
    };
    auto apply2 = [&](const std::vector<double>& x, std::vector<double>& out) {
        for (int i = 0; i < n0; ++i) {
            int k = g.idx(i, 0);
            out[k] = di2[k] * x[k] + up2[k] * x[k + n0];
            for (int j = 1; j < n1 - 1; ++j) {
                k = g.idx(i, j);
                out[k] = lo2[k] * x[k - n0] + di2[k] * x[k] + up2[k] * x[k + n0];
            }
            k = g.idx(i, n1 - 1);
            out[k] = lo2[k] * x[k - n0] + di2[k] * x[k];
        }
    };
    auto apply0 = [&](const std::vector<double>& x, std::vector<double>& out) {
        for (int j = 0; j < n1; ++j)
            for (int i = 0; i < n0; ++i) {
                const int k = g.idx(i, j);
                out[k] = coef.b12[k] == 0.0 ? 0.0 : coef.b12[k] * cross_at(g, x, i, j, 0);
            }
    };

    auto solve1 = [&](std::vector<double>& rhs) {
        for (int j = 0; j < n1; ++j) {
            for (int i = 0; i < n0; ++i) {
                const int k = g.idx(i, j);
                w1.lo[i] = lo1[k];
                w1.di[i] = di1[k];
                w1.up[i] = up1[k];
                w1.rhs[i] = rhs[k];
            }
            if (dir0_lo) w1.rhs[0] = bp.value[0][0];
            if (dir0_hi) w1.rhs[n0 - 1] = bp.value[0][1];
            solve_line(w1, n0, dt, false, 0.0);
            for (int i = 0; i < n0; ++i) rhs[g.idx(i, j)] = w1.sol[i];
        }
    };
    auto solve2 = [&](std::vector<double>& rhs) {
        for (int i = 0; i < n0; ++i) {
            for (int j = 0; j < n1; ++j) {
                const int k = g.idx(i, j);
                w2.lo[j] = lo2[k];
                w2.di[j] = di2[k];
                w2.up[j] = up2[k];
                w2.rhs[j] = rhs[k];
            }
            if (dir1_lo) w2.rhs[0] = bp.value[1][0];
            if (dir1_hi) w2.rhs[n1 - 1] = bp.value[1][1];
            solve_line(w2, n1, dt, false, 0.0);
            for (int j = 0; j < n1; ++j) rhs[g.idx(i, j)] = w2.sol[j];
        }
    };

    apply1(phi_old, a1u);
    apply2(phi_old, a2u);
    apply0(phi_old, a0u);

    std::vector<double> y0(nn);
    for (int k = 0; k < nn; ++k)
        y0[k] = phi_old[k] + dt * (a1u[k] + a2u[k] + a0u[k] + (neg_cost ? (*neg_cost)[k] : 0.0));

    auto sweeps = [&](const std::vector<double>& base) {
        std::vector<double> y = base;
        for (int k = 0; k < nn; ++k) y[k] -= dt * a1u[k];
        solve1(y);
        for (int k = 0; k < nn; ++k) y[k] -= dt * a2u[k];
        solve2(y);
        return y;
    };

    std::vector<double> y2 = sweeps(y0);
    if (corrector) {
        std::vector<double> diff(nn), a0d(nn);
        for (int k = 0; k < nn; ++k) diff[k] = y2[k] - phi_old[k];
        apply0(diff, a0d);
        std::vector<double> y0c = y0;
        for (int k = 0; k < nn; ++k) y0c[k] += 0.5 * dt * a0d[k];
        y2 = sweeps(y0c);
    }
    return y2;
}

} // namespace

std::vector<double> backward_linear_step(const CalibrationProblem& p, int substep,
                                         const CoefSlice& coef,
                                         const std::vector<double>& phi_old, double dt,
                                         const std::vector<double>* neg_cost,
                                         int i_begin,
                                         std::optional<double> pin_left) {
    (void)substep;
    if (p.grid.dim == 1)
        return step_1d(p.grid, p.boundary, coef, phi_old, dt, neg_cost, i_begin, pin_left);
    if (i_begin != 0 || pin_left)
        throw std::invalid_argument("backward_linear_step: sub-range stepping is 1D only");
    return step_2d(p.grid, p.boundary, coef, phi_old, dt, neg_cost);
}

} // namespace otcal::detail
