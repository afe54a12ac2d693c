#include "otcal/dual.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace otcal {

EvalResult eval_dual(const CalibrationProblem& p, const std::vector<double>& lambda) {
    EvalResult r;
    const std::vector<double> c = p.targets();
    if (lambda.size() != c.size())
        throw std::invalid_argument("eval_dual: multiplier count does not match constraints");

    if (p.barrier) {
        BarrierSolution s = solve_hjb_barrier(p, lambda);
        r.value_at_x0 = s.value_at_x0;
        r.controls = std::move(s.controls_alive);
        r.controls_hit = std::move(s.controls_hit);
        r.max_policy_iterations = s.max_policy_iterations;
        r.prices = model_prices_barrier(p, r.controls, r.controls_hit);
    } else {
        HJBSolution s = solve_hjb(p, lambda);
        r.value_at_x0 = s.value_at_x0;
        r.controls = std::move(s.controls);
        r.max_policy_iterations = s.max_policy_iterations;
        r.prices = model_prices(p, r.controls);
    }

    double L = -r.value_at_x0;
    r.gradient.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        L += lambda[i] * c[i];
        r.gradient[i] = c[i] - r.prices[i];
    }
    r.L = L;
    return r;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Point seen by the minimizer of f = -L: carries f and grad f = prices - c.
struct Probe {
    double f = 0.0;
    std::vector<double> g;
};

struct Objective {
    const CalibrationProblem& p;
    explicit Objective(const CalibrationProblem& problem) : p(problem) {}
    int evals = 0;
    // Best (lowest f) multiplier over every evaluation, line-search trials
    // included; the fallback when the search stalls.
    double best_f = std::numeric_limits<double>::infinity();
    std::vector<double> best_x;
    Probe best_probe;

    Probe operator()(const std::vector<double>& x) {
        EvalResult e = eval_dual(p, x);
        ++evals;
        Probe pr;
        pr.f = -e.L;
        pr.g.resize(e.gradient.size());
        for (std::size_t i = 0; i < pr.g.size(); ++i) pr.g[i] = -e.gradient[i];
        if (!std::isfinite(pr.f))
            throw std::runtime_error("dual objective is not finite");
        for (double v : pr.g)
            if (!std::isfinite(v))
                throw std::runtime_error("dual gradient is not finite");
        if (pr.f < best_f) {
            best_f = pr.f;
            best_x = x;
            best_probe = pr;
        }
        return pr;
    }
};

double residual_inf(const std::vector<double>& grad_f, const std::vector<double>& c) {
    double r = 0.0;
    for (std::size_t i = 0; i < grad_f.size(); ++i)
        r = std::max(r, std::abs(grad_f[i]) / std::max(1.0, std::abs(c[i])));
    return r;
}

bool within_tol(const std::vector<double>& grad_f, const std::vector<double>& c, double tol) {
    for (std::size_t i = 0; i < grad_f.size(); ++i)
        if (std::abs(grad_f[i]) > tol * std::max(1.0, std::abs(c[i]))) return false;
    return true;
}

std::vector<double> advance(const std::vector<double>& x, double a,
                            const std::vector<double>& d) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + a * d[i];
    return y;
}

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), clipped into
// the interior of [lo, hi]; falls back to the midpoint when degenerate.
double cubic_min(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (disc < 0.0) return 0.5 * (a + b);
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if (!std::isfinite(t)) return 0.5 * (a + b);
    const double lo = std::min(a, b), hi = std::max(a, b);
    const double pad = 0.1 * (hi - lo);
    return std::clamp(t, lo + pad, hi - pad);
}

struct LineResult {
    bool ok = false;
    double a = 0.0;
    std::vector<double> x;
    Probe probe;
    int evals = 0;
};

// Strong Wolfe search along d from (x0, p0): sufficient decrease with
// c1 = 1e-4 and curvature |phi'| <= 0.9 |phi'(0)|, bracket-then-zoom with
// cubic interpolation.
LineResult line_search(Objective& obj, const std::vector<double>& x0, const Probe& p0,
                       const std::vector<double>& d, double a_first) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    constexpr int max_expand = 20, max_zoom = 30;
    const double f0 = p0.f;
    const double df0 = dot(p0.g, d);
    LineResult out;
    if (df0 >= 0.0) return out; // not a descent direction

    struct End {
        double a, f, df;
    };

    auto probe_at = [&](double a) {
        std::vector<double> x = advance(x0, a, d);
        Probe pr = obj(x);
        ++out.evals;
        return std::pair<std::vector<double>, Probe>(std::move(x), std::move(pr));
    };

    auto accept = [&](double a, std::vector<double>&& x, Probe&& pr) {
        out.ok = true;
        out.a = a;
        out.x = std::move(x);
        out.probe = std::move(pr);
    };

    auto zoom = [&](End lo, End hi, std::vector<double> x_lo, Probe p_lo) {
        for (int it = 0; it < max_zoom; ++it) {
            if (std::abs(hi.a - lo.a) <= 1e-14 * std::max(1.0, std::abs(lo.a))) break;
            const double a = cubic_min(lo.a, lo.f, lo.df, hi.a, hi.f, hi.df);
            auto [x, pr] = probe_at(a);
            const double df = dot(pr.g, d);
            if (pr.f > f0 + c1 * a * df0 || pr.f >= lo.f) {
                hi = {a, pr.f, df};
            } else {
                if (std::abs(df) <= -c2 * df0) {
                    accept(a, std::move(x), std::move(pr));
                    return;
                }
                if (df * (hi.a - lo.a) >= 0.0) hi = lo;
                lo = {a, pr.f, df};
                x_lo = std::move(x);
                p_lo = std::move(pr);
            }
        }
        // No Wolfe point isolated; fall back to the best bracket end if it
        // at least decreases f. The caller treats ok == false as a stall.
        if (p_lo.f < f0) accept(lo.a, std::move(x_lo), std::move(p_lo));
    };

    End prev{0.0, f0, df0};
    std::vector<double> x_prev = x0;
    Probe p_prev = p0;
    double a = a_first;
    for (int it = 0; it < max_expand; ++it) {
        auto [x, pr] = probe_at(a);
        const double df = dot(pr.g, d);
        const End here{a, pr.f, df};
        if (pr.f > f0 + c1 * a * df0 || (it > 0 && pr.f >= prev.f)) {
            zoom(prev, here, std::move(x_prev), std::move(p_prev));
            return out;
        }
        if (std::abs(df) <= -c2 * df0) {
            accept(a, std::move(x), std::move(pr));
            return out;
        }
        if (df >= 0.0) {
            zoom(here, prev, std::move(x), std::move(pr));
            return out;
        }
        prev = {a, pr.f, df};
        x_prev = std::move(x);
        p_prev = std::move(pr);
        a *= 2.0;
    }
    return out;
}

// Decrease-only fallback for when the curvature condition cannot be met (the
// gradient carries a small discretization bias near a stall): halve the step
// until sufficient decrease holds. Keeps accepted objectives monotone.
LineResult backtrack(Objective& obj, const std::vector<double>& x0, const Probe& p0,
                     const std::vector<double>& d, double a_first) {
    constexpr double c1 = 1e-4;
    constexpr int max_halve = 30;
    const double df0 = dot(p0.g, d);
    LineResult out;
    if (df0 >= 0.0) return out;
    double a = a_first;
    for (int it = 0; it < max_halve; ++it, a *= 0.5) {
        std::vector<double> x = advance(x0, a, d);
        Probe pr = obj(x);
        ++out.evals;
        if (pr.f <= p0.f + c1 * a * df0) {
            out.ok = true;
            out.a = a;
            out.x = std::move(x);
            out.probe = std::move(pr);
            return out;
        }
    }
    return out;
}

} // namespace

DualState maximize_objective(const CalibrationProblem& p, const MaximizeOptions& opts) {
    const std::vector<double> c = p.targets();
    const std::size_t m = c.size();
    std::vector<double> x = opts.lambda0.empty() ? std::vector<double>(m, 0.0) : opts.lambda0;
    if (x.size() != m)
        throw std::invalid_argument("maximize_objective: lambda0 has the wrong length");
    if (opts.memory < 1 || opts.max_iter < 0 || !(opts.tol > 0.0))
        throw std::invalid_argument("maximize_objective: bad options");

    DualState st;
    Objective obj(p);
    Probe cur = obj(x);
    st.L_history.push_back(-cur.f);
    st.converged = within_tol(cur.g, c, opts.tol);

    std::deque<std::pair<std::vector<double>, std::vector<double>>> pairs; // (s, y)
    bool stalled = false;

    for (int iter = 0; iter < opts.max_iter && !st.converged && m > 0; ++iter) {
        // Two-loop recursion for d = -H g.
        std::vector<double> q = cur.g;
        std::vector<double> alpha(pairs.size());
        for (int i = static_cast<int>(pairs.size()) - 1; i >= 0; --i) {
            const auto& [s, y] = pairs[i];
            const double rho = 1.0 / dot(y, s);
            alpha[i] = rho * dot(s, q);
            for (std::size_t k = 0; k < m; ++k) q[k] -= alpha[i] * y[k];
        }
        if (!pairs.empty()) {
            const auto& [s, y] = pairs.back();
            const double gamma = dot(s, y) / dot(y, y);
            for (double& v : q) v *= gamma;
        }
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& [s, y] = pairs[i];
            const double rho = 1.0 / dot(y, s);
            const double beta = rho * dot(y, q);
            for (std::size_t k = 0; k < m; ++k) q[k] += (alpha[i] - beta) * s[k];
        }
        std::vector<double> d(m);
        for (std::size_t k = 0; k < m; ++k) d[k] = -q[k];
        if (dot(d, cur.g) >= 0.0) { // lost conjugacy; restart from steepest descent
            pairs.clear();
            for (std::size_t k = 0; k < m; ++k) d[k] = -cur.g[k];
        }

        const double a_first =
            pairs.empty() ? std::min(1.0, 1.0 / std::max(norm2(cur.g), 1e-12)) : 1.0;
        const int evals_before = obj.evals;
        LineResult ls = line_search(obj, x, cur, d, a_first);
        if (!ls.ok && !pairs.empty()) {
            // retry along steepest ascent with fresh curvature memory
            pairs.clear();
            for (std::size_t k = 0; k < m; ++k) d[k] = -cur.g[k];
            const double a0 = std::min(1.0, 1.0 / std::max(norm2(cur.g), 1e-12));
            ls = line_search(obj, x, cur, d, a0);
            if (!ls.ok) ls = backtrack(obj, x, cur, d, a0);
        } else if (!ls.ok) {
            ls = backtrack(obj, x, cur, d, a_first);
        }
        if (!ls.ok) {
            stalled = true;
            break;
        }

        std::vector<double> s(m), y(m);
        for (std::size_t k = 0; k < m; ++k) {
            s[k] = ls.x[k] - x[k];
            y[k] = ls.probe.g[k] - cur.g[k];
        }
        if (dot(s, y) > 1e-10 * norm2(s) * norm2(y)) {
            pairs.emplace_back(std::move(s), std::move(y));
            if (static_cast<int>(pairs.size()) > opts.memory) pairs.pop_front();
        }

        x = std::move(ls.x);
        cur = std::move(ls.probe);
        st.iterations = iter + 1;
        st.L_history.push_back(-cur.f);
        st.log.push_back({iter + 1, -cur.f, residual_inf(cur.g, c), obj.evals - evals_before,
                          ls.a});
        st.converged = within_tol(cur.g, c, opts.tol);
    }

    if (stalled && obj.best_f < cur.f) {
        x = obj.best_x;
        cur = obj.best_probe;
        st.converged = within_tol(cur.g, c, opts.tol);
    }

    st.lambda = std::move(x);
    st.L = -cur.f;
    st.gradient.resize(m);
    for (std::size_t i = 0; i < m; ++i) st.gradient[i] = -cur.g[i];
    st.residuals = st.gradient;
    st.objective_evals = obj.evals;
    return st;
}

CalibrationOutcome maximize(const CalibrationProblem& p, const MaximizeOptions& opts) {
    CalibrationOutcome out;
    out.state = maximize_objective(p, opts);
    out.fit = eval_dual(p, out.state.lambda);
    return out;
}

double fd_gradient_check(const CalibrationProblem& p, const std::vector<double>& lambda,
                         double h) {
    if (!(h > 0.0)) throw std::invalid_argument("fd_gradient_check: h must be positive");
    const EvalResult at = eval_dual(p, lambda);
    double worst = 0.0;
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        std::vector<double> lp = lambda, lm = lambda;
        lp[i] += h;
        lm[i] -= h;
        const double fd = (eval_dual(p, lp).L - eval_dual(p, lm).L) / (2.0 * h);
        const double denom = std::max({std::abs(at.gradient[i]), std::abs(fd), 1e-3});
        worst = std::max(worst, std::abs(at.gradient[i] - fd) / denom);
    }
    return worst;
}

} // namespace otcal
