#include "otcal/problems.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace otcal {

namespace {

void note(std::vector<std::string>* notes, const std::string& text) {
    if (notes) notes->push_back(text);
}

std::vector<double> unique_maturities(const std::vector<MarketQuote>& quotes) {
    std::set<double> m;
    for (const auto& q : quotes) m.insert(q.maturity);
    return {m.begin(), m.end()};
}

double vanilla_payout(bool is_call, double s, double k) {
    return is_call ? std::max(s - k, 0.0) : std::max(k - s, 0.0);
}

void check_vanilla_bounds(const MarketQuote& q, double spot) {
    const bool call = instrument_is_call(q.instrument);
    const double intrinsic = vanilla_payout(call, spot, q.strike);
    const double cap = call ? spot : q.strike;
    const double slack = 1e-12 * std::max({1.0, spot, q.strike});
    if (q.price < intrinsic - slack || q.price > cap + slack) {
        std::ostringstream os;
        os << q.label() << ": price " << q.price << " violates the static bounds ["
           << intrinsic << ", " << cap << "]";
        throw std::invalid_argument(os.str());
    }
}

// Vanilla payout sampled on the log-price axis, replicated across the second
// dimension when present.
std::vector<double> spot_payoff(const SpaceTimeGrid& g, const MarketQuote& q) {
    const bool call = instrument_is_call(q.instrument);
    std::vector<double> out(g.node_count());
    for (int i = 0; i < g.n[0]; ++i) {
        const double v = vanilla_payout(call, std::exp(g.x(0, i)), q.strike);
        for (int j = 0; j < g.n[1]; ++j) out[g.idx(i, j)] = v;
    }
    return out;
}

CalibrationProblem finish_spot_problem(const std::vector<MarketQuote>& quotes,
                                       CalibrationProblem&& p) {
    for (const auto& q : quotes) {
        ConstraintSpec cs;
        cs.quote = q;
        cs.maturity = q.maturity;
        cs.target = q.price;
        cs.payoff = spot_payoff(p.grid, q);
        switch (q.instrument) {
        case Instrument::BarrierDIPut: cs.regime = Regime::HitOnly; break;
        case Instrument::BarrierDOPut: cs.regime = Regime::AliveOnly; break;
        default: cs.regime = Regime::Vanilla; break;
        }
        p.constraints.push_back(std::move(cs));
    }
    return std::move(p);
}

void require_european(const std::vector<MarketQuote>& quotes) {
    if (quotes.empty()) throw std::invalid_argument("no quotes given");
    for (const auto& q : quotes)
        if (q.instrument != Instrument::EuropeanPut && q.instrument != Instrument::EuropeanCall)
            throw std::invalid_argument(q.label() + ": only European puts and calls fit here");
}

void check_grid_request(const GridRequest& grid, int dim) {
    if (grid.nx < 3 || grid.nt < 2 || (dim == 2 && grid.ny < 3) || !(grid.width > 0.0))
        throw std::invalid_argument("grid request needs nx, ny >= 3, nt >= 2, width > 0");
}

} // namespace

CalibrationProblem build_lv_problem(const std::vector<MarketQuote>& quotes,
                                    const LvSetup& setup, const GridRequest& grid,
                                    std::vector<std::string>* notes_out) {
    require_european(quotes);
    check_grid_request(grid, 1);
    if (!(setup.spot > 0.0) || !(setup.sigma_ref > 0.0))
        throw std::invalid_argument("spot and sigma_ref must be positive");
    for (const auto& q : quotes) check_vanilla_bounds(q, setup.spot);

    const std::vector<double> maturities = unique_maturities(quotes);
    const double T = maturities.back();
    const double x0 = std::log(setup.spot);
    const double half = grid.width * setup.sigma_ref * std::sqrt(T);

    DomainSpec spec;
    spec.dim = 1;
    spec.x_min = {x0 - half, 0.0};
    spec.x_max = {x0 + half, 0.0};
    spec.n_nodes = {grid.nx, 1};
    spec.x0 = {x0, 0.0};
    spec.n_time = grid.nt;

    CalibrationProblem p;
    p.grid = build_grid(spec, maturities, T);
    p.cost.variant = Variant::LocalVol;
    p.cost.power = make_power_cost(setup.cost.a, setup.cost.p, setup.cost.q);
    p.cost.ref_var.assign(p.grid.schedule.size(),
                          std::vector<double>(p.grid.node_count(),
                                              setup.sigma_ref * setup.sigma_ref));
    (void)notes_out;
    return finish_spot_problem(quotes, std::move(p));
}

CalibrationProblem build_lsv_problem(const std::vector<MarketQuote>& quotes,
                                     const LsvSetup& setup, const GridRequest& grid,
                                     std::vector<std::string>* notes_out) {
    require_european(quotes);
    check_grid_request(grid, 2);
    const HestonParams& h = setup.heston;
    if (!(setup.spot > 0.0)) throw std::invalid_argument("spot must be positive");
    if (!(h.kappa > 0.0) || !(h.theta > 0.0) || !(h.xi > 0.0))
        throw std::invalid_argument("kappa, theta, xi must be positive");
    if (!(std::abs(h.eta) < 1.0))
        throw std::invalid_argument("correlation eta must lie strictly inside (-1, 1)");
    if (!(h.v0 >= 1e-6))
        throw std::invalid_argument("initial variance must be at least 1e-6");
    for (const auto& q : quotes) check_vanilla_bounds(q, setup.spot);
    if (2.0 * h.kappa * h.theta < h.xi * h.xi) {
        std::ostringstream os;
        os << "mean reversion is too weak for the vol-of-vol (2*kappa*theta/xi^2 = "
           << 2.0 * h.kappa * h.theta / (h.xi * h.xi)
           << " < 1): variance mass accumulates near zero";
        note(notes_out, os.str());
    }

    const std::vector<double> maturities = unique_maturities(quotes);
    const double T = maturities.back();
    const double x0 = std::log(setup.spot);
    const double scale = std::max(h.v0, h.theta);
    const double half = grid.width * std::sqrt(scale * T);
    const double var_max = setup.var_max > 0.0 ? setup.var_max : 10.0 * scale;
    if (var_max <= h.v0)
        throw std::invalid_argument("variance upper bound must exceed the initial variance");

    DomainSpec spec;
    spec.dim = 2;
    spec.x_min = {x0 - half, 1e-6};
    spec.x_max = {x0 + half, var_max};
    spec.n_nodes = {grid.nx, grid.ny};
    spec.x0 = {x0, h.v0};
    spec.floor_second = true;
    spec.n_time = grid.nt;

    CalibrationProblem p;
    p.grid = build_grid(spec, maturities, T);
    p.cost.variant = Variant::LocalStochastic;
    p.cost.power = make_power_cost(setup.cost.a, setup.cost.p, setup.cost.q);
    p.cost.heston = h;
    return finish_spot_problem(quotes, std::move(p));
}

CalibrationProblem build_joint_problem(const std::vector<MarketQuote>& quotes,
                                       const JointSetup& setup, const GridRequest& grid,
                                       std::vector<std::string>* notes_out) {
    check_grid_request(grid, 2);
    if (!(setup.spot > 0.0) || !(setup.x2_0 > 0.0) || !(setup.vix_window > 0.0))
        throw std::invalid_argument("spot, x2_0 and vix_window must be positive");
    if (!(setup.ref.kappa > 0.0) || !(setup.ref.theta > 0.0) || !(setup.ref.omega > 0.0))
        throw std::invalid_argument("reference kappa, theta, omega must be positive");
    if (!(std::abs(setup.ref.eta) <= 1.0))
        throw std::invalid_argument("reference correlation must lie in [-1, 1]");

    std::vector<MarketQuote> spx, vix;
    const MarketQuote* future = nullptr;
    for (const auto& q : quotes) {
        switch (q.instrument) {
        case Instrument::SpxPut:
        case Instrument::SpxCall:
        case Instrument::EuropeanPut:
        case Instrument::EuropeanCall: spx.push_back(q); break;
        case Instrument::VixPut:
        case Instrument::VixCall: vix.push_back(q); break;
        case Instrument::VixFuture:
            if (future) throw std::invalid_argument("more than one index future quoted");
            future = &q;
            break;
        default:
            throw std::invalid_argument(q.label() + ": not usable in the joint problem");
        }
    }
    if (!future)
        throw std::invalid_argument(
            "the joint problem needs the index future quote to anchor the index maturity");
    const double t0 = future->maturity;
    for (const auto& q : vix)
        if (q.maturity != t0)
            throw std::invalid_argument(q.label() +
                                        ": index options must mature with the future");
    const double T = t0 + setup.vix_window;
    for (const auto& q : spx) {
        check_vanilla_bounds(q, setup.spot);
        if (q.maturity > T * (1.0 + 1e-12))
            throw std::invalid_argument(q.label() + ": spot options must mature by " +
                                        format_float(T));
    }
    for (const auto& q : vix) {
        const double intrinsic =
            vanilla_payout(instrument_is_call(q.instrument), future->price, q.strike);
        if (q.price < intrinsic - 1e-12 * std::max(1.0, future->price))
            throw std::invalid_argument(q.label() + ": price below intrinsic vs the future");
    }

    const double A = std::max((1.0 - std::exp(-setup.ref.kappa * T)) / setup.ref.kappa, 1e-8);
    const double nu0 =
        std::max((2.0 * setup.x2_0 - setup.ref.theta * (T - A)) / A, 0.0);
    const double scale = std::max({nu0, setup.ref.theta, 1e-4});
    const double x10 = std::log(setup.spot);
    const double half = grid.width * std::sqrt(scale * T);
    const double x2_max = setup.x2_max > 0.0 ? setup.x2_max : 4.0 * setup.x2_0;
    if (x2_max <= setup.x2_0)
        throw std::invalid_argument("x2_max must exceed the initial second state");

    std::vector<double> maturities;
    {
        std::set<double> m;
        for (const auto& q : spx) m.insert(q.maturity);
        m.insert(t0);
        m.insert(T);
        maturities.assign(m.begin(), m.end());
    }

    DomainSpec spec;
    spec.dim = 2;
    spec.x_min = {x10 - half, 0.0};
    spec.x_max = {x10 + half, x2_max};
    spec.n_nodes = {grid.nx, grid.ny};
    spec.x0 = {x10, setup.x2_0};
    spec.floor_second = true;
    spec.n_time = grid.nt;

    CalibrationProblem p;
    p.grid = build_grid(spec, maturities, T);
    p.cost.variant = Variant::Joint;
    p.cost.joint_ref = setup.ref;

    auto add = [&](const MarketQuote& q, std::vector<double> payoff, double target) {
        ConstraintSpec cs;
        cs.quote = q;
        cs.maturity = q.maturity;
        cs.target = target;
        cs.payoff = std::move(payoff);
        p.constraints.push_back(std::move(cs));
    };

    for (const auto& q : spx) add(q, spot_payoff(p.grid, q), q.price);

    const double nan = std::nan("");
    auto index_payoff = [&](const MarketQuote& q) {
        std::vector<double> out(p.grid.node_count());
        for (int j = 0; j < p.grid.n[1]; ++j) {
            const double level = vix_payout(p.grid.x(1, j), setup.vix_window);
            const double v = q.instrument == Instrument::VixFuture
                                 ? level
                                 : vanilla_payout(instrument_is_call(q.instrument), level,
                                                  q.strike);
            for (int i = 0; i < p.grid.n[0]; ++i) out[p.grid.idx(i, j)] = v;
        }
        return out;
    };
    for (const auto& q : vix) add(q, index_payoff(q), q.price);
    add(*future, index_payoff(*future), future->price);

    MarketQuote pin;
    pin.instrument = Instrument::TerminalPin;
    pin.maturity = T;
    pin.strike = nan;
    pin.price = 0.0;
    pin.barrier = nan;
    std::vector<double> pin_payoff(p.grid.node_count());
    for (int j = 0; j < p.grid.n[1]; ++j) {
        const double v = terminal_pin_payout(p.grid.x(1, j));
        for (int i = 0; i < p.grid.n[0]; ++i) pin_payoff[p.grid.idx(i, j)] = v;
    }
    add(pin, std::move(pin_payoff), 0.0);

    if (nu0 == 0.0)
        note(notes_out, "initial state implies zero reference spot variance; check x2_0");
    return p;
}

CalibrationProblem build_barrier_problem(const std::vector<MarketQuote>& quotes,
                                         const LvSetup& setup, const GridRequest& grid,
                                         std::vector<std::string>* notes_out) {
    if (quotes.empty()) throw std::invalid_argument("no quotes given");
    check_grid_request(grid, 1);
    if (!(setup.spot > 0.0) || !(setup.sigma_ref > 0.0))
        throw std::invalid_argument("spot and sigma_ref must be positive");

    double level = std::nan("");
    for (const auto& q : quotes) {
        switch (q.instrument) {
        case Instrument::EuropeanPut:
        case Instrument::EuropeanCall:
            check_vanilla_bounds(q, setup.spot);
            break;
        case Instrument::BarrierDIPut:
        case Instrument::BarrierDOPut: {
            if (q.price < -1e-15 || q.price > q.strike * (1.0 + 1e-12))
                throw std::invalid_argument(q.label() + ": price outside [0, strike]");
            if (std::isnan(level))
                level = q.barrier;
            else if (std::abs(q.barrier - level) > 1e-9 * std::max(1.0, level))
                throw std::invalid_argument(q.label() +
                                            ": all quotes must share one barrier level");
            break;
        }
        default:
            throw std::invalid_argument(q.label() + ": not usable in the barrier problem");
        }
    }
    if (std::isnan(level))
        throw std::invalid_argument("no barrier quote given; use the plain builder instead");
    if (!(level > 0.0)) throw std::invalid_argument("barrier level must be positive");
    if (level >= setup.spot)
        throw std::invalid_argument("barrier level must lie strictly below the spot");

    const std::vector<double> maturities = unique_maturities(quotes);
    const double T = maturities.back();
    const double x0 = std::log(setup.spot);
    const double half = grid.width * setup.sigma_ref * std::sqrt(T);
    const double b = std::log(level);

    DomainSpec spec;
    spec.dim = 1;
    spec.x_min = {x0 - half, 0.0};
    spec.x_max = {x0 + half, 0.0};
    spec.n_nodes = {grid.nx, 1};
    spec.x0 = {x0, 0.0};
    spec.n_time = grid.nt;

    CalibrationProblem p;
    p.grid = build_grid(spec, maturities, T);
    p.cost.variant = Variant::LocalVol;
    p.cost.power = make_power_cost(setup.cost.a, setup.cost.p, setup.cost.q);
    p.cost.ref_var.assign(p.grid.schedule.size(),
                          std::vector<double>(p.grid.node_count(),
                                              setup.sigma_ref * setup.sigma_ref));

    BarrierDescriptor bd;
    if (b <= p.grid.x_min[0]) {
        bd.level = b;
        bd.node = 0;
        bd.inert = true;
        note(notes_out,
             "barrier lies below the computational domain: knock-outs equal vanillas and "
             "knock-ins are worthless here");
    } else {
        int ib = static_cast<int>(std::llround((b - p.grid.x_min[0]) / p.grid.dx[0]));
        ib = std::clamp(ib, 1, p.grid.n[0] - 2);
        if (ib >= p.grid.x0_index[0])
            throw std::invalid_argument("barrier row collides with the spot node; widen "
                                        "the grid or lower the barrier");
        bd.level = p.grid.x(0, ib);
        bd.node = ib;
        bd.inert = false;
        if (std::abs(bd.level - b) > 0.499 * p.grid.dx[0])
            note(notes_out, "barrier snapped by about half a cell; refine the grid to "
                            "place it more precisely");
    }
    p.barrier = bd;
    return finish_spot_problem(quotes, std::move(p));
}

namespace {

// Edge-truncated moving average along x (per substep), then along t
// (per node).
std::vector<std::vector<double>> smooth_surface(const std::vector<std::vector<double>>& s,
                                                int xw, int tw) {
    const int S = static_cast<int>(s.size());
    const int N = S ? static_cast<int>(s[0].size()) : 0;
    const int hx = std::max(xw, 1) / 2;
    const int ht = std::max(tw, 1) / 2;
    std::vector<std::vector<double>> a(S, std::vector<double>(N, 0.0));
    for (int k = 0; k < S; ++k)
        for (int i = 0; i < N; ++i) {
            const int lo = std::max(0, i - hx), hi = std::min(N - 1, i + hx);
            double acc = 0.0;
            for (int j = lo; j <= hi; ++j) acc += s[k][j];
            a[k][i] = acc / (hi - lo + 1);
        }
    std::vector<std::vector<double>> out(S, std::vector<double>(N, 0.0));
    for (int k = 0; k < S; ++k) {
        const int lo = std::max(0, k - ht), hi = std::min(S - 1, k + ht);
        for (int i = 0; i < N; ++i) {
            double acc = 0.0;
            for (int j = lo; j <= hi; ++j) acc += a[j][i];
            out[k][i] = acc / (hi - lo + 1);
        }
    }
    return out;
}

// Total variation of the model put smile over a dense strike ladder, summed
// over constraint maturities.
double smile_tv(const CalibrationProblem& p, const ControlField& controls) {
    const double spot = std::exp(p.grid.x0[0]);
    std::set<double> mats;
    for (const auto& cs : p.constraints) mats.insert(cs.maturity);
    constexpr int ladder = 41;
    std::vector<std::pair<double, double>> jobs; // (maturity, strike)
    for (double m : mats)
        for (int i = 0; i < ladder; ++i)
            jobs.emplace_back(m, spot * (0.85 + 0.30 * i / (ladder - 1)));
    std::vector<double> prices(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), [&](int i) {
        std::vector<double> payoff(p.grid.node_count());
        for (int k = 0; k < p.grid.n[0]; ++k)
            payoff[k] = std::max(jobs[i].second - std::exp(p.grid.x(0, k)), 0.0);
        prices[i] = price_payoff(p, controls, payoff, jobs[i].first);
    });
    double tv = 0.0;
    int at = 0;
    for (std::size_t mi = 0; mi < mats.size(); ++mi) {
        double prev = std::nan("");
        for (int i = 0; i < ladder; ++i, ++at) {
            const auto& [m, k] = jobs[at];
            const double capped = std::min(prices[at], k * (1.0 - 1e-12));
            const double iv = implied_vol(spot, k, capped, m, false);
            if (i > 0) tv += std::abs(iv - prev);
            prev = iv;
        }
    }
    return tv;
}

double scaled_residual_inf(const DualState& st, const std::vector<double>& targets) {
    double r = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i)
        r = std::max(r, std::abs(st.gradient[i]) / std::max(1.0, std::abs(targets[i])));
    return r;
}

} // namespace

ReferenceIterationResult reference_iteration(CalibrationProblem problem,
                                             const ReferenceIterationOptions& opts) {
    if (problem.cost.variant != Variant::LocalVol || problem.barrier)
        throw std::invalid_argument("reference smoothing applies to plain one-factor problems");
    if (opts.iterations < 1 || opts.x_window < 1 || opts.t_window < 1)
        throw std::invalid_argument("reference smoothing needs positive window sizes");

    const std::vector<double> targets = problem.targets();
    MaximizeOptions mo = opts.optimizer;
    ReferenceIterationResult out;
    CalibrationOutcome oc = maximize(problem, mo);
    out.skew_tv.push_back(smile_tv(problem, oc.fit.controls));
    out.residual_inf.push_back(scaled_residual_inf(oc.state, targets));

    for (int pass = 1; pass < opts.iterations; ++pass) {
        auto smoothed = smooth_surface(oc.fit.controls.b11, opts.x_window, opts.t_window);
        for (auto& row : smoothed)
            for (double& v : row) v = std::max(v, 1e-10);
        problem.cost.ref_var = std::move(smoothed);
        mo.lambda0 = oc.state.lambda;
        oc = maximize(problem, mo);
        out.skew_tv.push_back(smile_tv(problem, oc.fit.controls));
        out.residual_inf.push_back(scaled_residual_inf(oc.state, targets));
    }
    out.problem = std::move(problem);
    out.outcome = std::move(oc);
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

SimulatedPaths simulate_paths(const CalibrationProblem& p, const ControlField& controls,
                              const ControlField* controls_hit, int n_paths,
                              std::uint64_t seed) {
    if (n_paths < 1) throw std::invalid_argument("simulate_paths: n_paths must be positive");
    const int S = static_cast<int>(p.grid.schedule.size());
    if (static_cast<int>(controls.b11.size()) != S)
        throw std::invalid_argument("simulate_paths: control field does not match the schedule");
    const bool split = p.barrier && !p.barrier->inert;
    if (split && !controls_hit)
        throw std::invalid_argument("simulate_paths: split problem needs the hit field too");
    const bool switching = p.barrier && controls_hit;

    std::vector<CoefSlice> alive(S), hit;
    for (int k = 0; k < S; ++k) control_coefficients(p, k, controls, alive[k]);
    if (switching) {
        hit.resize(S);
        for (int k = 0; k < S; ++k) control_coefficients(p, k, *controls_hit, hit[k]);
    }

    SimulatedPaths out;
    out.times.reserve(S + 1);
    for (const auto& ss : p.grid.schedule) out.times.push_back(ss.t_left);
    out.times.push_back(p.grid.horizon());
    out.terminal.resize(n_paths);
    out.hit.assign(n_paths, 0);
    const int n_samples = std::min(n_paths, 32);
    out.samples.assign(n_samples, {});

    const bool two_d = p.grid.dim == 2;
    parallel_for(n_paths, [&](int path) {
        std::mt19937_64 rng(
            splitmix64(seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(path + 1)));
        std::normal_distribution<double> normal;
        double x1 = p.grid.x0[0];
        double x2 = p.grid.x0[1];
        bool crossed = false;
        std::vector<std::array<double, 2>>* trace = nullptr;
        if (path < n_samples) {
            trace = &out.samples[path];
            trace->reserve(S + 1);
            trace->push_back({x1, x2});
        }
        for (int k = 0; k < S; ++k) {
            const auto& ss = p.grid.schedule[k];
            const double dt = ss.t_right - ss.t_left;
            const int i = std::clamp(
                static_cast<int>(std::llround((x1 - p.grid.x_min[0]) / p.grid.dx[0])), 0,
                p.grid.n[0] - 1);
            int node = i;
            if (two_d) {
                const int j = std::clamp(
                    static_cast<int>(std::llround((x2 - p.grid.x_min[1]) / p.grid.dx[1])), 0,
                    p.grid.n[1] - 1);
                node = p.grid.idx(i, j);
            }
            const CoefSlice& c = (switching && crossed) ? hit[k] : alive[k];
            const double z1 = normal(rng);
            if (two_d) {
                const double z2 = normal(rng);
                const double b11 = std::max(c.b11[node], 0.0);
                const double l11 = std::sqrt(b11);
                const double l21 = l11 > 0.0 ? c.b12[node] / l11 : 0.0;
                const double l22 = std::sqrt(std::max(c.b22[node] - l21 * l21, 0.0));
                x1 += c.a1[node] * dt + std::sqrt(dt) * l11 * z1;
                x2 += c.a2[node] * dt + std::sqrt(dt) * (l21 * z1 + l22 * z2);
                x2 = std::clamp(x2, p.grid.x_min[1],
                                p.grid.x_min[1] + (p.grid.n[1] - 1) * p.grid.dx[1]);
            } else {
                const double b11 = std::max(c.b11[node], 0.0);
                x1 += c.a1[node] * dt + std::sqrt(b11 * dt) * z1;
            }
            if (switching && !crossed && x1 <= p.barrier->level) crossed = true;
            if (trace) trace->push_back({x1, x2});
        }
        out.terminal[path] = {x1, x2};
        out.hit[path] = crossed ? 1 : 0;
    });
    return out;
}

} // namespace otcal
