// Command-line front end: calibrate a model to a quote sheet, reprice or
// simulate under a saved surface, or finite-difference-check the dual
// gradient. Exit codes: 0 success, 2 finished without meeting the
// convergence tolerance, 1 bad input or runtime failure.

#include "otcal/problems.hpp"
#include "otcal/report.hpp"

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using nlohmann::json;
using namespace otcal;

namespace {

struct Config {
    json root;

    static Config load(const std::string& path) {
        Config c;
        if (path.empty()) {
            c.root = json::object();
            return c;
        }
        std::ifstream is(path);
        if (!is) throw std::invalid_argument("cannot read config " + path);
        is >> c.root;
        return c;
    }

    json section(const char* name) const {
        auto it = root.find(name);
        return it == root.end() ? json::object() : *it;
    }
};

double jget(const json& j, const char* key, double dflt) {
    auto it = j.find(key);
    return it == j.end() ? dflt : it->get<double>();
}

int jget(const json& j, const char* key, int dflt) {
    auto it = j.find(key);
    return it == j.end() ? dflt : it->get<int>();
}

GridRequest grid_from(const json& g, const std::vector<int>& cli_grid) {
    GridRequest r;
    r.nx = jget(g, "nx", r.nx);
    r.ny = jget(g, "ny", r.ny);
    r.nt = jget(g, "nt", r.nt);
    r.width = jget(g, "width", r.width);
    if (cli_grid.size() == 2) {
        r.nx = cli_grid[0];
        r.nt = cli_grid[1];
    } else if (cli_grid.size() == 3) {
        r.nx = cli_grid[0];
        r.ny = cli_grid[1];
        r.nt = cli_grid[2];
    } else if (!cli_grid.empty()) {
        throw std::invalid_argument("--grid expects NX,NT or NX,NY,NT");
    }
    return r;
}

LvSetup lv_from(const json& m) {
    LvSetup s;
    s.spot = jget(m, "spot", 1.0);
    s.sigma_ref = jget(m, "sigma_ref", 0.2);
    const json c = m.value("cost", json::object());
    s.cost = {jget(c, "a", 1.0), jget(c, "p", 2.0), jget(c, "q", 2.0)};
    return s;
}

LsvSetup lsv_from(const json& m) {
    LsvSetup s;
    s.spot = jget(m, "spot", 1.0);
    const json h = m.value("heston", json::object());
    s.heston.kappa = jget(h, "kappa", 1.0);
    s.heston.theta = jget(h, "theta", 0.04);
    s.heston.xi = jget(h, "xi", 0.5);
    s.heston.eta = jget(h, "eta", -0.5);
    s.heston.v0 = jget(h, "v0", 0.04);
    const json c = m.value("cost", json::object());
    s.cost = {jget(c, "a", 1.0), jget(c, "p", 2.0), jget(c, "q", 2.0)};
    s.var_max = jget(m, "var_max", 0.0);
    return s;
}

JointSetup joint_from(const json& m) {
    JointSetup s;
    s.spot = jget(m, "spot", 1.0);
    const json r = m.value("joint", json::object());
    s.ref.kappa = jget(r, "kappa", 1.0);
    s.ref.theta = jget(r, "theta", 0.04);
    s.ref.omega = jget(r, "omega", 0.5);
    s.ref.eta = jget(r, "eta", -0.5);
    s.x2_0 = jget(r, "x2_0", 0.0);
    s.vix_window = jget(r, "vix_window", 30.0 / 365.0);
    s.x2_max = jget(r, "x2_max", 0.0);
    return s;
}

MaximizeOptions opt_from(const json& o, double cli_tol, int cli_max_iter) {
    MaximizeOptions mo;
    mo.tol = cli_tol > 0.0 ? cli_tol : jget(o, "tol", mo.tol);
    mo.max_iter = cli_max_iter >= 0 ? cli_max_iter : jget(o, "max_iter", mo.max_iter);
    mo.memory = jget(o, "memory", mo.memory);
    return mo;
}

enum class Which { Lv, Lsv, Joint, Barrier };

CalibrationProblem build_problem(Which which, const std::vector<MarketQuote>& quotes,
                                 const Config& cfg, const std::vector<int>& cli_grid,
                                 std::vector<std::string>& notes) {
    const json model = cfg.section("model");
    const GridRequest grid = grid_from(cfg.section("grid"), cli_grid);
    switch (which) {
    case Which::Lv: return build_lv_problem(quotes, lv_from(model), grid, &notes);
    case Which::Lsv: return build_lsv_problem(quotes, lsv_from(model), grid, &notes);
    case Which::Joint: return build_joint_problem(quotes, joint_from(model), grid, &notes);
    case Which::Barrier: return build_barrier_problem(quotes, lv_from(model), grid, &notes);
    }
    throw std::logic_error("unreachable");
}

Which which_from_config(const Config& cfg, const std::vector<MarketQuote>& quotes) {
    const std::string v = cfg.section("model").value("variant", "");
    if (v == "local_stochastic") return Which::Lsv;
    if (v == "joint") return Which::Joint;
    if (!v.empty() && v != "local_vol")
        throw std::invalid_argument("config model.variant must be local_vol, "
                                    "local_stochastic or joint");
    for (const auto& q : quotes)
        if (q.instrument == Instrument::BarrierDIPut ||
            q.instrument == Instrument::BarrierDOPut)
            return Which::Barrier;
    return Which::Lv;
}

int run_calibrate(Which which, const std::string& quotes_path, const std::string& cfg_path,
                  const std::string& out_dir, double tol, int max_iter, int ref_iters,
                  const std::vector<int>& cli_grid) {
    const Config cfg = Config::load(cfg_path);
    const auto quotes = load_quotes(quotes_path);
    std::vector<std::string> notes;
    CalibrationProblem p = build_problem(which, quotes, cfg, cli_grid, notes);
    for (const auto& n : notes) std::cerr << "note: " << n << '\n';

    MaximizeOptions mo = opt_from(cfg.section("optimizer"), tol, max_iter);
    const json sm = cfg.section("smoothing");
    int passes = ref_iters >= 0 ? ref_iters : jget(sm, "iterations", 1);
    if (passes < 1) passes = 1;

    CalibrationOutcome oc;
    if (passes > 1) {
        if (which != Which::Lv)
            throw std::invalid_argument("reference smoothing passes apply to the plain "
                                        "one-factor model only");
        ReferenceIterationOptions ro;
        ro.iterations = passes;
        ro.x_window = jget(sm, "x_window", ro.x_window);
        ro.t_window = jget(sm, "t_window", ro.t_window);
        ro.optimizer = mo;
        ReferenceIterationResult rr = reference_iteration(std::move(p), ro);
        for (std::size_t i = 0; i < rr.skew_tv.size(); ++i)
            notes.push_back("reference pass " + std::to_string(i + 1) +
                            ": smile tv = " + format_float(rr.skew_tv[i]) +
                            ", residual = " + format_float(rr.residual_inf[i]));
        p = std::move(rr.problem);
        oc = std::move(rr.outcome);
    } else {
        oc = maximize(p, mo);
    }

    export_results(out_dir, {p, oc.state, oc.fit, mo.tol, notes});
    double worst = 0.0;
    for (std::size_t i = 0; i < oc.fit.gradient.size(); ++i)
        worst = std::max(worst,
                         std::abs(oc.fit.gradient[i]) /
                             std::max(1.0, std::abs(p.constraints[i].target)));
    std::cout << (oc.state.converged ? "converged" : "not converged") << " after "
              << oc.state.iterations << " iterations (" << oc.state.objective_evals
              << " objective evaluations), dual value " << format_float(oc.state.L)
              << ", worst scaled residual " << format_float(worst) << "\n"
              << "results written to " << out_dir << '\n';
    return oc.state.converged ? 0 : 2;
}

int run_price(const std::string& quotes_path, const std::string& cfg_path,
              const std::string& surface, const std::string& surface_hit,
              const std::string& out_path, const std::vector<int>& cli_grid) {
    const Config cfg = Config::load(cfg_path);
    const auto quotes = load_quotes(quotes_path);
    std::vector<std::string> notes;
    const Which which = which_from_config(cfg, quotes);
    CalibrationProblem p = build_problem(which, quotes, cfg, cli_grid, notes);

    ControlField cf = load_surface(surface, p);
    std::vector<double> prices;
    if (p.barrier && !p.barrier->inert) {
        if (surface_hit.empty())
            throw std::invalid_argument("barrier problems need --surface-hit as well");
        ControlField ch = load_surface(surface_hit, p);
        prices = model_prices_barrier(p, cf, ch);
    } else {
        prices = model_prices(p, cf);
    }

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::invalid_argument("cannot write " + out_path);
        os = &file;
    }
    *os << "label,maturity,strike,target,price,residual\n";
    for (std::size_t i = 0; i < p.constraints.size(); ++i) {
        const auto& cs = p.constraints[i];
        *os << cs.label() << ',' << format_float(cs.maturity) << ','
            << (std::isnan(cs.quote.strike) ? "" : format_float(cs.quote.strike)) << ','
            << format_float(cs.target) << ',' << format_float(prices[i]) << ','
            << format_float(cs.target - prices[i]) << '\n';
    }
    return 0;
}

int run_simulate(const std::string& quotes_path, const std::string& cfg_path,
                 const std::string& surface, const std::string& surface_hit,
                 const std::string& out_path, int paths, std::uint64_t seed,
                 const std::vector<int>& cli_grid) {
    const Config cfg = Config::load(cfg_path);
    const auto quotes = load_quotes(quotes_path);
    std::vector<std::string> notes;
    const Which which = which_from_config(cfg, quotes);
    CalibrationProblem p = build_problem(which, quotes, cfg, cli_grid, notes);

    ControlField cf = load_surface(surface, p);
    std::optional<ControlField> ch;
    if (!surface_hit.empty()) ch = load_surface(surface_hit, p);
    if (p.barrier && !p.barrier->inert && !ch)
        throw std::invalid_argument("barrier problems need --surface-hit as well");

    SimulatedPaths sp = simulate_paths(p, cf, ch ? &*ch : nullptr, paths, seed);

    std::ofstream file(out_path);
    if (!file) throw std::invalid_argument("cannot write " + out_path);
    file << (p.grid.dim == 2 ? "path,x1,x2,hit\n" : "path,x1,hit\n");
    double mean_spot = 0.0;
    for (std::size_t i = 0; i < sp.terminal.size(); ++i) {
        file << i << ',' << format_float(sp.terminal[i][0]);
        if (p.grid.dim == 2) file << ',' << format_float(sp.terminal[i][1]);
        file << ',' << int(sp.hit[i]) << '\n';
        mean_spot += std::exp(sp.terminal[i][0]);
    }
    mean_spot /= static_cast<double>(sp.terminal.size());
    std::cout << paths << " paths to horizon " << format_float(p.grid.horizon())
              << ", terminal spot mean " << format_float(mean_spot) << ", written to "
              << out_path << '\n';
    return 0;
}

int run_check_gradient(Which which, const std::string& quotes_path,
                       const std::string& cfg_path, double h, double gap_tol,
                       const std::vector<int>& cli_grid) {
    const Config cfg = Config::load(cfg_path);
    const auto quotes = load_quotes(quotes_path);
    std::vector<std::string> notes;
    CalibrationProblem p = build_problem(which, quotes, cfg, cli_grid, notes);
    const std::vector<double> lambda(p.constraints.size(), 0.0);
    const double gap = fd_gradient_check(p, lambda, h);
    std::cout << "worst relative gradient gap at zero multipliers, h = " << format_float(h)
              << ": " << format_float(gap) << '\n';
    return gap <= gap_tol ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model calibration to option quote sheets via dual multipliers"};
    app.require_subcommand(1);

    std::string quotes_path, cfg_path, out_dir, surface, surface_hit, out_path;
    std::vector<int> cli_grid;
    double tol = -1.0, h = 1e-4, gap_tol = 1e-3;
    int max_iter = -1, ref_iters = -1, paths = 10000;
    std::uint64_t seed = 1;

    auto add_common = [&](CLI::App* c, bool needs_out_dir) {
        c->add_option("--quotes", quotes_path, "quote sheet CSV")->required();
        c->add_option("--config", cfg_path, "JSON config (model/grid/optimizer/smoothing)");
        c->add_option("--grid", cli_grid, "grid override: NX,NT or NX,NY,NT")->delimiter(',');
        if (needs_out_dir)
            c->add_option("--out", out_dir, "output directory")->required();
    };

    struct Cal {
        const char* name;
        const char* help;
        Which which;
    };
    const Cal cals[] = {
        {"calibrate-lv", "fit a one-factor diffusion to vanilla quotes", Which::Lv},
        {"calibrate-lsv", "fit the spot diffusion entry on a two-factor variance model",
         Which::Lsv},
        {"calibrate-joint", "fit spot and variance-index quotes together", Which::Joint},
        {"calibrate-barrier", "fit vanilla and barrier quotes with a split value function",
         Which::Barrier},
    };
    for (const auto& c : cals) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, true);
        sub->add_option("--tol", tol, "per-constraint residual tolerance");
        sub->add_option("--max-iter", max_iter, "ascent iteration cap");
        if (c.which == Which::Lv)
            sub->add_option("--ref-iters", ref_iters,
                            "reference smoothing passes (>= 2 enables smoothing)");
        Which w = c.which;
        sub->callback([&, w]() {
            std::exit(run_calibrate(w, quotes_path, cfg_path, out_dir, tol, max_iter,
                                    ref_iters, cli_grid));
        });
    }

    CLI::App* price = app.add_subcommand("price", "reprice a quote sheet under a saved surface");
    add_common(price, false);
    price->add_option("--surface", surface, "surface CSV from a calibration run")->required();
    price->add_option("--surface-hit", surface_hit, "hit-field surface (barrier runs)");
    price->add_option("--out", out_path, "write the price table here instead of stdout");
    price->callback([&]() {
        std::exit(run_price(quotes_path, cfg_path, surface, surface_hit, out_path, cli_grid));
    });

    CLI::App* sim = app.add_subcommand("simulate", "sample paths under a saved surface");
    add_common(sim, false);
    sim->add_option("--surface", surface, "surface CSV from a calibration run")->required();
    sim->add_option("--surface-hit", surface_hit, "hit-field surface (barrier runs)");
    sim->add_option("--paths", paths, "number of paths");
    sim->add_option("--seed", seed, "random seed");
    sim->add_option("--out", out_path, "terminal state CSV")->required();
    sim->callback([&]() {
        std::exit(run_simulate(quotes_path, cfg_path, surface, surface_hit, out_path, paths,
                               seed, cli_grid));
    });

    CLI::App* chk = app.add_subcommand(
        "check-gradient", "compare the dual gradient against central differences");
    add_common(chk, false);
    chk->add_option("--step", h, "finite difference spacing");
    chk->add_option("--gap-tol", gap_tol, "acceptable worst relative gap");
    std::string variant = "local_vol";
    chk->add_option("--model", variant,
                    "local_vol | local_stochastic | joint | barrier (default from quotes)");
    chk->callback([&]() {
        Which w = Which::Lv;
        if (variant == "local_stochastic") w = Which::Lsv;
        else if (variant == "joint") w = Which::Joint;
        else if (variant == "barrier") w = Which::Barrier;
        else if (variant != "local_vol")
            throw CLI::ValidationError("--model", "unknown model name");
        std::exit(run_check_gradient(w, quotes_path, cfg_path, h, gap_tol, cli_grid));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
