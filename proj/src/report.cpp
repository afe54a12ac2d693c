#include "otcal/report.hpp"

#include "otcal/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace otcal {

namespace {

using nlohmann::json;

const char* variant_name(Variant v) {
    switch (v) {
    case Variant::LocalVol: return "local_vol";
    case Variant::LocalStochastic: return "local_stochastic";
    case Variant::Joint: return "joint";
    }
    return "?";
}

int surface_columns(Variant v, int dim) {
    // coordinates (t plus space) followed by the free diffusion entries
    return v == Variant::Joint ? dim + 4 : dim + 2;
}

void write_surface(const std::string& path, const CalibrationProblem& p,
                   const ControlField& cf) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    const bool joint = p.cost.variant == Variant::Joint;
    if (p.grid.dim == 1)
        os << "t,x1,beta11\n";
    else if (!joint)
        os << "t,x1,x2,beta11\n";
    else
        os << "t,x1,x2,beta11,beta12,beta22\n";
    for (std::size_t k = 0; k < p.grid.schedule.size(); ++k) {
        const std::string t = format_float(p.grid.schedule[k].t_left);
        for (int j = 0; j < p.grid.n[1]; ++j)
            for (int i = 0; i < p.grid.n[0]; ++i) {
                const int node = p.grid.idx(i, j);
                os << t << ',' << format_float(p.grid.x(0, i));
                if (p.grid.dim == 2) os << ',' << format_float(p.grid.x(1, j));
                os << ',' << format_float(cf.b11[k][node]);
                if (joint)
                    os << ',' << format_float(cf.b12[k][node]) << ','
                       << format_float(cf.b22[k][node]);
                os << '\n';
            }
    }
    if (!os) throw std::runtime_error("failed while writing " + path);
}

json constraint_table(const CalibrationProblem& p, const EvalResult& fit) {
    const double spot = std::exp(p.grid.x0[0]);
    json rows = json::array();
    for (std::size_t i = 0; i < p.constraints.size(); ++i) {
        const auto& cs = p.constraints[i];
        const auto& q = cs.quote;
        json row{{"label", cs.label()},
                 {"instrument", instrument_name(q.instrument)},
                 {"maturity", cs.maturity},
                 {"target", cs.target},
                 {"price", fit.prices[i]},
                 {"residual", fit.gradient[i]}};
        if (!std::isnan(q.strike)) row["strike"] = q.strike;
        if (!std::isnan(q.barrier)) row["barrier"] = q.barrier;
        if (instrument_is_vanilla(q.instrument)) {
            try {
                row["implied_vol_target"] =
                    implied_vol(spot, q.strike, cs.target, cs.maturity,
                                instrument_is_call(q.instrument));
                row["implied_vol_model"] =
                    implied_vol(spot, q.strike, fit.prices[i], cs.maturity,
                                instrument_is_call(q.instrument));
            } catch (const InversionError&) {
                // prices outside static bounds carry no implied vol
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

void export_results(const std::string& dir, const ExportInputs& in) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const CalibrationProblem& p = in.problem;

    json grid{{"dim", p.grid.dim},
              {"nodes", {p.grid.n[0], p.grid.n[1]}},
              {"x_min", {p.grid.x_min[0], p.grid.x_min[1]}},
              {"dx", {p.grid.dx[0], p.grid.dx[1]}},
              {"x0", {p.grid.x0[0], p.grid.x0[1]}},
              {"horizon", p.grid.horizon()},
              {"substeps", p.grid.schedule.size()}};

    json log = json::array();
    for (const auto& r : in.state.log)
        log.push_back({{"iter", r.iter},
                       {"objective", r.objective},
                       {"residual_inf", r.residual_inf},
                       {"evals", r.evals},
                       {"step", r.step}});

    json doc{{"model", variant_name(p.cost.variant)},
             {"converged", in.state.converged},
             {"iterations", in.state.iterations},
             {"objective_evaluations", in.state.objective_evals},
             {"dual_value", in.state.L},
             {"tolerance", in.tol},
             {"max_policy_iterations", in.fit.max_policy_iterations},
             {"lambda", in.state.lambda},
             {"constraints", constraint_table(p, in.fit)},
             {"iteration_log", std::move(log)},
             {"grid", std::move(grid)},
             {"notes", in.notes}};
    if (p.barrier)
        doc["barrier"] = {{"log_level", p.barrier->level},
                          {"level", std::exp(p.barrier->level)},
                          {"node", p.barrier->node},
                          {"inert", p.barrier->inert}};

    {
        std::ofstream os((fs::path(dir) / "report.json").string());
        if (!os) throw std::runtime_error("cannot write report.json under " + dir);
        os << doc.dump(2) << '\n';
    }
    write_surface((fs::path(dir) / "surface.csv").string(), p, in.fit.controls);
    if (p.barrier && !in.fit.controls_hit.empty())
        write_surface((fs::path(dir) / "surface_hit.csv").string(), p, in.fit.controls_hit);
}

ControlField load_surface(const std::string& path, const CalibrationProblem& p) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot read " + path);
    const bool joint = p.cost.variant == Variant::Joint;
    const int want = surface_columns(p.cost.variant, p.grid.dim);

    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument(path + ": empty file");
    {
        std::istringstream hs(line);
        std::string cell;
        int cols = 0;
        while (std::getline(hs, cell, ',')) ++cols;
        if (cols != want)
            throw std::invalid_argument(path + ": expected " + std::to_string(want) +
                                        " columns for this model");
    }

    const int S = static_cast<int>(p.grid.schedule.size());
    const int N = p.grid.node_count();
    ControlField cf;
    cf.variant = p.cost.variant;
    cf.b11.assign(S, std::vector<double>(N, 0.0));
    if (joint) {
        cf.b12.assign(S, std::vector<double>(N, 0.0));
        cf.b22.assign(S, std::vector<double>(N, 0.0));
    }

    long row = 0;
    std::vector<double> v(want);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        for (int c = 0; c < want; ++c) {
            if (!std::getline(ls, cell, ','))
                throw std::invalid_argument(path + ": short row " + std::to_string(row + 2));
            v[c] = std::stod(cell);
        }
        const long k = row / N, node = row % N;
        if (k >= S) throw std::invalid_argument(path + ": more rows than the grid holds");
        const int i = static_cast<int>(node) % p.grid.n[0];
        const int j = static_cast<int>(node) / p.grid.n[0];
        const double tol0 = 1e-9 * std::max(1.0, std::abs(p.grid.x(0, i)));
        if (std::abs(v[0] - p.grid.schedule[k].t_left) > 1e-9 ||
            std::abs(v[1] - p.grid.x(0, i)) > tol0 ||
            (p.grid.dim == 2 && std::abs(v[2] - p.grid.x(1, j)) >
                                    1e-9 * std::max(1.0, std::abs(p.grid.x(1, j)))))
            throw std::invalid_argument(path + ": row " + std::to_string(row + 2) +
                                        " does not match the problem grid");
        const int base = p.grid.dim;
        cf.b11[k][node] = v[base + 1];
        if (joint) {
            cf.b12[k][node] = v[base + 2];
            cf.b22[k][node] = v[base + 3];
        }
        ++row;
    }
    if (row != static_cast<long>(S) * N)
        throw std::invalid_argument(path + ": expected " + std::to_string((long)S * N) +
                                    " data rows, got " + std::to_string(row));
    return cf;
}

} // namespace otcal
