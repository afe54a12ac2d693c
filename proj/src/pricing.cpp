#include "otcal/pricing.hpp"

#include "stepper.hpp"

#include <stdexcept>

namespace otcal {

namespace {

int start_substep(const CalibrationProblem& p, double maturity) {
    auto it = p.grid.maturity_substep.find(maturity);
    if (it == p.grid.maturity_substep.end())
        throw std::invalid_argument("price_payoff: maturity is not a constraint-bearing grid time");
    return it->second;
}

void check_payoff(const CalibrationProblem& p, const std::vector<double>& payoff) {
    if (static_cast<int>(payoff.size()) != p.grid.node_count())
        throw std::invalid_argument("price_payoff: payoff size mismatch");
}

} // namespace

double price_payoff(const CalibrationProblem& p, const ControlField& controls,
                    const std::vector<double>& payoff, double maturity) {
    check_payoff(p, payoff);
    if (controls.b11.size() != p.grid.schedule.size())
        throw std::invalid_argument("price_payoff: control field does not match the schedule");
    const int k0 = start_substep(p, maturity);
    std::vector<double> v = payoff;
    CoefSlice coef;
    for (int k = k0; k >= 0; --k) {
        control_coefficients(p, k, controls, coef);
        const double dt = p.grid.schedule[k].t_right - p.grid.schedule[k].t_left;
        v = detail::backward_linear_step(p, k, coef, v, dt, nullptr, 0, std::nullopt);
    }
    return value_at(p.grid, v, p.grid.x0);
}

double price_payoff_barrier(const CalibrationProblem& p,
                            const ControlField& controls_alive,
                            const ControlField& controls_hit,
                            const std::vector<double>& payoff, double maturity,
                            Regime regime) {
    check_payoff(p, payoff);
    if (!p.barrier) throw std::invalid_argument("price_payoff_barrier: no barrier");
    const bool coupled = !p.barrier->inert;
    const int ib = coupled ? p.barrier->node : 0;
    const int k0 = start_substep(p, maturity);

    const std::vector<double> zeros(p.grid.node_count(), 0.0);
    std::vector<double> v1 = (regime != Regime::AliveOnly) ? payoff : zeros;
    std::vector<double> v0 = (regime != Regime::HitOnly) ? payoff : zeros;
    for (int i = 0; i < ib; ++i) v0[i] = v1[i];

    CoefSlice c1, c0;
    for (int k = k0; k >= 0; --k) {
        const double dt = p.grid.schedule[k].t_right - p.grid.schedule[k].t_left;
        control_coefficients(p, k, controls_hit, c1);
        v1 = detail::backward_linear_step(p, k, c1, v1, dt, nullptr, 0, std::nullopt);
        const std::optional<double> pin =
            coupled ? std::optional<double>(v1[ib]) : std::nullopt;
        control_coefficients(p, k, controls_alive, c0);
        v0 = detail::backward_linear_step(p, k, c0, v0, dt, nullptr, ib, pin);
        for (int i = 0; i < ib; ++i) v0[i] = v1[i];
    }
    return value_at(p.grid, v0, p.grid.x0);
}

std::vector<double> model_prices(const CalibrationProblem& p, const ControlField& controls) {
    std::vector<double> out(p.constraints.size(), 0.0);
    parallel_for(static_cast<int>(p.constraints.size()), [&](int i) {
        const auto& cs = p.constraints[i];
        out[i] = price_payoff(p, controls, cs.payoff, cs.maturity);
    });
    return out;
}

std::vector<double> model_prices_barrier(const CalibrationProblem& p,
                                         const ControlField& controls_alive,
                                         const ControlField& controls_hit) {
    std::vector<double> out(p.constraints.size(), 0.0);
    parallel_for(static_cast<int>(p.constraints.size()), [&](int i) {
        const auto& cs = p.constraints[i];
        out[i] = price_payoff_barrier(p, controls_alive, controls_hit, cs.payoff,
                                      cs.maturity, cs.regime);
    });
    return out;
}

} // namespace otcal
