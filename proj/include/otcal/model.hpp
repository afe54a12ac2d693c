#pragma once

#include "otcal/cost.hpp"
#include "otcal/grid.hpp"
#include "otcal/market_io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace otcal {

enum class Variant { LocalVol, LocalStochastic, Joint };

// Parameters of the time-dependent matrix anchor used by the joint problem's
// quadratic cost.
struct JointRefParams {
    double kappa = 0.0;
    double theta = 0.0;
    double omega = 0.0;
    double eta = 0.0;
};

// Variant wiring plus everything the per-node Hamiltonian needs.
// ref_var is the local-vol reference variance sampled per [substep][node]
// (constant surfaces are stored expanded; the reference-smoothing loop
// replaces it wholesale).
struct CostSpec {
    Variant variant = Variant::LocalVol;
    PowerCostParams power;
    std::vector<std::vector<double>> ref_var; // LocalVol only
    HestonParams heston;                      // LocalStochastic only
    JointRefParams joint_ref;                 // Joint only
};

// Which regime's value function a constraint jumps in a split barrier solve.
// Vanilla constraints jump both; non-barrier problems use Vanilla throughout.
enum class Regime { Vanilla, AliveOnly, HitOnly };

struct ConstraintSpec {
    MarketQuote quote;          // provenance for reporting
    double maturity = 0.0;      // snapped; exactly a grid time
    double target = 0.0;
    std::vector<double> payoff; // nodal terminal data
    Regime regime = Regime::Vanilla;

    std::string label() const { return quote.label(); }
};

// Lower barrier split. node is the grid row the level snapped to; inert
// marks a level at/below the lowest node (the split degenerates to the
// unsplit problem: down-and-out == vanilla, down-and-in == worthless).
struct BarrierDescriptor {
    double level = 0.0;
    int node = 0;
    bool inert = false;
};

struct CalibrationProblem {
    SpaceTimeGrid grid;
    BoundaryPolicy boundary;
    CostSpec cost;
    std::vector<ConstraintSpec> constraints;
    std::optional<BarrierDescriptor> barrier;

    std::vector<double> targets() const {
        std::vector<double> c;
        c.reserve(constraints.size());
        for (const auto& k : constraints) c.push_back(k.target);
        return c;
    }
};

// Markov controls frozen per schedule substep. b12/b22 are populated for the
// Joint variant only; the other variants derive the remaining coefficients
// from state and parameters.
struct ControlField {
    Variant variant = Variant::LocalVol;
    std::vector<std::vector<double>> b11;
    std::vector<std::vector<double>> b12;
    std::vector<std::vector<double>> b22;

    bool empty() const { return b11.empty(); }
};

// Full drift/diffusion arrays for one substep, the single source of truth
// shared by the nonlinear solver and the linear pricing engine.
struct CoefSlice {
    std::vector<double> a1, b11;
    std::vector<double> a2, b12, b22; // dim == 2 only
};

void control_coefficients(const CalibrationProblem& p, int substep,
                          const std::vector<double>& b11,
                          const std::vector<double>* b12,
                          const std::vector<double>* b22,
                          CoefSlice& out);

void control_coefficients(const CalibrationProblem& p, int substep,
                          const ControlField& cf, CoefSlice& out);

// The zero-multiplier argmax controls (minimum of the running cost).
void reference_policy(const CalibrationProblem& p, int substep,
                      std::vector<double>& b11,
                      std::vector<double>* b12, std::vector<double>* b22);

// Matrix anchor of the joint cost at time t, variance state x2, horizon T.
// The mean-reversion window A is floored at 1e-8 and the implied level nu
// at 0.
Sym2 joint_anchor(double t, double x2, const JointRefParams& jr, double T);

// 100 * sqrt(2*x2 / window): quoted-index payout of the variance state.
double vix_payout(double x2, double window);

// 1 - exp(-x2^2): bounded pin on the terminal variance state.
double terminal_pin_payout(double x2);

} // namespace otcal
