#pragma once

#include "otcal/dual.hpp"
#include "otcal/market_io.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace otcal {

// Grid sizing shared by the problem builders. ny applies to the
// two-dimensional variants only. width is the log-price half-width in units
// of the reference standard deviation over the horizon.
struct GridRequest {
    int nx = 201;
    int ny = 61;
    int nt = 200;
    double width = 5.0;
};

struct PowerParams {
    double a = 1.0;
    double p = 2.0;
    double q = 2.0;
};

struct LvSetup {
    double spot = 1.0;
    double sigma_ref = 0.2; // reference volatility; zero running cost at sigma_ref^2
    PowerParams cost;
};

// One-dimensional problem in x = log(price), driftless up to the -b/2
// Ito correction. Quotes must be European puts/calls on the spot.
CalibrationProblem build_lv_problem(const std::vector<MarketQuote>& quotes,
                                    const LvSetup& setup, const GridRequest& grid,
                                    std::vector<std::string>* notes = nullptr);

struct LsvSetup {
    double spot = 1.0;
    HestonParams heston; // v0 is the initial variance state
    PowerParams cost;
    double var_max = 0.0; // upper variance bound; 0 = 10 * max(v0, theta)
};

// Two-dimensional problem in (log price, instantaneous variance). Only the
// first diffusion entry is free; the variance dynamics stay at the reference.
CalibrationProblem build_lsv_problem(const std::vector<MarketQuote>& quotes,
                                     const LsvSetup& setup, const GridRequest& grid,
                                     std::vector<std::string>* notes = nullptr);

struct JointSetup {
    double spot = 1.0;
    double x2_0 = 0.0; // half the expected integrated variance over [0, T]
    JointRefParams ref;
    double vix_window = 30.0 / 365.0;
    double x2_max = 0.0; // upper bound of the second state; 0 = 4 * x2_0
};

// Two-dimensional problem in (log price, half remaining integrated
// variance). Quotes must hold the index options/future at one maturity t0
// plus spot options maturing by T = t0 + vix_window; the builder appends the
// terminal constraint pinning the second state at zero. Constraint order:
// spot options, index options, index future, terminal pin.
CalibrationProblem build_joint_problem(const std::vector<MarketQuote>& quotes,
                                       const JointSetup& setup, const GridRequest& grid,
                                       std::vector<std::string>* notes = nullptr);

// As build_lv_problem, plus a lower barrier read from the quotes' barrier
// column (all barrier quotes must agree). A barrier below the domain is
// inert: knock-outs coincide with vanillas and knock-ins are worthless.
// A barrier at or above the spot is rejected.
CalibrationProblem build_barrier_problem(const std::vector<MarketQuote>& quotes,
                                         const LvSetup& setup, const GridRequest& grid,
                                         std::vector<std::string>* notes = nullptr);

struct ReferenceIterationOptions {
    int iterations = 8;
    int x_window = 9; // moving-average width in nodes (odd)
    int t_window = 5; // moving-average width in substeps (odd)
    MaximizeOptions optimizer;
};

struct ReferenceIterationResult {
    CalibrationProblem problem; // final reference surface in cost.ref_var
    CalibrationOutcome outcome; // calibration against that reference
    // Total variation of the model smile along a dense strike ladder, summed
    // over constraint maturities, after each pass.
    std::vector<double> skew_tv;
    std::vector<double> residual_inf; // scaled residual norm after each pass
};

// Fixed-point smoothing of the reference surface: calibrate, replace the
// reference variance by the moving-average-smoothed calibrated surface,
// recalibrate warm-started. Local-vol problems only.
ReferenceIterationResult reference_iteration(CalibrationProblem problem,
                                             const ReferenceIterationOptions& opts);

struct SimulatedPaths {
    std::vector<double> times; // schedule left edges plus the horizon
    std::vector<std::array<double, 2>> terminal; // one state per path
    std::vector<std::uint8_t> hit; // barrier runs: 1 once the path crossed
    // First min(32, n_paths) paths sampled at every schedule time.
    std::vector<std::vector<std::array<double, 2>>> samples;
};

// Euler scheme on the schedule under nearest-node frozen controls; second
// state clamped to its domain. Barrier problems switch a path from the alive
// to the hit control field when it first closes at or below the barrier
// (pass controls_hit; otherwise nullptr). Path i is driven by substream i of
// the seed, so results do not depend on thread count.
SimulatedPaths simulate_paths(const CalibrationProblem& p, const ControlField& controls,
                              const ControlField* controls_hit, int n_paths,
                              std::uint64_t seed);

} // namespace otcal
