#pragma once

#include "otcal/dual.hpp"

#include <string>
#include <vector>

namespace otcal {

struct ExportInputs {
    const CalibrationProblem& problem;
    const DualState& state;
    const EvalResult& fit;
    double tol = 0.0;               // optimizer tolerance the run used
    std::vector<std::string> notes; // builder warnings etc.
};

// Writes <dir>/report.json (multipliers, per-constraint fit table, iteration
// log, grid metadata) and <dir>/surface.csv (the calibrated diffusion
// surface; barrier problems add surface_hit.csv). Deterministic: no
// timestamps, round-trip-exact floats.
void export_results(const std::string& dir, const ExportInputs& in);

// Reads a surface written by export_results back into a control field for
// the given problem; validates shape and grid coordinates.
ControlField load_surface(const std::string& path, const CalibrationProblem& p);

} // namespace otcal
