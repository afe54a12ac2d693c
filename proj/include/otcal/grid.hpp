#pragma once

#include <array>
#include <functional>
#include <map>
#include <vector>

namespace otcal {

// Requested domain for a tensor-product grid, 1 or 2 space dimensions.
// Bounds are adjusted at build time by less than one cell so that x0 lands
// exactly on a node. When floor_second is set the second dimension's lower
// bound may only move up (variance floors must not go negative).
struct DomainSpec {
    int dim = 1;
    std::array<double, 2> x_min{0.0, 0.0};
    std::array<double, 2> x_max{0.0, 0.0};
    std::array<int, 2> n_nodes{0, 1};
    std::array<double, 2> x0{0.0, 0.0};
    bool floor_second = false;
    int n_time = 100;
};

// One backward-march interval [t_left, t_right]. Intervals whose right
// endpoint carries constraint data (a maturity or the horizon) are split
// into two damped half-steps; those carry rannacher = true.
struct SubStep {
    double t_left = 0.0;
    double t_right = 0.0;
    bool rannacher = false;
};

// Per-face boundary handling. ZeroSecondDerivative eliminates the ghost node
// by linear extrapolation: the diffusion row vanishes and the drift becomes a
// one-sided inward difference. Dirichlet pins the face row to a fixed value.
struct BoundaryPolicy {
    enum class Kind { ZeroSecondDerivative, Dirichlet };
    // [dimension][side]; side 0 = lower face, side 1 = upper face.
    std::array<std::array<Kind, 2>, 2> kind{{{Kind::ZeroSecondDerivative, Kind::ZeroSecondDerivative},
                                             {Kind::ZeroSecondDerivative, Kind::ZeroSecondDerivative}}};
    std::array<std::array<double, 2>, 2> value{{{0.0, 0.0}, {0.0, 0.0}}};
};

// Immutable after construction. Nodes are uniform per dimension,
// x(d,i) = x_min[d] + i*dx[d]. Grid functions are flat vectors indexed
// idx(i,j) = i + n[0]*j.
class SpaceTimeGrid {
public:
    int dim = 1;
    std::array<double, 2> x_min{0.0, 0.0};
    std::array<double, 2> dx{0.0, 0.0};
    std::array<int, 2> n{0, 1};
    std::array<double, 2> x0{0.0, 0.0};
    std::array<int, 2> x0_index{0, 0};

    std::vector<double> times;    // ascending, times.front() == 0, times.back() == T
    std::vector<SubStep> schedule; // ascending; solvers march it in reverse

    // maturity value -> index into times
    std::map<double, int> maturity_time;
    // maturity value -> index of the substep whose t_right equals it
    // (where a backward pricing march for that maturity begins)
    std::map<double, int> maturity_substep;

    int node_count() const { return n[0] * n[1]; }
    double x(int d, int i) const { return x_min[d] + i * dx[d]; }
    int idx(int i, int j = 0) const { return i + n[0] * j; }
    double horizon() const { return times.back(); }
    int x0_node() const { return idx(x0_index[0], x0_index[1]); }
    bool is_maturity(double t) const { return maturity_time.count(t) != 0; }
};

// Builds the grid: shifts bounds so x0 is a node, lays down n_time uniform
// base intervals, moves the nearest interior grid time onto each maturity
// (never by more than one base step), and derives the substep schedule with
// damped half-steps below every maturity and below the horizon.
// Throws std::invalid_argument on malformed input (counts < 3, x0 outside
// bounds, maturities outside (0, T], more maturities than interior times).
SpaceTimeGrid build_grid(const DomainSpec& spec, std::vector<double> maturities, double T);

// Multilinear interpolation of a grid function; exact nodal fetch when the
// query sits on a node (within 1e-12 relative). Throws std::invalid_argument
// outside the domain.
double value_at(const SpaceTimeGrid& g, const std::vector<double>& values,
                std::array<double, 2> point);

// Thomas algorithm for a tridiagonal system. lower[0] and upper[n-1] are
// ignored. Throws SingularSystemError on a zero pivot. No pivoting: intended
// for the diagonally dominant systems produced by implicit time steps.
std::vector<double> solve_banded(const std::vector<double>& lower,
                                 const std::vector<double>& diag,
                                 const std::vector<double>& upper,
                                 const std::vector<double>& rhs);

// Runs fn(i) for i in [0, count) on up to OTCALIB_THREADS threads (default:
// hardware concurrency). Deterministic provided fn(i) writes only to slot i.
void parallel_for(int count, const std::function<void(int)>& fn);

} // namespace otcal
