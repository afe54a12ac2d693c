#include "otcal/grid.hpp"
#include "otcal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace otcal {

namespace {

// Shift the lower bound by less than one cell so that x0 sits on a node.
// floor_anchor shifts only upward, preserving a requested lower floor.
void align_axis(double& lo, double hi, int count, double x0, bool floor_anchor,
                double& dx_out, int& node_out) {
    const double dx = (hi - lo) / (count - 1);
    double k_real = (x0 - lo) / dx;
    double k = floor_anchor ? std::floor(k_real) : std::round(k_real);
    k = std::clamp(k, 0.0, static_cast<double>(count - 1));
    lo = x0 - k * dx;
    dx_out = dx;
    node_out = static_cast<int>(k);
}

} // namespace

SpaceTimeGrid build_grid(const DomainSpec& spec, std::vector<double> maturities, double T) {
    if (spec.dim != 1 && spec.dim != 2)
        throw std::invalid_argument("build_grid: dim must be 1 or 2");
    if (!(T > 0.0))
        throw std::invalid_argument("build_grid: horizon must be positive");
    if (spec.n_time < 2)
        throw std::invalid_argument("build_grid: need at least 2 time steps");
    for (int d = 0; d < spec.dim; ++d) {
        if (spec.n_nodes[d] < 3)
            throw std::invalid_argument("build_grid: need at least 3 nodes per dimension");
        if (!(spec.x_min[d] < spec.x_max[d]))
            throw std::invalid_argument("build_grid: empty spatial extent");
        if (spec.x0[d] < spec.x_min[d] || spec.x0[d] > spec.x_max[d])
            throw std::invalid_argument("build_grid: x0 outside spatial bounds");
    }

    SpaceTimeGrid g;
    g.dim = spec.dim;
    g.n = spec.n_nodes;
    if (spec.dim == 1) g.n[1] = 1;
    g.x0 = spec.x0;
    for (int d = 0; d < spec.dim; ++d) {
        double lo = spec.x_min[d];
        align_axis(lo, spec.x_max[d], spec.n_nodes[d],
                   spec.x0[d], spec.floor_second && d == 1, g.dx[d], g.x0_index[d]);
        g.x_min[d] = lo;
    }

    std::sort(maturities.begin(), maturities.end());
    maturities.erase(std::unique(maturities.begin(), maturities.end()), maturities.end());
    for (double m : maturities)
        if (!(m > 0.0) || m > T)
            throw std::invalid_argument("build_grid: maturity outside (0, T]");
    if (static_cast<int>(maturities.size()) > spec.n_time)
        throw std::invalid_argument("build_grid: more maturities than time intervals");

    const int nt = spec.n_time;
    const double dt = T / nt;
    g.times.resize(nt + 1);
    for (int j = 0; j <= nt; ++j) g.times[j] = j * dt;
    g.times[nt] = T;

    // Move the nearest interior grid time onto each maturity. Maturities are
    // processed in ascending order; collisions push to the next free index so
    // the time array stays strictly increasing. Each move is at most one base
    // step.
    int prev_idx = 0;
    for (double m : maturities) {
        int j;
        if (m == T) {
            j = nt;
        } else {
            if (prev_idx + 1 > nt - 1)
                throw std::invalid_argument("build_grid: maturities too tightly packed");
            j = static_cast<int>(std::llround(m / dt));
            j = std::clamp(j, prev_idx + 1, nt - 1);
        }
        g.times[j] = m;
        g.maturity_time[m] = j;
        prev_idx = j;
    }
    for (int j = 0; j < nt; ++j)
        if (!(g.times[j] < g.times[j + 1]))
            throw std::invalid_argument("build_grid: time axis not strictly increasing after snapping");

    // Substep schedule. Intervals ending at constraint-bearing times are
    // executed as two damped half-steps so injected kinks are smoothed.
    std::set<double> marked(maturities.begin(), maturities.end());
    marked.insert(T);
    for (int j = 0; j < nt; ++j) {
        const double tl = g.times[j], tr = g.times[j + 1];
        if (marked.count(tr)) {
            const double mid = 0.5 * (tl + tr);
            g.schedule.push_back({tl, mid, true});
            g.schedule.push_back({mid, tr, true});
        } else {
            g.schedule.push_back({tl, tr, false});
        }
    }
    for (const auto& [m, jt] : g.maturity_time) {
        (void)jt;
        for (int k = 0; k < static_cast<int>(g.schedule.size()); ++k)
            if (g.schedule[k].t_right == m) g.maturity_substep[m] = k;
    }
    return g;
}

double value_at(const SpaceTimeGrid& g, const std::vector<double>& values,
                std::array<double, 2> point) {
    if (static_cast<int>(values.size()) != g.node_count())
        throw std::invalid_argument("value_at: size mismatch");
    std::array<int, 2> i0{0, 0};
    std::array<double, 2> w{0.0, 0.0};
    for (int d = 0; d < g.dim; ++d) {
        const double hi = g.x(d, g.n[d] - 1);
        const double tol = 1e-12 * (std::abs(point[d]) + g.dx[d]);
        if (point[d] < g.x_min[d] - tol || point[d] > hi + tol)
            throw std::invalid_argument("value_at: point outside domain");
        double s = (point[d] - g.x_min[d]) / g.dx[d];
        int k = static_cast<int>(std::floor(s));
        k = std::clamp(k, 0, g.n[d] - 2);
        double frac = s - k;
        // snap to the nearest node when the query is a node up to rounding
        if (std::abs(point[d] - g.x(d, k)) <= tol) frac = 0.0;
        else if (std::abs(point[d] - g.x(d, k + 1)) <= tol) frac = 1.0;
        frac = std::clamp(frac, 0.0, 1.0);
        i0[d] = k;
        w[d] = frac;
    }
    if (g.dim == 1) {
        const double a = values[g.idx(i0[0])], b = values[g.idx(i0[0] + 1)];
        return a + w[0] * (b - a);
    }
    const double v00 = values[g.idx(i0[0], i0[1])];
    const double v10 = values[g.idx(i0[0] + 1, i0[1])];
    const double v01 = values[g.idx(i0[0], i0[1] + 1)];
    const double v11 = values[g.idx(i0[0] + 1, i0[1] + 1)];
    const double a = v00 + w[0] * (v10 - v00);
    const double b = v01 + w[0] * (v11 - v01);
    return a + w[1] * (b - a);
}

std::vector<double> solve_banded(const std::vector<double>& lower,
                                 const std::vector<double>& diag,
                                 const std::vector<double>& upper,
                                 const std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n || n == 0)
        throw std::invalid_argument("solve_banded: inconsistent band sizes");
    std::vector<double> c(n), x(n);
    double piv = diag[0];
    if (piv == 0.0) throw SingularSystemError("solve_banded: zero pivot at row 0");
    c[0] = upper[0] / piv;
    x[0] = rhs[0] / piv;
    for (std::size_t i = 1; i < n; ++i) {
        piv = diag[i] - lower[i] * c[i - 1];
        if (piv == 0.0) {
            std::ostringstream os;
            os << "solve_banded: zero pivot at row " << i;
            throw SingularSystemError(os.str());
        }
        c[i] = upper[i] / piv;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / piv;
    }
    for (std::size_t i = n - 1; i-- > 0;)
        x[i] -= c[i] * x[i + 1];
    return x;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("OTCALIB_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) threads = std::min(threads, cap);
    }
    threads = std::max(1, std::min(threads, count));
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr first_error;
    std::mutex err_mtx;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (int i = t; i < count; i += threads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mtx);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace otcal
