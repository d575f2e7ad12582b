#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pohedge/filtering.hpp"
#include "pohedge/model.hpp"

namespace pohedge {

struct PricingGrids {
    int s_points = 401;     // odd, so s0 is a node
    double s_width = 0.0;   // half-width in log s; 0 picks max(0.5, 6 sigma_eff sqrt(T))
    int substeps = 4;       // PDE time steps per hedging step
    int x_points = 61;      // continuous signal only
    std::optional<double> x_min, x_max;
    int rannacher_steps = 2;
};

// g(t_n, x, s) at every hedging node. Sheets are chain states, or the
// nodes of a uniform x-grid for a continuous signal. s nodes are uniform
// in log s; values between nodes are linear in s (and in x).
class ValueSurface {
public:
    TimeGrid grid;
    double t0 = 0.0;
    bool chain = true;
    std::vector<double> x;      // sheet coordinates
    std::vector<double> log_s;
    std::vector<double> s;
    ClaimSpec claim;
    int monotonicity_violations = 0;
    int fixed_point_iterations_max = 0;

    std::size_t n_nodes() const { return static_cast<std::size_t>(grid.n_steps) + 1; }
    std::size_t n_sheets() const { return x.size(); }
    std::size_t n_s() const { return s.size(); }

    double& at(std::size_t n, std::size_t k, std::size_t m) { return g_[(n * n_sheets() + k) * n_s() + m]; }
    double at(std::size_t n, std::size_t k, std::size_t m) const {
        return g_[(n * n_sheets() + k) * n_s() + m];
    }
    void allocate() { g_.assign(n_nodes() * n_sheets() * n_s(), 0.0); }

    bool in_range(double s_val) const { return s_val >= s.front() && s_val <= s.back(); }
    // Node index for time t (within 1e-9 dt), RangeError otherwise.
    int node_of(double t) const;

    // Linear extrapolation outside the s-grid is allowed here; callers that
    // need the range contract check in_range first.
    double value(int n, double x_val, double s_val) const;
    double ds(int n, double x_val, double s_val) const;
    double dx(int n, double x_val, double s_val) const;  // 0 for a chain signal

private:
    struct Bracket {
        std::size_t lo;
        double w;  // weight on lo + 1
    };
    Bracket s_bracket(double s_val) const;
    Bracket x_bracket(double x_val) const;
    double sheet_value(int n, std::size_t k, const Bracket& b) const;
    double sheet_ds(int n, std::size_t k, const Bracket& b) const;
    double node_ds(int n, std::size_t k, std::size_t m) const;

    std::vector<double> g_;
};

ValueSurface solve_value_surface(const ModelSpec& spec, const ClaimSpec& claim, const TimeGrid& grid,
                                 const PricingGrids& grids = {});

struct McEstimate {
    double estimate = 0.0;
    double se = 0.0;
    int n = 0;
};

// Mean of H(T, S_T) over P* paths from (t, x, s); without x the signal
// starts from its prior. steps defaults to the grid's remaining steps.
McEstimate feynman_kac_mc(const ModelSpec& spec, const ClaimSpec& claim, double horizon, int n_steps,
                          double t, std::optional<double> x, double s, int n_paths, std::uint64_t seed,
                          int workers = 0);

// V = pi_t(g); at the terminal node this is H(T, s) for every filter.
double value_process(const ValueSurface& surface, const FilterState& filter, double t, double s);

}  // namespace pohedge
