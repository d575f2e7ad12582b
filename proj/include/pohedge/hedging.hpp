#pragma once

#include <string>
#include <vector>

#include "pohedge/filtering.hpp"
#include "pohedge/model.hpp"
#include "pohedge/pricing.hpp"
#include "pohedge/simulate.hpp"
#include "pohedge/stats.hpp"
#include "pohedge/structure.hpp"

namespace pohedge {

// Ingredients of the hedge ratio at one node. Jump terms live on pooled
// atoms: nu_star / w_star for the P*-belief, nu_H / w_H for the P-belief.
struct StrategyTerms {
    double s = 0.0;
    double sigma1 = 0.0;  // 0 for pure jump
    double h = 0.0;       // rho pi(sigma0 g_x) + s sigma1 pi(g_s)
    PooledMeasure nu_star;
    std::vector<double> w_star;
    PooledMeasure nu_H;
    std::vector<double> w_H;
    double alpha_H = 0.0;
};

struct NodeStrategy {
    double beta_tilde = 0.0;
    double phi = 0.0;
    double beta = 0.0;
    bool degenerate = false;  // both quadratic denominators vanish
};

// beta~ = (s sigma1 h + sum z w nu*) / (s^2 sigma1^2 + sum z^2 nu*),
// phi = alpha_H sum z^2 (w - beta~ z) nu_H / (s^2 sigma1^2 + sum z^2 nu_H).
NodeStrategy strategy_from_terms(const StrategyTerms& terms);

// Terms at node n from the two filters (left limits) and the surface; g_s
// is taken at t_n, the post-jump values at t_{n+1}.
StrategyTerms strategy_terms(const ModelSpec& spec, const ValueSurface& surface, int n, double s,
                             const FilterState& filter_star, const FilterState& filter_P);

NodeStrategy strategy_at(const ModelSpec& spec, const ValueSurface& surface, int n, double s,
                         const FilterState& filter_star, const FilterState& filter_P);

// Dirac belief at x (chain state or particle).
FilterState dirac_filter(const ModelSpec& spec, Measure m, double t, double x);

// Full-information hedge along a path: the same formulas with the true
// signal value in place of both filters.
std::vector<double> beta_F_path(const ModelSpec& spec, const ValueSurface& surface, const PathSample& path);

struct StrategyPath {
    std::vector<double> t, s;                                  // nodes
    std::vector<double> alpha_F, alpha_H;                      // steps
    std::vector<double> beta_F, beta_tilde_H, phi_H, beta_H;   // steps
    std::vector<double> eta_star, V, C;                        // nodes
    std::vector<double> A_increment;                           // steps
    int degenerate_nodes = 0;
};

StrategyPath run_hedge(const ModelSpec& spec, const ClaimSpec& claim, const ValueSurface& surface,
                       const PathSample& path, const std::vector<FilterState>& filters_star,
                       const std::vector<FilterState>& filters_P, const StructureCoefficients& coeffs);

// Per-path inputs of the diagnostics.
struct HedgeSample {
    const PathSample* path = nullptr;
    const StrategyPath* strategy = nullptr;
    const std::vector<FilterState>* filters_P = nullptr;
    const StructureCoefficients* coeffs = nullptr;
    const MeasurePath* density = nullptr;
};

struct TestStatistic {
    std::string name;
    double value = 0.0;
    double se = 0.0;
    double t = 0.0;
    bool pass = true;
};

struct HedgeReport {
    double U0 = 0.0;
    std::size_t n_paths = 0;
    MeanSe cost_change;      // C_T - C_0
    double cost_variance = 0.0;
    OlsResult cost_regression;
    bool cost_martingale_pass = true;
    std::vector<TestStatistic> orthogonality;
    bool orthogonality_pass = true;
    std::vector<TestStatistic> projection;  // empty for jump models
    bool projection_pass = true;
    double projection_abs_gap = 0.0;
    double var_beta_H = 0.0, var_beta_F = 0.0, var_zero = 0.0;
    TestStatistic variance_reduction;  // Var(zero hedge) - Var(beta_H) > 0
    double mmm_excluded_fraction = 0.0;
    int alpha_H_zero_pa = 0;
    int degenerate_nodes = 0;
};

// Thresholds of the pass flags: |t| <= t_max for regression and
// orthogonality; projection uses max(t_max SE, floor).
struct DiagnosticsOptions {
    double t_max = 4.0;
    double projection_floor = 1e-12;
    std::size_t min_paths = 100;
};

HedgeReport diagnostics(const ModelSpec& spec, const std::vector<HedgeSample>& samples,
                        const DiagnosticsOptions& opt = {});

// Test functions psi_n: 1, S_n / s0 and the P-filter coordinates (all but
// the last chain weight, or the particle mean for a continuous signal).
std::vector<std::string> test_function_names(const ModelSpec& spec);
std::vector<double> test_functions(const ModelSpec& spec, double s, const FilterState& filter_P);

}  // namespace pohedge
