#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "pohedge/model.hpp"
#include "pohedge/rng.hpp"
#include "pohedge/simulate.hpp"
#include "pohedge/structure.hpp"

namespace pohedge {

enum class FilterMode { FiniteState, Particle };

// Law of the signal given the price history. In FiniteState mode x holds
// the chain states; in Particle mode x holds particle positions.
struct FilterState {
    FilterMode mode = FilterMode::FiniteState;
    Measure measure = Measure::P;
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> w;

    std::size_t size() const { return w.size(); }
    double total() const;
    // Throws FilterStateError unless weights are >= 0 and sum to 1 (1e-10).
    void check_normalized() const;
    double expectation(const std::function<double(double)>& f) const;
    // Weight per chain state (particle clouds are histogrammed).
    std::vector<double> state_law(const ModelSpec& spec) const;
};

double filter_expectation(const FilterState& state, const ScalarField& f, double t, double s);

// One step of the observation: continuous return y over [t, t + dt] and
// the observed price jump size z (0 when no price jump is visible).
struct Observation {
    double t = 0.0;
    double s = 0.0;
    double dt = 0.0;
    double y = 0.0;
    double z = 0.0;
};

Observation observation_at(const PathSample& path, int n);

FilterState prior_filter(const ModelSpec& spec, Measure measure, double t0 = 0.0);

// Exact Bayes step for a chain signal: reweight by the Gaussian return
// likelihood and the probability of the observed jump outcome, apply the
// common signal jump, then propagate with trans = exp(Q dt). The measure
// tag of the input state selects the likelihoods (P or P*).
FilterState exact_filter_step(const ModelSpec& spec, const FilterState& state,
                              const Observation& obs, const Eigen::MatrixXd& trans);
FilterState exact_filter_step(const ModelSpec& spec, const FilterState& state,
                              const Observation& obs);
// Same step, P likelihoods (drift mu1 and intensities eta).
FilterState filter_under_P_step(const ModelSpec& spec, const FilterState& state,
                                const Observation& obs);

struct ParticleOptions {
    int n_particles = 1000;
    double ess_threshold = 0.5;
};

FilterState particle_prior(const ModelSpec& spec, Measure measure, int n, RngStream& rng,
                           double t0 = 0.0);
FilterState particle_filter_step(const ModelSpec& spec, const FilterState& state,
                                 const Observation& obs, RngStream& rng,
                                 const ParticleOptions& opt = {},
                                 const Eigen::MatrixXd* trans = nullptr);

double effective_sample_size(const std::vector<double>& w);

// pi(nu^{F,*}) on the pooled z-grid.
PooledMeasure nu_star_H(const ModelSpec& spec, const FilterState& state, double t, double s);

enum class FilterEngine { Exact, Particle };

struct FilterRunOptions {
    FilterEngine engine = FilterEngine::Exact;
    ParticleOptions particle;
    std::uint64_t seed = 0;
};

// Filter at every node; element n conditions on steps 0..n-1.
std::vector<FilterState> run_filter(const ModelSpec& spec, const PathSample& path, Measure measure,
                                    const FilterRunOptions& opt = {});

// Total-variation distance between two laws on the same support.
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace pohedge
