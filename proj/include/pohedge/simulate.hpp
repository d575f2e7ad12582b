#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pohedge/model.hpp"
#include "pohedge/rng.hpp"

namespace pohedge {

struct JumpEvent {
    int step;  // jump happens during step, lands on node step + 1
    int mark;
};

struct PathSample {
    TimeGrid grid;
    double t0 = 0.0;  // node n sits at t0 + grid.t(n)
    Measure measure = Measure::P;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t path_index = 0;

    std::vector<double> x;       // n_steps + 1
    std::vector<double> s;       // n_steps + 1
    std::vector<int> state;      // chain index per node, -1 for a continuous signal
    std::vector<double> dW0;     // n_steps
    std::vector<double> dW1;     // n_steps
    std::vector<double> obs_y;   // continuous return observation b dt + sigma1 dW1
    std::vector<double> obs_z;   // observed price jump size (0 when no visible jump)
    std::vector<int> jump_mark;  // mark index per step, -1 when no jump
    std::vector<JumpEvent> jump_events;

    double time(int n) const { return t0 + grid.t(n); }
    int n_steps() const { return grid.n_steps; }
};

struct SimulationOptions {
    bool log_euler = true;    // S^c = s exp(y - sigma1^2 dt / 2); else s (1 + y)
    bool zero_noise = false;  // force dW0 = dW1 = 0 (jumps still sampled)
};

// Where a path starts. Without x the initial signal is drawn from the
// prior (chain) or N(x0, x0_sd^2).
struct SimulationStart {
    double t0 = 0.0;
    std::optional<double> x;
    std::optional<double> s;
};

PathSample simulate_path(const ModelSpec& spec, const TimeGrid& grid, Measure measure,
                         std::uint64_t seed, std::uint64_t path_index,
                         const SimulationOptions& opt = {}, const SimulationStart& start = {});

std::vector<PathSample> simulate_paths(const ModelSpec& spec, const TimeGrid& grid, Measure measure,
                                       int n_paths, std::uint64_t seed,
                                       const SimulationOptions& opt = {},
                                       const SimulationStart& start = {}, int workers = 0);

// Recomputes obs_y, obs_z, state and jump_events from the stored x, s,
// dW1 and jump marks (paths read back from a dump).
void rebuild_observations(const ModelSpec& spec, PathSample& path);

// dI = dW1 + (mu1(t, X, S) - filter_drift) / sigma1 dt per step.
std::vector<double> innovation_increments(const ModelSpec& spec, const PathSample& path,
                                          const std::vector<double>& filter_drift);

}  // namespace pohedge
