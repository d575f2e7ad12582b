#pragma once
// Small inline scenarios shared by the unit tests.
#include <string>

#include "pohedge/config.hpp"

namespace fixture {

struct Run {
    double T = 1.0;
    int n_steps = 16;
    int n_paths = 100;
    int s_points = 201;
    std::string claim = "type = \"call\"\nstrike = 100.0";
    std::string extra;
};

inline std::string toml(const std::string& model, const Run& r = {}) {
    return "[model]\n" + model + "\n[claim]\n" + r.claim + "\n[grids]\nT = " + std::to_string(r.T) +
           "\nn_steps = " + std::to_string(r.n_steps) + "\ns_points = " + std::to_string(r.s_points) +
           "\n[run]\nn_paths = " + std::to_string(r.n_paths) + "\nseed = 12345\n" + r.extra;
}

inline pohedge::ScenarioConfig config(const std::string& model, const Run& r = {}) {
    return pohedge::parse_config(toml(model, r), "fixture");
}

inline pohedge::ModelSpec spec(const std::string& model, const Run& r = {}) { return config(model, r).spec; }

// Black-Scholes: one signal state, constant vol.
inline const char* kBlackScholes = R"~(kind = "diffusion"
s0 = 100.0
mu1 = 0.05
sigma1 = 0.2
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
)~";

// Hidden two-state drift, no signal dynamics.
inline const char* kFrozenDrift = R"~(kind = "diffusion"
s0 = 1.0
mu1 = "0.2*x"
sigma1 = 0.2
[model.signal]
states = [0.0, 1.0]
generator = [[0.0, 0.0], [0.0, 0.0]]
prior = [0.5, 0.5]
)~";

// Hidden two-state drift with switching.
inline const char* kSwitchingDrift = R"~(kind = "diffusion"
s0 = 100.0
mu1 = "0.2*x"
sigma1 = 0.2
[model.signal]
states = [0.0, 1.0]
generator = [[-0.5, 0.5], [0.5, -0.5]]
prior = [0.5, 0.5]
)~";

// Pure jump with state-dependent marks.
inline const char* kTwoStateJump = R"~(kind = "pure_jump"
s0 = 100.0
[model.signal]
states = [0.0, 1.0]
generator = [[-0.3, 0.3], [0.3, -0.3]]
prior = [0.5, 0.5]
[model.marks]
eta = [0.6, 0.6, 0.3, 0.4]
K1 = ["0.05", "-0.04 - 0.02*x", "0.08*x", "0"]
K0 = ["0", "0", "0", "1 - 2*x"]
)~";

// Jump diffusion with a continuous OU signal.
inline const char* kOuJumpDiffusion = R"~(kind = "jump_diffusion"
s0 = 100.0
x0 = 0.0
mu0 = "2*(0 - x)"
sigma0 = 0.5
rho = 0.3
mu1 = "0.05 + 0.1*x"
sigma1 = 0.2
[model.marks]
eta = [1.0]
K1 = "-0.1"
K0 = "0"
)~";

}  // namespace fixture
