#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pohedge/errors.hpp"
#include "pohedge/filtering.hpp"
#include "pohedge/pricing.hpp"

using namespace pohedge;

namespace {

ValueSurface surface_for(const char* model, const ClaimSpec& claim, int n_steps = 16, int s_points = 201) {
    fixture::Run r;
    r.n_steps = n_steps;
    r.s_points = s_points;
    auto cfg = fixture::config(model, r);
    return solve_value_surface(cfg.spec, claim, cfg.grid, cfg.pricing);
}

}  // namespace

TEST_CASE("constant claims are harmonic") {
    for (const char* m : {fixture::kBlackScholes, fixture::kSwitchingDrift, fixture::kTwoStateJump,
                          fixture::kOuJumpDiffusion}) {
        auto g = surface_for(m, ClaimSpec::constant(2.5), 8, 101);
        for (std::size_t n = 0; n < g.n_nodes(); ++n)
            for (std::size_t k = 0; k < g.n_sheets(); ++k)
                for (std::size_t i = 0; i < g.n_s(); ++i) REQUIRE(std::fabs(g.at(n, k, i) - 2.5) < 1e-12);
    }
}

TEST_CASE("the identity claim prices at spot") {
    for (const char* m : {fixture::kBlackScholes, fixture::kSwitchingDrift, fixture::kTwoStateJump}) {
        auto g = surface_for(m, ClaimSpec::identity(), 16, 201);
        for (double s : {80.0, 100.0, 125.0}) {
            for (double x : g.x) {
                CHECK(g.value(0, x, s) == doctest::Approx(s).epsilon(1e-6));
                CHECK(g.ds(0, x, s) == doctest::Approx(1.0).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("Black-Scholes value and delta") {
    auto g = surface_for(fixture::kBlackScholes, ClaimSpec::call(100.0), 64, 401);
    double ref = oracle::bs_call(100.0, 100.0, 0.2, 1.0);
    CHECK(ref == doctest::Approx(7.9656).epsilon(1e-5));
    CHECK(std::fabs(g.value(0, 0.0, 100.0) - ref) < 5e-3);
    CHECK(std::fabs(g.ds(0, 0.0, 100.0) - oracle::bs_delta(100.0, 100.0, 0.2, 1.0)) < 5e-3);
    for (double s : {85.0, 115.0}) CHECK(std::fabs(g.value(0, 0.0, s) - oracle::bs_call(s, 100.0, 0.2, 1.0)) < 5e-3);
    CHECK(g.monotonicity_violations == 0);
}

TEST_CASE("terminal node is the payoff for every filter") {
    auto cfg = fixture::config(fixture::kSwitchingDrift);
    auto g = solve_value_surface(cfg.spec, ClaimSpec::put(100.0), cfg.grid, cfg.pricing);
    auto f = prior_filter(cfg.spec, Measure::Pstar, 0.0);
    for (auto w : {std::vector<double>{1.0, 0.0}, std::vector<double>{0.3, 0.7}}) {
        f.w = w;
        f.t = 1.0;
        for (double s : {70.0, 99.0, 100.0, 131.0}) CHECK(value_process(g, f, 1.0, s) == doctest::Approx(std::max(100.0 - s, 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("x-independent surfaces ignore the filter") {
    auto cfg = fixture::config(R"~(kind = "diffusion"
s0 = 100.0
mu1 = "0.3*x"
sigma1 = 0.2
[model.signal]
states = [0.0, 1.0]
generator = [[-0.5, 0.5], [0.5, -0.5]]
prior = [0.5, 0.5]
)~");
    auto g = solve_value_surface(cfg.spec, ClaimSpec::call(100.0), cfg.grid, cfg.pricing);
    auto f = prior_filter(cfg.spec, Measure::Pstar, 0.0);
    for (auto w : {std::vector<double>{1.0, 0.0}, std::vector<double>{0.2, 0.8}}) {
        f.w = w;
        CHECK(value_process(g, f, 0.0, 104.0) == doctest::Approx(g.value(0, 0.0, 104.0)).epsilon(1e-12));
    }
}

TEST_CASE("off-grid times are rejected") {
    auto g = surface_for(fixture::kBlackScholes, ClaimSpec::call(100.0), 4, 51);
    CHECK(g.node_of(0.25) == 1);
    CHECK_THROWS_AS(g.node_of(0.3), RangeError);
}

TEST_CASE("Feynman-Kac Monte Carlo") {
    auto sp = fixture::spec(fixture::kBlackScholes);
    auto c = feynman_kac_mc(sp, ClaimSpec::constant(3.0), 1.0, 8, 0.0, 0.0, 100.0, 1000, 5);
    CHECK(c.estimate == 3.0);
    CHECK(c.se == 0.0);

    auto id = feynman_kac_mc(sp, ClaimSpec::identity(), 1.0, 8, 0.0, 0.0, 100.0, 20000, 5);
    CHECK(std::fabs(id.estimate - 100.0) < 4 * id.se);

    // log-Euler is exact for constant volatility, so one step suffices
    auto bs = feynman_kac_mc(sp, ClaimSpec::call(100.0), 1.0, 1, 0.0, 0.0, 100.0, 1000000, 5);
    CHECK(std::fabs(bs.estimate - oracle::bs_call(100.0, 100.0, 0.2, 1.0)) < 4 * bs.se);
}

TEST_CASE("value at the prior matches Monte Carlo from a random start") {
    fixture::Run r;
    r.n_steps = 32;
    r.s_points = 401;
    auto cfg = fixture::config(fixture::kTwoStateJump, r);
    auto g = solve_value_surface(cfg.spec, ClaimSpec::call(100.0), cfg.grid, cfg.pricing);
    auto v = value_process(g, prior_filter(cfg.spec, Measure::Pstar), 0.0, 100.0);
    auto mc = feynman_kac_mc(cfg.spec, ClaimSpec::call(100.0), 1.0, 32, 0.0, std::nullopt, 100.0, 200000, 41);
    CHECK(std::fabs(v - mc.estimate) < 4 * mc.se);
}

TEST_CASE("call values are monotone in s on every sheet") {
    auto g = surface_for(fixture::kTwoStateJump, ClaimSpec::call(100.0), 16, 201);
    for (std::size_t n = 0; n < g.n_nodes(); ++n)
        for (std::size_t k = 0; k < g.n_sheets(); ++k)
            for (std::size_t i = 1; i < g.n_s(); ++i) REQUIRE(g.at(n, k, i) >= g.at(n, k, i - 1) - 1e-12);
}
