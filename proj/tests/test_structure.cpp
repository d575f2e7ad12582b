#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pohedge/errors.hpp"
#include "pohedge/filtering.hpp"
#include "pohedge/hedging.hpp"
#include "pohedge/simulate.hpp"
#include "pohedge/stats.hpp"
#include "pohedge/structure.hpp"

using namespace pohedge;

namespace {

FilterState law(const ModelSpec& sp, std::vector<double> w) {
    auto f = prior_filter(sp, Measure::P);
    f.w = std::move(w);
    return f;
}

// Two marks at the same price jump in state 1, one in state 0: the pooled
// intensity at z = 10 (s = 100) is 1 in state 0 and 3 in state 1.
const char* kPooled = R"~(kind = "jump_diffusion"
s0 = 100.0
mu1 = "0.91 + 0.85*x"
sigma1 = 1.0
[model.signal]
states = [0.0, 1.0]
generator = [[-0.2, 0.2], [0.2, -0.2]]
prior = [0.5, 0.5]
[model.marks]
eta = [1.0, 2.0]
K1 = ["0.1", "0.1*x"]
K0 = "0"
)~";

std::vector<FilterState> repeat(const FilterState& f, int n) { return std::vector<FilterState>(n + 1, f); }

}  // namespace

TEST_CASE("alpha_F: closed-form values") {
    auto zero = fixture::spec(R"~(kind = "diffusion"
s0 = 100.0
mu1 = 0.0
sigma1 = 0.2
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
)~");
    CHECK(alpha_F_at(zero, 0.0, 0.0, 100.0) == 0.0);

    auto d = fixture::spec(R"~(kind = "diffusion"
s0 = 100.0
mu1 = 0.1
sigma1 = 0.2
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
)~");
    CHECK(alpha_F_at(d, 0.0, 0.0, 100.0) == doctest::Approx(0.025).epsilon(1e-14));

    for (double eta : {0.3, 1.0, 7.0}) {
        auto pj = fixture::spec(R"~(kind = "pure_jump"
s0 = 50.0
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
[model.marks]
eta = [)~" + std::to_string(eta) + R"~(]
K1 = "0.1"
)~");
        CHECK(alpha_F_at(pj, 0.0, 0.0, 50.0) == doctest::Approx(0.2).epsilon(1e-14));
    }
}

TEST_CASE("alpha_F: no price activity is a degeneracy") {
    auto pj = fixture::spec(R"~(kind = "pure_jump"
s0 = 50.0
[model.signal]
states = [0.0, 1.0]
generator = [[-1.0, 1.0], [1.0, -1.0]]
prior = [0.5, 0.5]
[model.marks]
eta = [1.0]
K1 = "0.1"
)~");
    // state 0 has no price jumps at all, which validation would refuse
    pj.coeff.K1[0] = Expression::parse("0.1*x");
    CHECK(alpha_F_at(pj, 0.0, 1.0, 50.0) == doctest::Approx(0.2));
    CHECK_THROWS_AS(alpha_F_at(pj, 0.0, 0.0, 50.0), DegeneracyError);
}

TEST_CASE("alpha_H projects the drift with constant a") {
    auto sp = fixture::spec(fixture::kSwitchingDrift);
    CHECK(alpha_H_at(sp, law(sp, {0.5, 0.5}), 0.0, 100.0) == doctest::Approx(0.025).epsilon(1e-14));
    CHECK(alpha_H_at(sp, law(sp, {1.0, 0.0}), 0.0, 100.0) == 0.0);

    auto bs = fixture::spec(fixture::kBlackScholes);
    CHECK(alpha_H_at(bs, prior_filter(bs, Measure::P), 0.0, 90.0) == alpha_F_at(bs, 0.0, 0.0, 90.0));

    auto pj = fixture::spec(R"~(kind = "pure_jump"
s0 = 80.0
[model.signal]
states = [0.0, 1.0]
generator = [[-1.0, 1.0], [1.0, -1.0]]
prior = [0.3, 0.7]
[model.marks]
eta = [2.0]
K1 = "-0.05"
)~");
    CHECK(alpha_H_at(pj, prior_filter(pj, Measure::P), 0.0, 80.0) == doctest::Approx(1.0 / (80.0 * -0.05)));
}

TEST_CASE("nu_H pools intensities on common jump sizes") {
    auto sp = fixture::spec(kPooled);
    auto nu = nu_H_at(sp, law(sp, {0.25, 0.75}), 0.0, 100.0);
    REQUIRE(nu.z.size() == 1);
    CHECK(nu.z[0] == doctest::Approx(10.0));
    CHECK(nu.w[0] == doctest::Approx(2.5).epsilon(1e-14));

    auto pj = fixture::spec(fixture::kTwoStateJump);
    auto dirac = law(pj, {1.0, 0.0});
    auto nd = nu_H_at(pj, dirac, 0.0, 100.0);
    // state 0: marks A (z = 5) and B (z = -4) with 0.6 each; C and D do not move S
    REQUIRE(nd.z.size() == 2);
    double total = 0;
    for (double w : nd.w) total += w;
    CHECK(total == doctest::Approx(1.2));
    CHECK(nd.moment(1) == doctest::Approx(0.6 * 5 - 0.6 * 4));

    auto bs = fixture::spec(fixture::kBlackScholes);
    CHECK(nu_H_at(bs, prior_filter(bs, Measure::P), 0.0, 100.0).z.empty());
}

TEST_CASE("tilted jump weights") {
    auto sp = fixture::spec(kPooled);
    // alpha_F z = 0.1 in state 0 and 0.2 in state 1
    auto l0 = local_structure(sp, 0.0, 0.0, 100.0);
    auto l1 = local_structure(sp, 0.0, 1.0, 100.0);
    CHECK(l0.alpha_F * 10.0 == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(l1.alpha_F * 10.0 == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(l0.eta_star[0] == doctest::Approx(0.9));
    CHECK(l1.eta_star[0] == doctest::Approx(0.8));
    CHECK(l1.eta_star[1] == doctest::Approx(1.6));
}

TEST_CASE("density is 1 when the market price of risk vanishes") {
    auto sp = fixture::spec(R"~(kind = "jump_diffusion"
s0 = 100.0
mu1 = 0.0
sigma1 = 0.2
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
[model.marks]
eta = [0.5, 0.5]
K1 = ["0.1", "-0.1"]
K0 = "0"
)~");
    TimeGrid g(1.0, 20);
    auto f = repeat(prior_filter(sp, Measure::P), g.n_steps);
    for (const auto& p : simulate_paths(sp, g, Measure::P, 20, 4)) {
        auto co = compute_structure(sp, p, f);
        auto L = mmm_density(sp, p, co);
        for (double v : L.L) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("density of a continuous martingale is the stochastic exponential") {
    // theta = mu1 / sigma1 = 0.2 = alpha sigma with alpha = 1, sigma = 0.2
    auto sp = fixture::spec(R"~(kind = "diffusion"
s0 = 100.0
mu1 = 0.04
sigma1 = 0.2
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
)~");
    TimeGrid g(1.0, 8);
    auto p = simulate_path(sp, g, Measure::P, 1, 0);
    std::fill(p.dW1.begin(), p.dW1.end(), 0.5 / 8);
    rebuild_observations(sp, p);
    auto co = compute_structure(sp, p, repeat(prior_filter(sp, Measure::P), 8));
    auto L = mmm_density(sp, p, co);
    CHECK(L.L.back() == doctest::Approx(std::exp(-0.1 - 0.02)).epsilon(1e-12));
    CHECK(std::fabs(L.L.back() - 0.8869) < 1e-4);
}

TEST_CASE("density has mean 1 and turns S into a martingale") {
    auto sp = fixture::spec(fixture::kBlackScholes);
    TimeGrid g(1.0, 16);
    auto f = repeat(prior_filter(sp, Measure::P), g.n_steps);
    std::vector<double> L, SL;
    for (const auto& p : simulate_paths(sp, g, Measure::P, 100000, 606)) {
        auto co = compute_structure(sp, p, f);
        double l = mmm_density(sp, p, co).L.back();
        L.push_back(l);
        SL.push_back(l * p.s.back());
    }
    auto mL = mean_se(L), mS = mean_se(SL);
    CHECK(std::fabs(mL.mean - 1.0) < 4 * mL.se);
    CHECK(std::fabs(mS.mean - 100.0) < 4 * mS.se);
}

TEST_CASE("a nonpositive jump factor excludes the path") {
    auto sp = fixture::spec(R"~(kind = "pure_jump"
s0 = 100.0
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
[model.marks]
eta = [2.0]
K1 = "0.1"
)~");
    TimeGrid g(1.0, 50);
    auto f = repeat(prior_filter(sp, Measure::P), g.n_steps);
    // single mark: alpha_F z = 1, so the first jump kills the density
    bool saw_jump = false;
    for (const auto& p : simulate_paths(sp, g, Measure::P, 30, 12)) {
        auto co = compute_structure(sp, p, f);
        auto L = mmm_density(sp, p, co);
        if (!p.jump_events.empty()) {
            saw_jump = true;
            CHECK(L.excluded);
            CHECK(L.excluded_step == p.jump_events.front().step);
            CHECK_THROWS_AS(mmm_density_strict(sp, p, co), SignedDensityError);
        } else {
            CHECK_FALSE(L.excluded);
        }
    }
    CHECK(saw_jump);
}

TEST_CASE("atom pool merges within tolerance and rejects ambiguous grids") {
    AtomPool pool(1e-6);
    pool.add(1.0, 0.5);
    pool.add(1.0 + 1e-8, 0.25);
    pool.add(-2.0, 1.0);
    pool.finalize();
    CHECK(pool.size() == 2);
    CHECK(pool.atom_of(0) == pool.atom_of(1));
    CHECK(pool.find(-2.0) >= 0);
    CHECK(pool.find(3.0) == -1);

    AtomPool chain(1e-6);
    for (int i = 0; i < 5; ++i) chain.add(1.0 + i * 0.9e-6, 1.0);
    CHECK_THROWS_AS(chain.finalize(), GridError);
}
