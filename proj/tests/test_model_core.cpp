#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pohedge/errors.hpp"
#include "pohedge/model.hpp"
#include "pohedge/structure.hpp"

using namespace pohedge;

namespace {

bool has_condition(const std::vector<Violation>& v, const std::string& cond) {
    for (const auto& x : v)
        if (x.condition == cond) return true;
    return false;
}

ScalarField field(const std::string& text) { return ScalarField::from_expression(Expression::parse(text)); }

}  // namespace

TEST_CASE("time grid nodes are uniform and end exactly at the horizon") {
    TimeGrid g(0.7, 13);
    CHECK(g.n_nodes() == 14);
    CHECK(g.t(0) == 0.0);
    CHECK(g.t(13) == 0.7);
    for (int n = 0; n < 13; ++n) {
        CHECK(g.t(n + 1) > g.t(n));
        CHECK(g.t(n + 1) - g.t(n) == doctest::Approx(g.dt()).epsilon(1e-12));
    }
}

TEST_CASE("expression grammar") {
    CHECK(Expression::parse("1 + 2*3").eval(0, 0, 0) == 7.0);
    CHECK(Expression::parse("2^3^2").eval(0, 0, 0) == 512.0);
    CHECK(Expression::parse("-2^2").eval(0, 0, 0) == -4.0);
    CHECK(Expression::parse("(1 - x)/s").eval(0, 3, 4) == -0.5);
    CHECK(Expression::parse("max(x, s) - min(x, s)").eval(0, 2, 5) == 3.0);
    CHECK(Expression::parse("exp(log(s)) + sqrt(abs(x))").eval(0, -9, 2) == doctest::Approx(5.0));
    CHECK(Expression::parse("k*zeta + t", {{"k", 2.0}}).eval(1, 0, 0, 3) == 7.0);
    CHECK(Expression::parse("3*2").constant_value().value() == 6.0);
    CHECK_FALSE(Expression::parse("x*0 + s").depends_on(Var::X));

    CHECK_THROWS_AS(Expression::parse("1 +"), ConfigError);
    CHECK_THROWS_AS(Expression::parse("foo(x)"), ConfigError);
    CHECK_THROWS_AS(Expression::parse("y"), ConfigError);
    CHECK_THROWS_AS(Expression::parse("(x"), ConfigError);
}

TEST_CASE("symbolic derivatives match central differences") {
    auto e = Expression::parse("s^2*exp(-x) + log(s)*t - max(x, 0.5)*s");
    for (double x : {-0.3, 0.2, 1.1}) {
        for (double s : {0.5, 2.0}) {
            const double h = 1e-6;
            double fd_s = (e.eval(0.4, x, s + h) - e.eval(0.4, x, s - h)) / (2 * h);
            double fd_x = (e.eval(0.4, x + h, s) - e.eval(0.4, x - h, s)) / (2 * h);
            CHECK(e.derivative(Var::S).eval(0.4, x, s) == doctest::Approx(fd_s).epsilon(1e-6));
            CHECK(e.derivative(Var::X).eval(0.4, x, s) == doctest::Approx(fd_x).epsilon(1e-6));
        }
    }
}

TEST_CASE("validate_spec: constant volatility inside its bounds passes") {
    auto sp = fixture::spec(std::string(fixture::kBlackScholes) + "[model.bounds]\nc2 = 0.1\nc3 = 0.3\n");
    CHECK(validate_spec(sp).empty());
}

TEST_CASE("validate_spec: 1 + K1 <= 0 is reported with the mark") {
    auto sp = fixture::spec(R"~(kind = "pure_jump"
s0 = 100.0
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
[model.marks]
eta = [1.0]
K1 = "0.1"
)~");
    sp.coeff.K1[0] = Expression::constant(-1.5);
    auto v = validate_spec(sp);
    REQUIRE(has_condition(v, "1 + K1 <= 0"));
    for (const auto& x : v)
        if (x.condition == "1 + K1 <= 0") {
            CHECK(x.mark == 0);
            CHECK(x.message.find("zeta_1") != std::string::npos);
        }
}

TEST_CASE("validate_spec: drift bound scan reaches the lattice edge") {
    auto sp = fixture::spec(R"~(kind = "jump_diffusion"
s0 = 100.0
mu0 = "0"
sigma0 = 0.3
mu1 = "0.01*x"
sigma1 = 0.2
[model.marks]
eta = [1.0]
K1 = "0.05"
)~");
    sp.coeff.mu1 = Expression::parse("x");
    sp.coeff.bounds.c1 = 5.0;
    sp.lattice.x = {0.0, 2.5, 10.0};
    auto v = validate_spec(sp);
    REQUIRE(has_condition(v, "mu1 >= c1"));
    for (const auto& x : v)
        if (x.condition == "mu1 >= c1") CHECK(x.witness.x == 10.0);
}

TEST_CASE("validate_spec: structural problems of the signal chain") {
    auto sp = fixture::spec(fixture::kSwitchingDrift);
    sp.chain->generator(0, 1) = -0.5;
    sp.chain->prior = {0.7, 0.7};
    auto v = validate_spec(sp);
    CHECK(has_condition(v, "generator off-diagonal entries must be >= 0"));
    CHECK(has_condition(v, "generator rows must sum to 0"));
    CHECK(has_condition(v, "prior weights must sum to 1"));
}

TEST_CASE("generator: S has zero drift under the martingale measure") {
    auto f = field("s");
    auto bs = fixture::spec(fixture::kBlackScholes);
    CHECK(apply_generator(bs, Measure::Pstar, f, 0.3, 0.0, 100.0) == 0.0);

    auto check_zero = [&](const ModelSpec& sp, double x) {
        for (double s : {60.0, 100.0, 140.0}) {
            double g = apply_generator(sp, Measure::Pstar, f, 0.2, x, s);
            CHECK(std::fabs(g) <= 1e-12 * s);
        }
    };
    auto pj = fixture::spec(fixture::kTwoStateJump);
    check_zero(pj, 0.0);
    check_zero(pj, 1.0);
    auto jd = fixture::spec(fixture::kOuJumpDiffusion);
    check_zero(jd, -0.4);
    check_zero(jd, 0.7);
}

TEST_CASE("generator: only the signal drift survives for f = x") {
    auto sp = fixture::spec(R"~(kind = "diffusion"
s0 = 100.0
mu0 = "2*(0 - x)"
sigma0 = 0.4
mu1 = "0.05"
sigma1 = 0.2
)~");
    CHECK(apply_generator(sp, Measure::Pstar, field("x"), 0.0, 1.0, 100.0) == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("generator: pure jump f = s^2 with a fixed tilted weight") {
    auto sp = fixture::spec(R"~(kind = "pure_jump"
s0 = 1.0
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
[model.marks]
eta = [3.0]
K1 = "0.1"
)~");
    // Compensated price: the f_s coefficient is -z * weight.
    const double w = 3.0, z = 0.1;
    double g = generator_with_weights(sp, field("s^2"), 0.0, 0.0, 1.0, {w}, -z * w, 0.0);
    CHECK(g == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(g == doctest::Approx(z * z * w).epsilon(1e-12));
}

TEST_CASE("generator: constants are harmonic under both measures") {
    auto f = field("4.5");
    for (const char* m : {fixture::kBlackScholes, fixture::kTwoStateJump, fixture::kOuJumpDiffusion}) {
        auto sp = fixture::spec(m);
        double x = sp.finite_state() ? sp.chain->states.back() : 0.3;
        CHECK(apply_generator(sp, Measure::P, f, 0.1, x, 95.0) == 0.0);
        CHECK(apply_generator(sp, Measure::Pstar, f, 0.1, x, 95.0) == 0.0);
    }
}

TEST_CASE("generator: P minus P* on f = s is the full P-drift of S") {
    auto f = field("s");
    auto sp = fixture::spec(fixture::kOuJumpDiffusion);
    for (double x : {-0.5, 0.0, 0.8}) {
        for (double s : {70.0, 100.0, 130.0}) {
            // s mu1 + z eta, with K1 = -0.1 and eta = 1
            double expected = s * (0.05 + 0.1 * x) + s * (-0.1) * 1.0;
            double diff = apply_generator(sp, Measure::P, f, 0.0, x, s) -
                          apply_generator(sp, Measure::Pstar, f, 0.0, x, s);
            CHECK(std::fabs(diff - expected) <= 1e-12 * s);
        }
    }
    auto pj = fixture::spec(fixture::kTwoStateJump);
    for (double x : {0.0, 1.0}) {
        double s = 100.0;
        double expected = s * (0.05 * 0.6 + (-0.04 - 0.02 * x) * 0.6 + 0.08 * x * 0.3);
        double diff = apply_generator(pj, Measure::P, f, 0.0, x, s) - apply_generator(pj, Measure::Pstar, f, 0.0, x, s);
        CHECK(std::fabs(diff - expected) <= 1e-12 * s);
    }
}

TEST_CASE("generator: missing derivatives are an error, finite differences are opt-in") {
    auto sp = fixture::spec(fixture::kBlackScholes);
    ScalarField f;
    f.value = [](double, double, double s) { return s * s; };
    CHECK_THROWS_AS(apply_generator(sp, Measure::Pstar, f, 0.0, 0.0, 100.0), DerivativeMissingError);

    auto g = ScalarField::numeric([](double, double, double s) { return s * s; }, 100.0);
    // s^2 under P*: 0.5 sigma^2 s^2 * 2
    CHECK(apply_generator(sp, Measure::Pstar, g, 0.0, 0.0, 100.0) == doctest::Approx(400.0).epsilon(1e-6));
}

TEST_CASE("chain transition matches the two-state closed form") {
    SignalChain ch;
    ch.states = {0.0, 1.0};
    ch.generator = Eigen::MatrixXd(2, 2);
    ch.generator << -0.4, 0.4, 0.6, -0.6;
    ch.prior = {0.5, 0.5};
    for (double dt : {0.001, 0.1, 2.0}) {
        auto P = chain_transition(ch, dt);
        auto ref = oracle::two_state_transition(0.4, 0.6, dt);
        for (int i = 0; i < 2; ++i) {
            CHECK(P.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
            for (int k = 0; k < 2; ++k) CHECK(std::fabs(P(i, k) - ref[i][k]) < 1e-12);
        }
    }
}

TEST_CASE("claim presets") {
    CHECK(ClaimSpec::call(100).payoff(1, 110) == 10.0);
    CHECK(ClaimSpec::call(100).payoff(1, 90) == 0.0);
    CHECK(ClaimSpec::put(100).payoff(1, 90) == 10.0);
    CHECK(ClaimSpec::digital(100).payoff(1, 100.5) == 1.0);
    CHECK(ClaimSpec::digital(100).payoff(1, 99.5) == 0.0);
    CHECK(ClaimSpec::identity().payoff(1, 87.0) == 87.0);
    CHECK(ClaimSpec::constant(3.0).payoff(1, 87.0) == 3.0);
}

TEST_CASE("jump targets snap onto chain states") {
    auto sp = fixture::spec(fixture::kTwoStateJump);
    CHECK(jump_target(sp, 0.0, 1.0) == 1.0);
    CHECK(jump_target(sp, 1.0, -1.0) == 0.0);
    CHECK(jump_target(sp, 1.0, 0.0) == 1.0);
    CHECK(sp.state_index(1.0) == 1);
    CHECK(sp.state_index(0.5) == -1);
}
