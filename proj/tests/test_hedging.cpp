#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pohedge/filtering.hpp"
#include "pohedge/hedging.hpp"
#include "pohedge/pricing.hpp"
#include "pohedge/simulate.hpp"

using namespace pohedge;

namespace {

PooledMeasure pooled(std::vector<double> z, std::vector<double> w) {
    PooledMeasure p;
    p.z = std::move(z);
    p.w = std::move(w);
    return p;
}

// Jump-only terms for atoms z with P-weights nu, values w and tilt alpha.
StrategyTerms jump_terms(double s, const std::vector<double>& z, const std::vector<double>& nu,
                         const std::vector<double>& w, double alpha) {
    StrategyTerms t;
    t.s = s;
    std::vector<double> star(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) star[j] = (1.0 - alpha * z[j]) * nu[j];
    t.nu_star = pooled(z, star);
    t.w_star = w;
    t.nu_H = pooled(z, nu);
    t.w_H = w;
    t.alpha_H = alpha;
    return t;
}

struct Hedged {
    ScenarioConfig cfg;
    ValueSurface surface;
    std::vector<PathSample> paths;
    std::vector<std::vector<FilterState>> fs, fp;
    std::vector<StructureCoefficients> co;
    std::vector<StrategyPath> st;
};

Hedged hedge(const char* model, const ClaimSpec& claim, fixture::Run r, Measure m = Measure::P) {
    Hedged h{fixture::config(model, r), {}, {}, {}, {}, {}, {}};
    h.surface = solve_value_surface(h.cfg.spec, claim, h.cfg.grid, h.cfg.pricing);
    h.paths = simulate_paths(h.cfg.spec, h.cfg.grid, m, h.cfg.n_paths, h.cfg.seed);
    for (const auto& p : h.paths) {
        h.fs.push_back(run_filter(h.cfg.spec, p, Measure::Pstar, h.cfg.filter));
        h.fp.push_back(run_filter(h.cfg.spec, p, Measure::P, h.cfg.filter));
        h.co.push_back(compute_structure(h.cfg.spec, p, h.fp.back()));
        h.st.push_back(run_hedge(h.cfg.spec, claim, h.surface, p, h.fs.back(), h.fp.back(), h.co.back()));
    }
    return h;
}

}  // namespace

TEST_CASE("replicable jump claim: beta = 1, phi = 0") {
    std::vector<double> z{5.0, -4.0, 8.0}, nu{0.6, 0.6, 0.3};
    auto r = strategy_from_terms(jump_terms(100.0, z, nu, z, 0.004));
    CHECK(r.beta_tilde == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::fabs(r.phi) < 1e-14);
    CHECK(r.beta == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("no tilt, no correction") {
    std::vector<double> z{5.0, -5.0}, nu{0.5, 0.5}, w{3.0, -1.0};
    auto r = strategy_from_terms(jump_terms(100.0, z, nu, w, 0.0));
    CHECK(r.phi == 0.0);
    CHECK(r.beta == r.beta_tilde);
}

TEST_CASE("correction restores the P-variance minimizer") {
    // Local P-variance of dV - theta dS is minimized by sum z w nu / sum z^2 nu;
    // the tilted ratio plus the correction must land there, and flipping the
    // sign of the correction must not.
    std::vector<double> z{5.0, -4.0, 8.0}, nu{0.6, 0.6, 0.3}, w{4.1, -0.3, 7.7};
    for (double alpha : {-0.02, 0.01, 0.05}) {
        auto r = strategy_from_terms(jump_terms(100.0, z, nu, w, alpha));
        double A = 0, B = 0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            A += z[j] * z[j] * nu[j];
            B += z[j] * w[j] * nu[j];
        }
        CHECK(r.beta == doctest::Approx(B / A).epsilon(1e-12));
        CHECK(std::fabs(r.beta_tilde - r.phi - B / A) > 1e-3);
    }
}

TEST_CASE("continuous terms: convex combination of sheet deltas") {
    StrategyTerms t;
    t.s = 100.0;
    t.sigma1 = 0.2;
    t.h = t.s * t.sigma1 * (0.5 * 0.4 + 0.5 * 0.6);
    auto r = strategy_from_terms(t);
    CHECK(r.beta == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(r.phi == 0.0);
}

TEST_CASE("one step pure jump: hedge equals the enumerated minimizer") {
    fixture::Run r;
    r.T = 0.1;
    r.n_steps = 1;
    r.s_points = 401;
    auto cfg = fixture::config(R"~(kind = "pure_jump"
s0 = 100.0
[model.signal]
states = [0.0]
generator = [[0.0]]
prior = [1.0]
[model.marks]
eta = [0.6, 0.9]
K1 = ["0.05", "-0.04"]
)~", r);
    auto claim = ClaimSpec::call(100.0);
    auto g = solve_value_surface(cfg.spec, claim, cfg.grid, cfg.pricing);
    auto fs = prior_filter(cfg.spec, Measure::Pstar), fp = prior_filter(cfg.spec, Measure::P);
    auto st = strategy_at(cfg.spec, g, 0, 100.0, fs, fp);

    // outcomes: mark 1, mark 2, no jump; values are measured against no jump
    const double dt = 0.1;
    std::vector<double> p{0.6 * dt, 0.9 * dt, 1 - 1.5 * dt};
    std::vector<double> dS{5.0, -4.0, 0.0};
    std::vector<double> dV{claim.payoff(0.1, 105.0), claim.payoff(0.1, 96.0), claim.payoff(0.1, 100.0)};
    double num = 0, den = 0;
    for (int i = 0; i < 3; ++i) {
        num += p[i] * dS[i] * (dV[i] - dV[2]);
        den += p[i] * dS[i] * dS[i];
    }
    CHECK(std::fabs(st.beta - num / den) < 1e-10);
}

TEST_CASE("constant and identity claims") {
    fixture::Run r;
    r.n_paths = 20;
    for (const char* m : {fixture::kSwitchingDrift, fixture::kTwoStateJump}) {
        auto c = hedge(m, ClaimSpec::constant(4.0), r);
        for (const auto& s : c.st) {
            for (double b : s.beta_H) CHECK(std::fabs(b) < 1e-12);  // solver round-off only
            for (double v : s.V) CHECK(v == doctest::Approx(4.0).epsilon(1e-12));
            for (double v : s.C) CHECK(v == doctest::Approx(4.0).epsilon(1e-12));
        }
        auto id = hedge(m, ClaimSpec::identity(), r);
        for (std::size_t i = 0; i < id.st.size(); ++i) {
            for (double b : id.st[i].beta_H) CHECK(b == doctest::Approx(1.0).epsilon(1e-4));
            for (double v : id.st[i].C) CHECK(v == doctest::Approx(100.0).epsilon(1e-4));
        }
    }
}

TEST_CASE("terminal value is the payoff and strategies scale with the claim") {
    fixture::Run r;
    r.n_paths = 10;
    auto a = hedge(fixture::kTwoStateJump, ClaimSpec::call(100.0), r);
    auto twice = ClaimSpec::call(100.0);
    twice.scale = 2.0;
    auto b = hedge(fixture::kTwoStateJump, twice, r);
    for (std::size_t i = 0; i < a.st.size(); ++i) {
        CHECK(a.st[i].V.back() == doctest::Approx(std::max(a.paths[i].s.back() - 100.0, 0.0)).epsilon(1e-12));
        for (std::size_t n = 0; n < a.st[i].beta_H.size(); ++n) {
            CHECK(b.st[i].beta_H[n] == doctest::Approx(2.0 * a.st[i].beta_H[n]).epsilon(1e-10));
            CHECK(b.st[i].phi_H[n] == doctest::Approx(2.0 * a.st[i].phi_H[n]).epsilon(1e-10));
        }
        CHECK(b.st[i].C.back() == doctest::Approx(2.0 * a.st[i].C.back()).epsilon(1e-10));
    }
}

TEST_CASE("cost evolves by value change minus hedge gain") {
    auto h = hedge(fixture::kOuJumpDiffusion, ClaimSpec::put(100.0), [] {
        fixture::Run q;
        q.n_paths = 5;
        q.extra = "[engines]\nparticles = 200\n";
        return q;
    }());
    for (std::size_t i = 0; i < h.st.size(); ++i) {
        const auto& s = h.st[i];
        for (std::size_t n = 0; n + 1 < s.V.size(); ++n) {
            double dC = s.V[n + 1] - s.V[n] - s.beta_H[n] * (s.s[n + 1] - s.s[n]);
            CHECK(s.C[n + 1] - s.C[n] == doctest::Approx(dC).epsilon(1e-10));
        }
    }
}

TEST_CASE("complete market: replication error shrinks with the step") {
    auto spread = [](int n_steps) {
        fixture::Run r;
        r.n_steps = n_steps;
        r.n_paths = 400;
        r.s_points = 401;
        auto h = hedge(fixture::kBlackScholes, ClaimSpec::call(100.0), r);
        std::vector<double> c;
        for (const auto& s : h.st) c.push_back(s.C.back() - s.C.front());
        return std::sqrt(sample_variance(c));
    };
    double coarse = spread(16), fine = spread(64);
    CHECK(fine < 0.6 * coarse);
    CHECK(fine < 1.0);
}

TEST_CASE("diagnostics: constant claim gives zero statistics") {
    fixture::Run r;
    r.n_paths = 120;
    auto h = hedge(fixture::kSwitchingDrift, ClaimSpec::constant(2.0), r);
    std::vector<HedgeSample> samples;
    std::vector<MeasurePath> dens;
    for (std::size_t i = 0; i < h.paths.size(); ++i) dens.push_back(mmm_density(h.cfg.spec, h.paths[i], h.co[i]));
    for (std::size_t i = 0; i < h.paths.size(); ++i)
        samples.push_back({&h.paths[i], &h.st[i], &h.fp[i], &h.co[i], &dens[i]});
    auto rep = diagnostics(h.cfg.spec, samples);
    CHECK(rep.cost_variance == 0.0);
    CHECK(rep.var_beta_H == 0.0);
    CHECK(rep.var_zero == 0.0);
    for (const auto& o : rep.orthogonality) CHECK(o.value == 0.0);
    CHECK(rep.cost_change.mean == 0.0);
}

TEST_CASE("diagnostics: hedging a call beats not hedging") {
    fixture::Run r;
    r.n_paths = 400;
    auto h = hedge(fixture::kTwoStateJump, ClaimSpec::call(100.0), r);
    std::vector<HedgeSample> samples;
    std::vector<MeasurePath> dens;
    for (std::size_t i = 0; i < h.paths.size(); ++i) dens.push_back(mmm_density(h.cfg.spec, h.paths[i], h.co[i]));
    for (std::size_t i = 0; i < h.paths.size(); ++i)
        samples.push_back({&h.paths[i], &h.st[i], &h.fp[i], &h.co[i], &dens[i]});
    auto rep = diagnostics(h.cfg.spec, samples);
    CHECK(rep.var_zero > rep.var_beta_H);
    CHECK(rep.variance_reduction.pass);
    CHECK(test_function_names(h.cfg.spec).size() == test_functions(h.cfg.spec, 100.0, h.fp[0][0]).size());
}
