#include "pohedge/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pohedge/errors.hpp"

namespace pohedge {

double FilterState::total() const {
    double v = 0.0;
    for (double p : w) v += p;
    return v;
}

void FilterState::check_normalized() const {
    if (w.empty()) throw FilterStateError("empty filter");
    double tot = 0.0;
    for (double p : w) {
        if (!(p >= 0.0)) throw FilterStateError("negative or NaN filter weight");
        tot += p;
    }
    if (std::fabs(tot - 1.0) > 1e-10) {
        std::ostringstream os;
        os << "filter weights sum to " << tot;
        throw FilterStateError(os.str());
    }
}

double FilterState::expectation(const std::function<double(double)>& f) const {
    double v = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] != 0.0) v += w[i] * f(x[i]);
    return v;
}

std::vector<double> FilterState::state_law(const ModelSpec& spec) const {
    if (mode == FilterMode::FiniteState) return w;
    std::vector<double> law(spec.n_states(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        int k = spec.state_index(x[i]);
        if (k < 0) throw FilterStateError("particle off the chain state set");
        law[k] += w[i];
    }
    return law;
}

double filter_expectation(const FilterState& state, const ScalarField& f, double t, double s) {
    return state.expectation([&](double x) { return f.value(t, x, s); });
}

Observation observation_at(const PathSample& path, int n) {
    return {path.time(n), path.s[n], path.grid.dt(), path.obs_y[n], path.obs_z[n]};
}

FilterState prior_filter(const ModelSpec& spec, Measure measure, double t0) {
    if (!spec.finite_state())
        throw ConfigError("an exact prior needs a finite-state signal; use the particle engine");
    FilterState f;
    f.mode = FilterMode::FiniteState;
    f.measure = measure;
    f.t = t0;
    f.x = spec.chain->states;
    f.w = spec.chain->prior;
    return f;
}

namespace {

struct Event {
    double target;
    double prob;
};

struct StepLikelihood {
    double log_c = 0.0;  // Gaussian return likelihood, up to a state-free constant
    std::vector<Event> events;
    double total() const {
        double v = 0.0;
        for (const auto& e : events) v += e.prob;
        return v;
    }
    LocalStructure ls;
};

StepLikelihood step_likelihood(const ModelSpec& spec, Measure measure, double x,
                               const Observation& obs, double tol) {
    StepLikelihood L;
    const bool star = measure == Measure::Pstar;
    L.ls = local_structure(spec, obs.t, x, obs.s, star);
    const auto& c = L.ls.c;
    if (spec.has_diffusion_price()) {
        double b = star ? price_drift(spec, L.ls, measure) / obs.s : c.mu1;
        double r = obs.y - b * obs.dt;
        L.log_c = -r * r / (2.0 * c.sigma1 * c.sigma1 * obs.dt) - std::log(c.sigma1);
    }
    auto w = jump_weights(spec, L.ls, measure);
    double lambda = 0.0;
    for (double v : w) lambda += v;
    if (lambda * obs.dt > 1.0) throw StepSizeError("jump intensity times dt exceeds 1 in the filter");
    if (obs.z == 0.0) {
        L.events.push_back({x, 1.0 - lambda * obs.dt});
        for (std::size_t j = 0; j < w.size(); ++j)
            if (c.z[j] == 0.0 && w[j] > 0.0) L.events.push_back({jump_target(spec, x, c.k0[j]), w[j] * obs.dt});
    } else {
        for (std::size_t j = 0; j < w.size(); ++j)
            if (c.z[j] != 0.0 && w[j] > 0.0 && std::fabs(c.z[j] - obs.z) <= tol)
                L.events.push_back({jump_target(spec, x, c.k0[j]), w[j] * obs.dt});
    }
    return L;
}

void normalize_or_throw(std::vector<double>& w, const Observation& obs) {
    double tot = 0.0;
    for (double v : w) tot += v;
    if (!(tot > 0.0) || !std::isfinite(tot)) {
        std::ostringstream os;
        os << "observation at t=" << obs.t << " (z=" << obs.z << ") has zero likelihood under every state";
        throw SupportError(os.str());
    }
    for (double& v : w) v /= tot;
}

int sample_index(const std::vector<double>& p, double u) {
    double tot = 0.0;
    for (double v : p) tot += v;
    double acc = 0.0, target = u * tot;
    for (std::size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (target < acc) return static_cast<int>(k);
    }
    for (std::size_t k = p.size(); k-- > 0;)
        if (p[k] > 0.0) return static_cast<int>(k);
    return 0;
}

int sample_row(const Eigen::MatrixXd& T, int i, double u) {
    std::vector<double> row(T.cols());
    for (Eigen::Index k = 0; k < T.cols(); ++k) row[k] = T(i, k);
    return sample_index(row, u);
}

}  // namespace

FilterState exact_filter_step(const ModelSpec& spec, const FilterState& state,
                              const Observation& obs, const Eigen::MatrixXd& trans) {
    if (!spec.finite_state() || state.mode != FilterMode::FiniteState)
        throw FilterStateError("exact filter needs a finite-state signal");
    state.check_normalized();
    const std::size_t d = spec.n_states();
    const double tol = pooling_tolerance(spec);

    std::vector<StepLikelihood> lik(d);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d; ++i) {
        if (state.w[i] == 0.0) continue;
        lik[i] = step_likelihood(spec, state.measure, state.x[i], obs, tol);
        max_log = std::max(max_log, lik[i].log_c);
    }
    std::vector<double> u(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        if (state.w[i] == 0.0) continue;
        double wi = state.w[i] * std::exp(lik[i].log_c - max_log);
        for (const auto& e : lik[i].events) {
            if (e.prob == 0.0) continue;
            int from = spec.state_index(e.target);
            for (std::size_t k = 0; k < d; ++k) u[k] += wi * e.prob * trans(from, k);
        }
    }
    normalize_or_throw(u, obs);
    FilterState out = state;
    out.t = obs.t + obs.dt;
    out.w = std::move(u);
    return out;
}

FilterState exact_filter_step(const ModelSpec& spec, const FilterState& state,
                              const Observation& obs) {
    if (!spec.finite_state()) throw FilterStateError("exact filter needs a finite-state signal");
    return exact_filter_step(spec, state, obs, chain_transition(*spec.chain, obs.dt));
}

FilterState filter_under_P_step(const ModelSpec& spec, const FilterState& state,
                                const Observation& obs) {
    FilterState in = state;
    in.measure = Measure::P;
    return exact_filter_step(spec, in, obs);
}

double effective_sample_size(const std::vector<double>& w) {
    double s1 = 0.0, s2 = 0.0;
    for (double v : w) {
        s1 += v;
        s2 += v * v;
    }
    return s2 > 0.0 ? s1 * s1 / s2 : 0.0;
}

FilterState particle_prior(const ModelSpec& spec, Measure measure, int n, RngStream& rng, double t0) {
    if (n <= 0) throw EmptySampleError("particle filter needs at least one particle");
    FilterState f;
    f.mode = FilterMode::Particle;
    f.measure = measure;
    f.t = t0;
    f.x.resize(n);
    f.w.assign(n, 1.0 / n);
    if (spec.finite_state()) {
        // systematic draw from the prior: counts are within one of n p_k
        const auto& pr = spec.chain->prior;
        double u = rng.uniform();
        double acc = pr[0];
        std::size_t k = 0;
        for (int i = 0; i < n; ++i) {
            double pos = (i + u) / n;
            while (pos >= acc && k + 1 < pr.size()) acc += pr[++k];
            f.x[i] = spec.chain->states[k];
        }
    } else {
        for (int i = 0; i < n; ++i) f.x[i] = spec.x0 + spec.x0_sd * rng.normal();
    }
    return f;
}

FilterState particle_filter_step(const ModelSpec& spec, const FilterState& state,
                                 const Observation& obs, RngStream& rng,
                                 const ParticleOptions& opt, const Eigen::MatrixXd* trans) {
    const std::size_t N = state.size();
    if (N == 0) throw EmptySampleError("particle cloud is empty");
    const double tol = pooling_tolerance(spec);
    const double rho = spec.coeff.rho;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double sdt = std::sqrt(obs.dt);

    Eigen::MatrixXd own;
    if (spec.finite_state() && !trans) {
        own = chain_transition(*spec.chain, obs.dt);
        trans = &own;
    }

    // chain particles share one likelihood per state
    std::vector<StepLikelihood> store(spec.finite_state() ? spec.n_states() : N);
    std::vector<char> have(store.size(), 0);
    std::vector<const StepLikelihood*> lik(N, nullptr);
    std::vector<double> lw(N, -std::numeric_limits<double>::infinity());
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < N; ++p) {
        if (state.w[p] == 0.0) continue;
        std::size_t slot = p;
        if (spec.finite_state()) {
            int k = spec.state_index(state.x[p]);
            if (k < 0) throw FilterStateError("particle off the chain state set");
            slot = static_cast<std::size_t>(k);
        }
        if (!have[slot]) {
            store[slot] = step_likelihood(spec, state.measure, state.x[p], obs, tol);
            have[slot] = 1;
        }
        lik[p] = &store[slot];
        double q = lik[p]->total();
        if (q <= 0.0) continue;
        lw[p] = std::log(state.w[p]) + lik[p]->log_c + std::log(q);
        max_lw = std::max(max_lw, lw[p]);
    }
    std::vector<double> w(N, 0.0);
    if (std::isfinite(max_lw))
        for (std::size_t p = 0; p < N; ++p) w[p] = std::exp(lw[p] - max_lw);
    normalize_or_throw(w, obs);

    std::vector<std::size_t> src(N);
    for (std::size_t p = 0; p < N; ++p) src[p] = p;
    if (effective_sample_size(w) < opt.ess_threshold * static_cast<double>(N)) {
        double u = rng.uniform();
        double acc = w[0];
        std::size_t k = 0;
        for (std::size_t p = 0; p < N; ++p) {
            double pos = (p + u) / static_cast<double>(N);
            while (pos >= acc && k + 1 < N) acc += w[++k];
            src[p] = k;
        }
        w.assign(N, 1.0 / static_cast<double>(N));
    }

    FilterState out;
    out.mode = FilterMode::Particle;
    out.measure = state.measure;
    out.t = obs.t + obs.dt;
    out.x.resize(N);
    out.w = std::move(w);
    for (std::size_t p = 0; p < N; ++p) {
        const double x = state.x[src[p]];
        StepLikelihood fresh;
        if (!lik[src[p]]) fresh = step_likelihood(spec, state.measure, x, obs, tol);
        const auto& L = lik[src[p]] ? *lik[src[p]] : fresh;
        std::vector<double> probs;
        probs.reserve(L.events.size());
        for (const auto& e : L.events) probs.push_back(e.prob);
        double xt = L.events.empty() ? x : L.events[sample_index(probs, rng.uniform())].target;
        if (spec.finite_state()) {
            out.x[p] = spec.chain->states[sample_row(*trans, spec.state_index(xt), rng.uniform())];
        } else {
            const auto& c = L.ls.c;
            double dW0 = sdt * rng.normal();
            if (spec.has_diffusion_price()) {
                const bool star = state.measure == Measure::Pstar;
                double b = star ? price_drift(spec, L.ls, state.measure) / obs.s : c.mu1;
                double dW1 = (obs.y - b * obs.dt) / c.sigma1;
                dW0 = rho * dW1 + rho_c * dW0;
            }
            out.x[p] = xt + signal_drift(spec, L.ls, obs.s, state.measure) * obs.dt + c.sigma0 * dW0;
        }
    }
    return out;
}

PooledMeasure nu_star_H(const ModelSpec& spec, const FilterState& state, double t, double s) {
    state.check_normalized();
    AtomPool pool(pooling_tolerance(spec));
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state.w[i] == 0.0) continue;
        auto ls = local_structure(spec, t, state.x[i], s, true);
        for (std::size_t j = 0; j < ls.c.z.size(); ++j)
            if (ls.c.z[j] != 0.0) pool.add(ls.c.z[j], state.w[i] * ls.eta_star[j]);
    }
    pool.finalize();
    return {pool.atoms(), pool.weights()};
}

std::vector<FilterState> run_filter(const ModelSpec& spec, const PathSample& path, Measure measure,
                                    const FilterRunOptions& opt) {
    const int N = path.n_steps();
    std::vector<FilterState> out;
    out.reserve(N + 1);
    Eigen::MatrixXd T;
    if (spec.finite_state()) T = chain_transition(*spec.chain, path.grid.dt());
    if (opt.engine == FilterEngine::Exact) {
        out.push_back(prior_filter(spec, measure, path.t0));
        for (int n = 0; n < N; ++n) out.push_back(exact_filter_step(spec, out.back(), observation_at(path, n), T));
    } else {
        RngStream rng(opt.seed, measure == Measure::P ? StreamId::ParticleP : StreamId::ParticlePstar,
                      path.path_index);
        out.push_back(particle_prior(spec, measure, opt.particle.n_particles, rng, path.t0));
        for (int n = 0; n < N; ++n)
            out.push_back(particle_filter_step(spec, out.back(), observation_at(path, n), rng, opt.particle,
                                               spec.finite_state() ? &T : nullptr));
    }
    return out;
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw FilterStateError("tv distance needs laws on the same support");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += std::fabs(p[i] - q[i]);
    return 0.5 * d;
}

}  // namespace pohedge
