#include "pohedge/simulate.hpp"

#include <cmath>
#include <sstream>

#include "pohedge/errors.hpp"
#include "pohedge/parallel.hpp"
#include "pohedge/structure.hpp"

namespace pohedge {

namespace {

int sample_row(const Eigen::MatrixXd& T, int i, double u) {
    double acc = 0.0;
    const auto d = static_cast<int>(T.cols());
    for (int k = 0; k < d; ++k) {
        acc += T(i, k);
        if (u < acc) return k;
    }
    // u fell in the round-off tail: last state with positive mass
    for (int k = d - 1; k >= 0; --k)
        if (T(i, k) > 0.0) return k;
    return i;
}

int sample_prior(const std::vector<double>& prior, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
        acc += prior[k];
        if (u < acc) return static_cast<int>(k);
    }
    for (std::size_t k = prior.size(); k-- > 0;)
        if (prior[k] > 0.0) return static_cast<int>(k);
    return 0;
}

PathSample simulate_one(const ModelSpec& spec, const TimeGrid& grid, Measure measure,
                        std::uint64_t seed, std::uint64_t path_index, const SimulationOptions& opt,
                        const SimulationStart& start, const Eigen::MatrixXd* trans) {
    const int N = grid.n_steps;
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const double rho = spec.coeff.rho;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    PathSample p;
    p.grid = grid;
    p.t0 = start.t0;
    p.measure = measure;
    p.seed = seed;
    p.stream = static_cast<std::uint64_t>(measure == Measure::P ? StreamId::PathP : StreamId::PathPstar);
    p.path_index = path_index;
    p.x.resize(N + 1);
    p.s.resize(N + 1);
    p.state.assign(N + 1, -1);
    p.dW0.resize(N);
    p.dW1.resize(N);
    p.obs_y.assign(N, 0.0);
    p.obs_z.assign(N, 0.0);
    p.jump_mark.assign(N, -1);

    RngStream init(seed, StreamId::InitialState, path_index);
    RngStream rng(seed, p.stream, path_index);

    double x, s = start.s.value_or(spec.s0);
    int st = -1;
    if (spec.finite_state()) {
        if (start.x) {
            st = spec.state_index(*start.x);
            if (st < 0) throw ConfigError("simulation start x is not a signal state");
        } else {
            st = sample_prior(spec.chain->prior, init.uniform());
        }
        x = spec.chain->states[st];
    } else {
        x = start.x ? *start.x : spec.x0 + spec.x0_sd * init.normal();
    }
    p.x[0] = x;
    p.s[0] = s;
    p.state[0] = st;

    const bool star = measure == Measure::Pstar;
    for (int n = 0; n < N; ++n) {
        const double t = p.time(n);
        double z1 = rng.normal();
        double z0 = rng.normal();
        double u_jump = rng.uniform();
        double u_chain = rng.uniform();
        if (opt.zero_noise) z1 = z0 = 0.0;

        auto ls = local_structure(spec, t, x, s, star);
        const auto& c = ls.c;
        auto w = jump_weights(spec, ls, measure);
        double lambda = 0.0;
        for (double v : w) lambda += v;
        if (lambda * dt > 1.0) {
            std::ostringstream os;
            os << "jump intensity " << lambda << " times dt " << dt
               << " exceeds 1 at step " << n << "; use a smaller dt";
            throw StepSizeError(os.str());
        }

        const double dW1 = sdt * z1;
        const double dW0 = rho * dW1 + rho_c * sdt * z0;
        p.dW1[n] = dW1;
        p.dW0[n] = dW0;

        int mark = -1;
        if (u_jump < lambda * dt) {
            double acc = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j) {
                acc += w[j] * dt;
                if (u_jump < acc) {
                    mark = static_cast<int>(j);
                    break;
                }
            }
            if (mark < 0) {
                for (std::size_t j = w.size(); j-- > 0;)
                    if (w[j] > 0.0) {
                        mark = static_cast<int>(j);
                        break;
                    }
            }
        }

        double s_new = s;
        if (spec.has_diffusion_price()) {
            double b = star ? price_drift(spec, ls, measure) / s : c.mu1;
            double y = b * dt + c.sigma1 * dW1;
            p.obs_y[n] = y;
            s_new = opt.log_euler ? s * std::exp(y - 0.5 * c.sigma1 * c.sigma1 * dt) : s * (1.0 + y);
        }
        double x_new = x;
        if (mark >= 0) {
            p.jump_mark[n] = mark;
            p.jump_events.push_back({n, mark});
            s_new *= 1.0 + c.k1[mark];
            p.obs_z[n] = c.z[mark];
            x_new = jump_target(spec, x, c.k0[mark]);
        }
        if (!(s_new > 0.0) || !std::isfinite(s_new)) {
            std::ostringstream os;
            os << "price left (0, inf) at step " << n << " (s = " << s_new << "); use a smaller dt";
            throw StepSizeError(os.str());
        }

        if (spec.finite_state()) {
            st = spec.state_index(x_new);
            st = sample_row(*trans, st, u_chain);
            x_new = spec.chain->states[st];
        } else {
            x_new += signal_drift(spec, ls, s, measure) * dt + c.sigma0 * dW0;
        }
        x = x_new;
        s = s_new;
        p.x[n + 1] = x;
        p.s[n + 1] = s;
        p.state[n + 1] = st;
    }
    return p;
}

}  // namespace

PathSample simulate_path(const ModelSpec& spec, const TimeGrid& grid, Measure measure,
                         std::uint64_t seed, std::uint64_t path_index, const SimulationOptions& opt,
                         const SimulationStart& start) {
    Eigen::MatrixXd T;
    if (spec.finite_state()) T = chain_transition(*spec.chain, grid.dt());
    return simulate_one(spec, grid, measure, seed, path_index, opt, start, &T);
}

std::vector<PathSample> simulate_paths(const ModelSpec& spec, const TimeGrid& grid, Measure measure,
                                       int n_paths, std::uint64_t seed,
                                       const SimulationOptions& opt, const SimulationStart& start,
                                       int workers) {
    if (n_paths < 0) throw ConfigError("n_paths must be >= 0");
    Eigen::MatrixXd T;
    if (spec.finite_state()) T = chain_transition(*spec.chain, grid.dt());
    std::vector<PathSample> out(static_cast<std::size_t>(n_paths));
    parallel_for(
        out.size(),
        [&](std::size_t i) { out[i] = simulate_one(spec, grid, measure, seed, i, opt, start, &T); },
        workers);
    return out;
}

void rebuild_observations(const ModelSpec& spec, PathSample& path) {
    const int N = path.n_steps();
    const double dt = path.grid.dt();
    const bool star = path.measure == Measure::Pstar;
    path.obs_y.assign(N, 0.0);
    path.obs_z.assign(N, 0.0);
    path.jump_events.clear();
    path.state.assign(N + 1, -1);
    for (int n = 0; n <= N; ++n)
        if (spec.finite_state()) path.state[n] = spec.state_index(path.x[n]);
    for (int n = 0; n < N; ++n) {
        auto ls = local_structure(spec, path.time(n), path.x[n], path.s[n], star);
        if (spec.has_diffusion_price()) {
            double b = star ? price_drift(spec, ls, path.measure) / path.s[n] : ls.c.mu1;
            path.obs_y[n] = b * dt + ls.c.sigma1 * path.dW1[n];
        }
        int j = path.jump_mark[n];
        if (j >= 0) {
            if (j >= static_cast<int>(ls.c.z.size())) throw ConfigError("jump mark out of range in path dump");
            path.obs_z[n] = ls.c.z[j];
            path.jump_events.push_back({n, j});
        }
    }
}

std::vector<double> innovation_increments(const ModelSpec& spec, const PathSample& path,
                                          const std::vector<double>& filter_drift) {
    const int N = path.n_steps();
    if (static_cast<int>(filter_drift.size()) < N)
        throw ConfigError("filter drift needs one value per step");
    std::vector<double> dI(N, 0.0);
    if (!spec.has_diffusion_price()) return dI;
    const double dt = path.grid.dt();
    for (int n = 0; n < N; ++n) {
        auto c = local_coefficients(spec, path.time(n), path.x[n], path.s[n]);
        if (spec.coeff.bounds.c2 ? !(c.sigma1 > *spec.coeff.bounds.c2) : !(c.sigma1 > 0.0)) {
            std::ostringstream os;
            os << "sigma1 = " << c.sigma1 << " below its lower bound at step " << n;
            throw BoundViolationError(os.str());
        }
        // observed return under P is mu1 dt + sigma1 dW1 for either scheme
        dI[n] = path.dW1[n] + (c.mu1 - filter_drift[n]) / c.sigma1 * dt;
    }
    return dI;
}

}  // namespace pohedge
