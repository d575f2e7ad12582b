#include "pohedge/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "pohedge/errors.hpp"
#include "pohedge/io.hpp"
#include "pohedge/parallel.hpp"

namespace pohedge {

namespace fs = std::filesystem;

double bs_call(double s, double K, double sigma, double T) {
    if (T <= 0.0) return std::max(s - K, 0.0);
    double v = sigma * std::sqrt(T);
    double d1 = std::log(s / K) / v + 0.5 * v;
    return s * normal_cdf(d1) - K * normal_cdf(d1 - v);
}

double bs_call_delta(double s, double K, double sigma, double T) {
    double v = sigma * std::sqrt(T);
    return normal_cdf(std::log(s / K) / v + 0.5 * v);
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_first_line(const std::string& file) {
    std::ifstream in(file);
    std::string line;
    std::getline(in, line);
    return line;
}

// Probabilists' Gauss-Hermite rule (Golub-Welsch): E f(Z) ~ sum w_i f(z_i).
void gauss_hermite(int n, std::vector<double>& z, std::vector<double>& w) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    z.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
        z[i] = es.eigenvalues()(i);
        w[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
}

// Signal law at t0 as a weighted point set (quadrature for a Gaussian prior).
FilterState start_belief(const ModelSpec& spec, Measure m) {
    if (spec.finite_state()) return prior_filter(spec, m);
    FilterState f;
    f.mode = FilterMode::Particle;
    f.measure = m;
    if (spec.x0_sd == 0.0) {
        f.x = {spec.x0};
        f.w = {1.0};
        return f;
    }
    std::vector<double> z, w;
    gauss_hermite(16, z, w);
    double tot = 0.0;
    for (double v : w) tot += v;
    for (std::size_t i = 0; i < z.size(); ++i) {
        f.x.push_back(spec.x0 + spec.x0_sd * z[i]);
        f.w.push_back(w[i] / tot);
    }
    return f;
}

}  // namespace

PipelineResult run_pipeline(const ScenarioConfig& cfg, const PipelineOptions& opt) {
    PipelineResult r;
    const auto& spec = cfg.spec;
    const int W = cfg.workers;
    const bool need_paths = opt.until != Stage::Price;

    if (need_paths) {
        auto t0 = Clock::now();
        std::string dump = opt.reuse_dir.empty() ? "" : (fs::path(opt.reuse_dir) / "paths.csv").string();
        if (!dump.empty() && fs::exists(dump) && read_first_line(dump).rfind("# config_hash=" + cfg.hash_hex(), 0) == 0) {
            r.paths = read_paths_csv(dump, spec, cfg.grid, cfg.seed);
        } else {
            r.paths = simulate_paths(spec, cfg.grid, Measure::P, cfg.n_paths, cfg.seed, {}, {}, W);
        }
        r.seconds.emplace_back("simulate", since(t0));
        if (opt.until == Stage::Simulate) return r;

        t0 = Clock::now();
        const std::size_t n = r.paths.size();
        r.filters_P.resize(n);
        r.filters_star.resize(n);
        parallel_for(
            n,
            [&](std::size_t i) {
                r.filters_P[i] = run_filter(spec, r.paths[i], Measure::P, cfg.filter);
                r.filters_star[i] = run_filter(spec, r.paths[i], Measure::Pstar, cfg.filter);
            },
            W);
        r.seconds.emplace_back("filter", since(t0));
        if (opt.until == Stage::Filter) return r;
    }

    auto t0 = Clock::now();
    r.surface = solve_value_surface(spec, cfg.claim, cfg.grid, cfg.pricing);
    r.seconds.emplace_back("price", since(t0));
    if (opt.probes) {
        t0 = Clock::now();
        r.probes = probe_values(cfg, *r.surface);
        r.seconds.emplace_back("probes", since(t0));
    }
    if (opt.until == Stage::Price) return r;

    t0 = Clock::now();
    const std::size_t n = r.paths.size();
    r.coeffs.resize(n);
    r.densities.resize(n);
    r.strategies.resize(n);
    parallel_for(
        n,
        [&](std::size_t i) {
            r.coeffs[i] = compute_structure(spec, r.paths[i], r.filters_P[i]);
            r.densities[i] = mmm_density(spec, r.paths[i], r.coeffs[i]);
            r.strategies[i] = run_hedge(spec, cfg.claim, *r.surface, r.paths[i], r.filters_star[i],
                                        r.filters_P[i], r.coeffs[i]);
        },
        W);
    r.seconds.emplace_back("hedge", since(t0));

    DiagnosticsOptions dopt;
    if (n >= dopt.min_paths) {
        t0 = Clock::now();
        std::vector<HedgeSample> samples(n);
        for (std::size_t i = 0; i < n; ++i)
            samples[i] = {&r.paths[i], &r.strategies[i], &r.filters_P[i], &r.coeffs[i], &r.densities[i]};
        r.report = diagnostics(spec, samples, dopt);
        r.seconds.emplace_back("diagnostics", since(t0));
    }
    return r;
}

void write_dumps(const ScenarioConfig& cfg, const PipelineResult& r, const std::string& dir, bool force) {
    fs::create_directories(dir);
    const auto h = cfg.hash_hex();
    auto file = [&](const char* name) { return (fs::path(dir) / name).string(); };
    const auto& o = cfg.outputs;
    if ((force || o.paths) && !r.paths.empty()) write_paths_csv(file("paths.csv"), h, r.paths);
    if ((force || o.filters) && !r.filters_P.empty())
        write_filters_csv(file("filters.csv"), h, r.filters_P, r.filters_star);
    if ((force || o.surface) && r.surface) write_surface_csv(file("surface.csv"), h, *r.surface);
    if ((force || o.strategies) && !r.strategies.empty())
        write_strategies_csv(file("strategies.csv"), h, r.strategies);
    if ((force || o.structure) && !r.coeffs.empty())
        write_structure_csv(file("structure.csv"), h, r.coeffs, r.densities);
}

namespace {

Json stat_json(const TestStatistic& s) {
    return Json{{"name", s.name}, {"value", s.value}, {"se", s.se}, {"t", s.t}, {"pass", s.pass}};
}

Json mean_se_json(const MeanSe& m) { return Json{{"mean", m.mean}, {"se", m.se}, {"n", m.n}}; }

}  // namespace

Json hedge_report_json(const HedgeReport& rep) {
    Json j;
    j["U0"] = rep.U0;
    j["n_paths"] = rep.n_paths;
    j["cost_change"] = mean_se_json(rep.cost_change);
    j["cost_variance"] = rep.cost_variance;
    Json reg = Json::array();
    for (std::size_t c = 0; c < rep.cost_regression.names.size(); ++c)
        reg.push_back({{"name", rep.cost_regression.names[c]},
                       {"coef", rep.cost_regression.coef[c]},
                       {"se", rep.cost_regression.se[c]},
                       {"t", rep.cost_regression.t[c]}});
    j["cost_regression"] = {{"n", rep.cost_regression.n}, {"terms", reg}, {"dropped", rep.cost_regression.dropped}};
    j["cost_martingale_pass"] = rep.cost_martingale_pass;
    Json orth = Json::array();
    for (const auto& s : rep.orthogonality) orth.push_back(stat_json(s));
    j["orthogonality"] = orth;
    j["orthogonality_pass"] = rep.orthogonality_pass;
    Json proj = Json::array();
    for (const auto& s : rep.projection) proj.push_back(stat_json(s));
    j["projection"] = proj;
    j["projection_pass"] = rep.projection_pass;
    j["projection_abs_gap"] = rep.projection_abs_gap;
    j["var_cost_beta_H"] = rep.var_beta_H;
    j["var_cost_beta_F"] = rep.var_beta_F;
    j["var_cost_zero_hedge"] = rep.var_zero;
    j["variance_reduction"] = stat_json(rep.variance_reduction);
    j["mmm_excluded_fraction"] = rep.mmm_excluded_fraction;
    j["alpha_H_zero_pa"] = rep.alpha_H_zero_pa;
    j["degenerate_nodes"] = rep.degenerate_nodes;
    return j;
}

std::vector<ProbePoint> default_probes(const ScenarioConfig& cfg) {
    std::vector<ProbePoint> out;
    const int N = cfg.grid.n_steps;
    const int nodes[] = {0, N / 4, N / 2, (3 * N) / 4};
    const double rel[] = {0.85, 0.95, 1.0, 1.05, 1.15};
    std::optional<double> x;
    if (!cfg.spec.finite_state()) x = cfg.spec.x0;
    for (int n : nodes)
        for (double r : rel) out.push_back({cfg.grid.t(n), x, cfg.spec.s0 * r});
    return out;
}

Json probe_values(const ScenarioConfig& cfg, const ValueSurface& surface) {
    const auto probes = cfg.probes.empty() ? default_probes(cfg) : cfg.probes;
    Json arr = Json::array();
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto& p = probes[i];
        int node = surface.node_of(p.t);
        double pde;
        if (p.x) {
            pde = surface.value(node, *p.x, p.s);
        } else {
            auto b = start_belief(cfg.spec, Measure::Pstar);
            pde = 0.0;
            for (std::size_t k = 0; k < b.size(); ++k) pde += b.w[k] * surface.value(node, b.x[k], p.s);
        }
        auto mc = feynman_kac_mc(cfg.spec, cfg.claim, cfg.grid.horizon, cfg.grid.n_steps - node, p.t, p.x, p.s,
                                 cfg.probe_mc_paths, cfg.seed + 0x9e3779b97f4a7c15ull * (i + 1), cfg.workers);
        Json j{{"t", p.t}};
        if (p.x)
            j["x"] = *p.x;
        else
            j["x"] = nullptr;
        j["s"] = p.s;
        j["pde"] = pde;
        j["mc"] = mc.estimate;
        j["mc_se"] = mc.se;
        j["mc_paths"] = mc.n;
        arr.push_back(j);
    }
    return arr;
}

Json report_json(const ScenarioConfig& cfg, const PipelineResult& r) {
    Json j;
    j["config_hash"] = cfg.hash_hex();
    j["scenario"] = fs::path(cfg.name).stem().string();
    j["version"] = "pohedge 0.1.0";
    j["seed"] = cfg.seed;
    j["model"] = to_string(cfg.spec.kind);
    j["claim"] = cfg.claim.name();
    j["n_steps"] = cfg.grid.n_steps;
    j["horizon"] = cfg.grid.horizon;

    if (!r.paths.empty()) {
        std::vector<double> sT;
        long long jumps = 0;
        for (const auto& p : r.paths) {
            sT.push_back(p.s.back());
            jumps += static_cast<long long>(p.jump_events.size());
        }
        j["simulate"] = {{"measure", "P"}, {"n_paths", r.paths.size()}, {"S_T", mean_se_json(mean_se(sT))},
                         {"jumps", jumps}};
    }
    if (!r.filters_P.empty()) {
        Json f;
        f["engine"] = cfg.filter.engine == FilterEngine::Exact ? "exact" : "particle";
        if (cfg.filter.engine == FilterEngine::Particle) f["particles"] = cfg.filter.particle.n_particles;
        double max_err = 0.0;
        std::vector<double> mean_P, mean_star;
        for (std::size_t i = 0; i < r.filters_P.size(); ++i) {
            for (const auto* run : {&r.filters_P[i], &r.filters_star[i]})
                for (const auto& st : *run) max_err = std::max(max_err, std::fabs(st.total() - 1.0));
            mean_P.push_back(r.filters_P[i].back().expectation([](double x) { return x; }));
            mean_star.push_back(r.filters_star[i].back().expectation([](double x) { return x; }));
        }
        f["max_total_weight_error"] = max_err;
        f["terminal_mean_x_P"] = mean_se_json(mean_se(mean_P));
        f["terminal_mean_x_Pstar"] = mean_se_json(mean_se(mean_star));
        j["filter"] = f;
    }
    if (r.surface) {
        Json p;
        auto b = start_belief(cfg.spec, Measure::Pstar);
        if (r.surface->in_range(cfg.spec.s0))
            p["value_at_start"] = value_process(*r.surface, b, 0.0, cfg.spec.s0);
        p["s_points"] = r.surface->n_s();
        p["sheets"] = r.surface->n_sheets();
        p["monotonicity_violations"] = r.surface->monotonicity_violations;
        p["fixed_point_iterations_max"] = r.surface->fixed_point_iterations_max;
        if (!r.probes.empty()) p["probes"] = r.probes;
        j["pricing"] = p;
    }
    if (!r.coeffs.empty()) {
        std::vector<double> LT;
        int zero_pa = 0, excluded = 0;
        for (std::size_t i = 0; i < r.coeffs.size(); ++i) {
            LT.push_back(r.densities[i].L.back());
            zero_pa += r.coeffs[i].alpha_H_zero_pa;
            excluded += r.densities[i].excluded ? 1 : 0;
        }
        j["structure"] = {{"L_T", mean_se_json(mean_se(LT))},
                          {"mmm_excluded_fraction", static_cast<double>(excluded) / static_cast<double>(LT.size())},
                          {"alpha_H_zero_pa", zero_pa}};
    }
    if (r.report) {
        j["hedging"] = hedge_report_json(*r.report);
    } else if (!r.strategies.empty()) {
        j["hedging"] = {{"skipped", "diagnostics need at least 100 paths"}};
    }
    return j;
}

// ---------------------------------------------------------------- checks

double tolerance_of(const ScenarioConfig& cfg, const std::string& name, double dflt) {
    auto it = cfg.tolerance.find(name);
    return it == cfg.tolerance.end() ? dflt : it->second;
}

namespace {

struct Context {
    const ScenarioConfig& cfg;
    std::optional<PipelineResult> main;

    const PipelineResult& pipeline() {
        if (!main) main = run_pipeline(cfg);
        return *main;
    }
};

CheckItem item(const std::string& label, double value, double se, double bound, bool pass) {
    return {label, value, se, bound, pass};
}

void finish(CheckResult& r) {
    r.pass = !r.items.empty();
    for (const auto& it : r.items) r.pass = r.pass && it.pass;
}

bool is_black_scholes(const ScenarioConfig& cfg) {
    const auto& s = cfg.spec;
    return s.kind == ModelKind::Diffusion && s.coeff.sigma1.is_constant() &&
           cfg.claim.kind == ClaimSpec::Kind::Call;
}

void require_black_scholes(const ScenarioConfig& cfg) {
    if (!is_black_scholes(cfg))
        throw ConfigError("Black-Scholes checks need a diffusion model with constant sigma1 and a call");
}

CheckResult check_bs_value(Context& ctx) {
    const auto& cfg = ctx.cfg;
    require_black_scholes(cfg);
    CheckResult r;
    const double sig = *cfg.spec.coeff.sigma1.constant_value();
    const double ref = cfg.claim.scale * bs_call(cfg.spec.s0, cfg.claim.strike, sig, cfg.grid.horizon);
    auto surface = solve_value_surface(cfg.spec, cfg.claim, cfg.grid, cfg.pricing);
    auto b = start_belief(cfg.spec, Measure::Pstar);
    double v = value_process(surface, b, 0.0, cfg.spec.s0);
    double tol = tolerance_of(cfg, "bs_value", 5e-3);
    r.items.push_back(item("g(0, s0) - closed form", v - ref, 0.0, tol, std::fabs(v - ref) <= tol));
    std::ostringstream os;
    os << std::setprecision(8) << "surface " << v << ", closed form " << ref;
    r.note = os.str();
    return r;
}

CheckResult check_bs_delta(Context& ctx) {
    const auto& cfg = ctx.cfg;
    require_black_scholes(cfg);
    CheckResult r;
    const double sig = *cfg.spec.coeff.sigma1.constant_value();
    const double ref = cfg.claim.scale * bs_call_delta(cfg.spec.s0, cfg.claim.strike, sig, cfg.grid.horizon);
    const auto& p = ctx.pipeline();
    double b = p.strategies.empty() ? NAN : p.strategies[0].beta_H[0];
    double bf = p.strategies.empty() ? NAN : p.strategies[0].beta_F[0];
    double tol = tolerance_of(cfg, "bs_delta", 5e-3);
    r.items.push_back(item("beta_H(0) - closed-form delta", b - ref, 0.0, tol, std::fabs(b - ref) <= tol));
    r.items.push_back(item("beta_F(0) - closed-form delta", bf - ref, 0.0, tol, std::fabs(bf - ref) <= tol));
    std::ostringstream os;
    os << std::setprecision(8) << "beta_H " << b << ", delta " << ref;
    r.note = os.str();
    return r;
}

CheckResult check_variance_ratio(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    ScenarioConfig fine = cfg;
    fine.grid = TimeGrid(cfg.grid.horizon, 2 * cfg.grid.n_steps);
    const auto& coarse = ctx.pipeline();
    auto f = run_pipeline(fine);
    auto var_of = [](const PipelineResult& p) {
        std::vector<double> c;
        for (const auto& s : p.strategies) c.push_back(s.C.back() - s.C.front());
        return sample_variance(c);
    };
    double v1 = var_of(coarse), v2 = var_of(f);
    double ratio = v1 / v2;
    // each sample variance has relative SE ~ sqrt(2 / (n - 1)) for near-normal costs
    double rel = std::sqrt(2.0 / std::max<double>(1.0, static_cast<double>(cfg.n_paths) - 1.0));
    double se = ratio * std::sqrt(2.0) * rel;
    double tol = tolerance_of(cfg, "variance_ratio", 3.0);
    r.items.push_back(item("Var(C_T) dt / Var(C_T) dt/2", ratio, se, tol, ratio >= tol));
    std::ostringstream os;
    os << std::setprecision(6) << "Var(C_T): " << v1 << " at " << cfg.grid.n_steps << " steps, " << v2 << " at "
       << fine.grid.n_steps;
    r.note = os.str();
    return r;
}

// Joint law of (hidden sequence, observation sequence) by enumeration over
// every signal path and every jump event consistent with the observations.
struct OracleStep {
    double y = 0.0;
    double z = 0.0;
};

// Observed price after a step: continuous return y, then a jump of size z.
double next_price(const ModelSpec& spec, double t, double s, double dt, const OracleStep& o) {
    double sc = s;
    if (spec.has_diffusion_price()) {
        auto c = local_coefficients(spec, t, spec.chain->states[0], s);
        sc = s * std::exp(o.y - 0.5 * c.sigma1 * c.sigma1 * dt);
    }
    return sc * (1.0 + o.z / s);
}

std::vector<std::vector<double>> enumerate_posteriors(const ModelSpec& spec, Measure m, double dt,
                                                      const std::vector<OracleStep>& obs,
                                                      const std::vector<double>& s_path) {
    const std::size_t d = spec.n_states();
    const int K = static_cast<int>(obs.size());
    const Eigen::MatrixXd T = chain_transition(*spec.chain, dt);
    const double tol = pooling_tolerance(spec);
    const bool star = m == Measure::Pstar;

    // per step and state: likelihood of the observation times event kernel into next state
    std::vector<Eigen::MatrixXd> kernel(K, Eigen::MatrixXd::Zero(d, d));
    for (int n = 0; n < K; ++n) {
        const double t = n * dt, s = s_path[n];
        for (std::size_t i = 0; i < d; ++i) {
            const double x = spec.chain->states[i];
            auto ls = local_structure(spec, t, x, s, star);
            double lc = 1.0;
            if (spec.has_diffusion_price()) {
                double b = star ? price_drift(spec, ls, m) / s : ls.c.mu1;
                double r = obs[n].y - b * dt;
                lc = std::exp(-r * r / (2.0 * ls.c.sigma1 * ls.c.sigma1 * dt)) / ls.c.sigma1;
            }
            auto w = jump_weights(spec, ls, m);
            double lam = 0.0;
            for (double v : w) lam += v;
            // event "no jump" and every mark, kept when consistent with z
            for (int j = -1; j < static_cast<int>(w.size()); ++j) {
                double zj = j < 0 ? 0.0 : ls.c.z[j];
                bool ok = obs[n].z == 0.0 ? zj == 0.0 : (zj != 0.0 && std::fabs(zj - obs[n].z) <= tol);
                if (!ok) continue;
                double pe = j < 0 ? 1.0 - lam * dt : w[j] * dt;
                double tgt = j < 0 ? x : jump_target(spec, x, ls.c.k0[j]);
                int from = spec.state_index(tgt);
                for (std::size_t k = 0; k < d; ++k) kernel[n](i, k) += lc * pe * T(from, k);
            }
        }
    }

    std::vector<std::vector<double>> post(K + 1, std::vector<double>(d, 0.0));
    post[0] = spec.chain->prior;
    // all hidden sequences x_0..x_n for each horizon n
    for (int n = 1; n <= K; ++n) {
        std::size_t total = 1;
        for (int k = 0; k <= n; ++k) total *= d;
        std::vector<double> marg(d, 0.0);
        for (std::size_t code = 0; code < total; ++code) {
            std::size_t c = code;
            std::vector<std::size_t> seq(n + 1);
            for (int k = 0; k <= n; ++k) {
                seq[k] = c % d;
                c /= d;
            }
            double p = spec.chain->prior[seq[0]];
            for (int k = 0; k < n; ++k) p *= kernel[k](seq[k], seq[k + 1]);
            marg[seq[n]] += p;
        }
        double tot = 0.0;
        for (double v : marg) tot += v;
        for (std::size_t k = 0; k < d; ++k) post[n][k] = marg[k] / tot;
    }
    return post;
}

CheckResult check_filter_oracle(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& spec = cfg.spec;
    if (!spec.finite_state()) throw ConfigError("filter oracle needs a finite-state signal");
    CheckResult r;
    const int K = 3;
    const double dt = cfg.grid.dt();
    double tol = tolerance_of(cfg, "filter_oracle", 1e-10);

    // binary continuous outcome and binary jump outcome per step
    std::vector<double> ys;
    if (spec.has_diffusion_price()) {
        auto c = local_coefficients(spec, 0.0, spec.chain->states[0], spec.s0);
        ys = {-c.sigma1 * std::sqrt(dt), 0.5 * c.sigma1 * std::sqrt(dt)};
    } else {
        ys = {0.0};
    }
    int visible = -1;
    if (spec.has_jumps()) {
        auto c = local_coefficients(spec, 0.0, spec.chain->states[0], spec.s0);
        for (std::size_t j = 0; j < c.z.size() && visible < 0; ++j)
            if (c.z[j] != 0.0) visible = static_cast<int>(j);
    }
    const int n_jump = visible >= 0 ? 2 : 1;
    const int per_step = static_cast<int>(ys.size()) * n_jump;
    int n_seq = 1;
    for (int k = 0; k < K; ++k) n_seq *= per_step;

    for (Measure m : {Measure::P, Measure::Pstar}) {
        double worst = 0.0;
        for (int code = 0; code < n_seq; ++code) {
            int c = code;
            std::vector<OracleStep> obs(K);
            std::vector<double> s_path(K + 1, spec.s0);
            for (int k = 0; k < K; ++k) {
                int o = c % per_step;
                c /= per_step;
                obs[k].y = ys[o % ys.size()];
                // jump sizes scale with the observed price
                if (o / static_cast<int>(ys.size()))
                    obs[k].z = local_coefficients(spec, k * dt, spec.chain->states[0], s_path[k]).z[visible];
                s_path[k + 1] = next_price(spec, k * dt, s_path[k], dt, obs[k]);
            }
            auto post = enumerate_posteriors(spec, m, dt, obs, s_path);

            FilterState f = prior_filter(spec, m);
            for (int k = 0; k < K; ++k) {
                Observation o{k * dt, s_path[k], dt, obs[k].y, obs[k].z};
                f = exact_filter_step(spec, f, o);
                for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::fabs(f.w[i] - post[k + 1][i]));
            }
        }
        r.items.push_back(item(std::string("max |filter - enumeration| under ") + to_string(m) + ", " +
                                   std::to_string(n_seq) + " sequences",
                               worst, 0.0, tol, worst <= tol));
    }
    return r;
}

ScalarField test_field(const std::string& text, const ModelSpec& spec) {
    return ScalarField::from_expression(Expression::parse(text, {{"s0", spec.s0}}));
}

CheckResult check_martingale(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& spec = cfg.spec;
    CheckResult r;
    const double k = tolerance_of(cfg, "martingale", 4.0);
    const double dt = cfg.grid.dt();
    const int W = cfg.workers;

    // P side: density and generator drifts along the pipeline's P paths
    const auto& p = ctx.pipeline();
    std::vector<double> LT;
    for (const auto& d : p.densities) LT.push_back(d.L.back());
    auto m = mean_se(LT);
    r.items.push_back(item("E[L_T] - 1", m.mean - 1.0, m.se, k * m.se, std::fabs(m.mean - 1.0) <= k * m.se));

    const std::vector<std::string> fns = {"s/s0", "(s/s0)^2", "x*s/s0", "x"};
    auto drift_items = [&](const std::vector<PathSample>& paths, Measure meas) {
        for (const auto& text : fns) {
            auto f = test_field(text, spec);
            std::vector<double> M(paths.size());
            parallel_for(
                paths.size(),
                [&](std::size_t i) {
                    const auto& ph = paths[i];
                    double acc = f.value(ph.time(ph.n_steps()), ph.x.back(), ph.s.back()) - f.value(0.0, ph.x[0], ph.s[0]);
                    for (int n = 0; n < ph.n_steps(); ++n)
                        acc -= apply_generator(spec, meas, f, ph.time(n), ph.x[n], ph.s[n]) * dt;
                    M[i] = acc;
                },
                W);
            auto ms = mean_se(M);
            r.items.push_back(item(std::string("E[f_T - f_0 - sum Af dt] under ") + to_string(meas) + ", f = " + text,
                                   ms.mean, ms.se, k * ms.se, std::fabs(ms.mean) <= k * ms.se));
        }
    };
    drift_items(p.paths, Measure::P);

    auto star = simulate_paths(spec, cfg.grid, Measure::Pstar, cfg.n_paths, cfg.seed, {}, {}, W);
    std::vector<double> sT;
    for (const auto& ph : star) sT.push_back(ph.s.back());
    auto ms = mean_se(sT);
    r.items.push_back(item("E*[S_T] - s0", ms.mean - spec.s0, ms.se, k * ms.se,
                           std::fabs(ms.mean - spec.s0) <= k * ms.se));
    drift_items(star, Measure::Pstar);

    double worst = 0.0;
    for (std::size_t i = 0; i < p.filters_P.size(); ++i)
        for (const auto* run : {&p.filters_P[i], &p.filters_star[i]})
            for (const auto& st : *run) worst = std::max(worst, std::fabs(st.total() - 1.0));
    double tol1 = tolerance_of(cfg, "filter_total", 1e-12);
    r.items.push_back(item("max |pi_t(1) - 1|", worst, 0.0, tol1, worst <= tol1));
    return r;
}

CheckResult check_pde_mc(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    const double k = tolerance_of(cfg, "pde_mc", 3.0);
    const double floor = tolerance_of(cfg, "pde_mc_floor", 5e-3) * cfg.spec.s0;
    auto surface = solve_value_surface(cfg.spec, cfg.claim, cfg.grid, cfg.pricing);
    auto probes = probe_values(cfg, surface);
    for (const auto& p : probes) {
        double diff = p["pde"].get<double>() - p["mc"].get<double>();
        double se = p["mc_se"].get<double>();
        double bound = std::max(k * se, floor);
        std::ostringstream os;
        os << "probe t=" << p["t"].get<double>() << " s=" << p["s"].get<double>();
        if (!p["x"].is_null()) os << " x=" << p["x"].get<double>();
        r.items.push_back(item(os.str(), diff, se, bound, std::fabs(diff) <= bound));
    }
    return r;
}

const HedgeReport& require_report(Context& ctx) {
    const auto& p = ctx.pipeline();
    if (!p.report) throw SampleSizeError("hedge diagnostics need at least 100 paths");
    return *p.report;
}

CheckResult check_projection(Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (cfg.spec.has_jumps()) throw ConfigError("projection identity check is for models without jumps");
    CheckResult r;
    const auto& rep = require_report(ctx);
    const double k = tolerance_of(cfg, "projection", 4.0);
    const double floor = 1e-12;
    for (const auto& s : rep.projection) {
        double bound = std::max(k * s.se, floor);
        r.items.push_back(item("E*[(beta_H - beta_F) psi], psi = " + s.name, s.value, s.se, bound,
                               std::fabs(s.value) <= bound));
    }
    std::ostringstream os;
    os << "L-weighted regression gap " << rep.projection_abs_gap;
    r.note = os.str();
    return r;
}

CheckResult check_cost_regression(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    const auto& rep = require_report(ctx);
    const double k = tolerance_of(cfg, "cost_regression", 4.0);
    const auto& reg = rep.cost_regression;
    for (std::size_t c = 0; c < reg.names.size(); ++c)
        r.items.push_back(item("t-stat of dC on " + reg.names[c], reg.t[c], reg.se[c], k, std::fabs(reg.t[c]) <= k));
    if (!reg.dropped.empty()) {
        std::string d;
        for (const auto& n : reg.dropped) d += (d.empty() ? "" : ", ") + n;
        r.note = "constant regressors dropped: " + d;
    }
    return r;
}

CheckResult check_orthogonality(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    const auto& rep = require_report(ctx);
    const double k = tolerance_of(cfg, "orthogonality", 4.0);
    for (const auto& s : rep.orthogonality)
        r.items.push_back(item("E[A_T sum phi dN], phi = " + s.name, s.value, s.se, k * s.se,
                               std::fabs(s.value) <= k * s.se));
    return r;
}

CheckResult check_variance_reduction(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    const auto& rep = require_report(ctx);
    const double k = tolerance_of(cfg, "variance_reduction", 4.0);
    const auto& s = rep.variance_reduction;
    r.items.push_back(item("Var(zero hedge) - Var(beta_H hedge)", s.value, s.se, k * s.se, s.value > k * s.se));
    std::ostringstream os;
    os << "Var beta_H " << rep.var_beta_H << ", beta_F " << rep.var_beta_F << ", zero " << rep.var_zero;
    r.note = os.str();
    return r;
}

CheckResult check_finite_report(Context& ctx) {
    CheckResult r;
    const auto& p = ctx.pipeline();
    if (!p.report) throw SampleSizeError("hedge diagnostics need at least 100 paths");
    std::size_t bad = 0, total = 0;
    std::function<void(const Json&)> walk = [&](const Json& j) {
        if (j.is_number()) {
            ++total;
            if (!std::isfinite(j.get<double>())) ++bad;
        } else if (j.is_null()) {
            ++total;
            ++bad;
        } else if (j.is_structured()) {
            for (const auto& v : j) walk(v);
        }
    };
    walk(hedge_report_json(*p.report));
    r.items.push_back(item("non-finite hedging statistics", static_cast<double>(bad), 0.0, 0.0, bad == 0));
    r.note = std::to_string(total) + " statistics";
    return r;
}

// Random single-step pure-jump instances with observable coefficients.
// The enumerated cost increment of each outcome is measured against the
// no-jump continuation, whose probability mass carries no price move.
CheckResult check_brute_force(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    const double tol = tolerance_of(cfg, "brute_force", 1e-10);
    RngStream rng(cfg.seed, StreamId::Oracle, 0);
    int made = 0;
    double worst = 0.0;
    std::string worst_note;
    for (int attempt = 0; made < 25 && attempt < 1000; ++attempt) {
        ModelSpec spec;
        spec.kind = ModelKind::PureJump;
        spec.s0 = 50.0 + 100.0 * rng.uniform();
        spec.coeff.mu0 = spec.coeff.sigma0 = spec.coeff.mu1 = spec.coeff.sigma1 = Expression::constant(0.0);
        SignalChain ch;
        ch.states = {0.0, 1.0};
        double q01 = 0.1 + rng.uniform(), q10 = 0.1 + rng.uniform();
        ch.generator = Eigen::MatrixXd(2, 2);
        ch.generator << -q01, q01, q10, -q10;
        double p0 = 0.1 + 0.8 * rng.uniform();
        ch.prior = {p0, 1.0 - p0};
        spec.chain = ch;
        spec.x0 = 0.0;
        const int m = 1 + static_cast<int>(rng.uniform() * 3.0);
        for (int j = 0; j < m; ++j) {
            spec.marks.zeta.push_back(j + 1.0);
            spec.marks.eta.push_back(0.2 + 1.3 * rng.uniform());
            double k1 = (0.02 + 0.28 * rng.uniform()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            spec.coeff.K1.push_back(Expression::constant(k1));
            spec.coeff.K0.push_back(Expression::constant(0.0));
        }
        const double T = 0.02 + 0.3 * rng.uniform();
        if (spec.marks.total_intensity() * T > 1.0) continue;
        double strike = spec.s0 * (0.8 + 0.4 * rng.uniform());
        ClaimSpec claim = rng.uniform() < 0.5 ? ClaimSpec::digital(strike) : ClaimSpec::call(strike);
        try {
            local_structure(spec, 0.0, 0.0, spec.s0, true);
        } catch (const MeasureSignError&) {
            continue;  // no equivalent martingale measure for this draw
        }
        if (!validate_spec(spec).empty()) continue;
        TimeGrid grid(T, 1);
        PricingGrids pg;
        pg.s_points = 101;
        pg.substeps = 2;
        auto surface = solve_value_surface(spec, claim, grid, pg);
        auto fs = prior_filter(spec, Measure::Pstar), fp = prior_filter(spec, Measure::P);
        auto st = strategy_at(spec, surface, 0, spec.s0, fs, fp);

        // enumerate: no jump, or one jump of mark j
        auto c = local_coefficients(spec, 0.0, 0.0, spec.s0);
        double A = 0.0, B = 0.0;
        const double ref = claim.payoff(T, spec.s0);
        for (int j = 0; j < m; ++j) {
            double pj = spec.marks.eta[j] * T;
            double dS = c.z[j];
            double dV = claim.payoff(T, spec.s0 + dS) - ref;
            A += pj * dS * dS;
            B += pj * dS * dV;
        }
        double theta = B / A;
        double err = std::fabs(st.beta - theta);
        if (err > worst) {
            worst = err;
            std::ostringstream os;
            os << std::setprecision(12) << "worst instance " << made << ": beta_H " << st.beta << ", minimizer "
               << theta;
            worst_note = os.str();
        }
        ++made;
    }
    r.items.push_back(item(std::to_string(made) + " instances, max |beta_H - argmin|", worst, 0.0, tol,
                           made == 25 && worst <= tol));
    r.note = worst_note;
    return r;
}

CheckResult check_particle_tv(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& spec = cfg.spec;
    if (!spec.finite_state()) throw ConfigError("particle convergence check needs a finite-state signal");
    CheckResult r;
    const int n_paths = static_cast<int>(tolerance_of(cfg, "particle_tv_paths", 16));
    const double bound = tolerance_of(cfg, "particle_tv", 0.02);
    const int sizes[] = {100, 1000, 10000};
    auto paths = simulate_paths(spec, cfg.grid, Measure::P, n_paths, cfg.seed, {}, {}, cfg.workers);
    std::vector<std::vector<double>> tv(3, std::vector<double>(paths.size(), 0.0));
    parallel_for(
        paths.size(),
        [&](std::size_t i) {
            FilterRunOptions ex;
            auto exact = run_filter(spec, paths[i], Measure::P, ex);
            for (int a = 0; a < 3; ++a) {
                FilterRunOptions po;
                po.engine = FilterEngine::Particle;
                po.particle.n_particles = sizes[a];
                po.particle.ess_threshold = cfg.filter.particle.ess_threshold;
                po.seed = cfg.seed + 17u * static_cast<std::uint64_t>(a + 1);
                auto part = run_filter(spec, paths[i], Measure::P, po);
                double acc = 0.0;
                for (std::size_t n = 0; n < exact.size(); ++n)
                    acc += tv_distance(part[n].state_law(spec), exact[n].w);
                tv[a][i] = acc / static_cast<double>(exact.size());
            }
        },
        cfg.workers);
    std::vector<MeanSe> m;
    for (int a = 0; a < 3; ++a) {
        m.push_back(mean_se(tv[a]));
        r.items.push_back(item("mean TV to exact filter, N = " + std::to_string(sizes[a]), m[a].mean, m[a].se,
                               a == 2 ? bound : 1.0, a == 2 ? m[a].mean < bound : true));
    }
    for (int a = 0; a + 1 < 3; ++a) {
        double noise = 2.0 * std::sqrt(m[a].se * m[a].se + m[a + 1].se * m[a + 1].se);
        double rise = m[a + 1].mean - m[a].mean;
        r.items.push_back(item("TV rise from N = " + std::to_string(sizes[a]) + " to " + std::to_string(sizes[a + 1]),
                               rise, noise, noise, rise <= noise));
    }
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CheckResult check_determinism(Context& ctx) {
    const auto& cfg = ctx.cfg;
    CheckResult r;
    const int workers[] = {1, 2, 8};
    auto base = fs::temp_directory_path() /
                ("pohedge_det_" + cfg.hash_hex() + "_" + std::to_string(std::hash<std::string>{}(cfg.name) & 0xffff));
    std::vector<fs::path> dirs;
    for (int w : workers) {
        ScenarioConfig c = cfg;
        c.workers = w;
        auto dir = base / ("w" + std::to_string(w));
        fs::remove_all(dir);
        PipelineOptions opt;
        opt.probes = true;
        auto res = run_pipeline(c, opt);
        write_dumps(c, res, dir.string(), true);
        write_json((dir / "report.json").string(), report_json(c, res));
        dirs.push_back(dir);
    }
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dirs[0])) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) {
        auto ref = slurp(dirs[0] / n);
        bool same = true;
        for (std::size_t k = 1; k < dirs.size(); ++k) same = same && fs::exists(dirs[k] / n) && slurp(dirs[k] / n) == ref;
        r.items.push_back(item(n + " identical under 1, 2, 8 workers", static_cast<double>(ref.size()), 0.0, 0.0, same));
    }
    fs::remove_all(base);
    return r;
}

using CheckFn = CheckResult (*)(Context&);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
    static const std::vector<std::pair<std::string, CheckFn>> r = {
        {"bs_value", check_bs_value},
        {"bs_delta", check_bs_delta},
        {"variance_ratio", check_variance_ratio},
        {"filter_oracle", check_filter_oracle},
        {"martingale", check_martingale},
        {"pde_mc", check_pde_mc},
        {"projection", check_projection},
        {"cost_regression", check_cost_regression},
        {"orthogonality", check_orthogonality},
        {"variance_reduction", check_variance_reduction},
        {"finite_report", check_finite_report},
        {"brute_force", check_brute_force},
        {"particle_tv", check_particle_tv},
        {"determinism", check_determinism},
    };
    return r;
}

CheckResult run_named(const std::string& name, Context& ctx) {
    for (const auto& [n, fn] : registry()) {
        if (n != name) continue;
        auto t0 = Clock::now();
        CheckResult r = fn(ctx);
        r.name = name;
        finish(r);
        r.seconds = since(t0);
        return r;
    }
    throw ConfigError("unknown check '" + name + "'");
}

}  // namespace

std::vector<std::string> available_checks() {
    std::vector<std::string> v;
    for (const auto& [n, fn] : registry()) v.push_back(n);
    return v;
}

std::vector<std::string> default_checks(const ScenarioConfig& cfg) {
    if (!cfg.checks.empty()) return cfg.checks;
    std::vector<std::string> v;
    if (is_black_scholes(cfg)) v.insert(v.end(), {"bs_value", "bs_delta", "variance_ratio"});
    if (cfg.spec.finite_state()) v.push_back("filter_oracle");
    v.insert(v.end(), {"martingale", "pde_mc"});
    if (!cfg.spec.has_jumps()) v.push_back("projection");
    v.insert(v.end(), {"cost_regression", "orthogonality", "finite_report"});
    return v;
}

CheckResult run_check(const std::string& name, const ScenarioConfig& cfg) {
    Context ctx{cfg, std::nullopt};
    return run_named(name, ctx);
}

VerifyResult verify(const ScenarioConfig& cfg, const std::vector<std::string>& names) {
    Context ctx{cfg, std::nullopt};
    VerifyResult v;
    for (const auto& n : names.empty() ? default_checks(cfg) : names) {
        v.checks.push_back(run_named(n, ctx));
        v.pass = v.pass && v.checks.back().pass;
    }
    return v;
}

Json verify_json(const ScenarioConfig& cfg, const VerifyResult& v) {
    Json j;
    j["config_hash"] = cfg.hash_hex();
    j["scenario"] = fs::path(cfg.name).stem().string();
    j["pass"] = v.pass;
    Json arr = Json::array();
    for (const auto& c : v.checks) {
        Json items = Json::array();
        for (const auto& it : c.items)
            items.push_back({{"label", it.label}, {"value", it.value}, {"se", it.se}, {"bound", it.bound}, {"pass", it.pass}});
        Json cj{{"name", c.name}, {"pass", c.pass}, {"items", items}};
        if (!c.note.empty()) cj["note"] = c.note;
        arr.push_back(cj);
    }
    j["checks"] = arr;
    return j;
}

std::string verify_table(const VerifyResult& v) {
    std::ostringstream os;
    for (const auto& c : v.checks) {
        os << (c.pass ? "PASS " : "FAIL ") << c.name << "  (" << std::fixed << std::setprecision(2) << c.seconds
           << " s)\n";
        os.unsetf(std::ios::fixed);
        for (const auto& it : c.items) {
            os << "    " << (it.pass ? "ok  " : "BAD ") << it.label << ": " << std::setprecision(6) << it.value;
            if (it.se > 0.0) os << " (se " << it.se << ")";
            os << ", bound " << it.bound << "\n";
        }
        if (!c.note.empty()) os << "    " << c.note << "\n";
    }
    os << (v.pass ? "all checks passed" : "some checks failed") << "\n";
    return os.str();
}

}  // namespace pohedge
