#include "pohedge/hedging.hpp"

#include <cmath>
#include <sstream>

#include "pohedge/errors.hpp"

namespace pohedge {

NodeStrategy strategy_from_terms(const StrategyTerms& T) {
    NodeStrategy r;
    const double s2 = T.s * T.s * T.sigma1 * T.sigma1;
    double num = T.s * T.sigma1 * T.h, den = s2;
    for (std::size_t a = 0; a < T.nu_star.z.size(); ++a) {
        const double z = T.nu_star.z[a], nu = T.nu_star.w[a];
        num += z * T.w_star[a] * nu;
        den += z * z * nu;
    }
    double den_H = s2;
    for (std::size_t a = 0; a < T.nu_H.z.size(); ++a) den_H += T.nu_H.z[a] * T.nu_H.z[a] * T.nu_H.w[a];
    if (!(den > 0.0) && !(den_H > 0.0)) {
        r.degenerate = true;
        return r;
    }
    if (T.nu_star.z.empty() && T.nu_H.z.empty()) {
        r.beta_tilde = T.h / (T.s * T.sigma1);
        r.beta = r.beta_tilde;
        return r;
    }
    r.beta_tilde = den > 0.0 ? num / den : 0.0;
    if (den_H > 0.0 && T.alpha_H != 0.0) {
        double acc = 0.0;
        for (std::size_t a = 0; a < T.nu_H.z.size(); ++a) {
            const double z = T.nu_H.z[a];
            acc += z * z * (T.w_H[a] - r.beta_tilde * z) * T.nu_H.w[a];
        }
        r.phi = T.alpha_H * acc / den_H;
    }
    r.beta = r.beta_tilde + r.phi;
    return r;
}

namespace {

struct AtomSums {
    double w_star = 0.0, wg_star = 0.0;  // tilted weight, tilted weight x post-jump value
    double w = 0.0, wg = 0.0;            // untilted
};

}  // namespace

StrategyTerms strategy_terms(const ModelSpec& spec, const ValueSurface& surface, int n, double s,
                             const FilterState& fs, const FilterState& fp) {
    fs.check_normalized();
    fp.check_normalized();
    const double t = surface.t0 + surface.grid.t(n);
    StrategyTerms T;
    T.s = s;
    const double rho = spec.coeff.rho;
    double sig = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const double p = fs.w[i];
        if (p == 0.0) continue;
        auto c = local_coefficients(spec, t, fs.x[i], s);
        if (spec.has_diffusion_price()) {
            double term = s * c.sigma1 * surface.ds(n, fs.x[i], s);
            if (rho != 0.0 && !spec.finite_state()) term += rho * c.sigma0 * surface.dx(n, fs.x[i], s);
            T.h += p * term;
            sig += p * c.sigma1;
        }
    }
    T.sigma1 = sig;
    if (!spec.has_jumps()) return T;

    const double tol = pooling_tolerance(spec);
    AtomPool pool(tol);
    std::vector<double> val_star, wt_star, wt_free;
    double base = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        const double p = fs.w[i];
        if (p == 0.0) continue;
        base += p * surface.value(n + 1, fs.x[i], s);
        auto ls = local_structure(spec, t, fs.x[i], s, true);
        const auto& c = ls.c;
        for (std::size_t j = 0; j < c.z.size(); ++j) {
            if (c.z[j] == 0.0) continue;
            double xt = jump_target(spec, fs.x[i], c.k0[j]);
            pool.add(c.z[j], p * ls.eta_star[j]);
            val_star.push_back(surface.value(n + 1, xt, s * (1.0 + c.k1[j])));
            wt_star.push_back(p * ls.eta_star[j]);
            wt_free.push_back(p * spec.marks.eta[j]);
        }
    }
    pool.finalize();
    std::vector<AtomSums> sums(pool.size());
    for (std::size_t q = 0; q < val_star.size(); ++q) {
        auto& a = sums[pool.atom_of(q)];
        a.w_star += wt_star[q];
        a.wg_star += wt_star[q] * val_star[q];
        a.w += wt_free[q];
        a.wg += wt_free[q] * val_star[q];
    }
    auto w_of = [&](const AtomSums& a) {
        if (a.w_star > 0.0) return a.wg_star / a.w_star - base;
        if (a.w > 0.0) return a.wg / a.w - base;
        return 0.0;
    };
    T.nu_star = {pool.atoms(), pool.weights()};
    T.w_star.resize(pool.size());
    for (std::size_t a = 0; a < pool.size(); ++a) T.w_star[a] = w_of(sums[a]);

    // P-side atoms; the jump response is read from the P*-belief where it
    // charges the atom, else from the P-belief.
    AtomPool pool_H(tol);
    std::vector<double> val_H, wt_H;
    for (std::size_t i = 0; i < fp.size(); ++i) {
        const double p = fp.w[i];
        if (p == 0.0) continue;
        auto c = local_coefficients(spec, t, fp.x[i], s);
        for (std::size_t j = 0; j < c.z.size(); ++j) {
            if (c.z[j] == 0.0) continue;
            pool_H.add(c.z[j], p * spec.marks.eta[j]);
            val_H.push_back(surface.value(n + 1, jump_target(spec, fp.x[i], c.k0[j]), s * (1.0 + c.k1[j])));
            wt_H.push_back(p * spec.marks.eta[j]);
        }
    }
    pool_H.finalize();
    T.nu_H = {pool_H.atoms(), pool_H.weights()};
    std::vector<AtomSums> sums_H(pool_H.size());
    for (std::size_t q = 0; q < val_H.size(); ++q) {
        auto& a = sums_H[pool_H.atom_of(q)];
        a.w += wt_H[q];
        a.wg += wt_H[q] * val_H[q];
    }
    T.w_H.resize(pool_H.size());
    for (std::size_t a = 0; a < pool_H.size(); ++a) {
        int k = pool.find(pool_H.z(a));
        if (k >= 0 && (sums[k].w_star > 0.0 || sums[k].w > 0.0))
            T.w_H[a] = T.w_star[k];
        else
            T.w_H[a] = sums_H[a].w > 0.0 ? sums_H[a].wg / sums_H[a].w - base : 0.0;
    }
    T.alpha_H = alpha_H_at(spec, fp, t, s);
    return T;
}

NodeStrategy strategy_at(const ModelSpec& spec, const ValueSurface& surface, int n, double s,
                         const FilterState& filter_star, const FilterState& filter_P) {
    return strategy_from_terms(strategy_terms(spec, surface, n, s, filter_star, filter_P));
}

FilterState dirac_filter(const ModelSpec& spec, Measure m, double t, double x) {
    FilterState f;
    f.measure = m;
    f.t = t;
    if (spec.finite_state()) {
        int k = spec.state_index(x);
        if (k < 0) throw FilterStateError("Dirac belief off the chain state set");
        f.mode = FilterMode::FiniteState;
        f.x = spec.chain->states;
        f.w.assign(f.x.size(), 0.0);
        f.w[k] = 1.0;
    } else {
        f.mode = FilterMode::Particle;
        f.x = {x};
        f.w = {1.0};
    }
    return f;
}

std::vector<double> beta_F_path(const ModelSpec& spec, const ValueSurface& surface, const PathSample& path) {
    const int N = path.n_steps();
    std::vector<double> beta(N, 0.0);
    double prev = 0.0;
    for (int n = 0; n < N; ++n) {
        auto d = dirac_filter(spec, Measure::Pstar, path.time(n), path.x[n]);
        auto dp = d;
        dp.measure = Measure::P;
        auto r = strategy_at(spec, surface, n, path.s[n], d, dp);
        beta[n] = r.degenerate ? prev : r.beta;
        prev = beta[n];
    }
    return beta;
}

StrategyPath run_hedge(const ModelSpec& spec, const ClaimSpec& claim, const ValueSurface& surface,
                       const PathSample& path, const std::vector<FilterState>& filters_star,
                       const std::vector<FilterState>& filters_P, const StructureCoefficients& coeffs) {
    const int N = path.n_steps();
    if (static_cast<int>(filters_star.size()) < N + 1 || static_cast<int>(filters_P.size()) < N + 1)
        throw FilterStateError("hedging needs a filter at every node");
    StrategyPath sp;
    sp.t.resize(N + 1);
    sp.s = path.s;
    sp.alpha_F = coeffs.alpha_F;
    sp.alpha_H = coeffs.alpha_H;
    sp.beta_F = beta_F_path(spec, surface, path);
    sp.beta_tilde_H.resize(N);
    sp.phi_H.resize(N);
    sp.beta_H.resize(N);
    sp.V.resize(N + 1);
    sp.C.resize(N + 1);
    sp.eta_star.resize(N + 1);
    sp.A_increment.resize(N);
    double prev = 0.0;
    for (int n = 0; n <= N; ++n) {
        sp.t[n] = path.time(n);
        try {
            sp.V[n] = n == N ? claim.payoff(path.time(N), path.s[N])
                             : value_process(surface, filters_star[n], sp.t[n], path.s[n]);
            if (n == N) break;
            auto r = strategy_at(spec, surface, n, path.s[n], filters_star[n], filters_P[n]);
            if (r.degenerate) {
                ++sp.degenerate_nodes;
                r.beta = prev;
            }
            sp.beta_tilde_H[n] = r.beta_tilde;
            sp.phi_H[n] = r.phi;
            sp.beta_H[n] = r.beta;
            prev = r.beta;
        } catch (const NumericalError& e) {
            std::ostringstream os;
            os << e.what() << " [path " << path.path_index << ", node " << n << "]";
            throw NumericalError(e.kind(), os.str());
        }
    }
    sp.C[0] = sp.V[0];
    for (int n = 0; n < N; ++n) {
        double dC = (sp.V[n + 1] - sp.V[n]) - sp.beta_H[n] * (path.s[n + 1] - path.s[n]);
        sp.A_increment[n] = dC;
        sp.C[n + 1] = sp.C[n] + dC;
        sp.eta_star[n] = sp.V[n] - sp.beta_H[n] * path.s[n];
    }
    sp.eta_star[N] = sp.V[N] - (N > 0 ? sp.beta_H[N - 1] : 0.0) * path.s[N];
    return sp;
}

std::vector<std::string> test_function_names(const ModelSpec& spec) {
    std::vector<std::string> v{"one", "s_over_s0"};
    if (spec.finite_state()) {
        for (std::size_t k = 0; k + 1 < spec.n_states(); ++k) v.push_back("pi_P_" + std::to_string(k));
    } else {
        v.push_back("pi_P_mean_x");
    }
    return v;
}

std::vector<double> test_functions(const ModelSpec& spec, double s, const FilterState& fp) {
    std::vector<double> v{1.0, s / spec.s0};
    if (spec.finite_state()) {
        auto law = fp.state_law(spec);
        for (std::size_t k = 0; k + 1 < law.size(); ++k) v.push_back(law[k]);
    } else {
        v.push_back(fp.expectation([](double x) { return x; }));
    }
    return v;
}

namespace {

TestStatistic make_stat(const std::string& name, const MeanSe& m, double t_max, double floor = 0.0) {
    TestStatistic st;
    st.name = name;
    st.value = m.mean;
    st.se = m.se;
    st.t = m.se > 0.0 ? m.mean / m.se : (m.mean == 0.0 ? 0.0 : std::copysign(HUGE_VAL, m.mean));
    st.pass = std::fabs(m.mean) <= std::max(t_max * m.se, floor);
    return st;
}

}  // namespace

HedgeReport diagnostics(const ModelSpec& spec, const std::vector<HedgeSample>& samples,
                        const DiagnosticsOptions& opt) {
    if (samples.size() < opt.min_paths) {
        std::ostringstream os;
        os << "diagnostics need at least " << opt.min_paths << " paths, got " << samples.size();
        throw SampleSizeError(os.str());
    }
    HedgeReport R;
    R.n_paths = samples.size();
    R.U0 = samples[0].strategy->V[0];
    const auto names = test_function_names(spec);
    const std::size_t P = names.size();

    std::vector<double> cost, cost_H, cost_F, cost_0;
    std::vector<std::vector<double>> cols(P);
    std::vector<double> dC;
    std::vector<std::vector<double>> orth(P), proj(P);
    std::vector<std::vector<double>> wcols(P);
    std::vector<double> wy, proj_weight, proj_beta_H;
    std::vector<std::vector<double>> proj_psi;
    std::size_t excluded = 0;
    const bool continuous_model = !spec.has_jumps();

    for (const auto& smp : samples) {
        const auto& path = *smp.path;
        const auto& sp = *smp.strategy;
        const auto& fP = *smp.filters_P;
        const int N = path.n_steps();
        const double dt = path.grid.dt();
        const double H = sp.V[N];
        cost.push_back(sp.C[N] - sp.C[0]);
        double gH = 0.0, gF = 0.0;
        std::vector<double> int_phi_dN(P, 0.0), proj_acc(P, 0.0);
        const bool excl = smp.density && smp.density->excluded;
        if (excl) ++excluded;
        for (int n = 0; n < N; ++n) {
            const double s = path.s[n], dS = path.s[n + 1] - path.s[n];
            gH += sp.beta_H[n] * dS;
            gF += sp.beta_F[n] * dS;
            auto psi = test_functions(spec, s, fP[n]);
            for (std::size_t c = 0; c < P; ++c) cols[c].push_back(psi[c]);
            dC.push_back(sp.A_increment[n]);

            double comp = 0.0;  // E[dS | H] / dt under P
            for (std::size_t i = 0; i < fP[n].size(); ++i) {
                if (fP[n].w[i] == 0.0) continue;
                comp += fP[n].w[i] * local_structure(spec, path.time(n), fP[n].x[i], s, false).drift;
            }
            const double dN = dS - comp * dt;
            for (std::size_t c = 0; c < P; ++c) int_phi_dN[c] += psi[c] * dN;

            if (continuous_model && smp.density && !excl) {
                const double L = smp.density->L[n];
                const double gap = sp.beta_H[n] - sp.beta_F[n];
                for (std::size_t c = 0; c < P; ++c) proj_acc[c] += L * gap * psi[c] / N;
                const double sq = std::sqrt(L);
                for (std::size_t c = 0; c < P; ++c) wcols[c].push_back(sq * psi[c]);
                wy.push_back(sq * sp.beta_F[n]);
                proj_weight.push_back(L);
                proj_beta_H.push_back(sp.beta_H[n]);
                proj_psi.push_back(psi);
            }
        }
        const double A_T = sp.C[N] - sp.C[0];
        for (std::size_t c = 0; c < P; ++c) orth[c].push_back(A_T * int_phi_dN[c]);
        if (continuous_model && smp.density && !excl)
            for (std::size_t c = 0; c < P; ++c) proj[c].push_back(proj_acc[c]);
        cost_H.push_back(H - gH);
        cost_F.push_back(H - gF);
        cost_0.push_back(H);
        R.alpha_H_zero_pa += smp.coeffs ? smp.coeffs->alpha_H_zero_pa : 0;
        R.degenerate_nodes += sp.degenerate_nodes;
    }

    R.cost_change = mean_se(cost);
    R.cost_variance = sample_variance(cost);
    R.cost_regression = ols_hc0(cols, dC, names);
    R.cost_martingale_pass = true;
    for (double t : R.cost_regression.t)
        if (!(std::fabs(t) <= opt.t_max)) R.cost_martingale_pass = false;

    for (std::size_t c = 0; c < P; ++c) {
        R.orthogonality.push_back(make_stat(names[c], mean_se(orth[c]), opt.t_max));
        if (!R.orthogonality.back().pass) R.orthogonality_pass = false;
    }

    if (continuous_model && !proj[0].empty()) {
        for (std::size_t c = 0; c < P; ++c) {
            R.projection.push_back(make_stat(names[c], mean_se(proj[c]), opt.t_max, opt.projection_floor));
            if (!R.projection.back().pass) R.projection_pass = false;
        }
        // L-weighted regression of beta_F on the test functions
        double gap = 0.0, wsum = 0.0;
        try {
            auto fit = ols_hc0(wcols, wy, names);
            for (std::size_t i = 0; i < proj_psi.size(); ++i) {
                double f = 0.0;
                for (std::size_t c = 0; c < fit.names.size(); ++c) {
                    std::size_t idx = 0;
                    while (names[idx] != fit.names[c]) ++idx;
                    f += fit.coef[c] * proj_psi[i][idx];
                }
                gap += proj_weight[i] * std::fabs(proj_beta_H[i] - f);
                wsum += proj_weight[i];
            }
        } catch (const SampleSizeError&) {
            // fewer observations than test functions: no fit to compare with
        }
        R.projection_abs_gap = wsum > 0.0 ? gap / wsum : 0.0;
    }

    R.var_beta_H = sample_variance(cost_H);
    R.var_beta_F = sample_variance(cost_F);
    R.var_zero = sample_variance(cost_0);
    {
        auto m0 = mean_se(cost_0), mH = mean_se(cost_H);
        std::vector<double> d(cost_0.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            double a = cost_0[i] - m0.mean, b = cost_H[i] - mH.mean;
            d[i] = a * a - b * b;
        }
        auto md = mean_se(d);
        R.variance_reduction.name = "var_zero_minus_var_beta_H";
        R.variance_reduction.value = md.mean;
        R.variance_reduction.se = md.se;
        R.variance_reduction.t = md.se > 0.0 ? md.mean / md.se : 0.0;
        R.variance_reduction.pass = md.mean > opt.t_max * md.se;
    }
    R.mmm_excluded_fraction = static_cast<double>(excluded) / static_cast<double>(samples.size());
    return R;
}

}  // namespace pohedge
