#include "pohedge/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pohedge/errors.hpp"
#include "pohedge/filtering.hpp"
#include "pohedge/simulate.hpp"

namespace pohedge {

LocalStructure local_structure(const ModelSpec& spec, double t, double x, double s, bool with_star) {
    LocalStructure ls;
    ls.c = local_coefficients(spec, t, x, s);
    const auto& c = ls.c;
    if (spec.has_diffusion_price()) {
        ls.a = s * s * c.sigma1 * c.sigma1;
        ls.drift = s * c.mu1;
    }
    for (std::size_t j = 0; j < c.z.size(); ++j) {
        double e = spec.marks.eta[j];
        ls.a += c.z[j] * c.z[j] * e;
        ls.drift += c.z[j] * e;
    }
    if (ls.a > 0.0) {
        ls.alpha_F = ls.drift / ls.a;
    } else if (with_star) {
        std::ostringstream os;
        os << "quadratic variation density is 0 at (t=" << t << ", x=" << x << ", s=" << s
           << "): no diffusion and no active price jumps";
        throw DegeneracyError(os.str());
    }
    if (with_star) {
        ls.eta_star.resize(c.z.size());
        for (std::size_t j = 0; j < c.z.size(); ++j) {
            double f = 1.0 - ls.alpha_F * c.z[j];
            if (f < 0.0 && f > -1e-12) f = 0.0;  // alpha_F z = 1 up to round-off
            double e = spec.marks.eta[j] * f;
            if (e < 0.0) {
                std::ostringstream os;
                os << "tilted jump weight " << e << " < 0 at mark " << (j + 1) << " (t=" << t
                   << ", x=" << x << ", s=" << s << "): alpha_F * z = " << ls.alpha_F * c.z[j]
                   << " exceeds 1";
                throw MeasureSignError(os.str());
            }
            ls.eta_star[j] = c.z[j] == 0.0 ? spec.marks.eta[j] : e;
        }
    }
    return ls;
}

double qv_density(const ModelSpec& spec, double t, double x, double s) {
    return local_structure(spec, t, x, s, false).a;
}

double alpha_F_at(const ModelSpec& spec, double t, double x, double s) {
    auto ls = local_structure(spec, t, x, s, false);
    if (!(ls.a > 0.0)) {
        std::ostringstream os;
        os << "alpha_F undefined at (t=" << t << ", x=" << x << ", s=" << s
           << "): zero quadratic variation density";
        throw DegeneracyError(os.str());
    }
    return ls.alpha_F;
}

std::vector<double> jump_weights(const ModelSpec& spec, const LocalStructure& ls, Measure m) {
    if (!spec.has_jumps()) return {};
    if (m == Measure::P) return spec.marks.eta;
    if (ls.eta_star.size() != spec.n_marks())
        throw MeasureSignError("tilted jump weights were not computed for this point");
    return ls.eta_star;
}

double price_drift(const ModelSpec& spec, const LocalStructure& ls, Measure m) {
    if (m == Measure::P) {
        double v = ls.drift;
        for (std::size_t j = 0; j < ls.c.z.size(); ++j) v -= ls.c.z[j] * spec.marks.eta[j];
        return v;
    }
    // S is a P*-martingale: the continuous drift cancels the tilted compensator
    double v = 0.0;
    for (std::size_t j = 0; j < ls.c.z.size(); ++j) v -= ls.c.z[j] * ls.eta_star.at(j);
    return v;
}

double signal_drift(const ModelSpec& spec, const LocalStructure& ls, double s, Measure m) {
    if (spec.finite_state()) return 0.0;
    double d = ls.c.mu0;
    if (m == Measure::Pstar && spec.has_diffusion_price() && spec.coeff.rho != 0.0) {
        double theta = ls.alpha_F * s * ls.c.sigma1;
        d -= spec.coeff.rho * ls.c.sigma0 * theta;
    }
    return d;
}

double PooledMeasure::moment(int k) const {
    double v = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) v += std::pow(z[a], k) * w[a];
    return v;
}

void AtomPool::add(double z, double w, int tag) {
    if (final_) throw GridError("atom pool already finalized");
    items_.push_back({z, w, tag});
}

void AtomPool::finalize() {
    if (final_) return;
    final_ = true;
    std::vector<std::size_t> order(items_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return items_[a].z < items_[b].z; });
    owner_.assign(items_.size(), -1);
    std::size_t k = 0;
    while (k < order.size()) {
        double lo = items_[order[k]].z, prev = lo;
        double w = 0.0;
        int atom = static_cast<int>(z_.size());
        std::size_t e = k;
        while (e < order.size() && items_[order[e]].z - prev <= tol_) {
            prev = items_[order[e]].z;
            w += items_[order[e]].w;
            owner_[order[e]] = atom;
            ++e;
        }
        if (prev - lo > tol_) {
            std::ostringstream os;
            os << "jump sizes chain from " << lo << " to " << prev
               << " within the pooling tolerance " << tol_ << "; the z-grid is ambiguous";
            throw GridError(os.str());
        }
        z_.push_back(lo);
        w_.push_back(w);
        k = e;
    }
}

int AtomPool::find(double z) const {
    auto it = std::lower_bound(z_.begin(), z_.end(), z - tol_);
    if (it != z_.end() && std::fabs(*it - z) <= tol_) return static_cast<int>(it - z_.begin());
    return -1;
}

double pooling_tolerance(const ModelSpec& spec) { return 1e-9 * spec.s0; }

namespace {

struct Projected {
    double p_a = 0.0;
    double p_drift = 0.0;
};

Projected project(const ModelSpec& spec, const FilterState& f, double t, double s) {
    f.check_normalized();
    Projected p;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f.w[i] == 0.0) continue;
        auto ls = local_structure(spec, t, f.x[i], s, false);
        p.p_a += f.w[i] * ls.a;
        p.p_drift += f.w[i] * ls.drift;
    }
    return p;
}

}  // namespace

double alpha_H_at(const ModelSpec& spec, const FilterState& filter_P, double t, double s) {
    auto p = project(spec, filter_P, t, s);
    return p.p_a == 0.0 ? 0.0 : p.p_drift / p.p_a;
}

double projected_qv(const ModelSpec& spec, const FilterState& filter_P, double t, double s) {
    return project(spec, filter_P, t, s).p_a;
}

PooledMeasure nu_H_at(const ModelSpec& spec, const FilterState& filter_P, double t, double s) {
    filter_P.check_normalized();
    AtomPool pool(pooling_tolerance(spec));
    for (std::size_t i = 0; i < filter_P.size(); ++i) {
        if (filter_P.w[i] == 0.0) continue;
        auto c = local_coefficients(spec, t, filter_P.x[i], s);
        for (std::size_t j = 0; j < c.z.size(); ++j)
            if (c.z[j] != 0.0) pool.add(c.z[j], filter_P.w[i] * spec.marks.eta[j]);
    }
    pool.finalize();
    return {pool.atoms(), pool.weights()};
}

StructureCoefficients compute_structure(const ModelSpec& spec, const PathSample& path,
                                        const std::vector<FilterState>& filters_P) {
    const int N = path.n_steps();
    if (static_cast<int>(filters_P.size()) < N) throw FilterStateError("one P-filter per step needed");
    const double dt = path.grid.dt();
    StructureCoefficients out;
    out.alpha_F.resize(N);
    out.a.resize(N);
    out.alpha_H.resize(N);
    out.p_a.resize(N);
    out.gamma_increment.resize(N);
    out.jump_drift.resize(N);
    out.theta.resize(N);
    out.nu_F.resize(N);
    out.nu_H.resize(N);
    for (int n = 0; n < N; ++n) {
        const double t = path.time(n), s = path.s[n];
        out.alpha_F[n] = alpha_F_at(spec, t, path.x[n], s);
        auto ls = local_structure(spec, t, path.x[n], s, false);
        out.a[n] = ls.a;
        out.gamma_increment[n] = ls.drift * dt;
        double jd = 0.0;
        for (std::size_t j = 0; j < ls.c.z.size(); ++j) jd += ls.c.z[j] * spec.marks.eta[j];
        out.jump_drift[n] = jd;
        out.theta[n] = spec.has_diffusion_price() ? ls.alpha_F * s * ls.c.sigma1 : 0.0;
        out.nu_F[n] = spec.has_jumps() ? spec.marks.eta : std::vector<double>{};
        auto p = project(spec, filters_P[n], t, s);
        out.p_a[n] = p.p_a;
        if (p.p_a == 0.0) {
            out.alpha_H[n] = 0.0;
            ++out.alpha_H_zero_pa;
        } else {
            out.alpha_H[n] = p.p_drift / p.p_a;
        }
        out.nu_H[n] = nu_H_at(spec, filters_P[n], t, s);
    }
    return out;
}

namespace {

MeasurePath density(const PathSample& path, const StructureCoefficients& co,
                    bool strict) {
    const int N = path.n_steps();
    const double dt = path.grid.dt();
    MeasurePath m;
    m.L.assign(N + 1, 0.0);
    m.log_L.assign(N + 1, -std::numeric_limits<double>::infinity());
    m.L[0] = 1.0;
    m.log_L[0] = 0.0;
    double lg = 0.0;
    for (int n = 0; n < N; ++n) {
        const double th = co.theta[n];
        lg += -th * path.dW1[n] - 0.5 * th * th * dt + co.alpha_F[n] * co.jump_drift[n] * dt;
        if (path.jump_mark[n] >= 0 && path.obs_z[n] != 0.0) {
            double f = 1.0 - co.alpha_F[n] * path.obs_z[n];
            if (!(f > 0.0)) {
                std::ostringstream os;
                os << "jump factor 1 - alpha_F dM = " << f << " at step " << n;
                if (strict) throw SignedDensityError(os.str());
                m.excluded = true;
                m.excluded_step = n;
                return m;
            }
            lg += std::log(f);
        }
        m.log_L[n + 1] = lg;
        m.L[n + 1] = std::exp(lg);
    }
    return m;
}

}  // namespace

MeasurePath mmm_density(const ModelSpec&, const PathSample& path,
                        const StructureCoefficients& coeffs) {
    return density(path, coeffs, false);
}

MeasurePath mmm_density_strict(const ModelSpec&, const PathSample& path,
                               const StructureCoefficients& coeffs) {
    return density(path, coeffs, true);
}

}  // namespace pohedge
