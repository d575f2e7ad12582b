#include "pohedge/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pohedge/errors.hpp"
#include "pohedge/parallel.hpp"
#include "pohedge/simulate.hpp"
#include "pohedge/structure.hpp"

namespace pohedge {

int ValueSurface::node_of(double t) const {
    const double dt = grid.dt();
    double r = (t - t0) / dt;
    long n = std::lround(r);
    if (n < 0 || n > grid.n_steps || std::fabs(r - static_cast<double>(n)) > 1e-9) {
        std::ostringstream os;
        os << "t = " << t << " is not a node of the value surface";
        throw RangeError(os.str());
    }
    return static_cast<int>(n);
}

ValueSurface::Bracket ValueSurface::s_bracket(double s_val) const {
    const std::size_t M = n_s();
    const double h = log_s[1] - log_s[0];
    double r = (std::log(s_val) - log_s[0]) / h;
    auto lo = static_cast<std::size_t>(std::clamp(std::floor(r), 0.0, static_cast<double>(M - 2)));
    // the log index can land one cell off near a node; settle it in s
    if (lo + 2 < M && s_val > s[lo + 1]) ++lo;
    if (lo > 0 && s_val < s[lo]) --lo;
    return {lo, (s_val - s[lo]) / (s[lo + 1] - s[lo])};
}

ValueSurface::Bracket ValueSurface::x_bracket(double x_val) const {
    const std::size_t K = n_sheets();
    if (K == 1) return {0, 0.0};
    const double h = x[1] - x[0];
    double r = (x_val - x[0]) / h;
    auto lo = static_cast<std::size_t>(std::clamp(std::floor(r), 0.0, static_cast<double>(K - 2)));
    return {lo, r - static_cast<double>(lo)};
}

double ValueSurface::sheet_value(int n, std::size_t k, const Bracket& b) const {
    double a = at(n, k, b.lo);
    if (b.w == 0.0) return a;
    return a + b.w * (at(n, k, b.lo + 1) - a);
}

double ValueSurface::node_ds(int n, std::size_t k, std::size_t m) const {
    const std::size_t M = n_s();
    if (m == 0) return (at(n, k, 1) - at(n, k, 0)) / (s[1] - s[0]);
    if (m == M - 1) return (at(n, k, M - 1) - at(n, k, M - 2)) / (s[M - 1] - s[M - 2]);
    const double h = log_s[1] - log_s[0];
    return (at(n, k, m + 1) - at(n, k, m - 1)) / (2.0 * h * s[m]);
}

double ValueSurface::sheet_ds(int n, std::size_t k, const Bracket& b) const {
    double a = node_ds(n, k, b.lo);
    if (b.w == 0.0) return a;
    return a + b.w * (node_ds(n, k, b.lo + 1) - a);
}

namespace {

std::size_t chain_sheet(const ValueSurface& v, double x_val) {
    for (std::size_t k = 0; k < v.x.size(); ++k)
        if (std::fabs(v.x[k] - x_val) <= 1e-9 * std::max(1.0, std::fabs(x_val))) return k;
    std::ostringstream os;
    os << "x = " << x_val << " is not a signal state of the surface";
    throw RangeError(os.str());
}

}  // namespace

double ValueSurface::value(int n, double x_val, double s_val) const {
    if (n == grid.n_steps) return claim.payoff(t0 + grid.horizon, s_val);
    auto bs = s_bracket(s_val);
    if (chain) return sheet_value(n, chain_sheet(*this, x_val), bs);
    auto bx = x_bracket(x_val);
    double a = sheet_value(n, bx.lo, bs);
    if (bx.w == 0.0) return a;
    return a + bx.w * (sheet_value(n, bx.lo + 1, bs) - a);
}

double ValueSurface::ds(int n, double x_val, double s_val) const {
    auto bs = s_bracket(s_val);
    if (chain) return sheet_ds(n, chain_sheet(*this, x_val), bs);
    auto bx = x_bracket(x_val);
    double a = sheet_ds(n, bx.lo, bs);
    if (bx.w == 0.0) return a;
    return a + bx.w * (sheet_ds(n, bx.lo + 1, bs) - a);
}

double ValueSurface::dx(int n, double x_val, double s_val) const {
    if (chain || n_sheets() < 3) return 0.0;
    auto bs = s_bracket(s_val);
    auto bx = x_bracket(x_val);
    const double h = x[1] - x[0];
    auto node_dx = [&](std::size_t k) {
        const std::size_t K = n_sheets();
        if (k == 0) return (sheet_value(n, 1, bs) - sheet_value(n, 0, bs)) / h;
        if (k == K - 1) return (sheet_value(n, K - 1, bs) - sheet_value(n, K - 2, bs)) / h;
        return (sheet_value(n, k + 1, bs) - sheet_value(n, k - 1, bs)) / (2.0 * h);
    };
    double a = node_dx(bx.lo);
    if (bx.w == 0.0) return a;
    return a + bx.w * (node_dx(bx.lo + 1) - a);
}

namespace {

// Jump of a grid point: bilinear read of the post-jump value.
struct JumpLink {
    std::uint32_t k;  // target sheet (lower x node for a continuous signal)
    std::uint32_t m;  // lower s node
    double wx;
    double ws;
    double eta;
};

struct Coefficients {
    // Per (sheet, s node), row-major by sheet.
    std::vector<double> ay, by;  // ay g_yy + by g_y
    std::vector<double> ax, bx;  // ax g_xx + bx g_x (continuous signal)
    std::vector<double> axy;     // axy g_xy (continuous signal)
    std::vector<std::uint32_t> off;
    std::vector<JumpLink> links;
    double max_rate = 0.0;
};

struct Layout {
    std::size_t K, M;
    double hy, hx;
    std::vector<double> y, s, x;
    bool chain;
};

std::pair<std::uint32_t, double> bracket_uniform(double v, double v0, double h, std::size_t n) {
    double r = (v - v0) / h;
    auto lo = static_cast<std::size_t>(std::clamp(std::floor(r), 0.0, static_cast<double>(n - 2)));
    return {static_cast<std::uint32_t>(lo), r - static_cast<double>(lo)};
}

Coefficients build_coefficients(const ModelSpec& spec, const Layout& L, double t) {
    Coefficients C;
    const std::size_t KM = L.K * L.M;
    C.ay.assign(KM, 0.0);
    C.by.assign(KM, 0.0);
    if (!L.chain) {
        C.ax.assign(KM, 0.0);
        C.bx.assign(KM, 0.0);
        C.axy.assign(KM, 0.0);
    }
    C.off.assign(KM + 1, 0);
    for (std::size_t k = 0; k < L.K; ++k) {
        for (std::size_t m = 0; m < L.M; ++m) {
            const std::size_t idx = k * L.M + m;
            const double sv = L.s[m];
            auto ls = local_structure(spec, t, L.x[k], sv, true);
            const auto& c = ls.c;
            double half_var = spec.has_diffusion_price() ? 0.5 * c.sigma1 * c.sigma1 : 0.0;
            C.ay[idx] = half_var;
            C.by[idx] = -half_var + price_drift(spec, ls, Measure::Pstar) / sv;
            if (!L.chain) {
                C.ax[idx] = 0.5 * c.sigma0 * c.sigma0;
                C.bx[idx] = signal_drift(spec, ls, sv, Measure::Pstar);
                if (spec.has_diffusion_price()) C.axy[idx] = spec.coeff.rho * c.sigma0 * c.sigma1;
            }
            double rate = 0.0;
            for (std::size_t j = 0; j < c.z.size(); ++j) {
                double e = ls.eta_star[j];
                if (e == 0.0 || (c.k1[j] == 0.0 && c.k0[j] == 0.0)) continue;
                JumpLink link{};
                link.eta = e;
                rate += e;
                double s_new = sv * (1.0 + c.k1[j]);
                double r = (std::log(s_new) - L.y[0]) / L.hy;
                auto lo = static_cast<std::size_t>(std::clamp(std::floor(r), 0.0, static_cast<double>(L.M - 2)));
                if (lo + 2 < L.M && s_new > L.s[lo + 1]) ++lo;
                if (lo > 0 && s_new < L.s[lo]) --lo;
                link.m = static_cast<std::uint32_t>(lo);
                link.ws = (s_new - L.s[lo]) / (L.s[lo + 1] - L.s[lo]);
                if (L.chain) {
                    double xt = jump_target(spec, L.x[k], c.k0[j]);
                    link.k = static_cast<std::uint32_t>(spec.state_index(xt));
                    link.wx = 0.0;
                } else {
                    auto [kl, wx] = bracket_uniform(L.x[k] + c.k0[j], L.x[0], L.hx, L.K);
                    link.k = kl;
                    link.wx = L.K == 1 ? 0.0 : wx;
                }
                C.links.push_back(link);
            }
            C.max_rate = std::max(C.max_rate, rate);
            C.off[idx + 1] = static_cast<std::uint32_t>(C.links.size());
        }
    }
    return C;
}

bool time_independent(const ModelSpec& spec) {
    const auto& k = spec.coeff;
    auto free_of_t = [](const Expression& e) { return !e.depends_on(Var::T); };
    bool ok = free_of_t(k.mu1) && free_of_t(k.sigma1) && free_of_t(k.mu0) && free_of_t(k.sigma0);
    for (const auto& e : k.K0) ok = ok && free_of_t(e);
    for (const auto& e : k.K1) ok = ok && free_of_t(e);
    return ok;
}

// Second-order operator row at one node, upwinded when the cell Peclet
// number exceeds one.
struct Row {
    double l, d, u;
};

Row operator_row(double a, double b, double h) {
    Row r{a / (h * h), -2.0 * a / (h * h), a / (h * h)};
    if (a > 0.0 && std::fabs(b) * h <= 2.0 * a) {
        r.l -= b / (2.0 * h);
        r.u += b / (2.0 * h);
    } else if (b > 0.0) {
        r.u += b / h;
        r.d -= b / h;
    } else {
        r.l -= b / h;
        r.d += b / h;
    }
    return r;
}

// Linear continuation in the node coordinate c at both ends:
// v0 = v1 + r0 (v2 - v1), vN = vN-1 + rN (vN-2 - vN-1).
struct Ends {
    double r0, rN;
};

Ends linear_ends(const std::vector<double>& c) {
    const std::size_t n = c.size();
    return {(c[0] - c[1]) / (c[2] - c[1]), (c[n - 1] - c[n - 2]) / (c[n - 3] - c[n - 2])};
}

// Solves (I - cA) v = rhs on interior nodes of a strided line, then fills
// the two end nodes by linear continuation.
void solve_line(const std::vector<Row>& rows, double c, const Ends& e, const double* rhs, double* v,
                std::size_t n, std::size_t stride, std::vector<double>& cp, std::vector<double>& dp) {
    const std::size_t I = n - 2;
    cp.resize(I);
    dp.resize(I);
    double prev_c = 0.0, prev_d = 0.0;
    for (std::size_t q = 0; q < I; ++q) {
        const std::size_t m = q + 1;
        const Row& r = rows[m];
        double lo = -c * r.l, di = 1.0 - c * r.d, up = -c * r.u;
        if (m == 1) {
            di += lo * (1.0 - e.r0);
            up += lo * e.r0;
            lo = 0.0;
        }
        if (m == n - 2) {
            di += up * (1.0 - e.rN);
            lo += up * e.rN;
            up = 0.0;
        }
        double den = di - lo * prev_c;
        cp[q] = up / den;
        dp[q] = (rhs[m * stride] - lo * prev_d) / den;
        prev_c = cp[q];
        prev_d = dp[q];
    }
    for (std::size_t q = I; q-- > 0;) {
        double val = dp[q] - (q + 1 < I ? cp[q] * v[(q + 2) * stride] : 0.0);
        v[(q + 1) * stride] = val;
    }
    v[0] = v[stride] + e.r0 * (v[2 * stride] - v[stride]);
    v[(n - 1) * stride] = v[(n - 2) * stride] + e.rN * (v[(n - 3) * stride] - v[(n - 2) * stride]);
}

class Solver {
public:
    Solver(const ModelSpec& spec, const Layout& L) : spec_(spec), L_(L) {
        static_ = time_independent(spec);
        ends_y_ = linear_ends(L.s);
        if (!L.chain && L.K >= 3) ends_x_ = linear_ends(L.x);
        if (L.chain) Q_ = spec.chain->generator;
    }

    const Coefficients& coefficients(double t) {
        if (!have_ || !static_) {
            C_ = build_coefficients(spec_, L_, t);
            build_rows();
            have_ = true;
        }
        return C_;
    }

    // Jumps plus chain coupling, written as differences so that flat
    // functions are reproduced exactly.
    void nonlocal(const std::vector<double>& g, std::vector<double>& out) const {
        const std::size_t M = L_.M;
        out.assign(g.size(), 0.0);
        for (std::size_t k = 0; k < L_.K; ++k) {
            for (std::size_t m = 0; m < M; ++m) {
                const std::size_t idx = k * M + m;
                const double g0 = g[idx];
                double acc = 0.0;
                for (std::uint32_t q = C_.off[idx]; q < C_.off[idx + 1]; ++q) {
                    const auto& lk = C_.links[q];
                    auto read = [&](std::size_t kk) {
                        double a = g[kk * M + lk.m];
                        return a + lk.ws * (g[kk * M + lk.m + 1] - a);
                    };
                    double v = read(lk.k);
                    if (lk.wx != 0.0) v += lk.wx * (read(lk.k + 1) - v);
                    acc += lk.eta * (v - g0);
                }
                if (L_.chain) {
                    for (std::size_t l = 0; l < L_.K; ++l)
                        if (l != k && Q_(k, l) != 0.0) acc += Q_(k, l) * (g[l * M + m] - g0);
                }
                out[idx] = acc;
            }
        }
    }

    void apply_y(const std::vector<double>& g, std::vector<double>& out) const {
        const std::size_t M = L_.M;
        out.assign(g.size(), 0.0);
        for (std::size_t k = 0; k < L_.K; ++k) {
            const auto& R = rows_y_[k];
            for (std::size_t m = 1; m + 1 < M; ++m) {
                const std::size_t i = k * M + m;
                out[i] = R[m].l * g[i - 1] + R[m].d * g[i] + R[m].u * g[i + 1];
            }
        }
    }

    void apply_x(const std::vector<double>& g, std::vector<double>& out) const {
        const std::size_t M = L_.M;
        out.assign(g.size(), 0.0);
        if (L_.K < 3) return;
        for (std::size_t m = 0; m < M; ++m) {
            const auto& R = rows_x_[m];
            for (std::size_t k = 1; k + 1 < L_.K; ++k) {
                const std::size_t i = k * M + m;
                out[i] = R[k].l * g[i - M] + R[k].d * g[i] + R[k].u * g[i + M];
            }
        }
    }

    void apply_mixed(const std::vector<double>& g, std::vector<double>& out) const {
        const std::size_t M = L_.M;
        out.assign(g.size(), 0.0);
        if (L_.K < 3) return;
        const double f = 1.0 / (4.0 * L_.hx * L_.hy);
        for (std::size_t k = 1; k + 1 < L_.K; ++k) {
            for (std::size_t m = 1; m + 1 < M; ++m) {
                const std::size_t i = k * M + m;
                if (C_.axy[i] == 0.0) continue;
                out[i] = C_.axy[i] * f * (g[i + M + 1] - g[i + M - 1] - g[i - M + 1] + g[i - M - 1]);
            }
        }
    }

    void solve_y(double c, const std::vector<double>& rhs, std::vector<double>& v) {
        const std::size_t M = L_.M;
        for (std::size_t k = 0; k < L_.K; ++k)
            solve_line(rows_y_[k], c, ends_y_, rhs.data() + k * M, v.data() + k * M, M, 1, cp_, dp_);
    }

    void solve_x(double c, const std::vector<double>& rhs, std::vector<double>& v) {
        const std::size_t M = L_.M;
        if (L_.K < 3) {
            v = rhs;
            return;
        }
        for (std::size_t m = 0; m < M; ++m)
            solve_line(rows_x_[m], c, ends_x_, rhs.data() + m, v.data() + m, L_.K, M, cp_, dp_);
    }

    void fill_x_ends(std::vector<double>& v) const {
        if (L_.chain || L_.K < 3) return;
        const std::size_t M = L_.M, K = L_.K;
        for (std::size_t m = 0; m < M; ++m) {
            v[m] = v[M + m] + ends_x_.r0 * (v[2 * M + m] - v[M + m]);
            v[(K - 1) * M + m] = v[(K - 2) * M + m] + ends_x_.rN * (v[(K - 3) * M + m] - v[(K - 2) * M + m]);
        }
    }

    void fill_y_ends(std::vector<double>& v) const {
        const std::size_t M = L_.M;
        for (std::size_t k = 0; k < L_.K; ++k) {
            double* r = v.data() + k * M;
            r[0] = r[1] + ends_y_.r0 * (r[2] - r[1]);
            r[M - 1] = r[M - 2] + ends_y_.rN * (r[M - 3] - r[M - 2]);
        }
    }

private:
    void build_rows() {
        const std::size_t M = L_.M;
        rows_y_.assign(L_.K, std::vector<Row>(M, Row{0, 0, 0}));
        for (std::size_t k = 0; k < L_.K; ++k)
            for (std::size_t m = 1; m + 1 < M; ++m)
                rows_y_[k][m] = operator_row(C_.ay[k * M + m], C_.by[k * M + m], L_.hy);
        if (!L_.chain && L_.K >= 3) {
            rows_x_.assign(M, std::vector<Row>(L_.K, Row{0, 0, 0}));
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t k = 1; k + 1 < L_.K; ++k)
                    rows_x_[m][k] = operator_row(C_.ax[k * M + m], C_.bx[k * M + m], L_.hx);
        }
    }

    const ModelSpec& spec_;
    const Layout& L_;
    bool static_ = false;
    bool have_ = false;
    Coefficients C_;
    std::vector<std::vector<Row>> rows_y_, rows_x_;
    Ends ends_y_{0, 0}, ends_x_{0, 0};
    Eigen::MatrixXd Q_;
    std::vector<double> cp_, dp_;
};

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::fabs(a));
    return m;
}

// theta scheme on the coupled sheets with the nonlocal part iterated to a
// fixed point (theta = 1/2 Crank-Nicolson, theta = 1 implicit Euler).
int theta_step(Solver& S, double theta, double dt, const std::vector<double>& g_old,
               std::vector<double>& g_new) {
    std::vector<double> Ag, J_old, base(g_old.size()), J, rhs(g_old.size());
    S.apply_y(g_old, Ag);
    S.nonlocal(g_old, J_old);
    for (std::size_t i = 0; i < g_old.size(); ++i)
        base[i] = g_old[i] + (1.0 - theta) * dt * (Ag[i] + J_old[i]);
    g_new = g_old;
    const double scale = 1.0 + max_abs(g_old);
    std::vector<double> next(g_old.size());
    for (int it = 1; it <= 100; ++it) {
        S.nonlocal(g_new, J);
        for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = base[i] + theta * dt * J[i];
        S.solve_y(theta * dt, rhs, next);
        double diff = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) diff = std::max(diff, std::fabs(next[i] - g_new[i]));
        g_new.swap(next);
        if (diff <= 1e-13 * scale) return it;
    }
    throw StepSizeError("jump/coupling fixed point did not converge; use more substeps");
}

// Douglas ADI: explicit mixed term and jumps, implicit sweeps in x then y.
void douglas_step(Solver& S, double theta, double dt, const std::vector<double>& g_old,
                  std::vector<double>& g_new) {
    std::vector<double> Ax, Ay, Axy, J;
    S.apply_x(g_old, Ax);
    S.apply_y(g_old, Ay);
    S.apply_mixed(g_old, Axy);
    S.nonlocal(g_old, J);
    const std::size_t n = g_old.size();
    std::vector<double> y0(n), rhs(n), y1(n);
    for (std::size_t i = 0; i < n; ++i) y0[i] = g_old[i] + dt * (Ax[i] + Ay[i] + Axy[i] + J[i]);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = y0[i] - theta * dt * Ax[i];
    S.solve_x(theta * dt, rhs, y1);
    S.fill_y_ends(y1);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = y1[i] - theta * dt * Ay[i];
    g_new.resize(n);
    S.solve_y(theta * dt, rhs, g_new);
    S.fill_x_ends(g_new);
}

int sign_of_monotone(const ClaimSpec& c) {
    switch (c.kind) {
        case ClaimSpec::Kind::Call:
        case ClaimSpec::Kind::Digital:
        case ClaimSpec::Kind::Identity: return c.scale >= 0 ? 1 : -1;
        case ClaimSpec::Kind::Put: return c.scale >= 0 ? -1 : 1;
        default: return 0;
    }
}

}  // namespace

ValueSurface solve_value_surface(const ModelSpec& spec, const ClaimSpec& claim, const TimeGrid& grid,
                                 const PricingGrids& grids) {
    if (grids.s_points < 5 || grids.s_points % 2 == 0) throw ConfigError("s_points must be odd and >= 5");
    if (grids.substeps < 1) throw ConfigError("substeps must be >= 1");
    const double T = grid.horizon;

    ValueSurface v;
    v.grid = grid;
    v.claim = claim;
    v.chain = spec.finite_state();

    Layout L;
    L.chain = v.chain;
    if (v.chain) {
        L.x = spec.chain->states;
    } else {
        auto c0 = local_coefficients(spec, 0.0, spec.x0, spec.s0);
        double spread = std::sqrt(spec.x0_sd * spec.x0_sd + c0.sigma0 * c0.sigma0 * T);
        double half = std::max(1.0, 6.0 * spread);
        double lo = grids.x_min.value_or(spec.x0 - half), hi = grids.x_max.value_or(spec.x0 + half);
        if (!(hi > lo) || grids.x_points < 3) throw ConfigError("x-grid needs x_max > x_min and x_points >= 3");
        L.x.resize(grids.x_points);
        for (int k = 0; k < grids.x_points; ++k) L.x[k] = lo + (hi - lo) * k / (grids.x_points - 1);
        L.hx = (hi - lo) / (grids.x_points - 1);
    }
    L.K = L.x.size();

    double width = grids.s_width;
    if (!(width > 0.0)) {
        double var = 0.0;
        for (double xv : L.chain ? L.x : std::vector<double>{spec.x0}) {
            auto c = local_coefficients(spec, 0.0, xv, spec.s0);
            double vv = spec.has_diffusion_price() ? c.sigma1 * c.sigma1 : 0.0;
            for (std::size_t j = 0; j < c.k1.size(); ++j) vv += c.k1[j] * c.k1[j] * spec.marks.eta[j];
            var = std::max(var, vv);
        }
        width = std::max(0.5, 6.0 * std::sqrt(var * T));
    }
    L.M = static_cast<std::size_t>(grids.s_points);
    L.hy = 2.0 * width / static_cast<double>(L.M - 1);
    const double y0 = std::log(spec.s0);
    const long half_m = static_cast<long>(L.M / 2);
    L.y.resize(L.M);
    L.s.resize(L.M);
    for (std::size_t m = 0; m < L.M; ++m) {
        L.y[m] = y0 + L.hy * (static_cast<long>(m) - half_m);
        L.s[m] = m == L.M / 2 ? spec.s0 : std::exp(L.y[m]);
    }
    v.x = L.x;
    v.log_s = L.y;
    v.s = L.s;
    v.allocate();

    const std::size_t KM = L.K * L.M;
    std::vector<double> g(KM), g_new;
    for (std::size_t k = 0; k < L.K; ++k)
        for (std::size_t m = 0; m < L.M; ++m) g[k * L.M + m] = claim.payoff(T, L.s[m]);
    const int N = grid.n_steps;
    for (std::size_t i = 0; i < KM; ++i) v.at(N, i / L.M, i % L.M) = g[i];

    Solver S(spec, L);
    const double dts = grid.dt() / grids.substeps;
    int smoothing_left = grids.rannacher_steps;
    for (int n = N - 1; n >= 0; --n) {
        for (int q = grids.substeps - 1; q >= 0; --q) {
            const double t_hi = grid.t(n) + (q + 1) * dts;
            const double t_lo = grid.t(n) + q * dts;
            auto advance = [&](double theta, double tl, double th) {
                const double h = th - tl;
                const auto& C = S.coefficients(0.5 * (tl + th));
                if (!L.chain && C.max_rate * h > 1.0)
                    throw StepSizeError("explicit jump step exceeds its stability limit; raise substeps");
                if (L.chain) {
                    v.fixed_point_iterations_max = std::max(v.fixed_point_iterations_max, theta_step(S, theta, h, g, g_new));
                } else {
                    douglas_step(S, theta, h, g, g_new);
                }
                g.swap(g_new);
            };
            if (smoothing_left > 0) {
                const double mid = 0.5 * (t_lo + t_hi);
                advance(1.0, mid, t_hi);
                advance(1.0, t_lo, mid);
                --smoothing_left;
            } else {
                advance(0.5, t_lo, t_hi);
            }
        }
        for (std::size_t i = 0; i < KM; ++i) {
            if (!std::isfinite(g[i])) throw SurfaceError("value surface became non-finite");
            v.at(n, i / L.M, i % L.M) = g[i];
        }
    }

    if (int sgn = sign_of_monotone(claim); sgn != 0) {
        for (int n = 0; n <= N; ++n) {
            for (std::size_t k = 0; k < L.K; ++k) {
                double scale = 1e-9 * (1.0 + std::fabs(v.at(n, k, L.M - 1)) + std::fabs(v.at(n, k, 0)));
                for (std::size_t m = 0; m + 1 < L.M; ++m) {
                    if (sgn * (v.at(n, k, m + 1) - v.at(n, k, m)) < -scale) {
                        ++v.monotonicity_violations;
                        break;
                    }
                }
            }
        }
    }
    return v;
}

McEstimate feynman_kac_mc(const ModelSpec& spec, const ClaimSpec& claim, double horizon, int n_steps,
                          double t, std::optional<double> x, double s, int n_paths, std::uint64_t seed,
                          int workers) {
    if (n_paths <= 0) throw EmptySampleError("feynman-kac estimate needs n_paths > 0");
    if (!(horizon > t)) {
        McEstimate e;
        e.estimate = claim.payoff(horizon, s);
        e.n = n_paths;
        return e;
    }
    TimeGrid g(horizon - t, n_steps);
    SimulationStart start;
    start.t0 = t;
    start.x = x;
    start.s = s;
    std::vector<double> pay(static_cast<std::size_t>(n_paths));
    parallel_for(
        pay.size(),
        [&](std::size_t i) {
            auto p = simulate_path(spec, g, Measure::Pstar, seed ^ 0x6b4b5f6d63ull, i, {}, start);
            pay[i] = claim.payoff(horizon, p.s.back());
        },
        workers);
    double mean = 0.0;
    for (double v : pay) mean += v;
    mean /= n_paths;
    double ss = 0.0;
    for (double v : pay) ss += (v - mean) * (v - mean);
    McEstimate e;
    e.estimate = mean;
    e.n = n_paths;
    e.se = n_paths > 1 ? std::sqrt(ss / (n_paths - 1) / n_paths) : 0.0;
    return e;
}

double value_process(const ValueSurface& surface, const FilterState& filter, double t, double s) {
    int n = surface.node_of(t);
    if (n == surface.grid.n_steps) return surface.claim.payoff(surface.t0 + surface.grid.horizon, s);
    if (!surface.in_range(s)) {
        std::ostringstream os;
        os << "s = " << s << " lies outside the value surface [" << surface.s.front() << ", "
           << surface.s.back() << "]";
        throw RangeError(os.str());
    }
    filter.check_normalized();
    double v = 0.0;
    for (std::size_t i = 0; i < filter.size(); ++i)
        if (filter.w[i] != 0.0) v += filter.w[i] * surface.value(n, filter.x[i], s);
    return v;
}

}  // namespace pohedge
