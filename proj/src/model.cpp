#include "pohedge/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "pohedge/errors.hpp"
#include "pohedge/structure.hpp"

namespace pohedge {

const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Diffusion: return "diffusion";
        case ModelKind::PureJump: return "pure_jump";
        case ModelKind::JumpDiffusion: return "jump_diffusion";
    }
    return "?";
}

const char* to_string(Measure m) { return m == Measure::P ? "P" : "Pstar"; }

TimeGrid::TimeGrid(double T, int n) : horizon(T), n_steps(n) {
    if (!(T > 0.0) || n < 1) throw ConfigError("time grid needs T > 0 and n_steps >= 1");
}

double MarkSpace::total_intensity() const {
    double v = 0.0;
    for (double e : eta) v += e;
    return v;
}

int ModelSpec::state_index(double x) const {
    if (!chain) return -1;
    const auto& st = chain->states;
    for (std::size_t i = 0; i < st.size(); ++i) {
        if (std::fabs(st[i] - x) <= 1e-9 * std::max(1.0, std::fabs(x))) return static_cast<int>(i);
    }
    return -1;
}

LocalCoefficients local_coefficients(const ModelSpec& spec, double t, double x, double s) {
    LocalCoefficients c;
    Point p{t, x, s, 0.0};
    const auto& k = spec.coeff;
    if (!spec.finite_state()) {
        c.mu0 = k.mu0(p);
        c.sigma0 = k.sigma0(p);
    }
    if (spec.kind != ModelKind::PureJump) {
        c.mu1 = k.mu1(p);
        c.sigma1 = k.sigma1(p);
    }
    const std::size_t m = spec.kind == ModelKind::Diffusion ? 0 : spec.n_marks();
    c.k0.resize(m);
    c.k1.resize(m);
    c.z.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        p.zeta = spec.marks.zeta[j];
        c.k0[j] = k.K0[j](p);
        c.k1[j] = k.K1[j](p);
        c.z[j] = s * c.k1[j];
    }
    return c;
}

double jump_target(const ModelSpec& spec, double x, double k0) {
    if (k0 == 0.0) return x;
    double y = x + k0;
    if (!spec.finite_state()) return y;
    int idx = spec.state_index(y);
    if (idx < 0) {
        std::ostringstream os;
        os << "common jump from x=" << x << " by " << k0 << " leaves the signal state set";
        throw SupportError(os.str());
    }
    return spec.chain->states[idx];
}

ValidationLattice default_lattice(const ModelSpec& spec, double horizon) {
    ValidationLattice L = spec.lattice;
    if (L.t.empty()) L.t = {0.0, 0.5 * horizon, horizon};
    if (L.x.empty()) {
        if (spec.chain) {
            L.x = spec.chain->states;
        } else {
            for (int k = -4; k <= 4; ++k) L.x.push_back(spec.x0 + 0.5 * k);
        }
    }
    if (L.s.empty()) {
        for (double f : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0}) L.s.push_back(spec.s0 * f);
    }
    return L;
}

namespace {

class ViolationSink {
public:
    void add(const std::string& coef, const std::string& cond, const Point& p, int mark, double value) {
        auto key = coef + "|" + cond + "|" + std::to_string(mark);
        if (!seen_.emplace(key, true).second) return;
        std::ostringstream os;
        os << cond;
        if (mark >= 0) os << " at zeta_" << (mark + 1);
        os << " (t=" << p.t << ", x=" << p.x << ", s=" << p.s << "; value " << value << ")";
        out.push_back({coef, cond, os.str(), p, mark, value});
    }
    void add_structural(const std::string& coef, const std::string& cond) {
        if (!seen_.emplace(coef + "|" + cond, true).second) return;
        out.push_back({coef, cond, cond, Point{}, -1, 0.0});
    }
    std::vector<Violation> out;

private:
    std::map<std::string, bool> seen_;
};

bool nonzero_expr(const Expression& e) {
    auto c = e.constant_value();
    return !c || *c != 0.0;
}

void check_chain(const ModelSpec& spec, ViolationSink& sink) {
    const auto& ch = *spec.chain;
    const auto d = static_cast<Eigen::Index>(ch.states.size());
    if (d == 0) {
        sink.add_structural("signal", "finite-state mode needs at least one state");
        return;
    }
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index k = i + 1; k < d; ++k)
            if (ch.states[i] == ch.states[k]) sink.add_structural("signal", "signal states must be distinct");
    if (ch.generator.rows() != d || ch.generator.cols() != d) {
        sink.add_structural("signal", "generator matrix must be square with one row per state");
        return;
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        double row = 0.0, scale = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            double q = ch.generator(i, k);
            row += q;
            scale += std::fabs(q);
            if (i != k && q < 0.0) sink.add_structural("signal", "generator off-diagonal entries must be >= 0");
        }
        if (std::fabs(row) > 1e-12 * std::max(1.0, scale))
            sink.add_structural("signal", "generator rows must sum to 0");
    }
    if (static_cast<Eigen::Index>(ch.prior.size()) != d) {
        sink.add_structural("signal", "prior must have one weight per state");
        return;
    }
    double tot = 0.0;
    for (double p : ch.prior) {
        if (!(p >= 0.0)) sink.add_structural("signal", "prior weights must be >= 0");
        tot += p;
    }
    if (std::fabs(tot - 1.0) > 1e-12) sink.add_structural("signal", "prior weights must sum to 1");
}

}  // namespace

std::vector<Violation> validate_spec(const ModelSpec& spec) {
    ViolationSink sink;
    const auto& k = spec.coeff;
    const std::size_t m = spec.n_marks();

    if (!(spec.s0 > 0.0)) sink.add_structural("s0", "s0 must be positive");
    if (!(k.rho >= -1.0 && k.rho <= 1.0)) sink.add_structural("rho", "rho must lie in [-1, 1]");
    if (spec.kind == ModelKind::Diffusion && m > 0) sink.add_structural("marks", "Diffusion has m = 0 marks");
    if (spec.kind != ModelKind::Diffusion && m == 0)
        sink.add_structural("marks", std::string(to_string(spec.kind)) + " needs m >= 1 marks");
    if (spec.kind == ModelKind::PureJump) {
        if (nonzero_expr(k.sigma1)) sink.add_structural("sigma1", "PureJump has sigma1 absent");
        if (nonzero_expr(k.mu1)) sink.add_structural("mu1", "PureJump has mu1 absent");
    }
    if (spec.marks.eta.size() != m) sink.add_structural("marks", "one eta weight per mark");
    if (spec.kind != ModelKind::Diffusion && (k.K0.size() != m || k.K1.size() != m))
        sink.add_structural("K0/K1", "one K0 and one K1 expression per mark");
    for (std::size_t j = 0; j < spec.marks.eta.size(); ++j) {
        double e = spec.marks.eta[j];
        if (!(e >= 0.0) || !std::isfinite(e))
            sink.add("eta", "eta < 0", Point{0, 0, 0, spec.marks.zeta[j]}, static_cast<int>(j), e);
    }
    if (spec.kind != ModelKind::PureJump && k.sigma1.depends_on(Var::X))
        sink.add_structural("sigma1", "sigma1 depends on x (must be a function of t and s only)");
    if (spec.chain) check_chain(spec, sink);
    if (!sink.out.empty()) return sink.out;

    const auto L = default_lattice(spec, 1.0);
    const auto& b = k.bounds;
    for (double t : L.t) {
        for (double x : L.x) {
            for (double s : L.s) {
                Point p{t, x, s, 0.0};
                auto c = local_coefficients(spec, t, x, s);
                if (spec.kind != ModelKind::PureJump) {
                    if (!(c.sigma1 > 0.0)) sink.add("sigma1", "sigma1 <= 0", p, -1, c.sigma1);
                    if (b.c2 && !(c.sigma1 > *b.c2)) sink.add("sigma1", "sigma1 <= c2", p, -1, c.sigma1);
                    if (b.c3 && !(c.sigma1 < *b.c3)) sink.add("sigma1", "sigma1 >= c3", p, -1, c.sigma1);
                    if (b.c1 && !(c.mu1 < *b.c1)) sink.add("mu1", "mu1 >= c1", p, -1, c.mu1);
                    if (!std::isfinite(c.mu1)) sink.add("mu1", "mu1 not finite", p, -1, c.mu1);
                }
                if (!spec.finite_state()) {
                    if (!(c.sigma0 > 0.0)) sink.add("sigma0", "sigma0 <= 0", p, -1, c.sigma0);
                    if (!std::isfinite(c.mu0)) sink.add("mu0", "mu0 not finite", p, -1, c.mu0);
                }
                double active = 0.0;
                for (std::size_t j = 0; j < c.k1.size(); ++j) {
                    Point pj{t, x, s, spec.marks.zeta[j]};
                    int jj = static_cast<int>(j);
                    if (!std::isfinite(c.k1[j])) sink.add("K1", "K1 not finite", pj, jj, c.k1[j]);
                    if (!(1.0 + c.k1[j] > 0.0)) sink.add("K1", "1 + K1 <= 0", pj, jj, 1.0 + c.k1[j]);
                    if (b.c4 && !(c.k1[j] < *b.c4)) sink.add("K1", "K1 >= c4", pj, jj, c.k1[j]);
                    if (!std::isfinite(c.k0[j])) sink.add("K0", "K0 not finite", pj, jj, c.k0[j]);
                    if (spec.finite_state() && c.k0[j] != 0.0 && spec.state_index(x + c.k0[j]) < 0)
                        sink.add("K0", "x + K0 not a signal state", pj, jj, x + c.k0[j]);
                    if (c.z[j] != 0.0) active += spec.marks.eta[j];
                }
                if (spec.kind == ModelKind::PureJump && !(active > 0.0))
                    sink.add("eta", "eta(D) = 0: no active price jumps", p, -1, active);
            }
        }
    }
    return sink.out;
}

ClaimSpec ClaimSpec::call(double K) {
    ClaimSpec c;
    c.kind = Kind::Call;
    c.strike = K;
    return c;
}

ClaimSpec ClaimSpec::put(double K) {
    ClaimSpec c;
    c.kind = Kind::Put;
    c.strike = K;
    return c;
}

ClaimSpec ClaimSpec::digital(double K) {
    ClaimSpec c;
    c.kind = Kind::Digital;
    c.strike = K;
    return c;
}

ClaimSpec ClaimSpec::identity() {
    ClaimSpec c;
    c.kind = Kind::Identity;
    return c;
}

ClaimSpec ClaimSpec::constant(double v) {
    ClaimSpec c;
    c.kind = Kind::Constant;
    c.value = v;
    return c;
}

double ClaimSpec::payoff(double T, double s) const {
    double v = 0.0;
    switch (kind) {
        case Kind::Call: v = std::max(s - strike, 0.0); break;
        case Kind::Put: v = std::max(strike - s, 0.0); break;
        case Kind::Digital: v = s > strike ? 1.0 : 0.0; break;
        case Kind::Identity: v = s; break;
        case Kind::Constant: v = value; break;
        case Kind::Custom: v = custom.eval(T, 0.0, s); break;
    }
    return scale * v;
}

bool ClaimSpec::monotone() const { return kind != Kind::Custom; }

std::string ClaimSpec::name() const {
    switch (kind) {
        case Kind::Call: return "call";
        case Kind::Put: return "put";
        case Kind::Digital: return "digital";
        case Kind::Identity: return "identity";
        case Kind::Constant: return "constant";
        case Kind::Custom: return "custom";
    }
    return "?";
}

ScalarField ScalarField::from_expression(const Expression& e) {
    auto wrap = [](Expression ex) -> Fn {
        return [ex](double t, double x, double s) { return ex.eval(t, x, s); };
    };
    ScalarField f;
    f.value = wrap(e);
    auto ex = e.derivative(Var::X);
    auto es = e.derivative(Var::S);
    f.ft = wrap(e.derivative(Var::T));
    f.fx = wrap(ex);
    f.fs = wrap(es);
    f.fxx = wrap(ex.derivative(Var::X));
    f.fss = wrap(es.derivative(Var::S));
    f.fxs = wrap(ex.derivative(Var::S));
    return f;
}

ScalarField ScalarField::numeric(Fn fn, double scale) {
    ScalarField f;
    f.value = std::move(fn);
    f.fd_fallback = true;
    f.fd_scale = scale;
    return f;
}

namespace {

[[noreturn]] void missing(const char* which) {
    throw DerivativeMissingError(std::string("scalar field lacks ") + which +
                                 " and finite differences are disabled");
}

}  // namespace

double ScalarField::dt(double t, double x, double s) const {
    if (ft) return ft(t, x, s);
    if (!fd_fallback) missing("df/dt");
    double h = 1e-5 * fd_scale;
    return (value(t + h, x, s) - value(t - h, x, s)) / (2 * h);
}

double ScalarField::dx(double t, double x, double s) const {
    if (fx) return fx(t, x, s);
    if (!fd_fallback) missing("df/dx");
    double h = 1e-5 * fd_scale;
    return (value(t, x + h, s) - value(t, x - h, s)) / (2 * h);
}

double ScalarField::ds(double t, double x, double s) const {
    if (fs) return fs(t, x, s);
    if (!fd_fallback) missing("df/ds");
    double h = 1e-5 * fd_scale;
    return (value(t, x, s + h) - value(t, x, s - h)) / (2 * h);
}

double ScalarField::dxx(double t, double x, double s) const {
    if (fxx) return fxx(t, x, s);
    if (!fd_fallback) missing("d2f/dx2");
    double h = 1e-4 * fd_scale;
    return (value(t, x + h, s) - 2 * value(t, x, s) + value(t, x - h, s)) / (h * h);
}

double ScalarField::dss(double t, double x, double s) const {
    if (fss) return fss(t, x, s);
    if (!fd_fallback) missing("d2f/ds2");
    double h = 1e-4 * fd_scale;
    return (value(t, x, s + h) - 2 * value(t, x, s) + value(t, x, s - h)) / (h * h);
}

double ScalarField::dxs(double t, double x, double s) const {
    if (fxs) return fxs(t, x, s);
    if (!fd_fallback) missing("d2f/dxds");
    double h = 1e-4 * fd_scale;
    return (value(t, x + h, s + h) - value(t, x + h, s - h) - value(t, x - h, s + h) +
            value(t, x - h, s - h)) /
           (4 * h * h);
}

double generator_with_weights(const ModelSpec& spec, const ScalarField& f, double t, double x,
                              double s, const std::vector<double>& jump_weights, double s_drift,
                              double x_drift) {
    if (!f.value) missing("a value function");
    auto c = local_coefficients(spec, t, x, s);
    double g = f.dt(t, x, s);
    const double f0 = f.value(t, x, s);

    if (spec.finite_state()) {
        int i = spec.state_index(x);
        if (i < 0) throw SupportError("x is not a signal state");
        const auto& Q = spec.chain->generator;
        for (Eigen::Index k = 0; k < Q.cols(); ++k) {
            if (k == i || Q(i, k) == 0.0) continue;
            g += Q(i, k) * (f.value(t, spec.chain->states[k], s) - f0);
        }
    } else {
        if (x_drift != 0.0) g += x_drift * f.dx(t, x, s);
        if (c.sigma0 != 0.0) g += 0.5 * c.sigma0 * c.sigma0 * f.dxx(t, x, s);
        if (spec.has_diffusion_price() && spec.coeff.rho != 0.0 && c.sigma0 != 0.0)
            g += spec.coeff.rho * c.sigma0 * c.sigma1 * s * f.dxs(t, x, s);
    }
    if (s_drift != 0.0) g += s_drift * f.ds(t, x, s);
    if (spec.has_diffusion_price()) g += 0.5 * c.sigma1 * c.sigma1 * s * s * f.dss(t, x, s);

    for (std::size_t j = 0; j < c.z.size(); ++j) {
        double w = jump_weights.at(j);
        if (w == 0.0 || (c.k1[j] == 0.0 && c.k0[j] == 0.0)) continue;
        double xt = jump_target(spec, x, c.k0[j]);
        g += w * (f.value(t, xt, s * (1.0 + c.k1[j])) - f0);
    }
    return g;
}

double apply_generator(const ModelSpec& spec, Measure measure, const ScalarField& f, double t,
                       double x, double s) {
    auto ls = local_structure(spec, t, x, s, measure == Measure::Pstar);
    auto w = jump_weights(spec, ls, measure);
    return generator_with_weights(spec, f, t, x, s, w, price_drift(spec, ls, measure),
                                  signal_drift(spec, ls, s, measure));
}

Eigen::MatrixXd chain_transition(const SignalChain& chain, double dt) {
    Eigen::MatrixXd P = (chain.generator * dt).exp();
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index k = 0; k < P.cols(); ++k) {
            if (P(i, k) < 0.0) P(i, k) = 0.0;
            row += P(i, k);
        }
        P.row(i) /= row;
    }
    return P;
}

}  // namespace pohedge
