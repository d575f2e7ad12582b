#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pohedge/expression.hpp"

namespace pohedge {

enum class ModelKind { Diffusion, PureJump, JumpDiffusion };
enum class Measure { P, Pstar };

const char* to_string(ModelKind k);
const char* to_string(Measure m);

struct TimeGrid {
    double horizon = 1.0;
    int n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double T, int n);
    double dt() const { return horizon / n_steps; }
    double t(int n) const { return n == n_steps ? horizon : horizon * n / n_steps; }
    int n_nodes() const { return n_steps + 1; }
};

struct MarkSpace {
    std::vector<double> zeta;
    std::vector<double> eta;

    std::size_t size() const { return zeta.size(); }
    double total_intensity() const;
};

struct Bounds {
    std::optional<double> c1;  // mu1 < c1
    std::optional<double> c2;  // sigma1 > c2
    std::optional<double> c3;  // sigma1 < c3
    std::optional<double> c4;  // K1 < c4
};

// K0 and K1 hold one expression per mark (zeta is also bound at evaluation).
struct CoefficientSet {
    Expression mu0;
    Expression sigma0;
    Expression mu1;
    Expression sigma1;
    std::vector<Expression> K0;
    std::vector<Expression> K1;
    double rho = 0.0;
    Bounds bounds;
};

// Continuous-time Markov chain replacing the X-diffusion.
struct SignalChain {
    std::vector<double> states;
    Eigen::MatrixXd generator;
    std::vector<double> prior;
};

struct ValidationLattice {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> s;
};

struct ModelSpec {
    ModelKind kind = ModelKind::Diffusion;
    CoefficientSet coeff;
    MarkSpace marks;
    double x0 = 0.0;
    double x0_sd = 0.0;  // continuous signal: X_0 ~ N(x0, x0_sd^2)
    double s0 = 100.0;
    std::optional<SignalChain> chain;
    ValidationLattice lattice;  // empty fields are filled with defaults

    bool finite_state() const { return chain.has_value(); }
    std::size_t n_states() const { return chain ? chain->states.size() : 0; }
    bool has_diffusion_price() const { return kind != ModelKind::PureJump; }
    bool has_jumps() const { return kind != ModelKind::Diffusion; }
    std::size_t n_marks() const { return marks.size(); }

    // Index of the chain state equal to x (within 1e-9 relative), or -1.
    int state_index(double x) const;
};

// Every coefficient evaluated at one point; z_j = s * K1_j.
struct LocalCoefficients {
    double mu0 = 0.0;
    double sigma0 = 0.0;
    double mu1 = 0.0;
    double sigma1 = 0.0;
    std::vector<double> k0;
    std::vector<double> k1;
    std::vector<double> z;
};

LocalCoefficients local_coefficients(const ModelSpec& spec, double t, double x, double s);

// X after a jump of mark j, snapped to a chain state in finite-state mode.
double jump_target(const ModelSpec& spec, double x, double k0);

struct Violation {
    std::string coefficient;
    std::string condition;
    std::string message;
    Point witness;
    int mark = -1;
    double value = 0.0;
};

ValidationLattice default_lattice(const ModelSpec& spec, double horizon);
std::vector<Violation> validate_spec(const ModelSpec& spec);

struct ClaimSpec {
    enum class Kind { Call, Put, Digital, Identity, Constant, Custom };
    Kind kind = Kind::Call;
    double strike = 100.0;
    double value = 0.0;  // Constant
    double scale = 1.0;
    Expression custom;   // Custom: payoff in s (and t)

    static ClaimSpec call(double K);
    static ClaimSpec put(double K);
    static ClaimSpec digital(double K);
    static ClaimSpec identity();
    static ClaimSpec constant(double c);

    double payoff(double T, double s) const;
    bool monotone() const;
    std::string name() const;
};

// Test function with partial derivatives. Missing derivatives are either
// filled by central differences (fd_fallback) or reported as missing.
struct ScalarField {
    using Fn = std::function<double(double, double, double)>;

    Fn value;
    Fn ft, fx, fs, fxx, fss, fxs;
    bool fd_fallback = false;
    double fd_scale = 1.0;

    static ScalarField from_expression(const Expression& e);
    static ScalarField numeric(Fn f, double scale = 1.0);

    double dt(double t, double x, double s) const;
    double dx(double t, double x, double s) const;
    double ds(double t, double x, double s) const;
    double dxx(double t, double x, double s) const;
    double dss(double t, double x, double s) const;
    double dxs(double t, double x, double s) const;
};

double apply_generator(const ModelSpec& spec, Measure measure, const ScalarField& f, double t,
                       double x, double s);

// Generator with externally supplied jump weights and drifts: s_drift
// multiplies f_s, x_drift multiplies f_x (continuous signal only).
double generator_with_weights(const ModelSpec& spec, const ScalarField& f, double t, double x,
                              double s, const std::vector<double>& jump_weights, double s_drift,
                              double x_drift);

// exp(Q dt) for the signal chain.
Eigen::MatrixXd chain_transition(const SignalChain& chain, double dt);

}  // namespace pohedge
