#pragma once

#include <vector>

#include "pohedge/model.hpp"

namespace pohedge {

struct FilterState;
struct PathSample;

// Per-point structure-condition ingredients under full information.
struct LocalStructure {
    LocalCoefficients c;
    double a = 0.0;        // s^2 sigma1^2 + sum z^2 eta
    double drift = 0.0;    // s mu1 + sum z eta (P-compensator of S)
    double alpha_F = 0.0;
    std::vector<double> eta_star;  // (1 - alpha_F z_j) eta_j
};

// Throws DegeneracyError if the quadratic-variation density vanishes.
double alpha_F_at(const ModelSpec& spec, double t, double x, double s);
double qv_density(const ModelSpec& spec, double t, double x, double s);

// with_star = false skips the tilt (and its sign check): P-only callers.
LocalStructure local_structure(const ModelSpec& spec, double t, double x, double s,
                               bool with_star = true);

// Jump weights under the given measure; Pstar throws MeasureSignError on
// a negative tilted weight.
std::vector<double> jump_weights(const ModelSpec& spec, const LocalStructure& ls, Measure m);

// Absolute drift of S (dt coefficient of the continuous part) under m.
double price_drift(const ModelSpec& spec, const LocalStructure& ls, Measure m);

// Drift of a continuous signal under m (Girsanov shift -rho sigma0 theta).
double signal_drift(const ModelSpec& spec, const LocalStructure& ls, double s, Measure m);

// Atoms of a jump-size measure pooled on a common z-grid.
struct PooledMeasure {
    std::vector<double> z;
    std::vector<double> w;

    double moment(int k) const;
};

// Collect (z, weight) contributions and merge atoms within tol. If merged
// clusters spread wider than tol the grid is ambiguous: GridError.
class AtomPool {
public:
    explicit AtomPool(double tol) : tol_(tol) {}
    void add(double z, double w, int tag = -1);
    void finalize();
    std::size_t size() const { return z_.size(); }
    double z(std::size_t a) const { return z_[a]; }
    // Atom index for z, or -1.
    int find(double z) const;
    // Sum of contribution weights per atom.
    const std::vector<double>& weights() const { return w_; }
    // Atom index of a contribution added in insertion order.
    int atom_of(std::size_t contribution) const { return owner_[contribution]; }
    const std::vector<double>& atoms() const { return z_; }

private:
    struct Contribution {
        double z;
        double w;
        int tag;
    };
    double tol_;
    bool final_ = false;
    std::vector<Contribution> items_;
    std::vector<double> z_;
    std::vector<double> w_;
    std::vector<int> owner_;
};

double pooling_tolerance(const ModelSpec& spec);

// alpha^H = pi~(alpha_F a) / pi~(a); 0 when pi~(a) = 0.
double alpha_H_at(const ModelSpec& spec, const FilterState& filter_P, double t, double s);

// nu^H = pi~(nu^F) on the pooled z-grid.
PooledMeasure nu_H_at(const ModelSpec& spec, const FilterState& filter_P, double t, double s);

// pi~(a): density of <N> under H.
double projected_qv(const ModelSpec& spec, const FilterState& filter_P, double t, double s);

struct StructureCoefficients {
    std::vector<double> alpha_F;
    std::vector<double> a;
    std::vector<double> alpha_H;
    std::vector<double> p_a;
    std::vector<double> gamma_increment;  // P-drift of S times dt, full information
    std::vector<double> jump_drift;       // sum_j z_j eta_j
    std::vector<double> theta;            // alpha_F s sigma1, price of risk on W1
    std::vector<std::vector<double>> nu_F;
    std::vector<PooledMeasure> nu_H;
    int alpha_H_zero_pa = 0;
};

// filters_P[n] is the P-filter at node n (left limit for step n).
StructureCoefficients compute_structure(const ModelSpec& spec, const PathSample& path,
                                        const std::vector<FilterState>& filters_P);

struct MeasurePath {
    std::vector<double> L;
    std::vector<double> log_L;
    bool excluded = false;
    int excluded_step = -1;
};

// Density of P* w.r.t. P along a P-path. A nonpositive jump factor marks
// the path excluded instead of throwing; mmm_density_strict throws.
MeasurePath mmm_density(const ModelSpec& spec, const PathSample& path,
                        const StructureCoefficients& coeffs);
MeasurePath mmm_density_strict(const ModelSpec& spec, const PathSample& path,
                               const StructureCoefficients& coeffs);

}  // namespace pohedge
