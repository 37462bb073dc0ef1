#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "metrocusp/geometry.hpp"
#include "metrocusp/torus.hpp"

namespace metrocusp {

struct AnisotropicSobolevParams {
    double lambda1 = 1.0;
    double lambda_prime = 1.0;
    double lambda_doubleprime = 1.0;
    double s = 1.0;

    AnisotropicSobolevParams() = default;
    AnisotropicSobolevParams(double l1, double lp, double lpp, double order)
        : lambda1(l1), lambda_prime(lp), lambda_doubleprime(lpp), s(order) {
        if (!(l1 > 0.0 && lp > 0.0 && lpp > 0.0))
            throw std::invalid_argument("AnisotropicSobolevParams: lambdas must be positive");
    }
};

// || <lambda . k>^s  c_k ||_{l2}
double sobolev_norm(const TorusField& g, const AnisotropicSobolevParams& p);

// Trace on {x1 = a}: coefficients (1/sqrt 2) sum_{k1} e^{i pi k1 a} c(k1, kt).
// Requires p.s > 1/2. The returned field has no x1 axis.
TorusField trace_restriction(const TorusField& g, double a, const AnisotropicSobolevParams& p);

// For fields with zero x1-mean: measured constant in the trace inequality
//   ||trace||_{H^{s-1/2}_{lt}} <= C lambda1^{-1/2} ||g||_{H^s_lambda}.
double trace_bound_constant(const TorusField& g, double a, const AnisotropicSobolevParams& p);

// ---------------------------------------------------------------------------
// Semi-spectral field on a slab [a,b] x Pi^{d-1}: x1 sampled on an endpoint-
// inclusive uniform grid, transverse directions in Fourier coefficients
// (basis 2^{-(d-1)/2} e^{i pi kt.y}).  The mixed Sobolev norm uses the true
// x1 derivative and integer transverse frequencies:
//   ||f||_{H1_lambda}^2 = ||f||^2 + ||l1 d1 f||^2 + sum (|lp k'|^2 + |lpp k''|^2)|c|^2.
// ---------------------------------------------------------------------------
struct SlabField {
    double a = 0.0, b = 1.0;
    int n1 = 2;
    int d_prime = 1;
    int d_doubleprime = 0;
    std::array<int, 2> tband{0, 0};
    std::vector<std::complex<double>> c;  // [j1 * tcount + t]

    int tdim() const { return d_prime + d_doubleprime; }
    long tcount() const {
        return static_cast<long>(2 * tband[0] + 1) * (2 * tband[1] + 1);
    }
    long tindex(const std::array<int, 2>& kt) const;
    std::array<int, 2> tfreq(long t) const;
    double x1(int j) const { return a + (b - a) * j / (n1 - 1); }
    std::complex<double>& at(int j, long t) { return c[static_cast<size_t>(j * tcount() + t)]; }
    std::complex<double> at(int j, long t) const { return c[static_cast<size_t>(j * tcount() + t)]; }

    static SlabField zeros(double a, double b, int n1, int d_prime, int d_doubleprime,
                           std::array<int, 2> tband);

    double l2_norm() const;
    double h1_lambda_norm(const AnisotropicSobolevParams& lambda) const;
    std::vector<std::complex<double>> trace_at(int j) const;  // coefficient row
};

// Interface bridge of the H1 gluing construction: a separable correction
//   psi(x1, y) = sum_kt profile_kt(x1 - b) theta_kt e(y)
// supported on [b, b + h*lambda1), with psi(b, .) equal to the prescribed
// transverse jump theta.  profile_kt uses the bump rho at argument s/(h l1)
// for <kt> <= 1/h and s <kt>/l1 for <kt> >= 1/h.
struct GlueResult {
    std::vector<std::complex<double>> theta;  // jump coefficients
    std::array<int, 2> tband{0, 0};
    int d_prime = 1, d_doubleprime = 0;
    double b = 0.0;          // interface position
    double width = 0.0;      // support width h*lambda1 (profile occupies half)
    double lambda1 = 1.0;
    double h = 0.0;
    int orientation = +1;    // +1: support to the right of b, -1: to the left

    double l2_norm = 0.0;
    double h1_lambda_norm = 0.0;
    double trace_residual = 0.0;

    // evaluate psi and its x1 derivative at (x1, transverse coefficients row)
    void add_profile_row(double x1, std::vector<std::complex<double>>& coeff_row,
                         double sign = 1.0) const;
    void add_profile_deriv_row(double x1, std::vector<std::complex<double>>& coeff_row,
                               double sign = 1.0) const;
};

// smooth bump: rho(0) = 1, support in [0, 1/2]
double glue_profile(double s);
double glue_profile_deriv(double s);

struct GlueHypothesesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Lemma-style gluing: phi0 on [a,b], phi1 on [b,c], phi2 and r2 on [a,c] with
// f = 1_{A0} phi0 + 1_{A1} phi1 = phi2 + r2. Audits
//   ||phi_j||_{H1_lambda} <= 1,  ||r2||_{L2} <= h,  lambda1 h <= width cap
// and throws GlueHypothesesError naming the violated bound otherwise.
GlueResult glue_h1(const SlabField& phi0, const SlabField& phi1, const SlabField& phi2,
                   const SlabField& r2, const AnisotropicSobolevParams& lambda, double h,
                   int orientation = +1, double lambda1_h_cap = 0.25);

// --- dyadic norm identities -----------------------------------------------------
struct DyadicIdentityReport {
    int depth = 0;
    double l2_direct = 0.0;    // cell-grid quadrature with Richardson step
    double l2_dyadic = 0.0;    // sum over slabs of the rescaled pullback norms
    double l2_residual = 0.0;  // relative
    double h1_direct = 0.0;
    double h1_dyadic = 0.0;    // straightened-chart N-form sum
    double h1_ratio = 0.0;
};

using FieldEval = std::function<double(const Point&)>;
using GradEval = std::function<Point(const Point&)>;

DyadicIdentityReport dyadic_norm_identity_check(const ModelCusp& model, const FieldEval& f,
                                                const GradEval& grad, int depth);

// --- low-energy decomposition pipeline -------------------------------------------
struct DecompositionOptions {
    int n1 = 64;             // x1 samples per even/odd sub-block cube
    int ntr = 64;            // transverse samples
    double h2 = 0.0;         // depth scale threshold; 0 = min(1/4, delta scan)
    double delta_split = 0.0;  // frequency split threshold; 0 = measured scan
    double energy_budget = 1.0;  // audited bound on ||f||^2 + E_h(f)/h^2 before rescaling
    long mc_pairs = 200000;  // pair samples for the energy audit
    uint64_t seed = 99;
};

struct DecompositionReport {
    double h = 0.0;
    int levels = 0;  // K(h) + 1 blocks processed
    double h2 = 0.0;
    double delta_split = 0.0;
    double input_l2 = 0.0;
    double input_energy = 0.0;   // E_h(f) estimate
    double scale_applied = 1.0;  // f was divided by this before processing
    double norm_fC = 0.0;
    double norm_fL_l2 = 0.0;
    double norm_fL_grad = 0.0;   // || grad f_L ||_{L2(Omega)}
    double norm_fH = 0.0;
    double collar_max_x1 = 0.0;  // max x1 over supp f_C
    double reconstruction_residual = 0.0;  // relative, on the block grids
    double max_trace_mismatch = 0.0;       // retained interfaces of f_L
    std::vector<std::array<double, 5>> per_level;  // k, l2_fL, h1_fL, l2_fH, trace_residual
    std::string to_json() const;
    void per_level_csv(const std::string& path) const;
};

// Executes the block pipeline: straighten each quadriadic block, extend to the
// torus, split low/high at the measured threshold, glue interface jumps, stop
// at the depth K(h) fixed by h2, and continue the transverse mean of the last
// trace into the tip as the constant part of f_L. f_C collects the remainder
// below the collar.
DecompositionReport decompose_low_energy(const ModelCusp& model, const FieldEval& f, double h,
                                         const DecompositionOptions& opts = {});

// Randomized gluing sweep: `runs` hypothesis-satisfying inputs at window h,
// bridging a jump of size ~h across x1 = 1/2. Reports the worst constants and
// whether doubling the jump doubles the bridge bitwise.
struct GlueSuiteResult {
    double h = 0.0;
    int runs = 0;
    double max_h1 = 0.0;           // max |psi|_{H1_lambda}
    double max_l2_over_h = 0.0;    // max |psi|_{L2} / h
    double max_trace_residual = 0.0;
    bool linearity_exact = true;
};
GlueSuiteResult glue_suite(double h, int runs, uint64_t seed);

}  // namespace metrocusp
