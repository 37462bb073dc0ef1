#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metrocusp/kernel.hpp"

namespace metrocusp {

struct EigenPair {
    double value = 0.0;
    std::vector<double> vector;  // original (unsymmetrized) coordinates, mu-orthonormal
};

struct EigenOptions {
    enum class Method { Auto, Dense, Lanczos };
    Method method = Method::Auto;
    int dense_threshold = 1500;
    int max_iterations = 600;
    double tol = 1e-10;
    uint64_t seed = 12345;
};

struct EigenResult {
    std::vector<EigenPair> pairs;  // sorted by eigenvalue, descending
    int iterations = 0;
    double residual = 0.0;
    bool dense = false;
};

// Largest `count` eigenvalues of the symmetrized operator D^{1/2} T D^{-1/2},
// D = diag(rho_i w_i). The constant mode (eigenvalue exactly 1) is deflated
// analytically on the iterative path and prepended to the result.
EigenResult eigen_top(const DiscretizedOperator& op, int count, const EigenOptions& opts = {});

// Smallest `count` eigenvalues (bottom of the spectrum).
EigenResult eigen_bottom(const DiscretizedOperator& op, int count, const EigenOptions& opts = {});

// gap = 1 - lambda_2; throws if 1 is not a simple eigenvalue.
double spectral_gap(const DiscretizedOperator& op, const EigenOptions& opts = {});

struct SpectralCluster {
    double center = 0.0;
    int multiplicity = 0;
    std::vector<double> values;
};

// All rescaled eigenvalues (1-lambda)/h^2 in (0, R], grouped into clusters.
// cluster_tol <= 0 selects max(0.05 * nu_1, 3 * richardson_error).
std::vector<SpectralCluster> rescaled_spectrum(const DiscretizedOperator& op, double R,
                                               double cluster_tol = 0.0,
                                               double richardson_error = 0.0,
                                               const EigenOptions& opts = {});

// --- weighted Neumann reference -----------------------------------------------
// Finite-volume discretization of u -> -c_d (1/rho) div(rho grad u) with the
// natural boundary condition, c_d = 1/(2(d+2)); eigenvalues Richardson-
// extrapolated over (delta, delta/2).
struct NeumannReference {
    std::vector<double> eigenvalues;         // extrapolated, ascending, nu_0 = 0 first
    std::vector<double> eigenvalues_coarse;  // at delta
    std::vector<double> eigenvalues_fine;    // at delta/2
    double constant_used = 0.0;
};
NeumannReference neumann_reference(const DomainSpec& domain, const DensitySpec& density,
                                   int mode_count, double delta);

// --- localization sweep ---------------------------------------------------------
struct LocalizationCheck {
    std::vector<double> h_values;
    std::vector<double> sup_rejection;   // sup_i m_i per h
    std::vector<double> min_eigenvalue;  // bottom of the spectrum per h
    double slope_one_minus_supm = 0.0;   // fitted d log(1－sup m)/d log h
    double intercept_one_minus_supm = 0.0;
    double min_edge_constant = 0.0;      // min over h of (1 + min_eig)/h^gamma
};
LocalizationCheck spectrum_localization_check(const std::vector<const DiscretizedOperator*>& ops,
                                              double gamma, const EigenOptions& opts = {});

// --- total variation decay ------------------------------------------------------
struct TVReport {
    double h = 0.0;
    double gap = 0.0;
    std::vector<long> n_values;
    std::vector<double> tv_values;  // sup_x TV(t^n(x,.), mu)
    std::vector<int> sup_exact;     // 1 = max over all states, 0 = candidate subset
    double fitted_rate = 0.0;
    double fitted_prefactor = 0.0;
    bool partial = false;
};

struct TVOptions {
    int dense_threshold = 8500;
    double flop_budget = 4e10;  // per schedule point for the full-sup path
    double truncation_tol = 1e-18;
    uint64_t seed = 777;
};

TVReport tv_decay(const DiscretizedOperator& op, long n_max, const TVOptions& opts = {});

// --- rejection/jump splitting diagnostics ----------------------------------------
// T^p = A_p + B_p with A_1 = diag(m), B_1 = T - diag(m),
// A_{p+1} = diag(m) A_p, B_{p+1} = diag(m) B_p + (T - diag(m)) T^p.
struct SplittingDiagnostic {
    std::vector<double> a_norm_inf;      // ||A_p||_{inf->inf} = (sup m)^p
    std::vector<double> b_norm_2_inf;    // ||B_p||_{L2(mu)->inf}
    double max_recursion_residual = 0.0; // max_p ||A_p + B_p - T^p||_max
    double sup_rejection = 0.0;
};
SplittingDiagnostic operator_splitting_diagnostic(const DiscretizedOperator& op, int p_max);

// provenance carried by persisted reports
struct SpectralReport {
    double h = 0.0;
    double grid_spacing = 0.0;
    double gap = 0.0;
    double gap_richardson_error = 0.0;
    std::vector<std::pair<double, int>> top_eigenvalues;  // (value, cluster id)
    std::vector<double> rescaled;
    double min_eigenvalue = 0.0;
    double sup_rejection = 0.0;
    std::vector<double> reference_eigenvalues;
    double constant_used = 0.0;
    uint64_t seed = 0;
    double tol = 0.0;
    int solver_iterations = 0;
    std::string to_json() const;
};

std::string tv_report_to_json(const TVReport& r);

}  // namespace metrocusp
