#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "metrocusp/geometry.hpp"
#include "metrocusp/measure.hpp"

namespace metrocusp {

// Proposal windows along the cusp axis (h_bar), the transverse block (h_tilde)
// and the tangential block (h); composite volume h_bar * h_tilde^d' * h^d''.
struct AnisotropicScale {
    double h_bar = 0.1;
    double h_tilde = 0.1;
    double h = 0.1;

    AnisotropicScale(double hb, double ht, double hh) : h_bar(hb), h_tilde(ht), h(hh) {
        if (!(hb > 0.0 && ht > 0.0 && hh > 0.0))
            throw std::invalid_argument("AnisotropicScale: components must be positive");
    }
    double composite_volume(int d_prime, int d_doubleprime) const {
        return h_bar * std::pow(h_tilde, d_prime) * std::pow(h, d_doubleprime);
    }
};

// Pointwise kernel density  h^-d phi((x-y)/h) min(rho(y)/rho(x), 1)  with
// phi the normalized ball indicator.
double kernel_density(const Point& x, const Point& y, double h, const DomainSpec& domain,
                      const DensitySpec& density);

// Continuum rejection mass m_h(x) = 1 - \int_Omega k(x,y) dy.
VolumeResult rejection_mass(const Point& x, double h, const DomainSpec& domain,
                            const DensitySpec& density, const QuadratureSpec& quad = {});

// One Metropolis step: propose uniformly in B(x,h); stay on exit or rejection.
struct ChainStep {
    Point position;
    bool accepted = false;
};
ChainStep chain_step(const Point& x, double h, const DomainSpec& domain,
                     const DensitySpec& density, Rng& rng);

// ---------------------------------------------------------------------------
// Grid discretization of the Metropolis operator. Node i is the cell center
// of a lattice cell, weighted by the exact cell volume inside Omega. The
// kernel table is built from the cell-pair averaged kernel
//
//   K[i][j] = base_ij / (rho_i w_i),
//   base_ij = Vbar_ij min(rho_i, rho_j) / (V_d h^d),
//
// where Vbar_ij approximates \int_{cell_i \cap Omega} \int_{cell_j \cap Omega}
// 1_{|x-y|<h} by the full-cell pair overlap scaled with the inside fractions.
// This keeps every row sum <= 1 (so m_i >= 0 structurally), keeps detailed
// balance exact because base_ij is symmetric, and makes the spectral bias of
// the discretization O((delta/h)^2). The averaged kernel is supported on
// |x_i - x_j| < h + sqrt(d) delta rather than strictly |x_i - x_j| < h.
// ---------------------------------------------------------------------------
struct DiscretizedOperator {
    CellGrid grid;
    std::vector<double> rho;   // normalized density at cell centers
    std::vector<double> mu;    // rho_i * w_i; the stationary weights
    std::vector<double> m;     // rejection mass per node
    double h = 0.0;

    // CSR over the symmetric base
    std::vector<long> row_ptr;
    std::vector<int> col;
    std::vector<double> base;

    int size() const { return static_cast<int>(grid.centers.size()); }
    int dim() const { return grid.dim; }
    double delta() const { return grid.delta; }

    double kernel_entry(int i, long nz) const {  // K[i][j] for the nz-th entry of row i
        return base[static_cast<size_t>(nz)] / mu[static_cast<size_t>(i)];
    }
    // cell-averaged pointwise kernel value k(x_i, x_j)
    double kernel_pointwise(int i, long nz) const {
        int j = col[static_cast<size_t>(nz)];
        return base[static_cast<size_t>(nz)] /
               (rho[static_cast<size_t>(i)] *
                (grid.weights[static_cast<size_t>(i)] * grid.weights[static_cast<size_t>(j)]));
    }

    std::vector<double> apply(const std::vector<double>& u) const;
    double inner(const std::vector<double>& u, const std::vector<double>& v) const;  // <u,v>_mu
    double sup_rejection() const;
};

struct AssemblyOptions {
    double negative_mass_tol = 1e-12;  // clamp-and-renormalize below, abort above
};

DiscretizedOperator assemble_operator(const DomainSpec& domain, const DensitySpec& density,
                                      double h, double grid_spacing,
                                      const AssemblyOptions& opts = {});

// Dirichlet form E_h(f) = <(1-T)f, f>_mu, with the equivalent pair-sum route
// (1/2) sum_ij base_ij (f_i - f_j)^2; both returned for cross-checking.
struct DirichletFormResult {
    double via_operator = 0.0;
    double via_pair_sum = 0.0;
};
DirichletFormResult dirichlet_form(const DiscretizedOperator& op, const std::vector<double>& f);

// Sup-norm-window pair form on the operator's nodes (same 1/(2 V_d h^d)
// normalization, min(rho) pair weight); used for the metric-equivalence checks.
double dirichlet_form_supnorm(const DiscretizedOperator& op, const std::vector<double>& f,
                              double window);

// Anisotropic pair form on a regular box grid (no domain clipping):
//   E^A_h(f) = 1/(2 V_d hbar htilde^d' h^d'') * sum over pairs within the
//   componentwise window of (f_i-f_j)^2 dV^2.
// Axes are grouped (1, d', d'') in order. The grid must resolve the smallest
// window component by at least `min_cells_per_window` cells.
struct BoxGridField {
    int dim = 1;
    int d_prime = 0;
    int d_doubleprime = 0;
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{0, 0, 0};
    std::array<int, 3> nx{1, 1, 1};
    std::vector<double> values;  // x-fastest ordering

    long flat(const std::array<int, 3>& ix) const {
        return (static_cast<long>(ix[2]) * nx[1] + ix[1]) * nx[0] + ix[0];
    }
    double spacing(int axis) const {
        return (hi[static_cast<size_t>(axis)] - lo[static_cast<size_t>(axis)]) /
               nx[static_cast<size_t>(axis)];
    }
};

double anisotropic_dirichlet_form(const BoxGridField& f, const AnisotropicScale& scale,
                                  int min_cells_per_window = 10);

// chain trajectory export: CSV rows  step,x...,accepted
void export_chain_csv(const std::string& path, const std::vector<ChainStep>& traj);
void export_operator_triplets(const DiscretizedOperator& op, const std::string& path);
void export_operator_nodes(const DiscretizedOperator& op, const std::string& path);

}  // namespace metrocusp
