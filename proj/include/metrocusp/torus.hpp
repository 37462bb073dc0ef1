#pragma once

#include <complex>
#include <string>
#include <vector>

#include "metrocusp/common.hpp"
#include "metrocusp/kernel.hpp"

namespace metrocusp {

// Fourier-coefficient field on the torus (R/2Z)^d in the basis
//   e_k(x) = 2^{-d/2} exp(i pi <k,x>),  k integer.
// Axes are grouped (d1 | d_prime | d_doubleprime) with d1 in {0,1}; the first
// group is the cusp axis when present. Coefficients are stored densely for
// |k_i| <= band[i].
class TorusField {
  public:
    TorusField(int d1, int d_prime, int d_doubleprime, std::array<int, 3> band);

    int dim() const { return d1_ + dp_ + dpp_; }
    int d1() const { return d1_; }
    int d_prime() const { return dp_; }
    int d_doubleprime() const { return dpp_; }
    const std::array<int, 3>& band() const { return band_; }

    std::complex<double>& at(const std::array<int, 3>& k);
    std::complex<double> at(const std::array<int, 3>& k) const;

    // iterate over all stored frequencies
    template <class F>
    void for_each(F&& fn) const {
        std::array<int, 3> k{0, 0, 0};
        int d = dim();
        for (k[2] = -band_[2]; k[2] <= band_[2]; ++k[2])
            for (k[1] = -band_[1]; k[1] <= band_[1]; ++k[1])
                for (k[0] = -band_[0]; k[0] <= band_[0]; ++k[0]) {
                    std::array<int, 3> kk = k;
                    for (int i = d; i < 3; ++i) kk[static_cast<size_t>(i)] = 0;
                    fn(kk, at(kk));
                    (void)kk;
                }
    }

    double l2_norm_sq() const;  // sum |c_k|^2 = L2 norm on the torus (Parseval)
    std::complex<double> evaluate(const Point& x) const;  // direct series sum

    // grouped window |h . k|: (hbar k_1, htilde k', h k'')
    static double scaled_norm(const std::array<int, 3>& k, int d1, int dp, int dpp,
                              const AnisotropicScale& s);

    std::vector<std::complex<double>>& data() { return c_; }
    const std::vector<std::complex<double>>& data() const { return c_; }

  private:
    int d1_, dp_, dpp_;
    std::array<int, 3> band_;
    std::vector<std::complex<double>> c_;
    size_t index(const std::array<int, 3>& k) const;
};

// Samples of a real field on the unit cube (0,1)^d at cell centers
// ((j+1/2)/n per axis), x-fastest ordering, axes grouped as in TorusField.
struct CubeSamples {
    int d1 = 1;
    int d_prime = 1;
    int d_doubleprime = 0;
    std::array<int, 3> nx{1, 1, 1};
    std::vector<double> values;

    int dim() const { return d1 + d_prime + d_doubleprime; }
    long size() const {
        return static_cast<long>(nx[0]) * nx[1] * nx[2];
    }
};

// Extension by reflection through the hyperplanes {x_i = 1} to a 2Z^d-periodic
// field, returned as its (real, even) coefficient table. R(E(f)) = f on the
// sample grid exactly.
TorusField reflect_extend(const CubeSamples& f);

// Evaluate the (real-even) field back on a cube grid; inverse of reflect_extend
// when the grids match.
CubeSamples restrict_to_cube(const TorusField& g, const std::array<int, 3>& nx);

// Fourier transform of the normalized ball indicator in dimension n >= 1:
//   B_n(xi) = (1/V_n) \int_{|z|<1} e^{i pi z . xi} dz,  radial in xi.
// |B_n| <= 1 with equality only at 0; quadratic coefficient at 0 is
// pi^2 / (2 (n+2)).
double ball_multiplier(int n, double xi);

// Apply the anisotropic ball-averaging operator as a multiplier:
// coefficient at k is scaled by B_1(hbar k1) B_d'(htilde |k'|) B_d''(h |k''|).
// Scale components must lie in (0,1).
TorusField torus_metropolis_apply(const TorusField& g, const AnisotropicScale& scale);

// <(1 - Tbar) g, g> = sum_k (1 - multiplier(k)) |c_k|^2
double torus_dirichlet_energy(const TorusField& g, const AnisotropicScale& scale);

struct SplitFields {
    TorusField low;
    TorusField high;
};
// low keeps modes with |(hbar k1, htilde k', h k'')| < delta; low + high
// reproduces the field coefficientwise exactly.
SplitFields low_high_split(const TorusField& g, const AnisotropicScale& scale, double delta);

// Scan for the largest frequency threshold delta such that
//   1 - multiplier(xi) >= |xi|^2 / Upsilon1   for all |xi| < delta,
// with 1/Upsilon1 = (1/4) min over the axis groups of 1/(2(n+2)); also reports
// the measured Upsilon2 with 1 - multiplier >= 1/Upsilon2 for |xi| >= delta.
struct DeltaScan {
    double delta = 0.0;
    double upsilon1 = 0.0;
    double upsilon2 = 0.0;
};
DeltaScan delta_threshold_scan(int d1, int d_prime, int d_doubleprime, double scan_limit = 4.0);

void export_coefficients_csv(const TorusField& g, const std::string& path);

}  // namespace metrocusp
