#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "metrocusp/common.hpp"
#include "metrocusp/geometry.hpp"

namespace metrocusp {

enum class Smoothness { C1, Measurable };

// Target density with declared two-sided bounds. `evaluate` returns the raw
// (unnormalized) value; callers see value/Z. Bounds m, M refer to the
// normalized density and are audited on quadrature nodes, never inferred.
class DensitySpec {
  public:
    using Eval = std::function<double(const Point&)>;

    DensitySpec(Eval f, double m, double M, Smoothness s, std::string name = "custom")
        : eval_(std::move(f)), m_(m), M_(M), smooth_(s), name_(std::move(name)) {
        if (!(m > 0.0) || !(M >= m))
            throw std::invalid_argument("DensitySpec: need 0 < m <= M");
    }

    static DensitySpec constant(double c = 1.0);
    static DensitySpec affine(int axis, double a, double b, double m, double M);
    // exp(-|x-c|^2 / (2 s^2)) restricted to the domain
    static DensitySpec gaussian(const Point& center, double sigma, double m, double M);
    // value_lo on {x[axis] < split}, value_hi elsewhere (Measurable)
    static DensitySpec piecewise(int axis, double split, double value_lo, double value_hi,
                                 double m, double M);

    double value(const Point& x) const { return eval_(x) / Z_; }
    double raw(const Point& x) const { return eval_(x); }
    double lower_bound() const { return m_; }
    double upper_bound() const { return M_; }
    double normalization() const { return Z_; }
    Smoothness smoothness() const { return smooth_; }
    const std::string& name() const { return name_; }

    std::string serialize() const;
    static DensitySpec parse(const std::string& text);

    friend DensitySpec normalize(const DensitySpec& density, const DomainSpec& domain,
                                 long grid_per_axis);

  private:
    Eval eval_;
    double m_, M_;
    double Z_ = 1.0;
    Smoothness smooth_;
    std::string name_;
    std::vector<double> params_;  // for serialization of builtin families
};

// Sets Z so that the quadrature mass of evaluate/Z over the domain is 1.
// Nonpositive samples are rejected. grid_per_axis controls the tensor
// midpoint rule (cells clipped exactly where the geometry allows).
DensitySpec normalize(const DensitySpec& density, const DomainSpec& domain,
                      long grid_per_axis = 2048);

// sum_i u_i conj(v_i) rho(x_i) w_i  (real vectors here)
double weighted_inner_product(const std::vector<double>& u, const std::vector<double>& v,
                              const DensitySpec& density, const std::vector<Point>& nodes,
                              const std::vector<double>& weights);

}  // namespace metrocusp
