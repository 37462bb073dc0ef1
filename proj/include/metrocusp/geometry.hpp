#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metrocusp/common.hpp"

namespace metrocusp {

// One cusp-shaped boundary piece: in chart coordinates the domain looks like
//   { 0 < x1 < epsilon, |x'| < x1^alpha, |x''| < r }.
// Placement is restricted to axis-aligned frames: `axis` names the ambient
// coordinate playing the x1 role, `sign` its orientation, `origin` the tip.
struct CuspChart {
    double alpha = 1.5;
    int d_prime = 1;
    int d_doubleprime = 0;
    double epsilon = 1.0;
    double r = 1.0;
    Point origin;
    int axis = 0;
    int sign = 1;

    double sharpness() const { return (alpha - 1.0) * d_prime; }
};

struct AxisBox {
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{0, 0, 0};
};

// Bounded domain given as a union of axis boxes and placed cusp charts.
// gamma is derived; construction rejects configurations with gamma >= 2.
class DomainSpec {
  public:
    static DomainSpec interval(double a, double b);
    static DomainSpec box(const AxisBox& b, int dim);
    static DomainSpec with_pieces(int dim, std::vector<AxisBox> boxes,
                                  std::vector<CuspChart> charts);

    int dim() const { return dim_; }
    double gamma() const { return gamma_; }
    const std::vector<AxisBox>& boxes() const { return boxes_; }
    const std::vector<CuspChart>& charts() const { return charts_; }

    bool contains(const Point& x) const;
    AxisBox bounding_box() const;
    double volume_hint() const;  // exact for our piece types (disjoint pieces assumed)

    std::string serialize() const;
    static DomainSpec parse(const std::string& text);

  private:
    DomainSpec() = default;
    void validate() const;
    int dim_ = 1;
    double gamma_ = 0.0;
    std::vector<AxisBox> boxes_;
    std::vector<CuspChart> charts_;
};

double gamma_exponent(const DomainSpec& d);

// The exact cusp { 0 < x1 < 1, |x'| < x1^alpha, |x''| < 1 }.
struct ModelCusp {
    double alpha = 1.5;
    int d_prime = 1;
    int d_doubleprime = 0;

    ModelCusp(double a, int dp, int dpp) : alpha(a), d_prime(dp), d_doubleprime(dpp) {
        if (!(alpha > 1.0)) throw std::invalid_argument("ModelCusp: alpha must be > 1");
        if (d_prime < 1 || d_doubleprime < 0) throw std::invalid_argument("ModelCusp: bad dims");
    }
    int dim() const { return 1 + d_prime + d_doubleprime; }
    bool contains(const Point& x) const;
    DomainSpec as_domain() const;
};

struct DyadicSlab {
    int k = 0;
    ModelCusp parent;
    bool contains(const Point& x) const;  // parent cusp intersected with the slab
};

// --- quadrature control for volume computations -----------------------------
struct QuadratureSpec {
    enum class Kind { Exact, MonteCarlo };
    Kind kind = Kind::Exact;
    double tol = 1e-10;
    long mc_samples = 1000000;
    uint64_t seed = 1;
};

struct VolumeResult {
    double value = 0.0;
    double std_error = 0.0;  // zero on the deterministic paths
};

// vol( Omega \cap B(x,h) ), euclidean ball. x must lie in Omega.
VolumeResult ball_volume(const DomainSpec& domain, const Point& x, double h,
                         const QuadratureSpec& quad = {});

// Sup-norm box volume in the (x1,x') section of the model cusp:
//   vol{ (y1,y') : |y'| < y1^alpha, 0 < y1 < 1, |y'-x'| < h, |y1-x1| < h }.
// Exact for d_prime = 1; the tip value has the closed form
//   V_{d'} h^{alpha d' + 1} / (alpha d' + 1) for every d'.
double box_volume_sup(const ModelCusp& model, double x1, double xprime, double h);
double box_volume_sup_tip(const ModelCusp& model, double h);

// Area of [a1,b1]x[a2,b2] \cap { 0 < x < eps, |y| < x^alpha }, exact
// (piecewise power antiderivatives).
double cusp_cell_area(double alpha, double eps, double a1, double b1, double a2, double b2);

// --- cell grids ---------------------------------------------------------------
// Regular lattice of spacing `delta` covering the bounding box; one node per
// cell whose intersection with the domain has positive volume, weighted by the
// exact cell-overlap volume (slice integration for 1D/2D pieces, cell-center
// membership in 3D). Pieces are assumed disjoint.
struct CellGrid {
    int dim = 1;
    double delta = 0.0;
    std::array<double, 3> lo{0, 0, 0};
    std::array<int, 3> nx{1, 1, 1};
    std::vector<Point> centers;
    std::vector<double> weights;
    std::vector<std::array<int, 3>> lattice;  // integer cell index per node
    std::vector<int> node_of_cell;            // flat cell index -> node id or -1

    long flat(const std::array<int, 3>& ix) const {
        return (static_cast<long>(ix[2]) * nx[1] + ix[1]) * nx[0] + ix[0];
    }
};

CellGrid build_cell_grid(const DomainSpec& domain, double delta);

// exact volume of the axis cell [c_lo, c_hi] \cap domain (1D/2D; 3D falls back
// to center membership times cell volume)
double cell_overlap_volume(const DomainSpec& domain, const std::array<double, 3>& c_lo,
                           const std::array<double, 3>& c_hi);

// --- dyadic changes of variables on the model cusp --------------------------
// Slab Omega_k = Omega \cap { 2^-(k+1) < x1 < 2^-k }; tau_k maps it onto Omega_0.
Point dyadic_map_tau(const ModelCusp& m, int k, const Point& x);
Point dyadic_map_tau_inv(const ModelCusp& m, int k, const Point& u);
double dyadic_jacobian(const ModelCusp& m, int k);

// theta(x) = (x1, x1^-alpha x', x''), defined for x1 > 0; maps Omega_j onto
// B_j = { 2^-(j+1) < x1 < 2^-j, |x'| < 1, |x''| < 1 } componentwise.
Point straighten(const ModelCusp& m, const Point& x);
Point straighten_inv(const ModelCusp& m, const Point& u);

// Compositions: sigma_k = theta o tau_k : Omega_k -> B_0,
// sigma_hat_k = theta o tau_hat_k : Omega_k -> B_1 (tau_hat_k uses scale k-1),
// sigma_check_1(u) = (2 u1, u', u'') so that sigma_k = sigma_check_1 o sigma_hat_k.
Point sigma_k(const ModelCusp& m, int k, const Point& x);
Point sigma_k_inv(const ModelCusp& m, int k, const Point& u);
Point sigma_hat_k(const ModelCusp& m, int k, const Point& x);
Point sigma_check_1(const Point& u);

}  // namespace metrocusp
