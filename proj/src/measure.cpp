#include "metrocusp/measure.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace metrocusp {

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace

DensitySpec DensitySpec::constant(double c) {
    if (!(c > 0.0)) throw std::invalid_argument("constant density must be positive");
    DensitySpec d([c](const Point&) { return c; }, c, c, Smoothness::C1, "constant");
    d.params_ = {c};
    return d;
}

DensitySpec DensitySpec::affine(int axis, double a, double b, double m, double M) {
    DensitySpec d([axis, a, b](const Point& x) { return a + b * x[axis]; }, m, M,
                  Smoothness::C1, "affine");
    d.params_ = {static_cast<double>(axis), a, b};
    return d;
}

DensitySpec DensitySpec::gaussian(const Point& center, double sigma, double m, double M) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian density: sigma must be > 0");
    DensitySpec d(
        [center, sigma](const Point& x) {
            double s = 0.0;
            for (int i = 0; i < x.dim; ++i) {
                double t = x[i] - center[i];
                s += t * t;
            }
            return std::exp(-s / (2.0 * sigma * sigma));
        },
        m, M, Smoothness::C1, "gaussian");
    d.params_ = {static_cast<double>(center.dim), center[0], center[1], center[2], sigma};
    return d;
}

DensitySpec DensitySpec::piecewise(int axis, double split, double value_lo, double value_hi,
                                   double m, double M) {
    if (!(value_lo > 0.0 && value_hi > 0.0))
        throw std::invalid_argument("piecewise density: values must be positive");
    DensitySpec d(
        [axis, split, value_lo, value_hi](const Point& x) {
            return x[axis] < split ? value_lo : value_hi;
        },
        m, M, Smoothness::Measurable, "piecewise");
    d.params_ = {static_cast<double>(axis), split, value_lo, value_hi};
    return d;
}

DensitySpec normalize(const DensitySpec& density, const DomainSpec& domain,
                      long grid_per_axis) {
    long n = grid_per_axis;
    if (n <= 0) n = domain.dim() == 1 ? 4096 : (domain.dim() == 2 ? 512 : 64);
    AxisBox bb = domain.bounding_box();
    double longest = 0.0;
    for (int i = 0; i < domain.dim(); ++i)
        longest = std::max(longest, bb.hi[static_cast<size_t>(i)] - bb.lo[static_cast<size_t>(i)]);
    CellGrid g = build_cell_grid(domain, longest / static_cast<double>(n));
    double mass = 0.0;
    for (size_t i = 0; i < g.centers.size(); ++i) {
        double v = density.raw(g.centers[i]);
        if (!(v > 0.0))
            throw std::invalid_argument("normalize: nonpositive density sample at node " +
                                        std::to_string(i));
        mass += v * g.weights[i];
    }
    DensitySpec out = density;
    out.Z_ = mass;
    if (out.name_ == "constant") {
        // exact, not inferred: a constant density is c/Z everywhere
        out.m_ = out.M_ = density.raw(g.centers[0]) / mass;
        return out;
    }
    // audit declared bounds on the quadrature nodes, with quadrature slack
    for (size_t i = 0; i < g.centers.size(); ++i) {
        double v = density.raw(g.centers[i]) / mass;
        if (v < out.m_ * (1.0 - 1e-4) || v > out.M_ * (1.0 + 1e-4))
            throw std::invalid_argument("normalize: declared bounds violated at a node: value " +
                                        fmt(v) + " outside [" + fmt(out.m_) + ", " + fmt(out.M_) +
                                        "]");
    }
    return out;
}

double weighted_inner_product(const std::vector<double>& u, const std::vector<double>& v,
                              const DensitySpec& density, const std::vector<Point>& nodes,
                              const std::vector<double>& weights) {
    if (u.size() != v.size() || u.size() != nodes.size() || u.size() != weights.size())
        throw std::invalid_argument("weighted_inner_product: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < u.size(); ++i)
        s += u[i] * v[i] * density.value(nodes[i]) * weights[i];
    return s;
}

std::string DensitySpec::serialize() const {
    std::ostringstream os;
    os << "density { kind " << name_;
    os << " params";
    for (double p : params_) os << " " << fmt(p);
    os << " m " << fmt(m_) << " M " << fmt(M_) << " smoothness "
       << (smooth_ == Smoothness::C1 ? "C1" : "Measurable") << " Z " << fmt(Z_) << " }\n";
    return os.str();
}

DensitySpec DensitySpec::parse(const std::string& text) {
    std::istringstream is(text);
    std::string tok, kind;
    auto expect = [&](const char* w) {
        if (!(is >> tok) || tok != w)
            throw std::invalid_argument(std::string("DensitySpec::parse: expected ") + w);
    };
    expect("density");
    expect("{");
    expect("kind");
    is >> kind;
    expect("params");
    std::vector<double> p;
    while (is >> tok && tok != "m") p.push_back(std::stod(tok));
    double m, M;
    is >> m;
    expect("M");
    is >> M;
    expect("smoothness");
    std::string sm;
    is >> sm;
    expect("Z");
    double Z;
    is >> Z;
    expect("}");

    DensitySpec d = DensitySpec::constant(1.0);
    if (kind == "constant")
        d = DensitySpec::constant(p.at(0));
    else if (kind == "affine")
        d = DensitySpec::affine(static_cast<int>(p.at(0)), p.at(1), p.at(2), m, M);
    else if (kind == "gaussian") {
        Point c;
        c.dim = static_cast<int>(p.at(0));
        c[0] = p.at(1);
        c[1] = p.at(2);
        c[2] = p.at(3);
        d = DensitySpec::gaussian(c, p.at(4), m, M);
    } else if (kind == "piecewise")
        d = DensitySpec::piecewise(static_cast<int>(p.at(0)), p.at(1), p.at(2), p.at(3), m, M);
    else
        throw std::invalid_argument("DensitySpec::parse: unknown kind " + kind);
    d.Z_ = Z;
    d.m_ = m;
    d.M_ = M;
    return d;
}

}  // namespace metrocusp
