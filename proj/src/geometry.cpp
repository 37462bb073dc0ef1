#include "metrocusp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "metrocusp/quadrature.hpp"

namespace metrocusp {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// chart coordinates of x: (x1, x', x'') with x1 along chart.axis
Point to_chart(const CuspChart& ch, const Point& x) {
    Point y;
    y.dim = x.dim;
    int j = 1;
    for (int i = 0; i < x.dim; ++i) {
        double v = x[i] - ch.origin[i];
        if (i == ch.axis)
            y[0] = ch.sign * v;
        else
            y[j++] = v;
    }
    return y;
}

bool chart_contains(const CuspChart& ch, const Point& x) {
    Point y = to_chart(ch, x);
    if (!(y[0] > 0.0 && y[0] < ch.epsilon)) return false;
    double sp = 0.0;
    for (int i = 0; i < ch.d_prime; ++i) sp += y[1 + i] * y[1 + i];
    if (!(sp < std::pow(y[0], 2.0 * ch.alpha))) return false;
    double spp = 0.0;
    for (int i = 0; i < ch.d_doubleprime; ++i) {
        double t = y[1 + ch.d_prime + i];
        spp += t * t;
    }
    if (ch.d_doubleprime > 0 && !(spp < ch.r * ch.r)) return false;
    return true;
}

bool box_contains(const AxisBox& b, const Point& x) {
    for (int i = 0; i < x.dim; ++i)
        if (!(x[i] > b.lo[static_cast<size_t>(i)] && x[i] < b.hi[static_cast<size_t>(i)]))
            return false;
    return true;
}

}  // namespace

DomainSpec DomainSpec::interval(double a, double b) {
    AxisBox bx;
    bx.lo[0] = a;
    bx.hi[0] = b;
    return with_pieces(1, {bx}, {});
}

DomainSpec DomainSpec::box(const AxisBox& b, int dim) { return with_pieces(dim, {b}, {}); }

DomainSpec DomainSpec::with_pieces(int dim, std::vector<AxisBox> boxes,
                                   std::vector<CuspChart> charts) {
    DomainSpec d;
    d.dim_ = dim;
    d.boxes_ = std::move(boxes);
    d.charts_ = std::move(charts);
    d.gamma_ = 0.0;
    for (const auto& ch : d.charts_) d.gamma_ = std::max(d.gamma_, ch.sharpness());
    d.validate();
    return d;
}

void DomainSpec::validate() const {
    if (dim_ < 1 || dim_ > 3) throw std::invalid_argument("DomainSpec: dim must be 1..3");
    if (boxes_.empty() && charts_.empty())
        throw std::invalid_argument("DomainSpec: empty piece list");
    for (const auto& b : boxes_)
        for (int i = 0; i < dim_; ++i)
            if (!(b.lo[static_cast<size_t>(i)] < b.hi[static_cast<size_t>(i)]))
                throw std::invalid_argument("DomainSpec: degenerate box");
    for (const auto& ch : charts_) {
        if (!(ch.alpha > 1.0)) throw std::invalid_argument("CuspChart: alpha must be > 1");
        if (!(ch.epsilon > 0.0)) throw std::invalid_argument("CuspChart: epsilon must be > 0");
        if (ch.d_doubleprime > 0 && !(ch.r > 0.0))
            throw std::invalid_argument("CuspChart: r must be > 0 when d'' > 0");
        if (1 + ch.d_prime + ch.d_doubleprime != dim_)
            throw std::invalid_argument("CuspChart: 1 + d' + d'' must equal dim");
        if (ch.axis < 0 || ch.axis >= dim_) throw std::invalid_argument("CuspChart: bad axis");
    }
    if (!charts_.empty()) {
        // sharpness window; gamma = 0 would need alpha = 1 which is excluded above
        if (!(gamma_ > 0.0 && gamma_ < 2.0))
            throw std::invalid_argument("DomainSpec: cusp sharpness gamma must lie in (0,2), got " +
                                        fmt(gamma_));
    }
    // charts must not overlap each other (we only support disjoint placements);
    // conservative test on the chart tips
    for (size_t i = 0; i + 1 < charts_.size(); ++i)
        for (size_t j = i + 1; j < charts_.size(); ++j) {
            const auto &a = charts_[i], &b = charts_[j];
            double d2 = 0.0;
            for (int t = 0; t < dim_; ++t) {
                double dd = a.origin[t] - b.origin[t];
                d2 += dd * dd;
            }
            if (d2 == 0.0) throw std::invalid_argument("DomainSpec: overlapping cusp charts");
        }
}

bool DomainSpec::contains(const Point& x) const {
    if (x.dim != dim_) throw std::invalid_argument("contains: point dimension mismatch");
    for (const auto& b : boxes_)
        if (box_contains(b, x)) return true;
    for (const auto& ch : charts_)
        if (chart_contains(ch, x)) return true;
    return false;
}

AxisBox DomainSpec::bounding_box() const {
    AxisBox out;
    bool first = true;
    auto merge = [&](const AxisBox& b) {
        for (int i = 0; i < dim_; ++i) {
            size_t s = static_cast<size_t>(i);
            if (first) {
                out.lo[s] = b.lo[s];
                out.hi[s] = b.hi[s];
            } else {
                out.lo[s] = std::min(out.lo[s], b.lo[s]);
                out.hi[s] = std::max(out.hi[s], b.hi[s]);
            }
        }
        first = false;
    };
    for (const auto& b : boxes_) merge(b);
    for (const auto& ch : charts_) {
        // chart image bounding box in ambient coordinates
        AxisBox b;
        int j = 1;
        double half[3] = {0, 0, 0};
        half[0] = 0.0;
        for (int i = 0; i < dim_; ++i) {
            size_t s = static_cast<size_t>(i);
            if (i == ch.axis) {
                b.lo[s] = ch.origin[i] + (ch.sign > 0 ? 0.0 : -ch.epsilon);
                b.hi[s] = ch.origin[i] + (ch.sign > 0 ? ch.epsilon : 0.0);
            } else {
                double w = (j <= ch.d_prime) ? std::pow(ch.epsilon, ch.alpha) : ch.r;
                b.lo[s] = ch.origin[i] - w;
                b.hi[s] = ch.origin[i] + w;
                ++j;
            }
            (void)half;
        }
        merge(b);
    }
    return out;
}

double DomainSpec::volume_hint() const {
    double v = 0.0;
    for (const auto& b : boxes_) {
        double p = 1.0;
        for (int i = 0; i < dim_; ++i)
            p *= b.hi[static_cast<size_t>(i)] - b.lo[static_cast<size_t>(i)];
        v += p;
    }
    for (const auto& ch : charts_) {
        // \int_0^eps V_{d'} x^{alpha d'} dx * V_{d''} r^{d''}
        double sect = unit_ball_volume(ch.d_prime) *
                      power_integral(0.0, ch.epsilon, ch.alpha * ch.d_prime);
        double tang = unit_ball_volume(ch.d_doubleprime) * std::pow(ch.r, ch.d_doubleprime);
        v += sect * tang;
    }
    return v;
}

double gamma_exponent(const DomainSpec& d) { return d.gamma(); }

bool ModelCusp::contains(const Point& x) const {
    if (x.dim != dim()) throw std::invalid_argument("ModelCusp::contains: dimension mismatch");
    if (!(x[0] > 0.0 && x[0] < 1.0)) return false;
    double sp = 0.0;
    for (int i = 0; i < d_prime; ++i) sp += x[1 + i] * x[1 + i];
    if (!(sp < std::pow(x[0], 2.0 * alpha))) return false;
    for (int i = 0; i < d_doubleprime; ++i)
        if (!(std::abs(x[1 + d_prime + i]) < 1.0)) return false;
    return true;
}

DomainSpec ModelCusp::as_domain() const {
    CuspChart ch;
    ch.alpha = alpha;
    ch.d_prime = d_prime;
    ch.d_doubleprime = d_doubleprime;
    ch.epsilon = 1.0;
    ch.r = 1.0;
    ch.origin = Point();
    ch.origin.dim = dim();
    ch.axis = 0;
    ch.sign = 1;
    return DomainSpec::with_pieces(dim(), {}, {ch});
}

bool DyadicSlab::contains(const Point& x) const {
    if (!parent.contains(x)) return false;
    double lo = std::ldexp(1.0, -(k + 1)), hi = std::ldexp(1.0, -k);
    return x[0] > lo && x[0] < hi;
}

// --- exact cusp cell area ----------------------------------------------------

double cusp_cell_area(double alpha, double eps, double a1, double b1, double a2, double b2) {
    double lo = std::max(a1, 0.0), hi = std::min(b1, eps);
    if (!(lo < hi) || !(a2 < b2)) return 0.0;

    // chord(x) = max(0, min(b2, x^alpha) - max(a2, -x^alpha)). With cuts at
    // every branch switch and at every sign-change root, each open piece has
    // chord = c0 + c1 x^alpha of constant sign, integrable in closed form.
    std::vector<double> cuts = {lo, hi};
    auto add_cut = [&](double v) {
        if (v > lo && v < hi) cuts.push_back(v);
    };
    auto root = [&](double w) { return std::pow(w, 1.0 / alpha); };
    if (b2 > 0.0) add_cut(root(b2));    // top switches x^alpha -> b2
    if (a2 < 0.0) add_cut(root(-a2));   // bottom switches -x^alpha -> a2
    if (b2 < 0.0) add_cut(root(-b2));   // chord root for b2 + x^alpha
    if (a2 > 0.0) add_cut(root(a2));    // chord root for x^alpha - a2
    std::sort(cuts.begin(), cuts.end());

    double area = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double l = cuts[i], r = cuts[i + 1];
        if (!(r > l)) continue;
        double xa_mid = std::pow(0.5 * (l + r), alpha);
        bool top_pow = (b2 > 0.0) && (xa_mid < b2);
        bool bot_pow = (a2 < 0.0) && (xa_mid < -a2);
        double c0 = (top_pow ? 0.0 : b2) - (bot_pow ? 0.0 : a2);
        double c1 = (top_pow ? 1.0 : 0.0) + (bot_pow ? 1.0 : 0.0);
        if (c0 + c1 * xa_mid <= 0.0) continue;
        area += c0 * (r - l) + c1 * power_integral(l, r, alpha);
    }
    return area;
}

// --- ball volumes ------------------------------------------------------------

namespace {

double ball_volume_1d(const DomainSpec& dom, double x, double h) {
    double v = 0.0;
    for (const auto& b : dom.boxes()) {
        double lo = std::max(b.lo[0], x - h), hi = std::min(b.hi[0], x + h);
        if (hi > lo) v += hi - lo;
    }
    return v;
}

// deterministic slice integration for the 2D pieces we support
double ball_volume_2d(const DomainSpec& dom, const Point& x, double h, double tol) {
    double total = 0.0;
    auto circle_halfwidth = [&](double y1) {
        double t = h * h - (y1 - x[0]) * (y1 - x[0]);
        return t > 0.0 ? std::sqrt(t) : 0.0;
    };
    for (const auto& b : dom.boxes()) {
        auto f = [&](double y1) {
            double w = circle_halfwidth(y1);
            double lo = std::max(b.lo[1], x[1] - w), hi = std::min(b.hi[1], x[1] + w);
            return hi > lo ? hi - lo : 0.0;
        };
        double lo = std::max(b.lo[0], x[0] - h), hi = std::min(b.hi[0], x[0] + h);
        if (hi > lo) total += integrate(f, lo, hi, tol);
    }
    for (const auto& ch : dom.charts()) {
        Point y = to_chart(ch, x);
        auto f = [&](double y1) {
            double t = h * h - (y1 - y[0]) * (y1 - y[0]);
            double w = t > 0.0 ? std::sqrt(t) : 0.0;
            double g = std::pow(y1, ch.alpha);
            double lo = std::max(-g, y[1] - w), hi = std::min(g, y[1] + w);
            return hi > lo ? hi - lo : 0.0;
        };
        double lo = std::max(0.0, y[0] - h), hi = std::min(ch.epsilon, y[0] + h);
        if (hi > lo) total += integrate(f, lo, hi, tol);
    }
    return total;
}

VolumeResult ball_volume_mc(const DomainSpec& dom, const Point& x, double h,
                            const QuadratureSpec& q) {
    Rng rng(q.seed);
    long hits = 0;
    Point y;
    y.dim = x.dim;
    for (long s = 0; s < q.mc_samples; ++s) {
        Point z = rng.ball(x.dim, h);
        for (int i = 0; i < x.dim; ++i) y[i] = x[i] + z[i];
        if (dom.contains(y)) ++hits;
    }
    double vb = unit_ball_volume(x.dim) * std::pow(h, x.dim);
    double p = static_cast<double>(hits) / static_cast<double>(q.mc_samples);
    VolumeResult r;
    r.value = vb * p;
    r.std_error = vb * std::sqrt(std::max(p * (1.0 - p), 1e-300) /
                                 static_cast<double>(q.mc_samples));
    return r;
}

}  // namespace

VolumeResult ball_volume(const DomainSpec& domain, const Point& x, double h,
                         const QuadratureSpec& quad) {
    if (!(h > 0.0)) throw std::invalid_argument("ball_volume: h must be > 0");
    if (!domain.contains(x)) throw std::invalid_argument("ball_volume: x not in domain");
    if (quad.kind == QuadratureSpec::Kind::MonteCarlo) return ball_volume_mc(domain, x, h, quad);
    if (domain.dim() == 1) return {ball_volume_1d(domain, x[0], h), 0.0};
    if (domain.dim() == 2) return {ball_volume_2d(domain, x, h, quad.tol), 0.0};
    return ball_volume_mc(domain, x, h, quad);  // no exact path in 3D
}

double box_volume_sup_tip(const ModelCusp& model, double h) {
    double p = model.alpha * model.d_prime + 1.0;
    return unit_ball_volume(model.d_prime) * std::pow(h, p) / p;
}

double box_volume_sup(const ModelCusp& model, double x1, double xprime, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("box_volume_sup: h must be > 0");
    bool in_section = x1 > 0.0 && x1 < 1.0 && std::abs(xprime) < std::pow(x1, model.alpha);
    bool at_tip = (x1 == 0.0 && xprime == 0.0);
    if (!in_section && !at_tip)
        throw std::invalid_argument("box_volume_sup: point outside cusp section");
    if (model.d_prime != 1) {
        if (at_tip) return box_volume_sup_tip(model, h);
        throw std::invalid_argument("box_volume_sup: exact path implemented for d'=1 only");
    }
    return cusp_cell_area(model.alpha, 1.0, x1 - h, x1 + h, xprime - h, xprime + h);
}

// --- cell grids -----------------------------------------------------------------

double cell_overlap_volume(const DomainSpec& domain, const std::array<double, 3>& c_lo,
                           const std::array<double, 3>& c_hi) {
    int d = domain.dim();
    double v = 0.0;
    for (const auto& b : domain.boxes()) {
        double p = 1.0;
        for (int i = 0; i < d; ++i) {
            size_t s = static_cast<size_t>(i);
            double lo = std::max(b.lo[s], c_lo[s]), hi = std::min(b.hi[s], c_hi[s]);
            p *= std::max(0.0, hi - lo);
        }
        v += p;
    }
    for (const auto& ch : domain.charts()) {
        if (d == 1) continue;  // a 1D domain cannot carry a cusp chart (d' >= 1)
        if (d == 2) {
            // cell in chart coordinates stays an axis rectangle
            size_t ax = static_cast<size_t>(ch.axis);
            size_t tr = ch.axis == 0 ? 1 : 0;
            double a1 = ch.sign * (c_lo[ax] - ch.origin[static_cast<int>(ax)]);
            double b1 = ch.sign * (c_hi[ax] - ch.origin[static_cast<int>(ax)]);
            if (ch.sign < 0) std::swap(a1, b1);
            double a2 = c_lo[tr] - ch.origin[static_cast<int>(tr)];
            double b2 = c_hi[tr] - ch.origin[static_cast<int>(tr)];
            v += cusp_cell_area(ch.alpha, ch.epsilon, a1, b1, a2, b2);
        } else {
            Point c;
            c.dim = d;
            double cellv = 1.0;
            for (int i = 0; i < d; ++i) {
                size_t s = static_cast<size_t>(i);
                c[i] = 0.5 * (c_lo[s] + c_hi[s]);
                cellv *= c_hi[s] - c_lo[s];
            }
            if (chart_contains(ch, c)) v += cellv;
        }
    }
    return v;
}

CellGrid build_cell_grid(const DomainSpec& domain, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("build_cell_grid: delta must be > 0");
    CellGrid g;
    g.dim = domain.dim();
    g.delta = delta;
    AxisBox bb = domain.bounding_box();
    long total = 1;
    for (int i = 0; i < g.dim; ++i) {
        size_t s = static_cast<size_t>(i);
        g.lo[s] = bb.lo[s];
        g.nx[s] = std::max(1, static_cast<int>(std::ceil((bb.hi[s] - bb.lo[s]) / delta - 1e-12)));
        total *= g.nx[s];
    }
    if (total > 50'000'000L) throw std::invalid_argument("build_cell_grid: grid too large");
    g.node_of_cell.assign(static_cast<size_t>(total), -1);
    std::array<int, 3> ix{0, 0, 0};
    for (ix[2] = 0; ix[2] < g.nx[2]; ++ix[2])
        for (ix[1] = 0; ix[1] < g.nx[1]; ++ix[1])
            for (ix[0] = 0; ix[0] < g.nx[0]; ++ix[0]) {
                std::array<double, 3> c_lo{0, 0, 0}, c_hi{0, 0, 0};
                Point c;
                c.dim = g.dim;
                for (int i = 0; i < g.dim; ++i) {
                    size_t s = static_cast<size_t>(i);
                    c_lo[s] = g.lo[s] + ix[s] * delta;
                    c_hi[s] = c_lo[s] + delta;
                    c[i] = 0.5 * (c_lo[s] + c_hi[s]);
                }
                double w = cell_overlap_volume(domain, c_lo, c_hi);
                if (w > 0.0) {
                    g.node_of_cell[static_cast<size_t>(g.flat(ix))] =
                        static_cast<int>(g.centers.size());
                    g.centers.push_back(c);
                    g.weights.push_back(w);
                    g.lattice.push_back(ix);
                }
            }
    if (g.centers.empty()) throw std::invalid_argument("build_cell_grid: empty node set");
    return g;
}

// --- dyadic maps --------------------------------------------------------------

namespace {
void check_slab(const ModelCusp& m, int k, const Point& x) {
    if (k < 0) throw std::invalid_argument("dyadic map: k must be >= 0");
    DyadicSlab s{k, m};
    if (!s.contains(x)) throw std::invalid_argument("dyadic map: point outside slab");
}
}  // namespace

Point dyadic_map_tau(const ModelCusp& m, int k, const Point& x) {
    check_slab(m, k, x);
    Point u = x;
    double s1 = std::ldexp(1.0, k), sp = std::pow(2.0, k * m.alpha);
    u[0] = s1 * x[0];
    for (int i = 0; i < m.d_prime; ++i) u[1 + i] = sp * x[1 + i];
    return u;
}

Point dyadic_map_tau_inv(const ModelCusp& m, int k, const Point& u) {
    Point x = u;
    double s1 = std::ldexp(1.0, -k), sp = std::pow(2.0, -k * m.alpha);
    x[0] = s1 * u[0];
    for (int i = 0; i < m.d_prime; ++i) x[1 + i] = sp * u[1 + i];
    return x;
}

double dyadic_jacobian(const ModelCusp& m, int k) {
    return std::pow(2.0, k * (m.alpha * m.d_prime + 1.0));
}

Point straighten(const ModelCusp& m, const Point& x) {
    if (!(x[0] > 0.0)) throw std::invalid_argument("straighten: x1 must be > 0");
    Point u = x;
    double s = std::pow(x[0], -m.alpha);
    for (int i = 0; i < m.d_prime; ++i) u[1 + i] = s * x[1 + i];
    return u;
}

Point straighten_inv(const ModelCusp& m, const Point& u) {
    if (!(u[0] > 0.0)) throw std::invalid_argument("straighten_inv: u1 must be > 0");
    Point x = u;
    double s = std::pow(u[0], m.alpha);
    for (int i = 0; i < m.d_prime; ++i) x[1 + i] = s * u[1 + i];
    return x;
}

Point sigma_k(const ModelCusp& m, int k, const Point& x) {
    return straighten(m, dyadic_map_tau(m, k, x));
}

Point sigma_k_inv(const ModelCusp& m, int k, const Point& u) {
    return dyadic_map_tau_inv(m, k, straighten_inv(m, u));
}

Point sigma_hat_k(const ModelCusp& m, int k, const Point& x) {
    check_slab(m, k, x);
    Point u = x;
    double s1 = std::ldexp(1.0, k - 1), sp = std::pow(2.0, (k - 1) * m.alpha);
    u[0] = s1 * x[0];
    for (int i = 0; i < m.d_prime; ++i) u[1 + i] = sp * x[1 + i];
    return straighten(m, u);
}

Point sigma_check_1(const Point& u) {
    Point v = u;
    v[0] = 2.0 * u[0];
    return v;
}

// --- serialization -------------------------------------------------------------

std::string DomainSpec::serialize() const {
    std::ostringstream os;
    os << "domain {\n";
    os << "  dim " << dim_ << "\n";
    for (const auto& b : boxes_) {
        os << "  box { lo";
        for (int i = 0; i < dim_; ++i) os << " " << fmt(b.lo[static_cast<size_t>(i)]);
        os << " hi";
        for (int i = 0; i < dim_; ++i) os << " " << fmt(b.hi[static_cast<size_t>(i)]);
        os << " }\n";
    }
    for (const auto& ch : charts_) {
        os << "  cusp_chart { alpha " << fmt(ch.alpha) << " dprime " << ch.d_prime
           << " ddoubleprime " << ch.d_doubleprime << " epsilon " << fmt(ch.epsilon) << " r "
           << fmt(ch.r) << " origin";
        for (int i = 0; i < dim_; ++i) os << " " << fmt(ch.origin[i]);
        os << " axis " << ch.axis << " sign " << ch.sign << " }\n";
    }
    os << "}\n";
    return os.str();
}

DomainSpec DomainSpec::parse(const std::string& text) {
    std::istringstream is(text);
    std::string tok;
    int dim = -1;
    std::vector<AxisBox> boxes;
    std::vector<CuspChart> charts;
    auto expect = [&](const char* w) {
        if (!(is >> tok) || tok != w)
            throw std::invalid_argument(std::string("DomainSpec::parse: expected '") + w +
                                        "', got '" + tok + "'");
    };
    expect("domain");
    expect("{");
    while (is >> tok && tok != "}") {
        if (tok == "dim") {
            is >> dim;
        } else if (tok == "box") {
            expect("{");
            AxisBox b;
            expect("lo");
            for (int i = 0; i < dim; ++i) is >> b.lo[static_cast<size_t>(i)];
            expect("hi");
            for (int i = 0; i < dim; ++i) is >> b.hi[static_cast<size_t>(i)];
            expect("}");
            boxes.push_back(b);
        } else if (tok == "cusp_chart") {
            expect("{");
            CuspChart ch;
            expect("alpha");
            is >> ch.alpha;
            expect("dprime");
            is >> ch.d_prime;
            expect("ddoubleprime");
            is >> ch.d_doubleprime;
            expect("epsilon");
            is >> ch.epsilon;
            expect("r");
            is >> ch.r;
            expect("origin");
            ch.origin.dim = dim;
            for (int i = 0; i < dim; ++i) is >> ch.origin[i];
            expect("axis");
            is >> ch.axis;
            expect("sign");
            is >> ch.sign;
            expect("}");
            charts.push_back(ch);
        } else {
            throw std::invalid_argument("DomainSpec::parse: unknown token '" + tok + "'");
        }
    }
    if (dim < 1) throw std::invalid_argument("DomainSpec::parse: missing dim");
    return with_pieces(dim, std::move(boxes), std::move(charts));
}

}  // namespace metrocusp
