#include "metrocusp/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "metrocusp/quadrature.hpp"

namespace metrocusp {

double kernel_density(const Point& x, const Point& y, double h, const DomainSpec& domain,
                      const DensitySpec& density) {
    if (!(h > 0.0)) throw std::invalid_argument("kernel_density: h must be > 0");
    if (!domain.contains(x)) throw std::invalid_argument("kernel_density: x not in domain");
    if (dist(x, y) >= h) return 0.0;
    double phi = 1.0 / unit_ball_volume(x.dim);
    double ratio = std::min(density.value(y) / density.value(x), 1.0);
    return std::pow(h, -x.dim) * phi * ratio;
}

VolumeResult rejection_mass(const Point& x, double h, const DomainSpec& domain,
                            const DensitySpec& density, const QuadratureSpec& quad) {
    if (!domain.contains(x)) throw std::invalid_argument("rejection_mass: x not in domain");
    double vb = unit_ball_volume(x.dim) * std::pow(h, x.dim);
    double rho_x = density.value(x);
    if (quad.kind == QuadratureSpec::Kind::Exact && x.dim == 1) {
        // 1D: integrate the acceptance ratio over the ball intersection exactly
        // enough (the density may be piecewise; adaptive quadrature handles it)
        double acc = 0.0;
        for (const auto& b : domain.boxes()) {
            double lo = std::max(b.lo[0], x[0] - h), hi = std::min(b.hi[0], x[0] + h);
            if (hi > lo)
                acc += integrate(
                    [&](double t) {
                        Point y(t);
                        return std::min(density.value(y) / rho_x, 1.0);
                    },
                    lo, hi, quad.tol * vb);
        }
        return {1.0 - acc / vb, 0.0};
    }
    // Monte Carlo: sample proposals, average acceptance
    Rng rng(quad.seed);
    double s = 0.0;
    Point y;
    y.dim = x.dim;
    long n = quad.mc_samples;
    double s2 = 0.0;
    for (long i = 0; i < n; ++i) {
        Point z = rng.ball(x.dim, h);
        for (int k = 0; k < x.dim; ++k) y[k] = x[k] + z[k];
        double a = domain.contains(y) ? std::min(density.value(y) / rho_x, 1.0) : 0.0;
        s += a;
        s2 += a * a;
    }
    double mean = s / n;
    double var = std::max(0.0, s2 / n - mean * mean);
    return {1.0 - mean, std::sqrt(var / n)};
}

ChainStep chain_step(const Point& x, double h, const DomainSpec& domain,
                     const DensitySpec& density, Rng& rng) {
    Point z = rng.ball(x.dim, h);
    Point y = x;
    for (int k = 0; k < x.dim; ++k) y[k] = x[k] + z[k];
    if (!domain.contains(y)) return {x, false};
    double ratio = density.value(y) / density.value(x);
    if (ratio >= 1.0 || rng.uniform() < ratio) return {y, true};
    return {x, false};
}

// --- cell-pair overlap tables -------------------------------------------------

namespace {

// integral of the triangle (delta - |u|)+ from -delta to t
double tri_cdf(double t, double delta) {
    if (t <= -delta) return 0.0;
    if (t >= delta) return delta * delta;
    if (t <= 0.0) {
        double s = t + delta;
        return 0.5 * s * s;
    }
    return 0.5 * delta * delta + delta * t - 0.5 * t * t;
}

// V(s) = \int\int_{C x C} 1_{|x - y + s| < h},  C = [-delta/2, delta/2]^d,
// written as \int T(u) 1_{|u+s|<h} du with T the tensor triangle kernel.
double pair_overlap_1d(double s, double delta, double h) {
    double lo = std::max(-delta, -h - s), hi = std::min(delta, h - s);
    if (!(hi > lo)) return 0.0;
    return tri_cdf(hi, delta) - tri_cdf(lo, delta);
}

double pair_overlap_2d(double s1, double s2, double delta, double h) {
    auto inner = [&](double u1) {
        double t = h * h - (u1 + s1) * (u1 + s1);
        if (t <= 0.0) return 0.0;
        double r = std::sqrt(t);
        double lo = std::max(-delta, -s2 - r), hi = std::min(delta, -s2 + r);
        if (!(hi > lo)) return 0.0;
        return tri_cdf(hi, delta) - tri_cdf(lo, delta);
    };
    double lo = std::max(-delta, -s1 - h), hi = std::min(delta, -s1 + h);
    if (!(hi > lo)) return 0.0;
    return integrate(inner, lo, hi, 1e-14 * delta * delta * delta);
}

struct OffsetTable {
    std::vector<std::array<int, 3>> offsets;
    std::vector<double> value;  // normalized so that sum over the full lattice
                                // equals delta^d V_d h^d exactly
};

OffsetTable build_offset_table(int dim, double delta, double h) {
    OffsetTable t;
    int reach = static_cast<int>(std::ceil(h / delta)) + 1;
    double total = 0.0;
    std::array<int, 3> l{0, 0, 0};
    int r2 = (dim >= 2) ? reach : 0;
    for (l[1] = -r2; l[1] <= r2; ++l[1])
        for (l[0] = -reach; l[0] <= reach; ++l[0]) {
            double v = dim == 1 ? pair_overlap_1d(l[0] * delta, delta, h)
                                : pair_overlap_2d(l[0] * delta, l[1] * delta, delta, h);
            if (v > 0.0) {
                t.offsets.push_back(l);
                t.value.push_back(v);
                total += v;
            }
        }
    // enforce the tiling identity  sum_l V_l = delta^d V_d h^d
    double exact = std::pow(delta, dim) * unit_ball_volume(dim) * std::pow(h, dim);
    double scale = exact / total;
    for (double& v : t.value) v *= scale;
    return t;
}

}  // namespace

std::vector<double> DiscretizedOperator::apply(const std::vector<double>& u) const {
    if (static_cast<int>(u.size()) != size())
        throw std::invalid_argument("apply: length mismatch");
    std::vector<double> y(u.size());
    for (int i = 0; i < size(); ++i) {
        double s = 0.0;
        for (long nz = row_ptr[static_cast<size_t>(i)]; nz < row_ptr[static_cast<size_t>(i) + 1];
             ++nz)
            s += base[static_cast<size_t>(nz)] * u[static_cast<size_t>(col[static_cast<size_t>(nz)])];
        y[static_cast<size_t>(i)] =
            m[static_cast<size_t>(i)] * u[static_cast<size_t>(i)] + s / mu[static_cast<size_t>(i)];
    }
    return y;
}

double DiscretizedOperator::inner(const std::vector<double>& u,
                                  const std::vector<double>& v) const {
    if (u.size() != v.size() || static_cast<int>(u.size()) != size())
        throw std::invalid_argument("inner: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < u.size(); ++i) s += u[i] * v[i] * mu[i];
    return s;
}

double DiscretizedOperator::sup_rejection() const {
    double s = 0.0;
    for (double v : m) s = std::max(s, v);
    return s;
}

DiscretizedOperator assemble_operator(const DomainSpec& domain, const DensitySpec& density,
                                      double h, double grid_spacing,
                                      const AssemblyOptions& opts) {
    if (!(h > 0.0 && grid_spacing > 0.0))
        throw std::invalid_argument("assemble_operator: h and spacing must be positive");
    if (domain.dim() > 2)
        throw std::invalid_argument("assemble_operator: implemented for dim <= 2");

    DiscretizedOperator op;
    op.h = h;
    op.grid = build_cell_grid(domain, grid_spacing);
    int n = op.size();
    op.rho.resize(static_cast<size_t>(n));
    op.mu.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        op.rho[static_cast<size_t>(i)] = density.value(op.grid.centers[static_cast<size_t>(i)]);
        op.mu[static_cast<size_t>(i)] =
            op.rho[static_cast<size_t>(i)] * op.grid.weights[static_cast<size_t>(i)];
    }

    OffsetTable tab = build_offset_table(domain.dim(), grid_spacing, h);
    double vdhd = unit_ball_volume(domain.dim()) * std::pow(h, domain.dim());
    double cellv = std::pow(grid_spacing, domain.dim());
    double inv_cell2 = 1.0 / (cellv * cellv);

    op.row_ptr.assign(static_cast<size_t>(n) + 1, 0);
    // first pass: count
    std::vector<int> counts(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const auto& ix = op.grid.lattice[static_cast<size_t>(i)];
        for (const auto& l : tab.offsets) {
            std::array<int, 3> jx{ix[0] + l[0], ix[1] + l[1], ix[2] + l[2]};
            bool ok = true;
            for (int k = 0; k < domain.dim(); ++k)
                if (jx[static_cast<size_t>(k)] < 0 ||
                    jx[static_cast<size_t>(k)] >= op.grid.nx[static_cast<size_t>(k)])
                    ok = false;
            if (!ok) continue;
            if (op.grid.node_of_cell[static_cast<size_t>(op.grid.flat(jx))] >= 0)
                ++counts[static_cast<size_t>(i)];
        }
    }
    for (int i = 0; i < n; ++i)
        op.row_ptr[static_cast<size_t>(i) + 1] = op.row_ptr[static_cast<size_t>(i)] +
                                                 counts[static_cast<size_t>(i)];
    op.col.resize(static_cast<size_t>(op.row_ptr[static_cast<size_t>(n)]));
    op.base.resize(op.col.size());

    op.m.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        long nz = op.row_ptr[static_cast<size_t>(i)];
        const auto& ix = op.grid.lattice[static_cast<size_t>(i)];
        double wi = op.grid.weights[static_cast<size_t>(i)];
        double rhoi = op.rho[static_cast<size_t>(i)];
        double ksum = 0.0, comp = 0.0;  // compensated row sum of K[i][j]
        for (size_t t = 0; t < tab.offsets.size(); ++t) {
            const auto& l = tab.offsets[t];
            std::array<int, 3> jx{ix[0] + l[0], ix[1] + l[1], ix[2] + l[2]};
            bool ok = true;
            for (int k = 0; k < domain.dim(); ++k)
                if (jx[static_cast<size_t>(k)] < 0 ||
                    jx[static_cast<size_t>(k)] >= op.grid.nx[static_cast<size_t>(k)])
                    ok = false;
            if (!ok) continue;
            int j = op.grid.node_of_cell[static_cast<size_t>(op.grid.flat(jx))];
            if (j < 0) continue;
            double wj = op.grid.weights[static_cast<size_t>(j)];
            double rhoj = op.rho[static_cast<size_t>(j)];
            // symmetric under i<->j at the bit level: products commute
            double b = (wi * wj) * inv_cell2 * tab.value[t] * std::min(rhoi, rhoj) / vdhd;
            op.col[static_cast<size_t>(nz)] = j;
            op.base[static_cast<size_t>(nz)] = b;
            ++nz;
            double kij = b / op.mu[static_cast<size_t>(i)];
            double yk = kij - comp;
            double tk = ksum + yk;
            comp = (tk - ksum) - yk;
            ksum = tk;
        }
        double mi = 1.0 - ksum;
        if (mi < 0.0) {
            if (mi < -opts.negative_mass_tol)
                throw std::runtime_error(
                    "assemble_operator: negative rejection mass " + std::to_string(mi) +
                    " at node " + std::to_string(i) + " (h/delta = " +
                    std::to_string(h / grid_spacing) + "); quadrature defect too large");
            // tiny rounding defect: clamp and renormalize the row
            double scale = 1.0 / ksum;
            for (long p = op.row_ptr[static_cast<size_t>(i)]; p < nz; ++p)
                op.base[static_cast<size_t>(p)] *= scale;
            mi = 0.0;
        }
        op.m[static_cast<size_t>(i)] = mi;
    }
    return op;
}

DirichletFormResult dirichlet_form(const DiscretizedOperator& op, const std::vector<double>& f) {
    int n = op.size();
    if (static_cast<int>(f.size()) != n) throw std::invalid_argument("dirichlet_form: length");
    DirichletFormResult r;
    std::vector<double> tf = op.apply(f);
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        s += (f[static_cast<size_t>(i)] - tf[static_cast<size_t>(i)]) * f[static_cast<size_t>(i)] *
             op.mu[static_cast<size_t>(i)];
    r.via_operator = s;

    double q = 0.0;
    for (int i = 0; i < n; ++i)
        for (long nz = op.row_ptr[static_cast<size_t>(i)]; nz < op.row_ptr[static_cast<size_t>(i) + 1];
             ++nz) {
            double d = f[static_cast<size_t>(i)] - f[static_cast<size_t>(op.col[static_cast<size_t>(nz)])];
            q += op.base[static_cast<size_t>(nz)] * d * d;
        }
    r.via_pair_sum = 0.5 * q;
    return r;
}

double dirichlet_form_supnorm(const DiscretizedOperator& op, const std::vector<double>& f,
                              double window) {
    int n = op.size();
    if (static_cast<int>(f.size()) != n) throw std::invalid_argument("length mismatch");
    const CellGrid& g = op.grid;
    int reach = static_cast<int>(std::ceil(window / g.delta)) + 1;
    double q = 0.0;
    int d = g.dim;
    for (int i = 0; i < n; ++i) {
        const auto& ix = g.lattice[static_cast<size_t>(i)];
        std::array<int, 3> l{0, 0, 0};
        int r2 = (d >= 2) ? reach : 0;
        for (l[1] = -r2; l[1] <= r2; ++l[1])
            for (l[0] = -reach; l[0] <= reach; ++l[0]) {
                std::array<int, 3> jx{ix[0] + l[0], ix[1] + l[1], ix[2]};
                bool ok = true;
                for (int k = 0; k < d; ++k)
                    if (jx[static_cast<size_t>(k)] < 0 ||
                        jx[static_cast<size_t>(k)] >= g.nx[static_cast<size_t>(k)])
                        ok = false;
                if (!ok) continue;
                int j = g.node_of_cell[static_cast<size_t>(g.flat(jx))];
                if (j < 0) continue;
                bool in_window = true;
                for (int k = 0; k < d; ++k)
                    if (!(std::abs(g.centers[static_cast<size_t>(i)][k] -
                                   g.centers[static_cast<size_t>(j)][k]) < window))
                        in_window = false;
                if (!in_window) continue;
                double df = f[static_cast<size_t>(i)] - f[static_cast<size_t>(j)];
                double wpair = std::min(op.rho[static_cast<size_t>(i)], op.rho[static_cast<size_t>(j)]) *
                               g.weights[static_cast<size_t>(i)] * g.weights[static_cast<size_t>(j)];
                q += wpair * df * df;
            }
    }
    double norm = 2.0 * unit_ball_volume(d) * std::pow(window, d);
    return q / norm;
}

double anisotropic_dirichlet_form(const BoxGridField& f, const AnisotropicScale& scale,
                                  int min_cells_per_window) {
    int d = f.dim;
    if (d != 1 + f.d_prime + f.d_doubleprime)
        throw std::invalid_argument("anisotropic_dirichlet_form: dim split mismatch");
    std::array<double, 3> window{scale.h_bar, 0, 0};
    for (int i = 1; i < d; ++i)
        window[static_cast<size_t>(i)] = (i <= f.d_prime) ? scale.h_tilde : scale.h;
    for (int i = 0; i < d; ++i) {
        double sp = f.spacing(i);
        if (window[static_cast<size_t>(i)] < min_cells_per_window * sp)
            throw std::invalid_argument(
                "anisotropic_dirichlet_form: grid too coarse on axis " + std::to_string(i) +
                "; need spacing <= " +
                std::to_string(window[static_cast<size_t>(i)] / min_cells_per_window));
    }
    std::array<int, 3> reach{0, 0, 0};
    double dV = 1.0;
    for (int i = 0; i < d; ++i) {
        reach[static_cast<size_t>(i)] =
            static_cast<int>(std::ceil(window[static_cast<size_t>(i)] / f.spacing(i)));
        dV *= f.spacing(i);
    }
    double q = 0.0;
    std::array<int, 3> ix{0, 0, 0};
    for (ix[2] = 0; ix[2] < f.nx[2]; ++ix[2])
        for (ix[1] = 0; ix[1] < f.nx[1]; ++ix[1])
            for (ix[0] = 0; ix[0] < f.nx[0]; ++ix[0]) {
                double fi = f.values[static_cast<size_t>(f.flat(ix))];
                std::array<int, 3> l{0, 0, 0};
                int r1 = reach[0], r2 = d >= 2 ? reach[1] : 0, r3 = d >= 3 ? reach[2] : 0;
                for (l[2] = -r3; l[2] <= r3; ++l[2])
                    for (l[1] = -r2; l[1] <= r2; ++l[1])
                        for (l[0] = -r1; l[0] <= r1; ++l[0]) {
                            std::array<int, 3> jx{ix[0] + l[0], ix[1] + l[1], ix[2] + l[2]};
                            bool ok = true;
                            for (int k = 0; k < d; ++k) {
                                size_t s = static_cast<size_t>(k);
                                if (jx[s] < 0 || jx[s] >= f.nx[s]) ok = false;
                                else if (!(std::abs(l[s] * f.spacing(k)) <
                                           window[s]))
                                    ok = false;
                            }
                            if (!ok) continue;
                            double df = fi - f.values[static_cast<size_t>(f.flat(jx))];
                            q += df * df;
                        }
            }
    double norm = 2.0 * unit_ball_volume(d) *
                  scale.composite_volume(f.d_prime, f.d_doubleprime);
    return q * dV * dV / norm;
}

// --- exports -------------------------------------------------------------------

void export_chain_csv(const std::string& path, const std::vector<ChainStep>& traj) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("export_chain_csv: cannot open " + path);
    if (traj.empty()) return;
    int d = traj.front().position.dim;
    os << "step";
    for (int k = 0; k < d; ++k) os << ",x" << k;
    os << ",accepted\n";
    char buf[64];
    for (size_t s = 0; s < traj.size(); ++s) {
        os << s;
        for (int k = 0; k < d; ++k) {
            std::snprintf(buf, sizeof buf, ",%.17g", traj[s].position[k]);
            os << buf;
        }
        os << "," << (traj[s].accepted ? 1 : 0) << "\n";
    }
}

void export_operator_triplets(const DiscretizedOperator& op, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("export_operator_triplets: cannot open " + path);
    char buf[64];
    for (int i = 0; i < op.size(); ++i)
        for (long nz = op.row_ptr[static_cast<size_t>(i)]; nz < op.row_ptr[static_cast<size_t>(i) + 1];
             ++nz) {
            std::snprintf(buf, sizeof buf, "%.17g", op.kernel_entry(i, nz));
            os << i << " " << op.col[static_cast<size_t>(nz)] << " " << buf << "\n";
        }
}

void export_operator_nodes(const DiscretizedOperator& op, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("export_operator_nodes: cannot open " + path);
    os << "index";
    for (int k = 0; k < op.dim(); ++k) os << ",x" << k;
    os << ",weight,rho,m\n";
    char buf[64];
    for (int i = 0; i < op.size(); ++i) {
        os << i;
        for (int k = 0; k < op.dim(); ++k) {
            std::snprintf(buf, sizeof buf, ",%.17g", op.grid.centers[static_cast<size_t>(i)][k]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", op.grid.weights[static_cast<size_t>(i)],
                      op.rho[static_cast<size_t>(i)], op.m[static_cast<size_t>(i)]);
        os << buf << "\n";
    }
}

}  // namespace metrocusp
