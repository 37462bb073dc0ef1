#include "metrocusp/spectral.hpp"

#include <lapacke.h>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

extern "C" void openblas_set_num_threads(int);

namespace metrocusp {

namespace {

struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }  // keeps results run-to-run identical
};
const BlasInit blas_init;

// y = S u with S = D^{1/2} T D^{-1/2}: y_i = m_i u_i + (1/sqrt(mu_i)) sum_j base_ij u_j / sqrt(mu_j)
struct SymmetrizedOp {
    const DiscretizedOperator* op;
    std::vector<double> inv_sqrt_mu;

    explicit SymmetrizedOp(const DiscretizedOperator& o) : op(&o) {
        inv_sqrt_mu.resize(o.mu.size());
        for (size_t i = 0; i < o.mu.size(); ++i) inv_sqrt_mu[i] = 1.0 / std::sqrt(o.mu[i]);
    }
    int size() const { return op->size(); }
    void apply(const double* u, double* y) const {
        int n = size();
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (long nz = op->row_ptr[static_cast<size_t>(i)];
                 nz < op->row_ptr[static_cast<size_t>(i) + 1]; ++nz) {
                int j = op->col[static_cast<size_t>(nz)];
                s += op->base[static_cast<size_t>(nz)] * u[j] * inv_sqrt_mu[static_cast<size_t>(j)];
            }
            y[i] = op->m[static_cast<size_t>(i)] * u[i] + s * inv_sqrt_mu[static_cast<size_t>(i)];
        }
    }
    // exact top eigenvector of S: sqrt(mu), normalized
    std::vector<double> top_mode() const {
        std::vector<double> v(static_cast<size_t>(size()));
        double nrm = 0.0;
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = std::sqrt(op->mu[i]);
            nrm += v[i] * v[i];
        }
        nrm = std::sqrt(nrm);
        for (double& x : v) x /= nrm;
        return v;
    }
};

Eigen::MatrixXd dense_symmetrized(const DiscretizedOperator& op) {
    int n = op.size();
    SymmetrizedOp s(op);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (long nz = op.row_ptr[static_cast<size_t>(i)];
             nz < op.row_ptr[static_cast<size_t>(i) + 1]; ++nz) {
            int j = op.col[static_cast<size_t>(nz)];
            S(i, j) = op.base[static_cast<size_t>(nz)] * s.inv_sqrt_mu[static_cast<size_t>(i)] *
                      s.inv_sqrt_mu[static_cast<size_t>(j)];
        }
        S(i, i) += op.m[static_cast<size_t>(i)];
    }
    return S;
}

// full symmetric eigendecomposition, ascending eigenvalues
void dense_sym_eig(Eigen::MatrixXd& A, Eigen::VectorXd& w) {
    int n = static_cast<int>(A.rows());
    w.resize(n);
    int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, A.data(), n, w.data());
    if (info != 0) throw std::runtime_error("dsyevd failed, info=" + std::to_string(info));
}

struct LanczosResult {
    std::vector<double> values;               // descending
    std::vector<std::vector<double>> vectors; // symmetrized coordinates
    int iterations = 0;
    double residual = 0.0;
};

// Lanczos with full reorthogonalization. `deflate` vectors are projected out
// of the Krylov space (they are exact eigenvectors handled separately).
LanczosResult lanczos(const std::function<void(const double*, double*)>& matvec, int n, int count,
                      const std::vector<std::vector<double>>& deflate, int max_iter, double tol,
                      uint64_t seed, bool largest) {
    max_iter = std::min(max_iter, n);
    std::vector<std::vector<double>> V;
    V.reserve(static_cast<size_t>(max_iter));
    std::vector<double> alpha, beta;

    auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
        return s;
    };
    auto project_out = [&](std::vector<double>& w) {
        for (const auto& d : deflate) {
            double c = dot(w, d);
            for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)] -= c * d[static_cast<size_t>(i)];
        }
        for (const auto& v : V) {
            double c = dot(w, v);
            for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)] -= c * v[static_cast<size_t>(i)];
        }
    };

    Rng rng(seed);
    std::vector<double> v0(static_cast<size_t>(n));
    for (double& x : v0) x = rng.uniform(-1.0, 1.0);
    project_out(v0);
    double nv = std::sqrt(dot(v0, v0));
    for (double& x : v0) x /= nv;
    V.push_back(v0);

    std::vector<double> w(static_cast<size_t>(n));
    LanczosResult out;
    int check_every = 10;
    for (int it = 0; it < max_iter; ++it) {
        matvec(V.back().data(), w.data());
        double a = dot(w, V.back());
        alpha.push_back(a);
        // full reorthogonalization, twice
        project_out(w);
        project_out(w);
        double b = std::sqrt(dot(w, w));
        out.iterations = it + 1;

        bool exhausted = (b < 1e-14);  // Krylov space spans an invariant subspace
        bool last = (it == max_iter - 1) || exhausted;
        if ((it + 1) % check_every == 0 || last) {
            int m = static_cast<int>(alpha.size());
            Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(m, m);
            for (int i = 0; i < m; ++i) {
                Tm(i, i) = alpha[static_cast<size_t>(i)];
                if (i + 1 < m) {
                    Tm(i, i + 1) = beta[static_cast<size_t>(i)];
                    Tm(i + 1, i) = beta[static_cast<size_t>(i)];
                }
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
            // residual |b * s_m| for the wanted end of the Ritz spectrum
            int have = std::min(count, m);
            double worst = 0.0;
            for (int k = 0; k < have; ++k) {
                int idx = largest ? m - 1 - k : k;
                worst = std::max(worst, std::abs(b * es.eigenvectors()(m - 1, idx)));
            }
            out.residual = worst;
            bool enough_space = (m >= std::min(count + 2, n));
            if ((worst < tol && enough_space) || exhausted || (last && worst < tol)) {
                out.values.resize(static_cast<size_t>(have));
                out.vectors.assign(static_cast<size_t>(have),
                                   std::vector<double>(static_cast<size_t>(n), 0.0));
                for (int k = 0; k < have; ++k) {
                    int idx = largest ? m - 1 - k : k;
                    out.values[static_cast<size_t>(k)] = es.eigenvalues()(idx);
                    auto& vec = out.vectors[static_cast<size_t>(k)];
                    for (int i = 0; i < m; ++i) {
                        double c = es.eigenvectors()(i, idx);
                        const auto& Vi = V[static_cast<size_t>(i)];
                        for (int t = 0; t < n; ++t) vec[static_cast<size_t>(t)] += c * Vi[static_cast<size_t>(t)];
                    }
                }
                return out;
            }
            if (last) break;
        }
        beta.push_back(b);
        for (double& x : w) x /= b;
        V.push_back(w);
    }
    throw std::runtime_error("lanczos: not converged after " + std::to_string(out.iterations) +
                             " iterations (residual " + std::to_string(out.residual) + ")");
}

double signed_power(double lambda, long n) {
    if (lambda == 0.0) return 0.0;
    double mag = std::exp(n * std::log(std::abs(lambda)));
    return (lambda < 0.0 && (n % 2 != 0)) ? -mag : mag;
}

EigenResult eigen_extreme(const DiscretizedOperator& op, int count, const EigenOptions& opts,
                          bool largest) {
    if (count < 1) throw std::invalid_argument("eigen solve: count must be >= 1");
    int n = op.size();
    EigenResult res;
    SymmetrizedOp sop(op);
    bool dense = opts.method == EigenOptions::Method::Dense ||
                 (opts.method == EigenOptions::Method::Auto && n <= opts.dense_threshold);
    if (dense) {
        Eigen::MatrixXd S = dense_symmetrized(op);
        Eigen::VectorXd wv;
        dense_sym_eig(S, wv);
        res.dense = true;
        int have = std::min(count, n);
        for (int k = 0; k < have; ++k) {
            int idx = largest ? n - 1 - k : k;
            EigenPair p;
            p.value = wv(idx);
            p.vector.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i)
                p.vector[static_cast<size_t>(i)] = S(i, idx) * sop.inv_sqrt_mu[static_cast<size_t>(i)];
            res.pairs.push_back(std::move(p));
        }
        return res;
    }

    // iterative path: deflate the exact constant mode when seeking the top
    std::vector<std::vector<double>> deflate;
    if (largest) {
        deflate.push_back(sop.top_mode());
        EigenPair top;
        top.value = 1.0;
        top.vector.assign(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i)
            top.vector[static_cast<size_t>(i)] = deflate.front()[static_cast<size_t>(i)] *
                                                 sop.inv_sqrt_mu[static_cast<size_t>(i)];
        res.pairs.push_back(std::move(top));
        if (count == 1) return res;
    }
    int want = largest ? count - 1 : count;
    auto mv = [&sop](const double* u, double* y) { sop.apply(u, y); };
    LanczosResult lr = lanczos(mv, n, want, deflate, opts.max_iterations, opts.tol, opts.seed,
                               largest);
    res.iterations = lr.iterations;
    res.residual = lr.residual;
    for (size_t k = 0; k < lr.values.size() && static_cast<int>(res.pairs.size()) < count; ++k) {
        EigenPair p;
        p.value = lr.values[k];
        p.vector.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            p.vector[static_cast<size_t>(i)] = lr.vectors[k][static_cast<size_t>(i)] *
                                               sop.inv_sqrt_mu[static_cast<size_t>(i)];
        res.pairs.push_back(std::move(p));
    }
    return res;
}

}  // namespace

EigenResult eigen_top(const DiscretizedOperator& op, int count, const EigenOptions& opts) {
    return eigen_extreme(op, count, opts, true);
}

EigenResult eigen_bottom(const DiscretizedOperator& op, int count, const EigenOptions& opts) {
    return eigen_extreme(op, count, opts, false);
}

double spectral_gap(const DiscretizedOperator& op, const EigenOptions& opts) {
    EigenResult r = eigen_top(op, 2, opts);
    double l1 = r.pairs.at(0).value, l2 = r.pairs.at(1).value;
    if (std::abs(l1 - 1.0) > 1e-8)
        throw std::runtime_error("spectral_gap: top eigenvalue is not 1 (got " +
                                 std::to_string(l1) + ")");
    if (l2 > 1.0 - 1e-12)
        throw std::runtime_error("spectral_gap: 1 is not a simple eigenvalue");
    return 1.0 - l2;
}

std::vector<SpectralCluster> rescaled_spectrum(const DiscretizedOperator& op, double R,
                                               double cluster_tol, double richardson_error,
                                               const EigenOptions& opts) {
    if (!(R > 0.0)) throw std::invalid_argument("rescaled_spectrum: R must be > 0");
    double h2 = op.h * op.h;
    double lambda_floor = 1.0 - R * h2;
    std::vector<double> rescaled;
    EigenOptions o = opts;
    bool dense = o.method == EigenOptions::Method::Dense ||
                 (o.method == EigenOptions::Method::Auto && op.size() <= o.dense_threshold);
    int count = dense ? op.size() : 8;
    while (true) {
        EigenResult r = eigen_top(op, std::min(count, op.size()), o);
        rescaled.clear();
        bool reached = false;
        for (const auto& p : r.pairs) {
            double v = (1.0 - p.value) / h2;
            if (p.value < lambda_floor) {
                reached = true;
                break;
            }
            if (v > 1e-12) rescaled.push_back(v);
        }
        if (reached || static_cast<int>(r.pairs.size()) >= op.size()) break;
        if (count >= op.size()) break;
        count = std::min(2 * count, op.size());
    }
    std::sort(rescaled.begin(), rescaled.end());
    std::vector<SpectralCluster> clusters;
    if (rescaled.empty()) return clusters;
    double tol = cluster_tol > 0.0
                     ? cluster_tol
                     : std::max(0.05 * rescaled.front(), 3.0 * richardson_error);
    for (double v : rescaled) {
        if (!clusters.empty() && v - clusters.back().values.back() < tol)
            clusters.back().values.push_back(v);
        else {
            clusters.push_back({});
            clusters.back().values.push_back(v);
        }
    }
    for (auto& c : clusters) {
        c.multiplicity = static_cast<int>(c.values.size());
        c.center = std::accumulate(c.values.begin(), c.values.end(), 0.0) / c.multiplicity;
    }
    return clusters;
}

// --- Neumann reference ------------------------------------------------------------

namespace {

// measure of the face between cells i and i+e_axis inside the domain (2D: a
// segment; 1D: an indicator). Exact for our piece types.
double face_measure(const DomainSpec& dom, int axis, double face_pos,
                    const std::array<double, 3>& c_lo, const std::array<double, 3>& c_hi) {
    if (dom.dim() == 1) {
        for (const auto& b : dom.boxes())
            if (face_pos > b.lo[0] && face_pos < b.hi[0]) return 1.0;
        return 0.0;
    }
    // 2D
    int tr = axis == 0 ? 1 : 0;
    double lo = c_lo[static_cast<size_t>(tr)], hi = c_hi[static_cast<size_t>(tr)];
    double len = 0.0;
    for (const auto& b : dom.boxes()) {
        if (!(face_pos > b.lo[static_cast<size_t>(axis)] &&
              face_pos < b.hi[static_cast<size_t>(axis)]))
            continue;
        double l = std::max(lo, b.lo[static_cast<size_t>(tr)]),
               h = std::min(hi, b.hi[static_cast<size_t>(tr)]);
        if (h > l) len += h - l;
    }
    for (const auto& ch : dom.charts()) {
        // chart coordinates; the face is axis-aligned there as well
        double t = ch.sign * (face_pos - ch.origin[ch.axis]);
        if (axis == ch.axis) {
            // face perpendicular to the cusp axis at x1 = t
            if (!(t > 0.0 && t < ch.epsilon)) continue;
            double half = std::pow(t, ch.alpha);
            int trg = ch.axis == 0 ? 1 : 0;
            double a = c_lo[static_cast<size_t>(trg)] - ch.origin[trg];
            double b = c_hi[static_cast<size_t>(trg)] - ch.origin[trg];
            double l = std::max(a, -half), h = std::min(b, half);
            if (h > l) len += h - l;
        } else {
            // face parallel to the cusp axis at x' = s; inside where x1 > |s|^{1/alpha}
            double s = face_pos - ch.origin[axis];
            double x1_min = std::pow(std::abs(s), 1.0 / ch.alpha);
            double a = ch.sign * (c_lo[static_cast<size_t>(ch.axis)] - ch.origin[ch.axis]);
            double b = ch.sign * (c_hi[static_cast<size_t>(ch.axis)] - ch.origin[ch.axis]);
            if (ch.sign < 0) std::swap(a, b);
            double l = std::max(a, x1_min), h = std::min(b, ch.epsilon);
            if (h > l) len += h - l;
        }
    }
    return len;
}

std::vector<double> neumann_eigs_at(const DomainSpec& dom, const DensitySpec& density,
                                    int mode_count, double delta) {
    CellGrid g = build_cell_grid(dom, delta);
    int n = static_cast<int>(g.centers.size());
    double cd = diffusion_constant(dom.dim());
    std::vector<double> mu(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        mu[static_cast<size_t>(i)] = density.value(g.centers[static_cast<size_t>(i)]) *
                                     g.weights[static_cast<size_t>(i)];

    // assemble conductances c_ij = cd * rho(face) * |face| / delta, symmetric
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> diag(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto& ix = g.lattice[static_cast<size_t>(i)];
        for (int axis = 0; axis < g.dim; ++axis) {
            std::array<int, 3> jx = ix;
            jx[static_cast<size_t>(axis)] += 1;
            if (jx[static_cast<size_t>(axis)] >= g.nx[static_cast<size_t>(axis)]) continue;
            int j = g.node_of_cell[static_cast<size_t>(g.flat(jx))];
            if (j < 0) continue;
            std::array<double, 3> c_lo{0, 0, 0}, c_hi{0, 0, 0};
            for (int k = 0; k < g.dim; ++k) {
                size_t s = static_cast<size_t>(k);
                c_lo[s] = g.lo[s] + ix[s] * delta;
                c_hi[s] = c_lo[s] + delta;
            }
            double face_pos = g.lo[static_cast<size_t>(axis)] +
                              (ix[static_cast<size_t>(axis)] + 1) * delta;
            double fm = face_measure(dom, axis, face_pos, c_lo, c_hi);
            if (fm <= 0.0) continue;
            Point mid = g.centers[static_cast<size_t>(i)];
            mid[axis] += 0.5 * delta;
            double c = cd * density.value(mid) * fm / delta;
            trips.emplace_back(i, j, -c);
            trips.emplace_back(j, i, -c);
            diag[static_cast<size_t>(i)] += c;
            diag[static_cast<size_t>(j)] += c;
        }
    }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, diag[static_cast<size_t>(i)]);
    Eigen::SparseMatrix<double> A(n, n);  // quadratic form of L in the mu inner product
    A.setFromTriplets(trips.begin(), trips.end());

    // symmetrize: Lsym = D^{-1/2} A D^{-1/2}, D = diag(mu)
    std::vector<double> is(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) is[static_cast<size_t>(i)] = 1.0 / std::sqrt(mu[static_cast<size_t>(i)]);
    Eigen::SparseMatrix<double> L = A;
    for (int k = 0; k < L.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(L, k); it; ++it)
            it.valueRef() *= is[static_cast<size_t>(it.row())] * is[static_cast<size_t>(it.col())];

    if (n <= 1800) {
        Eigen::MatrixXd Ld = Eigen::MatrixXd(L);
        Eigen::VectorXd w;
        dense_sym_eig(Ld, w);
        std::vector<double> out;
        for (int k = 0; k < std::min(mode_count, n); ++k) out.push_back(w(k));
        return out;
    }
    // shift-invert: largest eigenvalues of (L + I)^{-1} are the smallest of L
    Eigen::SparseMatrix<double> M = L;
    for (int i = 0; i < n; ++i) M.coeffRef(i, i) += 1.0;
    M.makeCompressed();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(M);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("neumann_reference: factorization failed");
    auto mv = [&](const double* u, double* y) {
        Eigen::Map<const Eigen::VectorXd> um(u, n);
        Eigen::VectorXd r = solver.solve(um);
        Eigen::Map<Eigen::VectorXd>(y, n) = r;
    };
    LanczosResult lr = lanczos(mv, n, mode_count, {}, 400, 1e-12, 4242, true);
    std::vector<double> out;
    for (double v : lr.values) out.push_back(1.0 / v - 1.0);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

NeumannReference neumann_reference(const DomainSpec& domain, const DensitySpec& density,
                                   int mode_count, double delta) {
    if (density.smoothness() != Smoothness::C1)
        throw std::invalid_argument("neumann_reference: requires a C1 density");
    NeumannReference ref;
    ref.constant_used = diffusion_constant(domain.dim());
    ref.eigenvalues_coarse = neumann_eigs_at(domain, density, mode_count, delta);
    ref.eigenvalues_fine = neumann_eigs_at(domain, density, mode_count, delta / 2.0);
    for (size_t k = 0; k < ref.eigenvalues_coarse.size() && k < ref.eigenvalues_fine.size(); ++k)
        ref.eigenvalues.push_back((4.0 * ref.eigenvalues_fine[k] - ref.eigenvalues_coarse[k]) / 3.0);
    if (!ref.eigenvalues.empty() && std::abs(ref.eigenvalues.front()) < 1e-8)
        ref.eigenvalues.front() = 0.0;  // nu_0 = 0 up to roundoff
    return ref;
}

LocalizationCheck spectrum_localization_check(const std::vector<const DiscretizedOperator*>& ops,
                                              double gamma, const EigenOptions& opts) {
    if (ops.size() < 3)
        throw std::invalid_argument("spectrum_localization_check: need >= 3 sweep points");
    LocalizationCheck out;
    std::vector<double> lx, ly;
    out.min_edge_constant = 1e300;
    for (const auto* op : ops) {
        out.h_values.push_back(op->h);
        double sm = op->sup_rejection();
        out.sup_rejection.push_back(sm);
        EigenResult bot = eigen_bottom(*op, 1, opts);
        double lmin = bot.pairs.at(0).value;
        out.min_eigenvalue.push_back(lmin);
        lx.push_back(std::log(op->h));
        ly.push_back(std::log(1.0 - sm));
        double c = (1.0 + lmin) / std::pow(op->h, gamma);
        out.min_edge_constant = std::min(out.min_edge_constant, c);
    }
    LineFit f = fit_line(lx, ly);
    out.slope_one_minus_supm = f.slope;
    out.intercept_one_minus_supm = f.intercept;
    return out;
}

// --- TV decay -------------------------------------------------------------------

namespace {

std::vector<long> geometric_schedule(long n_max) {
    std::vector<long> ns;
    for (long n = 1; n < n_max; n *= 2) ns.push_back(n);
    ns.push_back(n_max);
    return ns;
}

std::vector<int> candidate_rows(const DiscretizedOperator& op, uint64_t seed, int extra) {
    int n = op.size();
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + std::min(n, 16), idx.end(),
                      [&](int a, int b) { return op.m[static_cast<size_t>(a)] > op.m[static_cast<size_t>(b)]; });
    std::vector<int> cand(idx.begin(), idx.begin() + std::min(n, 16));
    int argmin_mu = 0;
    for (int i = 1; i < n; ++i)
        if (op.mu[static_cast<size_t>(i)] < op.mu[static_cast<size_t>(argmin_mu)]) argmin_mu = i;
    cand.push_back(argmin_mu);
    Rng rng(seed);
    for (int k = 0; k < extra; ++k) cand.push_back(static_cast<int>(rng.next_u64() % n));
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    return cand;
}

// distribution-evolution fallback: p <- p T, tv against mu at schedule points
TVReport tv_by_evolution(const DiscretizedOperator& op, long n_max, const TVOptions& opts) {
    TVReport rep;
    rep.h = op.h;
    rep.partial = true;
    int n = op.size();
    double mu_total = std::accumulate(op.mu.begin(), op.mu.end(), 0.0);
    std::vector<double> mu_n(op.mu);
    for (double& v : mu_n) v /= mu_total;
    std::vector<int> cands = candidate_rows(op, opts.seed, 32);
    std::vector<long> ns = geometric_schedule(n_max);
    std::vector<double> tv(ns.size(), 0.0);
    std::vector<double> p(static_cast<size_t>(n)), q(static_cast<size_t>(n));
    for (int c : cands) {
        std::fill(p.begin(), p.end(), 0.0);
        p[static_cast<size_t>(c)] = 1.0;
        long step = 0;
        for (size_t s = 0; s < ns.size(); ++s) {
            while (step < ns[s]) {
                // q = p T  (scatter by rows of the symmetric base)
                for (int j = 0; j < n; ++j)
                    q[static_cast<size_t>(j)] = op.m[static_cast<size_t>(j)] * p[static_cast<size_t>(j)];
                for (int i = 0; i < n; ++i) {
                    double pi = p[static_cast<size_t>(i)];
                    if (pi == 0.0) continue;
                    double s0 = pi / op.mu[static_cast<size_t>(i)];
                    for (long nz = op.row_ptr[static_cast<size_t>(i)];
                         nz < op.row_ptr[static_cast<size_t>(i) + 1]; ++nz)
                        q[static_cast<size_t>(op.col[static_cast<size_t>(nz)])] +=
                            s0 * op.base[static_cast<size_t>(nz)];
                }
                std::swap(p, q);
                ++step;
            }
            double d = 0.0;
            for (int j = 0; j < n; ++j) d += std::abs(p[static_cast<size_t>(j)] - mu_n[static_cast<size_t>(j)]);
            tv[s] = std::max(tv[s], 0.5 * d);
        }
    }
    rep.n_values = ns;
    rep.tv_values = tv;
    rep.sup_exact.assign(ns.size(), 0);
    return rep;
}

}  // namespace

TVReport tv_decay(const DiscretizedOperator& op, long n_max, const TVOptions& opts) {
    int n = op.size();
    if (n > opts.dense_threshold) {
        TVReport rep = tv_by_evolution(op, n_max, opts);
        rep.gap = 0.0;
        return rep;
    }
    TVReport rep;
    rep.h = op.h;
    Eigen::MatrixXd S = dense_symmetrized(op);
    Eigen::VectorXd w;
    dense_sym_eig(S, w);  // ascending; S now holds eigenvectors
    int top = n - 1;
    rep.gap = 1.0 - w(top - 1 >= 0 ? top - 1 : 0);

    double mu_total = std::accumulate(op.mu.begin(), op.mu.end(), 0.0);
    Eigen::VectorXd sqmu(n), isqmu(n);
    for (int i = 0; i < n; ++i) {
        sqmu(i) = std::sqrt(op.mu[static_cast<size_t>(i)] / mu_total);
        isqmu(i) = 1.0 / sqmu(i);
    }

    std::vector<long> ns = geometric_schedule(n_max);
    std::vector<int> cands = candidate_rows(op, opts.seed, 32);

    for (long nv : ns) {
        // modes k (excluding the top) with |lambda_k|^n above the cutoff
        std::vector<int> sel;
        for (int k = 0; k < n - 1; ++k) {
            double a = std::abs(w(k));
            if (a > 0.0 && nv * std::log(a) > std::log(opts.truncation_tol)) sel.push_back(k);
        }
        double flops = 2.0 * static_cast<double>(n) * n * std::max<size_t>(sel.size(), 1);
        bool full = flops <= opts.flop_budget;
        double tv = 0.0;
        if (sel.empty()) {
            tv = 0.0;
        } else if (full) {
            Eigen::MatrixXd Vs(n, static_cast<int>(sel.size()));
            Eigen::MatrixXd Vr(n, static_cast<int>(sel.size()));
            for (size_t c = 0; c < sel.size(); ++c) {
                Vs.col(static_cast<int>(c)) = S.col(sel[c]) * signed_power(w(sel[c]), nv);
                Vr.col(static_cast<int>(c)) = S.col(sel[c]);
            }
            Eigen::MatrixXd M = Vs * Vr.transpose();
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += std::abs(M(i, j)) * sqmu(j);
                tv = std::max(tv, 0.5 * s * isqmu(i));
            }
        } else {
            std::vector<double> lam_n(sel.size());
            for (size_t c = 0; c < sel.size(); ++c) lam_n[c] = signed_power(w(sel[c]), nv);
            for (int i : cands) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) {
                    double mij = 0.0;
                    for (size_t c = 0; c < sel.size(); ++c)
                        mij += S(i, sel[c]) * S(j, sel[c]) * lam_n[c];
                    s += std::abs(mij) * sqmu(j);
                }
                tv = std::max(tv, 0.5 * s * isqmu(i));
            }
        }
        rep.n_values.push_back(nv);
        rep.tv_values.push_back(tv);
        rep.sup_exact.push_back(full ? 1 : 0);
    }

    // tail fit on log tv over the decaying stretch
    std::vector<double> fx, fy;
    double tv0 = rep.tv_values.front();
    for (size_t s = 0; s < rep.n_values.size(); ++s)
        if (rep.tv_values[s] > 1e-13 && rep.tv_values[s] < 0.5 * tv0) {
            fx.push_back(static_cast<double>(rep.n_values[s]));
            fy.push_back(std::log(rep.tv_values[s]));
        }
    if (fx.size() >= 2) {
        LineFit f = fit_line(fx, fy);
        rep.fitted_rate = -f.slope;
        rep.fitted_prefactor = std::exp(f.intercept);
    }
    return rep;
}

SplittingDiagnostic operator_splitting_diagnostic(const DiscretizedOperator& op, int p_max) {
    int n = op.size();
    if (n > 2500)
        throw std::invalid_argument("operator_splitting_diagnostic: dense regime only (n <= 2500)");
    if (p_max < 1) throw std::invalid_argument("operator_splitting_diagnostic: p_max >= 1");
    double mu_total = std::accumulate(op.mu.begin(), op.mu.end(), 0.0);

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (long nz = op.row_ptr[static_cast<size_t>(i)];
             nz < op.row_ptr[static_cast<size_t>(i) + 1]; ++nz)
            T(i, op.col[static_cast<size_t>(nz)]) += op.kernel_entry(i, nz);
        T(i, i) += op.m[static_cast<size_t>(i)];
    }
    Eigen::VectorXd mvec(n);
    for (int i = 0; i < n; ++i) mvec(i) = op.m[static_cast<size_t>(i)];
    Eigen::MatrixXd K = T;
    K.diagonal() -= mvec;

    SplittingDiagnostic diag;
    diag.sup_rejection = op.sup_rejection();
    Eigen::MatrixXd Tp = T;                       // T^p
    Eigen::MatrixXd Ap = mvec.asDiagonal();       // A_1
    Eigen::MatrixXd Bp = K;                       // B_1
    for (int p = 1; p <= p_max; ++p) {
        diag.a_norm_inf.push_back(Ap.diagonal().maxCoeff());
        double bni = 0.0;
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j)
                s += Bp(i, j) * Bp(i, j) / (op.mu[static_cast<size_t>(j)] / mu_total);
            bni = std::max(bni, std::sqrt(s));
        }
        diag.b_norm_2_inf.push_back(bni);
        diag.max_recursion_residual =
            std::max(diag.max_recursion_residual, (Ap + Bp - Tp).cwiseAbs().maxCoeff());
        if (p == p_max) break;
        Bp = mvec.asDiagonal() * Bp + K * Tp;  // B_{p+1}
        Ap = mvec.asDiagonal() * Ap;           // A_{p+1}
        Tp = T * Tp;
    }
    return diag;
}

// --- report serialization ----------------------------------------------------------

std::string SpectralReport::to_json() const {
    nlohmann::ordered_json j;
    j["h"] = h;
    j["grid_spacing"] = grid_spacing;
    j["gap"] = gap;
    j["gap_richardson_error"] = gap_richardson_error;
    auto tops = nlohmann::ordered_json::array();
    for (const auto& [v, c] : top_eigenvalues) tops.push_back({{"value", v}, {"cluster", c}});
    j["top_eigenvalues"] = tops;
    j["rescaled"] = rescaled;
    j["min_eigenvalue"] = min_eigenvalue;
    j["sup_rejection"] = sup_rejection;
    j["reference_eigenvalues"] = reference_eigenvalues;
    j["constant_used"] = constant_used;
    j["provenance"] = {{"seed", seed}, {"tol", tol}, {"solver_iterations", solver_iterations},
                       {"version", version_string()}};
    return j.dump(2);
}

std::string tv_report_to_json(const TVReport& r) {
    nlohmann::ordered_json j;
    j["h"] = r.h;
    j["gap"] = r.gap;
    j["n_values"] = r.n_values;
    j["tv_values"] = r.tv_values;
    j["sup_exact"] = r.sup_exact;
    j["fitted_rate"] = r.fitted_rate;
    j["fitted_prefactor"] = r.fitted_prefactor;
    j["partial"] = r.partial;
    j["version"] = version_string();
    return j.dump(2);
}

}  // namespace metrocusp
