#include "metrocusp/torus.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>

#include "metrocusp/quadrature.hpp"

namespace metrocusp {

namespace {
std::mutex fftw_mutex;  // plan creation is not thread-safe

// 1D DCT along `axis` of a tensor stored x-fastest; kind REDFT10 (forward,
// includes a factor 2) or REDFT01 (inverse of the scaled forward).
void dct_axis(std::vector<double>& data, const std::array<int, 3>& nx, int axis,
              fftw_r2r_kind kind) {
    int n = nx[static_cast<size_t>(axis)];
    if (n == 1) {
        if (kind == FFTW_REDFT10)
            for (double& v : data) v *= 2.0;  // consistent with the n>1 scaling
        return;
    }
    std::vector<double> line(static_cast<size_t>(n));
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lk(fftw_mutex);
        plan = fftw_plan_r2r_1d(n, line.data(), line.data(), kind, FFTW_ESTIMATE);
    }
    long stride = 1;
    for (int i = 0; i < axis; ++i) stride *= nx[static_cast<size_t>(i)];
    long outer = 1;
    for (int i = axis + 1; i < 3; ++i) outer *= nx[static_cast<size_t>(i)];
    long inner = stride;
    for (long o = 0; o < outer; ++o)
        for (long i = 0; i < inner; ++i) {
            long base = o * stride * n + i;
            for (int j = 0; j < n; ++j) line[static_cast<size_t>(j)] = data[static_cast<size_t>(base + j * stride)];
            fftw_execute_r2r(plan, line.data(), line.data());
            for (int j = 0; j < n; ++j) data[static_cast<size_t>(base + j * stride)] = line[static_cast<size_t>(j)];
        }
    {
        std::lock_guard<std::mutex> lk(fftw_mutex);
        fftw_destroy_plan(plan);
    }
}

}  // namespace

TorusField::TorusField(int d1, int d_prime, int d_doubleprime, std::array<int, 3> band)
    : d1_(d1), dp_(d_prime), dpp_(d_doubleprime), band_(band) {
    if (d1 < 0 || d1 > 1 || d_prime < 0 || d_doubleprime < 0 || dim() < 1 || dim() > 3)
        throw std::invalid_argument("TorusField: bad axis split");
    for (int i = dim(); i < 3; ++i) band_[static_cast<size_t>(i)] = 0;
    size_t n = 1;
    for (int i = 0; i < 3; ++i) n *= static_cast<size_t>(2 * band_[static_cast<size_t>(i)] + 1);
    c_.assign(n, {0.0, 0.0});
}

size_t TorusField::index(const std::array<int, 3>& k) const {
    size_t idx = 0;
    for (int i = 2; i >= 0; --i) {
        int b = band_[static_cast<size_t>(i)];
        int v = k[static_cast<size_t>(i)];
        if (v < -b || v > b) throw std::out_of_range("TorusField: frequency outside band");
        idx = idx * static_cast<size_t>(2 * b + 1) + static_cast<size_t>(v + b);
    }
    return idx;
}

std::complex<double>& TorusField::at(const std::array<int, 3>& k) { return c_[index(k)]; }
std::complex<double> TorusField::at(const std::array<int, 3>& k) const { return c_[index(k)]; }

double TorusField::l2_norm_sq() const {
    double s = 0.0;
    for (const auto& v : c_) s += std::norm(v);
    return s;
}

std::complex<double> TorusField::evaluate(const Point& x) const {
    std::complex<double> s{0.0, 0.0};
    int d = dim();
    for_each([&](const std::array<int, 3>& k, const std::complex<double>& v) {
        if (v == std::complex<double>{0.0, 0.0}) return;
        double phase = 0.0;
        for (int i = 0; i < d; ++i) phase += M_PI * k[static_cast<size_t>(i)] * x[i];
        s += v * std::polar(1.0, phase);
    });
    return s * std::pow(2.0, -0.5 * d);
}

double TorusField::scaled_norm(const std::array<int, 3>& k, int d1, int dp, int dpp,
                               const AnisotropicScale& s) {
    (void)dpp;
    double acc = 0.0;
    int axis = 0;
    if (d1 == 1) {
        acc += (s.h_bar * k[0]) * (s.h_bar * k[0]);
        axis = 1;
    }
    for (int i = 0; i < dp; ++i, ++axis)
        acc += (s.h_tilde * k[static_cast<size_t>(axis)]) * (s.h_tilde * k[static_cast<size_t>(axis)]);
    for (; axis < 3; ++axis)
        acc += (s.h * k[static_cast<size_t>(axis)]) * (s.h * k[static_cast<size_t>(axis)]);
    return std::sqrt(acc);
}

TorusField reflect_extend(const CubeSamples& f) {
    int d = f.dim();
    if (static_cast<long>(f.values.size()) != f.size())
        throw std::invalid_argument("reflect_extend: sample count mismatch");
    std::array<int, 3> band{0, 0, 0};
    for (int i = 0; i < d; ++i) band[static_cast<size_t>(i)] = f.nx[static_cast<size_t>(i)] - 1;
    TorusField g(f.d1, f.d_prime, f.d_doubleprime, band);

    std::vector<double> work = f.values;
    std::array<int, 3> nx = f.nx;
    for (int i = d; i < 3; ++i) nx[static_cast<size_t>(i)] = 1;
    for (int axis = 0; axis < d; ++axis) dct_axis(work, nx, axis, FFTW_REDFT10);

    // coefficient of the even extension:  c(k) = 2^{-d/2} N^{-d} DCT[|k|]
    double scale = std::pow(2.0, -0.5 * d);
    for (int i = 0; i < d; ++i) scale /= f.nx[static_cast<size_t>(i)];
    std::array<int, 3> k{0, 0, 0};
    for (k[2] = -band[2]; k[2] <= band[2]; ++k[2])
        for (k[1] = -band[1]; k[1] <= band[1]; ++k[1])
            for (k[0] = -band[0]; k[0] <= band[0]; ++k[0]) {
                long idx = (static_cast<long>(std::abs(k[2])) * nx[1] + std::abs(k[1])) * nx[0] +
                           std::abs(k[0]);
                g.at(k) = {scale * work[static_cast<size_t>(idx)], 0.0};
            }
    return g;
}

CubeSamples restrict_to_cube(const TorusField& g, const std::array<int, 3>& nx) {
    int d = g.dim();
    CubeSamples out;
    out.d1 = g.d1();
    out.d_prime = g.d_prime();
    out.d_doubleprime = g.d_doubleprime();
    out.nx = nx;
    for (int i = d; i < 3; ++i) out.nx[static_cast<size_t>(i)] = 1;
    for (int i = 0; i < d; ++i)
        if (out.nx[static_cast<size_t>(i)] <= g.band()[static_cast<size_t>(i)])
            throw std::invalid_argument("restrict_to_cube: grid too coarse for the band limit");

    // gather the |k|-cosine table (imag parts must vanish for reflected fields)
    std::vector<double> work(static_cast<size_t>(out.nx[0]) * out.nx[1] * out.nx[2], 0.0);
    std::array<int, 3> k{0, 0, 0};
    const auto& b = g.band();
    for (k[2] = 0; k[2] <= b[2]; ++k[2])
        for (k[1] = 0; k[1] <= b[1]; ++k[1])
            for (k[0] = 0; k[0] <= b[0]; ++k[0]) {
                std::complex<double> v = g.at(k);
                if (std::abs(v.imag()) > 1e-9 * (1.0 + std::abs(v.real())))
                    throw std::invalid_argument("restrict_to_cube: field is not real-even");
                long idx = (static_cast<long>(k[2]) * out.nx[1] + k[1]) * out.nx[0] + k[0];
                work[static_cast<size_t>(idx)] = v.real();
            }
    // REDFT01 computes out[j] = in[0] + 2 sum_{m>=1} in[m] cos(pi m (j+1/2)/N);
    // our series per axis is  sum_m c_m (m==0 ? 1 : 2) cos(...), overall 2^{-d/2}
    for (int axis = 0; axis < d; ++axis) dct_axis(work, out.nx, axis, FFTW_REDFT01);
    double scale = std::pow(2.0, -0.5 * d);
    out.values.resize(work.size());
    for (size_t i = 0; i < work.size(); ++i) out.values[i] = scale * work[i];
    return out;
}

double ball_multiplier(int n, double xi) {
    if (n < 1) throw std::invalid_argument("ball_multiplier: n must be >= 1");
    double t = std::abs(xi);
    if (t == 0.0) return 1.0;
    // project the ball onto the xi axis: (V_{n-1}/V_n) \int_{-1}^1 (1-s^2)^{(n-1)/2} cos(pi s t) ds
    double c = unit_ball_volume(n - 1) / unit_ball_volume(n);
    double p = 0.5 * (n - 1);
    double val = integrate(
        [&](double s) { return std::pow(std::max(0.0, 1.0 - s * s), p) * std::cos(M_PI * s * t); },
        -1.0, 1.0, 1e-12);
    return c * val;
}

namespace {

// memoized radial lookups keyed by (n, |k|^2) per scale value
struct MultiplierCache {
    int n;
    double scale;
    std::map<long, double> by_k2;
    double get(long k2) {
        auto it = by_k2.find(k2);
        if (it != by_k2.end()) return it->second;
        double v = ball_multiplier(n, scale * std::sqrt(static_cast<double>(k2)));
        by_k2.emplace(k2, v);
        return v;
    }
};

}  // namespace

TorusField torus_metropolis_apply(const TorusField& g, const AnisotropicScale& scale) {
    if (!(scale.h_bar < 1.0 && scale.h_tilde < 1.0 && scale.h < 1.0))
        throw std::invalid_argument("torus_metropolis_apply: scale components must be < 1");
    TorusField out = g;
    int d1 = g.d1(), dp = g.d_prime(), dpp = g.d_doubleprime();
    MultiplierCache c1{1, scale.h_bar, {}, };
    MultiplierCache cp{std::max(dp, 1), scale.h_tilde, {}, };
    MultiplierCache cpp{std::max(dpp, 1), scale.h, {}, };
    out.for_each([&](const std::array<int, 3>& k, const std::complex<double>&) {
        double mult = 1.0;
        int axis = 0;
        if (d1 == 1) {
            mult *= c1.get(static_cast<long>(k[0]) * k[0]);
            axis = 1;
        }
        if (dp > 0) {
            long k2 = 0;
            for (int i = 0; i < dp; ++i, ++axis)
                k2 += static_cast<long>(k[static_cast<size_t>(axis)]) * k[static_cast<size_t>(axis)];
            mult *= cp.get(k2);
        }
        if (dpp > 0) {
            long k2 = 0;
            for (int i = 0; i < dpp; ++i, ++axis)
                k2 += static_cast<long>(k[static_cast<size_t>(axis)]) * k[static_cast<size_t>(axis)];
            mult *= cpp.get(k2);
        }
        out.at(k) = g.at(k) * mult;
    });
    return out;
}

double torus_dirichlet_energy(const TorusField& g, const AnisotropicScale& scale) {
    TorusField tg = torus_metropolis_apply(g, scale);
    double s = 0.0;
    g.for_each([&](const std::array<int, 3>& k, const std::complex<double>& v) {
        s += (std::norm(v) - (tg.at(k) * std::conj(v)).real());
    });
    return s;
}

SplitFields low_high_split(const TorusField& g, const AnisotropicScale& scale, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("low_high_split: delta must be > 0");
    SplitFields out{g, g};
    g.for_each([&](const std::array<int, 3>& k, const std::complex<double>& v) {
        bool low = TorusField::scaled_norm(k, g.d1(), g.d_prime(), g.d_doubleprime(), scale) < delta;
        if (low)
            out.high.at(k) = {0.0, 0.0};
        else
            out.low.at(k) = {0.0, 0.0};
        (void)v;
    });
    return out;
}

DeltaScan delta_threshold_scan(int d1, int d_prime, int d_doubleprime, double scan_limit) {
    DeltaScan out;
    double alpha_min = 1e300;
    for (int n : {d1 == 1 ? 1 : 0, d_prime, d_doubleprime})
        if (n >= 1) alpha_min = std::min(alpha_min, 1.0 / (2.0 * (n + 2)));
    out.upsilon1 = 4.0 / alpha_min;

    // unit directions over the groups actually present
    std::vector<int> groups;
    if (d1 == 1) groups.push_back(1);
    if (d_prime >= 1) groups.push_back(d_prime);
    if (d_doubleprime >= 1) groups.push_back(d_doubleprime);
    if (groups.empty()) throw std::invalid_argument("delta_threshold_scan: empty split");
    const int nd = 12;
    std::vector<std::vector<double>> dirs;
    if (groups.size() == 1) {
        dirs.push_back({1.0});
    } else if (groups.size() == 2) {
        for (int i = 0; i <= nd; ++i) {
            double th = 0.5 * M_PI * i / nd;
            dirs.push_back({std::cos(th), std::sin(th)});
        }
    } else {
        for (int i = 0; i <= nd; ++i)
            for (int j = 0; j <= nd; ++j) {
                double th = 0.5 * M_PI * i / nd, ph = 0.5 * M_PI * j / nd;
                dirs.push_back({std::cos(th), std::sin(th) * std::cos(ph),
                                std::sin(th) * std::sin(ph)});
            }
    }
    auto one_minus_mult = [&](double r, const std::vector<double>& u) {
        double m = 1.0;
        for (size_t gi = 0; gi < groups.size(); ++gi)
            m *= ball_multiplier(groups[gi], r * u[gi]);
        return 1.0 - m;
    };

    const int nr = 400;
    double delta = 0.0;
    for (int ir = 1; ir <= nr; ++ir) {
        double r = scan_limit * ir / nr;
        bool ok = true;
        for (const auto& u : dirs)
            if (one_minus_mult(r, u) < r * r / out.upsilon1) {
                ok = false;
                break;
            }
        if (!ok) break;
        delta = r;
    }
    out.delta = delta;
    // measured Upsilon2 on |xi| >= delta; the multiplier decays at infinity so
    // the scanned window is the binding region
    double vmin = 1e300;
    for (int ir = 0; ir <= nr; ++ir) {
        double r = delta + (2.0 * scan_limit - delta) * ir / nr;
        for (const auto& u : dirs) vmin = std::min(vmin, one_minus_mult(r, u));
    }
    out.upsilon2 = 1.0 / std::max(vmin, 1e-300);
    return out;
}

void export_coefficients_csv(const TorusField& g, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("export_coefficients_csv: cannot open " + path);
    int d = g.dim();
    for (int i = 0; i < d; ++i) os << "k" << i << ",";
    os << "re,im\n";
    char buf[80];
    g.for_each([&](const std::array<int, 3>& k, const std::complex<double>& v) {
        for (int i = 0; i < d; ++i) os << k[static_cast<size_t>(i)] << ",";
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", v.real(), v.imag());
        os << buf << "\n";
    });
}

}  // namespace metrocusp
