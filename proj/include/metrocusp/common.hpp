#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace metrocusp {

// Points live in dimension d <= 3 throughout; a fixed-size array avoids
// allocation in the assembly and chain loops.
struct Point {
    std::array<double, 3> c{0.0, 0.0, 0.0};
    int dim = 0;

    Point() = default;
    Point(double x) : c{x, 0.0, 0.0}, dim(1) {}
    Point(double x, double y) : c{x, y, 0.0}, dim(2) {}
    Point(double x, double y, double z) : c{x, y, z}, dim(3) {}

    double& operator[](int i) { return c[static_cast<size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<size_t>(i)]; }
};

inline double dist(const Point& a, const Point& b) {
    double s = 0.0;
    for (int i = 0; i < a.dim; ++i) {
        double t = a.c[static_cast<size_t>(i)] - b.c[static_cast<size_t>(i)];
        s += t * t;
    }
    return std::sqrt(s);
}

// Volume of the euclidean unit ball in R^n; V_0 = 1 by convention.
inline double unit_ball_volume(int n) {
    switch (n) {
        case 0: return 1.0;
        case 1: return 2.0;
        case 2: return M_PI;
        case 3: return 4.0 * M_PI / 3.0;
        default: {
            // V_n = V_{n-2} * 2*pi/n
            double v = (n % 2 == 0) ? M_PI : 2.0;
            for (int k = (n % 2 == 0) ? 4 : 3; k <= n; k += 2) v *= 2.0 * M_PI / k;
            return v;
        }
    }
}

// Limit constant of the rescaled kernel energy: (1/(2 V_d)) \int_{|z|<1} z_1^2 dz.
inline double diffusion_constant(int d) { return 1.0 / (2.0 * (d + 2)); }

// --- deterministic RNG -----------------------------------------------------
// splitmix64 / xoshiro-free: mt19937_64 seeded via splitmix gives independent
// streams per chain index. Doubles are built from the high 53 bits so results
// do not depend on libstdc++'s distribution internals.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        state_[0] = splitmix64(s);
        state_[1] = splitmix64(s);
        state_[2] = splitmix64(s);
        state_[3] = splitmix64(s);
    }
    // stream `k` of a master seed, for per-chain / per-worker use
    static Rng stream(uint64_t seed, uint64_t k) {
        uint64_t s = seed;
        (void)splitmix64(s);
        return Rng(seed ^ (0x5851f42d4c957f2dULL * (k + 1)) ^ splitmix64(s));
    }

    uint64_t next_u64() {  // xoshiro256**
        auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
        uint64_t result = rotl(state_[1] * 5, 7) * 9;
        uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }  // [0,1)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // uniform in the euclidean ball of radius r, dimension d (rejection from cube)
    Point ball(int d, double r) {
        while (true) {
            Point p;
            p.dim = d;
            double s = 0.0;
            for (int i = 0; i < d; ++i) {
                p[i] = uniform(-r, r);
                s += p[i] * p[i];
            }
            if (s < r * r) return p;
        }
    }

  private:
    std::array<uint64_t, 4> state_{};
};

// --- least squares line fit ------------------------------------------------
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need >= 2 matching points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    LineFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

inline std::string version_string() { return "metrocusp 0.1.0"; }

}  // namespace metrocusp
