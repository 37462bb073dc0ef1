#include "metrocusp/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace metrocusp {

namespace {

// Gauss-Kronrod 7-15 nodes/weights on [-1,1].
constexpr double kXgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
constexpr double kWg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

struct GkResult {
    double value;
    double error;
};

GkResult gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
    double resg = 0.0, resk = 0.0;
    double fc = f(c);
    resk = fc * kWgk[7];
    resg = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        double x = hw * kXgk[j];
        double f1 = f(c - x), f2 = f(c + x);
        resk += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) resg += kWg[j / 2] * (f1 + f2);
    }
    return {resk * hw, std::abs(resk - resg) * hw};
}

double adapt(const std::function<double(double)>& f, double a, double b, double tol,
             int depth) {
    GkResult r = gk15(f, a, b);
    if (r.error <= tol || depth <= 0) return r.value;
    double m = 0.5 * (a + b);
    return adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol,
                 int max_depth) {
    if (!(a <= b)) throw std::invalid_argument("integrate: a > b");
    if (a == b) return 0.0;
    return adapt(f, a, b, tol, max_depth);
}

double power_integral(double a, double b, double alpha) {
    if (a < 0.0 || b < a) throw std::invalid_argument("power_integral: need 0 <= a <= b");
    if (alpha == -1.0) return std::log(b) - std::log(a);
    double p = alpha + 1.0;
    return (std::pow(b, p) - std::pow(a, p)) / p;
}

}  // namespace metrocusp
