#pragma once

#include <functional>

namespace metrocusp {

// Adaptive 1D quadrature (Gauss-Kronrod 7/15) to absolute tolerance `tol`.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-12, int max_depth = 40);

// \int_a^b x^alpha dx for a,b >= 0.
double power_integral(double a, double b, double alpha);

// \int_{max(a,t0)}^{min(b,t1)} ... helper used by slice integration: integral of
// clamp(x^alpha, lo, hi) - style chord lengths is assembled from these pieces
// by the callers; here we only expose the adaptive rule and power integral.

}  // namespace metrocusp
