#pragma once

#include <cmath>
#include <functional>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "types.hpp"

namespace cavityspec {

/// Angular density N(cos theta) of spontaneous emission on [-1, 1].
using AngularPattern = std::function<double(double)>;

namespace detail {
inline double integrate_pm1(const std::function<double(double)>& f, double* err) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -1.0, 1.0, 25, 1e-14, err);
}
}  // namespace detail

/// alpha = integral of x^2 N(x) over [-1, 1] by adaptive Gauss-Kronrod quadrature.
inline double recoil_alpha(const AngularPattern& pattern) {
    double err_norm = 0.0, err = 0.0;
    const double norm = detail::integrate_pm1(pattern, &err_norm);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-8)
        throw ValidationError("recoil_alpha: angular pattern is not normalized (integral = " + std::to_string(norm) + ")");
    const double alpha = detail::integrate_pm1([&](double x) { return x * x * pattern(x); }, &err);
    if (err > 1e-10) throw NumericalError("recoil_alpha: quadrature error estimate above 1e-10");
    return alpha;
}

inline double isotropic_pattern(double) { return 0.5; }

/// Emission pattern of a linear dipole, 3(1 + x^2)/8.
inline double dipole_pattern(double x) { return 3.0 * (1.0 + x * x) / 8.0; }

/// Default alpha: linear-dipole pattern.
inline double default_alpha() {
    static const double value = recoil_alpha(dipole_pattern);
    return value;
}

}  // namespace cavityspec
