#pragma once

// Shared oracles for the test suite. Quadrature here goes through
// boost::math so that it is independent of the grid code under test.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "decoh/decoh.hpp"

namespace decoh::testing {

inline double gk(const std::function<double(double)>& f, double a, double b, double tol = 1e-13) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, tol);
}

inline cplx gk_complex(const std::function<cplx(double)>& f, double a, double b, double tol = 1e-13) {
    const double re = gk([&](double x) { return f(x).real(); }, a, b, tol);
    const double im = gk([&](double x) { return f(x).imag(); }, a, b, tol);
    return {re, im};
}

// phi(q,p) = exp(-i q p / 2) int dx exp(i p x) rho(x - q, x) by adaptive quadrature.
inline cplx charfn_by_quadrature(const std::function<cplx(double, double)>& rho, double q, double p,
                                 double half_width = 20.0) {
    const cplx s = gk_complex([&](double x) { return std::polar(1.0, p * x) * rho(x - q, x); }, -half_width,
                              half_width);
    return std::polar(1.0, -0.5 * q * p) * s;
}

// Random valid 1-d Gaussian: C in [0.1, 1], A/C in [1, 4], and F tied to E.
inline GaussianKernelParams1D random_gaussian(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianKernelParams1D g;
    g.C = 0.1 + 0.9 * u(rng);
    g.A = g.C * (1.0 + 3.0 * u(rng));
    g.B = 2.0 * u(rng) - 1.0;
    g.D = 2.0 * u(rng) - 1.0;
    g.E = 2.0 * u(rng) - 1.0;
    g.F = g.E * g.E / (4.0 * g.C);
    return g;
}

inline PhaseMat mat1(double v) { return PhaseMat::Constant(1, 1, v); }

inline PhaseMat diag(std::initializer_list<double> v) {
    PhaseMat m = PhaseMat::Zero(static_cast<int>(v.size()), static_cast<int>(v.size()));
    int i = 0;
    for (double x : v) {
        m(i, i) = x;
        ++i;
    }
    return m;
}

inline PhaseVec vec(std::initializer_list<double> v) {
    PhaseVec out(static_cast<int>(v.size()));
    int i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// Symmetric momentum kicks +-k with weight w per member (d = 1).
inline JumpMeasure momentum_kicks(double k, double w) {
    return JumpMeasure::atoms(2, {{vec({0.0, k}), w}});
}

}  // namespace decoh::testing
