#pragma once

#include <array>
#include <cmath>
#include <utility>

#include "decoh/index_report.hpp"
#include "decoh/phase_grid.hpp"

namespace decoh {

enum class Observable { X, K };

namespace detail {

// Raw integrals (without the (2pi)^-d factor) of
//   |phi|^2, |q|^2 |phi|^2, |p|^2 |phi|^2, |grad_p phi - v_p phi|^2, |grad_q phi - v_q phi|^2
// plus the centering vectors v = grad phi(0).
struct IndexIntegrals {
    std::array<double, 5> s{};
    PhaseCVec v;
    GridReport grid;
};

inline IndexIntegrals index_integrals(const CharFn& phi, const GridOptions& opt) {
    const int d = phi.dim();
    IndexIntegrals r;
    if (phi.is_sampled()) {
        const PhaseGrid& g = phi.grid();
        const auto& f = phi.values();
        if (boundary_max(phi) >= opt.boundary_tol) throw TruncationError("coherence: phi does not decay at boundary");
        std::vector<std::vector<cplx>> grad(2 * d);
        r.v.resize(2 * d);
        for (int a = 0; a < 2 * d; ++a) {
            grad[a] = spectral_derivative(g, f, a);
            r.v[a] = stencil_derivative_at_origin(phi, a);
        }
        double gbound = 0.0;
        g.for_each([&](size_t i, const std::vector<int>& idx, const PhaseVec& z) {
            const double m2 = std::norm(f[i]);
            r.s[0] += m2;
            r.s[1] += z.head(d).squaredNorm() * m2;
            r.s[2] += z.tail(d).squaredNorm() * m2;
            for (int j = 0; j < d; ++j) {
                const double ep = std::norm(grad[d + j][i] - r.v[d + j] * f[i]);
                const double eq = std::norm(grad[j][i] - r.v[j] * f[i]);
                r.s[3] += ep;
                r.s[4] += eq;
                if (g.on_boundary(idx)) gbound = std::max(gbound, std::sqrt(ep + eq));
            }
        });
        if (gbound >= opt.boundary_tol) throw TruncationError("coherence: gradient does not decay at boundary");
        for (double& x : r.s) x *= g.cell_volume();
        r.grid = {g.count[0], g.half_width[0], 0};
        return r;
    }
    if (!phi.has_gradient()) throw UnsupportedError("coherence: analytic input needs a registered gradient");
    r.v = phi.gradient(PhaseVec::Zero(2 * d));
    const auto sums = adapted_integrals(
        d, phi.envelope(), 5,
        [&](const PhaseVec& z, double* out) {
            const cplx f = phi(z);
            const PhaseCVec g = phi.gradient(z) - r.v * f;
            const double m2 = std::norm(f);
            out[0] += m2;
            out[1] += z.head(d).squaredNorm() * m2;
            out[2] += z.tail(d).squaredNorm() * m2;
            const double ep = g.tail(d).squaredNorm();
            const double eq = g.head(d).squaredNorm();
            out[3] += ep;
            out[4] += eq;
            return std::sqrt(m2 * (1.0 + z.squaredNorm())) + std::sqrt(ep + eq);
        },
        opt, &r.grid);
    std::copy(sums.begin(), sums.end(), r.s.begin());
    return r;
}

}  // namespace detail

// ||[X, rho]||_2 = ((2pi)^-d int |q|^2 |phi|^2)^{1/2}; K uses |p|^2.
inline double commutator_norm(const CharFn& phi, Observable obs, const GridOptions& opt = {}) {
    const auto r = detail::index_integrals(phi, opt);
    return std::sqrt(std::pow(2.0 * kPi, -phi.dim()) * r.s[obs == Observable::X ? 1 : 2]);
}

// ||{X - <X>, rho}||_2 = 2 ((2pi)^-d int |grad_p phi - v_p phi|^2)^{1/2}, v_p = grad_p phi(0);
// K uses grad_q.
inline double anticommutator_norm(const CharFn& phi, Observable obs, const GridOptions& opt = {}) {
    const auto r = detail::index_integrals(phi, opt);
    return 2.0 * std::sqrt(std::pow(2.0 * kPi, -phi.dim()) * r.s[obs == Observable::X ? 3 : 4]);
}

inline IndexReport coherence_index(const CharFn& phi, const GridOptions& opt = {}) {
    const int d = phi.dim();
    const auto r = detail::index_integrals(phi, opt);
    const double norm2 = r.s[0];
    if (!(norm2 > 0.0)) throw DegenerateStateError("coherence_index: zero operator");
    IndexReport rep;
    rep.hs_norm = std::sqrt(std::pow(2.0 * kPi, -d) * norm2);
    rep.C_X = std::sqrt(r.s[1] / norm2);
    rep.C_K = std::sqrt(r.s[2] / norm2);
    rep.D_X = 2.0 * std::sqrt(r.s[3] / norm2);
    rep.D_K = 2.0 * std::sqrt(r.s[4] / norm2);
    if (rep.D_X <= 1e-12 * std::max(1.0, rep.C_X)) throw DegenerateStateError("coherence_index: D_X vanishes (X)");
    if (rep.D_K <= 1e-12 * std::max(1.0, rep.C_K)) throw DegenerateStateError("coherence_index: D_K vanishes (K)");
    rep.S_X = rep.C_X / rep.D_X;
    rep.S_K = rep.C_K / rep.D_K;
    rep.mean_x.resize(d);
    rep.mean_k.resize(d);
    for (int i = 0; i < d; ++i) {
        rep.mean_k[i] = (r.v[i] / cplx(0.0, 1.0)).real();
        rep.mean_x[i] = (r.v[d + i] / cplx(0.0, 1.0)).real();
    }
    rep.grid_points = r.grid.points_per_axis;
    rep.grid_half_width = r.grid.half_width;
    rep.grid_doublings = r.grid.doublings;
    rep.boundary_tol = opt.boundary_tol;
    return rep;
}

// (C_X D_K, C_K D_X); both are bounded below by 1/2.
inline std::pair<double, double> uncertainty_products(const CharFn& phi, const GridOptions& opt = {}) {
    const IndexReport r = coherence_index(phi, opt);
    return {r.cx_dk(), r.ck_dx()};
}

}  // namespace decoh
