#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "decoh/coherence.hpp"
#include "decoh/fft.hpp"
#include "decoh/noise.hpp"
#include "decoh/phase_grid.hpp"
#include "decoh/states.hpp"

namespace decoh {

enum class Regime { momentum_jumps, position_jumps, both };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::momentum_jumps: return "momentum_jumps";
        case Regime::position_jumps: return "position_jumps";
        case Regime::both: return "both";
    }
    return "?";
}

struct AsymptoticPrediction {
    Regime regime = Regime::momentum_jumps;
    double power = -2.0;
    double coefficient = 0.0;
    double error_order = -2.5;     // S(t) - at(t) = O(t^error_order)
    bool hypothesis_holds = true;  // positivity or density assumption of the regime

    double at(double t) const { return coefficient * std::pow(t, power); }
};

// Structural classification: exact zero blocks and exact zero atom components.
inline Regime classify(const NoiseSpec& n) {
    n.validate();
    const int d = n.dim;
    bool jumps_in_x = false;
    bool jumps_in_k = false;
    for (const auto& a : n.jump.pairs()) {
        jumps_in_x = jumps_in_x || !a.point.head(d).isZero(0.0);
        jumps_in_k = jumps_in_k || !a.point.tail(d).isZero(0.0);
    }
    const bool axx = !n.block(0, 0).isZero(0.0);
    const bool axk = !n.block(0, 1).isZero(0.0);
    const bool akk = !n.block(1, 1).isZero(0.0);
    if (!axx && !axk && !akk && !jumps_in_x && !jumps_in_k) {
        throw UnsupportedError("classify: zero noise has no decoherence regime");
    }
    if (!axk && !akk && !jumps_in_x) return Regime::momentum_jumps;
    if (!axx && !axk && !jumps_in_k) return Regime::position_jumps;
    return Regime::both;
}

// V^2 = int n(k)^2 |k - <K>|^2 dk / int n(k)^2 dk for the momentum density
// n(k) = rho(k,k), recovered by FFT from the slice phi(q, 0) = int dk e^{iqk} n(k).
inline double momentum_spread(const CharFn& phi, const GridOptions& opt = {}) {
    const int d = phi.dim();
    if (d > 2) throw UnsupportedError("momentum_spread: d <= 2 only");
    const int n = opt.points_per_axis > 0 ? opt.points_per_axis : default_points(d);
    std::vector<double> L(d, opt.half_width);
    if (phi.envelope()) {
        const PhaseMat sqq = phi.envelope()->block(0, 0, d, d);
        const PhaseMat inv = spd_inverse(sqq, "Sigma_qq");
        for (int i = 0; i < d; ++i) L[i] = opt.half_width * std::sqrt(inv(i, i));
    }
    std::vector<int> ext(d, n);
    for (int doubling = 0;; ++doubling) {
        size_t total = 1;
        for (int i = 0; i < d; ++i) total *= n;
        std::vector<cplx> data(total);
        double boundary = 0.0;
        std::vector<int> idx(d);
        for (size_t f = 0; f < total; ++f) {
            size_t r = f;
            PhaseVec z = PhaseVec::Zero(2 * d);
            bool edge = false;
            int parity = 0;
            for (int i = d - 1; i >= 0; --i) {
                idx[i] = static_cast<int>(r % n);
                r /= n;
                z[i] = -L[i] + idx[i] * 2.0 * L[i] / n;
                edge = edge || idx[i] == 0 || idx[i] == n - 1;
                parity += idx[i];
            }
            cplx v = phi(z);
            if (edge) boundary = std::max(boundary, std::abs(v));
            data[f] = (parity & 1) ? -v : v;
        }
        if (boundary >= opt.boundary_tol) {
            if (doubling >= opt.max_doublings) throw TruncationError("momentum_spread: phi(q,0) does not decay");
            for (double& l : L) l *= 2.0;
            continue;
        }
        fft::transform(data, ext, fft::Direction::forward);
        // n(k_m) up to a constant factor; k_m = (m - N/2) * pi / L on each axis.
        double s0 = 0.0;
        std::vector<double> s1(d, 0.0);
        std::vector<double> dens(total);
        for (size_t f = 0; f < total; ++f) {
            size_t r = f;
            int parity = 0;
            for (int i = d - 1; i >= 0; --i) {
                parity += static_cast<int>(r % n);
                r /= n;
            }
            dens[f] = ((parity & 1) ? -data[f] : data[f]).real();
        }
        auto kcoord = [&](size_t f, int axis) {
            size_t r = f;
            int j = 0;
            for (int i = d - 1; i >= axis; --i) {
                j = static_cast<int>(r % n);
                r /= n;
            }
            return (j - n / 2) * kPi / L[axis];
        };
        for (size_t f = 0; f < total; ++f) {
            s0 += dens[f];
            for (int i = 0; i < d; ++i) s1[i] += dens[f] * kcoord(f, i);
        }
        double num = 0.0;
        double den = 0.0;
        for (size_t f = 0; f < total; ++f) {
            double k2 = 0.0;
            for (int i = 0; i < d; ++i) {
                const double dk = kcoord(f, i) - s1[i] / s0;
                k2 += dk * dk;
            }
            num += dens[f] * dens[f] * k2;
            den += dens[f] * dens[f];
        }
        return std::sqrt(num / den);
    }
}

// Leading-order law S_X(t) ~ coefficient * t^power for the three regimes.
//   momentum jumps / both: sqrt(3) Tr[G^-1]^{1/2} / Tr[G]^{1/2} t^-2 with
//     G = A^{x,x} + B^{x,x} (q-slot block of A + B);
//   position jumps: Tr[H^-1]^{1/2} / (2 sqrt(2) V) t^{-1/2} with H the
//     p-slot block of A + B and V the momentum spread of the initial state.
inline AsymptoticPrediction classify_and_predict(const NoiseSpec& n, const CharFn& initial,
                                                 const GridOptions& opt = {}) {
    AsymptoticPrediction p;
    p.regime = classify(n);
    const int d = n.dim;
    const PhaseMat eff = effective_matrix(n);
    if (p.regime == Regime::position_jumps) {
        const PhaseMat h = eff.block(d, d, d, d);
        if (!is_positive_definite(h)) throw SingularMatrixError("A^{k,k} + B^{k,k} is not positive definite");
        p.hypothesis_holds = is_positive_definite(n.block(1, 1)) || n.jump.has_density();
        p.power = -0.5;
        p.error_order = -1.0;
        const double v = momentum_spread(initial, opt);
        p.coefficient = std::sqrt(spd_inverse(h, "H").trace()) / (2.0 * std::sqrt(2.0) * v);
        return p;
    }
    const PhaseMat g = eff.block(0, 0, d, d);
    if (!is_positive_definite(g)) throw SingularMatrixError("A^{x,x} + B^{x,x} is not positive definite");
    p.hypothesis_holds = p.regime == Regime::momentum_jumps
                             ? (is_positive_definite(n.block(0, 0)) || n.jump.has_density())
                             : (is_positive_definite(n.A) || n.jump.kind() == JumpKind::grid_density);
    p.power = -2.0;
    p.error_order = -2.5;
    p.coefficient = std::sqrt(3.0) * std::sqrt(spd_inverse(g, "G").trace()) / std::sqrt(g.trace());
    return p;
}

inline AsymptoticPrediction classify_and_predict(const NoiseSpec& n, const GaussianKernelParams1D& initial,
                                                 const GridOptions& opt = {}) {
    return classify_and_predict(n, gaussian_charfn(initial), opt);
}

// ||Gamma_t(rho) - rho~_t||_2 / ||rho~_t||_2.
inline double relaxation_distance(const CharFn& phi_t, const NoiseSpec& n, double t, const GridOptions& opt = {}) {
    if (!(t > 0.0)) throw DomainError("relaxation_distance: t must be > 0");
    if (classify(n) == Regime::position_jumps) {
        throw UnsupportedError("relaxation_distance: the relaxation state is not defined for position-only noise");
    }
    const GaussianMoments lim = moments(limit_state_position(n, t));
    const CharFn ref = gaussian_charfn(lim);
    if (phi_t.is_sampled()) {
        const PhaseGrid& g = phi_t.grid();
        std::vector<cplx> diff(phi_t.values());
        g.for_each([&](size_t f, const std::vector<int>&, const PhaseVec& z) { diff[f] -= ref(z); });
        const CharFn dphi = CharFn::sampled(g, std::move(diff), false);
        return hs_norm(dphi, opt) / hs_norm(sample(ref, g), opt);
    }
    std::optional<PhaseMat> env = lim.sigma;
    if (phi_t.envelope()) {
        env = spd_inverse(spd_inverse(*phi_t.envelope(), "envelope") + spd_inverse(lim.sigma, "Sigma"), "envelope");
    }
    const CharFn dphi = CharFn::analytic(
        n.dim, [phi_t, ref](const PhaseVec& z) { return phi_t(z) - ref(z); }, {}, env, false);
    return hs_norm(dphi, opt) / hs_norm(ref, opt);
}

struct PowerLawFit {
    double power = 0.0;
    double coefficient = 0.0;
    double residual = 0.0;
    size_t window = 0;
};

// Log-log least squares over the last half of the series.
inline PowerLawFit powerlaw_fit(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 4) throw DomainError("powerlaw_fit: need at least 4 points");
    for (size_t i = 0; i < series.size(); ++i) {
        if (!(series[i].second > 0.0) || !(series[i].first > 0.0)) throw DomainError("powerlaw_fit: t and S must be > 0");
        if (i && !(series[i].first > series[i - 1].first)) throw DomainError("powerlaw_fit: t must increase");
    }
    const size_t w = (series.size() + 1) / 2;
    const size_t start = series.size() - w;
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    for (size_t i = start; i < series.size(); ++i) {
        const double x = std::log(series[i].first);
        const double y = std::log(series[i].second);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nw = static_cast<double>(w);
    PowerLawFit fit;
    fit.window = w;
    fit.power = (nw * sxy - sx * sy) / (nw * sxx - sx * sx);
    fit.coefficient = std::exp((sy - fit.power * sx) / nw);
    for (size_t i = start; i < series.size(); ++i) {
        const double model = fit.coefficient * std::pow(series[i].first, fit.power);
        fit.residual = std::max(fit.residual, std::abs(series[i].second - model) / series[i].second);
    }
    return fit;
}

}  // namespace decoh
