#pragma once

#include <memory>
#include <random>
#include <vector>

#include "decoh/classical.hpp"
#include "decoh/fft.hpp"
#include "decoh/noise.hpp"
#include "decoh/phase_grid.hpp"

namespace decoh {

// Envelope of the evolved state: shear of the initial envelope plus the
// integrated covariance of the moment-matched Gaussian noise.
inline std::optional<PhaseMat> evolved_envelope(const std::optional<PhaseMat>& env0, const NoiseSpec& n, double t) {
    const PhaseMat q = integrated_quadratic_matrix(effective_matrix(n), t);
    if (!env0) {
        if (is_positive_definite(q)) return q;
        return std::nullopt;
    }
    const PhaseMat m = shear_matrix(n.dim, t);
    return symmetrize(m.transpose() * (*env0) * m + q);
}

namespace detail {

// Shifts phi(q, p) -> phi(q + t p, p) on a sampled axis-aligned grid by a
// zero-padded Fourier shift along the q axes of every p slice.
inline std::vector<cplx> shear_sampled(const PhaseGrid& g, const std::vector<cplx>& v, double t) {
    const int d = g.dim;
    std::vector<int> qext(d);
    std::vector<int> pext(d);
    size_t nq = 1;
    size_t np = 1;
    size_t npad = 1;
    for (int i = 0; i < d; ++i) {
        qext[i] = g.count[i];
        pext[i] = g.count[d + i];
        nq *= qext[i];
        np *= pext[i];
        npad *= 2 * qext[i];
    }
    std::vector<int> padext(d);
    for (int i = 0; i < d; ++i) padext[i] = 2 * qext[i];
    std::vector<cplx> out(v.size(), 0.0);
    std::vector<cplx> buf(npad);
    std::vector<int> pidx(d, 0);
    for (size_t pf = 0; pf < np; ++pf) {
        size_t rem = pf;
        for (int i = d - 1; i >= 0; --i) {
            pidx[i] = static_cast<int>(rem % pext[i]);
            rem /= pext[i];
        }
        PhaseVec shift(d);
        bool beyond = false;
        for (int i = 0; i < d; ++i) {
            shift[i] = t * g.coordinate(d + i, pidx[i]);
            if (std::abs(shift[i]) >= 2.0 * g.half_width[i]) beyond = true;
        }
        if (beyond) continue;  // every shifted point lies outside the sampled box
        std::fill(buf.begin(), buf.end(), cplx(0.0));
        std::vector<int> qidx(d, 0);
        for (size_t qf = 0; qf < nq; ++qf) {
            size_t r = qf;
            size_t padf = 0;
            for (int i = d - 1; i >= 0; --i) {
                qidx[i] = static_cast<int>(r % qext[i]);
                r /= qext[i];
            }
            for (int i = 0; i < d; ++i) padf = padf * padext[i] + qidx[i];
            buf[padf] = v[qf * np + pf];
        }
        fft::transform(buf, padext, fft::Direction::forward);
        std::vector<int> kidx(d, 0);
        for (size_t kf = 0; kf < npad; ++kf) {
            size_t r = kf;
            double phase = 0.0;
            bool nyquist = false;
            for (int i = d - 1; i >= 0; --i) {
                kidx[i] = static_cast<int>(r % padext[i]);
                r /= padext[i];
                const int n2 = padext[i];
                const int freq = kidx[i] < n2 / 2 ? kidx[i] : kidx[i] - n2;
                if (kidx[i] == n2 / 2) nyquist = true;
                phase += 2.0 * kPi * freq / (n2 * g.spacing(i)) * shift[i];
            }
            buf[kf] = nyquist ? cplx(0.0) : buf[kf] * std::polar(1.0 / npad, phase);
        }
        fft::transform(buf, padext, fft::Direction::backward);
        for (size_t qf = 0; qf < nq; ++qf) {
            size_t r = qf;
            size_t padf = 0;
            for (int i = d - 1; i >= 0; --i) {
                qidx[i] = static_cast<int>(r % qext[i]);
                r /= qext[i];
            }
            for (int i = 0; i < d; ++i) padf = padf * padext[i] + qidx[i];
            out[qf * np + pf] = buf[padf];
        }
    }
    return out;
}

}  // namespace detail

// Gamma_t in the characteristic-function picture:
//   phi_t(q, p) = exp(int_0^t l(q + (t - s) p, p) ds) phi_0(q + t p, p).
inline CharFn evolve(const CharFn& phi0, const NoiseSpec& noise, double t) {
    if (!(t >= 0.0)) throw DomainError("evolve: t must be >= 0");
    noise.validate();
    if (phi0.dim() != noise.dim) throw DomainError("evolve: state and noise dimensions differ");
    auto mult = std::make_shared<const NoiseMultiplier>(noise, t);
    if (phi0.is_analytic()) {
        auto eval = [phi0, mult, t](const PhaseVec& z) { return std::exp(mult->exponent(z)) * phi0(shear(z, t)); };
        CharFn::Grad grad;
        if (phi0.has_gradient()) {
            grad = [phi0, mult, t](const PhaseVec& z) {
                const int d = static_cast<int>(z.size()) / 2;
                const PhaseVec w = shear(z, t);
                const double e = std::exp(mult->exponent(z));
                const cplx f = phi0(w);
                const PhaseCVec g0 = phi0.gradient(w);
                PhaseCVec g = f * mult->gradient(z).cast<cplx>();
                g.head(d) += g0.head(d);
                g.tail(d) += t * g0.head(d) + g0.tail(d);
                return PhaseCVec(e * g);
            };
        }
        return CharFn::analytic(phi0.dim(), eval, grad, evolved_envelope(phi0.envelope(), noise, t), phi0.is_state());
    }
    const PhaseGrid& g = phi0.grid();
    if (!g.axis_aligned()) throw UnsupportedError("evolve: sampled input must be axis-aligned");
    std::vector<cplx> v = t == 0.0 ? phi0.values() : detail::shear_sampled(g, phi0.values(), t);
    g.for_each([&](size_t f, const std::vector<int>&, const PhaseVec& z) { v[f] *= std::exp(mult->exponent(z)); });
    return CharFn::sampled(g, std::move(v), phi0.is_state());
}

inline CharFn free_evolve(const CharFn& phi, double t) { return evolve(phi, NoiseSpec::zero(phi.dim()), t); }

// Fixed, seeded panel of phase-space points in the envelope frame of phi
// (|w| <= radius); the origin comes first.
inline std::vector<PhaseVec> test_panel(const std::optional<PhaseMat>& env, int d, int count = 20,
                                        std::uint64_t seed = 20240611, double radius = 1.5) {
    const PhaseMat frame = envelope_frame(env, d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<PhaseVec> panel;
    panel.push_back(PhaseVec::Zero(2 * d));
    while (static_cast<int>(panel.size()) < count) {
        PhaseVec w(2 * d);
        for (int i = 0; i < 2 * d; ++i) w[i] = u(rng);
        if (w.norm() > 1.0 || w.norm() < 1e-3) continue;
        panel.push_back(frame * (radius * w));
    }
    return panel;
}

struct ResidualReport {
    double max_residual = 0.0;
    std::vector<PhaseVec> panel;
    std::vector<double> residuals;
};

// |(phi_h - phi_0)/h - (l phi_0 + p . grad_q phi_0)| over a fixed panel.
inline ResidualReport generator_residual(const CharFn& phi0, const NoiseSpec& noise, double h) {
    if (!(h > 0.0 && h <= 1e-2)) throw DomainError("generator_residual: h must lie in (0, 1e-2]");
    if (!phi0.is_analytic() || !phi0.has_gradient()) {
        throw UnsupportedError("generator_residual: needs an analytic state with a gradient");
    }
    const int d = phi0.dim();
    const CharFn phih = evolve(phi0, noise, h);
    ResidualReport rep;
    rep.panel = test_panel(phi0.envelope(), d);
    for (const auto& z : rep.panel) {
        const cplx f0 = phi0(z);
        const PhaseCVec g = phi0.gradient(z);
        cplx rhs = levy_exponent(noise, z) * f0;
        for (int i = 0; i < d; ++i) rhs += z[d + i] * g[i];
        const double r = std::abs((phih(z) - f0) / h - rhs);
        rep.residuals.push_back(r);
        rep.max_residual = std::max(rep.max_residual, r);
    }
    return rep;
}

// Monte Carlo estimate of the noise multiplier exp(int_0^t l(q + (t-s) p, p) ds).
inline Estimate mc_multiplier(const NoiseSpec& noise, const PhaseVec& z, double t, size_t n, std::uint64_t seed,
                              int steps = 256, const SamplerOptions& opt = {}) {
    if (n < 1000) throw DomainError("mc_multiplier: n must be >= 1000");
    if (z.isZero(0.0)) return {cplx(1.0), 0.0};
    return empirical_charfn(sample_paths(noise, t, n, steps, seed, opt), z);
}

}  // namespace decoh
