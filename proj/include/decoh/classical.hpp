#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include "decoh/noise.hpp"
#include "decoh/phase_grid.hpp"

namespace decoh {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream per (path, purpose), so results do not depend on how
// paths are split across threads.
inline std::uint64_t path_seed(std::uint64_t master, std::uint64_t path, std::uint64_t stream) {
    return splitmix64(splitmix64(splitmix64(master) ^ path) ^ stream);
}

// Final-time samples of the classical process (x~_t + int_0^t k~_s ds, k~_t)
// started at the origin with zero momentum.
struct PathEnsemble {
    int dim = 1;
    double t = 0.0;
    int steps = 0;
    std::uint64_t seed = 0;
    std::vector<double> position;  // n * d
    std::vector<double> momentum;  // n * d
    std::vector<int> jumps;

    size_t size() const { return jumps.size(); }
    PhaseVec x(size_t i) const { return Eigen::Map<const Eigen::VectorXd>(&position[i * dim], dim); }
    PhaseVec v(size_t i) const { return Eigen::Map<const Eigen::VectorXd>(&momentum[i * dim], dim); }
};

struct SamplerOptions {
    int threads = 1;
};

namespace detail {

inline PhaseMat psd_sqrt(const PhaseMat& a) {
    Eigen::SelfAdjointEigenSolver<PhaseMat> es(symmetrize(a));
    PhaseVec ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct PathSampler {
    const NoiseSpec& noise;
    double t;
    int steps;
    std::uint64_t seed;
    PhaseMat root;
    bool diffusive;
    std::vector<double> cumulative;  // jump-pair selection
    double rate;

    PathSampler(const NoiseSpec& n, double t_, int steps_, std::uint64_t seed_)
        : noise(n), t(t_), steps(steps_), seed(seed_), root(psd_sqrt(n.A)), diffusive(!n.A.isZero(0.0)),
          rate(n.jump.total_rate()) {
        double c = 0.0;
        for (const auto& a : n.jump.pairs()) {
            c += 2.0 * a.weight;
            cumulative.push_back(c);
        }
    }

    // Writes one path's final (X, V) and returns its jump count.
    int sample(size_t index, double* x_out, double* v_out, std::vector<double>& w) const {
        const int d = noise.dim;
        const int m = 2 * d;
        PhaseVec x = PhaseVec::Zero(d);
        PhaseVec v = PhaseVec::Zero(d);
        if (diffusive && t > 0.0) {
            // Brownian bridge on the step lattice: coarse points first, so
            // doubling the step count keeps every earlier draw.
            std::mt19937_64 rng(path_seed(seed, index, 1));
            std::normal_distribution<double> gauss;
            w.assign(static_cast<size_t>(steps + 1) * m, 0.0);
            for (int c = 0; c < m; ++c) w[static_cast<size_t>(steps) * m + c] = std::sqrt(t) * gauss(rng);
            for (int span = steps; span > 1; span /= 2) {
                const double sd = std::sqrt(0.25 * t * span / steps);
                for (int left = 0; left < steps; left += span) {
                    const int mid = left + span / 2;
                    for (int c = 0; c < m; ++c) {
                        w[static_cast<size_t>(mid) * m + c] =
                            0.5 * (w[static_cast<size_t>(left) * m + c] + w[static_cast<size_t>(left + span) * m + c]) +
                            sd * gauss(rng);
                    }
                }
            }
            // (k~, x~) = root * W in (q-slot, p-slot) order.
            const double dt = t / steps;
            PhaseVec integral = PhaseVec::Zero(d);
            PhaseVec prev = PhaseVec::Zero(d);
            for (int i = 1; i <= steps; ++i) {
                const PhaseVec wi = Eigen::Map<const Eigen::VectorXd>(&w[static_cast<size_t>(i) * m], m);
                const PhaseVec ki = root.topRows(d) * wi;
                integral += 0.5 * dt * (prev + ki);
                prev = ki;
            }
            const PhaseVec wt = Eigen::Map<const Eigen::VectorXd>(&w[static_cast<size_t>(steps) * m], m);
            v += root.topRows(d) * wt;
            x += root.bottomRows(d) * wt + integral;
        }
        int count = 0;
        if (rate > 0.0 && t > 0.0) {
            std::mt19937_64 rng(path_seed(seed, index, 2));
            std::exponential_distribution<double> wait(rate);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (double tau = wait(rng); tau < t; tau += wait(rng)) {
                const double u = unit(rng) * rate;
                const size_t j = std::min<size_t>(
                    std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin(), cumulative.size() - 1);
                const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
                const PhaseVec& a = noise.jump.pairs()[j].point;
                x += sign * (a.head(d) + (t - tau) * a.tail(d));
                v += sign * a.tail(d);
                ++count;
            }
        }
        for (int i = 0; i < d; ++i) {
            x_out[i] = x[i];
            v_out[i] = v[i];
        }
        return count;
    }
};

}  // namespace detail

inline PathEnsemble sample_paths(const NoiseSpec& noise, double t, size_t n, int steps, std::uint64_t seed,
                                 const SamplerOptions& opt = {}) {
    if (n < 1) throw DomainError("sample_paths: n must be >= 1");
    if (steps < 64 || !is_power_of_two(steps)) throw DomainError("sample_paths: steps must be a power of two >= 64");
    if (!(t >= 0.0)) throw DomainError("sample_paths: t must be >= 0");
    noise.validate();
    const int d = noise.dim;
    PathEnsemble ens;
    ens.dim = d;
    ens.t = t;
    ens.steps = steps;
    ens.seed = seed;
    ens.position.assign(n * d, 0.0);
    ens.momentum.assign(n * d, 0.0);
    ens.jumps.assign(n, 0);
    const detail::PathSampler sampler(noise, t, steps, seed);
    auto run = [&](size_t begin, size_t end) {
        std::vector<double> scratch;
        for (size_t i = begin; i < end; ++i) {
            ens.jumps[i] = sampler.sample(i, &ens.position[i * d], &ens.momentum[i * d], scratch);
        }
    };
    const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(n)));
    if (threads == 1) {
        run(0, n);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(run, n * k / threads, n * (k + 1) / threads);
        for (auto& th : pool) th.join();
    }
    return ens;
}

struct Estimate {
    cplx value;
    double std_error = 0.0;
};

// Mean of exp(i q.V + i p.X) with standard error sqrt((Var cos + Var sin)/n).
inline Estimate empirical_charfn(const PathEnsemble& ens, const PhaseVec& z) {
    const int d = ens.dim;
    const size_t n = ens.size();
    std::vector<double> c(n);
    std::vector<double> s(n);
    double mc = 0.0;
    double ms = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double arg = 0.0;
        for (int j = 0; j < d; ++j) arg += z[j] * ens.momentum[i * d + j] + z[d + j] * ens.position[i * d + j];
        c[i] = std::cos(arg);
        s[i] = std::sin(arg);
        mc += c[i];
        ms += s[i];
    }
    mc /= n;
    ms /= n;
    double vc = 0.0;
    double vs = 0.0;
    for (size_t i = 0; i < n; ++i) {
        vc += (c[i] - mc) * (c[i] - mc);
        vs += (s[i] - ms) * (s[i] - ms);
    }
    const double var = n > 1 ? (vc + vs) / (n - 1) : 0.0;
    return {cplx(mc, ms), std::sqrt(var / n)};
}

// Histogram on an (x,v) grid, normalized over the samples that land inside.
inline PhaseDensity classical_density(const PathEnsemble& ens, const PhaseGrid& grid, double min_fraction = 0.999) {
    const int d = ens.dim;
    if (grid.dim != d || !grid.axis_aligned()) throw DomainError("classical_density: grid dimension mismatch");
    PhaseDensity out{grid, std::vector<double>(grid.size(), 0.0), 0.0};
    size_t inside = 0;
    std::vector<int> idx(2 * d);
    std::vector<double> extent(2 * d, 0.0);
    for (size_t i = 0; i < ens.size(); ++i) {
        bool ok = true;
        for (int a = 0; a < 2 * d; ++a) {
            const double val = a < d ? ens.position[i * d + a] : ens.momentum[i * d + a - d];
            extent[a] = std::max(extent[a], std::abs(val));
            const int j = static_cast<int>(std::floor((val + grid.half_width[a]) / grid.spacing(a) + 0.5));
            if (j < 0 || j >= grid.count[a]) ok = false;
            idx[a] = j;
        }
        if (!ok) continue;
        out.values[grid.flat(idx)] += 1.0;
        ++inside;
    }
    const double fraction = ens.size() ? static_cast<double>(inside) / ens.size() : 0.0;
    if (fraction < min_fraction) {
        std::string hint;
        for (int a = 0; a < 2 * d; ++a) hint += (a ? ", " : "") + std::to_string(1.05 * extent[a]);
        throw RangeError("classical_density: grid holds only " + std::to_string(100.0 * fraction) +
                         "% of samples; suggested half-widths (x..., v...): " + hint);
    }
    const double scale = 1.0 / (static_cast<double>(inside) * grid.cell_volume());
    for (double& v : out.values) v *= scale;
    return out;
}

// (int |W - p|^2)^{1/2} / (int |p|^2)^{1/2} on a shared grid.
inline double wigner_classical_distance(const WignerFn& w, const PhaseDensity& p) {
    if (!w.grid.same_layout(p.grid, 1e-9)) throw DomainError("wigner_classical_distance: grid mismatch");
    double num = 0.0;
    double den = 0.0;
    for (size_t i = 0; i < p.values.size(); ++i) {
        num += (w.values[i] - p.values[i]) * (w.values[i] - p.values[i]);
        den += p.values[i] * p.values[i];
    }
    if (den == 0.0) throw DomainError("wigner_classical_distance: reference density is zero");
    return std::sqrt(num / den);
}

}  // namespace decoh
