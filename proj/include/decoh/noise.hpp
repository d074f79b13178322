#pragma once

#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "decoh/types.hpp"

namespace decoh {

enum class JumpKind { empty, atoms, momentum_only, position_only, grid_density };

inline const char* to_string(JumpKind k) {
    switch (k) {
        case JumpKind::empty: return "empty";
        case JumpKind::atoms: return "atoms";
        case JumpKind::momentum_only: return "momentum_only";
        case JumpKind::position_only: return "position_only";
        case JumpKind::grid_density: return "grid_density";
    }
    return "?";
}

// One symmetric pair {+point, -point}, each carrying `weight`.
struct JumpAtom {
    PhaseVec point;
    double weight = 0.0;
};

// Density sampled on a uniform node grid: axis a has points
// lower[a] + j * (upper[a] - lower[a]) / (count[a] - 1). Each node stands for
// a cell of volume prod_a h_a.
struct DensitySamples {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<int> count;
    std::vector<double> values;  // row-major, last axis fastest

    int dims() const { return static_cast<int>(count.size()); }
    double spacing(int a) const { return (upper[a] - lower[a]) / (count[a] - 1); }
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dims(); ++a) v *= spacing(a);
        return v;
    }

    static DensitySamples from_function(std::vector<double> lower, std::vector<double> upper, std::vector<int> count,
                                        const std::function<double(const PhaseVec&)>& f) {
        DensitySamples s{std::move(lower), std::move(upper), std::move(count), {}};
        size_t total = 1;
        for (int c : s.count) total *= static_cast<size_t>(c);
        s.values.resize(total);
        for (size_t i = 0; i < total; ++i) s.values[i] = f(s.point(i));
        return s;
    }

    // Builds the grid from rows (c_1..c_n, value), inferring the axes from the
    // distinct coordinates. Rows may come in any order.
    static DensitySamples from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw ValidationError("density: no rows");
        const int n = static_cast<int>(rows.front().size()) - 1;
        if (n < 1) throw ValidationError("density: rows need coordinates and a value");
        std::vector<std::vector<double>> axes(n);
        for (const auto& r : rows) {
            if (static_cast<int>(r.size()) != n + 1) throw ValidationError("density: ragged rows");
            for (int a = 0; a < n; ++a) axes[a].push_back(r[a]);
        }
        DensitySamples s;
        for (int a = 0; a < n; ++a) {
            auto& ax = axes[a];
            std::sort(ax.begin(), ax.end());
            const double span = std::max(1.0, ax.back() - ax.front());
            ax.erase(std::unique(ax.begin(), ax.end(), [&](double x, double y) { return std::abs(x - y) <= 1e-9 * span; }),
                     ax.end());
            if (ax.size() < 2) throw ValidationError("density: axis " + std::to_string(a) + " has one point");
            s.lower.push_back(ax.front());
            s.upper.push_back(ax.back());
            s.count.push_back(static_cast<int>(ax.size()));
            const double h = (ax.back() - ax.front()) / (ax.size() - 1);
            for (size_t j = 0; j < ax.size(); ++j) {
                if (std::abs(ax[j] - (ax.front() + j * h)) > 1e-6 * h) {
                    throw ValidationError("density: axis " + std::to_string(a) + " is not uniform");
                }
            }
        }
        size_t total = 1;
        for (int c : s.count) total *= static_cast<size_t>(c);
        if (rows.size() != total) throw ValidationError("density: grid is incomplete");
        s.values.assign(total, 0.0);
        for (const auto& r : rows) {
            size_t f = 0;
            for (int a = 0; a < n; ++a) {
                const int j = static_cast<int>(std::lround((r[a] - s.lower[a]) / s.spacing(a)));
                f = f * static_cast<size_t>(s.count[a]) + j;
            }
            s.values[f] = r[n];
        }
        return s;
    }

    PhaseVec point(size_t flat) const {
        PhaseVec x(dims());
        for (int a = dims() - 1; a >= 0; --a) {
            const int j = static_cast<int>(flat % static_cast<size_t>(count[a]));
            flat /= static_cast<size_t>(count[a]);
            x[a] = lower[a] + j * spacing(a);
        }
        return x;
    }

    size_t mirror(size_t flat) const {
        std::vector<int> idx(dims());
        for (int a = dims() - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(flat % static_cast<size_t>(count[a]));
            flat /= static_cast<size_t>(count[a]);
        }
        size_t m = 0;
        for (int a = 0; a < dims(); ++a) m = m * static_cast<size_t>(count[a]) + (count[a] - 1 - idx[a]);
        return m;
    }
};

// Origin-symmetric jump measure on R^n, held as symmetric atom pairs. For a
// noise spec n = 2d with coordinates (x, k).
class JumpMeasure {
public:
    static JumpMeasure empty(int n) {
        JumpMeasure m;
        m.n_ = n;
        m.kind_ = JumpKind::empty;
        return m;
    }

    static JumpMeasure atoms(int n, const std::vector<JumpAtom>& pairs) {
        JumpMeasure m;
        m.n_ = n;
        m.kind_ = JumpKind::atoms;
        for (const auto& a : pairs) m.add(a.point, a.weight);
        return m;
    }

    // mu = delta(x) nu(k) with nu given by atoms on R^d.
    static JumpMeasure momentum_only(int d, const std::vector<JumpAtom>& nu) {
        JumpMeasure m = atoms(2 * d, embed(d, nu, d));
        m.kind_ = JumpKind::momentum_only;
        return m;
    }

    // mu = nu(x) delta(k) with nu given by atoms on R^d.
    static JumpMeasure position_only(int d, const std::vector<JumpAtom>& nu) {
        JumpMeasure m = atoms(2 * d, embed(d, nu, 0));
        m.kind_ = JumpKind::position_only;
        return m;
    }

    static JumpMeasure momentum_density(int d, const DensitySamples& nu) {
        JumpMeasure m = atoms(2 * d, embed(d, density_pairs(nu), d));
        m.kind_ = JumpKind::momentum_only;
        m.density_ = true;
        return m;
    }

    static JumpMeasure position_density(int d, const DensitySamples& nu) {
        JumpMeasure m = atoms(2 * d, embed(d, density_pairs(nu), 0));
        m.kind_ = JumpKind::position_only;
        m.density_ = true;
        return m;
    }

    // Density on the full R^n box.
    static JumpMeasure grid_density(const DensitySamples& mu) {
        JumpMeasure m = atoms(mu.dims(), density_pairs(mu));
        m.kind_ = JumpKind::grid_density;
        m.density_ = true;
        return m;
    }

    int ambient_dim() const { return n_; }
    JumpKind kind() const { return kind_; }
    bool has_density() const { return density_; }
    bool is_empty() const { return pairs_.empty(); }
    const std::vector<JumpAtom>& pairs() const { return pairs_; }

    // Total jump rate: both members of every pair.
    double total_rate() const {
        double r = 0.0;
        for (const auto& a : pairs_) r += 2.0 * a.weight;
        return r;
    }

    // psi(l) = int dmu(a) (cos(l.a) - 1), evaluated as -2 sin^2 to keep small
    // arguments accurate.
    double psi_at(const PhaseVec& l) const {
        double s = 0.0;
        for (const auto& a : pairs_) {
            const double h = std::sin(0.5 * l.dot(a.point));
            s += a.weight * h * h;
        }
        return -4.0 * s;
    }

    // B = int dmu(a) a a^T.
    PhaseMat second_moments() const {
        PhaseMat b = PhaseMat::Zero(n_, n_);
        for (const auto& a : pairs_) b += 2.0 * a.weight * a.point * a.point.transpose();
        return b;
    }

private:
    void add(const PhaseVec& point, double weight) {
        if (point.size() != n_) throw ValidationError("jump atom has wrong dimension");
        if (!(weight >= 0.0) || !std::isfinite(weight) || !point.allFinite()) {
            throw ValidationError("jump atom weights must be finite and nonnegative");
        }
        if (weight == 0.0 || point.isZero(0.0)) return;  // null jumps are unobservable
        pairs_.push_back({point, weight});
    }

    static std::vector<JumpAtom> embed(int d, const std::vector<JumpAtom>& nu, int offset) {
        std::vector<JumpAtom> out;
        for (const auto& a : nu) {
            if (a.point.size() != d) throw ValidationError("jump atom has wrong dimension");
            PhaseVec p = PhaseVec::Zero(2 * d);
            p.segment(offset, d) = a.point;
            out.push_back({p, a.weight});
        }
        return out;
    }

    // Each cell of a symmetric grid becomes one member of a pair; the pair
    // weight is density * cell volume.
    static std::vector<JumpAtom> density_pairs(const DensitySamples& s) {
        for (int a = 0; a < s.dims(); ++a) {
            if (s.count[a] < 2 || std::abs(s.lower[a] + s.upper[a]) > 1e-9 * s.spacing(a)) {
                throw ValidationError("density grid must be symmetric about the origin");
            }
        }
        double vmax = 0.0;
        for (double v : s.values) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("density values must be finite and >= 0");
            vmax = std::max(vmax, v);
        }
        const double vol = s.cell_volume();
        std::vector<JumpAtom> out;
        for (size_t i = 0; i < s.values.size(); ++i) {
            const size_t j = s.mirror(i);
            if (std::abs(s.values[i] - s.values[j]) > 1e-9 * std::max(vmax, 1e-300)) {
                throw ValidationError("density is not origin-symmetric");
            }
            if (j <= i) continue;  // pair counted from its lower index; the center is a null jump
            out.push_back({s.point(i), 0.5 * (s.values[i] + s.values[j]) * vol});
        }
        return out;
    }

    int n_ = 0;
    JumpKind kind_ = JumpKind::empty;
    bool density_ = false;
    std::vector<JumpAtom> pairs_;
};

// Diffusion matrix A (2d x 2d) in blocks [[A^{xx}, A^{xk}], [A^{kx}, A^{kk}]]
// acting on z = (q, p): the q-slot pairs with the x-blocks.
struct NoiseSpec {
    int dim = 1;
    PhaseMat A;
    JumpMeasure jump;

    static NoiseSpec make(int d, PhaseMat a, JumpMeasure jump) {
        NoiseSpec n{d, std::move(a), std::move(jump)};
        n.validate();
        return n;
    }

    static NoiseSpec zero(int d) { return make(d, PhaseMat::Zero(2 * d, 2 * d), JumpMeasure::empty(2 * d)); }

    void validate() const {
        if (dim < 1 || dim > kMaxDim) throw ValidationError("noise: dim must be in 1..3");
        if (A.rows() != 2 * dim || A.cols() != 2 * dim) throw ValidationError("noise: A must be 2d x 2d");
        if (!A.allFinite()) throw ValidationError("noise: A has non-finite entries");
        const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw ValidationError("noise: A must be symmetric (A^{k,x} = A^{x,k}^T)");
        }
        Eigen::SelfAdjointEigenSolver<PhaseMat> es(symmetrize(A), Eigen::EigenvaluesOnly);
        const double norm = A.norm();
        if (es.eigenvalues().minCoeff() < -1e-10 * norm) throw ValidationError("noise: A must be positive semidefinite");
        if (jump.ambient_dim() != 2 * dim) throw ValidationError("noise: jump measure must live on R^{2d}");
    }

    PhaseMat block(int row, int col) const { return A.block(row * dim, col * dim, dim, dim); }
};

// Jump atoms pair (x, k) with the phase-space argument as q.k + p.x.
inline PhaseVec jump_argument(const PhaseVec& z) {
    const int d = static_cast<int>(z.size()) / 2;
    PhaseVec l(2 * d);
    l << z.tail(d), z.head(d);
    return l;
}

inline double psi_mu(const JumpMeasure& jump, const PhaseVec& q, const PhaseVec& p) {
    return jump.psi_at(phase_point(p, q));
}

inline PhaseMat second_moment_matrix(const JumpMeasure& jump) { return jump.second_moments(); }

// B re-expressed in the (q, p) slot order used by A: [[B^{kk}, B^{kx}], [B^{xk}, B^{xx}]].
inline PhaseMat slot_moments(const NoiseSpec& n) {
    const int d = n.dim;
    const PhaseMat b = n.jump.second_moments();
    PhaseMat out(2 * d, 2 * d);
    out << b.block(d, d, d, d), b.block(d, 0, d, d), b.block(0, d, d, d), b.block(0, 0, d, d);
    return out;
}

// A + B in slot order: the Gaussian noise with matched second moments.
inline PhaseMat effective_matrix(const NoiseSpec& n) { return n.A + slot_moments(n); }

inline double levy_exponent(const NoiseSpec& n, const PhaseVec& z) {
    return -0.5 * z.dot(n.A * z) + n.jump.psi_at(jump_argument(z));
}

inline double levy_exponent(const NoiseSpec& n, const PhaseVec& q, const PhaseVec& p) {
    return levy_exponent(n, phase_point(q, p));
}

// int_0^t <(q - s p, p) | A (q - s p, p)> ds
//   = (t/4) <z|A z> + (t^3/3) <y|A y>,  y = ((3/2t) q - p, (3/2t) p).
inline double sheared_quadratic_integral(const PhaseMat& a, const PhaseVec& z, double t) {
    if (t == 0.0) return 0.0;
    const int d = static_cast<int>(z.size()) / 2;
    const double s = 1.5 / t;
    PhaseVec y(2 * d);
    y << s * z.head(d) - z.tail(d), s * z.tail(d);
    return 0.25 * t * z.dot(a * z) + (t * t * t / 3.0) * y.dot(a * y);
}

// Q_t = int_0^t M_u^T A M_u du, so the quadratic part of the integrated
// exponent is -z^T Q_t z / 2.
inline PhaseMat integrated_quadratic_matrix(const PhaseMat& a, double t) {
    const int d = static_cast<int>(a.rows()) / 2;
    const PhaseMat aqq = a.block(0, 0, d, d);
    const PhaseMat aqp = a.block(0, d, d, d);
    const PhaseMat apq = a.block(d, 0, d, d);
    const PhaseMat app = a.block(d, d, d, d);
    PhaseMat q(2 * d, 2 * d);
    q.block(0, 0, d, d) = t * aqq;
    q.block(0, d, d, d) = 0.5 * t * t * aqq + t * aqp;
    q.block(d, 0, d, d) = 0.5 * t * t * aqq + t * apq;
    q.block(d, d, d, d) = (t * t * t / 3.0) * aqq + 0.5 * t * t * (aqp + apq) + t * app;
    return symmetrize(q);
}

namespace detail {

// Integrals over v in [0,1] of cos(theta + v h) - 1, sin(theta + v h) and
// v sin(theta + v h). Series for small h, closed forms otherwise.
struct SegmentTrig {
    double cos_minus_one;
    double sin_mean;
    double v_sin_mean;
};

inline SegmentTrig segment_trig(double theta, double h) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    if (std::abs(h) < 0.5) {
        // n-th derivatives of cos and sin at theta cycle with period 4.
        const double dc[4] = {c, -s, -c, s};
        const double ds[4] = {s, c, -s, -c};
        const double half = std::sin(0.5 * theta);
        double kc = -2.0 * half * half;
        double ks = 0.0;
        double ls = 0.0;
        double hn = 1.0;
        double fact = 1.0;  // n!
        for (int n = 0; n <= 24; ++n) {
            if (n > 0) {
                hn *= h;
                fact *= n;
                kc += hn * dc[n % 4] / (fact * (n + 1));
            }
            ks += hn * ds[n % 4] / (fact * (n + 1));
            ls += hn * ds[n % 4] / (fact * (n + 2));
        }
        return {kc, ks, ls};
    }
    const double c1 = std::cos(theta + h);
    const double s1 = std::sin(theta + h);
    return {(s1 - s) / h - 1.0, (c - c1) / h, -c1 / h + (s1 - s) / (h * h)};
}

}  // namespace detail

enum class JumpIntegration { exact, gauss_legendre };

struct QuadratureOptions {
    JumpIntegration method = JumpIntegration::exact;
    int initial_nodes = 64;
    int max_nodes = 4096;
    double rel_tol = 1e-9;
};

// int_0^t psi(q + u p, p) du. The exact route integrates each atom's cosine in
// closed form; the Gauss-Legendre route doubles nodes until converged.
inline double integrated_jump_exponent(const JumpMeasure& jump, const PhaseVec& z, double t,
                                       const QuadratureOptions& opt = {}) {
    if (jump.is_empty() || t == 0.0) return 0.0;
    const int d = static_cast<int>(z.size()) / 2;
    if (opt.method == JumpIntegration::exact) {
        const PhaseVec l = jump_argument(z);
        const PhaseVec p = z.tail(d);
        double s = 0.0;
        for (const auto& a : jump.pairs()) {
            const double theta = l.dot(a.point);
            const double beta = p.dot(a.point.tail(d));
            s += 2.0 * a.weight * detail::segment_trig(theta, t * beta).cos_minus_one;
        }
        return t * s;
    }
    auto gl = [&](int n) {
        gsl_integration_glfixed_table* table = gsl_integration_glfixed_table_alloc(static_cast<size_t>(n));
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            double x = 0.0;
            double w = 0.0;
            gsl_integration_glfixed_point(0.0, t, static_cast<size_t>(i), &x, &w, table);
            s += w * jump.psi_at(jump_argument(shear(z, x)));
        }
        gsl_integration_glfixed_table_free(table);
        return s;
    };
    double prev = gl(opt.initial_nodes);
    for (int n = 2 * opt.initial_nodes; n <= opt.max_nodes; n *= 2) {
        const double cur = gl(n);
        if (std::abs(cur - prev) <= opt.rel_tol * std::max(std::abs(cur), 1e-300)) return cur;
        prev = cur;
    }
    throw NumericalInconsistencyError("integrated_jump_exponent: Gauss-Legendre did not converge");
}

// int_0^t l(q + (t - s) p, p) ds: the log of the noise multiplier of Gamma_t.
inline double integrated_exponent(const NoiseSpec& n, const PhaseVec& z, double t, const QuadratureOptions& opt = {}) {
    if (!(t >= 0.0)) throw DomainError("integrated_exponent: t must be >= 0");
    if (t == 0.0) return 0.0;
    // Substituting u = t - s turns the argument into (q + t p) - s p.
    const double quad = -0.5 * sheared_quadratic_integral(n.A, shear(z, t), t);
    return quad + integrated_jump_exponent(n.jump, z, t, opt);
}

inline double integrated_exponent(const NoiseSpec& n, const PhaseVec& q, const PhaseVec& p, double t,
                                  const QuadratureOptions& opt = {}) {
    return integrated_exponent(n, phase_point(q, p), t, opt);
}

// Precomputed evaluator for the integrated exponent and its gradient at fixed t.
class NoiseMultiplier {
public:
    NoiseMultiplier(const NoiseSpec& n, double t) : noise_(n), t_(t) {
        if (!(t >= 0.0)) throw DomainError("noise multiplier: t must be >= 0");
        q_ = integrated_quadratic_matrix(n.A, t);
    }

    double exponent(const PhaseVec& z) const {
        return -0.5 * z.dot(q_ * z) + integrated_jump_exponent(noise_.jump, z, t_);
    }

    // Gradient of the exponent with respect to (q, p).
    PhaseVec gradient(const PhaseVec& z) const {
        PhaseVec g = -(q_ * z);
        if (noise_.jump.is_empty() || t_ == 0.0) return g;
        const int d = noise_.dim;
        const PhaseVec l = jump_argument(z);
        const PhaseVec p = z.tail(d);
        for (const auto& a : noise_.jump.pairs()) {
            const PhaseVec x = a.point.head(d);
            const PhaseVec k = a.point.tail(d);
            const auto trig = detail::segment_trig(l.dot(a.point), t_ * p.dot(k));
            const double w = 2.0 * a.weight;
            g.head(d) -= w * t_ * trig.sin_mean * k;
            g.tail(d) -= w * (t_ * trig.sin_mean * x + t_ * t_ * trig.v_sin_mean * k);
        }
        return g;
    }

    const PhaseMat& quadratic_matrix() const { return q_; }
    double time() const { return t_; }

private:
    NoiseSpec noise_;
    double t_;
    PhaseMat q_;
};

struct RadiusScan {
    double max_radius = 4.0;
    int radii = 400;
    int directions = 64;
    std::uint64_t seed = 0x5eed;
};

// Largest scanned delta such that for all |l| <= delta
//   -((1+eps)/2) <l|Bl> - s |l|^2 <= psi(l) <= -((1-eps)/2) <l|Bl> + s |l|^2
// with s = eps/2, or s = 0 when the measure has a density.
inline double check_quadratic_bounds(const JumpMeasure& jump, double eps, const RadiusScan& scan = {}) {
    if (!(eps > 0.0)) throw DomainError("check_quadratic_bounds: epsilon must be positive");
    const int n = jump.ambient_dim();
    const PhaseMat b = jump.second_moments();
    std::vector<PhaseVec> dirs;
    for (int i = 0; i < n; ++i) {
        PhaseVec e = PhaseVec::Zero(n);
        e[i] = 1.0;
        dirs.push_back(e);
        dirs.push_back(-e);
    }
    std::mt19937_64 rng(scan.seed);
    std::normal_distribution<double> gauss;
    while (static_cast<int>(dirs.size()) < std::max(scan.directions, 2 * n)) {
        PhaseVec v(n);
        for (int i = 0; i < n; ++i) v[i] = gauss(rng);
        if (v.norm() > 1e-12) dirs.push_back(v / v.norm());
    }
    const double slack = jump.has_density() ? 0.0 : 0.5 * eps;
    double delta = 0.0;
    for (int i = 1; i <= scan.radii; ++i) {
        const double r = scan.max_radius * i / scan.radii;
        for (const auto& u : dirs) {
            const PhaseVec l = r * u;
            const double quad = l.dot(b * l);
            const double psi = jump.psi_at(l);
            const double tol = 1e-13 * (std::abs(psi) + quad);
            const double lo = -0.5 * (1.0 + eps) * quad - slack * r * r;
            const double hi = -0.5 * (1.0 - eps) * quad + slack * r * r;
            if (psi < lo - tol || psi > hi + tol) {
                if (i == 1) {
                    throw NumericalInconsistencyError("check_quadratic_bounds: bound fails at the smallest radius");
                }
                return delta;
            }
        }
        delta = r;
    }
    return delta;
}

}  // namespace decoh
