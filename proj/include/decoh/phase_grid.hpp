#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "decoh/fft.hpp"
#include "decoh/types.hpp"

namespace decoh {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Uniform grid over 2d axes. For phase-space grids the axes are
// (q_1..q_d, p_1..p_d); for position-velocity grids they are (x_1..x_d, v_1..v_d).
// Axis a has points -L_a + j*h_a, j = 0..N_a-1, with h_a = 2 L_a / N_a, so the
// origin is always the point j = N_a/2. A non-identity frame maps grid
// coordinates w to phase-space points z = frame * w.
struct PhaseGrid {
    int dim = 1;
    std::vector<double> half_width;
    std::vector<int> count;
    PhaseMat frame;

    static PhaseGrid uniform(int dim, double half_width, int count) {
        return axes(std::vector<double>(2 * dim, half_width), std::vector<int>(2 * dim, count));
    }

    static PhaseGrid axes(std::vector<double> half_width, std::vector<int> count) {
        PhaseGrid g;
        if (half_width.size() != count.size() || half_width.size() % 2 != 0 || half_width.empty()) {
            throw DomainError("PhaseGrid: need matching even-length axis lists");
        }
        g.dim = static_cast<int>(half_width.size()) / 2;
        g.half_width = std::move(half_width);
        g.count = std::move(count);
        g.frame = PhaseMat::Identity(2 * g.dim, 2 * g.dim);
        g.validate();
        return g;
    }

    void validate() const {
        if (dim < 1 || dim > kMaxDim) throw DomainError("PhaseGrid: dim must be in 1..3");
        for (size_t a = 0; a < count.size(); ++a) {
            if (count[a] < 8 || !is_power_of_two(count[a])) {
                throw DomainError("PhaseGrid: axis " + std::to_string(a) +
                                  " count must be a power of two >= 8");
            }
            if (!(half_width[a] > 0.0) || !std::isfinite(half_width[a])) {
                throw DomainError("PhaseGrid: axis " + std::to_string(a) + " half-width must be positive");
            }
        }
    }

    int axes_count() const { return 2 * dim; }
    double spacing(int a) const { return 2.0 * half_width[a] / count[a]; }
    double coordinate(int a, int j) const { return -half_width[a] + j * spacing(a); }

    size_t size() const {
        size_t n = 1;
        for (int c : count) n *= static_cast<size_t>(c);
        return n;
    }

    bool axis_aligned() const { return frame.isIdentity(0.0); }

    double cell_volume() const {
        double v = std::abs(frame.determinant());
        for (int a = 0; a < axes_count(); ++a) v *= spacing(a);
        return v;
    }

    size_t stride(int a) const {
        size_t s = 1;
        for (int b = axes_count() - 1; b > a; --b) s *= static_cast<size_t>(count[b]);
        return s;
    }

    std::vector<int> index(size_t flat) const {
        std::vector<int> idx(axes_count());
        for (int a = axes_count() - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(flat % static_cast<size_t>(count[a]));
            flat /= static_cast<size_t>(count[a]);
        }
        return idx;
    }

    size_t flat(const std::vector<int>& idx) const {
        size_t f = 0;
        for (int a = 0; a < axes_count(); ++a) f = f * static_cast<size_t>(count[a]) + idx[a];
        return f;
    }

    size_t origin_index() const {
        std::vector<int> idx(axes_count());
        for (int a = 0; a < axes_count(); ++a) idx[a] = count[a] / 2;
        return flat(idx);
    }

    PhaseVec local(const std::vector<int>& idx) const {
        PhaseVec w(axes_count());
        for (int a = 0; a < axes_count(); ++a) w[a] = coordinate(a, idx[a]);
        return w;
    }

    PhaseVec point(size_t f) const { return frame * local(index(f)); }

    bool on_boundary(const std::vector<int>& idx) const {
        for (int a = 0; a < axes_count(); ++a) {
            if (idx[a] == 0 || idx[a] == count[a] - 1) return true;
        }
        return false;
    }

    bool same_layout(const PhaseGrid& o, double tol = 1e-12) const {
        if (dim != o.dim || count != o.count) return false;
        for (int a = 0; a < axes_count(); ++a) {
            if (std::abs(half_width[a] - o.half_width[a]) > tol * std::max(1.0, half_width[a])) return false;
        }
        return (frame - o.frame).cwiseAbs().maxCoeff() <= tol;
    }

    // Visits every point in flat order with its multi-index and phase-space point.
    template <class Fn>
    void for_each(Fn&& fn) const {
        std::vector<int> idx(axes_count(), 0);
        const size_t n = size();
        PhaseVec w = local(idx);
        for (size_t f = 0; f < n; ++f) {
            fn(f, idx, PhaseVec(frame * w));
            for (int a = axes_count() - 1; a >= 0; --a) {
                if (++idx[a] < count[a]) {
                    w[a] = coordinate(a, idx[a]);
                    break;
                }
                idx[a] = 0;
                w[a] = coordinate(a, 0);
            }
        }
    }
};

// The grid whose DFT pairs with g: axes halves are swapped and each spacing
// becomes 2 pi / (N h). Maps (q,p) grids to (x,v) grids and back.
inline PhaseGrid conjugate_grid(const PhaseGrid& g) {
    if (!g.axis_aligned()) throw UnsupportedError("conjugate_grid: grid must be axis-aligned");
    const int d = g.dim;
    std::vector<double> L(2 * d);
    std::vector<int> N(2 * d);
    for (int a = 0; a < 2 * d; ++a) {
        const int src = (a + d) % (2 * d);
        N[a] = g.count[src];
        const double h = 2.0 * kPi / (g.count[src] * g.spacing(src));
        L[a] = 0.5 * N[a] * h;
    }
    return PhaseGrid::axes(L, N);
}

// Quantum characteristic function, either an analytic callable or samples on
// a grid. The optional envelope Sigma records |phi(z)| ~ exp(-z^T Sigma z / 2)
// and is used to place integration frames.
class CharFn {
public:
    using Eval = std::function<cplx(const PhaseVec&)>;
    using Grad = std::function<PhaseCVec(const PhaseVec&)>;

    static CharFn analytic(int dim, Eval eval, Grad grad = {}, std::optional<PhaseMat> envelope = {},
                           bool is_state = true) {
        if (dim < 1 || dim > kMaxDim) throw DomainError("CharFn: dim must be in 1..3");
        CharFn f;
        f.dim_ = dim;
        f.eval_ = std::move(eval);
        f.grad_ = std::move(grad);
        f.envelope_ = std::move(envelope);
        f.is_state_ = is_state;
        return f;
    }

    static CharFn sampled(PhaseGrid grid, std::vector<cplx> values, bool is_state = true) {
        grid.validate();
        if (values.size() != grid.size()) throw DomainError("CharFn: sample count does not match grid");
        CharFn f;
        f.dim_ = grid.dim;
        f.grid_ = std::make_shared<const PhaseGrid>(std::move(grid));
        f.values_ = std::make_shared<const std::vector<cplx>>(std::move(values));
        f.is_state_ = is_state;
        return f;
    }

    int dim() const { return dim_; }
    bool is_analytic() const { return static_cast<bool>(eval_); }
    bool is_sampled() const { return static_cast<bool>(values_); }
    bool has_gradient() const { return static_cast<bool>(grad_); }
    bool is_state() const { return is_state_; }
    const std::optional<PhaseMat>& envelope() const { return envelope_; }

    cplx operator()(const PhaseVec& z) const {
        if (!eval_) throw UnsupportedError("CharFn: pointwise evaluation needs an analytic callable");
        return eval_(z);
    }

    PhaseCVec gradient(const PhaseVec& z) const {
        if (!grad_) throw UnsupportedError("CharFn: no registered gradient");
        return grad_(z);
    }

    const PhaseGrid& grid() const {
        if (!grid_) throw UnsupportedError("CharFn: not sampled");
        return *grid_;
    }
    const std::vector<cplx>& values() const {
        if (!values_) throw UnsupportedError("CharFn: not sampled");
        return *values_;
    }

    CharFn with_envelope(std::optional<PhaseMat> env) const {
        CharFn f = *this;
        f.envelope_ = std::move(env);
        return f;
    }

    CharFn as_state(bool flag) const {
        CharFn f = *this;
        f.is_state_ = flag;
        return f;
    }

private:
    int dim_ = 1;
    Eval eval_;
    Grad grad_;
    std::optional<PhaseMat> envelope_;
    std::shared_ptr<const PhaseGrid> grid_;
    std::shared_ptr<const std::vector<cplx>> values_;
    bool is_state_ = true;
};

inline CharFn sample(const CharFn& phi, const PhaseGrid& grid) {
    std::vector<cplx> v(grid.size());
    grid.for_each([&](size_t f, const std::vector<int>&, const PhaseVec& z) { v[f] = phi(z); });
    return CharFn::sampled(grid, std::move(v), phi.is_state());
}

// Linear combination sum_i w_i phi_i of analytic characteristic functions.
inline CharFn mixture(const std::vector<std::pair<double, CharFn>>& parts) {
    if (parts.empty()) throw DomainError("mixture: no components");
    const int d = parts.front().second.dim();
    bool grad = true;
    bool env = true;
    double wsum = 0.0;
    PhaseMat precision = PhaseMat::Zero(2 * d, 2 * d);
    for (const auto& [w, f] : parts) {
        if (f.dim() != d || !f.is_analytic()) throw DomainError("mixture: analytic components of equal dim");
        grad = grad && f.has_gradient();
        env = env && f.envelope().has_value();
        wsum += w;
        if (f.envelope()) precision += std::abs(w) * spd_inverse(*f.envelope(), "mixture envelope");
    }
    std::optional<PhaseMat> envelope;
    if (env) {
        double wabs = 0.0;
        for (const auto& part : parts) wabs += std::abs(part.first);
        envelope = spd_inverse(precision / wabs, "mixture envelope");
    }
    auto eval = [parts](const PhaseVec& z) {
        cplx s = 0.0;
        for (const auto& [w, f] : parts) s += w * f(z);
        return s;
    };
    CharFn::Grad g;
    if (grad) {
        g = [parts](const PhaseVec& z) {
            PhaseCVec s = PhaseCVec::Zero(z.size());
            for (const auto& [w, f] : parts) s += w * f.gradient(z);
            return s;
        };
    }
    const bool state = std::abs(wsum - 1.0) <= 1e-12 &&
                       std::all_of(parts.begin(), parts.end(), [](const auto& p) { return p.second.is_state(); });
    return CharFn::analytic(d, eval, g, envelope, state);
}

// Integration settings for analytic characteristic functions. The grid lives
// in the frame w = Sigma^{1/2} z of the envelope, so |phi| ~ exp(-|w|^2/2).
struct GridOptions {
    int points_per_axis = 0;  // 0 selects 512 for d=1 and 64 for d=2
    double half_width = 8.0;
    int max_doublings = 4;
    double boundary_tol = 1e-10;
};

struct GridReport {
    int points_per_axis = 0;
    double half_width = 0.0;
    int doublings = 0;
};

inline int default_points(int d) {
    if (d == 1) return 512;
    if (d == 2) return 64;
    throw UnsupportedError("grid transforms support d <= 2");
}

inline PhaseMat envelope_frame(const std::optional<PhaseMat>& env, int d) {
    if (!env) return PhaseMat::Identity(2 * d, 2 * d);
    Eigen::SelfAdjointEigenSolver<PhaseMat> es(symmetrize(*env));
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0.0)) throw SingularMatrixError("envelope is not positive definite");
    PhaseVec ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev[i] = 1.0 / std::sqrt(std::max(ev[i], 1e-30 * top));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline PhaseGrid adapted_grid(const std::optional<PhaseMat>& env, int d, int n, double half_width) {
    PhaseGrid g = PhaseGrid::uniform(d, half_width, n);
    g.frame = envelope_frame(env, d);
    return g;
}

// Axis-aligned grid whose box contains the ellipse z^T Sigma z <= radius^2.
inline PhaseGrid bounding_grid(const PhaseMat& sigma, int n, double radius = 8.0) {
    const int d = static_cast<int>(sigma.rows()) / 2;
    const PhaseMat inv = spd_inverse(symmetrize(sigma), "envelope");
    std::vector<double> L(2 * d);
    for (int a = 0; a < 2 * d; ++a) L[a] = radius * std::sqrt(inv(a, a));
    return PhaseGrid::axes(L, std::vector<int>(2 * d, n));
}

// (x,v) grid covering +-n_sigma standard deviations of the Wigner function of
// a state with characteristic covariance Sigma; conjugate_grid of it is the
// matching (q,p) sampling grid.
inline PhaseGrid density_grid_for(const PhaseMat& sigma, int n, double n_sigma = 6.0) {
    const int d = static_cast<int>(sigma.rows()) / 2;
    std::vector<double> L(2 * d);
    for (int i = 0; i < d; ++i) {
        L[i] = n_sigma * std::sqrt(sigma(d + i, d + i));
        L[d + i] = n_sigma * std::sqrt(sigma(i, i));
    }
    return PhaseGrid::axes(L, std::vector<int>(2 * d, n));
}

// Integrates K integrands over an adapted frame grid, widening the grid until
// the boundary magnitude falls below tolerance. fn(z, out) adds the K values
// at z into out and returns the boundary magnitude there.
template <class Fn>
std::vector<double> adapted_integrals(int d, const std::optional<PhaseMat>& env, int k, Fn&& fn,
                                      const GridOptions& opt, GridReport* report = nullptr) {
    const int n = opt.points_per_axis > 0 ? opt.points_per_axis : default_points(d);
    double L = opt.half_width;
    for (int doubling = 0;; ++doubling) {
        const PhaseGrid g = adapted_grid(env, d, n, L);
        std::vector<double> sums(k, 0.0);
        double boundary = 0.0;
        g.for_each([&](size_t, const std::vector<int>& idx, const PhaseVec& z) {
            const double mag = fn(z, sums.data());
            if (g.on_boundary(idx)) boundary = std::max(boundary, mag);
        });
        if (boundary < opt.boundary_tol) {
            if (report) *report = {n, L, doubling};
            for (double& s : sums) s *= g.cell_volume();
            return sums;
        }
        if (doubling >= opt.max_doublings) {
            throw TruncationError("integrand does not decay at the grid boundary (magnitude " +
                                  std::to_string(boundary) + ")");
        }
        L *= 2.0;
    }
}

// Single-integrand form; the integrand returns {value, boundary magnitude}.
template <class Fn>
double adapted_integral(int d, const std::optional<PhaseMat>& env, Fn&& integrand, const GridOptions& opt,
                        GridReport* report = nullptr) {
    return adapted_integrals(
        d, env, 1,
        [&](const PhaseVec& z, double* out) {
            const auto [value, mag] = integrand(z);
            out[0] += value;
            return mag;
        },
        opt, report)[0];
}

inline double boundary_max(const CharFn& phi) {
    const PhaseGrid& g = phi.grid();
    const auto& v = phi.values();
    double m = 0.0;
    g.for_each([&](size_t f, const std::vector<int>& idx, const PhaseVec&) {
        if (g.on_boundary(idx)) m = std::max(m, std::abs(v[f]));
    });
    return m;
}

inline double hs_norm(const CharFn& phi, const GridOptions& opt = {}, GridReport* report = nullptr) {
    const double norm = std::pow(2.0 * kPi, -phi.dim());
    if (phi.is_sampled()) {
        if (boundary_max(phi) >= opt.boundary_tol) throw TruncationError("hs_norm: phi does not decay at boundary");
        double s = 0.0;
        for (const cplx& v : phi.values()) s += std::norm(v);
        return std::sqrt(norm * s * phi.grid().cell_volume());
    }
    const double s = adapted_integral(
        phi.dim(), phi.envelope(),
        [&](const PhaseVec& z) {
            const double m = std::abs(phi(z));
            return std::pair{m * m, m};
        },
        opt, report);
    return std::sqrt(norm * s);
}

// Position-basis kernel rho(x1, x2) on x_i = -L + i dx, d = 1.
struct KernelFn {
    double half_width = 0.0;
    int count = 0;
    std::vector<cplx> values;  // values[i * count + j] = rho(x_i, x_j)

    static KernelFn sample(double half_width, int count, const std::function<cplx(double, double)>& rho) {
        if (count < 8 || !is_power_of_two(count) || !(half_width > 0.0)) {
            throw DomainError("KernelFn: count must be a power of two >= 8 and half-width positive");
        }
        KernelFn k{half_width, count, std::vector<cplx>(static_cast<size_t>(count) * count)};
        for (int i = 0; i < count; ++i) {
            for (int j = 0; j < count; ++j) k.values[static_cast<size_t>(i) * count + j] = rho(k.x(i), k.x(j));
        }
        return k;
    }

    double spacing() const { return 2.0 * half_width / count; }
    double x(int i) const { return -half_width + i * spacing(); }
    cplx operator()(int i, int j) const { return values[static_cast<size_t>(i) * count + j]; }

    cplx trace() const {
        cplx s = 0.0;
        for (int i = 0; i < count; ++i) s += (*this)(i, i);
        return s * spacing();
    }

    double hs_norm() const {
        double s = 0.0;
        for (const cplx& v : values) s += std::norm(v);
        return std::sqrt(s) * spacing();
    }

    double hermitian_defect() const {
        double m = 0.0;
        for (int i = 0; i < count; ++i) {
            for (int j = 0; j < count; ++j) m = std::max(m, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
        }
        return m;
    }
};

// phi(q,p) = exp(-i q p / 2) int dx exp(i p x) rho(x - q, x), sampled on a
// d = 1 axis-aligned grid whose q spacing is a multiple of the kernel spacing.
inline CharFn kernel_to_charfn(const KernelFn& kernel, const PhaseGrid& grid) {
    if (grid.dim != 1 || !grid.axis_aligned()) throw DomainError("kernel_to_charfn: needs a d=1 axis-aligned grid");
    const double dx = kernel.spacing();
    const double hq = grid.spacing(0);
    const double ratio = hq / dx;
    const int stride = static_cast<int>(std::lround(ratio));
    if (stride < 1 || std::abs(ratio - stride) > 1e-9 * ratio) {
        throw RangeError("kernel_to_charfn: q spacing must be an integer multiple of the kernel spacing");
    }
    if (grid.half_width[0] > kernel.half_width * (1.0 + 1e-12)) {
        throw RangeError("kernel_to_charfn: q range exceeds the kernel support");
    }
    const int nq = grid.count[0];
    const int np = grid.count[1];
    const int nx = kernel.count;
    const double hp = grid.spacing(1);
    std::vector<cplx> out(grid.size());

    const bool conjugate = np <= nx && std::abs(hp * nx * dx - 2.0 * kPi) <= 1e-12 * 2.0 * kPi;
    std::unique_ptr<fft::Plan1D> plan;
    if (conjugate) plan = std::make_unique<fft::Plan1D>(nx, fft::Direction::backward);
    std::vector<cplx> f(nx);

    for (int jq = 0; jq < nq; ++jq) {
        const double q = grid.coordinate(0, jq);
        const int shift = (jq - nq / 2) * stride;  // q / dx
        for (int i = 0; i < nx; ++i) {
            const int r = i - shift;
            f[i] = (r >= 0 && r < nx) ? kernel(r, i) : cplx(0.0);
        }
        if (conjugate) {
            std::copy(f.begin(), f.end(), plan->buffer().begin());
            plan->execute();
            for (int kp = 0; kp < np; ++kp) {
                const double p = grid.coordinate(1, kp);
                const int m = ((kp - np / 2) % nx + nx) % nx;
                const cplx phase = std::polar(1.0, -0.5 * q * p - p * kernel.half_width);
                out[static_cast<size_t>(jq) * np + kp] = phase * dx * plan->buffer()[m];
            }
        } else {
            for (int kp = 0; kp < np; ++kp) {
                const double p = grid.coordinate(1, kp);
                const cplx step = std::polar(1.0, p * dx);
                cplx rot = std::polar(1.0, p * kernel.x(0));
                cplx s = 0.0;
                for (int i = 0; i < nx; ++i) {
                    s += f[i] * rot;
                    rot *= step;
                }
                out[static_cast<size_t>(jq) * np + kp] = std::polar(1.0, -0.5 * q * p) * dx * s;
            }
        }
    }
    const cplx tr = kernel.trace();
    return CharFn::sampled(grid, std::move(out), std::abs(tr - 1.0) <= 1e-6);
}

// Real-valued density on a position-velocity grid with axes (x..., v...).
struct PhaseDensity {
    PhaseGrid grid;
    std::vector<double> values;
    double imag_residue = 0.0;

    double integral() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * grid.cell_volume();
    }

    // Marginal over the velocity axes, as a function of the position axes.
    std::vector<double> position_marginal() const {
        const int d = grid.dim;
        size_t nx = 1;
        size_t nv = 1;
        double dv = 1.0;
        for (int i = 0; i < d; ++i) {
            nx *= static_cast<size_t>(grid.count[i]);
            nv *= static_cast<size_t>(grid.count[d + i]);
            dv *= grid.spacing(d + i);
        }
        std::vector<double> m(nx, 0.0);
        for (size_t i = 0; i < nx; ++i) {
            for (size_t j = 0; j < nv; ++j) m[i] += values[i * nv + j];
            m[i] *= dv;
        }
        return m;
    }
};
using WignerFn = PhaseDensity;

// W(x,v) = (2pi)^{-2d} int dq dp exp(-i p.x - i q.v) phi(q,p) on conjugate_grid(phi.grid()).
inline WignerFn charfn_to_wigner(const CharFn& phi, double boundary_tol = 1e-10) {
    const PhaseGrid& g = phi.grid();
    if (g.dim > 2) throw UnsupportedError("charfn_to_wigner: d <= 2 only");
    if (!g.axis_aligned()) throw UnsupportedError("charfn_to_wigner: grid must be axis-aligned");
    const double bmax = boundary_max(phi);
    if (bmax >= boundary_tol) {
        throw TruncationError("charfn_to_wigner: |phi| = " + std::to_string(bmax) + " at the grid boundary");
    }
    const int d = g.dim;
    std::vector<cplx> data = phi.values();
    g.for_each([&](size_t f, const std::vector<int>& idx, const PhaseVec&) {
        int s = 0;
        for (int j : idx) s += j;
        if (s & 1) data[f] = -data[f];
    });
    fft::transform(data, g.count, fft::Direction::forward);

    WignerFn w;
    w.grid = conjugate_grid(g);
    w.values.assign(g.size(), 0.0);
    double scale = std::pow(2.0 * kPi, -2 * d);
    for (int a = 0; a < 2 * d; ++a) scale *= g.spacing(a);
    double imag = 0.0;
    g.for_each([&](size_t f, const std::vector<int>& idx, const PhaseVec&) {
        int s = 0;
        for (int j : idx) s += j;
        const cplx v = (s & 1 ? -scale : scale) * data[f];
        std::vector<int> out(2 * d);
        for (int i = 0; i < d; ++i) {
            out[i] = idx[d + i];
            out[d + i] = idx[i];
        }
        w.values[w.grid.flat(out)] = v.real();
        imag = std::max(imag, std::abs(v.imag()));
    });
    w.imag_residue = imag;
    return w;
}

enum class Axis { q, p };

// Spectral derivative along one axis of a sampled array.
inline std::vector<cplx> spectral_derivative(const PhaseGrid& g, const std::vector<cplx>& v, int axis) {
    const int n = g.count[axis];
    const size_t stride = g.stride(axis);
    const size_t outer = g.size() / (stride * n);
    fft::Plan1D fwd(n, fft::Direction::forward);
    fft::Plan1D bwd(n, fft::Direction::backward);
    const double k0 = 2.0 * kPi / (n * g.spacing(axis));
    std::vector<cplx> out(v.size());
    for (size_t o = 0; o < outer; ++o) {
        for (size_t s = 0; s < stride; ++s) {
            const size_t base = o * stride * n + s;
            for (int j = 0; j < n; ++j) fwd.buffer()[j] = v[base + j * stride];
            fwd.execute();
            for (int m = 0; m < n; ++m) {
                const int freq = m < n / 2 ? m : m - n;
                const cplx factor = (m == n / 2) ? cplx(0.0) : cplx(0.0, k0 * freq / n);
                bwd.buffer()[m] = fwd.buffer()[m] * factor;
            }
            bwd.execute();
            for (int j = 0; j < n; ++j) out[base + j * stride] = bwd.buffer()[j];
        }
    }
    return out;
}

// Componentwise gradient along q or p. Analytic inputs need a registered gradient.
inline std::vector<CharFn> phase_gradient(const CharFn& phi, Axis axis) {
    const int d = phi.dim();
    std::vector<CharFn> out;
    for (int i = 0; i < d; ++i) {
        const int slot = (axis == Axis::q ? 0 : d) + i;
        if (phi.is_sampled()) {
            out.push_back(CharFn::sampled(phi.grid(), spectral_derivative(phi.grid(), phi.values(), slot), false));
        } else {
            if (!phi.has_gradient()) throw UnsupportedError("phase_gradient: analytic input has no registered gradient");
            out.push_back(CharFn::analytic(
                d, [phi, slot](const PhaseVec& z) { return phi.gradient(z)[slot]; }, {}, phi.envelope(), false));
        }
    }
    return out;
}

// Five-point central difference of a sampled array at the origin along one axis.
inline cplx stencil_derivative_at_origin(const CharFn& phi, int axis) {
    const PhaseGrid& g = phi.grid();
    const auto& v = phi.values();
    std::vector<int> idx(g.axes_count());
    for (int a = 0; a < g.axes_count(); ++a) idx[a] = g.count[a] / 2;
    auto at = [&](int offset) {
        std::vector<int> j = idx;
        j[axis] += offset;
        return v[g.flat(j)];
    };
    const double h = g.spacing(axis);
    return (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h);
}

// CSV with self-describing header rows for sampled characteristic functions.
inline void write_charfn_csv(std::ostream& os, const CharFn& phi) {
    const PhaseGrid& g = phi.grid();
    if (!g.axis_aligned()) throw UnsupportedError("write_charfn_csv: grid must be axis-aligned");
    const int d = g.dim;
    os << "# kind=charfn\n# dim=" << d << "\n# convention=" << kWeylConvention << "\n# " << kMeasureConvention
       << "\n# block_pairing=" << kBlockConvention << "\n# units=hbar=1, H_free=|K|^2\n";
    os << "# half_width=";
    for (int a = 0; a < 2 * d; ++a) os << (a ? " " : "") << std::setprecision(17) << g.half_width[a];
    os << "\n# count=";
    for (int a = 0; a < 2 * d; ++a) os << (a ? " " : "") << g.count[a];
    os << "\n";
    for (int i = 0; i < d; ++i) os << "q" << i + 1 << ",";
    for (int i = 0; i < d; ++i) os << "p" << i + 1 << ",";
    os << "re,im\n";
    const auto& v = phi.values();
    os << std::setprecision(17);
    g.for_each([&](size_t f, const std::vector<int>&, const PhaseVec& z) {
        for (int a = 0; a < 2 * d; ++a) os << z[a] << ",";
        os << v[f].real() << "," << v[f].imag() << "\n";
    });
}

inline CharFn read_charfn_csv(std::istream& is) {
    std::string line;
    int d = 0;
    std::vector<double> L;
    std::vector<int> N;
    while (is.peek() == '#' && std::getline(is, line)) {
        auto value = [&](const std::string& key) -> std::optional<std::string> {
            const std::string tag = "# " + key + "=";
            if (line.rfind(tag, 0) == 0) return line.substr(tag.size());
            return std::nullopt;
        };
        if (auto s = value("dim")) d = std::stoi(*s);
        if (auto s = value("half_width")) {
            std::istringstream ss(*s);
            for (double x; ss >> x;) L.push_back(x);
        }
        if (auto s = value("count")) {
            std::istringstream ss(*s);
            for (int x; ss >> x;) N.push_back(x);
        }
    }
    if (d < 1 || static_cast<int>(L.size()) != 2 * d || static_cast<int>(N.size()) != 2 * d) {
        throw ConfigError("read_charfn_csv: missing or inconsistent header");
    }
    PhaseGrid g = PhaseGrid::axes(L, N);
    std::getline(is, line);  // column names
    std::vector<cplx> v;
    v.reserve(g.size());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
        if (static_cast<int>(cells.size()) != 2 * d + 2) throw ConfigError("read_charfn_csv: bad row");
        v.emplace_back(cells[2 * d], cells[2 * d + 1]);
    }
    const bool state = v.size() == g.size() && std::abs(v[g.origin_index()] - 1.0) <= 1e-9;
    return CharFn::sampled(std::move(g), std::move(v), state);
}

inline void write_density_csv(std::ostream& os, const PhaseDensity& w, const std::string& kind) {
    const PhaseGrid& g = w.grid;
    const int d = g.dim;
    os << "# kind=" << kind << "\n# dim=" << d << "\n# convention=" << kWeylConvention
       << "\n# " << kMeasureConvention << "\n# block_pairing=" << kBlockConvention
       << "\n# axes=x(position),v(velocity=momentum, H_free=|K|^2)\n# normalization=int W dx dv = 1\n";
    os << "# half_width=";
    for (int a = 0; a < 2 * d; ++a) os << (a ? " " : "") << std::setprecision(17) << g.half_width[a];
    os << "\n# count=";
    for (int a = 0; a < 2 * d; ++a) os << (a ? " " : "") << g.count[a];
    os << "\n";
    for (int i = 0; i < d; ++i) os << "x" << i + 1 << ",";
    for (int i = 0; i < d; ++i) os << "v" << i + 1 << ",";
    os << "value\n" << std::setprecision(17);
    g.for_each([&](size_t f, const std::vector<int>&, const PhaseVec& z) {
        for (int a = 0; a < 2 * d; ++a) os << z[a] << ",";
        os << w.values[f] << "\n";
    });
}

}  // namespace decoh
