#pragma once

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "decoh/index_report.hpp"
#include "decoh/noise.hpp"
#include "decoh/phase_grid.hpp"

namespace decoh {

// rho(x1,x2) = (2 sqrt(C)/sqrt(pi)) exp(-A u^2 - i B (x1^2 - x2^2) - C s^2 - i D u - E s - F)
// with u = x1 - x2 and s = x1 + x2.
struct GaussianKernelParams1D {
    double A = 0.25;
    double B = 0.0;
    double C = 0.25;
    double D = 0.0;
    double E = 0.0;
    double F = 0.0;
};

enum class Basis { position, momentum };

// rho(x1,x2) = det(c)^{1/2} (2 pi)^{-d/2}
//   exp(-<u|a u>/8 - (i/2) <u|b y> - <y|c y>/2 - i <m_k|u>),
// with u = x1 - x2 and y = (x1 + x2)/2 - m_x. The momentum basis uses the same
// form in (k1, k2) with the roles of m_x and m_k exchanged and +i <m_x|u>.
// The 1-d family maps in as a = 8A, b = 4B, c = 8C.
struct GaussianKernelParamsND {
    int dim = 1;
    PhaseMat a;
    PhaseMat b;
    PhaseMat c;
    PhaseVec m_x;
    PhaseVec m_k;
    Basis basis = Basis::position;
};

// phi(z) = exp(-z^T sigma z / 2 + i mean^T z), z = (q, p); mean = (m_k, m_x).
struct GaussianMoments {
    PhaseMat sigma;
    PhaseVec mean;

    int dim() const { return static_cast<int>(sigma.rows()) / 2; }
    PhaseMat block(int r, int c) const {
        const int d = dim();
        return sigma.block(r * d, c * d, d, d);
    }
};

inline std::vector<std::string> validate(const GaussianKernelParams1D& g) {
    std::vector<std::string> v;
    const double vals[] = {g.A, g.B, g.C, g.D, g.E, g.F};
    for (double x : vals) {
        if (!std::isfinite(x)) {
            v.emplace_back("finite parameters");
            return v;
        }
    }
    if (!(g.C > 0.0)) v.emplace_back("C > 0");
    if (!(g.A >= g.C)) v.emplace_back("A >= C");
    if (g.C > 0.0 && std::abs(g.F - g.E * g.E / (4.0 * g.C)) > 1e-12 * std::max(1.0, std::abs(g.F))) {
        v.emplace_back("F = E^2/(4C)");
    }
    return v;
}

inline bool is_spd(const PhaseMat& m) {
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
    return is_positive_definite(m);
}

inline std::vector<std::string> validate(const GaussianKernelParamsND& g) {
    std::vector<std::string> v;
    const int d = g.dim;
    if (d < 1 || d > kMaxDim || g.a.rows() != d || g.a.cols() != d || g.b.rows() != d || g.b.cols() != d ||
        g.c.rows() != d || g.c.cols() != d || g.m_x.size() != d || g.m_k.size() != d) {
        v.emplace_back("matrix and vector sizes match dim");
        return v;
    }
    if (!g.a.allFinite() || !g.b.allFinite() || !g.c.allFinite() || !g.m_x.allFinite() || !g.m_k.allFinite()) {
        v.emplace_back("finite parameters");
        return v;
    }
    if (!is_spd(g.a)) v.emplace_back("a symmetric positive definite");
    if (!is_spd(g.c)) v.emplace_back("c symmetric positive definite");
    if (v.empty()) {
        Eigen::SelfAdjointEigenSolver<PhaseMat> es(symmetrize(g.a - g.c), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, g.a.norm())) v.emplace_back("a - c positive semidefinite");
    }
    return v;
}

inline void require_valid(const std::vector<std::string>& violations) {
    if (violations.empty()) return;
    std::string msg = "invalid Gaussian parameters:";
    for (const auto& s : violations) msg += " [" + s + "]";
    throw ValidationError(msg);
}

inline GaussianKernelParamsND to_nd(const GaussianKernelParams1D& g) {
    require_valid(validate(g));
    GaussianKernelParamsND n;
    n.dim = 1;
    n.a = PhaseMat::Constant(1, 1, 8.0 * g.A);
    n.b = PhaseMat::Constant(1, 1, 4.0 * g.B);
    n.c = PhaseMat::Constant(1, 1, 8.0 * g.C);
    n.m_x = PhaseVec::Constant(1, -g.E / (4.0 * g.C));
    n.m_k = PhaseVec::Constant(1, g.D - g.B * g.E / (2.0 * g.C));
    return n;
}

// Characteristic covariance of a kernel parameter set. Position basis:
//   Sigma = [[a/4 + b c^-1 b^T / 4, b c^-1 / 2], [c^-1 b^T / 2, c^-1]].
// Momentum basis:
//   Sigma = [[c^-1, -c^-1 b^T / 2], [-b c^-1 / 2, a/4 + b c^-1 b^T / 4]].
inline GaussianMoments moments(const GaussianKernelParamsND& g) {
    require_valid(validate(g));
    const int d = g.dim;
    const PhaseMat ci = spd_inverse(g.c, "c");
    const PhaseMat top = 0.25 * g.a + 0.25 * g.b * ci * g.b.transpose();
    GaussianMoments m;
    m.sigma.resize(2 * d, 2 * d);
    if (g.basis == Basis::position) {
        m.sigma.block(0, 0, d, d) = top;
        m.sigma.block(0, d, d, d) = 0.5 * g.b * ci;
        m.sigma.block(d, 0, d, d) = 0.5 * ci * g.b.transpose();
        m.sigma.block(d, d, d, d) = ci;
    } else {
        m.sigma.block(0, 0, d, d) = ci;
        m.sigma.block(0, d, d, d) = -0.5 * ci * g.b.transpose();
        m.sigma.block(d, 0, d, d) = -0.5 * g.b * ci;
        m.sigma.block(d, d, d, d) = top;
    }
    m.sigma = symmetrize(m.sigma);
    m.mean = phase_point(g.m_k, g.m_x);
    return m;
}

inline GaussianMoments moments(const GaussianKernelParams1D& g) { return moments(to_nd(g)); }

// Inverse of moments() for the position basis.
inline GaussianKernelParamsND position_params(const GaussianMoments& m) {
    const int d = m.dim();
    const PhaseMat spp_inv = spd_inverse(m.block(1, 1), "Sigma_pp");
    GaussianKernelParamsND g;
    g.dim = d;
    g.c = symmetrize(spp_inv);
    g.b = 2.0 * m.block(0, 1) * spp_inv;
    g.a = symmetrize(4.0 * (m.block(0, 0) - m.block(0, 1) * spp_inv * m.block(1, 0)));
    g.m_k = m.mean.head(d);
    g.m_x = m.mean.tail(d);
    return g;
}

// Inverse of moments() for the momentum basis.
inline GaussianKernelParamsND momentum_params(const GaussianMoments& m) {
    const int d = m.dim();
    const PhaseMat sqq_inv = spd_inverse(m.block(0, 0), "Sigma_qq");
    GaussianKernelParamsND g;
    g.dim = d;
    g.basis = Basis::momentum;
    g.c = symmetrize(sqq_inv);
    g.b = -2.0 * m.block(1, 0) * sqq_inv;
    g.a = symmetrize(4.0 * (m.block(1, 1) - m.block(1, 0) * sqq_inv * m.block(0, 1)));
    g.m_k = m.mean.head(d);
    g.m_x = m.mean.tail(d);
    return g;
}

inline GaussianMoments ground_state(int d) {
    return {0.5 * PhaseMat::Identity(2 * d, 2 * d), PhaseVec::Zero(2 * d)};
}

// Weyl displacement by (x0, k0): shifts the means only.
inline GaussianMoments displaced(GaussianMoments m, const PhaseVec& x0, const PhaseVec& k0) {
    const int d = m.dim();
    m.mean.head(d) += k0;
    m.mean.tail(d) += x0;
    return m;
}

inline CharFn gaussian_charfn(const GaussianMoments& m) {
    const PhaseMat sigma = m.sigma;
    const PhaseVec mean = m.mean;
    if (!is_spd(sigma)) throw ValidationError("gaussian_charfn: covariance must be positive definite");
    auto eval = [sigma, mean](const PhaseVec& z) {
        return std::exp(cplx(-0.5 * z.dot(sigma * z), mean.dot(z)));
    };
    auto grad = [sigma, mean](const PhaseVec& z) {
        const cplx f = std::exp(cplx(-0.5 * z.dot(sigma * z), mean.dot(z)));
        const PhaseVec sz = sigma * z;
        PhaseCVec g(z.size());
        for (int i = 0; i < z.size(); ++i) g[i] = cplx(-sz[i], mean[i]) * f;
        return g;
    };
    return CharFn::analytic(m.dim(), eval, grad, sigma, true);
}

inline CharFn gaussian_charfn(const GaussianKernelParamsND& g) { return gaussian_charfn(moments(g)); }
inline CharFn gaussian_charfn(const GaussianKernelParams1D& g) { return gaussian_charfn(moments(g)); }

inline cplx kernel_value(const GaussianKernelParamsND& g, const PhaseVec& x1, const PhaseVec& x2) {
    const int d = g.dim;
    const PhaseVec u = x1 - x2;
    const bool pos = g.basis == Basis::position;
    const PhaseVec y = 0.5 * (x1 + x2) - (pos ? g.m_x : g.m_k);
    const double phase_mean = pos ? -g.m_k.dot(u) : g.m_x.dot(u);
    const double norm = std::sqrt(g.c.determinant()) * std::pow(2.0 * kPi, -0.5 * d);
    const double re = -0.125 * u.dot(g.a * u) - 0.5 * y.dot(g.c * y);
    const double im = -0.5 * u.dot(g.b * y) + phase_mean;
    return norm * std::exp(cplx(re, im));
}

inline cplx kernel_value(const GaussianKernelParams1D& g, double x1, double x2) {
    const double u = x1 - x2;
    const double s = x1 + x2;
    const double re = -g.A * u * u - g.C * s * s - g.E * s - g.F;
    const double im = -g.B * (x1 * x1 - x2 * x2) - g.D * u;
    return 2.0 * std::sqrt(g.C / kPi) * std::exp(cplx(re, im));
}

// Closed-form index from the characteristic covariance:
//   C_X^2 = Tr[(Sigma^-1)_qq]/2, D_X^2 = 2 Tr Sigma_pp, and q <-> p for K.
inline IndexReport closed_form_index(const GaussianMoments& m) {
    const int d = m.dim();
    const PhaseMat inv = spd_inverse(m.sigma, "Sigma");
    IndexReport r;
    r.C_X = std::sqrt(0.5 * inv.block(0, 0, d, d).trace());
    r.C_K = std::sqrt(0.5 * inv.block(d, d, d, d).trace());
    r.D_X = std::sqrt(2.0 * m.block(1, 1).trace());
    r.D_K = std::sqrt(2.0 * m.block(0, 0).trace());
    r.S_X = r.C_X / r.D_X;
    r.S_K = r.C_K / r.D_K;
    r.mean_x = m.mean.tail(d);
    r.mean_k = m.mean.head(d);
    r.hs_norm = std::pow(2.0, -0.5 * d) * std::pow(m.sigma.determinant(), -0.25);
    return r;
}

inline IndexReport closed_form_index(const GaussianKernelParams1D& g) { return closed_form_index(moments(g)); }
inline IndexReport closed_form_index(const GaussianKernelParamsND& g) { return closed_form_index(moments(g)); }

// q-slot block of A + B: A^{x,x} plus the momentum-jump second moments.
inline PhaseMat relaxation_block(const NoiseSpec& n) {
    const PhaseMat g = effective_matrix(n).block(0, 0, n.dim, n.dim);
    if (!is_spd(g)) throw SingularMatrixError("A^{x,x} + B^{x,x} is not positive definite");
    return g;
}

// Relaxation state: a = t G, b = (3/t) I, c = (3/t^3) G^-1.
inline GaussianKernelParamsND limit_state_position(const NoiseSpec& n, double t) {
    if (!(t > 0.0)) throw DomainError("limit_state_position: t must be > 0");
    const PhaseMat g = relaxation_block(n);
    const int d = n.dim;
    GaussianKernelParamsND p;
    p.dim = d;
    p.a = t * g;
    p.b = (3.0 / t) * PhaseMat::Identity(d, d);
    p.c = (3.0 / (t * t * t)) * spd_inverse(g, "A^{x,x} + B^{x,x}");
    p.m_x = PhaseVec::Zero(d);
    p.m_k = PhaseVec::Zero(d);
    return p;
}

// The same operator in the momentum basis: a' = (t^3/3) G, b' = -t I, c' = G^-1 / t.
inline GaussianKernelParamsND limit_state_momentum(const NoiseSpec& n, double t) {
    if (!(t > 0.0)) throw DomainError("limit_state_momentum: t must be > 0");
    const PhaseMat g = relaxation_block(n);
    const int d = n.dim;
    GaussianKernelParamsND p;
    p.dim = d;
    p.basis = Basis::momentum;
    p.a = (t * t * t / 3.0) * g;
    p.b = -t * PhaseMat::Identity(d, d);
    p.c = (1.0 / t) * spd_inverse(g, "A^{x,x} + B^{x,x}");
    p.m_x = PhaseVec::Zero(d);
    p.m_k = PhaseVec::Zero(d);
    return p;
}

namespace detail {

inline std::string format_matrix(const PhaseMat& m) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (int i = 0; i < m.rows(); ++i) {
        if (i) os << "; ";
        for (int j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
    }
    return os.str();
}

inline std::string format_vector(const PhaseVec& v) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (int i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

inline std::vector<double> parse_numbers(const std::string& s) {
    std::istringstream is(s);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + tok + "'");
        }
        if (used != tok.size()) throw ConfigError("not a number: '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

inline PhaseMat parse_matrix(const std::string& s, int d) {
    PhaseMat m(d, d);
    std::istringstream is(s);
    std::string row;
    int i = 0;
    while (std::getline(is, row, ';')) {
        const auto v = parse_numbers(row);
        if (static_cast<int>(v.size()) != d || i >= d) {
            throw ConfigError("matrix row " + std::to_string(i) + " must have " + std::to_string(d) + " entries");
        }
        for (int j = 0; j < d; ++j) m(i, j) = v[j];
        ++i;
    }
    if (i != d) throw ConfigError("matrix needs " + std::to_string(d) + " rows");
    return m;
}

inline PhaseVec parse_vector(const std::string& s, int d) {
    const auto v = parse_numbers(s);
    if (static_cast<int>(v.size()) != d) throw ConfigError("vector must have " + std::to_string(d) + " entries");
    PhaseVec out(d);
    for (int i = 0; i < d; ++i) out[i] = v[i];
    return out;
}

}  // namespace detail

inline std::string serialize(const GaussianKernelParams1D& g) {
    std::ostringstream os;
    os << std::setprecision(17) << "convention=" << kWeylConvention << "\nfamily=gaussian1d\n"
       << "A=" << g.A << "\nB=" << g.B << "\nC=" << g.C << "\nD=" << g.D << "\nE=" << g.E << "\nF=" << g.F << "\n";
    return os.str();
}

inline std::string serialize(const GaussianKernelParamsND& g) {
    std::ostringstream os;
    os << "convention=" << kWeylConvention << "\nfamily=gaussian_nd\nbasis="
       << (g.basis == Basis::position ? "position" : "momentum") << "\ndim=" << g.dim
       << "\na=" << detail::format_matrix(g.a) << "\nb=" << detail::format_matrix(g.b)
       << "\nc=" << detail::format_matrix(g.c) << "\nm_x=" << detail::format_vector(g.m_x)
       << "\nm_k=" << detail::format_vector(g.m_k) << "\n";
    return os.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline GaussianKernelParams1D deserialize_1d(const std::string& text) {
    auto kv = parse_key_values(text);
    if (kv["family"] != "gaussian1d") throw ConfigError("expected family=gaussian1d");
    if (kv.count("convention") && kv["convention"] != kWeylConvention) throw ConfigError("unknown convention");
    GaussianKernelParams1D g;
    auto get = [&](const char* k) {
        if (!kv.count(k)) throw ConfigError(std::string("missing key ") + k);
        return std::stod(kv[k]);
    };
    g.A = get("A");
    g.B = get("B");
    g.C = get("C");
    g.D = get("D");
    g.E = get("E");
    g.F = get("F");
    return g;
}

inline GaussianKernelParamsND deserialize_nd(const std::string& text) {
    auto kv = parse_key_values(text);
    if (kv["family"] != "gaussian_nd") throw ConfigError("expected family=gaussian_nd");
    if (kv.count("convention") && kv["convention"] != kWeylConvention) throw ConfigError("unknown convention");
    GaussianKernelParamsND g;
    g.dim = std::stoi(kv.at("dim"));
    g.basis = kv["basis"] == "momentum" ? Basis::momentum : Basis::position;
    g.a = detail::parse_matrix(kv.at("a"), g.dim);
    g.b = detail::parse_matrix(kv.at("b"), g.dim);
    g.c = detail::parse_matrix(kv.at("c"), g.dim);
    g.m_x = detail::parse_vector(kv.at("m_x"), g.dim);
    g.m_k = detail::parse_vector(kv.at("m_k"), g.dim);
    return g;
}

}  // namespace decoh
