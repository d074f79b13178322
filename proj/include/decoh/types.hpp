#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace decoh {

using cplx = std::complex<double>;

// Phase-space vectors hold z = (q, p) with q, p in R^d and d <= 3.
inline constexpr int kMaxDim = 3;
inline constexpr int kMaxPhaseDim = 2 * kMaxDim;

using PhaseVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxPhaseDim, 1>;
using PhaseCVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1, 0, kMaxPhaseDim, 1>;
using PhaseMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxPhaseDim, kMaxPhaseDim>;

inline constexpr double kPi = 3.14159265358979323846;

// Weyl convention string written into every artifact.
inline constexpr const char* kWeylConvention =
    "W(q,p)=exp(i q.K + i p.X); phi(q,p)=exp(-i q.p/2) int dx exp(i p.x) rho(x-q,x)";
inline constexpr const char* kMeasureConvention = "measure=(2pi)^-d dq dp";
inline constexpr const char* kBlockConvention =
    "q-slot pairs with A^{x,x}; jump atom (x,k) enters as cos(q.k + p.x)";

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : Error {
    using Error::Error;
};
struct RangeError : Error {
    using Error::Error;
};
struct TruncationError : Error {
    using Error::Error;
};
struct UnsupportedError : Error {
    using Error::Error;
};
struct SingularMatrixError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct DegenerateStateError : Error {
    using Error::Error;
};
struct NumericalInconsistencyError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

inline PhaseVec phase_point(const PhaseVec& q, const PhaseVec& p) {
    PhaseVec z(q.size() + p.size());
    z << q, p;
    return z;
}

inline PhaseVec phase_point(double q, double p) {
    PhaseVec z(2);
    z << q, p;
    return z;
}

// Shear M_t: (q, p) -> (q + t p, p).
inline PhaseVec shear(const PhaseVec& z, double t) {
    const int d = static_cast<int>(z.size()) / 2;
    PhaseVec out = z;
    out.head(d) += t * z.tail(d);
    return out;
}

inline PhaseMat shear_matrix(int d, double t) {
    PhaseMat m = PhaseMat::Identity(2 * d, 2 * d);
    m.block(0, d, d, d) = t * PhaseMat::Identity(d, d);
    return m;
}

inline PhaseMat symmetrize(const PhaseMat& m) { return 0.5 * (m + m.transpose()); }

inline bool is_positive_definite(const PhaseMat& m) {
    Eigen::LLT<PhaseMat> llt(symmetrize(m));
    return llt.info() == Eigen::Success;
}

// Inverse of a symmetric positive definite matrix; throws if not PD.
inline PhaseMat spd_inverse(const PhaseMat& m, const char* what) {
    Eigen::LLT<PhaseMat> llt(m);
    if (llt.info() != Eigen::Success) {
        throw SingularMatrixError(std::string(what) + " is not positive definite");
    }
    return llt.solve(PhaseMat::Identity(m.rows(), m.cols()));
}

}  // namespace decoh
