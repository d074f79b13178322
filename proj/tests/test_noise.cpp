#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace decoh;
using namespace decoh::testing;

namespace {

DensitySamples standard_normal_1d(int count = 101, double half_width = 8.0) {
    return DensitySamples::from_function({-half_width}, {half_width}, {count}, [](const PhaseVec& k) {
        return std::exp(-0.5 * k[0] * k[0]) / std::sqrt(2.0 * kPi);
    });
}

PhaseMat random_psd(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g;
    PhaseMat l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) l(i, j) = g(rng);
    }
    return l * l.transpose();
}

// -1/2 int_0^t <(q + (t-s) p, p) | A (q + (t-s) p, p)> ds by adaptive quadrature.
double quadratic_by_quadrature(const PhaseMat& a, const PhaseVec& z, double t) {
    const int d = static_cast<int>(z.size()) / 2;
    return gk(
        [&](double s) {
            PhaseVec w = z;
            w.head(d) += (t - s) * z.tail(d);
            return -0.5 * w.dot(a * w);
        },
        0.0, t, 1e-15);
}

double jump_by_quadrature(const JumpMeasure& mu, const PhaseVec& z, double t) {
    return gk([&](double s) { return mu.psi_at(jump_argument(shear(z, t - s))); }, 0.0, t, 1e-14);
}

}  // namespace

TEST(PsiMu, CosineAtPi) {
    const JumpMeasure mu = momentum_kicks(1.0, 0.5);
    EXPECT_NEAR(psi_mu(mu, vec({kPi}), vec({0.7})), -2.0, 1e-15);
    EXPECT_NEAR(psi_mu(mu, vec({kPi}), vec({-3.0})), -2.0, 1e-15);
}

TEST(PsiMu, VanishesAtOrigin) {
    const JumpMeasure mu = JumpMeasure::atoms(2, {{vec({0.3, 1.2}), 0.7}, {vec({-2.0, 0.1}), 0.2}});
    EXPECT_EQ(psi_mu(mu, vec({0.0}), vec({0.0})), 0.0);
    EXPECT_EQ(psi_mu(JumpMeasure::empty(2), vec({1.0}), vec({2.0})), 0.0);
}

TEST(PsiMu, GridDensityOfStandardNormal) {
    const JumpMeasure mu = JumpMeasure::momentum_density(1, standard_normal_1d());
    EXPECT_TRUE(mu.has_density());
    const double oracle = gk([](double k) { return std::exp(-0.5 * k * k) / std::sqrt(2.0 * kPi) * (std::cos(k) - 1.0); },
                             -30.0, 30.0);
    EXPECT_NEAR(oracle, std::exp(-0.5) - 1.0, 1e-13);
    EXPECT_NEAR(psi_mu(mu, vec({1.0}), vec({0.0})), oracle, 1e-9);
    EXPECT_NEAR(psi_mu(mu, vec({1.0}), vec({0.0})), -0.39347, 1e-5);
}

TEST(PsiMu, EvenUnderReflection) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const JumpMeasure mu = JumpMeasure::atoms(4, {{vec({0.3, 1.2, -0.4, 0.9}), 0.7}, {vec({-2.0, 0.1, 0.5, 0.0}), 0.2}});
    for (int i = 0; i < 100; ++i) {
        const PhaseVec q = vec({u(rng), u(rng)});
        const PhaseVec p = vec({u(rng), u(rng)});
        EXPECT_EQ(psi_mu(mu, q, p), psi_mu(mu, -q, -p));
        EXPECT_LE(psi_mu(mu, q, p), 0.0);
    }
}

TEST(SecondMoments, Examples) {
    EXPECT_LT((second_moment_matrix(momentum_kicks(1.0, 0.5)) - diag({0.0, 1.0})).norm(), 1e-15);
    EXPECT_EQ(second_moment_matrix(JumpMeasure::empty(2)).norm(), 0.0);
    PhaseMat twos = PhaseMat::Constant(2, 2, 2.0);
    EXPECT_LT((second_moment_matrix(JumpMeasure::atoms(2, {{vec({1.0, 1.0}), 1.0}})) - twos).norm(), 1e-15);
}

TEST(SecondMoments, BlockStructure) {
    const JumpMeasure mom = JumpMeasure::momentum_only(1, {{vec({2.0}), 0.25}});
    const JumpMeasure pos = JumpMeasure::position_only(1, {{vec({2.0}), 0.25}});
    const PhaseMat bm = second_moment_matrix(mom);
    const PhaseMat bp = second_moment_matrix(pos);
    EXPECT_EQ(bm(0, 0), 0.0);
    EXPECT_EQ(bm(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(bm(1, 1), 2.0);
    EXPECT_DOUBLE_EQ(bp(0, 0), 2.0);
    EXPECT_EQ(bp(1, 1), 0.0);
    // In slot order the momentum kicks land in the q slot, next to A^{x,x}.
    const NoiseSpec n = NoiseSpec::make(1, PhaseMat::Zero(2, 2), mom);
    EXPECT_DOUBLE_EQ(slot_moments(n)(0, 0), 2.0);
    EXPECT_EQ(slot_moments(n)(1, 1), 0.0);
}

TEST(LevyExponent, Examples) {
    EXPECT_NEAR(levy_exponent(NoiseSpec::make(1, PhaseMat::Identity(2, 2), JumpMeasure::empty(2)), vec({1.0}), vec({1.0})),
                -1.0, 1e-15);
    EXPECT_NEAR(levy_exponent(NoiseSpec::make(1, PhaseMat::Zero(2, 2), momentum_kicks(1.0, 0.5)), vec({kPi}), vec({0.0})),
                -2.0, 1e-15);
    EXPECT_NEAR(levy_exponent(NoiseSpec::make(1, diag({2.0, 0.0}), JumpMeasure::empty(2)), vec({1.0}), vec({5.0})), -1.0,
                1e-15);
}

TEST(LevyExponent, StrictlyNegativeAwayFromOrigin) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    const NoiseSpec pd = NoiseSpec::make(1, PhaseMat::Identity(2, 2) * 0.3, JumpMeasure::empty(2));
    const NoiseSpec dens = NoiseSpec::make(1, PhaseMat::Zero(2, 2),
                                           JumpMeasure::grid_density(DensitySamples::from_function(
                                               {-3.0, -3.0}, {3.0, 3.0}, {31, 31},
                                               [](const PhaseVec& a) { return std::exp(-a.squaredNorm()); })));
    for (int i = 0; i < 100; ++i) {
        const PhaseVec z = vec({u(rng), u(rng)});
        EXPECT_LT(levy_exponent(pd, z), 0.0);
        EXPECT_LT(levy_exponent(dens, z), 0.0);
    }
    EXPECT_EQ(levy_exponent(pd, vec({0.0, 0.0})), 0.0);
}

TEST(IntegratedExponent, DiffusionExample) {
    const NoiseSpec n = NoiseSpec::make(1, PhaseMat::Identity(2, 2), JumpMeasure::empty(2));
    const double oracle = -0.5 * gk([](double s) { return (1.0 - s) * (1.0 - s) + 1.0; }, 0.0, 1.0);
    EXPECT_NEAR(oracle, -2.0 / 3.0, 1e-15);
    EXPECT_NEAR(integrated_exponent(n, vec({0.0}), vec({1.0}), 1.0), oracle, 1e-14);
}

TEST(IntegratedExponent, ZeroTimeAndDomain) {
    const NoiseSpec n = NoiseSpec::make(1, PhaseMat::Identity(2, 2), momentum_kicks(1.0, 0.5));
    EXPECT_EQ(integrated_exponent(n, vec({1.0}), vec({2.0}), 0.0), 0.0);
    EXPECT_THROW(integrated_exponent(n, vec({1.0}), vec({2.0}), -1.0), DomainError);
}

TEST(IntegratedExponent, AtomsAtZeroP) {
    const NoiseSpec n = NoiseSpec::make(1, PhaseMat::Zero(2, 2), momentum_kicks(1.0, 0.5));
    for (double t : {0.5, 1.0, 3.0}) {
        for (double q0 : {0.3, 1.0, 2.5}) {
            EXPECT_NEAR(integrated_exponent(n, vec({q0}), vec({0.0}), t), t * (std::cos(q0) - 1.0), 1e-14);
        }
    }
}

TEST(IntegratedExponent, ClosedFormQuadraticMatchesQuadrature) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> ut(0.05, 6.0);
    for (int i = 0; i < 50; ++i) {
        const int d = 1 + i % 2;
        const PhaseMat a = random_psd(rng, 2 * d);
        PhaseVec z(2 * d);
        for (int j = 0; j < 2 * d; ++j) z[j] = u(rng);
        const double t = ut(rng);
        const NoiseSpec n = NoiseSpec::make(d, a, JumpMeasure::empty(2 * d));
        const double oracle = quadratic_by_quadrature(a, z, t);
        EXPECT_NEAR(integrated_exponent(n, z, t), oracle, 1e-10 * std::max(1.0, std::abs(oracle)));
        const PhaseMat q = integrated_quadratic_matrix(a, t);
        EXPECT_NEAR(-0.5 * z.dot(q * z), oracle, 1e-10 * std::max(1.0, std::abs(oracle)));
    }
}

TEST(IntegratedExponent, JumpRoutesAgree) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const JumpMeasure mu = JumpMeasure::atoms(2, {{vec({0.3, 1.2}), 0.7}, {vec({-0.8, 0.1}), 0.2}, {vec({0.0, 2.0}), 0.1}});
    QuadratureOptions gl;
    gl.method = JumpIntegration::gauss_legendre;
    for (int i = 0; i < 30; ++i) {
        const PhaseVec z = vec({u(rng), u(rng)});
        const double t = 0.1 + std::abs(u(rng)) * 2.0;
        const double oracle = jump_by_quadrature(mu, z, t);
        EXPECT_NEAR(integrated_jump_exponent(mu, z, t), oracle, 1e-11);
        EXPECT_NEAR(integrated_jump_exponent(mu, z, t, gl), oracle, 1e-9 * std::max(1.0, std::abs(oracle)));
    }
}

TEST(IntegratedExponent, SegmentTrigIsContinuousAcrossBranches) {
    for (double theta : {-2.0, 0.0, 0.4, 3.0}) {
        const auto a = detail::segment_trig(theta, 0.5 - 1e-12);
        const auto b = detail::segment_trig(theta, 0.5 + 1e-12);
        EXPECT_NEAR(a.cos_minus_one, b.cos_minus_one, 1e-11);
        EXPECT_NEAR(a.sin_mean, b.sin_mean, 1e-11);
        EXPECT_NEAR(a.v_sin_mean, b.v_sin_mean, 1e-11);
        const auto c = detail::segment_trig(theta, -0.5 + 1e-12);
        const auto e = detail::segment_trig(theta, -0.5 - 1e-12);
        EXPECT_NEAR(c.v_sin_mean, e.v_sin_mean, 1e-11);
    }
}

TEST(NoiseMultiplier, GradientMatchesFiniteDifferences) {
    PhaseMat a(2, 2);
    a << 1.0, 0.3, 0.3, 0.5;
    const NoiseSpec n = NoiseSpec::make(1, a, JumpMeasure::atoms(2, {{vec({0.4, 1.1}), 0.6}, {vec({0.0, 0.3}), 0.5}}));
    const NoiseMultiplier m(n, 2.5);
    const double h = 1e-5;
    for (const PhaseVec& z : {vec({0.3, -0.4}), vec({1.2, 0.8}), vec({-0.1, 0.05})}) {
        const PhaseVec g = m.gradient(z);
        EXPECT_NEAR(m.exponent(z), integrated_exponent(n, z, 2.5), 1e-12);
        for (int i = 0; i < 2; ++i) {
            PhaseVec e = PhaseVec::Zero(2);
            e[i] = h;
            EXPECT_NEAR(g[i], (m.exponent(z + e) - m.exponent(z - e)) / (2.0 * h), 1e-7);
        }
    }
}

TEST(NoiseSpecValidation, RejectsBadMatrices) {
    PhaseMat asym(2, 2);
    asym << 1.0, 0.2, 0.1, 1.0;
    EXPECT_THROW(NoiseSpec::make(1, asym, JumpMeasure::empty(2)), ValidationError);
    EXPECT_THROW(NoiseSpec::make(1, diag({1.0, -0.1}), JumpMeasure::empty(2)), ValidationError);
    EXPECT_THROW(NoiseSpec::make(1, diag({1.0, 0.0}), JumpMeasure::empty(4)), ValidationError);
    EXPECT_THROW(JumpMeasure::atoms(2, {{vec({1.0, 0.0}), -1.0}}), ValidationError);
    const DensitySamples skew = DensitySamples::from_function({-1.0}, {1.0}, {11}, [](const PhaseVec& k) {
        return std::exp(-(k[0] - 0.3) * (k[0] - 0.3));
    });
    EXPECT_THROW(JumpMeasure::momentum_density(1, skew), ValidationError);
}

TEST(DensitySamplesTest, FromRowsMatchesFunction) {
    const DensitySamples s = standard_normal_1d(21, 4.0);
    std::vector<std::vector<double>> rows;
    for (size_t i = s.values.size(); i-- > 0;) rows.push_back({s.point(i)[0], s.values[i]});
    const DensitySamples r = DensitySamples::from_rows(rows);
    ASSERT_EQ(r.count, s.count);
    for (size_t i = 0; i < s.values.size(); ++i) EXPECT_EQ(r.values[i], s.values[i]);
    rows.erase(rows.begin() + 7);
    EXPECT_THROW(DensitySamples::from_rows(rows), ValidationError);
}

TEST(QuadraticBounds, AtomicTaylorOracle) {
    // psi(l) = cos l - 1, B = 1 on R^1; the upper bound holds while
    // l^2/2 + cos l - 1 <= eps l^2, which includes l^2 <= 24 eps.
    const JumpMeasure mu = JumpMeasure::atoms(1, {{vec({1.0}), 0.5}});
    RadiusScan scan;
    const double step = scan.max_radius / scan.radii;
    for (double eps : {0.05, 0.1, 0.5}) {
        const double delta = check_quadratic_bounds(mu, eps, scan);
        double oracle = 0.0;
        for (int i = 1; i <= scan.radii; ++i) {
            const double l = i * step;
            if (0.5 * l * l + std::cos(l) - 1.0 > eps * l * l) break;
            oracle = l;
        }
        EXPECT_NEAR(delta, oracle, 1e-12) << "eps " << eps;
        EXPECT_GE(delta, std::sqrt(24.0 * eps) - step);
    }
    EXPECT_GE(check_quadratic_bounds(mu, 0.1, scan), 0.5);
}

TEST(QuadraticBounds, LargeEpsilonCoversScan) {
    const JumpMeasure mu = JumpMeasure::atoms(1, {{vec({1.0}), 0.5}});
    RadiusScan scan;
    EXPECT_DOUBLE_EQ(check_quadratic_bounds(mu, 1.9, scan), scan.max_radius);
}

TEST(QuadraticBounds, EmptyMeasureCoversScan) {
    RadiusScan scan;
    EXPECT_DOUBLE_EQ(check_quadratic_bounds(JumpMeasure::empty(2), 0.05, scan), scan.max_radius);
}

TEST(QuadraticBounds, DensityUsesTightBound) {
    const JumpMeasure mu = JumpMeasure::momentum_density(1, standard_normal_1d());
    for (double eps : {0.05, 0.1, 0.5}) {
        const double delta = check_quadratic_bounds(mu, eps);
        EXPECT_GT(delta, 0.0);
        // For nu = N(0,1): psi(l) = exp(-l^2/2) - 1 >= -l^2/2 always; the upper
        // bound fails once exp(-l^2/2) - 1 > -(1-eps) l^2 / 2.
        const double l = delta;
        EXPECT_LE(std::exp(-0.5 * l * l) - 1.0, -0.5 * (1.0 - eps) * l * l + 1e-9);
    }
}

TEST(QuadraticBounds, FailureAtFirstRadiusIsReported) {
    const JumpMeasure mu = JumpMeasure::atoms(1, {{vec({1.0}), 0.5}});
    RadiusScan coarse;
    coarse.max_radius = 50.0;
    coarse.radii = 1;
    EXPECT_THROW(check_quadratic_bounds(mu, 0.1, coarse), NumericalInconsistencyError);
}
