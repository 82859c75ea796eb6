#include <gtest/gtest.h>

#include <cstdlib>

#include "qkzb/hypergeometric.hpp"

using namespace qkzb;

namespace {

const ModularParams mp({0.1, 0.7}, {-0.13, 0.53}, {0.031, -0.04});
const cplx lam(0.37, 0.21), mu(-0.22, 0.13);
const AdmissibilitySet B0{{0}};

double rel(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) { return (a - b).norm() / b.norm(); }

} // namespace

TEST(Reflection, WeightsAndIndices)
{
    SystemParams sp{{1.0, 3.0}, {0.0, 0.3}, 2};
    const auto r = reflected_system(B0, sp);
    EXPECT_EQ(r.Lambda[0], -3.0);
    EXPECT_EQ(r.Lambda[1], 3.0);
    EXPECT_EQ(r.l, 0);
    EXPECT_EQ(reduced_index(B0, {2, 0}, sp), (WeightIndex{0, 0}));
    EXPECT_EQ(weight_conservation_gap(B0, sp), 0.0);
    SystemParams generic{{cplx(1.3, 0.1), 1.0}, {0.0, 0.3}, 2};
    EXPECT_THROW(reflected_system(B0, generic), Error);
    SystemParams deep{{2.0, 0.0}, {0.0, 0.3}, 1};
    EXPECT_THROW(reflected_system(B0, deep), Error);
}

TEST(Constants, FlagsAndSigns)
{
    SystemParams sp{{1.0, 1.0}, {0.0, cplx(0.31, 0.02)}, 2};
    const auto c = residue_constants(B0, sp, mp);
    ASSERT_EQ(c.factors.size(), 1u);
    const auto& f = c.factors[0];
    EXPECT_EQ(f.k, 1);
    EXPECT_FALSE(f.x_literal_finite);
    EXPECT_TRUE(std::isfinite(std::abs(f.x_tau)));
    // -(2!)^5 (2 pi i)^2 / 2
    EXPECT_LT(std::abs(f.kappa - 64.0 * pi * pi), 1e-10);
    SystemParams s0{{0.0, 2.0}, {0.0, cplx(0.31, 0.02)}, 1};
    const auto c0 = residue_constants(B0, s0, mp);
    EXPECT_TRUE(c0.factors[0].x_literal_finite);
    EXPECT_LT(std::abs(c0.factors[0].kappa - pi * I), 1e-12);
    EXPECT_THROW(residue_constants({}, sp, mp), Error);
    try {
        residue_constants(B0, SystemParams{{cplx(1.3, 0.1), 0.7}, {0.0, 0.3}, 1}, mp);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotIntegral);
    }
}

TEST(Residue, EmptyChain)
{
    SystemParams sp{{0.0, 2.0}, {0.0, cplx(0.31, 0.02)}, 1};
    IntegrationPlan plan;
    plan.M = 32;
    plan.K = 24;
    const double rho = default_residue_radius(B0, sp, mp);
    const auto num = numeric_residue_u_B(B0, lam, mu, sp, mp, {}, plan, rho, 16);
    const auto half = numeric_residue_u_B(B0, lam, mu, sp, mp, {}, plan, rho / 2, 16);
    const auto pred = predicted_residue_u_B(B0, lam, mu, sp, mp, {}, plan);
    EXPECT_LT(rel(num.tensor.u, pred.u), 1e-10);
    EXPECT_LT(rel(half.tensor.u, num.tensor.u), 1e-10);
}

TEST(Residue, SingleStep)
{
    SystemParams sp{{1.0, 1.0}, {0.0, cplx(0.31, 0.02)}, 2};
    IntegrationPlan plan;
    plan.M = 32;
    plan.K = 24;
    const auto num = numeric_residue_u_B(B0, lam, mu, sp, mp, {}, plan, default_residue_radius(B0, sp, mp), 16);
    const auto pred = predicted_residue_u_B(B0, lam, mu, sp, mp, {}, plan);
    ASSERT_EQ(num.tensor.rows, (std::vector<WeightIndex>{{2, 0}}));
    EXPECT_LT(rel(num.tensor.u, pred.u), 1e-8);
}

TEST(Residue, TwoStepChain)
{
    if (!std::getenv("QKZB_LONG_TESTS")) GTEST_SKIP() << "set QKZB_LONG_TESTS=1 to run (about 8 minutes)";
    SystemParams sp{{2.0}, {0.0}, 3};
    IntegrationPlan plan;
    plan.M = 16;
    plan.K = 16;
    plan.tol = 1e-3;
    const auto num = numeric_residue_u_B(B0, lam, mu, sp, mp, {}, plan, default_residue_radius(B0, sp, mp), 8, 1.0);
    const auto pred = predicted_residue_u_B(B0, lam, mu, sp, mp, {}, plan);
    EXPECT_LT(rel(num.tensor.u, pred.u), 1e-5);
}

TEST(Residue, ArgumentErrors)
{
    SystemParams sp{{0.0, 2.0}, {0.0, cplx(0.31, 0.02)}, 1};
    IntegrationPlan plan;
    EXPECT_THROW(numeric_residue_u_B({}, lam, mu, sp, mp, {}, plan, 0.01, 16), Error);
    EXPECT_THROW(numeric_residue_u_B(B0, lam, mu, sp, mp, {}, plan, 0.01, 7), Error);
    EXPECT_THROW(numeric_residue_u_B(B0, lam, mu, sp, mp, {}, plan, 0.0, 16), Error);
    try {
        numeric_residue_u_B(AdmissibilitySet{{1}}, lam, mu, sp, mp, {}, plan, 0.01, 16);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IndexError);
    }
}
