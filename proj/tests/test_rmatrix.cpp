#include <gtest/gtest.h>

#include <random>

#include "qkzb/rmatrix.hpp"

using namespace qkzb;

namespace {

const ModularParams mp({0.1, 0.7}, {-0.13, 0.53}, {0.031, -0.04});
const cplx lam(0.37, 0.21), z12(0.23, 0.05);

RMatrixOptions fresh()
{
    RMatrixOptions o;
    o.use_cache = false;
    return o;
}

} // namespace

TEST(RMatrix, LevelZeroIsOne)
{
    const auto b = rmatrix_block(lam, mp, z12, 1.3, 0.7, 0);
    ASSERT_EQ(b.m.rows(), 1);
    EXPECT_EQ(b.m(0, 0), 1.0);
}

// the defining relation W(t; z2, z1) = sum R W(t; z1, z2) checked away from the collocation points
TEST(RMatrix, ExchangeRelationAtFreshPoints)
{
    const cplx tau = mp.tau(), eta = mp.eta();
    std::mt19937_64 g(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int level : {1, 2, 3}) {
        const cplx L1(1.3, 0.1), L2(0.8, -0.2);
        const auto b = rmatrix_block(lam, mp, z12, L1, L2, level, fresh());
        const std::vector<cplx> z{z12, 0.0}, a{eta * L1, eta * L2}, zs{0.0, z12}, as{eta * L2, eta * L1};
        double worst = 0.0;
        for (int s = 0; s < 5; ++s) {
            std::vector<cplx> t(static_cast<std::size_t>(level));
            for (auto& x : t) x = cplx(u(g), 0.3 * u(g) - 0.15);
            for (std::size_t c = 0; c < b.cols.size(); ++c) {
                const auto& ij = b.cols[c];
                const cplx lhs = weight_function({ij[1], ij[0]}, t, lam, tau, eta, zs, as);
                cplx rhs = 0.0;
                for (std::size_t r = 0; r < b.rows.size(); ++r)
                    rhs += b.m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) * weight_function(b.rows[r], t, lam, tau, eta, z, a);
                worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
            }
        }
        EXPECT_LT(worst, 1e-9) << "level " << level;
    }
}

TEST(RMatrix, CollocationResidualAndResample)
{
    auto o1 = fresh(), o2 = fresh();
    o2.seed = 99;
    const auto b1 = rmatrix_block(lam, mp, z12, 1.0, 1.0, 2, o1);
    const auto b2 = rmatrix_block(lam, mp, z12, 1.0, 1.0, 2, o2);
    EXPECT_LT(b1.residual, 1e-12);
    EXPECT_LT((b1.m - b2.m).norm() / b1.m.norm(), 1e-10);
    EXPECT_EQ(zero_weight_residual(b1), 0.0);
}

TEST(RMatrix, CacheReturnsSameBlock)
{
    RMatrixOptions o;
    const auto b1 = rmatrix_block(lam, mp, z12, 1.1, 0.9, 2, o);
    const auto b2 = rmatrix_block(lam, mp, z12, 1.1, 0.9, 2, o);
    EXPECT_EQ(b1.m, b2.m);
    EXPECT_EQ(b1.m, rmatrix_block(lam, mp, z12, 1.1, 0.9, 2, fresh()).m);
}

TEST(RMatrix, Unitarity)
{
    for (auto [L1, L2] : {std::pair<cplx, cplx>{1.0, 1.0}, {cplx(1.3, 0.1), cplx(0.8, -0.2)}, {2.0, 1.0}})
        for (int level : {1, 2}) EXPECT_LT(unitarity_residual(lam, mp, z12, L1, L2, level), 1e-8) << L1 << L2 << level;
}

TEST(RMatrix, DynamicalYangBaxter)
{
    const cplx w(0.41, -0.03);
    EXPECT_LT(dybe_residual(lam, mp, z12, w, 1.0, 1.0, 1.0, 1), 1e-7);
    EXPECT_LT(dybe_residual(lam, mp, z12, w, cplx(1.3, 0.1), cplx(0.8, -0.2), cplx(1.7, 0.05), 2), 1e-7);
    EXPECT_LT(dybe_residual(lam, mp, z12, w, 1.0, 1.0, 2.0, 2, true), 1e-6);
}

TEST(RMatrix, DybeFailsWithWrongShift)
{
    // the relation is sensitive to the dynamical shift: dropping it breaks it
    const cplx w(0.41, -0.03);
    const std::vector<cplx> Ls{cplx(1.3, 0.1), cplx(0.8, -0.2), cplx(1.7, 0.05)};
    const auto basis = enumerate_indices(3, 1);
    const cplx tau = mp.tau(), eta = mp.eta();
    const Eigen::MatrixXcd lhs = embed_pair(0, 1, {}, lam, z12, tau, eta, Ls, basis) * embed_pair(0, 2, {}, lam, z12 + w, tau, eta, Ls, basis) *
                                 embed_pair(1, 2, {}, lam, w, tau, eta, Ls, basis);
    const Eigen::MatrixXcd rhs = embed_pair(1, 2, {}, lam, w, tau, eta, Ls, basis) * embed_pair(0, 2, {}, lam, z12 + w, tau, eta, Ls, basis) *
                                 embed_pair(0, 1, {}, lam, z12, tau, eta, Ls, basis);
    EXPECT_GT((lhs - rhs).norm() / lhs.norm(), 1e-4);
}

TEST(RMatrix, QuotientIsPreserved)
{
    for (auto [L1, L2] : {std::pair<cplx, cplx>{1.0, 1.0}, {1.0, 2.0}, {0.0, 1.0}}) {
        const auto b = rmatrix_block(lam, mp, z12, L1, L2, 2, fresh());
        EXPECT_LT(quotient_leak(b, {L1, L2}), 1e-8);
    }
    const auto b = rmatrix_block(lam, mp, z12, 1.0, 1.0, 2, fresh());
    const auto q = rmatrix_on_quotient(b, {1.0, 2, true}, {1.0, 2, true});
    ASSERT_EQ(q.rows.size(), 1u);
    EXPECT_EQ(q.rows.front(), (WeightIndex{1, 1}));
    EXPECT_THROW(rmatrix_on_quotient(b, {cplx(1.5, 0.0), 2, true}, {1.0, 2, true}), Error);
}

TEST(RMatrix, GenericWeightsCoupleEverything)
{
    const auto b = rmatrix_block(lam, mp, z12, cplx(1.3, 0.1), cplx(0.8, -0.2), 2, fresh());
    EXPECT_GT(b.m.cwiseAbs().minCoeff(), 1e-8);
}

TEST(RMatrix, Failures)
{
    auto o = fresh();
    o.residual_tol = 1e-300;
    try {
        rmatrix_block(lam, mp, z12, cplx(1.3, 0.1), 0.8, 2, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ResidualTooLarge);
    }
    o = fresh();
    o.cond_max = 1.0;
    try {
        rmatrix_block(lam, mp, z12, cplx(1.3, 0.1), 0.8, 2, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IllConditioned);
    }
    EXPECT_THROW(rmatrix_block(lam, mp, z12, 1.0, 1.0, -1), Error);
}
