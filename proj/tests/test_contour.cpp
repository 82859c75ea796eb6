#include <gtest/gtest.h>

#include "qkzb/contour.hpp"

using namespace qkzb;

namespace {

cplx ex(cplx x) { return std::exp(2.0 * pi * I * x); }

// 1 / (1 - e(t - c)) integrates to 0 over a line below c and to 1 over a line above it
struct Simple {
    cplx c;
    cplx operator()(const std::vector<cplx>& t) const { return 1.0 / (1.0 - ex(t[0] - c)); }
};

PoleFamilies one_pole(cplx c, bool upper, bool edge = false)
{
    PoleFamilies f;
    f.base.push_back({c, upper, edge});
    f.eta = cplx(0.01, -0.02);
    return f;
}

ContourSettings fixed_line(double y)
{
    ContourSettings s;
    s.offsets = {y};
    return s;
}

cplx integrate1(auto f, PoleFamilies p, ContourSettings s)
{
    NestedContour<decltype(f)> nc(f, 1, std::move(p), std::move(s));
    return nc.integrate();
}

} // namespace

TEST(Contour, UpperPoleStaysAboveContour)
{
    const cplx c(0.3, 0.1);
    for (double y : {-0.3, -0.05, 0.2, 0.5}) EXPECT_LT(std::abs(integrate1(Simple{c}, one_pole(c, true), fixed_line(y))), 1e-13) << y;
    EXPECT_LT(std::abs(integrate1(Simple{c}, one_pole(c, true), ContourSettings{})), 1e-13);
}

TEST(Contour, LowerPoleStaysBelowContour)
{
    const cplx c(0.3, 0.1);
    for (double y : {-0.3, -0.05, 0.2, 0.5}) EXPECT_LT(std::abs(integrate1(Simple{c}, one_pole(c, false), fixed_line(y)) - 1.0), 1e-13) << y;
}

TEST(Contour, TwoPolesAgainstFineTrapezoid)
{
    const cplx cu(0.3, 0.12), cl(0.7, -0.08);
    auto f = [&](const std::vector<cplx>& t) { return ex(t[0]) / ((1.0 - ex(t[0] - cu)) * (1.0 - ex(cl - t[0]))); };
    // direct sum on the separating line, far more nodes than the engine uses
    cplx ref = 0.0;
    const int n = 2048;
    for (int i = 0; i < n; ++i) ref += f({cplx(static_cast<double>(i) / n, 0.02)});
    ref /= static_cast<double>(n);
    PoleFamilies p;
    p.base = {{cu, true, false}, {cl, false, false}};
    p.eta = cplx(0.01, -0.02);
    for (double y : {-0.4, 0.02, 0.4}) EXPECT_LT(std::abs(integrate1(f, p, fixed_line(y)) - ref), 1e-12) << y;
}

TEST(Contour, PeriodMultiple)
{
    const cplx c(0.3, 0.1);
    ContourSettings s = fixed_line(0.5);
    s.N = 2;
    EXPECT_LT(std::abs(integrate1(Simple{c}, one_pole(c, false), s) - 2.0), 1e-12);
}

TEST(Contour, NestedSeparable)
{
    const cplx c0(0.2, 0.05), c1(0.6, -0.04);
    auto f = [&](const std::vector<cplx>& t) { return 1.0 / ((1.0 - ex(t[0] - c0)) * (1.0 - ex(t[1] - c1))); };
    PoleFamilies p;
    p.base = {{c0, false, false}, {c1, false, false}};
    p.eta = cplx(0.01, -0.02);
    ContourSettings s;
    s.offsets = {-0.3, -0.3};
    NestedContour<decltype(f)> nc(f, 2, p, s);
    EXPECT_LT(std::abs(nc.integrate() - 1.0), 1e-12);
    ContourSettings planned;
    NestedContour<decltype(f)> nc2(f, 2, p, planned);
    EXPECT_LT(std::abs(nc2.integrate() - 1.0), 1e-12);
    EXPECT_EQ(nc2.outer_heights().size(), 2u);
}

TEST(Contour, SpectralConvergence)
{
    const cplx c(0.3, 0.1);
    double prev = 1.0;
    for (int M : {8, 16, 32}) {
        ContourSettings s = fixed_line(-0.05);
        s.M = M;
        const double err = std::abs(integrate1(Simple{c}, one_pole(c, false), s) - 1.0);
        EXPECT_LT(err, prev);
        prev = std::max(err, 1e-15);
    }
    EXPECT_LT(prev, 1e-12);
}

TEST(Contour, PlannerKeepsClearance)
{
    const cplx c(0.3, 0.0);
    ContourSettings s;
    s.window = 0.5;
    auto f = Simple{c};
    NestedContour<decltype(f)> nc(f, 1, one_pole(c, true), s);
    nc.integrate();
    EXPECT_GE(std::abs(nc.outer_heights()[0] - c.imag()), 0.25);
}

TEST(Contour, MisplacedEdgeCandidateIsInfeasible)
{
    const cplx c(0.3, 0.1);
    try {
        integrate1(Simple{c}, one_pole(c, true, true), fixed_line(0.4));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PlanInfeasible);
    }
}

TEST(Contour, PinchIsDetected)
{
    const cplx c(0.3, 0.1);
    PoleFamilies p;
    p.base = {{c, true, false}, {c + 1.0, false, false}};
    p.eta = cplx(0.01, -0.02);
    EXPECT_THROW(integrate1(Simple{c}, p, fixed_line(0.3)), PinchDetected);
}

TEST(Contour, NoClearanceIsInfeasible)
{
    const cplx c(0.3, 0.1);
    ContourSettings s;
    s.window = 0.0;
    s.centre = 0.1;
    s.min_clearance = 1e-3;
    EXPECT_THROW(integrate1(Simple{c}, one_pole(c, true), s), Error);
}
