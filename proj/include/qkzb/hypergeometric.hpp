#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkzb/contour.hpp"
#include "qkzb/elliptic_core.hpp"
#include "qkzb/parallel.hpp"
#include "qkzb/qkzb_operators.hpp"
#include "qkzb/weight_functions.hpp"

namespace qkzb {

// xi(x) is either a constant or exp(2 pi i k x / (4 eta N)); both are 4 eta N-periodic.
struct XiSpec {
    enum class Kind { Constant, Exponential };
    Kind kind = Kind::Constant;
    cplx value = 1.0;
    int k = 0;
    int N = 1;

    cplx operator()(cplx x, cplx eta) const
    {
        if (kind == Kind::Constant) return value;
        return std::exp(2.0 * pi * I * static_cast<double>(k) * x / (4.0 * eta * static_cast<double>(N)));
    }

    bool periodic(cplx period, cplx eta, double tol = 1e-10) const
    {
        for (cplx x : {cplx(0.1, 0.02), cplx(-0.37, 0.11), cplx(0.8, -0.05)}) {
            const cplx a = (*this)(x, eta), b = (*this)(x + period, eta);
            if (std::abs(a - b) > tol * std::max(1.0, std::abs(a))) return false;
        }
        return true;
    }

    void validate(cplx eta) const
    {
        if (N < 1) throw Error(ErrorKind::InvalidArgument, "xi needs N >= 1");
        if (kind == Kind::Constant && value == 0.0) throw Error(ErrorKind::InvalidArgument, "xi must not vanish");
        if (!periodic(4.0 * eta * static_cast<double>(N), eta))
            throw Error(ErrorKind::InvalidArgument, "xi is not 4 eta N-periodic");
    }

    int period() const { return kind == Kind::Constant ? 1 : N; }
};

struct IntegrationPlan {
    int N = 1;
    int M = 64;
    int K = 48;
    std::vector<double> offsets; // per variable, innermost first; empty = planned
    double pole_clearance = 1e-6;
    double tol = 1e-8;
    double tol_abs = 1e-14;
    int lattice = 5;
    double window = 1.0;
    double circle_fraction = 0.15; // residue circle radius relative to the nearest other candidate
    double regularize_fraction = 0.25;
    int regularize_nodes = 32;

    void validate() const
    {
        if (N < 1) throw Error(ErrorKind::InvalidArgument, "plan.N must be >= 1");
        if (M < 4 || M % 2) throw Error(ErrorKind::InvalidArgument, "plan.M must be even and >= 4");
        if (K < 4 || K % 2) throw Error(ErrorKind::InvalidArgument, "plan.K must be even and >= 4");
        if (lattice < 2) throw Error(ErrorKind::InvalidArgument, "plan.lattice must be >= 2");
        if (!(tol > 0.0) || !(tol_abs >= 0.0)) throw Error(ErrorKind::InvalidArgument, "plan tolerances must be positive");
        if (!(circle_fraction > 0.0 && circle_fraction < 0.5)) throw Error(ErrorKind::InvalidArgument, "plan.circle_fraction must lie in (0, 0.5)");
        if (!(pole_clearance > 0.0) || !(window > 0.0)) throw Error(ErrorKind::InvalidArgument, "plan.pole_clearance and plan.window must be positive");
        if (regularize_nodes < 4 || regularize_nodes % 2 || !(regularize_fraction > 0.0))
            throw Error(ErrorKind::InvalidArgument, "plan regularization needs an even node count >= 4 and a positive radius");
    }
};

inline cplx xi_argument(const std::vector<cplx>& t, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp)
{
    const auto a = sp.a(mp.eta());
    cplx x = mp.p() * lam + mp.tau() * mu;
    for (int k = 0; k < sp.n(); ++k) x -= 2.0 * a[static_cast<std::size_t>(k)] * sp.z[static_cast<std::size_t>(k)];
    for (auto s : t) x += 4.0 * mp.eta() * s;
    return x;
}

inline cplx integrand(const std::vector<cplx>& t, const WeightIndex& lb, const WeightIndex& mb, cplx lam, cplx mu,
                      const SystemParams& sp, const ModularParams& mp, const XiSpec& xi, const SeriesConfig& cfg = {})
{
    const auto a = sp.a(mp.eta());
    return xi(xi_argument(t, lam, mu, sp, mp), mp.eta()) * phase_multi(t, sp, mp, cfg) *
           weight_function(lb, t, lam, mp.tau(), mp.eta(), sp.z, a, cfg) * weight_function(mb, t, mu, mp.p(), mp.eta(), sp.z, a, cfg);
}

struct IntegralResult {
    cplx value = 0.0;
    double err = 0.0;
    std::vector<double> heights;
    bool regularized = false;
};

namespace detail {

inline int last_nonzero(const WeightIndex& v)
{
    for (int i = static_cast<int>(v.size()) - 1; i >= 0; --i)
        if (v[static_cast<std::size_t>(i)] > 0) return i;
    return -1;
}

// Upper candidates U_k + r p + s tau are kept only where the weight functions do not cancel them
// against zeros of the phase function.
inline PoleFamilies pole_families(const WeightIndex& lb, const WeightIndex& mb, const SystemParams& sp, const ModularParams& mp, int L)
{
    PoleFamilies f;
    f.eta = mp.eta();
    const auto a = sp.a(mp.eta());
    const int lastl = last_nonzero(lb), lastm = last_nonzero(mb);
    for (int r = 0; r < L; ++r)
        for (int s = 0; s < L; ++s) {
            const cplx R = static_cast<double>(r) * mp.p() + static_cast<double>(s) * mp.tau();
            const bool edge = r == L - 1 || s == L - 1;
            f.lattice.push_back({R, edge});
            for (int k = 0; k < sp.n(); ++k) {
                const bool up = (r >= 1 && s >= 1) || (r == 0 && s == 0 && k <= lastl && k <= lastm) ||
                                (r == 0 && s >= 1 && k <= lastl) || (s == 0 && r >= 1 && k <= lastm);
                const cplx zk = sp.z[static_cast<std::size_t>(k)], ak = a[static_cast<std::size_t>(k)];
                if (up) f.base.push_back({zk + ak + R, true, edge});
                f.base.push_back({zk - ak - R, false, edge});
            }
        }
    return f;
}

inline IntegralResult raw_integral(const WeightIndex& lb, const WeightIndex& mb, cplx lam, cplx mu, const SystemParams& sp,
                                   const ModularParams& mp, const XiSpec& xi, const IntegrationPlan& plan, const SeriesConfig& cfg)
{
    IntegralResult out;
    const int l = sp.l;
    if (l == 0) {
        out.value = xi(xi_argument({}, lam, mu, sp, mp), mp.eta());
        return out;
    }
    ContourSettings s;
    s.N = plan.N;
    s.offsets = plan.offsets;
    s.window = plan.window;
    s.min_clearance = plan.pole_clearance;
    s.radius_fraction = plan.circle_fraction;
    for (auto zk : sp.z) s.centre += zk.imag();
    s.centre /= static_cast<double>(sp.n());
    auto f = [&](const std::vector<cplx>& t) { return integrand(t, lb, mb, lam, mu, sp, mp, xi, cfg); };
    const auto poles = pole_families(lb, mb, sp, mp, plan.lattice);

    s.M = plan.M;
    s.K = plan.K;
    NestedContour<decltype(f)> fine(f, l, poles, s);
    out.value = fine.integrate();
    out.heights = fine.outer_heights();

    s.M = plan.M / 2;
    s.K = plan.K / 2;
    NestedContour<decltype(f)> coarse(f, l, poles, s);
    out.err = std::abs(out.value - coarse.integrate());
    return out;
}

} // namespace detail

inline void check_entry(const WeightIndex& lb, const WeightIndex& mb, const SystemParams& sp)
{
    if (static_cast<int>(lb.size()) != sp.n() || static_cast<int>(mb.size()) != sp.n())
        throw Error(ErrorKind::IndexError, "index length must equal n");
    if (level_of(lb) != sp.l || level_of(mb) != sp.l) throw Error(ErrorKind::IndexError, "index level must equal l");
    const auto B1 = admissibility(lb, sp.Lambda), B2 = admissibility(mb, sp.Lambda);
    for (int b : B1.bad)
        if (B2.contains(b))
            throw Error(ErrorKind::DivergentEntry, "entry " + to_string(lb) + "," + to_string(mb) + " overfills site " +
                                                       std::to_string(b + 1) + " on both sides");
}

// I_{lb,mb}(lam, mu; z, a) with the error estimate |I(M,K) - I(M/2,K/2)|. An exact pinch of the
// contour is resolved by averaging over a small circle a + delta e^{i phi} (1,...,1).
inline IntegralResult integral(const WeightIndex& lb, const WeightIndex& mb, cplx lam, cplx mu, const SystemParams& sp,
                               const ModularParams& mp, const XiSpec& xi, const IntegrationPlan& plan, const SeriesConfig& cfg = {})
{
    plan.validate();
    xi.validate(mp.eta());
    if (plan.N % xi.period() != 0) throw Error(ErrorKind::InvalidArgument, "plan.N must be a multiple of xi.N");
    sp.validate();
    check_entry(lb, mb, sp);
    IntegralResult out;
    try {
        out = detail::raw_integral(lb, mb, lam, mu, sp, mp, xi, plan, cfg);
    } catch (const PinchDetected&) {
        const int K = plan.regularize_nodes;
        const double delta = plan.regularize_fraction * std::abs(mp.eta());
        cplx all = 0.0, half = 0.0;
        double err = 0.0;
        for (int k = 0; k < K; ++k) {
            SystemParams s2 = sp;
            const cplx shift = delta * std::exp(2.0 * pi * I * (static_cast<double>(k) / K)) / mp.eta();
            for (auto& L : s2.Lambda) L += shift;
            const auto r = detail::raw_integral(lb, mb, lam, mu, s2, mp, xi, plan, cfg);
            all += r.value;
            if (k % 2 == 0) half += r.value;
            err = std::max(err, r.err);
            if (k == 0) out.heights = r.heights;
        }
        out.value = all / static_cast<double>(K);
        out.err = err + std::abs(out.value - half / static_cast<double>(K / 2));
        out.regularized = true;
    }
    if (!std::isfinite(out.value.real()) || !std::isfinite(out.value.imag()))
        throw Error(ErrorKind::NotConverged, "integral " + to_string(lb) + "," + to_string(mb) + " is not finite");
    if (out.err > plan.tol * std::abs(out.value) + plan.tol_abs)
        throw Error(ErrorKind::NotConverged, "integral " + to_string(lb) + "," + to_string(mb) + ": estimate " +
                                                 std::to_string(out.err) + " exceeds tolerance at |I| = " + std::to_string(std::abs(out.value)));
    return out;
}

struct SolutionTensor {
    std::vector<WeightIndex> rows, cols;
    Eigen::MatrixXcd u;
    Eigen::MatrixXd err;
    bool regularized = false;

    double err_norm() const { return err.norm(); }
};

inline cplx solution_prefactor(cplx lam, cplx mu, cplx eta) { return std::exp(-pi * I * mu * lam / (2.0 * eta)); }

// e^{-pi i mu lam / 2 eta} [I_{lb,mb}] over the given index sets, entries evaluated in parallel
inline SolutionTensor assemble_tensor(const std::vector<WeightIndex>& rows, const std::vector<WeightIndex>& cols, cplx lam, cplx mu,
                                      const SystemParams& sp, const ModularParams& mp, const XiSpec& xi, const IntegrationPlan& plan,
                                      const SeriesConfig& cfg = {})
{
    SolutionTensor T{rows, cols};
    const auto nr = static_cast<Eigen::Index>(rows.size()), nc = static_cast<Eigen::Index>(cols.size());
    T.u.resize(nr, nc);
    T.err.resize(nr, nc);
    std::vector<IntegralResult> res(rows.size() * cols.size());
    parallel_for(res.size(), [&](std::size_t i) {
        res[i] = integral(rows[i / cols.size()], cols[i % cols.size()], lam, mu, sp, mp, xi, plan, cfg);
    });
    const cplx pref = solution_prefactor(lam, mu, mp.eta());
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i / cols.size()), c = static_cast<Eigen::Index>(i % cols.size());
        T.u(r, c) = pref * res[i].value;
        T.err(r, c) = std::abs(pref) * res[i].err;
        T.regularized = T.regularized || res[i].regularized;
    }
    return T;
}

enum class TensorVariant { Full, Admissible };

inline SolutionTensor u_full(cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp, const XiSpec& xi,
                             const IntegrationPlan& plan, const SeriesConfig& cfg = {})
{
    const auto basis = zero_weight_basis(sp);
    return assemble_tensor(basis, basis, lam, mu, sp, mp, xi, plan, cfg);
}

inline SolutionTensor u_adm(cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp, const XiSpec& xi,
                            const IntegrationPlan& plan, const SeriesConfig& cfg = {})
{
    const auto basis = zero_weight_basis(sp, true);
    return assemble_tensor(basis, basis, lam, mu, sp, mp, xi, plan, cfg);
}

inline SolutionTensor u_variant(TensorVariant v, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                                const XiSpec& xi, const IntegrationPlan& plan, const SeriesConfig& cfg = {})
{
    return v == TensorVariant::Full ? u_full(lam, mu, sp, mp, xi, plan, cfg) : u_adm(lam, mu, sp, mp, xi, plan, cfg);
}

// indices of level sp.l whose admissibility set with respect to `select` equals B
inline std::vector<WeightIndex> indices_with_set(const AdmissibilitySet& B, int n, int l, const std::vector<cplx>& select)
{
    std::vector<WeightIndex> out;
    for (auto& v : enumerate_indices(n, l))
        if (admissibility(v, select) == B) out.push_back(v);
    return out;
}

// u_B: the block of entries (lb, mb) with B(lb) = B(mb) = B, admissibility taken at `select`
// (defaults to sp.Lambda). Evaluated at the weights of sp.
inline SolutionTensor u_B(const AdmissibilitySet& B, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                          const XiSpec& xi, const IntegrationPlan& plan, const std::vector<cplx>* select = nullptr,
                          const SeriesConfig& cfg = {})
{
    const auto idx = indices_with_set(B, sp.n(), sp.l, select ? *select : sp.Lambda);
    if (idx.empty()) throw Error(ErrorKind::IndexError, "no index of this level has the requested admissibility set");
    return assemble_tensor(idx, idx, lam, mu, sp, mp, xi, plan, cfg);
}

struct IdentityCheck {
    double residual = 0.0;
    double estimate = 0.0;
    double lhs_norm = 0.0;
    bool branch_warning = false;
};

inline IdentityCheck compare(const Eigen::MatrixXcd& lhs, const Eigen::MatrixXcd& rhs, double err_sum)
{
    IdentityCheck c;
    c.lhs_norm = lhs.norm();
    const double scale = c.lhs_norm > 0.0 ? c.lhs_norm : 1.0;
    c.residual = (lhs - rhs).norm() / scale;
    c.estimate = err_sum / scale;
    return c;
}

inline LambdaOperator K_variant(TensorVariant v, int j, const SystemParams& sp, cplx modulus, cplx step, cplx eta, const KOptions& opt)
{
    if (v == TensorVariant::Full) return K_op(j, sp, modulus, step, eta, zero_weight_basis(sp), opt);
    return K_op_quotient(j, sp, modulus, step, eta, opt);
}

inline SystemParams shifted(const SystemParams& sp, int j, cplx step)
{
    if (j < 0 || j >= sp.n()) throw Error(ErrorKind::IndexError, "site index out of range");
    SystemParams s = sp;
    s.z[static_cast<std::size_t>(j)] += step;
    return s;
}

// u(z_j + p) = K_j(lam; modulus tau, step p) u (D_j(mu)^{-1} on the second factor)
inline IdentityCheck qkzb_residual_step_p(int j, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp, const XiSpec& xi,
                                          const IntegrationPlan& plan, TensorVariant v = TensorVariant::Admissible,
                                          const KOptions& kopt = {})
{
    const auto L = u_variant(v, lam, mu, shifted(sp, j, mp.p()), mp, xi, plan, kopt.cfg);
    const auto K = K_variant(v, j, sp, mp.tau(), mp.p(), mp.eta(), kopt);
    const Eigen::VectorXcd Dinv = D_op(j, mu, mp.eta(), sp, L.cols).d.cwiseInverse();
    Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(L.u.rows(), L.u.cols());
    double errs = L.err_norm();
    for (const auto& t : K.at(lam)) {
        const auto u = u_variant(v, lam + t.shift, mu, sp, mp, xi, plan, kopt.cfg);
        rhs += t.M * u.u;
        errs += t.M.norm() * u.err_norm() * Dinv.cwiseAbs().maxCoeff();
    }
    rhs = rhs * Dinv.asDiagonal();
    return compare(L.u, rhs, errs);
}

// u(z_j + tau) = D_j(lam)^{-1} on the first factor of [K_j(mu; modulus p, step tau) acting on the second factor] u
inline IdentityCheck qkzb_residual_step_tau(int j, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                                            const XiSpec& xi, const IntegrationPlan& plan, TensorVariant v = TensorVariant::Admissible,
                                            const KOptions& kopt = {})
{
    const auto L = u_variant(v, lam, mu, shifted(sp, j, mp.tau()), mp, xi, plan, kopt.cfg);
    const auto K = K_variant(v, j, sp, mp.p(), mp.tau(), mp.eta(), kopt);
    const Eigen::VectorXcd Dinv = D_op(j, lam, mp.eta(), sp, L.rows).d.cwiseInverse();
    Eigen::MatrixXcd kt = Eigen::MatrixXcd::Zero(L.u.cols(), L.u.rows());
    double errs = L.err_norm();
    for (const auto& t : K.at(mu)) {
        const auto u = u_variant(v, lam, mu + t.shift, sp, mp, xi, plan, kopt.cfg);
        kt += t.M * u.u.transpose();
        errs += t.M.norm() * u.err_norm() * Dinv.cwiseAbs().maxCoeff();
    }
    const Eigen::MatrixXcd rhs = Dinv.asDiagonal() * kt.transpose();
    return compare(L.u, rhs, errs);
}

// u(z_j + 1) = u(z), valid when xi is 2 a_j-periodic
inline IdentityCheck qkzb_residual_step_one(int j, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                                            const XiSpec& xi, const IntegrationPlan& plan, TensorVariant v = TensorVariant::Admissible,
                                            const SeriesConfig& cfg = {})
{
    const auto a = sp.a(mp.eta());
    if (!xi.periodic(2.0 * a.at(static_cast<std::size_t>(j)), mp.eta()))
        throw Error(ErrorKind::InvalidArgument, "z_j + 1 relation needs xi to be 2 a_j-periodic");
    const auto L = u_variant(v, lam, mu, shifted(sp, j, 1.0), mp, xi, plan, cfg);
    const auto R = u_variant(v, lam, mu, sp, mp, xi, plan, cfg);
    return compare(L.u, R.u, L.err_norm() + R.err_norm());
}

// Psi_f = (1 (x) f)(1 (x) D(mu, p)) u: a vector over the row basis
inline Eigen::VectorXcd psi_solution(const Eigen::VectorXcd& f, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                                     const XiSpec& xi, const IntegrationPlan& plan, TensorVariant v = TensorVariant::Admissible,
                                     const SeriesConfig& cfg = {})
{
    const auto u = u_variant(v, lam, mu, sp, mp, xi, plan, cfg);
    if (f.size() != u.u.cols()) throw Error(ErrorKind::InvalidArgument, "functional length must equal the basis size");
    const auto D = D_total(mu, mp.p(), mp.eta(), sp, u.cols);
    return u.u * D.d.cwiseProduct(f);
}

// Phi_f = (f (x) 1)(D(lam, tau) (x) 1) u: a vector over the column basis
inline Eigen::VectorXcd phi_solution(const Eigen::VectorXcd& f, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                                     const XiSpec& xi, const IntegrationPlan& plan, TensorVariant v = TensorVariant::Admissible,
                                     const SeriesConfig& cfg = {})
{
    const auto u = u_variant(v, lam, mu, sp, mp, xi, plan, cfg);
    if (f.size() != u.u.rows()) throw Error(ErrorKind::InvalidArgument, "functional length must equal the basis size");
    const auto D = D_total(lam, mp.tau(), mp.eta(), sp, u.rows);
    return u.u.transpose() * D.d.cwiseProduct(f);
}

// Psi_f(z_j + p) = K_j(lam; modulus tau, step p) Psi_f(z)
inline IdentityCheck psi_residual_step_p(int j, const Eigen::VectorXcd& f, cplx lam, cplx mu, const SystemParams& sp,
                                         const ModularParams& mp, const XiSpec& xi, const IntegrationPlan& plan,
                                         TensorVariant v = TensorVariant::Admissible, const KOptions& kopt = {})
{
    const Eigen::MatrixXcd lhs = psi_solution(f, lam, mu, shifted(sp, j, mp.p()), mp, xi, plan, v, kopt.cfg);
    const auto K = K_variant(v, j, sp, mp.tau(), mp.p(), mp.eta(), kopt);
    const Eigen::MatrixXcd rhs = K.apply([&](cplx l) -> Eigen::MatrixXcd { return psi_solution(f, l, mu, sp, mp, xi, plan, v, kopt.cfg); }, lam);
    return compare(lhs, rhs, 0.0);
}

// Monodromy of Psi = (1 (x) D(mu, p; z)) u under z_j -> z_j + tau:
// (B_j(lam, p) (x) 1) Psi(z_j + tau) = (1 (x) F_j D(mu, p; z_j + tau) K_j(mu; p, tau) D(mu, p; z)^{-1}) Psi(z)
inline IdentityCheck monodromy_tau_shift_residual(int j, cplx lam, cplx mu, const SystemParams& sp, const ModularParams& mp,
                                                  const XiSpec& xi, const IntegrationPlan& plan,
                                                  TensorVariant v = TensorVariant::Admissible, const KOptions& kopt = {})
{
    const auto spj = shifted(sp, j, mp.tau());
    const auto Ut = u_variant(v, lam, mu, spj, mp, xi, plan, kopt.cfg);
    const auto Dshift = D_total(mu, mp.p(), mp.eta(), spj, Ut.cols);
    const auto Bj = B_op(j, lam, mp.p(), mp.eta(), sp, Ut.rows);
    const Eigen::MatrixXcd lhs = Bj.d.asDiagonal() * (Ut.u * Dshift.d.asDiagonal());

    const auto K = K_variant(v, j, sp, mp.p(), mp.tau(), mp.eta(), kopt);
    Eigen::MatrixXcd kt = Eigen::MatrixXcd::Zero(Ut.u.cols(), Ut.u.rows());
    double errs = Ut.err_norm() * Bj.d.cwiseAbs().maxCoeff() * Dshift.d.cwiseAbs().maxCoeff();
    bool branch = Dshift.branch_warning;
    for (const auto& t : K.at(mu)) {
        const cplx ms = mu + t.shift;
        const auto u = u_variant(v, lam, ms, sp, mp, xi, plan, kopt.cfg);
        const auto D = D_total(ms, mp.p(), mp.eta(), sp, u.cols);
        branch = branch || D.branch_warning;
        const Eigen::MatrixXcd psi = u.u * D.d.asDiagonal();
        const Eigen::MatrixXcd chi = psi * D.d.cwiseInverse().asDiagonal();
        kt += t.M * chi.transpose();
        errs += t.M.norm() * u.err_norm() * Dshift.d.cwiseAbs().maxCoeff();
    }
    const Eigen::MatrixXcd rhs = F_scalar(j, mp.p(), mp.eta(), sp) * (kt.transpose() * Dshift.d.asDiagonal());
    auto c = compare(lhs, rhs, errs);
    c.branch_warning = branch;
    return c;
}

// ---- residues at integral weights ----

struct ResidueFactor {
    int site = 0; // 0-based
    int k = 0;
    cplx x_literal_tau, x_literal_p; // theta(0) in the denominators makes these blow up for k >= 1
    bool x_literal_finite = true;
    cplx x_tau, x_p; // the same product with theta(0) read as theta'(0)
    cplx kappa;
    cplx y, N, d;
};

struct ResidueConstants {
    std::vector<ResidueFactor> factors;
    cplx c_B = 1.0;
};

namespace detail {

inline cplx x_factor(int k, cplx mod, cplx eta, const SeriesConfig& cfg, bool literal)
{
    const cplx d0 = theta_deriv(0.0, mod, cfg);
    auto th = [&](cplx t, int m) { return (!literal && m == 0) ? d0 : theta(t, mod, cfg); };
    cplx v = 1.0 / (factorial(k + 1) * d0);
    for (int i = 0; i <= k - 1; ++i)
        for (int j = i + 1; j <= k; ++j)
            v *= th(2.0 * static_cast<double>(i - j) * eta, i - j) / th(2.0 * static_cast<double>(i - j + 1) * eta, i - j + 1);
    for (int i = 1; i <= k; ++i) v /= theta(2.0 * static_cast<double>(i) * eta, mod, cfg);
    return v;
}

} // namespace detail

inline cplx residue_y(int k, const ModularParams& mp, const SeriesConfig& cfg = {})
{
    const cplx eta = mp.eta();
    const double kk = k;
    cplx v = phase_pair_limit(kk * eta, mp, cfg) / factorial(k + 1);
    v *= std::pow(phase1_deriv(-2.0 * eta, mp, -2.0 * eta, cfg), k);
    for (int i = 0; i <= k - 2; ++i)
        for (int j = i + 2; j <= k; ++j) v *= phase1(2.0 * static_cast<double>(i - j) * eta, mp, -2.0 * eta, cfg);
    for (int i = 1; i <= k - 1; ++i) v *= phase1(kk * eta - 2.0 * static_cast<double>(i) * eta, mp, kk * eta, cfg);
    return v;
}

// N_{s,k} with s 0-based; the inner products run over i < s and i > s
inline cplx residue_N(int s, int k, const SystemParams& sp, const ModularParams& mp, const SeriesConfig& cfg = {})
{
    const auto a = sp.a(mp.eta());
    const auto su = static_cast<std::size_t>(s);
    cplx v = 1.0;
    for (int sig = 0; sig <= k; ++sig) {
        const cplx sh = 2.0 * static_cast<double>(sig) * mp.eta();
        for (int i = 0; i < sp.n(); ++i) {
            const auto iu = static_cast<std::size_t>(i);
            if (i < s) v *= phase1(sp.z[iu] - sp.z[su], mp, a[iu] + a[su] - sh, cfg);
            if (i > s) v *= phase1(sp.z[su] - sp.z[iu], mp, a[iu] + a[su] - sh, cfg);
        }
    }
    return v;
}

inline ResidueConstants residue_constants(const AdmissibilitySet& B, const SystemParams& sp0, const ModularParams& mp,
                                          const SeriesConfig& cfg = {})
{
    if (B.empty()) throw Error(ErrorKind::InvalidArgument, "residue constants need a nonempty B");
    ResidueConstants out;
    for (int s : B.bad) {
        if (s < 0 || s >= sp0.n()) throw Error(ErrorKind::IndexError, "B contains a site out of range");
        auto k = nonneg_integer(sp0.Lambda[static_cast<std::size_t>(s)]);
        if (!k) throw Error(ErrorKind::NotIntegral, "Lambda_" + std::to_string(s + 1) + " is not a nonnegative integer");
        ResidueFactor f;
        f.site = s;
        f.k = *k;
        f.x_literal_tau = detail::x_factor(f.k, mp.tau(), mp.eta(), cfg, true);
        f.x_literal_p = detail::x_factor(f.k, mp.p(), mp.eta(), cfg, true);
        f.x_literal_finite = f.k == 0 || (std::isfinite(std::abs(f.x_literal_tau)) && std::isfinite(std::abs(f.x_literal_p)) &&
                                          std::abs(f.x_literal_tau) < 1e12 && std::abs(f.x_literal_p) < 1e12);
        f.x_tau = detail::x_factor(f.k, mp.tau(), mp.eta(), cfg, false);
        f.x_p = detail::x_factor(f.k, mp.p(), mp.eta(), cfg, false);
        const double fk = factorial(f.k + 1);
        // the empty chain (k = 0) picks up the opposite orientation; k = 0, 1, 2 checked against numeric residues
        f.kappa = (f.k == 0 ? 1.0 : -1.0) * std::pow(fk, 5) * std::pow(2.0 * pi * I, f.k + 1) / 2.0;
        f.y = residue_y(f.k, mp, cfg);
        f.d = phase_pair_limit(static_cast<double>(f.k) * mp.eta(), mp, cfg);
        f.N = residue_N(s, f.k, sp0, mp, cfg);
        out.c_B *= f.kappa * f.x_tau * f.x_p * f.y * f.N;
        out.factors.push_back(f);
    }
    return out;
}

inline SystemParams reflected_system(const AdmissibilitySet& B, const SystemParams& sp0)
{
    SystemParams s = sp0;
    for (int b : B.bad) {
        const auto k = nonneg_integer(sp0.Lambda.at(static_cast<std::size_t>(b)));
        if (!k) throw Error(ErrorKind::NotIntegral, "reflected weights need integral Lambda on B");
        s.Lambda[static_cast<std::size_t>(b)] = -sp0.Lambda[static_cast<std::size_t>(b)] - 2.0;
        s.l -= *k + 1;
    }
    if (s.l < 0) throw Error(ErrorKind::IndexError, "l'(B) is negative");
    return s;
}

inline WeightIndex reduced_index(const AdmissibilitySet& B, const WeightIndex& v, const SystemParams& sp0)
{
    WeightIndex w = v;
    for (int b : B.bad) w[static_cast<std::size_t>(b)] -= *nonneg_integer(sp0.Lambda[static_cast<std::size_t>(b)]) + 1;
    return w;
}

inline double weight_conservation_gap(const AdmissibilitySet& B, const SystemParams& sp0)
{
    const auto s = reflected_system(B, sp0);
    return std::abs(s.total_weight() - sp0.total_weight());
}

struct ResidueResult {
    SolutionTensor tensor; // err holds |K - K/2| per entry
    double rho = 0.0;
    int K = 0;
};

// rho = 0.05 * distance from a^0_b to the nearest other point of eta Z, over b in B
inline double default_residue_radius(const AdmissibilitySet& B, const SystemParams& sp0, const ModularParams& mp)
{
    (void)B;
    (void)sp0;
    return 0.05 * std::abs(mp.eta());
}

// Iterated residue of u_B in a_{b_1}, a_{b_2}, ... (innermost first) by trapezoid circles of radius rho.
inline ResidueResult numeric_residue_u_B(const AdmissibilitySet& B, cplx lam, cplx mu, const SystemParams& sp0, const ModularParams& mp,
                                         const XiSpec& xi, const IntegrationPlan& plan, double rho, int K, double tol = 1e-6,
                                         const SeriesConfig& cfg = {})
{
    if (B.empty()) throw Error(ErrorKind::InvalidArgument, "numeric residue needs a nonempty B");
    if (K < 4 || K % 2) throw Error(ErrorKind::InvalidArgument, "residue node count must be even and >= 4");
    if (!(rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "residue radius must be positive");
    for (int b : B.bad)
        if (!nonneg_integer(sp0.Lambda.at(static_cast<std::size_t>(b))))
            throw Error(ErrorKind::NotIntegral, "residue sites need integral Lambda");
    const auto idx = indices_with_set(B, sp0.n(), sp0.l, sp0.Lambda);
    if (idx.empty()) throw Error(ErrorKind::IndexError, "no index of this level has the requested admissibility set");

    const std::size_t depth = B.bad.size();
    std::size_t nodes = 1;
    for (std::size_t i = 0; i < depth; ++i) nodes *= static_cast<std::size_t>(K);
    std::vector<Eigen::MatrixXcd> vals(nodes);
    std::vector<double> errs(nodes);
    const cplx eta = mp.eta();
    auto phase = [&](std::size_t node, std::size_t level) {
        for (std::size_t i = 0; i < level; ++i) node /= static_cast<std::size_t>(K);
        return node % static_cast<std::size_t>(K);
    };
    parallel_for(nodes, [&](std::size_t node) {
        SystemParams sp = sp0;
        cplx weight = 1.0;
        for (std::size_t i = 0; i < depth; ++i) {
            const cplx e = std::exp(2.0 * pi * I * (static_cast<double>(phase(node, i)) / K));
            sp.Lambda[static_cast<std::size_t>(B.bad[i])] += rho * e / eta;
            weight *= rho * e;
        }
        const auto T = assemble_tensor(idx, idx, lam, mu, sp, mp, xi, plan, cfg);
        vals[node] = T.u * weight;
        errs[node] = T.err_norm() * std::abs(weight);
    });
    ResidueResult out;
    out.rho = rho;
    out.K = K;
    out.tensor.rows = out.tensor.cols = idx;
    const auto d = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(d, d), half = Eigen::MatrixXcd::Zero(d, d);
    double quad_err = 0.0;
    std::size_t nhalf = 0;
    for (std::size_t node = 0; node < nodes; ++node) {
        full += vals[node];
        quad_err += errs[node];
        bool even = true;
        for (std::size_t i = 0; i < depth; ++i) even = even && phase(node, i) % 2 == 0;
        if (even) {
            half += vals[node];
            ++nhalf;
        }
    }
    full /= static_cast<double>(nodes);
    half /= static_cast<double>(nhalf);
    quad_err /= static_cast<double>(nodes);
    out.tensor.u = full;
    out.tensor.err = (full - half).cwiseAbs();
    out.tensor.err.array() += quad_err;
    if ((full - half).norm() > tol * full.norm())
        throw Error(ErrorKind::NotConverged, "residue circle quadrature: K and K/2 disagree");
    return out;
}

// Right-hand side of the residue formula over the same index block as u_B
inline SolutionTensor predicted_residue_u_B(const AdmissibilitySet& B, cplx lam, cplx mu, const SystemParams& sp0, const ModularParams& mp,
                                            const XiSpec& xi, const IntegrationPlan& plan, const SeriesConfig& cfg = {})
{
    const auto red = reflected_system(B, sp0);
    const auto idx = indices_with_set(B, sp0.n(), sp0.l, sp0.Lambda);
    if (idx.empty()) throw Error(ErrorKind::IndexError, "no index of this level has the requested admissibility set");
    const auto cB = residue_constants(B, sp0, mp, cfg).c_B;
    cplx pre = cB;
    for (int s = red.l + 1; s <= sp0.l; ++s)
        pre *= theta(lam + 2.0 * static_cast<double>(s) * mp.eta(), mp.tau(), cfg) *
               theta(mu + 2.0 * static_cast<double>(s) * mp.eta(), mp.p(), cfg) / static_cast<double>(s);
    std::vector<WeightIndex> ridx;
    for (const auto& v : idx) ridx.push_back(reduced_index(B, v, sp0));
    auto T = assemble_tensor(ridx, ridx, lam, mu, red, mp, xi, plan, cfg);
    T.rows = T.cols = idx;
    T.u *= pre;
    T.err *= std::abs(pre);
    return T;
}

} // namespace qkzb
