#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "qkzb/rmatrix.hpp"

namespace qkzb {

enum class ShiftConvention {
    Verbatim,    // s < m, s != k
    Alternative, // s < max(k, m), s not in {k, m}
};

struct KOptions {
    ShiftConvention convention = ShiftConvention::Verbatim;
    RMatrixOptions ropt;
    SeriesConfig cfg;
};

inline std::vector<WeightIndex> zero_weight_basis(const SystemParams& sp, bool admissible_only = false, double tol = 1e-9)
{
    if (std::abs(sp.total_weight()) > tol)
        throw Error(ErrorKind::InvalidArgument, "zero-weight basis needs sum Lambda = 2 l");
    auto all = enumerate_indices(sp.n(), sp.l);
    if (!admissible_only) return all;
    std::vector<WeightIndex> out;
    for (auto& v : all)
        if (is_admissible(v, sp.Lambda)) out.push_back(v);
    return out;
}

struct DiffTerm {
    cplx shift;
    Eigen::MatrixXcd M;
};
using DiffTerms = std::vector<DiffTerm>;

inline void add_term(DiffTerms& terms, cplx shift, const Eigen::MatrixXcd& M)
{
    for (auto& t : terms) {
        if (std::abs(t.shift - shift) <= 1e-12 * (1.0 + std::abs(shift))) {
            t.M += M;
            return;
        }
    }
    terms.push_back({shift, M});
}

// A difference operator in lambda: (K phi)(lam) = sum_s M_s(lam) phi(lam + s).
class LambdaOperator {
public:
    LambdaOperator() = default;
    explicit LambdaOperator(std::function<DiffTerms(cplx)> f) : f_(std::move(f)) {}

    DiffTerms at(cplx lam) const { return f_(lam); }

    template <class Phi>
    Eigen::MatrixXcd apply(Phi&& phi, cplx lam) const
    {
        Eigen::MatrixXcd out;
        for (const auto& t : f_(lam)) {
            Eigen::MatrixXcd v = t.M * phi(lam + t.shift);
            if (out.size() == 0)
                out = v;
            else
                out += v;
        }
        return out;
    }

    friend LambdaOperator compose(const LambdaOperator& A, const LambdaOperator& B)
    {
        return LambdaOperator([A, B](cplx lam) {
            DiffTerms out;
            for (const auto& a : A.at(lam))
                for (const auto& b : B.at(lam + a.shift)) add_term(out, a.shift + b.shift, a.M * b.M);
            return out;
        });
    }

private:
    std::function<DiffTerms(cplx)> f_;
};

inline std::vector<int> shift_set(int k, int m, ShiftConvention conv)
{
    std::vector<int> s;
    const int top = conv == ShiftConvention::Verbatim ? m : std::max(k, m);
    for (int i = 0; i < top; ++i)
        if (i != k && i != m) s.push_back(i);
    return s;
}

// K_j (0-based j) with the given elliptic modulus and z-step, acting on lambda-dependent vectors
// over `basis`: A(lam) Gamma_j C(lam), A = R_{j,j-1}(z_j - z_{j-1} + step)...R_{j,0}, C = R_{j,n-1}...R_{j,j+1}.
inline LambdaOperator K_op(int j, const SystemParams& sp, cplx modulus, cplx step, cplx eta,
                           const std::vector<WeightIndex>& basis, const KOptions& opt = {})
{
    const int n = sp.n();
    if (j < 0 || j >= n) throw Error(ErrorKind::IndexError, "K_op: j out of range");
    return LambdaOperator([=](cplx lam) {
        const auto d = static_cast<Eigen::Index>(basis.size());
        auto R = [&](int m, cplx lm, cplx zz) {
            return embed_pair(j, m, shift_set(j, m, opt.convention), lm, zz, modulus, eta, sp.Lambda, basis, opt.ropt, opt.cfg);
        };
        Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(d, d);
        for (int m = j - 1; m >= 0; --m) A = A * R(m, lam, sp.z[static_cast<std::size_t>(j)] - sp.z[static_cast<std::size_t>(m)] + step);
        std::vector<cplx> mus;
        for (const auto& v : basis) {
            const cplx mu = sp.Lambda[static_cast<std::size_t>(j)] - 2.0 * static_cast<double>(v[static_cast<std::size_t>(j)]);
            if (std::none_of(mus.begin(), mus.end(), [&](cplx x) { return std::abs(x - mu) < 1e-9; })) mus.push_back(mu);
        }
        DiffTerms terms;
        for (cplx mu : mus) {
            const cplx ls = lam - 2.0 * eta * mu;
            Eigen::MatrixXcd C = Eigen::MatrixXcd::Identity(d, d);
            for (int m = n - 1; m > j; --m) C = C * R(m, ls, sp.z[static_cast<std::size_t>(j)] - sp.z[static_cast<std::size_t>(m)]);
            Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(d, d);
            for (Eigen::Index i = 0; i < d; ++i) {
                const cplx mv = sp.Lambda[static_cast<std::size_t>(j)] - 2.0 * static_cast<double>(basis[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
                if (std::abs(mv - mu) < 1e-9) P(i, i) = 1.0;
            }
            add_term(terms, -2.0 * eta * mu, A * P * C);
        }
        return terms;
    });
}

inline DiffTerms restrict_terms(const DiffTerms& terms, const std::vector<bool>& keep)
{
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) idx.push_back(static_cast<Eigen::Index>(i));
    DiffTerms out;
    for (const auto& t : terms) {
        Eigen::MatrixXcd M(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < idx.size(); ++c)
                M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.M(idx[r], idx[c]);
        out.push_back({t.shift, M});
    }
    return out;
}

// K_j induced on the admissible quotient: build on the full zero-weight block, keep admissible rows/columns
inline LambdaOperator K_op_quotient(int j, const SystemParams& sp, cplx modulus, cplx step, cplx eta, const KOptions& opt = {})
{
    const auto full = zero_weight_basis(sp);
    const auto keep = admissible_mask(full, sp.Lambda);
    const LambdaOperator K = K_op(j, sp, modulus, step, eta, full, opt);
    return LambdaOperator([K, keep](cplx lam) { return restrict_terms(K.at(lam), keep); });
}

// largest |M(adm row, non-adm col)| over all terms, relative to the total norm
inline double operator_leak(const DiffTerms& terms, const std::vector<WeightIndex>& basis, const std::vector<cplx>& Lambda)
{
    const auto mask = admissible_mask(basis, Lambda);
    double worst = 0.0, nrm = 0.0;
    for (const auto& t : terms) {
        nrm += t.M.squaredNorm();
        for (std::size_t r = 0; r < mask.size(); ++r)
            for (std::size_t c = 0; c < mask.size(); ++c)
                if (mask[r] && !mask[c])
                    worst = std::max(worst, std::abs(t.M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
    }
    return nrm == 0.0 ? 0.0 : worst / std::sqrt(nrm);
}

inline double terms_distance(const DiffTerms& a, const DiffTerms& b)
{
    DiffTerms diff = a;
    for (const auto& t : b) add_term(diff, t.shift, -t.M);
    double num = 0.0, den = 0.0;
    for (const auto& t : diff) num += t.M.squaredNorm();
    for (const auto& t : a) den += t.M.squaredNorm();
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

// K_j(z + step e_k) K_k(z) against K_k(z + step e_j) K_j(z), compared shift by shift
inline double flatness_residual(int j, int k, cplx lam, const SystemParams& sp, cplx modulus, cplx step, cplx eta,
                                const KOptions& opt = {})
{
    const auto basis = zero_weight_basis(sp);
    SystemParams zk = sp, zj = sp;
    zk.z[static_cast<std::size_t>(k)] += step;
    zj.z[static_cast<std::size_t>(j)] += step;
    const auto lhs = compose(K_op(j, zk, modulus, step, eta, basis, opt), K_op(k, sp, modulus, step, eta, basis, opt));
    const auto rhs = compose(K_op(k, zj, modulus, step, eta, basis, opt), K_op(j, sp, modulus, step, eta, basis, opt));
    return terms_distance(lhs.at(lam), rhs.at(lam));
}

inline cplx alpha_fn(cplx lam, cplx eta) { return std::exp(-pi * I * lam * lam / (4.0 * eta)); }

struct DiagonalOp {
    std::vector<WeightIndex> basis;
    Eigen::VectorXcd d;
    bool branch_warning = false;

    Eigen::MatrixXcd matrix() const { return d.asDiagonal(); }
};

// D_k (0-based k) on the weight basis
inline DiagonalOp D_op(int k, cplx lam, cplx eta, const SystemParams& sp, const std::vector<WeightIndex>& basis)
{
    const int n = sp.n();
    if (k < 0 || k >= n) throw Error(ErrorKind::IndexError, "D_op: k out of range");
    cplx before = 0.0, after = 0.0;
    for (int m = 0; m < k; ++m) before += sp.Lambda[static_cast<std::size_t>(m)];
    for (int m = k + 1; m < n; ++m) after += sp.Lambda[static_cast<std::size_t>(m)];
    const cplx tail = std::exp(pi * I * eta * sp.Lambda[static_cast<std::size_t>(k)] * (before - after));
    DiagonalOp D{basis, Eigen::VectorXcd(static_cast<Eigen::Index>(basis.size()))};
    for (std::size_t b = 0; b < basis.size(); ++b) {
        cplx h0 = 0.0;
        for (int m = 0; m < k; ++m)
            h0 += sp.Lambda[static_cast<std::size_t>(m)] - 2.0 * static_cast<double>(basis[b][static_cast<std::size_t>(m)]);
        const cplx h1 = h0 + sp.Lambda[static_cast<std::size_t>(k)] - 2.0 * static_cast<double>(basis[b][static_cast<std::size_t>(k)]);
        const cplx x1 = lam - 2.0 * eta * h1, x0 = lam - 2.0 * eta * h0;
        D.d(static_cast<Eigen::Index>(b)) = std::exp(-pi * I * (x1 * x1 - x0 * x0) / (4.0 * eta)) * tail;
    }
    return D;
}

// D(mu, modulus, eta; z, a) = prod_j D_j(mu)^{z_j / modulus}, principal logarithm
inline DiagonalOp D_total(cplx mu, cplx modulus, cplx eta, const SystemParams& sp, const std::vector<WeightIndex>& basis)
{
    DiagonalOp out{basis, Eigen::VectorXcd::Ones(static_cast<Eigen::Index>(basis.size()))};
    for (int j = 0; j < sp.n(); ++j) {
        const auto Dj = D_op(j, mu, eta, sp, basis);
        const cplx e = sp.z[static_cast<std::size_t>(j)] / modulus;
        for (Eigen::Index b = 0; b < Dj.d.size(); ++b) {
            const cplx dj = Dj.d(b);
            if (std::abs(std::arg(dj)) > pi - 1e-6) out.branch_warning = true;
            if (e != 0.0) out.d(b) *= std::exp(e * std::log(dj));
        }
    }
    return out;
}

inline cplx F_scalar(int j, cplx modulus, cplx eta, const SystemParams& sp)
{
    cplx s = 0.0;
    for (int m = 0; m < sp.n(); ++m)
        if (m != j)
            s += (sp.z[static_cast<std::size_t>(m)] - sp.z[static_cast<std::size_t>(j)]) * sp.Lambda[static_cast<std::size_t>(m)] *
                 sp.Lambda[static_cast<std::size_t>(j)];
    return std::exp(2.0 * pi * I * eta * s / modulus);
}

inline DiagonalOp B_op(int j, cplx lam, cplx modulus, cplx eta, const SystemParams& sp, const std::vector<WeightIndex>& basis)
{
    DiagonalOp D = D_op(j, lam, eta, sp, basis);
    D.d *= F_scalar(j, modulus, eta, sp);
    return D;
}

} // namespace qkzb
