#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qkzb/weight_functions.hpp"

namespace qkzb {

struct TensorBlock {
    std::vector<WeightIndex> rows;
    std::vector<WeightIndex> cols;
    Eigen::MatrixXcd m;
    int level = 0;
    double residual = 0.0;
    double condition = 1.0;
};

struct ModuleSpec {
    cplx Lambda;
    int truncation = 0;
    bool quotient = false;
};

struct RMatrixOptions {
    std::uint64_t seed = 1;
    int oversample = 2;
    double residual_tol = 1e-7;
    double cond_max = 1e10;
    int attempts = 3;
    bool use_cache = true;
};

class RMatrixCache {
public:
    bool find(const std::string& key, TensorBlock& out) const
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = map_.find(key);
        if (it == map_.end()) return false;
        out = it->second;
        return true;
    }
    void insert(const std::string& key, const TensorBlock& b)
    {
        std::lock_guard<std::mutex> lock(mu_);
        map_.emplace(key, b);
    }
    void clear()
    {
        std::lock_guard<std::mutex> lock(mu_);
        map_.clear();
    }
    std::size_t size() const
    {
        std::lock_guard<std::mutex> lock(mu_);
        return map_.size();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, TensorBlock> map_;
};

inline RMatrixCache& rmatrix_cache()
{
    static RMatrixCache cache;
    return cache;
}

namespace detail {

inline void append_key(std::string& key, cplx x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.11e,%.11e;", x.real() == 0.0 ? 0.0 : x.real(), x.imag() == 0.0 ? 0.0 : x.imag());
    key += buf;
}

inline std::vector<WeightIndex> pair_indices(int level) { return enumerate_indices(2, level); }

} // namespace detail

// R^{kl}_{ij} stored as m(row (k,l), col (i,j)); z_1 = z12, z_2 = 0 internally.
inline TensorBlock rmatrix_block(cplx lam, cplx tau, cplx eta, cplx z12, cplx L1, cplx L2, int level,
                                 const RMatrixOptions& opt = {}, const SeriesConfig& cfg = {})
{
    if (level < 0) throw Error(ErrorKind::InvalidArgument, "rmatrix_block: negative level");
    std::string key;
    if (opt.use_cache) {
        for (cplx x : {lam, tau, eta, z12, L1, L2}) detail::append_key(key, x);
        key += std::to_string(level) + ";" + std::to_string(opt.seed) + ";" + std::to_string(opt.oversample) + ";";
        detail::append_key(key, cplx(cfg.eps, 0.0));
        TensorBlock hit;
        if (rmatrix_cache().find(key, hit)) return hit;
    }

    TensorBlock b;
    b.level = level;
    b.rows = b.cols = detail::pair_indices(level);
    const auto d = static_cast<Eigen::Index>(b.rows.size());
    if (level == 0) {
        b.m = Eigen::MatrixXcd::Identity(1, 1);
    } else {
        const std::vector<cplx> z{z12, 0.0}, a{eta * L1, eta * L2};
        const std::vector<cplx> zs{0.0, z12}, as{eta * L2, eta * L1};
        const int npts = opt.oversample * (level + 1);
        bool ok = false;
        for (int attempt = 0; attempt < opt.attempts && !ok; ++attempt) {
            auto samples = sample_points(level, npts, opt.seed + 7919ULL * static_cast<std::uint64_t>(attempt), {tau}, eta, z, a);
            Eigen::MatrixXcd W(npts, d), Wt(npts, d);
            for (int s = 0; s < npts; ++s) {
                for (Eigen::Index c = 0; c < d; ++c) {
                    const auto& ij = b.rows[static_cast<std::size_t>(c)];
                    W(s, c) = weight_function(ij, samples[static_cast<std::size_t>(s)], lam, tau, eta, z, a, cfg);
                    Wt(s, c) = weight_function({ij[1], ij[0]}, samples[static_cast<std::size_t>(s)], lam, tau, eta, zs, as, cfg);
                }
            }
            b.condition = condition_number(W);
            if (!(b.condition <= opt.cond_max)) continue;
            Eigen::MatrixXcd X = W.colPivHouseholderQr().solve(Wt);
            b.residual = (W * X - Wt).norm() / Wt.norm();
            if (!(b.residual <= opt.residual_tol))
                throw Error(ErrorKind::ResidualTooLarge, "R-matrix collocation residual " + std::to_string(b.residual));
            b.m = X.transpose();
            ok = true;
        }
        if (!ok) throw Error(ErrorKind::IllConditioned, "R-matrix collocation condition " + std::to_string(b.condition));
    }
    if (opt.use_cache) rmatrix_cache().insert(key, b);
    return b;
}

inline TensorBlock rmatrix_block(cplx lam, const ModularParams& mp, cplx z12, cplx L1, cplx L2, int level,
                                 const RMatrixOptions& opt = {}, const SeriesConfig& cfg = {})
{
    return rmatrix_block(lam, mp.tau(), mp.eta(), z12, L1, L2, level, opt, cfg);
}

// R^{(21)}(lam; z, L_a, L_b): the block for (L_a, L_b) with both tensor slots exchanged
inline TensorBlock rmatrix_flipped(cplx lam, cplx tau, cplx eta, cplx z12, cplx La, cplx Lb, int level,
                                   const RMatrixOptions& opt = {}, const SeriesConfig& cfg = {})
{
    TensorBlock b = rmatrix_block(lam, tau, eta, z12, La, Lb, level, opt, cfg);
    TensorBlock f = b;
    const auto d = static_cast<Eigen::Index>(b.rows.size());
    // (i,j) sits at position level - i; its flip (j,i) sits at level - j = i, so both axes reverse
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) f.m(r, c) = b.m(d - 1 - r, d - 1 - c);
    return f;
}

inline TensorBlock restrict_block(const TensorBlock& b, const std::vector<bool>& keep_rows, const std::vector<bool>& keep_cols)
{
    TensorBlock out;
    out.level = b.level;
    out.residual = b.residual;
    out.condition = b.condition;
    std::vector<Eigen::Index> ri, ci;
    for (std::size_t i = 0; i < b.rows.size(); ++i)
        if (keep_rows[i]) {
            ri.push_back(static_cast<Eigen::Index>(i));
            out.rows.push_back(b.rows[i]);
        }
    for (std::size_t i = 0; i < b.cols.size(); ++i)
        if (keep_cols[i]) {
            ci.push_back(static_cast<Eigen::Index>(i));
            out.cols.push_back(b.cols[i]);
        }
    out.m.resize(static_cast<Eigen::Index>(ri.size()), static_cast<Eigen::Index>(ci.size()));
    for (std::size_t r = 0; r < ri.size(); ++r)
        for (std::size_t c = 0; c < ci.size(); ++c)
            out.m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = b.m(ri[r], ci[c]);
    return out;
}

inline std::vector<bool> admissible_mask(const std::vector<WeightIndex>& idx, const std::vector<cplx>& Lambda)
{
    std::vector<bool> mask(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) mask[i] = is_admissible(idx[i], Lambda);
    return mask;
}

inline TensorBlock rmatrix_on_quotient(const TensorBlock& block, const ModuleSpec& m1, const ModuleSpec& m2)
{
    auto k1 = nonneg_integer(m1.Lambda);
    auto k2 = nonneg_integer(m2.Lambda);
    if (!k1 || !k2) throw Error(ErrorKind::NotIntegral, "quotient needs nonnegative integral Lambda");
    const auto mask = admissible_mask(block.rows, {m1.Lambda, m2.Lambda});
    const auto cmask = admissible_mask(block.cols, {m1.Lambda, m2.Lambda});
    return restrict_block(block, mask, cmask);
}

// Largest coupling from a non-admissible column into an admissible row, relative to |R|_F.
// Zero exactly when the non-admissible span is invariant.
inline double quotient_leak(const TensorBlock& block, const std::vector<cplx>& Lambda)
{
    const auto rmask = admissible_mask(block.rows, Lambda);
    const auto cmask = admissible_mask(block.cols, Lambda);
    double worst = 0.0;
    for (std::size_t r = 0; r < rmask.size(); ++r)
        for (std::size_t c = 0; c < cmask.size(); ++c)
            if (rmask[r] && !cmask[c])
                worst = std::max(worst, std::abs(block.m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
    const double nrm = block.m.norm();
    return nrm == 0.0 ? 0.0 : worst / nrm;
}

inline double zero_weight_residual(const TensorBlock& block)
{
    double s = 0.0;
    for (std::size_t r = 0; r < block.rows.size(); ++r)
        for (std::size_t c = 0; c < block.cols.size(); ++c)
            if (level_of(block.rows[r]) != level_of(block.cols[c]))
                s += std::abs(block.m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    return s;
}

// R^{(k,m)}(lam - 2 eta sum_{s in shifts} h^{(s)}; z) on an n-fold weight basis.
// Each column is a joint eigenvector of every h^{(s)}, so the shift is resolved column by column.
inline Eigen::MatrixXcd embed_pair(int k, int m, const std::vector<int>& shifts, cplx lam, cplx z, cplx tau, cplx eta,
                                   const std::vector<cplx>& Lambda, const std::vector<WeightIndex>& basis,
                                   const RMatrixOptions& opt = {}, const SeriesConfig& cfg = {})
{
    std::map<WeightIndex, Eigen::Index> pos;
    for (std::size_t i = 0; i < basis.size(); ++i) pos[basis[i]] = static_cast<Eigen::Index>(i);
    const auto d = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(d, d);
    for (Eigen::Index col = 0; col < d; ++col) {
        const auto& v = basis[static_cast<std::size_t>(col)];
        cplx h = 0.0;
        for (int s : shifts) h += Lambda[static_cast<std::size_t>(s)] - 2.0 * static_cast<double>(v[static_cast<std::size_t>(s)]);
        const int vk = v[static_cast<std::size_t>(k)], vm = v[static_cast<std::size_t>(m)];
        const int level = vk + vm;
        const TensorBlock R = rmatrix_block(lam - 2.0 * eta * h, tau, eta, z, Lambda[static_cast<std::size_t>(k)],
                                            Lambda[static_cast<std::size_t>(m)], level, opt, cfg);
        const Eigen::Index c = level - vk;
        for (Eigen::Index r = 0; r <= level; ++r) {
            WeightIndex w = v;
            w[static_cast<std::size_t>(k)] = static_cast<int>(level - r);
            w[static_cast<std::size_t>(m)] = static_cast<int>(r);
            auto it = pos.find(w);
            if (it != pos.end()) M(it->second, col) += R.m(r, c);
        }
    }
    return M;
}

inline double unitarity_residual(cplx lam, const ModularParams& mp, cplx z, cplx L1, cplx L2, int level,
                                 const RMatrixOptions& opt = {}, const SeriesConfig& cfg = {})
{
    const TensorBlock R12 = rmatrix_block(lam, mp.tau(), mp.eta(), z, L1, L2, level, opt, cfg);
    const TensorBlock R21 = rmatrix_flipped(lam, mp.tau(), mp.eta(), -z, L2, L1, level, opt, cfg);
    const auto d = R12.m.rows();
    return (R12.m * R21.m - Eigen::MatrixXcd::Identity(d, d)).norm() / std::sqrt(static_cast<double>(d));
}

// R12(lam - 2 eta h3) R13(lam) R23(lam - 2 eta h1) vs R23(lam) R13(lam - 2 eta h2) R12(lam)
inline double dybe_residual(cplx lam, const ModularParams& mp, cplx z, cplx w, cplx L1, cplx L2, cplx L3, int level,
                            bool quotient = false, const RMatrixOptions& opt = {}, const SeriesConfig& cfg = {})
{
    const std::vector<cplx> Ls{L1, L2, L3};
    auto basis = enumerate_indices(3, level);
    if (quotient) {
        for (auto L : Ls)
            if (!nonneg_integer(L)) throw Error(ErrorKind::NotIntegral, "quotient DYBE needs integral weights");
        std::vector<WeightIndex> adm;
        for (auto& v : basis)
            if (is_admissible(v, Ls)) adm.push_back(v);
        basis = adm;
        if (basis.empty()) return 0.0;
    }
    const cplx tau = mp.tau(), eta = mp.eta();
    // on the quotient the admissible span is a quotient of an invariant flag, so restricting each factor is exact
    auto E = [&](int k, int m, std::vector<int> sh, cplx zz) {
        if (!quotient) return embed_pair(k, m, sh, lam, zz, tau, eta, Ls, basis, opt, cfg);
        auto full = enumerate_indices(3, level);
        Eigen::MatrixXcd F = embed_pair(k, m, sh, lam, zz, tau, eta, Ls, full, opt, cfg);
        std::vector<Eigen::Index> keep;
        for (std::size_t i = 0; i < full.size(); ++i)
            if (is_admissible(full[i], Ls)) keep.push_back(static_cast<Eigen::Index>(i));
        Eigen::MatrixXcd M(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t r = 0; r < keep.size(); ++r)
            for (std::size_t c = 0; c < keep.size(); ++c)
                M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = F(keep[r], keep[c]);
        return M;
    };
    const Eigen::MatrixXcd lhs = E(0, 1, {2}, z) * E(0, 2, {}, z + w) * E(1, 2, {0}, w);
    const Eigen::MatrixXcd rhs = E(1, 2, {}, w) * E(0, 2, {1}, z + w) * E(0, 1, {}, z);
    const double nrm = lhs.norm();
    return nrm == 0.0 ? 0.0 : (lhs - rhs).norm() / nrm;
}

} // namespace qkzb
