#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qkzb/elliptic_core.hpp"

namespace qkzb {

using WeightIndex = std::vector<int>;
using Word = std::vector<int>;

inline std::string to_string(const WeightIndex& w)
{
    std::string s = "(";
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s + ")";
}

inline int level_of(const WeightIndex& w) { return std::accumulate(w.begin(), w.end(), 0); }

// compositions of l into n parts, (l,0,..,0) first
inline std::vector<WeightIndex> enumerate_indices(int n, int l)
{
    if (n < 1 || l < 0) throw Error(ErrorKind::InvalidArgument, "enumerate_indices needs n >= 1, l >= 0");
    std::vector<WeightIndex> out;
    WeightIndex cur(n, 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
        if (pos == n - 1) {
            cur[pos] = left;
            out.push_back(cur);
            return;
        }
        for (int v = left; v >= 0; --v) {
            cur[pos] = v;
            self(self, pos + 1, left - v);
        }
    };
    rec(rec, 0, l);
    return out;
}

inline std::optional<int> nonneg_integer(cplx L, double tol = 1e-9)
{
    const double r = std::round(L.real());
    if (std::abs(L - r) < tol && r >= 0.0) return static_cast<int>(r);
    return std::nullopt;
}

// positions are 0-based
struct AdmissibilitySet {
    std::vector<int> bad;
    bool empty() const { return bad.empty(); }
    bool contains(int i) const { return std::binary_search(bad.begin(), bad.end(), i); }
    bool operator==(const AdmissibilitySet&) const = default;
};

inline AdmissibilitySet admissibility(const WeightIndex& idx, const std::vector<cplx>& Lambda, double int_tol = 1e-9)
{
    AdmissibilitySet s;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto k = nonneg_integer(Lambda.at(i), int_tol);
        if (k && idx[i] > *k) s.bad.push_back(static_cast<int>(i));
    }
    return s;
}

inline bool is_admissible(const WeightIndex& idx, const std::vector<cplx>& Lambda, double int_tol = 1e-9)
{
    return admissibility(idx, Lambda, int_tol).empty();
}

// Word w = (i_1, i_2, ...) of simple transpositions s_i = (i, i+1), 0-based.
// Bubble-sorting the arrangement back to the identity gives a reduced word.
inline Word reduced_word(const std::vector<int>& perm)
{
    std::vector<int> arr = perm;
    Word w;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i + 1 < arr.size(); ++i) {
            if (arr[i] > arr[i + 1]) {
                std::swap(arr[i], arr[i + 1]);
                w.push_back(static_cast<int>(i));
                changed = true;
            }
        }
    }
    std::reverse(w.begin(), w.end());
    return w;
}

inline cplx theta_ratio(cplx num, cplx den, cplx tau, const SeriesConfig& cfg)
{
    const cplx d = theta(den, tau, cfg);
    if (d == 0.0) throw Error(ErrorKind::PoleHit, "theta denominator vanishes");
    return theta(num, tau, cfg) / d;
}

// [f]_w(t): apply the simple-transposition rule letter by letter
template <class F>
cplx apply_word(F&& f, const Word& w, std::vector<cplx> t, cplx tau, cplx eta, const SeriesConfig& cfg = {})
{
    cplx fac = 1.0;
    for (int i : w) {
        const cplx u = t[i] - t[i + 1];
        fac *= theta_ratio(u - 2.0 * eta, u + 2.0 * eta, tau, cfg);
        std::swap(t[i], t[i + 1]);
    }
    return fac * f(t);
}

template <class F>
auto elliptic_action_term(F f, const std::vector<int>& sigma, cplx tau, cplx eta, const SeriesConfig& cfg = {})
{
    Word w = reduced_word(sigma);
    return [f = std::move(f), w = std::move(w), tau, eta, cfg](const std::vector<cplx>& t) {
        return apply_word(f, w, t, tau, eta, cfg);
    };
}

template <class F>
cplx symmetrize(F&& f, const std::vector<cplx>& t, cplx tau, cplx eta, const SeriesConfig& cfg = {})
{
    std::vector<int> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    cplx tot = 0.0;
    do {
        tot += apply_word(f, reduced_word(perm), t, tau, eta, cfg);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return tot;
}

inline cplx one_point_weight(const std::vector<cplx>& t, cplx lam, cplx tau, cplx eta, cplx z, cplx a,
                             const SeriesConfig& cfg = {})
{
    const std::size_t l = t.size();
    cplx v = 1.0;
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = i + 1; j < l; ++j) v *= theta_ratio(t[i] - t[j], t[i] - t[j] + 2.0 * eta, tau, cfg);
    const cplx shift = lam + 2.0 * eta * static_cast<double>(l);
    for (std::size_t j = 0; j < l; ++j) v *= theta_ratio(t[j] - z - a + shift, t[j] - z - a, tau, cfg);
    return v;
}

inline double factorial(int k)
{
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// The bracketed (unsymmetrized) product for index idx; variables of group i are t[l^{i-1}..l^i).
inline cplx weight_product(const WeightIndex& idx, const std::vector<cplx>& t, cplx lam, cplx tau, cplx eta,
                           const std::vector<cplx>& z, const std::vector<cplx>& a, const SeriesConfig& cfg = {})
{
    const std::size_t n = idx.size();
    cplx v = 1.0;
    cplx lam_i = lam;
    std::size_t start = 0;
    std::vector<cplx> grp;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t stop = start + static_cast<std::size_t>(idx[i]);
        grp.assign(t.begin() + static_cast<std::ptrdiff_t>(start), t.begin() + static_cast<std::ptrdiff_t>(stop));
        v *= one_point_weight(grp, lam_i, tau, eta, z[i], a[i], cfg) / factorial(idx[i]);
        for (std::size_t m = 0; m < i; ++m)
            for (std::size_t s = start; s < stop; ++s) v *= theta_ratio(t[s] - z[m] + a[m], t[s] - z[m] - a[m], tau, cfg);
        const cplx mu_i = a[i] / eta - 2.0 * static_cast<double>(idx[i]);
        lam_i -= 2.0 * eta * mu_i;
        start = stop;
    }
    return v;
}

inline cplx weight_function(const WeightIndex& idx, const std::vector<cplx>& t, cplx lam, cplx tau, cplx eta,
                            const std::vector<cplx>& z, const std::vector<cplx>& a, const SeriesConfig& cfg = {})
{
    if (static_cast<int>(t.size()) != level_of(idx))
        throw Error(ErrorKind::InvalidArgument, "weight_function: |t| must equal the index level");
    if (t.empty()) return 1.0;
    auto f = [&](const std::vector<cplx>& tt) { return weight_product(idx, tt, lam, tau, eta, z, a, cfg); };
    std::vector<int> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    cplx tot = 0.0;
    do {
        try {
            tot += apply_word(f, reduced_word(perm), t, tau, eta, cfg);
        } catch (const Error& e) {
            std::string ps;
            for (int x : perm) ps += std::to_string(x + 1);
            throw Error(e.kind(), "weight " + to_string(idx) + ", permutation term " + ps + ": " + e.what());
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return tot;
}

inline cplx weight_function(const WeightIndex& idx, const std::vector<cplx>& t, cplx lam, const SystemParams& sp,
                            const ModularParams& mp, const SeriesConfig& cfg = {})
{
    return weight_function(idx, t, lam, mp.tau(), mp.eta(), sp.z, sp.a(mp.eta()), cfg);
}

// Portable uniform doubles in [0,1): the same seed gives the same stream everywhere.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

// distance from x to Z + tau Z
inline double distance_to_lattice(cplx x, cplx tau)
{
    const double s0 = std::round(x.imag() / tau.imag());
    double best = std::numeric_limits<double>::infinity();
    for (double s = s0 - 1; s <= s0 + 1; s += 1.0) {
        const cplx y = x - s * tau;
        best = std::min(best, std::abs(y - std::round(y.real())));
    }
    return best;
}

inline bool near_weight_pole(const std::vector<cplx>& t, cplx tau, cplx eta, const std::vector<cplx>& z,
                             const std::vector<cplx>& a, double threshold)
{
    for (std::size_t s = 0; s < t.size(); ++s) {
        for (std::size_t m = 0; m < z.size(); ++m)
            if (distance_to_lattice(t[s] - z[m] - a[m], tau) < threshold) return true;
        for (std::size_t j = 0; j < t.size(); ++j) {
            if (j == s) continue;
            if (distance_to_lattice(t[s] - t[j] + 2.0 * eta, tau) < threshold) return true;
        }
    }
    return false;
}

// Points in [0,1)^l + 0.1 i, rejected within `threshold` of a weight-function pole for every listed modulus.
inline std::vector<std::vector<cplx>> sample_points(int l, int count, std::uint64_t seed, const std::vector<cplx>& moduli,
                                                    cplx eta, const std::vector<cplx>& z, const std::vector<cplx>& a,
                                                    double threshold = 1e-3)
{
    SplitRng rng(seed);
    std::vector<std::vector<cplx>> out;
    int guard = 0;
    while (static_cast<int>(out.size()) < count) {
        if (++guard > 1000 * (count + 1)) throw Error(ErrorKind::IllConditioned, "could not draw pole-free sample points");
        std::vector<cplx> t(static_cast<std::size_t>(l));
        for (auto& x : t) x = cplx(rng.uniform(), 0.1);
        bool bad = false;
        for (auto mod : moduli) bad = bad || near_weight_pole(t, mod, eta, z, a, threshold);
        if (!bad) out.push_back(std::move(t));
    }
    return out;
}

inline Eigen::MatrixXcd weight_basis_matrix(const std::vector<WeightIndex>& indices,
                                            const std::vector<std::vector<cplx>>& samples, cplx lam, cplx tau, cplx eta,
                                            const std::vector<cplx>& z, const std::vector<cplx>& a,
                                            const SeriesConfig& cfg = {})
{
    Eigen::MatrixXcd W(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t s = 0; s < samples.size(); ++s)
        for (std::size_t c = 0; c < indices.size(); ++c)
            W(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) =
                weight_function(indices[c], samples[s], lam, tau, eta, z, a, cfg);
    return W;
}

inline Eigen::MatrixXcd weight_basis_matrix(const std::vector<WeightIndex>& indices,
                                            const std::vector<std::vector<cplx>>& samples, cplx lam,
                                            const SystemParams& sp, const ModularParams& mp, const SeriesConfig& cfg = {})
{
    return weight_basis_matrix(indices, samples, lam, mp.tau(), mp.eta(), sp.z, sp.a(mp.eta()), cfg);
}

inline double condition_number(const Eigen::MatrixXcd& M)
{
    if (M.size() == 0) return 1.0;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    const auto& sv = svd.singularValues();
    const double lo = sv(sv.size() - 1);
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / lo;
}

inline int numerical_rank(const Eigen::MatrixXcd& M, double rtol = 1e-10)
{
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    const auto& sv = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rtol * sv(0)) ++r;
    return r;
}

} // namespace qkzb
