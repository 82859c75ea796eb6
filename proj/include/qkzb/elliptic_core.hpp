#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "qkzb/errors.hpp"
#include "qkzb/params.hpp"

namespace qkzb {

namespace detail {

template <class Weight>
cplx theta_series(cplx t, cplx tau, const SeriesConfig& cfg, Weight weight)
{
    if (!(tau.imag() > 0.0)) throw Error(ErrorKind::InvalidModulus, "theta needs Im tau > 0");
    // terms peak near j = -Im t / Im tau; the window must get past it before the tail test means anything
    const double peak = std::abs(t.imag() / tau.imag()) + 1.0;
    cplx s = 0.0;
    double big = 0.0;
    for (int J = 1;; ++J) {
        if (J > cfg.max_terms) throw Error(ErrorKind::NonConvergent, "theta series hit max_terms");
        const double h1 = -J + 0.5;
        const double h2 = J - 0.5;
        const cplx a = weight(h1) * std::exp(pi * I * (h1 * h1 * tau + 2.0 * h1 * (t + 0.5)));
        const cplx b = weight(h2) * std::exp(pi * I * (h2 * h2 * tau + 2.0 * h2 * (t + 0.5)));
        s += a + b;
        const double m = std::abs(a) + std::abs(b);
        big = std::max(big, m);
        if (J > peak && m <= cfg.eps * big) return -s;
    }
}

// Factors of the double product split into the part bounded away from zero and the
// vanishing ones (kept as their t-derivatives), so zeros and poles can be resolved by limits.
struct PhaseParts {
    cplx regular = 1.0;
    cplx logd = 0.0;
    std::vector<cplx> zero_num;
    std::vector<cplx> zero_den;
};

inline PhaseParts phase_parts(cplx t, cplx tau, cplx p, cplx a, const SeriesConfig& cfg, double zero_tol)
{
    PhaseParts out;
    const cplx e1 = e2pi(t - a), e2 = e2pi(p + tau - t - a), e3 = e2pi(t + a), e4 = e2pi(p + tau - t + a);
    auto visit = [&](cplx x, double dsign, bool num) {
        const cplx f = 1.0 - x;
        const cplx df = -2.0 * pi * I * dsign * x;
        if (std::abs(f) < zero_tol) {
            (num ? out.zero_num : out.zero_den).push_back(df);
        } else if (num) {
            out.regular *= f;
            out.logd += df / f;
        } else {
            out.regular /= f;
            out.logd -= df / f;
        }
        return std::abs(x);
    };
    for (int j = 0;; ++j) {
        if (j > cfg.max_terms) throw Error(ErrorKind::NonConvergent, "phase product hit max_terms in r");
        double first = 0.0;
        for (int k = 0;; ++k) {
            if (k > cfg.max_terms) throw Error(ErrorKind::NonConvergent, "phase product hit max_terms in q");
            const cplx c = e2pi(static_cast<double>(j) * p + static_cast<double>(k) * tau);
            const double m = std::max({visit(c * e1, 1.0, true), visit(c * e2, -1.0, true),
                                       visit(c * e3, 1.0, false), visit(c * e4, -1.0, false)});
            if (k == 0) first = m;
            if (m < cfg.eps) break;
        }
        if (first < cfg.eps) break;
    }
    return out;
}

} // namespace detail

inline cplx theta(cplx t, cplx tau, const SeriesConfig& cfg = {})
{
    return detail::theta_series(t, tau, cfg, [](double) { return 1.0; });
}

inline cplx theta_deriv(cplx t, cplx tau, const SeriesConfig& cfg = {})
{
    return detail::theta_series(t, tau, cfg, [](double h) { return 2.0 * pi * I * h; });
}

inline cplx phase1(cplx t, const ModularParams& mp, cplx a, const SeriesConfig& cfg = {})
{
    auto parts = detail::phase_parts(t, mp.tau(), mp.p(), a, cfg, cfg.eps);
    if (!parts.zero_den.empty()) throw Error(ErrorKind::PoleHit, "phase1 denominator factor vanishes");
    if (!parts.zero_num.empty()) return 0.0;
    return parts.regular;
}

inline cplx phase1_deriv(cplx t, const ModularParams& mp, cplx a, const SeriesConfig& cfg = {})
{
    auto parts = detail::phase_parts(t, mp.tau(), mp.p(), a, cfg, cfg.eps);
    if (!parts.zero_den.empty()) throw Error(ErrorKind::PoleHit, "phase1_deriv at a pole");
    switch (parts.zero_num.size()) {
    case 0: return parts.regular * parts.logd;
    case 1: return parts.regular * parts.zero_num[0];
    default: return 0.0;
    }
}

// lim_{t -> a} Omega(t,a) Omega(-t,a): the simple zero of the first factor cancels the simple pole of the second.
inline cplx phase_pair_limit(cplx a, const ModularParams& mp, const SeriesConfig& cfg = {})
{
    if (std::abs(a) == 0.0) return 1.0;
    const double ztol = 1e-10;
    auto zero = detail::phase_parts(a, mp.tau(), mp.p(), a, cfg, ztol);
    auto pole = detail::phase_parts(-a, mp.tau(), mp.p(), a, cfg, ztol);
    if (zero.zero_num.size() != 1 || !zero.zero_den.empty() || pole.zero_den.size() != 1 || !pole.zero_num.empty())
        throw Error(ErrorKind::PoleHit, "phase pair limit is not a simple zero against a simple pole");
    // pole factor is a function of s = -t, so its t-derivative flips sign
    return zero.regular * pole.regular * zero.zero_num[0] / (-pole.zero_den[0]);
}

inline cplx phase_multi(const std::vector<cplx>& t, const SystemParams& sp, const ModularParams& mp,
                        const SeriesConfig& cfg = {})
{
    const auto a = sp.a(mp.eta());
    cplx v = 1.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
        for (int m = 0; m < sp.n(); ++m) {
            try {
                v *= phase1(t[j] - sp.z[m], mp, a[m], cfg);
            } catch (const Error& e) {
                throw Error(e.kind(), "factor Omega(t_" + std::to_string(j + 1) + " - z_" + std::to_string(m + 1) +
                                          ", a_" + std::to_string(m + 1) + "): " + e.what());
            }
        }
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            try {
                v *= phase1(t[i] - t[j], mp, -2.0 * mp.eta(), cfg);
            } catch (const Error& e) {
                throw Error(e.kind(), "factor Omega(t_" + std::to_string(i + 1) + " - t_" + std::to_string(j + 1) +
                                          ", -2 eta): " + e.what());
            }
        }
    }
    return v;
}

struct ConditionEntry {
    std::string name;
    std::string description;
    bool vacuous = false;
    double min_distance = std::numeric_limits<double>::infinity();
    bool violated = false;
};

struct ConditionReport {
    std::vector<ConditionEntry> entries;

    bool clean() const
    {
        return std::none_of(entries.begin(), entries.end(), [](const ConditionEntry& e) { return e.violated; });
    }
    double margin() const
    {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& e : entries)
            if (!e.vacuous) m = std::min(m, e.min_distance);
        return m;
    }
};

// distance from x to {m + s tau + s' p : |m|, |s|, |s'| <= bound}
inline double lattice_distance(cplx x, cplx tau, cplx p, int bound)
{
    double best = std::numeric_limits<double>::infinity();
    for (int s = -bound; s <= bound; ++s) {
        for (int s2 = -bound; s2 <= bound; ++s2) {
            const cplx y = x - static_cast<double>(s) * tau - static_cast<double>(s2) * p;
            const double m = std::clamp(std::round(y.real()), static_cast<double>(-bound), static_cast<double>(bound));
            best = std::min(best, std::abs(y - m));
        }
    }
    return best;
}

inline ConditionReport check_conditions(const SystemParams& sp, const ModularParams& mp, int bound = 6,
                                        double delta = 1e-6)
{
    const cplx tau = mp.tau(), p = mp.p(), eta = mp.eta();
    const auto a = sp.a(eta);
    const int n = sp.n();
    const int l = sp.l;
    ConditionReport rep;

    auto add = [&](std::string name, std::string desc, const std::vector<cplx>& qs) {
        ConditionEntry e{std::move(name), std::move(desc)};
        e.vacuous = qs.empty();
        for (auto x : qs) e.min_distance = std::min(e.min_distance, lattice_distance(x, tau, p, bound));
        e.violated = !e.vacuous && e.min_distance < delta;
        rep.entries.push_back(std::move(e));
    };

    {
        ConditionEntry e{"im", "Im tau > 0, Im p > 0, Im eta < 0"};
        e.min_distance = std::min({tau.imag(), p.imag(), -eta.imag()});
        e.violated = !(e.min_distance > 0.0);
        rep.entries.push_back(e);
    }
    {
        ConditionEntry e{"indep", "m + s tau + s' p != 0 for (s, s') != 0 (bounded search)"};
        for (int s = -bound; s <= bound; ++s)
            for (int s2 = -bound; s2 <= bound; ++s2) {
                if (s == 0 && s2 == 0) continue;
                const cplx y = static_cast<double>(s) * tau + static_cast<double>(s2) * p;
                e.min_distance = std::min(e.min_distance, std::abs(y - std::round(y.real())));
            }
        e.violated = e.min_distance < delta;
        rep.entries.push_back(e);
    }

    const int m = std::max(l, 1);
    std::vector<cplx> qs;
    for (int s = 1; s <= m; ++s) qs.push_back(2.0 * eta * static_cast<double>(s));
    add("eta", "2 eta s, s = 1..m", qs);

    qs.clear();
    for (int k = 0; k < n; ++k)
        for (int s = 1 - m; s <= m - 1; ++s) qs.push_back(2.0 * a[k] + 2.0 * static_cast<double>(s) * eta);
    add("a's", "2 a_k + 2 s eta, s = 1-m..m-1", qs);

    qs.clear();
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            if (j == k) continue;
            for (int s1 : {-1, 1})
                for (int s2 : {-1, 1})
                    for (int s = 1 - m; s <= m - 1; ++s)
                        qs.push_back(sp.z[j] + static_cast<double>(s1) * a[j] - sp.z[k] + static_cast<double>(s2) * a[k] +
                                     2.0 * static_cast<double>(s) * eta);
        }
    add("z's", "z_l +- a_l - z_k +- a_k + 2 s eta, l != k", qs);

    qs.clear();
    double smax = 2.0;
    for (auto L : sp.Lambda) smax = std::max(smax, L.real());
    for (int s = 1; s < smax && s <= l; ++s) qs.push_back(2.0 * eta * static_cast<double>(s));
    add("eta1", "2 eta s, 0 < s < max(2, Re Lambda), s <= l", qs);

    qs.clear();
    for (int k = 0; k < n; ++k)
        for (int s = 1; s < sp.Lambda[k].real() && s < l; ++s) qs.push_back(2.0 * a[k] - 2.0 * static_cast<double>(s) * eta);
    add("a's1", "2 a_k - 2 s eta, 0 < s < Re Lambda_k, s < l", qs);

    qs.clear();
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            if (j == k) continue;
            for (int sg : {-1, 1})
                for (int s = 1 - l; s <= l - 1; ++s)
                    qs.push_back(sp.z[k] - sp.z[j] + static_cast<double>(sg) * (a[k] + a[j]) + 2.0 * static_cast<double>(s) * eta);
        }
    add("z's1", "z_k - z_m +- (a_k + a_m) + 2 s eta, s = 1-l..l-1", qs);

    return rep;
}

} // namespace qkzb
