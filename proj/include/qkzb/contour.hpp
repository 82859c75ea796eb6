#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "qkzb/params.hpp"

namespace qkzb {

// Exact coincidence of an upper and a lower pole candidate: no contour separates them.
class PinchDetected : public Error {
public:
    explicit PinchDetected(const std::string& what) : Error(ErrorKind::PlanInfeasible, what) {}
};

struct ContourSettings {
    int N = 1;
    int M = 64;
    int K = 48;
    std::vector<double> offsets; // fixed line heights, index 0 = innermost variable; empty = planned
    double centre = 0.0;
    double window = 1.0;
    double radius_fraction = 0.15;
    double radius_cap = 0.1;
    double coincidence_tol = 1e-9;
    double min_clearance = 1e-6;
};

struct PoleCandidate {
    cplx pos;
    bool upper;
    bool edge; // built from the outermost lattice shell
};

// Fixed pole families of one integrand: upper U_k + R, lower Lo_k - R, plus the lattice used for t_i - t_j families.
struct PoleFamilies {
    std::vector<PoleCandidate> base;
    std::vector<std::pair<cplx, bool>> lattice; // R and whether it is on the outer shell
    cplx eta;
};

// Integrates f over l variables, innermost (index 0) first. Each variable runs over a horizontal
// line of period N; candidates of the (partially integrated) integrand that sit on the wrong side of
// the line are corrected by residue circles. For variable j the candidates are the fixed families
// shifted by chains of length m <= j (U - 2 eta m, Lo + 2 eta m) and, for each outer variable y,
// y - 2 eta (m+1) + R (upper) and y + 2 eta (m+1) - R (lower).
template <class F>
class NestedContour {
public:
    NestedContour(F f, int l, PoleFamilies poles, ContourSettings s) : f_(std::move(f)), l_(l), poles_(std::move(poles)), s_(std::move(s))
    {
        fixed_.resize(static_cast<std::size_t>(l_));
        for (int j = 0; j < l_; ++j)
            for (int m = 0; m <= j; ++m)
                for (const auto& c : poles_.base) {
                    const cplx shift = (c.upper ? -2.0 : 2.0) * static_cast<double>(m) * poles_.eta;
                    fixed_[static_cast<std::size_t>(j)].push_back({reduce(c.pos + shift), c.upper, c.edge});
                }
    }

    cplx integrate()
    {
        std::vector<cplx> t(static_cast<std::size_t>(l_));
        heights_.assign(static_cast<std::size_t>(l_), std::numeric_limits<double>::quiet_NaN());
        top_level_ = true;
        return level(l_ - 1, t);
    }

    // line heights chosen for the outermost pass, outermost last
    const std::vector<double>& outer_heights() const { return heights_; }

private:
    cplx reduce(cplx x) const
    {
        const double N = s_.N;
        double re = std::fmod(x.real(), N);
        if (re < 0) re += N;
        return {re, x.imag()};
    }

    double pdist(cplx x, cplx y) const
    {
        const double N = s_.N;
        double best = std::abs(x - y);
        best = std::min(best, std::abs(x - y + N));
        best = std::min(best, std::abs(x - y - N));
        return best;
    }

    std::vector<PoleCandidate> candidates(int j, const std::vector<cplx>& t) const
    {
        std::vector<PoleCandidate> c = fixed_[static_cast<std::size_t>(j)];
        for (int k = j + 1; k < l_; ++k) {
            const cplx y = t[static_cast<std::size_t>(k)];
            for (int m = 0; m <= j; ++m) {
                const cplx sh = 2.0 * static_cast<double>(m + 1) * poles_.eta;
                for (const auto& [R, edge] : poles_.lattice) {
                    c.push_back({reduce(y - sh + R), true, edge});
                    c.push_back({reduce(y + sh - R), false, edge});
                }
            }
        }
        return c;
    }

    double plan_height(const std::vector<PoleCandidate>& c) const
    {
        std::vector<double> h;
        h.reserve(c.size());
        for (const auto& x : c) h.push_back(x.pos.imag());
        std::sort(h.begin(), h.end());
        const double lo = s_.centre - s_.window, hi = s_.centre + s_.window;
        auto clearance = [&](double y) {
            auto it = std::lower_bound(h.begin(), h.end(), y);
            double d = std::numeric_limits<double>::infinity();
            if (it != h.end()) d = std::min(d, *it - y);
            if (it != h.begin()) d = std::min(d, y - *(it - 1));
            return d;
        };
        std::vector<double> trial{lo, hi};
        for (std::size_t i = 0; i + 1 < h.size(); ++i) {
            const double mid = 0.5 * (h[i] + h[i + 1]);
            if (mid > lo && mid < hi) trial.push_back(mid);
        }
        double best = lo, bestd = -1.0;
        for (double y : trial) {
            const double d = clearance(y);
            if (d > bestd) {
                bestd = d;
                best = y;
            }
        }
        if (bestd < s_.min_clearance) throw Error(ErrorKind::PlanInfeasible, "no line height clears the pole candidates");
        return best;
    }

    cplx eval(int j, std::vector<cplx>& t)
    {
        if (j < 0) return f_(t);
        return level(j, t);
    }

    cplx level(int j, std::vector<cplx>& t)
    {
        const bool top = top_level_;
        top_level_ = false;
        const auto cands = candidates(j, t);
        const double c = s_.offsets.empty() ? plan_height(cands) : s_.offsets.at(static_cast<std::size_t>(j));
        if (top) heights_[static_cast<std::size_t>(j)] = c;

        const double N = s_.N;
        const double h = N / s_.M;
        cplx sum = 0.0;
        for (int i = 0; i < s_.M; ++i) {
            t[static_cast<std::size_t>(j)] = cplx(i * h, c);
            sum += eval(j - 1, t);
        }
        sum *= h;

        std::vector<cplx> done_up, done_low;
        for (std::size_t a = 0; a < cands.size(); ++a) {
            const auto& cand = cands[a];
            const bool misplaced = cand.upper ? cand.pos.imag() < c : cand.pos.imag() > c;
            if (!misplaced) continue;
            if (cand.edge) throw Error(ErrorKind::PlanInfeasible, "lattice range too small for the chosen line height");
            auto& done = cand.upper ? done_up : done_low;
            if (std::any_of(done.begin(), done.end(), [&](cplx x) { return pdist(x, cand.pos) < s_.coincidence_tol; })) continue;
            done.push_back(cand.pos);
            double dmin = std::numeric_limits<double>::infinity();
            for (const auto& other : cands) {
                const double d = pdist(other.pos, cand.pos);
                if (d < s_.coincidence_tol) {
                    if (other.upper != cand.upper) throw PinchDetected("upper and lower pole candidates coincide");
                    continue;
                }
                dmin = std::min(dmin, d);
            }
            const double rho = std::min(s_.radius_fraction * dmin, s_.radius_cap);
            cplx acc = 0.0;
            for (int k = 0; k < s_.K; ++k) {
                const cplx e = std::exp(2.0 * pi * I * (static_cast<double>(k) / s_.K));
                t[static_cast<std::size_t>(j)] = cand.pos + rho * e;
                acc += eval(j - 1, t) * rho * e;
            }
            acc *= 2.0 * pi * I / static_cast<double>(s_.K);
            sum += cand.upper ? acc : -acc;
        }
        return sum;
    }

    F f_;
    int l_;
    PoleFamilies poles_;
    ContourSettings s_;
    std::vector<std::vector<PoleCandidate>> fixed_;
    std::vector<double> heights_;
    bool top_level_ = true;
};

} // namespace qkzb
