#pragma once

#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "qkzb/errors.hpp"

namespace qkzb {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

// e^{2 pi i x}
inline cplx e2pi(cplx x) { return std::exp(2.0 * pi * I * x); }

struct SeriesConfig {
    double eps = 1e-14;
    int max_terms = 100000;

    void validate() const
    {
        if (!(eps > 0.0) || max_terms < 1)
            throw Error(ErrorKind::InvalidArgument, "SeriesConfig needs eps > 0 and max_terms >= 1");
    }
};

class ModularParams {
public:
    ModularParams(cplx tau, cplx p, cplx eta) : tau_(tau), p_(p), eta_(eta)
    {
        if (!(tau.imag() > 0.0)) throw Error(ErrorKind::InvalidModulus, "Im tau must be positive");
        if (!(p.imag() > 0.0)) throw Error(ErrorKind::InvalidModulus, "Im p must be positive");
        if (!(eta.imag() < 0.0)) throw Error(ErrorKind::InvalidModulus, "Im eta must be negative");
    }

    cplx tau() const { return tau_; }
    cplx p() const { return p_; }
    cplx eta() const { return eta_; }
    cplx q() const { return e2pi(tau_); }
    cplx r() const { return e2pi(p_); }

    ModularParams swapped() const { return ModularParams(p_, tau_, eta_); }

private:
    cplx tau_, p_, eta_;
};

struct SystemParams {
    std::vector<cplx> Lambda;
    std::vector<cplx> z;
    int l = 0;

    int n() const { return static_cast<int>(Lambda.size()); }

    std::vector<cplx> a(cplx eta) const
    {
        std::vector<cplx> out(Lambda.size());
        for (std::size_t i = 0; i < Lambda.size(); ++i) out[i] = eta * Lambda[i];
        return out;
    }

    void validate() const
    {
        if (Lambda.empty()) throw Error(ErrorKind::InvalidArgument, "system needs n >= 1");
        if (Lambda.size() != z.size())
            throw Error(ErrorKind::InvalidArgument, "Lambda and z must have the same length");
        if (l < 0) throw Error(ErrorKind::InvalidArgument, "l must be nonnegative");
    }

    cplx total_weight() const
    {
        cplx s = 0.0;
        for (auto L : Lambda) s += L;
        return s - 2.0 * static_cast<double>(l);
    }
};

} // namespace qkzb
