#pragma once

#include <algorithm>
#include <set>
#include <string>

#include "qkzb/cli/config.hpp"

namespace qkzb::cli {

inline const std::vector<std::string>& profile_names()
{
    static const std::vector<std::string> p{"generic", "integral-weights", "residue-case"};
    return p;
}

// margin over the condition entries that matter for the profile; an empty filter means all of them
inline double profile_margin(const ConditionReport& rep, const std::set<std::string>& only)
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : rep.entries)
        if (!e.vacuous && (only.empty() || only.count(e.name))) m = std::min(m, e.min_distance);
    return m;
}

inline RunConfig generate_params(const std::string& profile, std::uint64_t seed, double margin = 1e-3)
{
    if (std::find(profile_names().begin(), profile_names().end(), profile) == profile_names().end())
        throw ConfigError("unknown profile '" + profile + "' (generic, integral-weights, residue-case)");
    SplitRng rng(seed);
    // residue-case points sit on 2a_1 - 2eta = 0 on purpose; only the entries the reduction needs are required clean
    const std::set<std::string> only =
        profile == "residue-case" ? std::set<std::string>{"im", "indep", "eta1", "a's1", "z's1"} : std::set<std::string>{};
    for (int attempt = 0; attempt < 10000; ++attempt) {
        RunConfig c;
        c.seed = seed;
        if (profile == "generic") {
            c.task = "";
            c.tau = {rng.uniform(-0.5, 0.5), rng.uniform(0.1, 0.3)};
            c.p = {rng.uniform(-0.5, 0.5), rng.uniform(0.1, 0.3)};
            const double h = std::max(c.tau.imag(), c.p.imag());
            c.eta = {rng.uniform(-0.1, 0.1), -rng.uniform(5 * h, 7 * h)};
            c.system.l = 1;
            c.system.Lambda.clear();
            c.system.z = {0.0, cplx(rng.uniform(0.2, 0.8), rng.uniform(-0.05, 0.05))};
            for (int k = 0; k < 2; ++k) {
                const cplx a(rng.uniform(-0.5, 0.5), rng.uniform(5 * h, 7 * h));
                c.system.Lambda.push_back(a / c.eta);
            }
        } else {
            c.task = profile == "residue-case" ? "residue" : "qkzb";
            c.tau = {rng.uniform(-0.2, 0.2), rng.uniform(0.5, 0.8)};
            c.p = {rng.uniform(-0.2, 0.2), rng.uniform(0.45, 0.75)};
            c.eta = {rng.uniform(-0.05, 0.05), -rng.uniform(0.03, 0.06)};
            c.system.Lambda = {1.0, 1.0};
            c.system.z = {0.0, cplx(rng.uniform(0.2, 0.4), rng.uniform(-0.03, 0.03))};
            c.system.l = profile == "residue-case" ? 2 : 1;
            c.options.B = {1};
        }
        c.lambda = {rng.uniform(-0.4, 0.4), rng.uniform(0.05, 0.25)};
        c.mu = {rng.uniform(-0.4, 0.4), rng.uniform(0.05, 0.25)};
        const auto rep = check_conditions(c.system, c.modular());
        bool ok = true;
        for (const auto& e : rep.entries)
            if (e.violated && (only.empty() || only.count(e.name))) ok = false;
        if (ok && profile_margin(rep, only) >= margin) return c;
    }
    throw Error(ErrorKind::PlanInfeasible, "generate_params: no clean parameter draw for profile " + profile);
}

} // namespace qkzb::cli
