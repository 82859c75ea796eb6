#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qkzb/cli/config.hpp"

namespace qkzb::cli {

using Labels = std::vector<std::pair<std::string, std::string>>;

class Report {
public:
    void check(const std::string& name, double residual, double estimate, double tol, json detail = nullptr)
    {
        const bool ok = std::isfinite(residual) && residual <= tol;
        json c{{"name", name},
               {"residual", finite_or_null(residual)},
               {"estimate", finite_or_null(estimate)},
               {"tolerance", tol},
               {"within_estimate", std::isfinite(residual) && residual <= 10.0 * estimate},
               {"pass", ok}};
        if (!detail.is_null()) c["detail"] = std::move(detail);
        checks_.push_back(std::move(c));
        pass_ = pass_ && ok;
    }

    void value(const std::string& table, const Labels& labels, cplx v, double err)
    {
        auto& t = tables_[table];
        t.push_back({labels, v, err});
    }

    void error(const std::string& where, const Error& e)
    {
        errors_.push_back({{"where", where}, {"kind", kind_name(e.kind())}, {"message", e.what()}});
        pass_ = false;
    }

    void warn(const std::string& msg) { warnings_.push_back(msg); }
    void info(const std::string& key, json v) { info_[key] = std::move(v); }

    bool pass() const { return pass_; }

    // runs f, turning a numerical failure into a recorded error so the remaining checks still run
    template <class F>
    void guarded(const std::string& where, F&& f)
    {
        try {
            f();
        } catch (const Error& e) {
            error(where, e);
        }
    }

    json to_json() const
    {
        json vals = json::object();
        for (const auto& [name, rows] : tables_) {
            json arr = json::array();
            for (const auto& r : rows) {
                json lab = json::object();
                for (const auto& [k, v] : r.labels) lab[k] = v;
                arr.push_back({{"labels", lab}, {"value", cjson(r.v)}, {"err_estimate", r.err}});
            }
            vals[name] = arr;
        }
        return json{{"checks", checks_}, {"values", vals}, {"errors", errors_}, {"warnings", warnings_}, {"info", info_}, {"pass", pass_}};
    }

    void write_csv(const std::string& dir, const std::string& task) const
    {
        std::filesystem::create_directories(dir);
        for (const auto& [name, rows] : tables_) {
            std::ofstream out(std::filesystem::path(dir) / (task + "-" + name + ".csv"));
            if (!out) throw ConfigError("cannot write CSV into '" + dir + "'");
            if (rows.empty()) continue;
            for (const auto& [k, v] : rows.front().labels) out << k << ',';
            out << "re,im,err_estimate\n";
            for (const auto& r : rows) {
                for (const auto& [k, v] : r.labels) out << v << ',';
                out << num(r.v.real()) << ',' << num(r.v.imag()) << ',' << num(r.err) << '\n';
            }
        }
    }

private:
    struct Row {
        Labels labels;
        cplx v;
        double err;
    };

    static json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

    static std::string num(double x)
    {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return buf;
    }

    json checks_ = json::array();
    json errors_ = json::array();
    json warnings_ = json::array();
    json info_ = json::object();
    std::map<std::string, std::vector<Row>> tables_;
    bool pass_ = true;
};

namespace detail {

inline double rel(cplx a, cplx b)
{
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline std::vector<int> sites0(const RunConfig& c)
{
    std::vector<int> s;
    if (c.options.sites.empty())
        for (int j = 0; j < c.system.n(); ++j) s.push_back(j);
    else
        for (int j : c.options.sites) s.push_back(j - 1);
    return s;
}

inline KOptions kopts(const RunConfig& c)
{
    KOptions k;
    k.convention = c.options.convention == "verbatim" ? ShiftConvention::Verbatim : ShiftConvention::Alternative;
    k.ropt = c.rmatrix;
    k.cfg = c.series;
    return k;
}

inline TensorVariant variant(const RunConfig& c) { return c.options.variant == "full" ? TensorVariant::Full : TensorVariant::Admissible; }

inline void tensor_values(Report& R, const std::string& table, const SolutionTensor& T)
{
    for (std::size_t r = 0; r < T.rows.size(); ++r)
        for (std::size_t k = 0; k < T.cols.size(); ++k)
            R.value(table, {{"row", to_string(T.rows[r])}, {"col", to_string(T.cols[k])}},
                    T.u(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)),
                    T.err.size() ? T.err(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) : 0.0);
}

inline json conditions_json(const ConditionReport& rep)
{
    json arr = json::array();
    for (const auto& e : rep.entries)
        arr.push_back({{"name", e.name},
                       {"vacuous", e.vacuous},
                       {"min_distance", e.vacuous ? json(nullptr) : json(e.min_distance)},
                       {"violated", e.violated}});
    return {{"clean", rep.clean()}, {"entries", arr}};
}

inline std::pair<cplx, cplx> require_pair(const RunConfig& c)
{
    if (c.system.n() < 2) throw Error(ErrorKind::InvalidArgument, "this task needs at least two weights in system.Lambda");
    return {c.system.Lambda[0], c.system.Lambda[1]};
}

} // namespace detail

inline void task_theta(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    SeriesConfig fine = c.series;
    fine.eps = c.series.eps * 1e-2;
    SplitRng rng(c.seed);
    double per1 = 0, pert = 0, odd = 0, der = 0, ref = 0;
    for (int s = 0; s < c.samples; ++s) {
        const cplx t(rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3));
        for (auto [name, mod] : {std::pair{"tau", mp.tau()}, std::pair{"p", mp.p()}}) {
            const cplx th = theta(t, mod, c.series);
            const cplx tht = theta(t + mod, mod, c.series);
            const double scale = std::max({1.0, std::abs(th), std::abs(tht)});
            per1 = std::max(per1, std::abs(theta(t + 1.0, mod, c.series) + th) / scale);
            pert = std::max(pert, std::abs(tht + std::exp(-2.0 * pi * I * t - pi * I * mod) * th) / scale);
            odd = std::max(odd, std::abs(theta(-t, mod, c.series) + th) / scale);
            const double h = 1e-6;
            const cplx fd = (theta(t + h, mod, c.series) - theta(t - h, mod, c.series)) / (2.0 * h);
            const cplx d = theta_deriv(t, mod, c.series);
            der = std::max(der, std::abs(fd - d) / std::max(1.0, std::abs(d)));
            ref = std::max(ref, std::abs(theta(t, mod, fine) - th) / scale);
            R.value("theta", {{"sample", std::to_string(s)}, {"modulus", name}}, th, 0.0);
        }
    }
    R.check("theta_period_1", per1, 0.0, c.tolerances.theta);
    R.check("theta_period_modulus", pert, 0.0, c.tolerances.theta);
    R.check("theta_odd", odd, 0.0, c.tolerances.theta);
    R.check("theta_deriv_finite_difference", der, 0.0, c.tolerances.derivative);
    R.check("theta_truncation_refinement", ref, 0.0, c.tolerances.refinement);
}

inline void task_phase(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    const auto sw = mp.swapped();
    SplitRng rng(c.seed);
    double pshift = 0, tshift = 0, refl = 0, sym = 0, der = 0, r_to_a = 0;
    for (int s = 0; s < c.samples; ++s) {
        const cplx t(rng.uniform(-0.5, 0.5), rng.uniform(-0.15, 0.15));
        const cplx L(rng.uniform(0.3, 1.7), rng.uniform(-0.2, 0.2));
        const cplx a = mp.eta() * L;
        const cplx om = phase1(t, mp, a, c.series);
        const cplx shifted_p = phase1(t + mp.p(), mp, a, c.series);
        const cplx ratio_tau = theta(t + a, mp.tau(), c.series) / theta(t - a, mp.tau(), c.series);
        pshift = std::max(pshift, detail::rel(shifted_p, e2pi(a) * ratio_tau * om));
        r_to_a = std::max(r_to_a, detail::rel(shifted_p, e2pi(mp.p() * a) * ratio_tau * om));
        tshift = std::max(tshift, detail::rel(phase1(t + mp.tau(), mp, a, c.series),
                                              e2pi(a) * theta(t + a, mp.p(), c.series) / theta(t - a, mp.p(), c.series) * om));
        refl = std::max(refl, detail::rel(om * theta(t + a, mp.tau(), c.series) / theta(t - a, mp.tau(), c.series) *
                                              theta(t + a, mp.p(), c.series) / theta(t - a, mp.p(), c.series),
                                          phase1(-t, mp, a, c.series)));
        sym = std::max(sym, detail::rel(om, phase1(t, sw, a, c.series)));
        const double h = 1e-6;
        const cplx fd = (phase1(t + h, mp, a, c.series) - phase1(t - h, mp, a, c.series)) / (2.0 * h);
        const cplx d = phase1_deriv(t, mp, a, c.series);
        der = std::max(der, std::abs(fd - d) / std::max(std::abs(d), std::abs(om)));
        R.value("phase", {{"sample", std::to_string(s)}}, om, 0.0);
    }
    R.check("phase_shift_p", pshift, 0.0, c.tolerances.phase);
    // r^a = e^{2 pi i p a} in place of e^{2 pi i a} does not hold for this product; kept as a diagnostic
    R.info("phase_shift_p_with_r_to_the_a", r_to_a);
    R.check("phase_shift_tau", tshift, 0.0, c.tolerances.phase);
    R.check("phase_reflection", refl, 0.0, c.tolerances.phase);
    R.check("phase_modulus_symmetry", sym, 0.0, c.tolerances.phase);
    R.check("phase_deriv_finite_difference", der, 0.0, c.tolerances.derivative);
    R.guarded("phase_deriv_at_minus_2eta", [&] {
        const cplx v = phase1_deriv(-2.0 * mp.eta(), mp, -2.0 * mp.eta(), c.series);
        R.value("constants", {{"name", "phase_deriv(-2eta,-2eta)"}}, v, 0.0);
        R.check("phase_deriv_at_minus_2eta_nonzero", std::isfinite(std::abs(v)) && std::abs(v) > 0.0 ? 0.0 : 1.0, 0.0, 0.0);
    });
}

inline void task_weights(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    const cplx tau = mp.tau(), eta = mp.eta();
    SplitRng rng(c.seed);
    auto f = [&](const std::vector<cplx>& t) {
        return theta(t[0] - 0.7 * t[1] + 0.3 * t[2] + 0.21, tau, c.series) * theta(t[1] + 2.0 * t[2] + cplx(-0.13, 0.05), tau, c.series) /
               theta(t[0] + t[2] + 0.37, tau, c.series);
    };
    double act = 0, sym = 0;
    for (int s = 0; s < c.samples; ++s) {
        std::vector<cplx> t(3);
        for (auto& x : t) x = cplx(rng.uniform(), rng.uniform(-0.1, 0.1));
        std::vector<int> perm{0, 1, 2};
        do {
            const Word w1 = reduced_word(perm);
            Word w2;
            if (w1.size() == 3)
                w2 = w1 == Word{0, 1, 0} ? Word{1, 0, 1} : Word{0, 1, 0};
            else {
                w2 = {static_cast<int>(s % 2), static_cast<int>(s % 2)};
                w2.insert(w2.end(), w1.begin(), w1.end());
            }
            act = std::max(act, detail::rel(apply_word(f, w1, t, tau, eta, c.series), apply_word(f, w2, t, tau, eta, c.series)));
        } while (std::next_permutation(perm.begin(), perm.end()));
        auto S = [&](const std::vector<cplx>& x) { return symmetrize(f, x, tau, eta, c.series); };
        const cplx s0 = S(t);
        for (int i : {0, 1}) sym = std::max(sym, detail::rel(apply_word(S, Word{i}, t, tau, eta, c.series), s0));
    }
    R.check("elliptic_action_well_defined", act, 0.0, c.tolerances.action);
    R.check("symmetrized_invariance", sym, 0.0, c.tolerances.symmetry);

    double coin = 0;
    R.guarded("space_coincidence", [&] {
        RMatrixOptions opt = c.rmatrix;
        opt.use_cache = false;
        for (int s = 0; s < c.samples; ++s) {
            const cplx lam(rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2));
            const cplx z12(rng.uniform(0.1, 0.9), rng.uniform(-0.05, 0.05));
            const cplx L1(rng.uniform(0.3, 2.0), rng.uniform(-0.3, 0.3)), L2(rng.uniform(0.3, 2.0), rng.uniform(-0.3, 0.3));
            for (int level : {1, 2}) coin = std::max(coin, rmatrix_block(lam, mp, z12, L1, L2, level, opt, c.series).residual);
        }
        R.check("space_coincidence_collocation", coin, 0.0, c.tolerances.coincidence);
    });
    R.guarded("weight_basis_rank", [&] {
        const auto idx = enumerate_indices(c.system.n(), c.system.l);
        const auto pts = sample_points(c.system.l, 2 * static_cast<int>(idx.size()), c.seed, {tau}, eta, c.system.z, c.system.a(eta));
        const auto W = weight_basis_matrix(idx, pts, c.lambda, c.system, mp, c.series);
        const int rank = numerical_rank(W);
        R.check("weight_basis_full_rank", static_cast<double>(static_cast<int>(idx.size()) - rank), 0.0, 0.0,
                json{{"rank", rank}, {"size", idx.size()}, {"condition", condition_number(W)}});
    });
}

inline void task_rmatrix(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    const auto [L1, L2] = detail::require_pair(c);
    const int level = c.options.level;
    const auto B = rmatrix_block(c.lambda, mp, c.options.z12, L1, L2, level, c.rmatrix, c.series);
    for (std::size_t r = 0; r < B.rows.size(); ++r)
        for (std::size_t k = 0; k < B.cols.size(); ++k)
            R.value("R", {{"row", to_string(B.rows[r])}, {"col", to_string(B.cols[k])}},
                    B.m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)), B.residual);
    R.check("collocation_residual", B.residual, 0.0, c.tolerances.coincidence, json{{"condition", B.condition}});
    R.check("zero_weight", zero_weight_residual(B), 0.0, 0.0);
    R.guarded("resample", [&] {
        RMatrixOptions o = c.rmatrix;
        o.seed += 1;
        o.use_cache = false;
        const auto B2 = rmatrix_block(c.lambda, mp, c.options.z12, L1, L2, level, o, c.series);
        const double nrm = B.m.norm();
        R.check("resample_stability", nrm == 0.0 ? 0.0 : (B.m - B2.m).norm() / nrm, B.residual + B2.residual, c.tolerances.resample);
    });
    if (nonneg_integer(L1) && nonneg_integer(L2)) {
        R.check("quotient_leak", quotient_leak(B, {L1, L2}), B.residual, c.tolerances.leak);
        const auto Q = rmatrix_on_quotient(B, {L1, level, true}, {L2, level, true});
        for (std::size_t r = 0; r < Q.rows.size(); ++r)
            for (std::size_t k = 0; k < Q.cols.size(); ++k)
                R.value("R_quotient", {{"row", to_string(Q.rows[r])}, {"col", to_string(Q.cols[k])}},
                        Q.m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)), B.residual);
    }
}

inline void task_unitarity(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    const auto [L1, L2] = detail::require_pair(c);
    for (int level = 0; level <= c.options.level; ++level)
        R.guarded("unitarity_level_" + std::to_string(level), [&] {
            R.check("unitarity_level_" + std::to_string(level), unitarity_residual(c.lambda, mp, c.options.z12, L1, L2, level, c.rmatrix, c.series),
                    0.0, c.tolerances.unitarity);
        });
}

inline void task_dybe(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    if (c.system.n() != 3) throw Error(ErrorKind::InvalidArgument, "dybe needs exactly three weights in system.Lambda");
    const auto& L = c.system.Lambda;
    const double tol = c.options.quotient ? c.tolerances.dybe_quotient : c.tolerances.dybe;
    R.check(std::string("dybe_level_") + std::to_string(c.options.level) + (c.options.quotient ? "_quotient" : ""),
            dybe_residual(c.lambda, mp, c.options.z12, c.options.w, L[0], L[1], L[2], c.options.level, c.options.quotient, c.rmatrix, c.series),
            0.0, tol);
}

inline void task_qkzb(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    const auto kopt = detail::kopts(c);
    const auto v = detail::variant(c);
    R.guarded("u", [&] { detail::tensor_values(R, "u", u_variant(v, c.lambda, c.mu, c.system, mp, c.xi, c.plan, c.series)); });
    for (const auto& rel : c.options.relations)
        for (int j : detail::sites0(c)) {
            const std::string name = "qkzb_step_" + rel + "_site_" + std::to_string(j + 1);
            R.guarded(name, [&] {
                IdentityCheck r;
                if (rel == "p")
                    r = qkzb_residual_step_p(j, c.lambda, c.mu, c.system, mp, c.xi, c.plan, v, kopt);
                else if (rel == "tau")
                    r = qkzb_residual_step_tau(j, c.lambda, c.mu, c.system, mp, c.xi, c.plan, v, kopt);
                else
                    r = qkzb_residual_step_one(j, c.lambda, c.mu, c.system, mp, c.xi, c.plan, v, c.series);
                R.check(name, r.residual, r.estimate, c.tolerances.qkzb);
            });
        }
    if (c.options.flatness)
        for (int j = 0; j < c.system.n(); ++j)
            for (int k = j + 1; k < c.system.n(); ++k) {
                const std::string name = "flatness_" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
                R.guarded(name, [&] {
                    R.check(name, flatness_residual(j, k, c.lambda, c.system, mp.tau(), mp.p(), mp.eta(), kopt), 0.0, c.tolerances.flatness);
                });
            }
    if (c.options.psi)
        for (int j : detail::sites0(c)) {
            const std::string name = "psi_step_p_site_" + std::to_string(j + 1);
            R.guarded(name, [&] {
                const auto basis = v == TensorVariant::Full ? zero_weight_basis(c.system) : zero_weight_basis(c.system, true);
                const Eigen::VectorXcd f = Eigen::VectorXcd::Ones(static_cast<Eigen::Index>(basis.size()));
                const auto r = psi_residual_step_p(j, f, c.lambda, c.mu, c.system, mp, c.xi, c.plan, v, kopt);
                R.check(name, r.residual, r.estimate, c.tolerances.qkzb);
            });
        }
}

inline void task_residue(const RunConfig& c, Report& R)
{
    const auto mp = c.modular();
    AdmissibilitySet B;
    for (int b : c.options.B) B.bad.push_back(b - 1);
    std::sort(B.bad.begin(), B.bad.end());
    B.bad.erase(std::unique(B.bad.begin(), B.bad.end()), B.bad.end());
    const auto& sp0 = c.system;
    R.check("weight_conservation", weight_conservation_gap(B, sp0), 0.0, c.tolerances.weight_conservation);
    const auto consts = residue_constants(B, sp0, mp, c.series);
    R.value("constants", {{"name", "c_B"}, {"site", "-"}}, consts.c_B, 0.0);
    for (const auto& f : consts.factors) {
        const std::string site = std::to_string(f.site + 1);
        for (auto [name, val] : std::initializer_list<std::pair<const char*, cplx>>{
                 {"x_tau", f.x_tau}, {"x_p", f.x_p}, {"kappa", f.kappa}, {"y", f.y}, {"N", f.N}, {"d", f.d},
                 {"x_literal_tau", f.x_literal_tau}, {"x_literal_p", f.x_literal_p}})
            R.value("constants", {{"name", name}, {"site", site}}, std::isfinite(std::abs(val)) ? val : cplx(NAN, NAN), 0.0);
        if (!f.x_literal_finite)
            R.warn("site " + site + ": the literal x_k contains theta(0) in a denominator and is not finite; the constant uses theta'(0) there");
    }
    const double rho = c.options.rho ? *c.options.rho : default_residue_radius(B, sp0, mp);
    R.info("rho", rho);
    R.info("residue_nodes", c.options.residue_nodes);
    const auto num = numeric_residue_u_B(B, c.lambda, c.mu, sp0, mp, c.xi, c.plan, rho, c.options.residue_nodes, c.tolerances.residue_quadrature, c.series);
    const auto half = numeric_residue_u_B(B, c.lambda, c.mu, sp0, mp, c.xi, c.plan, rho / 2, c.options.residue_nodes, c.tolerances.residue_quadrature, c.series);
    const auto pred = predicted_residue_u_B(B, c.lambda, c.mu, sp0, mp, c.xi, c.plan, c.series);
    detail::tensor_values(R, "residue_numeric", num.tensor);
    detail::tensor_values(R, "residue_predicted", pred);
    const double pn = pred.u.norm();
    R.check("residue_match", (num.tensor.u - pred.u).norm() / pn, (num.tensor.err_norm() + pred.err_norm()) / pn, c.tolerances.residue);
    R.check("residue_radius_stability", (num.tensor.u - half.tensor.u).norm() / num.tensor.u.norm(),
            (num.tensor.err_norm() + half.tensor.err_norm()) / num.tensor.u.norm(), c.tolerances.residue_radius);
}

inline void task_monodromy(const RunConfig& c, Report& R)
{
    const auto mp = c.options.swap_moduli ? c.modular().swapped() : c.modular();
    const auto kopt = detail::kopts(c);
    const auto v = detail::variant(c);
    for (int j : detail::sites0(c)) {
        const std::string name = "monodromy_site_" + std::to_string(j + 1);
        R.guarded(name, [&] {
            const auto r = monodromy_tau_shift_residual(j, c.lambda, c.mu, c.system, mp, c.xi, c.plan, v, kopt);
            R.check(name, r.residual, r.estimate, c.tolerances.monodromy);
            if (r.branch_warning) R.warn(name + ": a D_total entry is within 1e-6 of the logarithm branch cut");
        });
    }
}

inline const std::map<std::string, std::function<void(const RunConfig&, Report&)>>& task_table()
{
    static const std::map<std::string, std::function<void(const RunConfig&, Report&)>> t{
        {"theta-check", task_theta}, {"phase-check", task_phase}, {"weights-check", task_weights},
        {"rmatrix", task_rmatrix},   {"dybe", task_dybe},         {"unitarity", task_unitarity},
        {"qkzb", task_qkzb},         {"residue", task_residue},   {"monodromy", task_monodromy}};
    return t;
}

// Runs one task and assembles the full report document.
inline std::pair<json, Report> run_task(const std::string& task, const RunConfig& c)
{
    auto it = task_table().find(task);
    if (it == task_table().end()) throw ConfigError("unknown task '" + task + "'");
    if (!c.task.empty() && c.task != task) throw ConfigError("config is for task '" + c.task + "', not '" + task + "'");
    Report R;
    try {
        it->second(c, R);
    } catch (const Error& e) {
        R.error(task, e);
    }
    json resolved = config_json(c);
    resolved["task"] = task;
    json doc{{"schema", report_schema},
             {"tool", {{"name", "qkzb-lab"}, {"version", tool_version}}},
             {"task", task},
             {"config_hash", config_hash(resolved)},
             {"seed", c.seed},
             {"config", resolved}};
    try {
        doc["conditions"] = detail::conditions_json(check_conditions(c.system, c.modular()));
    } catch (const Error& e) {
        R.warn(std::string("check_conditions: ") + e.what());
    }
    const json body = R.to_json();
    for (auto it2 = body.begin(); it2 != body.end(); ++it2) doc[it2.key()] = it2.value();
    if (doc.contains("conditions") && !doc["conditions"]["clean"].get<bool>())
        doc["warnings"].push_back("check_conditions reports a violated condition (annotation only)");
    return {doc, R};
}

} // namespace qkzb::cli
