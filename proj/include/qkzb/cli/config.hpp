#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkzb/hypergeometric.hpp"

namespace qkzb::cli {

using json = nlohmann::json;

inline constexpr const char* config_schema = "qkzb-lab/config/v1";
inline constexpr const char* report_schema = "qkzb-lab/report/v1";
inline constexpr const char* tool_version = "1.0.0";

// Usage, parse and validation problems: exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& task_names()
{
    static const std::vector<std::string> t{"theta-check", "phase-check", "weights-check", "rmatrix", "dybe",
                                            "unitarity",   "qkzb",        "residue",       "monodromy"};
    return t;
}

struct Tolerances {
    double theta = 1e-9;
    double phase = 1e-9;
    double derivative = 1e-6;
    double refinement = 1e-13;
    double action = 1e-10;
    double symmetry = 1e-9;
    double coincidence = 1e-8;
    double resample = 1e-8;
    double leak = 1e-8;
    double unitarity = 1e-8;
    double dybe = 1e-7;
    double dybe_quotient = 1e-6;
    double flatness = 1e-6;
    double qkzb = 1e-5;
    double monodromy = 1e-4;
    double residue = 1e-4;
    double residue_radius = 1e-5;
    double residue_quadrature = 1e-6;
    double weight_conservation = 1e-10;
};

struct TaskOptions {
    std::vector<int> sites; // 1-based; empty = every site
    std::vector<std::string> relations{"p", "tau", "one"};
    std::string variant = "admissible";
    std::string convention = "verbatim";
    std::vector<int> B{1}; // 1-based residue sites
    std::optional<double> rho;
    int residue_nodes = 32;
    int level = 1;
    bool quotient = false;
    cplx z12{0.23, 0.05};
    cplx w{0.41, -0.03};
    bool swap_moduli = false;
    bool flatness = true;
    bool psi = false;
};

struct RunConfig {
    std::string task;
    std::uint64_t seed = 1;
    int samples = 20;
    SystemParams system{{1.0, 1.0}, {0.0, cplx(0.31, 0.02)}, 1};
    cplx tau{0.1, 0.7}, p{-0.13, 0.53}, eta{0.031, -0.04};
    cplx lambda{0.37, 0.21}, mu{-0.22, 0.13};
    IntegrationPlan plan;
    XiSpec xi;
    SeriesConfig series;
    RMatrixOptions rmatrix;
    TaskOptions options;
    Tolerances tolerances;

    ModularParams modular() const { return ModularParams(tau, p, eta); }
};

inline json cjson(cplx x) { return json{{"re", x.real()}, {"im", x.imag()}}; }

inline json cjson(const std::vector<cplx>& v)
{
    json a = json::array();
    for (auto x : v) a.push_back(cjson(x));
    return a;
}

namespace detail {

// Reads an object, remembering which keys were used so leftovers can be rejected.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    const json* get(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + sub(it.key()) + "'");
    }

    void number(const std::string& key, double& out)
    {
        if (auto v = get(key)) {
            if (!v->is_number()) throw ConfigError(sub(key) + ": expected a number");
            out = v->get<double>();
        }
    }

    void integer(const std::string& key, int& out)
    {
        if (auto v = get(key)) {
            if (!v->is_number_integer()) throw ConfigError(sub(key) + ": expected an integer");
            out = v->get<int>();
        }
    }

    void uinteger(const std::string& key, std::uint64_t& out)
    {
        if (auto v = get(key)) {
            if (!v->is_number_unsigned()) throw ConfigError(sub(key) + ": expected a nonnegative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void boolean(const std::string& key, bool& out)
    {
        if (auto v = get(key)) {
            if (!v->is_boolean()) throw ConfigError(sub(key) + ": expected true or false");
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out)
    {
        if (auto v = get(key)) {
            if (!v->is_string()) throw ConfigError(sub(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }

    static cplx to_complex(const json& v, const std::string& path)
    {
        if (v.is_number()) return {v.get<double>(), 0.0};
        if (!v.is_object()) throw ConfigError(path + ": expected {\"re\": x, \"im\": y}");
        Reader r(v, path);
        double re = 0.0, im = 0.0;
        if (!v.contains("re") || !v.contains("im")) throw ConfigError(path + ": complex numbers need both re and im");
        r.number("re", re);
        r.number("im", im);
        r.finish();
        return {re, im};
    }

    void complex(const std::string& key, cplx& out)
    {
        if (auto v = get(key)) out = to_complex(*v, sub(key));
    }

    void complex_list(const std::string& key, std::vector<cplx>& out)
    {
        if (auto v = get(key)) {
            if (!v->is_array()) throw ConfigError(sub(key) + ": expected an array");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) out.push_back(to_complex((*v)[i], sub(key) + "." + std::to_string(i)));
        }
    }

    template <class T>
    void list(const std::string& key, std::vector<T>& out)
    {
        if (auto v = get(key)) {
            if (!v->is_array()) throw ConfigError(sub(key) + ": expected an array");
            try {
                out = v->get<std::vector<T>>();
            } catch (const json::exception&) {
                throw ConfigError(sub(key) + ": array has elements of the wrong type");
            }
        }
    }

    Reader object(const std::string& key)
    {
        const json* v = get(key);
        static const json empty = json::object();
        return Reader(v ? *v : empty, sub(key));
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace detail

inline RunConfig parse_config(const json& doc)
{
    RunConfig c;
    detail::Reader r(doc, "");
    std::string schema;
    r.string("schema", schema);
    if (schema != config_schema) throw ConfigError("schema: expected \"" + std::string(config_schema) + "\", got \"" + schema + "\"");
    r.string("task", c.task);
    r.uinteger("seed", c.seed);
    r.integer("samples", c.samples);
    {
        auto s = r.object("system");
        s.complex_list("Lambda", c.system.Lambda);
        s.complex_list("z", c.system.z);
        s.integer("l", c.system.l);
        s.finish();
    }
    {
        auto m = r.object("modular");
        m.complex("tau", c.tau);
        m.complex("p", c.p);
        m.complex("eta", c.eta);
        m.finish();
    }
    {
        auto pt = r.object("point");
        pt.complex("lambda", c.lambda);
        pt.complex("mu", c.mu);
        pt.finish();
    }
    {
        auto pl = r.object("plan");
        pl.integer("N", c.plan.N);
        pl.integer("M", c.plan.M);
        pl.integer("K", c.plan.K);
        pl.list("offsets", c.plan.offsets);
        pl.number("pole_clearance", c.plan.pole_clearance);
        pl.number("tol", c.plan.tol);
        pl.number("tol_abs", c.plan.tol_abs);
        pl.integer("lattice", c.plan.lattice);
        pl.number("window", c.plan.window);
        pl.number("circle_fraction", c.plan.circle_fraction);
        pl.number("regularize_fraction", c.plan.regularize_fraction);
        pl.integer("regularize_nodes", c.plan.regularize_nodes);
        pl.finish();
    }
    {
        auto x = r.object("xi");
        std::string kind = "constant";
        x.string("kind", kind);
        if (kind == "constant")
            c.xi.kind = XiSpec::Kind::Constant;
        else if (kind == "exponential")
            c.xi.kind = XiSpec::Kind::Exponential;
        else
            throw ConfigError("xi.kind: expected \"constant\" or \"exponential\"");
        x.complex("value", c.xi.value);
        x.integer("k", c.xi.k);
        x.integer("N", c.xi.N);
        x.finish();
    }
    {
        auto s = r.object("series");
        s.number("eps", c.series.eps);
        s.integer("max_terms", c.series.max_terms);
        s.finish();
    }
    {
        auto rm = r.object("rmatrix");
        rm.uinteger("seed", c.rmatrix.seed);
        rm.integer("oversample", c.rmatrix.oversample);
        rm.number("residual_tol", c.rmatrix.residual_tol);
        rm.number("cond_max", c.rmatrix.cond_max);
        rm.integer("attempts", c.rmatrix.attempts);
        rm.boolean("use_cache", c.rmatrix.use_cache);
        rm.finish();
    }
    {
        auto o = r.object("options");
        o.list("sites", c.options.sites);
        o.list("relations", c.options.relations);
        o.string("variant", c.options.variant);
        o.string("convention", c.options.convention);
        o.list("B", c.options.B);
        if (auto v = o.get("rho")) {
            if (!v->is_number()) throw ConfigError("options.rho: expected a number or null");
            c.options.rho = v->get<double>();
        }
        o.integer("residue_nodes", c.options.residue_nodes);
        o.integer("level", c.options.level);
        o.boolean("quotient", c.options.quotient);
        o.complex("z12", c.options.z12);
        o.complex("w", c.options.w);
        o.boolean("swap_moduli", c.options.swap_moduli);
        o.boolean("flatness", c.options.flatness);
        o.boolean("psi", c.options.psi);
        o.finish();
    }
    {
        auto t = r.object("tolerances");
        auto& T = c.tolerances;
        for (auto [k, v] : std::initializer_list<std::pair<const char*, double*>>{
                 {"theta", &T.theta}, {"phase", &T.phase}, {"derivative", &T.derivative}, {"refinement", &T.refinement},
                 {"action", &T.action}, {"symmetry", &T.symmetry}, {"coincidence", &T.coincidence}, {"resample", &T.resample},
                 {"leak", &T.leak}, {"unitarity", &T.unitarity}, {"dybe", &T.dybe}, {"dybe_quotient", &T.dybe_quotient},
                 {"flatness", &T.flatness}, {"qkzb", &T.qkzb}, {"monodromy", &T.monodromy}, {"residue", &T.residue},
                 {"residue_radius", &T.residue_radius}, {"residue_quadrature", &T.residue_quadrature},
                 {"weight_conservation", &T.weight_conservation}})
            t.number(k, *v);
        t.finish();
    }
    r.finish();
    return c;
}

inline json config_json(const RunConfig& c)
{
    const auto& T = c.tolerances;
    json plan{{"N", c.plan.N},
              {"M", c.plan.M},
              {"K", c.plan.K},
              {"offsets", c.plan.offsets},
              {"pole_clearance", c.plan.pole_clearance},
              {"tol", c.plan.tol},
              {"tol_abs", c.plan.tol_abs},
              {"lattice", c.plan.lattice},
              {"window", c.plan.window},
              {"circle_fraction", c.plan.circle_fraction},
              {"regularize_fraction", c.plan.regularize_fraction},
              {"regularize_nodes", c.plan.regularize_nodes}};
    json opts{{"sites", c.options.sites},
              {"relations", c.options.relations},
              {"variant", c.options.variant},
              {"convention", c.options.convention},
              {"B", c.options.B},
              {"rho", c.options.rho ? json(*c.options.rho) : json(nullptr)},
              {"residue_nodes", c.options.residue_nodes},
              {"level", c.options.level},
              {"quotient", c.options.quotient},
              {"z12", cjson(c.options.z12)},
              {"w", cjson(c.options.w)},
              {"swap_moduli", c.options.swap_moduli},
              {"flatness", c.options.flatness},
              {"psi", c.options.psi}};
    json tol{{"theta", T.theta},
             {"phase", T.phase},
             {"derivative", T.derivative},
             {"refinement", T.refinement},
             {"action", T.action},
             {"symmetry", T.symmetry},
             {"coincidence", T.coincidence},
             {"resample", T.resample},
             {"leak", T.leak},
             {"unitarity", T.unitarity},
             {"dybe", T.dybe},
             {"dybe_quotient", T.dybe_quotient},
             {"flatness", T.flatness},
             {"qkzb", T.qkzb},
             {"monodromy", T.monodromy},
             {"residue", T.residue},
             {"residue_radius", T.residue_radius},
             {"residue_quadrature", T.residue_quadrature},
             {"weight_conservation", T.weight_conservation}};
    return json{{"schema", config_schema},
                {"task", c.task},
                {"seed", c.seed},
                {"samples", c.samples},
                {"system", {{"Lambda", cjson(c.system.Lambda)}, {"z", cjson(c.system.z)}, {"l", c.system.l}}},
                {"modular", {{"tau", cjson(c.tau)}, {"p", cjson(c.p)}, {"eta", cjson(c.eta)}}},
                {"point", {{"lambda", cjson(c.lambda)}, {"mu", cjson(c.mu)}}},
                {"plan", plan},
                {"xi", {{"kind", c.xi.kind == XiSpec::Kind::Constant ? "constant" : "exponential"},
                        {"value", cjson(c.xi.value)},
                        {"k", c.xi.k},
                        {"N", c.xi.N}}},
                {"series", {{"eps", c.series.eps}, {"max_terms", c.series.max_terms}}},
                {"rmatrix", {{"seed", c.rmatrix.seed},
                             {"oversample", c.rmatrix.oversample},
                             {"residual_tol", c.rmatrix.residual_tol},
                             {"cond_max", c.rmatrix.cond_max},
                             {"attempts", c.rmatrix.attempts},
                             {"use_cache", c.rmatrix.use_cache}}},
                {"options", opts},
                {"tolerances", tol}};
}

// key=value with a dotted path; array positions are 1-based like every other index on the command line.
// The value is read as JSON when it parses, otherwise as a string.
inline void apply_override(json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("--set: empty path segment in '" + key + "'");
        parts.push_back(part);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const bool last = i + 1 == parts.size();
        const auto& seg = parts[i];
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(seg);
            } catch (...) {
                throw ConfigError("--set: '" + seg + "' is not an array index in '" + key + "'");
            }
            if (idx < 1 || idx > node->size()) throw ConfigError("--set: index " + seg + " out of range in '" + key + "'");
            node = &(*node)[idx - 1];
        } else {
            if (node->is_null()) *node = json::object();
            if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object");
            node = &(*node)[seg];
        }
        if (last) *node = value;
    }
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline void validate_config(const RunConfig& c)
{
    try {
        c.series.validate();
        c.plan.validate();
        c.system.validate();
        const auto mp = c.modular();
        c.xi.validate(mp.eta());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (c.samples < 1) throw ConfigError("samples must be >= 1");
    if (c.options.level < 0) throw ConfigError("options.level must be >= 0");
    if (c.options.residue_nodes < 4 || c.options.residue_nodes % 2) throw ConfigError("options.residue_nodes must be even and >= 4");
    if (c.options.rho && !(*c.options.rho > 0.0)) throw ConfigError("options.rho must be positive");
    for (int s : c.options.sites)
        if (s < 1 || s > c.system.n()) throw ConfigError("options.sites: site " + std::to_string(s) + " out of range");
    for (int s : c.options.B)
        if (s < 1 || s > c.system.n()) throw ConfigError("options.B: site " + std::to_string(s) + " out of range");
    for (const auto& r : c.options.relations)
        if (r != "p" && r != "tau" && r != "one") throw ConfigError("options.relations: unknown relation '" + r + "'");
    if (c.options.variant != "admissible" && c.options.variant != "full")
        throw ConfigError("options.variant: expected \"admissible\" or \"full\"");
    if (c.options.convention != "verbatim" && c.options.convention != "alternative")
        throw ConfigError("options.convention: expected \"verbatim\" or \"alternative\"");
    if (!c.task.empty() && std::find(task_names().begin(), task_names().end(), c.task) == task_names().end())
        throw ConfigError("task: unknown task '" + c.task + "'");
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides)
{
    json doc = read_json_file(path);
    if (!doc.is_object()) throw ConfigError(path + ": top level must be an object");
    for (const auto& o : overrides) apply_override(doc, o);
    RunConfig c = parse_config(doc);
    validate_config(c);
    return c;
}

// FNV-1a over the canonical dump of the resolved config
inline std::string config_hash(const json& resolved)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : resolved.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << "fnv1a64:" << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

} // namespace qkzb::cli
