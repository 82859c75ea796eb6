#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>

#include "qkzb/cli/generate.hpp"
#include "qkzb/cli/tasks.hpp"

using namespace qkzb;
using namespace qkzb::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
    int rc = -1;
    std::string out;
    json doc() const { return json::parse(out); }
};

Run run(const std::string& args)
{
    const std::string cmd = std::string(QKZB_LAB_PATH) + " " + args + " 2>/dev/null";
    FILE* f = popen(cmd.c_str(), "r");
    Run r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, f)) > 0) r.out.append(buf, n);
    const int st = pclose(f);
    r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string cfg(const std::string& name) { return std::string(QKZB_CONFIG_DIR) + "/" + name + ".json"; }

fs::path scratch_dir(const std::string& name)
{
    const auto d = fs::temp_directory_path() / ("qkzb-cli-test-" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string write_file(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
    return p.string();
}

} // namespace

TEST(Cli, PassingRunAndReportShape)
{
    const auto r = run("theta-check --config " + cfg("theta-check"));
    ASSERT_EQ(r.rc, 0) << r.out;
    const auto d = r.doc();
    EXPECT_EQ(d["schema"], "qkzb-lab/report/v1");
    EXPECT_EQ(d["task"], "theta-check");
    EXPECT_TRUE(d["pass"].get<bool>());
    EXPECT_TRUE(std::regex_match(d["config_hash"].get<std::string>(), std::regex("fnv1a64:[0-9a-f]{16}")));
    EXPECT_TRUE(d["config"]["modular"]["tau"].contains("re"));
    EXPECT_TRUE(d["config"]["modular"]["tau"].contains("im"));
    for (const auto& c : d["checks"]) EXPECT_TRUE(c["pass"].get<bool>()) << c.dump();
}

TEST(Cli, RerunsAreByteIdentical)
{
    for (const std::string t : {"phase-check", "rmatrix", "qkzb"}) {
        const auto a = run(t + " --config " + cfg(t));
        const auto b = run(t + " --config " + cfg(t));
        EXPECT_EQ(a.rc, 0) << t;
        EXPECT_EQ(a.out, b.out) << t;
    }
}

TEST(Cli, SeedAndOverridesReachTheReport)
{
    const auto a = run("theta-check --config " + cfg("theta-check") + " --seed 17 --set samples=5");
    ASSERT_EQ(a.rc, 0);
    const auto d = a.doc();
    EXPECT_EQ(d["seed"], 17);
    EXPECT_EQ(d["config"]["samples"], 5);
    const auto b = run("theta-check --config " + cfg("theta-check"));
    EXPECT_NE(d["config_hash"], b.doc()["config_hash"]);
}

TEST(Cli, UsageAndParseErrorsExitOne)
{
    const auto dir = scratch_dir("errors");
    const auto broken = write_file(dir / "broken.json", "{\"schema\": \"qkzb-lab/config/v1\",\n");
    EXPECT_EQ(run("qkzb --config " + broken).rc, 1);
    EXPECT_EQ(run("qkzb --config " + cfg("qkzb") + " --set bogus=1").rc, 1);
    EXPECT_EQ(run("qkzb --config " + cfg("qkzb") + " --set schema=qkzb-lab/config/v0").rc, 1);
    EXPECT_EQ(run("qkzb --config " + cfg("qkzb") + " --set plan.M=7").rc, 1);
    EXPECT_EQ(run("qkzb --config " + cfg("qkzb") + " --set plan.M").rc, 1);
    EXPECT_EQ(run("qkzb --config " + cfg("theta-check")).rc, 1);
    EXPECT_EQ(run("no-such-task --config " + cfg("qkzb")).rc, 1);
    EXPECT_EQ(run("qkzb").rc, 1);
    EXPECT_EQ(run("qkzb --config " + (dir / "missing.json").string()).rc, 1);
    EXPECT_EQ(run("generate --profile nope").rc, 1);
    EXPECT_EQ(run("qkzb --config " + cfg("qkzb") + " --no-such-flag").rc, 1);
    EXPECT_EQ(run("--help").rc, 0);
}

TEST(Cli, NumericalFailureExitsTwo)
{
    const auto r = run("qkzb --config " + cfg("qkzb") + " --set plan.M=8");
    ASSERT_EQ(r.rc, 2);
    const auto d = r.doc();
    EXPECT_FALSE(d["pass"].get<bool>());
    ASSERT_FALSE(d["errors"].empty());
    EXPECT_EQ(d["errors"][0]["kind"], "NotConverged");
}

TEST(Cli, CsvTables)
{
    const auto dir = scratch_dir("csv");
    const auto r = run("rmatrix --config " + cfg("rmatrix") + " --csv " + dir.string());
    ASSERT_EQ(r.rc, 0);
    const auto d = r.doc();
    ASSERT_FALSE(d["values"].empty());
    for (const auto& [table, rows] : d["values"].items()) {
        std::ifstream in(dir / ("rmatrix-" + table + ".csv"));
        ASSERT_TRUE(in.good()) << table;
        std::string header;
        std::getline(in, header);
        EXPECT_TRUE(header.ends_with("re,im,err_estimate")) << header;
        std::size_t lines = 0;
        for (std::string s; std::getline(in, s);) ++lines;
        EXPECT_EQ(lines, rows.size());
    }
}

TEST(Cli, GeneratedConfigsAreDeterministicAndClean)
{
    const auto dir = scratch_dir("generate");
    for (const auto& p : profile_names()) {
        const auto a = run("generate --profile " + p + " --seed 5");
        ASSERT_EQ(a.rc, 0) << p;
        EXPECT_EQ(a.out, run("generate --profile " + p + " --seed 5").out);
        EXPECT_NE(a.out, run("generate --profile " + p + " --seed 6").out);
        const RunConfig c = parse_config(a.doc());
        const auto rep = check_conditions(c.system, c.modular());
        if (p == "residue-case") {
            for (const auto& e : rep.entries)
                if (e.name == "im" || e.name == "indep" || e.name == "eta1" || e.name == "a's1" || e.name == "z's1") EXPECT_FALSE(e.violated) << e.name;
        } else {
            EXPECT_TRUE(rep.clean()) << p;
        }
    }
    const auto g = run("generate --profile integral-weights --seed 5");
    const auto path = write_file(dir / "iw.json", g.out);
    const auto r = run("qkzb --config " + path);
    EXPECT_EQ(r.rc, 0) << r.out;
}

TEST(Config, RoundTripAndOverrides)
{
    RunConfig c;
    const json j = config_json(c);
    EXPECT_EQ(config_json(parse_config(j)), j);
    json k = j;
    apply_override(k, "modular.tau.im=0.9");
    apply_override(k, "options.relations=[\"p\"]");
    apply_override(k, "task=qkzb");
    const auto c2 = parse_config(k);
    EXPECT_EQ(c2.tau.imag(), 0.9);
    EXPECT_EQ(c2.options.relations, (std::vector<std::string>{"p"}));
    apply_override(k, "system.Lambda.2.re=3");
    EXPECT_EQ(parse_config(k).system.Lambda[1], 3.0);
    EXPECT_THROW(apply_override(k, "system.Lambda.0.re=3"), ConfigError);
    EXPECT_THROW(apply_override(k, "system.l.x=3"), ConfigError);
    EXPECT_THROW(apply_override(k, "noequals"), ConfigError);
    json u = j;
    u["plan"]["extra"] = 1;
    EXPECT_THROW(parse_config(u), ConfigError);
    EXPECT_EQ(config_hash(j), config_hash(config_json(parse_config(j))));
}
