#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"

using namespace decoh;
using namespace decoh::testing;
namespace fs = std::filesystem;

namespace {

const char* kCase1 = R"(
[experiment]
kind = index_series
[noise]
dim = 1
A = 1 0; 0 0
[times]
t = 15 20 30 40 60
)";

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(::testing::TempDir()) / ("decoh_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(DECOH_CLI_PATH) + " " + args + " > " + (log.string() + ".out") + " 2> " +
                            log.string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

}  // namespace

TEST(ParseConfig, MinimalCaseOneFillsDefaults) {
    const ExperimentConfig c = parse_config(kCase1);
    ASSERT_TRUE(c.kind.has_value());
    EXPECT_EQ(*c.kind, ExperimentKind::index_series);
    EXPECT_EQ(c.noise.A(0, 0), 1.0);
    EXPECT_EQ(c.state.family, "ground");
    EXPECT_EQ(c.times.size(), 5u);
    EXPECT_EQ(c.grid.points_per_axis, 0);
    EXPECT_EQ(default_points(1), 512);
    EXPECT_EQ(c.grid.boundary_tol, 1e-10);
    EXPECT_EQ(c.grid.max_doublings, 4);
    EXPECT_EQ(c.mc_n, 100000u);
    EXPECT_EQ(c.mc_steps, 256);
    EXPECT_EQ(c.threads, 1);
}

TEST(ParseConfig, UnknownKeyIsNamed) {
    const std::string e = config_error("[noise]\ndim = 1\ngamma = 0.5\n");
    EXPECT_NE(e.find("'gamma'"), std::string::npos) << e;
    EXPECT_NE(e.find("line 3"), std::string::npos) << e;
    EXPECT_NE(config_error("[physics]\n").find("unknown section"), std::string::npos);
    EXPECT_NE(config_error("dim = 1\n").find("outside"), std::string::npos);
    EXPECT_NE(config_error("[noise]\ndim = 1\ndim = 2\n").find("duplicate"), std::string::npos);
}

TEST(ParseConfig, MatrixRowArityNamesTheRow) {
    const std::string e = config_error("[noise]\ndim = 1\nA = 1 0; 0\n");
    EXPECT_NE(e.find("row 1"), std::string::npos) << e;
    EXPECT_NE(e.find("[noise] A"), std::string::npos) << e;
    EXPECT_NE(config_error("[noise]\natoms = 0 1 0.5; 1 0.2\n").find("row 1"), std::string::npos);
}

TEST(ParseConfig, TimeListMustIncrease) {
    const std::string e = config_error("[times]\nt = 5 3\n");
    EXPECT_NE(e.find("[times] t"), std::string::npos) << e;
    EXPECT_NE(e.find("increasing"), std::string::npos) << e;
    EXPECT_NE(config_error("[times]\nt = -1 2\n").find("nonnegative"), std::string::npos);
    EXPECT_NE(config_error("[times]\nt = 1 x\n").find("not a number"), std::string::npos);
}

TEST(ParseConfig, NoiseForms) {
    const ExperimentConfig a = parse_config("[noise]\ndim = 1\natoms = 0.3 1 0.5; 0 0.6 0.3\n");
    EXPECT_EQ(a.noise.jump.pairs().size(), 2u);
    EXPECT_EQ(a.noise.jump.kind(), JumpKind::atoms);
    const ExperimentConfig m = parse_config("[noise]\nmomentum_atoms = 1 0.5\n");
    EXPECT_LT((second_moment_matrix(m.noise.jump) - diag({0.0, 1.0})).norm(), 1e-15);
    const ExperimentConfig p = parse_config("[noise]\nposition_atoms = 2 0.25\n");
    EXPECT_DOUBLE_EQ(second_moment_matrix(p.noise.jump)(0, 0), 2.0);
    EXPECT_NE(config_error("[noise]\nA = 1 0.5; 0 1\n").find("[noise] A"), std::string::npos);
    EXPECT_NE(config_error("[noise]\natoms = 0 1 -1\n").find("[noise] atoms"), std::string::npos);
    EXPECT_NE(config_error("[noise]\natoms = 0 1 1\nmomentum_atoms = 1 1\n").find("at most one"), std::string::npos);
    EXPECT_NE(config_error("[noise]\ndim = 4\n").find("1..3"), std::string::npos);
}

TEST(ParseConfig, FileReferencesResolveRelativeToConfig) {
    const ExperimentConfig c = load_config(fs::path(DECOH_SAMPLES_DIR) / "kicks_index.ini");
    EXPECT_NE(c.noise_source.find("kicks_noise.ini"), std::string::npos);
    EXPECT_EQ(c.noise.jump.pairs().size(), 1u);
    ASSERT_TRUE(c.state.params_1d.has_value());
    EXPECT_DOUBLE_EQ(c.state.params_1d->B, 0.2);
    const ExperimentConfig d = load_config(fs::path(DECOH_SAMPLES_DIR) / "density_validate.ini");
    EXPECT_TRUE(d.noise.jump.has_density());
    EXPECT_NEAR(psi_mu(d.noise.jump, vec({1.0}), vec({0.0})), std::exp(-0.5) - 1.0, 1e-9);
    EXPECT_NE(config_error("[noise]\nfile = does_not_exist.ini\n").find("[noise] file"), std::string::npos);
}

TEST(ParseConfig, StateFamilies) {
    const ExperimentConfig g = parse_config("[state]\nfamily = gaussian1d\nA = 2\nC = 0.5\n");
    ASSERT_TRUE(g.state.params_1d.has_value());
    EXPECT_NEAR(closed_form_index(g.state.moments).S_X, 0.5, 1e-14);
    EXPECT_NE(config_error("[state]\nfamily = gaussian1d\nA = 0.1\nC = 0.5\n").find("A >= C"), std::string::npos);
    EXPECT_NE(config_error("[state]\nfamily = moments\nsigma = 1 0; 0 -1\n").find("[state] sigma"),
              std::string::npos);
    EXPECT_NE(config_error("[state]\nfamily = ground\nA = 1\n").find("not used"), std::string::npos);
    EXPECT_NE(config_error("[state]\nfamily = coherent\n").find("[state] family"), std::string::npos);
    const ExperimentConfig m = parse_config("[noise]\ndim = 2\n[state]\nfamily = moments\n"
                                            "sigma = 1 0 0 0; 0 1 0 0; 0 0 1 0; 0 0 0 1\nmean = 0 0 1 0\n");
    EXPECT_EQ(m.state.moments.dim(), 2);
}

TEST(ParseConfig, GridAndMcLimits) {
    EXPECT_NE(config_error("[grid]\npoints = 100\n").find("power of two"), std::string::npos);
    EXPECT_NE(config_error("[mc]\nsteps = 96\n").find("[mc] steps"), std::string::npos);
    EXPECT_NE(config_error("[mc]\nn = 10\n").find("[mc] n"), std::string::npos);
    EXPECT_NE(config_error("[mc]\nseed = 1.5\n").find("integer"), std::string::npos);
    const ExperimentConfig c = parse_config("[grid]\npoints = 256\nhalf_width = 6\n[mc]\nn = 5000\nseed = 9\n");
    EXPECT_EQ(c.grid.points_per_axis, 256);
    EXPECT_EQ(c.grid.half_width, 6.0);
    EXPECT_EQ(c.mc_n, 5000u);
    EXPECT_EQ(c.seed, 9u);
}

TEST(ParseConfig, KindRequirements) {
    ExperimentConfig c = parse_config("[noise]\nA = 1 0; 0 0\n[times]\nt = 1 2 3\n");
    EXPECT_THROW(check_for_kind(c, ExperimentKind::asymptotics), ConfigError);
    EXPECT_NO_THROW(check_for_kind(c, ExperimentKind::index_series));
    c.times.clear();
    EXPECT_THROW(check_for_kind(c, ExperimentKind::index_series), ConfigError);
    EXPECT_NO_THROW(check_for_kind(c, ExperimentKind::validate));
    ExperimentConfig k = parse_config(kCase1);
    k.out_dir = scratch("kind").string();
    EXPECT_THROW(run(k, ExperimentKind::relaxation), ConfigError);
}

TEST(Run, ValidateGroundStateZeroNoisePasses) {
    ExperimentConfig c = load_config(fs::path(DECOH_SAMPLES_DIR) / "validate_ground.ini");
    c.out_dir = scratch("validate").string();
    const RunResult r = run(c, ExperimentKind::validate);
    EXPECT_EQ(r.status, 0);
    const std::string csv = slurp(fs::path(c.out_dir) / "validation.csv");
    EXPECT_EQ(csv.find("FAIL"), std::string::npos) << csv;
    EXPECT_EQ(manifest(c.out_dir)["summary"]["failed"], 0);
}

TEST(Run, CaseOneIndexSeriesFitsMinusTwo) {
    ExperimentConfig c = parse_config(kCase1);
    c.out_dir = scratch("index").string();
    const RunResult r = run(c, ExperimentKind::index_series);
    EXPECT_EQ(r.status, 0);
    const nlohmann::json m = manifest(c.out_dir);
    EXPECT_NEAR(m["summary"]["fit_S_X"]["power"].get<double>(), -2.0, 0.1);
    const std::string csv = slurp(fs::path(c.out_dir) / "index.csv");
    EXPECT_NE(csv.find("# convention=W(q,p)"), std::string::npos);
    EXPECT_NE(csv.find("# measure=(2pi)^-d dq dp"), std::string::npos);
    EXPECT_NE(csv.find("# block_pairing="), std::string::npos);
    EXPECT_NE(csv.find("t,C_X,D_X,S_X,C_K,D_K,S_K,CxDk,CkDx"), std::string::npos);
}

TEST(Run, TruncationBecomesFlaggedRow) {
    ExperimentConfig c = parse_config(std::string(kCase1) + "[grid]\nhalf_width = 2\nmax_doublings = 0\n");
    c.out_dir = scratch("flag").string();
    const RunResult r = run(c, ExperimentKind::index_series);
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(slurp(fs::path(c.out_dir) / "index.csv").find("does not decay"), std::string::npos);
}

TEST(Run, ClassicalIsBitReproducible) {
    const std::string text = "[noise]\nA = 1 0; 0 0\n[times]\nt = 1 2\n[mc]\nn = 2000\nsteps = 64\nseed = 5\n";
    ExperimentConfig a = parse_config(text);
    ExperimentConfig b = parse_config(text);
    a.out_dir = scratch("rep_a").string();
    b.out_dir = scratch("rep_b").string();
    b.threads = 3;  // thread count is not part of the result
    const RunResult ra = run(a, ExperimentKind::classical);
    run(b, ExperimentKind::classical);
    for (const auto& f : ra.outputs) {
        if (f == "manifest.json") continue;
        EXPECT_EQ(slurp(fs::path(a.out_dir) / f), slurp(fs::path(b.out_dir) / f)) << f;
    }
    nlohmann::json ma = manifest(a.out_dir);
    nlohmann::json mb = manifest(b.out_dir);
    ma["mc"].erase("threads");
    mb["mc"].erase("threads");
    EXPECT_EQ(ma, mb);
    ExperimentConfig c = parse_config(text);
    c.out_dir = scratch("rep_c").string();
    run(c, ExperimentKind::classical);
    EXPECT_EQ(slurp(fs::path(a.out_dir) / "manifest.json"), slurp(fs::path(c.out_dir) / "manifest.json"));
}

TEST(Cli, ValidateSampleExitsZero) {
    const fs::path out = scratch("cli_ok");
    const std::string cfg = (fs::path(DECOH_SAMPLES_DIR) / "validate_ground.ini").string();
    EXPECT_EQ(run_cli("validate --config " + cfg + " --out " + out.string(), out / "log"), 0);
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_NE(slurp(out / "log").find("convention:"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitOne) {
    const fs::path out = scratch("cli_bad");
    write(out / "bad_times.ini", "[noise]\nA = 1 0; 0 0\n[times]\nt = 5 3\n");
    EXPECT_EQ(run_cli("index --config " + (out / "bad_times.ini").string() + " --out " + out.string(), out / "log1"),
              1);
    EXPECT_NE(slurp(out / "log1").find("[times] t"), std::string::npos);
    write(out / "gamma.ini", "[noise]\ngamma = 1\n");
    EXPECT_EQ(run_cli("validate --config " + (out / "gamma.ini").string(), out / "log2"), 1);
    EXPECT_NE(slurp(out / "log2").find("gamma"), std::string::npos);
    EXPECT_EQ(run_cli("", out / "log3"), 1);
    EXPECT_EQ(run_cli("index --config " + (out / "missing.ini").string(), out / "log4"), 1);
}

TEST(Cli, NumericalFailureExitsTwo) {
    const fs::path out = scratch("cli_num");
    write(out / "trunc.ini", std::string(kCase1) + "[grid]\nhalf_width = 2\nmax_doublings = 0\n");
    EXPECT_EQ(run_cli("index --config " + (out / "trunc.ini").string() + " --out " + out.string(), out / "log"), 2);
}

TEST(Cli, SeedOverrideIsRecorded) {
    const fs::path out = scratch("cli_seed");
    write(out / "mc.ini", "[noise]\nA = 1 0; 0 0\n[times]\nt = 1\n[mc]\nn = 1000\nsteps = 64\n");
    EXPECT_EQ(run_cli("classical --config " + (out / "mc.ini").string() + " --out " + out.string() + " --seed 77 --threads 2",
                      out / "log"),
              0);
    const nlohmann::json m = manifest(out);
    EXPECT_EQ(m["mc"]["seed"], 77);
    EXPECT_EQ(m["mc"]["threads"], 2);
    EXPECT_EQ(m["summary"]["seeds"][0].get<std::uint64_t>(), classical_seed(77, 0));
}
