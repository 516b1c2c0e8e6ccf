#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "nlwmix/config.hpp"
#include "nlwmix/csv.hpp"
#include "nlwmix/experiments.hpp"

using namespace nlwmix;
namespace fs = std::filesystem;

namespace {

std::string config_text(const std::string& experiment, const std::string& extra_run = "",
                        const std::string& extra_exp = "") {
  return "[model]\nmodes = 8\ngamma = 0.12\nb0 = 0.2\n"
         "[run]\nT = 4\ndt = 1e-2\nn = 64\nseed = 5\ncheckpoint_step = 1\nthreads = 1\n" +
         extra_run + "[experiment]\nname = " + experiment + "\n" + extra_exp;
}

std::string parse_error(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("nlwmix_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" NLWMIX_CLI_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesAllSections) {
  const auto cfg = parse_config(config_text("hitting", "", "d = 0.5, 1, 2\n") + "[output]\ndir = here\n");
  EXPECT_EQ(cfg.model.modes, 8);
  EXPECT_EQ(cfg.run.n, 64u);
  EXPECT_EQ(cfg.run.seed, 5u);
  EXPECT_EQ(cfg.experiment, "hitting");
  EXPECT_EQ(cfg.list("d", {}), (std::vector<double>{0.5, 1, 2}));
  EXPECT_EQ(cfg.output_dir, "here");
  EXPECT_FALSE(cfg.model.alpha.has_value());
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(parse_error("[model]\nmodes = 8\nbogus = 1\n[experiment]\nname = hitting\n").find("line 3"),
            std::string::npos);
  EXPECT_NE(parse_error("[model]\nmodes = 8\nmodes = 9\n[experiment]\nname = hitting\n").find("duplicate"),
            std::string::npos);
  EXPECT_NE(parse_error("[modle]\n").find("unknown section"), std::string::npos);
  EXPECT_NE(parse_error("[run]\nT = abc\n").find("line 2"), std::string::npos);
  EXPECT_NE(parse_error("[run]\nn = -3\n").find("nonnegative"), std::string::npos);
  EXPECT_NE(parse_error("[experiment]\nname = hitting\ns = 0.3\n").find("unknown key 's'"), std::string::npos);
  EXPECT_NE(parse_error("[experiment]\nname = warp\n").find("unknown experiment"), std::string::npos);
  EXPECT_NE(parse_error("[model]\nmodes = 8\n").find("needs a 'name'"), std::string::npos);
  EXPECT_NE(parse_error("x = 1\n").find("outside any section"), std::string::npos);
  EXPECT_NE(parse_error(config_text("hitting", "dt = 0\n")).find("duplicate"), std::string::npos);
  EXPECT_EQ(parse_error("# comment only\n[experiment]\nname = split ; trailing\n"), "");
}

TEST(Config, ModelValidationRejectsBadParameters) {
  ModelConfig mc;
  mc.gamma = -1.0;
  EXPECT_THROW(build_model(mc), ConfigError);
  mc = ModelConfig{};
  mc.alpha = 1.0;
  EXPECT_THROW(build_model(mc), ConfigError);
  mc = ModelConfig{};
  mc.nonlinearity = "klein-gordon";
  mc.rho = 2.5;
  EXPECT_THROW(build_model(mc), ConfigError);
  EXPECT_NO_THROW(build_model(ModelConfig{}));
}

TEST(Fnv1a, ReferenceVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cull), "af63dc4c8601ec8c");
}

TEST(Csv, EmptyTableIsHeaderOnly) {
  const CsvTable t({"r", "value"});
  EXPECT_EQ(t.str(), "r,value\n");
  EXPECT_EQ(parse_csv(t.str()).rows.size(), 0u);
}

TEST(Csv, RowsAndByteIdenticalRoundTrip) {
  CsvTable t({"r", "value", "flag"});
  for (int k = 0; k < 4; ++k) t.add(k, 0.1 * k + 1.0 / 3.0, k % 2 == 0);
  const auto text = t.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  const auto back = parse_csv(text);
  EXPECT_EQ(back.str(), text);
  EXPECT_EQ(back.number(3, back.column("value")), 0.3 + 1.0 / 3.0);
  EXPECT_THROW(t.add(1, 2.0), ShapeError);
  EXPECT_THROW(t.add("a,b", 1.0, true), ShapeError);
  EXPECT_THROW(parse_csv("a,b\n1\n"), ShapeError);
  EXPECT_THROW((void)back.column("missing"), ShapeError);
}

TEST(Experiments, ReportSchemas) {
  struct Case { std::string name, extra, file; std::vector<std::string> columns; };
  const std::vector<Case> cases{
      {"mixing", "y0_norm = 3\nfit_t0 = 1\nfit_t1 = 4\nobservable_modes = 2\n", "mixing.csv",
       {"t", "observable", "w1", "ci"}},
      {"lln", "burn_in = 1\nreference = 0\nclip = 1\n", "lln.csv", {"t", "err"}},
      {"clt", "t_eval = 4\nreference = 0\nclip = 1\n", "clt.csv",
       {"level", "sample_quantile", "normal_quantile", "ks", "p_value"}},
      {"hitting", "d = 0.5, 2\n", "hitting.csv", {"d", "T", "p_hat", "ci_lo", "ci_hi"}},
      {"split", "s = 0.4\n", "split.csv", {"t", "hs_norm"}},
      {"tails", "r_grid = 1, 2\nK = 1\n", "tails.csv", {"r", "value", "ci_lo", "ci_hi", "bound"}},
      {"energy", "", "energy.csv", {"t", "mean_energy", "se", "mean_energy_standard", "bound"}},
  };
  for (const auto& c : cases) {
    SCOPED_TRACE(c.name);
    const auto out = run_experiment(parse_config(config_text(c.name, "", c.extra)), 1);
    EXPECT_EQ(out.table(c.file).columns, c.columns);
    EXPECT_FALSE(out.table(c.file).rows.empty());
  }
}

TEST(Experiments, FpScanReportsNStar) {
  const auto cfg = parse_config(
      "[model]\nmodes = 8\ngamma = 0.12\n[run]\nT = 20\ndt = 1e-2\nseed = 2\nthreads = 1\n"
      "[experiment]\nname = fp-scan\nN_list = 0, 1, 8\npairs = 4\n");
  const auto out = run_experiment(cfg, 1);
  const auto& scan = out.table("fp_scan.csv");
  ASSERT_EQ(scan.rows.size(), 3u);
  const double n_star = out.summary_value("n_star");
  const auto col_n = scan.column("N"), col_ok = scan.column("contracts"), col_star = scan.column("n_star");
  // n_star is the first scanned N from which every larger scanned N contracts.
  double expect = -1.0;
  for (std::size_t r = scan.rows.size(); r-- > 0;) {
    if (scan.number(r, col_ok) != 1.0) break;
    expect = scan.number(r, col_n);
  }
  EXPECT_EQ(n_star, expect);
  for (std::size_t r = 0; r < scan.rows.size(); ++r) EXPECT_EQ(scan.number(r, col_star), n_star);
  EXPECT_EQ(out.table("fp_pairs.csv").rows.size(), 12u);
}

TEST(Experiments, SameConfigGivesIdenticalFiles) {
  const auto cfg = parse_config(config_text("hitting", "", "d = 0.5, 2\n"));
  const auto a = scratch("repro_a"), b = scratch("repro_b");
  const auto files = write_experiment(cfg, run_experiment(cfg, 1), a.string());
  write_experiment(cfg, run_experiment(cfg, 1), b.string());
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) {
    if (f == "timestamp.txt") continue;
    EXPECT_EQ(read_text((a / f).string()), read_text((b / f).string())) << f;
  }
  EXPECT_NE(read_text((a / "manifest.json").string()).find(hex64(fnv1a(cfg.source))), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto good = dir / "good.ini", bad = dir / "bad.ini", diverge = dir / "diverge.ini", fail = dir / "fail.ini";
  write_text(good.string(), config_text("hitting", "", "y0_norm = 0.1\nd = 2\n"));
  write_text(bad.string(), "[model]\nmodes = 8\nwat = 1\n[experiment]\nname = hitting\n");
  write_text(diverge.string(),
             "[model]\nmodes = 8\nnonlinearity = klein-gordon\nrho = 1\n[run]\nT = 10\ndt = 0.5\nn = 1\n"
             "[experiment]\nname = energy\ny0_norm = 1e4\n");
  // The Lipschitz ratio check cannot pass with ratio_max = 0.
  write_text(fail.string(), config_text("split", "", "ratio_max = 0\n"));
  const std::string out = " --out \"" + (dir / "out").string() + "\"";

  EXPECT_EQ(run_cli("list-experiments"), 0);
  EXPECT_EQ(run_cli("validate \"" + good.string() + "\""), 0);
  EXPECT_EQ(run_cli("validate \"" + bad.string() + "\""), 2);
  EXPECT_EQ(run_cli("validate \"" + good.string() + "\"", "NLWMIX_SEED=abc"), 2);
  EXPECT_EQ(run_cli("run \"" + good.string() + "\" --check" + out), 0);
  EXPECT_EQ(run_cli("run \"" + fail.string() + "\"" + out), 0);
  EXPECT_EQ(run_cli("run \"" + fail.string() + "\" --check" + out), 3);
  EXPECT_EQ(run_cli("run \"" + diverge.string() + "\"" + out), 4);
  EXPECT_EQ(run_cli("run \"" + (dir / "missing.ini").string() + "\"" + out), 1);
  EXPECT_NE(run_cli("frobnicate"), 0);
}

TEST(Cli, SeedOverrideChangesOutputDeterministically) {
  const auto dir = scratch("seed");
  const auto cfg = dir / "c.ini";
  write_text(cfg.string(), config_text("hitting", "", "d = 0.5, 1, 2, 4\n"));
  auto run_with = [&](const std::string& env, const std::string& sub) {
    const auto o = dir / sub;
    EXPECT_EQ(run_cli("run \"" + cfg.string() + "\" --out \"" + o.string() + "\"", env), 0);
    return read_text((o / "manifest.json").string());
  };
  const auto base = run_with("", "base");
  const auto s9a = run_with("NLWMIX_SEED=9", "s9a");
  const auto s9b = run_with("NLWMIX_SEED=9", "s9b");
  EXPECT_EQ(s9a, s9b);
  EXPECT_NE(base, s9a);
  EXPECT_NE(s9a.find("\"seed\": 9"), std::string::npos);
}
