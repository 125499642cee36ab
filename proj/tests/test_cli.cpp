#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "aggbounds/cli.hpp"
#include "aggbounds/io.hpp"
#include "aggbounds/simlab.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using aggbounds::io::json;

namespace {

// unique scratch directory per fixture, removed on destruction
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("aggbounds-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream cap_out, cap_err;
  auto* old_out = std::cout.rdbuf(cap_out.rdbuf());
  auto* old_err = std::cerr.rdbuf(cap_err.rdbuf());
  RunResult r;
  r.code = aggbounds::cli::run(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = cap_out.str();
  r.err = cap_err.str();
  return r;
}

json parse_stdout(const RunResult& r) { return json::parse(r.out); }

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// the worked single-group example: P[X=1]=0.7, E[Y]=0.6, binary outcome
struct Fixture {
  TempDir dir;
  std::string support, groups, marginals;
  Fixture() {
    support = dir.file("support.csv", "point_id,v1\na,0\nb,1\n");
    groups = dir.file("groups.csv", "group_id,count,y_mean\ng1,400,0.6\n");
    marginals = dir.file("marginals.csv",
                         "group_id,covariate,value,prob\n"
                         "g1,v1,0,0.3\n"
                         "g1,v1,1,0.7\n");
  }
  std::vector<std::string> data_args() const {
    return {"--support", support, "--groups", groups, "--marginals", marginals, "--binary"};
  }
};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("bounds: worked example to stdout as JSON") {
  Fixture fx;
  const auto r = run_cli(cat({"bounds", "--lambda=-1,1"}, fx.data_args()));
  REQUIRE(r.code == 0);
  const json j = parse_stdout(r);
  CHECK(j.at("aggregate").at("lower").get<double>() == doctest::Approx(-4.0 / 7.0).epsilon(1e-12));
  CHECK(j.at("aggregate").at("upper").get<double>() == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
  CHECK(j.at("groups").size() == 1);
  CHECK(r.err.find("aggregate D") != std::string::npos);
}

TEST_CASE("bounds: contrast grammar matches explicit weights") {
  Fixture fx;
  const auto by_lambda = parse_stdout(run_cli(cat({"bounds", "--lambda=-1,1"}, fx.data_args())));
  const auto by_id = parse_stdout(
      run_cli(cat({"bounds", "--contrast", "cell(b) - cell(a)"}, fx.data_args())));
  const auto by_tuple = parse_stdout(
      run_cli(cat({"bounds", "--contrast", "cell(1) - cell(0)"}, fx.data_args())));
  CHECK(by_id.at("aggregate") == by_lambda.at("aggregate"));
  CHECK(by_tuple.at("aggregate") == by_lambda.at("aggregate"));

  const auto doubled = parse_stdout(
      run_cli(cat({"bounds", "--contrast", "2*cell(b) - 2*cell(a)"}, fx.data_args())));
  CHECK(doubled.at("aggregate").at("lower").get<double>() ==
        doctest::Approx(2.0 * by_lambda.at("aggregate").at("lower").get<double>())
            .epsilon(1e-12));
}

TEST_CASE("bounds: monotone restriction lifts the lower endpoint") {
  Fixture fx;
  const auto r =
      run_cli(cat({"bounds", "--lambda=-1,1", "--monotone", "v1:inc"}, fx.data_args()));
  REQUIRE(r.code == 0);
  const json j = parse_stdout(r);
  CHECK(j.at("aggregate").at("lower").get<double>() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(j.at("aggregate").at("upper").get<double>() == doctest::Approx(6.0 / 7.0).epsilon(1e-9));

  // the covariate can also be named by index
  const auto by_idx =
      run_cli(cat({"bounds", "--lambda=-1,1", "--monotone", "0:inc"}, fx.data_args()));
  CHECK(parse_stdout(by_idx).at("aggregate") == j.at("aggregate"));
}

TEST_CASE("bounds: --out writes files and the dataset round-trips exactly") {
  Fixture fx;
  TempDir outdir;
  const std::string out = outdir.sub("run1");
  const auto r = run_cli(cat({"bounds", "--lambda=-1,1", "--out", out}, fx.data_args()));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "bounds.json"));
  CHECK(fs::exists(fs::path(out) / "bounds.csv"));
  CHECK(fs::exists(fs::path(out) / "dataset.json"));
  const json first = json::parse(slurp((fs::path(out) / "bounds.json").string()));

  const auto again = run_cli({"bounds", "--lambda=-1,1", "--data",
                              (fs::path(out) / "dataset.json").string()});
  REQUIRE(again.code == 0);
  CHECK(parse_stdout(again).at("aggregate") == first.at("aggregate"));

  const std::string csv = slurp((fs::path(out) / "bounds.csv").string());
  CHECK(csv.find("group,lower,upper") == 0);
  CHECK(csv.find("aggregate") != std::string::npos);
}

TEST_CASE("bounds: malformed marginals exit 2 and name the offender") {
  Fixture fx;
  const std::string bad = fx.dir.file("bad_marginals.csv",
                                      "group_id,covariate,value,prob\n"
                                      "g1,v1,0,0.3\n"
                                      "g1,v1,1,0.6\n");  // sums to 0.9
  const auto r = run_cli({"bounds", "--lambda=-1,1", "--support", fx.support, "--groups",
                          fx.groups, "--marginals", bad, "--binary"});
  CHECK(r.code == 2);
  CHECK(r.err.find("g1") != std::string::npos);
  CHECK(r.err.find("sum") != std::string::npos);
}

TEST_CASE("frechet: contains the optimization interval; binary only") {
  Fixture fx;
  const auto opt = parse_stdout(run_cli(cat({"bounds", "--lambda=-1,1"}, fx.data_args())));
  const auto fre = run_cli(cat({"frechet", "--lambda=-1,1"}, fx.data_args()));
  REQUIRE(fre.code == 0);
  const json f = parse_stdout(fre);
  CHECK(f.at("aggregate").at("lower").get<double>() <=
        opt.at("aggregate").at("lower").get<double>() + 1e-9);
  CHECK(f.at("aggregate").at("upper").get<double>() >=
        opt.at("aggregate").at("upper").get<double>() - 1e-9);

  // without --binary the outcome is declared continuous and frechet refuses
  const auto nb = run_cli({"frechet", "--lambda=-1,1", "--support", fx.support, "--groups",
                           fx.groups, "--marginals", fx.marginals});
  CHECK(nb.code == 2);
  CHECK(nb.err.find("binary") != std::string::npos);
}

TEST_CASE("ci: interval accounting, files, and alpha nesting") {
  Fixture fx;
  TempDir outdir;
  const std::string out = outdir.sub("ci");
  const auto r = run_cli(cat({"ci", "--lambda=-1,1", "--alpha", "0.05", "--out", out},
                             fx.data_args()));
  REQUIRE(r.code == 0);
  const json j = json::parse(slurp((fs::path(out) / "ci.json").string()));
  CHECK(j.at("num_intervals").get<long long>() == 4);
  CHECK(j.at("level_each").get<double>() == doctest::Approx(1.0 - 0.05 / 4).epsilon(1e-12));
  CHECK(fs::exists(fs::path(out) / "intervals.csv"));
  const std::string csv = slurp((fs::path(out) / "intervals.csv").string());
  CHECK(csv.find("kind") != std::string::npos);

  // point bounds sit inside the confidence set
  const double plo = j.at("point").at("aggregate").at("lower").get<double>();
  const double phi = j.at("point").at("aggregate").at("upper").get<double>();
  const double clo = j.at("d_ci").at("lower").get<double>();
  const double chi = j.at("d_ci").at("upper").get<double>();
  CHECK(clo <= plo + 1e-9);
  CHECK(chi >= phi - 1e-9);

  const auto strict = parse_stdout(run_cli(cat({"ci", "--lambda=-1,1", "--alpha", "0.01"},
                                               fx.data_args())));
  const auto loose = parse_stdout(run_cli(cat({"ci", "--lambda=-1,1", "--alpha", "0.20"},
                                              fx.data_args())));
  CHECK(strict.at("d_ci").at("lower").get<double>() <=
        loose.at("d_ci").at("lower").get<double>() + 1e-6);
  CHECK(strict.at("d_ci").at("upper").get<double>() >=
        loose.at("d_ci").at("upper").get<double>() - 1e-6);
}

TEST_CASE("ci: counts are mandatory") {
  TempDir dir;
  json ds{{"support", {{"point_ids", {"a", "b"}}, {"points", {{0.0}, {1.0}}}}},
          {"range", {{"lo", 0.0}, {"hi", 1.0}}},
          {"binary_outcome", true},
          {"groups",
           {{{"id", "g1"},
             {"share", 1.0},
             {"y_mean", 0.6},
             {"marginals", {0.3, 0.7}}}}}};  // no count field
  const std::string path = dir.file("nocount.json", ds.dump());
  const auto r = run_cli({"ci", "--lambda=-1,1", "--data", path});
  CHECK(r.code == 2);
  CHECK(r.err.find("count") != std::string::npos);
}

TEST_CASE("inconsistent finer moments surface as a numerical failure") {
  Fixture fx;
  const std::string finer = fx.dir.file("finer.csv",
                                        "group_id,covariate,value,y_mean\n"
                                        "g1,v1,1,0.99\n");
  const auto r = run_cli(cat({"bounds", "--lambda=-1,1", "--finer", finer, "--use-finer"},
                             fx.data_args()));
  CHECK(r.code == 3);
  CHECK(r.err.find("g1") != std::string::npos);
}

TEST_CASE("simulate: deterministic summaries for a fixed seed") {
  TempDir dir;
  aggbounds::sim::JointSpec spec;
  spec.support = aggbounds::CovariateSupport::product({{0.0, 1.0}});
  spec.range = {0.0, 1.0};
  spec.binary_outcome = true;
  spec.group_ids = {"a", "b"};
  spec.joints.resize(2, 2);
  spec.joints << 0.3, 0.7, 0.6, 0.4;
  spec.cond_means.resize(2, 2);
  spec.cond_means << 0.25, 0.75, 0.4, 0.6;
  spec.shares.resize(2);
  spec.shares << 0.5, 0.5;
  const std::string spec_path = dir.file("spec.json", aggbounds::io::spec_to_json(spec).dump());

  const std::string out1 = dir.sub("s1");
  const std::string out2 = dir.sub("s2");
  const std::vector<std::string> base{"simulate", "--spec", spec_path, "--reps", "2",
                                      "--n", "200", "--seed", "99"};
  REQUIRE(run_cli(cat(base, {"--out", out1})).code == 0);
  REQUIRE(run_cli(cat(base, {"--out", out2})).code == 0);
  CHECK(slurp(out1 + "/summary.json") == slurp(out2 + "/summary.json"));
  CHECK(slurp(out1 + "/reps.csv") == slurp(out2 + "/reps.csv"));

  const json s = json::parse(slurp(out1 + "/summary.json"));
  CHECK(s.at("reps").get<int>() == 2);
  CHECK(s.at("population").at("lower").get<double>() <
        s.at("population").at("upper").get<double>());

  CHECK(run_cli({"simulate", "--preset", "7"}).code == 2);
  CHECK(run_cli({"simulate"}).code == 2);
}

TEST_CASE("oracle: search, grid, and joint-known ranges line up") {
  Fixture fx;
  TempDir outdir;
  const std::string out = outdir.sub("oracle");
  const auto r = run_cli(cat({"oracle", "--lambda=-1,1", "--grid", "0.05", "--out", out},
                             fx.data_args()));
  REQUIRE(r.code == 0);
  const json j = json::parse(slurp((fs::path(out) / "oracle.json").string()));
  REQUIRE(j.at("groups").size() == 1);
  const json& row = j.at("groups").at(0);
  // the joint is pinned here, so all three agree and the ranges collapse
  const double slo = row.at("search").at("lower").get<double>();
  CHECK(row.at("oracle").at("lower").get<double>() == doctest::Approx(slo).epsilon(1e-9));
  CHECK(row.at("l_range").at("lower").get<double>() == doctest::Approx(slo).epsilon(1e-9));
  CHECK(row.at("l_range").at("upper").get<double>() == doctest::Approx(slo).epsilon(1e-9));
  CHECK(fs::exists(fs::path(out) / "oracle.csv"));
}

TEST_CASE("oracle: positive-dimensional group shows a genuine joint-known spread") {
  TempDir dir;
  const std::string support = dir.file("support.csv", "point_id,v1,v2\np1,0,0\np2,0,1\np3,1,0\np4,1,1\n");
  const std::string groups = dir.file("groups.csv", "group_id,count,y_mean\ng1,500,0.8\n");
  const std::string marginals = dir.file("marginals.csv",
                                         "group_id,covariate,value,prob\n"
                                         "g1,v1,0,0.5\ng1,v1,1,0.5\n"
                                         "g1,v2,0,0.4\ng1,v2,1,0.6\n");
  const auto r = run_cli({"oracle", "--lambda=1,0,0,0", "--grid", "0.01", "--support", support,
                          "--groups", groups, "--marginals", marginals, "--binary"});
  REQUIRE(r.code == 0);
  const json row = parse_stdout(r).at("groups").at(0);
  const double l_lo = row.at("l_range").at("lower").get<double>();
  const double l_hi = row.at("l_range").at("upper").get<double>();
  CHECK(l_hi - l_lo > 1e-4);                      // knowing the joint would help
  CHECK(row.at("search").at("lower").get<double>() == doctest::Approx(l_lo).epsilon(1e-6));
  CHECK(l_hi == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("config file supplies defaults that flags override") {
  Fixture fx;
  TempDir dir;
  json cfg{{"support", fx.support}, {"groups", fx.groups},   {"marginals", fx.marginals},
           {"binary", true},        {"lambda", {-1.0, 1.0}}};
  const std::string cfg_path = dir.file("cfg.json", cfg.dump());
  const auto from_cfg = run_cli({"bounds", "--config", cfg_path});
  REQUIRE(from_cfg.code == 0);
  const json j = parse_stdout(from_cfg);
  CHECK(j.at("aggregate").at("lower").get<double>() == doctest::Approx(-4.0 / 7.0).epsilon(1e-12));

  // the explicit flag wins: target switches to E[Y | X=0], identified as [0, 1]
  const auto overridden = run_cli({"bounds", "--config", cfg_path, "--lambda=1,0"});
  const json jo = parse_stdout(overridden);
  CHECK(std::abs(jo.at("aggregate").at("lower").get<double>()) <= 1e-9);
  CHECK(jo.at("aggregate").at("upper").get<double>() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("usage errors and help") {
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"bounds", "--no-such-flag"}).code == 2);
  CHECK(run_cli({}).code == 2);  // a subcommand is required
  Fixture fx;
  CHECK(run_cli(cat({"bounds"}, fx.data_args())).code == 2);  // no lambda or contrast
  CHECK(run_cli(cat({"bounds", "--lambda=1", "--contrast", "cell(a)"}, fx.data_args())).code ==
        2);  // both given
  CHECK(run_cli(cat({"bounds", "--lambda=1,2,3"}, fx.data_args())).code == 2);  // wrong length
}
