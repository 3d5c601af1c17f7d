#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ehrenfest/harness.hpp"
#include "ehrenfest/table_io.hpp"

using namespace ehrenfest;
using namespace ehrenfest::harness;

namespace {

ExperimentConfig parse(const std::string& text, const std::filesystem::path& base = ".") {
  std::istringstream in(text);
  return parse_config(in, base);
}

std::string error_of(const std::string& text, const std::filesystem::path& base = ".") {
  try {
    parse(text, base);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

const char* kMartingale = R"(
[meta]
version = 1
[model]
n = 20
n_time = 20
[run]
replicas = 8
seed = 5
[experiment]
name = martingale
g = sin 1
)";

}  // namespace

TEST_CASE("experiment names round-trip through the CLI spelling") {
  for (auto k : {ExperimentKind::hydro, ExperimentKind::clt, ExperimentKind::mdp_marginal,
                 ExperimentKind::replacement, ExperimentKind::martingale,
                 ExperimentKind::tilted_lln, ExperimentKind::rate_eval}) {
    CHECK(parse_kind(to_string(k)) == k);
  }
  CHECK(parse_kind("tilted_lln") == ExperimentKind::tilted_lln);
  CHECK_THROWS_AS(parse_kind("ldp"), std::invalid_argument);
}

TEST_CASE("config parsing fills fields and defaults") {
  const auto cfg = parse(kMartingale);
  CHECK(cfg.kind == ExperimentKind::martingale);
  CHECK(cfg.kind_declared);
  CHECK(cfg.model.n_list == std::vector<std::size_t>{20});
  CHECK(cfg.model.alpha == 0.75);
  CHECK(cfg.replicas == 8);
  CHECK(cfg.master_seed == 5);
  CHECK(cfg.t_obs == cfg.model.t_max);
}

TEST_CASE("config validation rejects malformed input") {
  CHECK(error_of("[model]\nn = 10\n").find("version") != std::string::npos);
  CHECK(error_of("[meta]\nversion = 2\n").find("unsupported version") != std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[model]\nn = 100 10\n").find("strictly increasing") !=
        std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[model]\nn = 1\n").find("at least 2") != std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[model]\nalpha = 0.5\n").find("alpha") !=
        std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[run]\nreplicas = 0\n").find("replicas") !=
        std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[model]\nn_time = 10\n[experiment]\nt_star = 0.25\n")
            .find("node of the time grid") != std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[experiment]\nf = tan 1\n") != "");
  CHECK(error_of("[meta]\nversion = 1\n[model]\nkernel = gaussian 1\n").find("unknown kind") !=
        std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[model]\nfoo = 1\n").find("unknown key 'foo'") !=
        std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[extra]\nx = 1\n").find("unknown section") !=
        std::string::npos);
  CHECK(error_of("[meta]\nversion = 1\n[experiment]\nsampler = gibbs\n").find("sampler") !=
        std::string::npos);
}

TEST_CASE("a table kernel whose size disagrees with N is rejected") {
  const auto dir = std::filesystem::temp_directory_path() / "ehrenfest_harness_table";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "k.csv");
    write_kernel_table(out, RateKernel::constant(3, 1.0));
  }
  const std::string ini = "[meta]\nversion = 1\n[model]\nkernel = table k.csv\nn = ";
  CHECK_NOTHROW(parse(ini + "3\n", dir));
  const auto msg = error_of(ini + "3 4\n", dir);
  CHECK(msg.find("N = 3") != std::string::npos);
  CHECK(msg.find("lists 4") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a single replica runs and flags its standard error as undefined") {
  auto cfg = parse(kMartingale);
  cfg.replicas = 1;
  const auto rep = run_martingale(cfg);
  REQUIRE(rep.per_n.size() == 1);
  CHECK(rep.per_n[0]["gamma"]["se_defined"] == false);
  CHECK_NOTHROW(rep.to_json().dump());
}

TEST_CASE("reports are reproducible up to the timing member") {
  const auto cfg = parse(kMartingale);
  const auto a = run_martingale(cfg).to_json();
  const auto b = run_martingale(cfg).to_json();
  CHECK(a.contains("timing"));
  CHECK_FALSE(without_timing(a).contains("timing"));
  CHECK(without_timing(a).dump() == without_timing(b).dump());
}

TEST_CASE("write_report emits report.json and one CSV per table") {
  auto cfg = parse(kMartingale);
  const auto rep = run_tilted_lln([&] {
    auto c = cfg;
    c.kind = ExperimentKind::tilted_lln;
    return c;
  }());
  const auto dir = std::filesystem::temp_directory_path() / "ehrenfest_harness_report";
  std::filesystem::remove_all(dir);
  write_report(rep, dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  for (const auto& t : rep.tables) CHECK(std::filesystem::exists(dir / (t.name + ".csv")));
  std::ostringstream lines;
  print_checks(lines, rep);
  CHECK(lines.str().find(rep.passed() ? "PASS" : "FAIL") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("importance sampling with the marginal-rate witness reaches a far Poisson tail") {
  // P(theta_T0(1) >= 2) at N = 1e4 is about e^{-192}.
  auto cfg = parse(R"(
[meta]
version = 1
[model]
n = 10000
n_time = 50
[run]
replicas = 500
seed = 9
[experiment]
name = mdp
f = const 1
x = 2
t_star = 1
mc_max_n = 10000
[basis]
spatial = 4
temporal = 3
)");
  const auto rep = run_mdp_marginal(cfg);
  bool found = false;
  for (const auto& c : rep.checks) {
    if (c.name.find("importance sampling vs exact") == std::string::npos) continue;
    found = true;
    CHECK(c.passed);
  }
  CHECK(found);
  const auto& is = rep.per_n[0]["importance"];
  // Log-weights spread with the Poisson total (sd near 20), so the event ESS
  // at 500 replicas sits near the floor; it is reported either way.
  CHECK(is["ess_event"].get<double>() > 1.0);
  CHECK(is["value"].get<double>() > 0.0);
}
