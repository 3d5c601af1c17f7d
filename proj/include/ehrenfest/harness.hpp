#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ehrenfest/functions.hpp"
#include "ehrenfest/grid.hpp"
#include "ehrenfest/kernel.hpp"
#include "ehrenfest/simulator.hpp"
#include "json.hpp"

namespace ehrenfest::harness {

inline constexpr int kConfigVersion = 1;

enum class ExperimentKind { hydro, clt, mdp_marginal, replacement, martingale, tilted_lln, rate_eval };

// CLI spelling: hydro, clt, mdp, replacement, martingale, tilted-lln, rate.
std::string to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

enum class Sampler { simulate, exact };

struct ModelConfig {
  // "constant c", "product <f> | <g>", "polynomial c00 c01 ; c10 c11", "table PATH".
  std::string kernel = "constant 1";
  // A ScalarFunction spec or "table PATH".
  std::string profile = "const 1";
  std::vector<std::size_t> n_list{100};
  double alpha = 0.75;
  double t_max = 1.0;
  std::size_t n_time = 200;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  ExperimentKind kind = ExperimentKind::hydro;
  // True when [experiment] name was given; a CLI subcommand must then match it.
  bool kind_declared = false;
  ModelConfig model;
  std::size_t replicas = 1000;
  std::uint64_t master_seed = 1;
  std::filesystem::path out_dir = "out";
  // Relative table paths in kernel/profile specs resolve against this.
  std::filesystem::path base_dir = ".";

  // Observation time for hydro and clt.
  double t_obs = 1.0;
  Sampler sampler = Sampler::simulate;
  // Test function f, tilt G(t, x) = g(x) * g_time(t), observable h.
  std::string f = "const 1";
  std::string g = "sin 1";
  std::string g_time = "const 1";
  std::string h = "sin 1";
  // Initial-law perturbation for tilted-lln.
  std::string f_init = "const 0";

  double epsilon = 0.1;
  double x_level = 2.0;
  double t_star = 0.0;
  // Fitted hydro slope window.
  double slope_low = -0.6;
  double slope_high = -0.4;
  double gap_tolerance = 0.2;
  double lln_slack = 0.05;

  bool mgf = true;
  double mgf_alpha = 0.6;
  std::size_t bootstrap = 400;
  // Monte Carlo branches of replacement and mdp run only up to this N.
  std::size_t mc_max_n = 10000;
  double ess_floor = 50.0;

  // Rate module settings; the mdp rate is solved on a grid of rate_n urns.
  std::size_t basis_spatial = 16;
  std::size_t basis_temporal = 8;
  std::size_t rate_n = 200;
};

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);
// Throws std::invalid_argument describing the first violated rule.
void validate(const ExperimentConfig& cfg);

// Coefficients materialised on an N-urn grid.
struct Model {
  Grid grid;
  RateKernel kernel;
  InitialProfile profile;
  ScalingSequence scaling;
};

RateKernel parse_kernel(const std::string& spec, std::size_t n,
                        const std::filesystem::path& base_dir = ".");
InitialProfile parse_profile(const std::string& spec, std::size_t n,
                             const std::filesystem::path& base_dir = ".");
Model build_model(const ExperimentConfig& cfg, std::size_t n);
SpaceTimeFn build_tilt(const ExperimentConfig& cfg, const Grid& grid);

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  // [exact], [closed-form] or [MC-cross].
  std::string oracle;
  std::string detail;
};

struct CsvTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ReportRecord {
  std::string experiment;
  nlohmann::json parameters;
  std::vector<nlohmann::json> per_n;
  nlohmann::json fits = nlohmann::json::object();
  std::vector<Check> checks;
  std::vector<std::string> notes;
  std::uint64_t events = 0;
  std::vector<CsvTable> tables;
  double wall_seconds = 0.0;
  int threads = 1;

  bool passed() const;
  // Wall-clock data sits under "timing" and nowhere else.
  nlohmann::json to_json() const;
};

// Drops the "timing" member, leaving the part that must be reproducible.
nlohmann::json without_timing(nlohmann::json report);

ReportRecord run_hydro_convergence(const ExperimentConfig& cfg);
ReportRecord run_clt_variance(const ExperimentConfig& cfg);
ReportRecord run_replacement_check(const ExperimentConfig& cfg);
ReportRecord run_mdp_marginal(const ExperimentConfig& cfg);
ReportRecord run_martingale(const ExperimentConfig& cfg);
ReportRecord run_tilted_lln(const ExperimentConfig& cfg);
ReportRecord run_rate_eval(const ExperimentConfig& cfg);
ReportRecord run_experiment(const ExperimentConfig& cfg);

// report.json plus one CSV per table in dir.
void write_report(const ReportRecord& report, const std::filesystem::path& dir);
// One line per check: PASS/FAIL, name, value, tolerance, oracle.
void print_checks(std::ostream& out, const ReportRecord& report);

}  // namespace ehrenfest::harness
