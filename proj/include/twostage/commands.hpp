#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostage/estimation.hpp"
#include "twostage/rng.hpp"

namespace twostage {

inline constexpr int kReportVersion = 1;

enum class Command { Analyze, Power, Simulate, Compare };

// Everything a subcommand may read. List-valued fields arrive as text so that
// fractions such as "1/3" survive exactly.
struct RunConfig {
  Command command = Command::Analyze;
  std::string data_path;
  std::string effect = "all";  // de, mde, se or all
  double alpha = 0.05;
  double beta = 0.2;

  std::string p;  // comma-separated
  std::string q;  // comma-separated; empty means equal shares
  int n = 100;
  double sigma2 = 1.0;
  double r = 0.0;
  std::optional<double> rho;
  double mu = 0.5;
  bool conservative = false;

  int reps = 1000;
  std::uint64_t seed = kDefaultSeed;
  bool allow_drop = false;

  std::string sweep_r;    // power: comma-separated r grid
  std::string sweep_out;  // power: CSV path for the sweep table

  long long clusters = 0;  // simulate: 0 uses the formula J; compare: required
  std::string scheme = "auto";
  bool unequal_sizes = false;
  bool fixed_population = false;
  bool redraw_theta = false;
};

// "0.25, 1/2,0.75" -> {0.25, 0.5, 0.75}; throws InvalidConfig.
std::vector<double> parse_list(const std::string& text, const std::string& name);
std::vector<EffectKind> parse_effects(const std::string& text);

nlohmann::json run_analyze(const RunConfig& cfg);
nlohmann::json run_power(const RunConfig& cfg);
nlohmann::json run_simulate(const RunConfig& cfg);
nlohmann::json run_compare(const RunConfig& cfg);
nlohmann::json run(const RunConfig& cfg);

// Two-space indented JSON with a trailing newline.
std::string render(const nlohmann::json& report);

}  // namespace twostage
