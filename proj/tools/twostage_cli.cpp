#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "twostage/commands.hpp"
#include "twostage/error.hpp"

namespace {

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

void add_power_options(CLI::App& app, twostage::RunConfig& cfg, double& rho) {
  app.add_option("--p", cfg.p, "treated fraction per mechanism, comma-separated")->required();
  app.add_option("--q", cfg.q, "mechanism shares J_a/J, comma-separated (default equal)");
  app.add_option("--n", cfg.n, "common cluster size")->capture_default_str();
  app.add_option("--sigma2", cfg.sigma2, "total outcome variance")->capture_default_str();
  app.add_option("--r", cfg.r, "intracluster correlation")->capture_default_str();
  app.add_option("--rho", rho, "correlation of potential outcomes (omit for the rho-free bound)");
  app.add_option("--mu", cfg.mu, "effect size")->capture_default_str();
  app.add_option("--alpha", cfg.alpha, "test level")->capture_default_str();
  app.add_option("--beta", cfg.beta, "type II error")->capture_default_str();
  app.add_flag("--conservative", cfg.conservative, "use the rho-free blocks even if --rho is set");
  app.add_option("--effect", cfg.effect, "de, mde, se or all")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-based analysis and power for two-stage randomized experiments"};
  app.require_subcommand(1);
  twostage::RunConfig cfg;
  std::string out_path;
  double rho = 0.0;

  auto* analyze = app.add_subcommand("analyze", "estimate effects and test from a CSV file");
  analyze->add_option("--data", cfg.data_path, "CSV with cluster_id,mechanism,treated,outcome")
      ->required();
  analyze->add_option("--effect", cfg.effect, "de, mde, se or all")->capture_default_str();
  analyze->add_option("--alpha", cfg.alpha, "test level")->capture_default_str();
  analyze->add_flag("--allow-drop", cfg.allow_drop, "drop clusters lacking an arm instead of failing");

  auto* power = app.add_subcommand("power", "required number of clusters");
  add_power_options(*power, cfg, rho);
  power->add_option("--sweep-r", cfg.sweep_r, "comma-separated r grid; reports J against r");
  power->add_option("--sweep-out", cfg.sweep_out, "write the sweep as CSV (r,J_de,J_mde,J_se)");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo power");
  add_power_options(*simulate, cfg, rho);
  simulate->add_option("--reps", cfg.reps, "replicates")->capture_default_str();
  simulate->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  simulate->add_option("--clusters", cfg.clusters, "J (default: the sample-size formula)");
  simulate->add_option("--scheme", cfg.scheme, "auto, de-alt, mde-alt, se-alt or null")
      ->capture_default_str();
  simulate->add_flag("--unequal", cfg.unequal_sizes, "cluster sizes 0.6n, n, 1.4n in turn");
  simulate->add_flag("--fixed-population", cfg.fixed_population,
                     "draw the potential outcomes once and redraw only assignments");
  simulate->add_flag("--redraw-theta", cfg.redraw_theta, "draw new theta every replicate");

  auto* compare = app.add_subcommand("compare", "two-stage vs complete vs cluster randomization");
  compare->add_option("--p", cfg.p, "treated fraction per mechanism")->required();
  compare->add_option("--q", cfg.q, "mechanism shares (default equal)");
  compare->add_option("--n", cfg.n, "cluster size")->capture_default_str();
  compare->add_option("--r", cfg.r, "intracluster correlation")->capture_default_str();
  compare->add_option("--rho", rho, "correlation of potential outcomes");
  compare->add_option("--sigma2", cfg.sigma2, "total outcome variance")->capture_default_str();
  compare->add_option("--mu", cfg.mu, "average treatment effect of the population")
      ->capture_default_str();
  compare->add_option("--clusters", cfg.clusters, "J")->required();
  compare->add_option("--reps", cfg.reps, "randomizations for the Monte Carlo check (0 skips)");
  compare->add_option("--seed", cfg.seed, "random seed")->capture_default_str();

  for (auto* sub : {analyze, power, simulate, compare}) {
    sub->add_option("--out", out_path, "write the report here instead of stdout");
  }

  compare->callback([&] {
    if (compare->count("--reps") == 0) cfg.reps = 0;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  if (analyze->parsed()) cfg.command = twostage::Command::Analyze;
  if (power->parsed()) cfg.command = twostage::Command::Power;
  if (simulate->parsed()) cfg.command = twostage::Command::Simulate;
  if (compare->parsed()) cfg.command = twostage::Command::Compare;
  for (auto* sub : {power, simulate, compare}) {
    if (sub->parsed() && sub->count("--rho") > 0) cfg.rho = rho;
  }

  try {
    const std::string text = twostage::render(twostage::run(cfg));
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) {
        std::cerr << "error: cannot write '" << out_path << "'\n";
        return kInputError;
      }
      out << text;
    }
  } catch (const twostage::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return twostage::is_numerical(e.code()) ? kNumericalError : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return 0;
}
