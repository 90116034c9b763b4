#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "oracles.hpp"
#include "twostage/commands.hpp"
#include "twostage/csv_io.hpp"
#include "twostage/error.hpp"
#include "twostage/simulation.hpp"

using namespace twostage;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("twostage_tests_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(TWOSTAGE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig field_power(double sigma2) {
  RunConfig cfg;
  cfg.command = Command::Power;
  cfg.p = "0.25,0.5,0.75";
  cfg.q = "1/3,1/3,1/3";
  cfg.n = 100;
  cfg.sigma2 = sigma2;
  cfg.r = 0.02;
  cfg.mu = 0.03;
  cfg.conservative = true;
  return cfg;
}

int count_of(const nlohmann::json& warnings, const std::string& needle) {
  int hits = 0;
  for (const auto& w : warnings) hits += w.get<std::string>().find(needle) != std::string::npos;
  return hits;
}

}  // namespace

TEST_CASE("list parsing") {
  const auto v = parse_list("0.25, 1/2,3/4", "p");
  REQUIRE(v.size() == 3);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 0.75);
  CHECK_THROWS_AS(parse_list("", "p"), Error);
  CHECK_THROWS_AS(parse_list("1/0", "p"), Error);
  CHECK_THROWS_AS(parse_list("abc", "p"), Error);
  CHECK(parse_effects("all").size() == 3);
  CHECK_THROWS_AS(parse_effects("ate"), Error);
}

TEST_CASE("analyze") {
  SUBCASE("constant outcomes") {
    const auto path = scratch("constant.csv");
    std::string text = "cluster_id,mechanism,treated,outcome\n";
    for (int j = 0; j < 9; ++j) {
      const std::string id = "k" + std::to_string(j) + "," + std::to_string(j % 3 + 1);
      text += id + ",1,4\n" + id + ",1,4\n" + id + ",0,4\n" + id + ",0,4\n";
    }
    write_file(path, text);
    RunConfig cfg;
    cfg.data_path = path.string();
    const auto report = run_analyze(cfg);
    for (const auto& kind : {"de", "mde", "se"}) {
      for (const auto& c : report["effects"][kind]["components"]) CHECK(c["estimate"] == 0.0);
      CHECK(report["effects"][kind]["test"]["reject"] == false);
      CHECK(report["effects"][kind]["test"]["statistic"] == 0.0);
    }
    CHECK(report["effects"]["se"]["test"]["dof"] == 4);
    CHECK(report["ade_variances"].size() == 3);
    CHECK(report["ade_variances"][0].contains("hh_variance"));
    CHECK(report["ade_variances"][0].contains("dhat_variance"));
    CHECK(report["regression_check"]["pass"] == true);
    CHECK(report["schema"] == "twostage-report");
  }

  SUBCASE("simulated data recovers theta") {
    PowerConfig pc;
    pc.p = {0.25, 0.5, 0.75};
    pc.q = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    pc.n = 20;
    pc.r = 0.2;
    pc.rho = 0.3;
    auto dgp = dgp_from_power(pc, 90);
    dgp.theta.resize(6);
    dgp.theta << 0.8, 0.1, 0.4, 0.3, 0.2, -0.5;
    Rng rng = make_stream(71, 0);
    const auto table = generate_potential_outcomes(dgp, rng);
    const auto data = realize_data(table, dgp.spec, rng);
    const auto path = scratch("simulated.csv");
    write_csv(path.string(), data);
    RunConfig cfg;
    cfg.data_path = path.string();
    const auto report = run_analyze(cfg);
    const double truth[3] = {0.7, 0.1, 0.7};
    for (int a = 0; a < 3; ++a) {
      const auto& c = report["effects"]["de"]["components"][a];
      CHECK(std::abs(c["estimate"].get<double>() - truth[a]) <= 3.0 * c["std_error"].get<double>());
    }

    const auto first = render(report);
    const auto back = read_csv(path.string()).data;
    write_csv(path.string(), back);
    CHECK(render(run_analyze(cfg)) == first);
  }

  SUBCASE("dropped clusters are reported once") {
    const auto path = scratch("drop.csv");
    std::string text = "cluster_id,mechanism,treated,outcome\n";
    for (int j = 0; j < 6; ++j) {
      const std::string id = "k" + std::to_string(j) + "," + std::to_string(j % 2 + 1);
      text += id + ",1," + std::to_string(j) + "\n" + id + ",0," + std::to_string(j * j % 5) + "\n";
    }
    text += "lonely,1,1,3\nlonely,1,1,4\n";
    write_file(path, text);
    RunConfig cfg;
    cfg.data_path = path.string();
    CHECK_THROWS_AS(run_analyze(cfg), Error);
    cfg.allow_drop = true;
    const auto report = run_analyze(cfg);
    CHECK(report["data"]["dropped"].size() == 1);
    CHECK(count_of(report["warnings"], "dropped") == 1);
    CHECK(count_of(report["warnings"], "hh_variance") == 1);
  }
}

TEST_CASE("power") {
  const auto pc = run_power(field_power(0.167));
  const long long de = pc["sample_sizes"]["de"]["J_required"];
  const long long mde = pc["sample_sizes"]["mde"]["J_required"];
  const long long se = pc["sample_sizes"]["se"]["J_required"];
  CHECK(de >= 405);
  CHECK(de <= 455);
  CHECK(mde >= 92);
  CHECK(mde <= 105);
  CHECK(se >= 480);
  CHECK(se <= 545);
  CHECK(pc["warnings"].size() == 1);

  auto zero = field_power(0.167);
  zero.mu = 0.0;
  try {
    run_power(zero);
    FAIL("expected ZeroAlternative");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroAlternative);
  }
}

TEST_CASE("power sweep") {
  for (int n : {20, 100}) {
    RunConfig cfg = field_power(1.0);
    cfg.n = n;
    cfg.mu = 0.5;
    cfg.sweep_r = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    const auto out = scratch("sweep" + std::to_string(n) + ".csv");
    cfg.sweep_out = out.string();
    const auto report = run_power(cfg);
    const auto& rows = report["sweep"]["rows"];
    REQUIRE(rows.size() == 11);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      for (const auto& key : {"J_de", "J_mde", "J_se"}) {
        CHECK(rows[i][key].get<long long>() >= rows[i - 1][key].get<long long>());
      }
    }
    CHECK(count_of(report["warnings"], "1/(n+1)") == 1);
    const auto csv = read_file(out);
    CHECK(csv.rfind("r,J_de,J_mde,J_se\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
  }
}

TEST_CASE("simulate is reproducible") {
  RunConfig cfg;
  cfg.command = Command::Simulate;
  cfg.p = "0.25,0.5,0.75";
  cfg.n = 10;
  cfg.r = 0.3;
  cfg.rho = 0.3;
  cfg.reps = 100;
  cfg.clusters = 30;
  cfg.seed = 5;
  const auto a = render(run(cfg));
  const auto b = render(run(cfg));
  CHECK(a == b);
  const auto report = nlohmann::json::parse(a);
  CHECK(report["power"]["de"]["clusters"] == 30);
  CHECK(report["power"]["se"]["reps"] == 100);
}

TEST_CASE("compare") {
  RunConfig cfg;
  cfg.command = Command::Compare;
  cfg.p = "0.4,0.4,0.4";
  cfg.q = "0.2,0.3,0.5";
  cfg.n = 10;
  cfg.r = 0.3;
  cfg.clusters = 30;
  cfg.reps = 0;
  const auto report = run(cfg);
  CHECK(report["ratios"]["complete"].get<double>() == 1.0 - 0.3);
  CHECK_FALSE(report.contains("monte_carlo"));
  cfg.p = "0.3,0.5,0.7";
  cfg.q = "";
  cfg.reps = 2000;
  const auto with_mc = run(cfg);
  CHECK(with_mc.contains("monte_carlo"));
  CHECK(render(run(cfg)) == render(with_mc));
}

TEST_CASE("command-line exit codes") {
  CHECK(cli("--help") == 0);
  CHECK(cli("power --p 0.25,0.5,0.75 --q 1/3,1/3,1/3 --r 0.02 --sigma2 0.167 --mu 0.03 "
            "--conservative") == 0);
  CHECK(cli("power --p 0.25,0.5,0.75 --mu 0") == 2);
  CHECK(cli("power --bogus") == 2);
  CHECK(cli("analyze --data /nonexistent/file.csv") == 2);

  const auto singular = scratch("singular.csv");
  std::string text = "cluster_id,mechanism,treated,outcome\n";
  for (int j = 0; j < 4; ++j) {
    const std::string id = "k" + std::to_string(j) + "," + std::to_string(j % 2 + 1);
    text += id + ",1,1\n" + id + ",0,0\n";
  }
  write_file(singular, text);
  CHECK(cli("analyze --data " + singular.string()) == 3);

  const auto out = scratch("report.json");
  CHECK(cli("power --p 0.5,0.5 --r 0.2 --out " + out.string()) == 0);
  const auto report = nlohmann::json::parse(read_file(out));
  CHECK(report["command"] == "power");
}
