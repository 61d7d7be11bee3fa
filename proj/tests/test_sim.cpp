#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "drcox/sim.hpp"
#include "drcox/study.hpp"
#include "drcox/survival.hpp"

using namespace drcox;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

fs::path scratch_dir() {
  return fs::temp_directory_path() / ("drcox_test_" + std::to_string(::getpid()));
}

struct ScratchCleanup {
  ~ScratchCleanup() {
    std::error_code ec;
    fs::remove_all(scratch_dir(), ec);
  }
} cleanup;

fs::path scratch(const std::string& name) {
  fs::create_directories(scratch_dir());
  return scratch_dir() / name;
}

// Runs the CLI and returns its exit status; output goes to `log`.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DRCOX_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

StudyConfig small_config() {
  StudyConfig c;
  c.scenario.scenario = Scenario::one;
  c.scenario.n = 60;
  c.scenario.seed = 11;
  c.replications = 4;
  c.folds = 2;
  c.estimators = {"mple", "full", "ipcw-km-a", "aipcw-cox-km-a"};
  return c;
}

}  // namespace

TEST_CASE("latent failure time hand value") {
  CHECK(latent_failure_time(0.5, false, -1.0) == Approx(-std::log(0.75)).epsilon(1e-15));
  CHECK(latent_failure_time(0.5, true, -1.0) == Approx(-std::log(0.75) * std::exp(1.0)).epsilon(1e-15));
}

TEST_CASE("generation is deterministic and respects tau") {
  ScenarioSpec s;
  s.n = 300;
  s.seed = 5;
  for (Scenario sc : {Scenario::one, Scenario::two, Scenario::custom_independent}) {
    s.scenario = sc;
    const SimulatedData a = generate(s);
    const SimulatedData b = generate(s);
    CHECK(to_csv(a.observed) == to_csv(b.observed));
    CHECK(to_csv(a.full) == to_csv(b.full));
    REQUIRE(a.observed.size() == 300);
    CHECK(a.observed.dim() == 2);
    for (std::size_t i = 0; i < a.observed.size(); ++i) {
      CHECK(a.observed.time(i) <= s.tau);
      CHECK(a.full.delta(i));
      CHECK(a.full.group(i) == a.observed.group(i));
      // An observed failure is the latent failure time itself.
      if (a.observed.delta(i)) CHECK(a.full.time(i) == a.observed.time(i));
      else CHECK(a.full.time(i) >= a.observed.time(i));
    }
  }
  ScenarioSpec other = s;
  other.seed = 6;
  CHECK(to_csv(generate(other).observed) != to_csv(generate(s).observed));
}

TEST_CASE("scenario specs are validated") {
  ScenarioSpec s;
  s.n = 10;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.n = 100;
  s.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK(parse_scenario("2") == Scenario::two);
  CHECK(parse_scenario("custom-independent") == Scenario::custom_independent);
  CHECK_THROWS_AS(parse_scenario("three"), ValidationError);
}

TEST_CASE("custom-independent failure times are exponential with the stated hazard ratio") {
  ScenarioSpec s;
  s.scenario = Scenario::custom_independent;
  s.n = 20000;
  s.seed = 3;
  const SimulatedData d = generate(s);
  // Product-limit of the censored sample tracks exp(-t e^{beta a}) per group.
  for (int a = 0; a < 2; ++a) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.observed.size(); ++i) {
      if (d.observed.group(i) == (a == 1)) rows.push_back(i);
    }
    const StepCurve km = product_limit(d.observed.subset(rows), Target::failure);
    for (double t : {0.2, 0.5, 0.9}) {
      CHECK(km.evaluate_left(t) == Approx(std::exp(-t * std::exp(-1.0 * a))).epsilon(0.02));
    }
  }
}

TEST_CASE("estimator names parse") {
  CHECK(parse_estimator("mple").kind == EstimatorKind::mple);
  const EstimatorSpec a = parse_estimator("aipcw-rsf-km-a");
  CHECK(a.kind == EstimatorKind::aipcw);
  CHECK(a.failure == NuisanceChoice::rsf);
  CHECK(a.censoring == NuisanceChoice::km_a);
  CHECK(parse_estimator("ipcw-a").censoring == NuisanceChoice::km_a);
  CHECK(parse_estimator("ipcw-1").censoring == NuisanceChoice::km);
  CHECK(parse_estimator_list("mple, full,ipcw-cox").size() == 3);
  CHECK_THROWS_AS(parse_estimator("aipcw-cox"), ValidationError);
  CHECK_THROWS_AS(parse_estimator("nope"), ValidationError);
}

TEST_CASE("config JSON round trip, hash and field errors") {
  StudyConfig c = small_config();
  const StudyConfig back = StudyConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(config_hash(back) == config_hash(c));
  StudyConfig threaded = c;
  threaded.threads = 4;
  CHECK(config_hash(threaded) == config_hash(c));
  StudyConfig seeded = c;
  seeded.scenario.seed = 12;
  CHECK(config_hash(seeded) != config_hash(c));

  auto error_of = [](const std::string& json) -> std::string {
    try {
      StudyConfig::from_json(json);
    } catch (const ValidationError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(error_of(R"({"scenario": "one", "replications": 0, "estimators": ["mple"]})")
            .find("replications") != std::string::npos);
  CHECK(error_of(R"({"scenario": "one", "estimators": ["mple"], "colour": 1})")
            .find("colour") != std::string::npos);
  CHECK(error_of(R"({"scenario": "one", "n": "many", "estimators": ["mple"]})")
            .find("n") != std::string::npos);
  CHECK(error_of("{not json").size() > 0);
  CHECK(StudyConfig::from_json(R"({"scenario": "2", "estimators": "mple,full"})").estimators.size() == 2);
}

TEST_CASE("report CSV round trip; SD absent with one replication") {
  StudyConfig c = small_config();
  const SimulationReport rep = run_study(c);
  const SimulationReport back = parse_report_csv(rep.to_csv());
  REQUIRE(back.rows.size() == rep.rows.size());
  CHECK(back.to_csv() == rep.to_csv());
  CHECK(rep.cp_margin() == Approx(1.96 * std::sqrt(0.95 * 0.05 / 4.0)));
  CHECK(rep.to_table().find("aipcw-cox-km-a") != std::string::npos);
  for (const ReportRow& r : rep.rows) {
    CHECK(r.n_ok + r.n_fail == 4);
    CHECK(r.cp >= 0.0);
    CHECK(r.cp <= 1.0);
  }
  CHECK_THROWS(rep.row("unknown"));

  c.replications = 1;
  const SimulationReport one = run_study(c);
  CHECK(!one.row("mple").sd.has_value());
  CHECK(!parse_report_csv(one.to_csv()).row("mple").sd.has_value());
}

TEST_CASE("replications do not depend on the thread count") {
  StudyConfig c = small_config();
  c.replications = 6;
  const SimulationReport a = summarize(c, run_replications(c, 1));
  const SimulationReport b = summarize(c, run_replications(c, 3));
  CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("replication seeds are base + r") {
  StudyConfig c = small_config();
  c.replications = 3;
  c.estimators = {"mple"};
  const ReplicationResults all = run_replications(c, 1);
  StudyConfig shifted = c;
  shifted.scenario.seed = c.scenario.seed + 1;
  shifted.replications = 2;
  const ReplicationResults tail = run_replications(shifted, 1);
  CHECK(all[1][0].beta == tail[0][0].beta);
  CHECK(all[2][0].beta == tail[1][0].beta);
}

TEST_CASE("command line: validation errors exit with 2") {
  const fs::path bad = scratch("bad.csv");
  spit(bad, "time,group,z1\n0.5,1,0.2\n");
  const fs::path log = scratch("bad.log");
  CHECK(cli("fit --input " + bad.string(), log) == 2);
  CHECK(slurp(log).find("delta") != std::string::npos);
  CHECK(cli("fit", log) == 2);
  CHECK(cli("fit --input " + bad.string() + " --folds 0", log) == 2);
  CHECK(cli("bogus", log) == 2);
}

TEST_CASE("command line: simulate is reproducible") {
  const fs::path cfg = scratch("cfg.json");
  spit(cfg, R"({"scenario": "one", "n": 50, "replications": 2, "seed": 4, "estimators": ["mple"]})");
  const fs::path out1 = scratch("r1.csv");
  const fs::path out2 = scratch("r2.csv");
  const fs::path log = scratch("sim.log");
  REQUIRE(cli("simulate --config " + cfg.string() + " --output " + out1.string(), log) == 0);
  const std::string echo = slurp(log);
  CHECK(echo.find("config hash:") != std::string::npos);
  CHECK(echo.find("seed: 4") != std::string::npos);
  REQUIRE(cli("simulate --config " + cfg.string() + " --output " + out2.string(), log) == 0);
  const std::string a = slurp(out1);
  CHECK(a.rfind("estimator,bias,sd,se,cp,n_fail", 0) == 0);
  CHECK(a == slurp(out2));
}

TEST_CASE("command line: fit on generated data") {
  const fs::path data = scratch("gen.csv");
  const fs::path log = scratch("gen.log");
  REQUIRE(cli("generate --scenario one --n 200 --seed 9 --output " + data.string(), log) == 0);
  const fs::path out = scratch("fit.csv");
  REQUIRE(cli("fit --input " + data.string() + " --estimators mple,aipcw-cox-cox --folds 2 --output " +
                  out.string(),
              log) == 0);
  const std::string text = slurp(out);
  CHECK(text.rfind("estimator,beta,se,ci_lower,ci_upper,hr,converged", 0) == 0);
  CHECK(text.find("aipcw-cox-cox") != std::string::npos);
}
