#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgc/experiment.hpp"

using namespace cgc;

namespace {

json base_config() {
  return json::parse(R"({
    "vehicle": {"mass": 1.0, "inertia": [0.03, 0.03, 0.06]},
    "gains": {"attitude": {"lambda": 3.0, "K": [8, 8, 4]}, "position": {"alpha": 2.0, "K": [3, 3, 3]}},
    "trajectory": {"kind": "setpoint", "position": [0, 0, 1]},
    "dt": 0.001,
    "horizon": 2.0,
    "initial_state": {"position": [0, 0, 1]},
    "checks": [{"kind": "max_position_error", "threshold": 1e-9}]
  })");
}

json spin_config(std::uint64_t seed) {
  json j = json::parse(R"({
    "vehicle": {"mass": 1.0, "inertia": [0.03, 0.03, 0.06]},
    "gains": {"attitude": {"lambda": 3.0, "K": [8, 8, 4]}},
    "trajectory": {"kind": "attitude_spin", "axis": [0, 0, 1], "rate": 0.5},
    "horizon": 2.0,
    "initial_state": {"on_manifold": true, "random": {"attitude_error_max": 0.99}},
    "checks": [{"kind": "attitude_envelope", "slack": 1e-6}]
  })");
  j["seed"] = seed;
  return j;
}

}  // namespace

TEST_CASE("config parsing") {
  SECTION("valid config") {
    const ExperimentConfig cfg = parse_config(base_config(), "hover");
    REQUIRE(cfg.name == "hover");
    REQUIRE(cfg.setup.vehicle.mass() == 1.0);
    REQUIRE(cfg.setup.attitude_gains.upsilon() == Catch::Approx(4.0));
    REQUIRE(cfg.setup.position_gains.rho() == Catch::Approx(3.0));
    REQUIRE(cfg.checks.size() == 1);
    REQUIRE(cfg.setup.outer.mode == FeedbackMode::oracle);
  }
  SECTION("unknown keys are rejected at every level") {
    auto c = base_config();
    c["gian"] = 1;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["gains"]["attitude"]["lamda"] = 3.0;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["trajectory"]["radius"] = 1.0;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["checks"][0]["treshold"] = 1.0;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
  }
  SECTION("invariants are enforced at load time") {
    auto c = base_config();
    c["dt"] = 0.0;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["horizon"] = 0.005;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["vehicle"]["mass"] = -1.0;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["gains"]["position"]["K"] = {1, 0, 1};
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["feedback_mode"] = "finite";
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["trajectory"] = {{"kind", "spiral"}};
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["initial_state"]["on_manifold"] = true;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["seed"] = -3;
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
    c = base_config();
    c["initial_state"]["attitude"] = {0, 0, 0, 0};
    REQUIRE_THROWS_AS(parse_config(c), ConfigError);
  }
  SECTION("full inertia matrix and optional blocks") {
    auto c = base_config();
    c["vehicle"]["inertia"] = {{0.03, 0.001, 0}, {0.001, 0.03, 0}, {0, 0, 0.06}};
    c["vehicle"]["drag_coeff"] = 0.1;
    c["gains"]["position"]["law"] = "robust_drag";
    c["disturbance"] = {{"kind", "translational_drag"}, {"c_d", 0.1}};
    const ExperimentConfig cfg = parse_config(c);
    REQUIRE(cfg.setup.vehicle.inertia()(0, 1) == 0.001);
    REQUIRE(cfg.setup.outer.law == PositionLaw::robust_drag);
    REQUIRE(cfg.setup.outer.c_d_hat == 0.1);  // defaults to the vehicle's drag coefficient
    REQUIRE(cfg.setup.disturbance.kind == Disturbance::Kind::translational_drag);
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }
}

TEST_CASE("initial state resolution") {
  SECTION("seeded randomization is reproducible") {
    const auto a = resolve_initial_state(parse_config(spin_config(4)));
    const auto b = resolve_initial_state(parse_config(spin_config(4)));
    const auto c = resolve_initial_state(parse_config(spin_config(5)));
    REQUIRE(a.attitude.coeffs() == b.attitude.coeffs());
    REQUIRE(a.attitude.coeffs() != c.attitude.coeffs());
  }
  SECTION("on-manifold start has zero sliding variable") {
    const ExperimentConfig cfg = parse_config(spin_config(9));
    const RigidBodyState x = resolve_initial_state(cfg);
    const AttitudeReference ref = sample_attitude(cfg.setup.trajectory, 0.0);
    const AttitudeErrorState e = attitude_error(x, ref, cfg.setup.attitude_gains.lambda());
    REQUIRE(e.s.norm() < 1e-12);
    REQUIRE(e.q_e.vec().norm() <= 0.99);
  }
  SECTION("attitude error is relative to the initial desired attitude") {
    auto c = base_config();
    c["trajectory"] = json::parse(R"({"kind": "circle", "radius": 1.0, "rate": 1.0, "center": [0, 0, 1]})");
    c["initial_state"] = json::parse(R"({"position": [1, 0, 1], "velocity": [0, 1, 0], "attitude_error": [-1, 0, 0, 0]})");
    const ExperimentConfig cfg = parse_config(c);
    const RigidBodyState x = resolve_initial_state(cfg);
    const ClosedLoopSample smp = ClosedLoop(cfg.setup).evaluate(0.0, x);
    REQUIRE((smp.attitude_ref.q_d.coeffs() + x.attitude.coeffs()).norm() < 1e-12);
  }
}

TEST_CASE("run_experiment") {
  SECTION("hover certifies zero position error") {
    const ExperimentResult r = run_experiment(parse_config(base_config(), "hover"));
    REQUIRE(r.passed);
    REQUIRE_FALSE(r.error);
    REQUIRE(r.samples == 2001);
    REQUIRE(format_report(r).find("check max_position_error PASS") != std::string::npos);
  }
  SECTION("attitude envelope on the manifold") {
    REQUIRE(run_experiment(parse_config(spin_config(1))).passed);
  }
  SECTION("circle tracking reports the decay rate") {
    auto c = base_config();
    c["trajectory"] = json::parse(R"({"kind": "circle", "radius": 1.0, "rate": 1.0, "center": [0, 0, 1]})");
    c["horizon"] = 8.0;
    c["checks"] = json::parse(R"([{"kind": "position_decay_rate", "factor": 0.9}])");
    const ExperimentResult r = run_experiment(parse_config(c));
    REQUIRE(r.passed);
    REQUIRE(r.checks[0].detail.find("fitted_rate=") != std::string::npos);
  }
  SECTION("inner-module errors surface with their time") {
    auto c = base_config();
    c["vehicle"]["gravity"] = {0, 0, 0};
    const ExperimentResult r = run_experiment(parse_config(c));
    REQUIRE_FALSE(r.passed);
    REQUIRE(r.error);
    REQUIRE(r.error->find("t=0") != std::string::npos);
  }
  SECTION("negative control") {
    auto c = spin_config(2);
    c["checks"] = json::parse(R"([{"kind": "envelope", "signal": "norm_qe_vec", "amplitude": 2.0, "rate": 30.0}])");
    const ExperimentResult r = run_experiment(parse_config(c));
    REQUIRE_FALSE(r.passed);
    REQUIRE(r.checks[0].detail.find("first_violation_t=") != std::string::npos);
  }
}

TEST_CASE("CSV output") {
  auto c = base_config();
  c["trajectory"] = json::parse(R"({"kind": "circle", "radius": 1.0, "rate": 1.0, "center": [0, 0, 1]})");
  c["initial_state"]["random"] = {{"position_radius", 0.5}, {"attitude_error_max", 0.3}};
  c["seed"] = 17;
  c["horizon"] = 0.5;
  const ExperimentConfig cfg = parse_config(c);
  std::ostringstream a, b;
  write_csv(a, run_experiment(cfg).trace);
  write_csv(b, run_experiment(cfg).trace);
  REQUIRE(a.str() == b.str());

  std::istringstream in(a.str());
  std::string header, row;
  std::getline(in, header);
  REQUIRE(header == kCsvHeader);
  REQUIRE(std::count(header.begin(), header.end(), ',') == 30);
  std::size_t rows = 0;
  while (std::getline(in, row)) {
    REQUIRE(std::count(row.begin(), row.end(), ',') == 30);
    ++rows;
  }
  REQUIRE(rows == 501);
}

TEST_CASE("run_suite") {
  SECTION("three hovers") {
    const auto cfg = parse_config(base_config());
    const SuiteReport rep = run_suite({cfg, cfg, cfg}, 3);
    REQUIRE(rep.passed == 3);
    REQUIRE(rep.all_passed());
  }
  SECTION("32 random on-manifold attitudes") {
    std::vector<ExperimentConfig> configs;
    for (std::uint64_t s = 0; s < 32; ++s) configs.push_back(parse_config(spin_config(s)));
    const SuiteReport rep = run_suite(configs, 4);
    REQUIRE(rep.passed == 32);
  }
  SECTION("one negative control fails, the rest continue") {
    std::vector<ExperimentConfig> configs;
    for (std::uint64_t s = 0; s < 4; ++s) configs.push_back(parse_config(spin_config(s)));
    auto bad = spin_config(4);
    bad["checks"] = json::parse(R"([{"kind": "envelope", "signal": "norm_qe_vec", "amplitude": 2.0, "rate": 30.0}])");
    configs.insert(configs.begin() + 2, parse_config(bad, "bad"));
    const SuiteReport rep = run_suite(configs, 2);
    REQUIRE(rep.failed == 1);
    REQUIRE(rep.passed == 4);
    REQUIRE_FALSE(rep.runs[2].passed);
    REQUIRE(rep.runs[2].name == "bad");
  }
  SECTION("results do not depend on the number of jobs") {
    std::vector<ExperimentConfig> configs;
    for (std::uint64_t s = 0; s < 6; ++s) configs.push_back(parse_config(spin_config(s)));
    const SuiteReport one = run_suite(configs, 1, true), many = run_suite(configs, 6, true);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      std::ostringstream a, b;
      write_csv(a, one.runs[i].trace);
      write_csv(b, many.runs[i].trace);
      REQUIRE(a.str() == b.str());
    }
  }
}

TEST_CASE("shipped configs load") {
  const std::filesystem::path dir = std::filesystem::path(CGC_SOURCE_DIR) / "configs";
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    INFO(entry.path());
    REQUIRE_NOTHROW(load_config(entry.path()));
    ++n;
  }
  REQUIRE(n > 0);
}
