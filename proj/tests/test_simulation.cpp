#include <catch_amalgamated.hpp>

#include "calibnet/simulation.hpp"

using namespace calibnet;

TEST_CASE("two-point ramp phenomenon") {
  ScenarioConfig config;
  const Scenario s = generate_scenario(config, 2, 0);
  CHECK(s.phenomenon == Eigen::Vector2d(10.0, 1000.0));
  CHECK(s.data.samples() == 2);
  CHECK(s.data.sensors() == 10);
}

TEST_CASE("noiseless ideal sensors reproduce the phenomenon") {
  ScenarioConfig config;
  config.n_sensors = 4;
  config.gain_std = 0.0;
  config.offset_std = 0.0;
  config.noise_var_high = 0.0;
  const Scenario s = generate_scenario(config, 16, 3);
  for (Index i = 0; i < 4; ++i) CHECK(s.data.readings().col(i) == s.phenomenon);
  CHECK(s.truth.noise_vars.isZero(0.0));
}

TEST_CASE("scenarios are deterministic in seed and trial") {
  ScenarioConfig config;
  const Scenario a = generate_scenario(config, 64, 7);
  const Scenario b = generate_scenario(config, 64, 7);
  CHECK(a.data.readings() == b.data.readings());
  CHECK(a.truth.gains == b.truth.gains);
  CHECK(a.truth.noise_vars == b.truth.noise_vars);

  const Scenario other = generate_scenario(config, 64, 8);
  CHECK(other.data.readings() != a.data.readings());

  // Truth is shared across the M grid within a trial.
  const Scenario longer = generate_scenario(config, 256, 7);
  CHECK(longer.truth.gains == a.truth.gains);
  CHECK(longer.truth.offsets == a.truth.offsets);

  config.seed = 2;
  CHECK(generate_scenario(config, 64, 7).truth.gains != a.truth.gains);
}

TEST_CASE("sampled truth respects the configured ranges") {
  ScenarioConfig config;
  for (Index trial = 0; trial < 50; ++trial) {
    const ForwardSensorModel t = draw_truth(config, trial);
    CHECK(t.noise_vars.minCoeff() >= kNoiseVarFloor);
    CHECK(t.noise_vars.maxCoeff() <= 20.0);
    const CalibrationParams inv = to_inverse_params(t);
    CHECK(std::abs(inv.alphas().mean() - 1.0) <= 1e-12);
    CHECK(std::abs(inv.betas().mean()) <= 1e-9);
  }
  CHECK(config.noise_floor_applied());
}

TEST_CASE("config validation") {
  auto rejects = [](ScenarioConfig c) {
    try {
      c.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::InvalidConfig;
    }
    return false;
  };
  ScenarioConfig c;
  CHECK_FALSE(rejects(c));
  c.n_sensors = 1;
  CHECK(rejects(c));
  c = {};
  c.m_samples = {1};
  CHECK(rejects(c));
  c = {};
  c.noise_var_low = -1.0;
  CHECK(rejects(c));
  c = {};
  c.n_trials = 0;
  CHECK(rejects(c));
  c = {};
  c.source_high = c.source_low;
  CHECK(rejects(c));
}

TEST_CASE("rmse") {
  const VectorXd truth = VectorXd::LinSpaced(6, 0, 5);
  CHECK(rmse({truth, truth}, truth) == 0.0);

  VectorXd e = truth;
  e(0) += 3.0;
  e(1) += 4.0;
  CHECK(rmse({e}, truth) == 5.0);

  VectorXd one = truth, seven = truth;
  one(2) += 1.0;
  seven(3) -= 7.0;
  CHECK(rmse({one, seven}, truth) == Catch::Approx(5.0).epsilon(1e-15));

  try {
    rmse(std::vector<VectorXd>{}, truth);
    FAIL("expected EmptyInput");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::EmptyInput);
  }
}

TEST_CASE("blind alignment recovers any member of the ambiguity family") {
  ScenarioConfig config;
  const CalibrationParams truth = to_inverse_params(draw_truth(config, 0));
  const VectorXd member = -2.5 * truth.theta() + 4.0 * offset_shift_direction(10);
  CHECK((align_to_truth(member, truth.theta()) - truth.theta()).norm() <= 1e-10);
}

TEST_CASE("noiseless Monte Carlo recovers the truth exactly") {
  ScenarioConfig config;
  config.noise_var_low = 0.0;
  config.noise_var_high = 0.0;
  config.n_trials = 20;
  config.m_samples = {16, 64};
  const MonteCarloReport r =
      run_monte_carlo(config, {EstimatorKind::Cls, EstimatorKind::Wcls},
                      {ConstraintChoice::SingleReference, ConstraintChoice::Sum});
  CHECK(r.rows.size() == 8);
  for (const CurveRow& row : r.rows) {
    CHECK(row.rmse <= 1e-9);
    CHECK(row.rcrb == 0.0);
    CHECK(row.failures == 0);
  }
}

TEST_CASE("Monte Carlo report covers the grid and is schedule independent") {
  ScenarioConfig config;
  config.n_trials = 40;
  config.m_samples = {32, 128};
  const std::vector<EstimatorKind> est{EstimatorKind::Cls, EstimatorKind::Wcls, EstimatorKind::Blind};
  const std::vector<ConstraintChoice> cons{ConstraintChoice::SingleReference, ConstraintChoice::Sum};

  config.threads = 1;
  const MonteCarloReport serial = run_monte_carlo(config, est, cons);
  config.threads = 3;
  const MonteCarloReport parallel = run_monte_carlo(config, est, cons);

  CHECK(serial.rows.size() == 10);
  REQUIRE(serial.rows.size() == parallel.rows.size());
  for (std::size_t k = 0; k < serial.rows.size(); ++k) {
    CHECK(serial.rows[k].rmse == parallel.rows[k].rmse);
    CHECK(serial.rows[k].rcrb == parallel.rows[k].rcrb);
  }
  for (const CurveRow& row : serial.rows) {
    CHECK(std::isfinite(row.rmse));
    CHECK(row.rmse >= 0.0);
    CHECK(std::isfinite(row.rcrb));
    CHECK(row.rcrb_unconstrained <= row.rcrb * (1.0 + 1e-12));
  }
  const CurveRow* blind = serial.find(32, EstimatorKind::Blind, std::nullopt);
  REQUIRE(blind != nullptr);
  CHECK(blind->rcrb == blind->rcrb_unconstrained);
  CHECK(serial.find(32, EstimatorKind::Blind, ConstraintChoice::Sum) == nullptr);
}

TEST_CASE("sum constraint curves decrease with M and respect the bound") {
  ScenarioConfig config;
  config.n_trials = 100;
  config.m_samples = {32, 128, 512};
  const MonteCarloReport r = run_monte_carlo(config, {EstimatorKind::Cls, EstimatorKind::Wcls}, {ConstraintChoice::Sum});
  for (EstimatorKind e : {EstimatorKind::Cls, EstimatorKind::Wcls}) {
    double previous = std::numeric_limits<double>::infinity();
    for (Index m : config.m_samples) {
      const CurveRow* row = r.find(m, e, ConstraintChoice::Sum);
      REQUIRE(row != nullptr);
      CHECK(row->rmse <= previous * 1.05);
      CHECK(row->rmse >= 0.9 * row->rcrb);
      previous = row->rmse;
    }
  }
}
