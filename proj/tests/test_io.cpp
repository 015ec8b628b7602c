#include <catch_amalgamated.hpp>

#include "calibnet/io.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <random>

using namespace calibnet;
namespace fs = std::filesystem;

namespace {

ErrorKind parse_kind(std::string_view text) {
  try {
    io::parse_dataset_csv(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::IoError;
}

std::string parse_message(std::string_view text) {
  try {
    io::parse_dataset_csv(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("dataset csv parsing") {
  const SensorDataset d = io::parse_dataset_csv("s1,s2\n1,2\n3,4\n");
  CHECK(d.samples() == 2);
  CHECK(d.sensors() == 2);
  CHECK(d.readings() == (MatrixXd(2, 2) << 1, 2, 3, 4).finished());
  CHECK(d.sensor_ids() == std::vector<std::string>{"s1", "s2"});
  CHECK_FALSE(d.timestamps().has_value());

  const SensorDataset t = io::parse_dataset_csv("\xEF\xBB\xBFtimestamp,a,b\r\n0,1.5,-2\r\n600,3e2, 4\r\n\r\n");
  REQUIRE(t.timestamps().has_value());
  CHECK(*t.timestamps() == std::vector<double>{0.0, 600.0});
  CHECK(t.readings()(1, 0) == 300.0);
  CHECK(t.readings()(1, 1) == 4.0);
  CHECK(t.sensor_ids() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("dataset csv errors") {
  CHECK(parse_kind("s1,s2\n1,2\n3\n") == ErrorKind::ParseError);
  CHECK(parse_message("s1,s2\n1,2\n3\n").find("line 3") != std::string::npos);
  CHECK(parse_kind("s1,s2\n1,2\n") == ErrorKind::TooFewRows);
  CHECK(parse_kind("s1,s2\n1,2\n3,abc\n") == ErrorKind::NonNumericCell);
  CHECK(parse_message("s1,s2\n1,2\n3,abc\n").find("column 2") != std::string::npos);
  CHECK(parse_kind("s1,s2\n1,2\n3,nan\n") == ErrorKind::NonNumericCell);
  CHECK(parse_kind("") == ErrorKind::ParseError);
  CHECK(parse_kind("s1\n1\n2\n") == ErrorKind::ParseError);
}

TEST_CASE("dataset csv round trip is exact") {
  std::mt19937_64 rng(9);
  const MatrixXd y = oracle::random_matrix(rng, 30, 4, -1e6, 1e6);
  std::vector<double> ts(30);
  for (std::size_t k = 0; k < ts.size(); ++k) ts[k] = 0.1 * static_cast<double>(k);
  const SensorDataset d(y, {"a", "b", "c", "d"}, ts);
  const SensorDataset back = io::parse_dataset_csv(io::format_dataset_csv(d));
  CHECK(back.readings() == d.readings());
  CHECK(back.sensor_ids() == d.sensor_ids());
  CHECK(*back.timestamps() == ts);

  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 1e-5}) CHECK(*io::parse_double(io::format_double(v)) == v);
}

TEST_CASE("atomic file writes") {
  const fs::path dir = fs::temp_directory_path() / "calibnet_test_io";
  fs::remove_all(dir);
  const fs::path file = dir / "nested" / "out.csv";
  io::write_file_atomic(file, "first\n");
  io::write_file_atomic(file, "second\n");
  CHECK(io::read_file(file) == "second\n");
  CHECK_FALSE(fs::exists(fs::path(file).concat(".tmp")));
  const SensorDataset d = io::ingest_csv((io::write_file_atomic(dir / "d.csv", "x,y\n1,2\n3,5\n"), dir / "d.csv"));
  CHECK(d.readings()(1, 1) == 5.0);
  fs::remove_all(dir);

  try {
    io::read_file(dir / "missing.csv");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IoError);
  }
}

TEST_CASE("constraint spec grammar") {
  const std::vector<std::string> ids{"s1", "s2", "s3"};
  CHECK(std::holds_alternative<io::SumSpec>(io::parse_constraint_spec("sum")));

  const auto ref = std::get<io::RefSpec>(io::parse_constraint_spec("ref:s2"));
  CHECK(ref.id == "s2");
  CHECK(ref.alpha == 1.0);
  CHECK(ref.beta == 0.0);

  const auto lab = std::get<io::RefSpec>(io::parse_constraint_spec("ref:s3,0.5,-2"));
  CHECK(lab.alpha == 0.5);
  CHECK(lab.beta == -2.0);

  const auto refs = std::get<io::RefsSpec>(io::parse_constraint_spec("refs:s1,s3"));
  CHECK(refs.ids == std::vector<std::string>{"s1", "s3"});

  for (const char* bad : {"", "ref:", "ref:s1,1", "refs:s1,,s2", "mean", "ref:s1,a,b"}) {
    try {
      io::parse_constraint_spec(bad);
      FAIL("expected ParseError for " << bad);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ParseError);
    }
  }

  CHECK(io::resolve_sensor("s3", ids) == 2);
  CHECK(io::resolve_sensor("1", ids) == 0);
  try {
    io::resolve_sensor("s9", ids);
    FAIL("expected UnknownSensorId");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownSensorId);
  }

  const ConstraintSet cs = io::build_constraint(lab, ids);
  CHECK(cs.response() == Eigen::Vector2d(0.5, -2.0));
  CHECK(cs.matrix()(0, 4) == 1.0);
  CHECK(io::build_constraint(refs, ids).matrix().rows() == 4);
  CHECK(io::describe(lab) == "ref:s3,0.5,-2");
}

TEST_CASE("output documents") {
  const CalibrationParams p = CalibrationParams::from_pairs({{0.5, -2.0}, {1.0, 0.0}});
  const io::json j = io::params_json(p, {"a", "b"}, "sum", "cls", false);
  CHECK(j["sensors"][0]["omega"] == 2.0);
  CHECK(j["sensors"][0]["phi"] == 4.0);
  CHECK(j["sensors"][1]["id"] == "b");
  CHECK(j["up_to_scale"] == false);

  MonteCarloReport r;
  CurveRow row;
  row.m = 32;
  row.estimator = EstimatorKind::Blind;
  row.rmse = 0.25;
  r.rows.push_back(row);
  CHECK(io::format_curves_csv(r) == "m,estimator,constraint,rmse,rcrb,rcrb_unconstrained\n32,blind,none,0.25,0,0\n");
  CHECK(io::format_metrics_csv({{"sum", "s1", 1.5, 0.5}}) == "solution,sensor,mae,mad\nsum,s1,1.5,0.5\n");

  const io::json crb = io::crb_json(CrbResult::from_covariance(Eigen::Vector4d(4, 9, 1, 0).asDiagonal().toDenseMatrix(),
                                                              CrbKind::Constrained),
                                    {"a", "b"});
  CHECK(crb["rcrb"] == Catch::Approx(std::sqrt(14.0)));
  CHECK(crb["marginal_std"][0]["beta_std"] == 3.0);
  CHECK(crb["marginal_std"][1]["alpha_std"] == 1.0);
}
