#include <catch_amalgamated.hpp>

#include "calibnet/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

using namespace calibnet;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "calibnet_test_cli";

/// Runs the CLI with stderr captured to err.txt; returns the exit status.
int run(const std::string& args, const std::string& env = "") {
  fs::create_directories(kWork);
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" CALIBNET_CLI_PATH "\" " + args + " 2> \"" +
                          (kWork / "err.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stderr_text() { return io::read_file(kWork / "err.txt"); }

std::string dir(const std::string& name) { return (kWork / name).string(); }

const std::string kAnalog = std::string(CALIBNET_SOURCE_DIR) + "/scenarios/office_co2/raw.csv";

}  // namespace

TEST_CASE("simulate writes reproducible curves") {
  const std::string args = "simulate --n-sensors 10 --m-grid 32,128,512 --trials 200 --seed 7 -o ";
  REQUIRE(run(args + dir("sim_a")) == 0);
  REQUIRE(run(args + dir("sim_b")) == 0);
  const std::string a = io::read_file(kWork / "sim_a" / "rmse_curves.csv");
  CHECK(a == io::read_file(kWork / "sim_b" / "rmse_curves.csv"));
  CHECK(a.rfind("m,estimator,constraint,rmse,rcrb,rcrb_unconstrained\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 1 + 3 * 4);

  const auto manifest = io::json::parse(io::read_file(kWork / "sim_a" / "manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["n_trials"] == 200);
}

TEST_CASE("seed precedence: flag over environment over default") {
  REQUIRE(run("simulate --m-grid 16 --trials 5 -o " + dir("seed_env"), "CALIBNET_SEED=42") == 0);
  CHECK(io::json::parse(io::read_file(kWork / "seed_env" / "manifest.json"))["seed"] == 42);
  REQUIRE(run("simulate --m-grid 16 --trials 5 --seed 3 -o " + dir("seed_flag"), "CALIBNET_SEED=42") == 0);
  CHECK(io::json::parse(io::read_file(kWork / "seed_flag" / "manifest.json"))["seed"] == 3);
  CHECK(run("simulate --m-grid 16 --trials 5 -o " + dir("seed_bad"), "CALIBNET_SEED=abc") != 0);
}

TEST_CASE("noiseless simulation has zero error") {
  REQUIRE(run("simulate --noise-range 0,0 --m-grid 16,64 --trials 10 -o " + dir("sim_zero")) == 0);
  const SensorDataset curves = [] {
    // Reuse the dataset reader on the numeric tail of each row.
    std::string text = "rmse,rcrb\n";
    const std::string csv = io::read_file(kWork / "sim_zero" / "rmse_curves.csv");
    std::size_t start = csv.find('\n') + 1;
    while (start < csv.size()) {
      const std::size_t end = csv.find('\n', start);
      const auto cells = io::split(std::string_view(csv).substr(start, end - start));
      text += std::string(cells[3]) + "," + std::string(cells[4]) + "\n";
      start = end + 1;
    }
    return io::parse_dataset_csv(text);
  }();
  CHECK(curves.readings().col(0).maxCoeff() <= 1e-9);
  CHECK(curves.readings().col(1).maxCoeff() == 0.0);
}

TEST_CASE("calibrate with a reference and with the sum constraint") {
  REQUIRE(run("calibrate \"" + kAnalog + "\" --constraint ref:s2 --estimator cls -o " + dir("cal_ref")) == 0);
  const auto ref = io::json::parse(io::read_file(kWork / "cal_ref" / "params.json"));
  CHECK(ref["sensors"][1]["id"] == "s2");
  CHECK(ref["sensors"][1]["alpha"] == 1.0);
  CHECK(ref["sensors"][1]["beta"] == 0.0);
  CHECK(ref["up_to_scale"] == false);

  REQUIRE(run("calibrate \"" + kAnalog + "\" -c sum --write-calibrated -o " + dir("cal_sum")) == 0);
  const auto sum = io::json::parse(io::read_file(kWork / "cal_sum" / "params.json"));
  double alpha = 0.0, beta = 0.0;
  for (const auto& s : sum["sensors"]) {
    alpha += s["alpha"].get<double>();
    beta += s["beta"].get<double>();
  }
  CHECK(std::abs(alpha / 5.0 - 1.0) <= 1e-10);
  CHECK(std::abs(beta / 5.0) <= 1e-10 * 500.0);
  const SensorDataset cal = io::ingest_csv(kWork / "cal_sum" / "calibrated.csv");
  CHECK(cal.samples() == 1008);
  CHECK(cal.timestamps().has_value());

  REQUIRE(run("calibrate \"" + kAnalog + "\" -e blind -o " + dir("cal_blind")) == 0);
  CHECK(io::json::parse(io::read_file(kWork / "cal_blind" / "params.json"))["up_to_scale"] == true);

  REQUIRE(run("calibrate \"" + kAnalog + "\" -e wcls --noise-vars 64,36,81,100,49 -c 2 -o " + dir("cal_w")) != 0);
  REQUIRE(run("calibrate \"" + kAnalog + "\" -e wcls --noise-vars 64,36,81,100,49 -c ref:2 -o " + dir("cal_w")) == 0);
}

TEST_CASE("calibrate error paths") {
  CHECK(run("calibrate \"" + kAnalog + "\" -e wcls -o " + dir("cal_err")) != 0);
  CHECK(stderr_text().find("MissingNoiseModel") != std::string::npos);

  CHECK(run("calibrate \"" + kAnalog + "\" -c ref:s9 -o " + dir("cal_err")) != 0);
  CHECK(stderr_text().find("UnknownSensorId") != std::string::npos);

  io::write_file_atomic(kWork / "flat.csv", "a,b,c\n1,2,3\n1,2,3\n1,2,3\n");
  CHECK(run("calibrate \"" + (kWork / "flat.csv").string() + "\" -c sum -o " + dir("cal_err")) != 0);
  CHECK(stderr_text().find("SingularKkt") != std::string::npos);
  CHECK(stderr_text().find("add a constraint or check for constant sensors") != std::string::npos);

  io::write_file_atomic(kWork / "ragged.csv", "a,b\n1,2\n3\n");
  CHECK(run("calibrate \"" + (kWork / "ragged.csv").string() + "\" -o " + dir("cal_err")) != 0);
  CHECK(stderr_text().find("line 3") != std::string::npos);
}

TEST_CASE("bound on scenario flags and on a dataset") {
  REQUIRE(run("bound -c sum --m 256 -o " + dir("b_sum")) == 0);
  REQUIRE(run("bound -c ref:1 --m 256 -o " + dir("b_ref")) == 0);
  REQUIRE(run("bound --m 256 -o " + dir("b_free")) == 0);
  const auto sum = io::json::parse(io::read_file(kWork / "b_sum" / "crb.json"));
  const auto ref = io::json::parse(io::read_file(kWork / "b_ref" / "crb.json"));
  const auto free = io::json::parse(io::read_file(kWork / "b_free" / "crb.json"));
  CHECK(sum["rcrb"].get<double>() <= ref["rcrb"].get<double>());
  CHECK(free["kind"] == "unconstrained");
  CHECK(sum["kind"] == "constrained");
  CHECK(sum["sigma_theta"].size() == 20);
  CHECK(sum["marginal_std"].size() == 10);

  REQUIRE(run("bound --input \"" + kAnalog + "\" --noise-vars 64,36,81,100,49 -c refs:1,2,3,4,5 -o " +
              dir("b_full")) == 0);
  CHECK(io::json::parse(io::read_file(kWork / "b_full" / "crb.json"))["rcrb"] == 0.0);

  CHECK(run("bound --input \"" + kAnalog + "\" -o " + dir("b_err")) != 0);
  CHECK(stderr_text().find("MissingNoiseModel") != std::string::npos);
}

TEST_CASE("evaluate writes the metric table") {
  REQUIRE(run("calibrate \"" + kAnalog + "\" -c ref:s2 --write-calibrated -o " + dir("ev_good")) == 0);
  REQUIRE(run("evaluate \"" + kAnalog + "\" -r s2 --calibrated good=" + dir("ev_good") +
              "/calibrated.csv --calibrated \"" + kAnalog + "\" -o " + dir("ev")) == 0);
  const std::string metrics = io::read_file(kWork / "ev" / "metrics.csv");
  CHECK(metrics.rfind("solution,sensor,mae,mad\n", 0) == 0);
  CHECK(metrics.find("good,s2,0,0\n") != std::string::npos);
  CHECK(metrics.find("raw,s2,0,0\n") != std::string::npos);

  io::write_file_atomic(kWork / "short.csv", "s1,s2,s3,s4,s5\n1,2,3,4,5\n1,2,3,4,6\n");
  CHECK(run("evaluate \"" + kAnalog + "\" -r s2 --calibrated " + (kWork / "short.csv").string() + " -o " + dir("ev")) !=
        0);
  CHECK(stderr_text().find("DimensionMismatch") != std::string::npos);
  CHECK(run("evaluate \"" + kAnalog + "\" -r s7 --calibrated \"" + kAnalog + "\" -o " + dir("ev")) != 0);
  CHECK(stderr_text().find("UnknownSensorId") != std::string::npos);
}

TEST_CASE("bundled analog matches the generator") {
  REQUIRE(run("analog -o " + dir("analog")) == 0);
  CHECK(io::read_file(kWork / "analog" / "raw.csv") == io::read_file(kAnalog));
}

TEST_CASE("usage errors") {
  CHECK(run("") != 0);
  CHECK(run("simulate --trials 0 -o " + dir("bad")) != 0);
  CHECK(stderr_text().find("InvalidConfig") != std::string::npos);
  CHECK(run("simulate --estimators ols -o " + dir("bad")) != 0);
}
