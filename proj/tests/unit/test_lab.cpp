#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pinchlab/error.hpp"
#include "pinchlab/lab.hpp"

using namespace pinchlab;
using nlohmann::json;

namespace {

std::string without_timestamp(const std::string& report) {
  json j = json::parse(report);
  j.erase("timestamp");
  return j.dump();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST_CASE("configs parse and round trip") {
  const ExperimentConfig c = parse_config(R"({
    "experiment": "section-e",
    "mesh": {"generator": "ellipsoid", "a": 1.0, "b": 1.2, "c": 0.8, "subdivisions": 3},
    "solver": {"tol": 1e-9, "shift": -0.02},
    "oracle_dense": true,
    "tolerances": {"rq_error_custom": 1e-8},
    "seed": 7
  })");
  CHECK(c.experiment == "section-e");
  REQUIRE(c.mesh.has_value());
  CHECK(c.mesh->kind == "ellipsoid");
  CHECK(c.mesh->b == 1.2);
  CHECK(c.mesh->subdivisions == 3);
  CHECK(c.solver_tol == 1e-9);
  CHECK(c.solver_shift == -0.02);
  CHECK(c.oracle_dense);
  CHECK(c.tolerances.at("rq_error_custom") == 1e-8);
  CHECK(c.seed == 7);

  const ExperimentConfig d = parse_config(to_json(c));
  CHECK(to_json(d) == to_json(c));
  CHECK(d.mesh->key() == c.mesh->key());
}

TEST_CASE("malformed configs are format errors") {
  CHECK_THROWS_AS(parse_config("{"), FormatError);
  CHECK_THROWS_AS(parse_config("[]"), FormatError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "section-e", "bogus": 1})"), FormatError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": 3})"), FormatError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "section-e", "mesh": {"generator": "cube"}})"), FormatError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "section-e", "mesh": {"generator": "torus", "radius": 2}})"),
                  FormatError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "section-e", "tolerances": {"x": "small"}})"), FormatError);
  CHECK_THROWS_AS(load_config("/nonexistent/pinchlab.json"), Error);
}

TEST_CASE("experiment registry") {
  const auto& names = experiment_names();
  REQUIRE(names.size() == 12);
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(criterion_of(names[i]) == static_cast<int>(i) + 1);
  CHECK(criterion_of("sphere-baseline") == 1);
  CHECK(criterion_of("torus-noncollapse") == 7);
  CHECK_THROWS_AS(criterion_of("nope"), InvalidArgument);
  ExperimentConfig c;
  c.experiment = "nope";
  CHECK_THROWS_AS(run_experiment(c), InvalidArgument);
}

TEST_CASE("generator keys identify the surface") {
  GeneratorSpec a, b;
  CHECK(a.key() == b.key());
  b.subdivisions = 4;
  CHECK(a.key() != b.key());
  GeneratorSpec t;
  t.kind = "torus";
  t.n1 = t.n2 = 8;
  CHECK(t.generate().num_vertices() == 64);
  GeneratorSpec p;
  p.kind = "perturbed";
  p.subdivisions = 2;
  CHECK(p.generate().num_vertices() == 162);
  GeneratorSpec bad;
  bad.kind = "cube";
  CHECK_THROWS_AS(bad.generate(), InvalidArgument);
}

TEST_CASE("experiment reports are reproducible apart from the timestamp") {
  ExperimentConfig c;
  c.experiment = "section-e";
  const ExperimentReport a = run_experiment(c);
  clear_experiment_cache();
  const ExperimentReport b = run_experiment(c);
  CHECK(a.pass);
  CHECK(a.criterion == 3);
  CHECK(without_timestamp(report_json(a, c)) == without_timestamp(report_json(b, c)));
  const json j = json::parse(report_json(a, c));
  CHECK(j["schema"] == 1);
  CHECK(j["experiment"] == "section-e");
  CHECK(j["timestamp"].contains("utc"));
  CHECK(j["checks"].size() == a.checks.size());
}

TEST_CASE("tolerance overrides can fail a check") {
  ExperimentConfig c;
  c.experiment = "energy-crossval";
  const ExperimentReport ok = run_experiment(c);
  REQUIRE(ok.pass);
  c.tolerances[ok.checks.front().name] = -1.0;
  const ExperimentReport bad = run_experiment(c);
  CHECK_FALSE(bad.pass);
  CHECK(bad.checks.front().threshold == -1.0);
  CHECK(bad.checks.front().value == ok.checks.front().value);
}

TEST_CASE("reports and tables are written to disk") {
  const auto dir = std::filesystem::temp_directory_path() / "pinchlab_lab_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig c;
  c.experiment = "energy-crossval";
  c.json_out = (dir / "report.json").string();
  c.csv_dir = (dir / "csv").string();
  const ExperimentReport r = run_experiment(c);
  CHECK(json::parse(read_file(c.json_out))["criterion"] == 4);
  REQUIRE_FALSE(r.tables.empty());
  for (const auto& [name, text] : r.tables) CHECK(read_file(dir / "csv" / name) == text);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gh oracle reads the shipped corpus") {
  ExperimentConfig c;
  c.experiment = "gh-oracle";
  c.data_dir = PINCHLAB_TEST_DATA_DIR;
  const ExperimentReport r = run_experiment(c);
  CHECK(r.pass);
  c.data_dir = "/nonexistent";
  CHECK_THROWS_AS(run_experiment(c), Error);
}
