#include <doctest.h>

#include <string>

#include "lorisk/config.hpp"
#include "lorisk/report.hpp"

using namespace lorisk;

namespace {

Json minimal_doc() {
  return Json::parse(R"({
    "model": {
      "loss": "squared",
      "gamma0": 2.0,
      "p": 10,
      "n": 20,
      "covariance": {"kind": "identity", "c": 1.0}
    },
    "penalty": {
      "lambda": 1.0,
      "eta": 0.3,
      "r0": {"kind": "lasso", "params": {}},
      "theta": {"kind": "full"}
    }
  })");
}

bool mentions(const std::vector<std::string>& errors, const std::string& what) {
  for (const auto& e : errors)
    if (e.find(what) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("minimal document validates and parses") {
  Json doc = minimal_doc();
  CHECK(validate_config(doc).empty());
  Config cfg = parse_config(doc);
  CHECK(cfg.loss == LossKind::SquaredError);
  CHECK(cfg.metric == LossKind::SquaredError);  // defaults to the loss
  CHECK(cfg.n == 20);
  CHECK(cfg.p == 10);
  CHECK(cfg.penalty.lambda == 1.0);
}

TEST_CASE("missing lambda is reported by key name") {
  Json doc = minimal_doc();
  doc["penalty"].erase("lambda");
  auto errors = validate_config(doc);
  CHECK(mentions(errors, "lambda"));
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lambda") != std::string::npos);
  }
}

TEST_CASE("assumption-level checks with the mandated wording") {
  Json doc = minimal_doc();
  doc["penalty"]["eta"] = 1.0;
  auto errors = validate_config(doc);
  CHECK(mentions(errors, "eta must lie strictly inside (0,1)"));

  doc = minimal_doc();
  doc["model"]["gamma0"] = 0.0;
  CHECK(mentions(validate_config(doc), "A2"));

  doc = minimal_doc();
  doc["model"]["p"] = 7;
  doc["model"]["n"] = 14;
  doc["penalty"]["r0"] = {{"kind", "schatten"}, {"params", {{"rows", 2}}}};
  CHECK(mentions(validate_config(doc), "not divisible"));
}

TEST_CASE("errors are aggregated, not fail-fast") {
  Json doc = minimal_doc();
  doc["model"]["loss"] = "weird";
  doc["penalty"]["eta"] = -1.0;
  doc["penalty"]["lambda"] = 0.0;
  auto errors = validate_config(doc);
  CHECK(errors.size() >= 3);
  CHECK(mentions(errors, "loss"));
  CHECK(mentions(errors, "eta"));
  CHECK(mentions(errors, "lambda"));
}

TEST_CASE("closed-form smoothing compatibility") {
  Json doc = minimal_doc();
  doc["penalty"]["smoothing"] = {{"mode", "closed_form"}, {"samples", 256}};
  CHECK(validate_config(doc).empty());
  doc["penalty"]["r0"]["kind"] = "fused";
  CHECK(validate_config(doc).empty());
  doc["penalty"]["r0"]["kind"] = "group_lasso";
  CHECK(mentions(validate_config(doc), "closed_form"));
  doc["penalty"]["smoothing"]["mode"] = "monte_carlo";
  doc["penalty"]["smoothing"]["samples"] = 10;
  CHECK(mentions(validate_config(doc), "samples"));
}

TEST_CASE("config round-trip is stable") {
  Json doc = minimal_doc();
  doc["solver"] = {{"max_iters", 1000}, {"tol", 1e-7}};
  doc["experiment"] = {{"n_grid", {50, 100}}, {"replicates", 12}, {"m_oo", 2000}};
  Config cfg = parse_config(doc);
  Json canon = serialize_config(cfg);
  Config cfg2 = parse_config(canon);
  CHECK(serialize_config(cfg2) == canon);
  CHECK(cfg2.solver.tol == cfg.solver.tol);
  CHECK(cfg2.n_grid == cfg.n_grid);
  CHECK(cfg2.replicates == cfg.replicates);
}

TEST_CASE("dotted-path overrides") {
  Json doc = minimal_doc();
  apply_override(doc, "penalty.lambda=0.5");
  CHECK(doc["penalty"]["lambda"].get<double>() == 0.5);
  apply_override(doc, "model.covariance.kind=ar1");
  CHECK(doc["model"]["covariance"]["kind"] == "ar1");
  CHECK_THROWS_AS(apply_override(doc, "no-equals-sign"), ConfigError);
}

TEST_CASE("factories materialize the configured penalty and constraint") {
  Json doc = minimal_doc();
  doc["penalty"]["r0"] = {{"kind", "group_lasso"},
                          {"params", {{"group_size", 5}}}};
  doc["penalty"]["theta"] = {{"kind", "nonneg"}};
  Config cfg = parse_config(doc);
  PenaltySpec pen = make_penalty(cfg, 10);
  CHECK(pen.r0.kind == R0Kind::GroupLasso);
  CHECK(pen.r0.groups.size() == 2);
  CHECK(pen.theta.kind == ConstraintKind::NonnegativeOrthant);
  CHECK_THROWS_AS(make_penalty(cfg, 7), ConfigError);  // 7 % 5 != 0

  doc["penalty"]["r0"] = {{"kind", "nuclear"}, {"params", {{"rows", 2}}}};
  Config cfg2 = parse_config(doc);
  PenaltySpec pen2 = make_penalty(cfg2, 10);
  CHECK(pen2.r0.kind == R0Kind::Schatten);
  CHECK(pen2.r0.order == 1);
  CHECK(pen2.r0.rows == 2);
  CHECK(pen2.r0.cols == 5);

  ModelSpec m = make_model(cfg, 20, 10, 3);
  CHECK(m.beta_star.size() == 10);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("shipped templates validate") {
  for (const char* name : {"templates/logistic_lasso.cfg",
                           "templates/poisson_glasso.cfg",
                           "templates/lemma8_lasso.cfg"}) {
    // tests run from the build tree; look for the repo root upward
    std::string path;
    for (const char* prefix : {"", "../", "../../", "../../../"}) {
      std::string cand = std::string(prefix) + name;
      std::ifstream probe(cand);
      if (probe) {
        path = cand;
        break;
      }
    }
    REQUIRE_FALSE(path.empty());
    Json doc = load_config_file(path);
    CHECK(validate_config(doc).empty());
    CHECK_NOTHROW(parse_config(doc));
  }
  CHECK_THROWS_AS(load_config_file("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("atomic writes land complete files") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "lorisk_test_report";
  fs::create_directories(dir);
  fs::path target = dir / "out.csv";
  write_file_atomic(target, "a,b\n1,2\n");
  std::ifstream in(target);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "a,b\n1,2\n");
  CHECK_FALSE(fs::exists(target.string() + ".tmp"));
  fs::remove_all(dir);
}
