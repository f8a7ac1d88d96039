#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lorisk/common.hpp"
#include "lorisk/model.hpp"
#include "lorisk/penalty.hpp"
#include "lorisk/solver.hpp"

namespace lorisk {

using Json = nlohmann::json;

// Parsed experiment manifest. beta_star is materialized per (p, seed) at run
// time from beta_star_mode, so the document stays p-generic.
struct Config {
  // model
  LossKind loss = LossKind::SquaredError;
  LossKind metric = LossKind::SquaredError;
  int n = 0;
  int p = 0;
  double gamma0 = 2.0;
  CovarianceSpec covariance;
  std::string beta_star_mode = "rademacher";
  double signal_scale = 1.0;  // target p^{-1}||beta*||^2
  double noise_sigma = 1.0;
  double snr_target = -1.0;  // informational; < 0 means unset

  PenaltySpec penalty;  // theta/r0 dims resolved against p at use time
  std::string r0_kind = "lasso";
  Json r0_params = Json::object();
  std::string theta_kind = "full";

  SolverConfig solver;

  // experiment section
  std::vector<int> n_grid{100, 200, 400, 800};
  int replicates = 50;
  int m_oo = 100000;
  int m_cond = 0;
  std::vector<double> audit_alphas{10.0, 100.0, 1000.0, 10000.0};
  int n_draws = 10000;
  int audit_seeds = 5;
};

namespace detail {

inline LossKind parse_loss(const std::string& s) {
  if (s == "squared") return LossKind::SquaredError;
  if (s == "logistic") return LossKind::LogisticNLL;
  if (s == "poisson") return LossKind::PoissonNLL;
  throw ConfigError("unknown loss '" + s + "'");
}

inline ConstraintKind parse_theta(const std::string& s) {
  if (s == "full") return ConstraintKind::FullSpace;
  if (s == "nonneg") return ConstraintKind::NonnegativeOrthant;
  if (s == "box") return ConstraintKind::Box;
  if (s == "ball") return ConstraintKind::EuclideanBall;
  if (s == "isotone") return ConstraintKind::IsotoneCone;
  throw ConfigError("unknown theta.kind '" + s + "'");
}

template <class T>
T get_or(const Json& j, const std::string& key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

}  // namespace detail

// Static schema validation with aggregated error messages; never fail-fast.
inline std::vector<std::string> validate_config(const Json& doc) {
  std::vector<std::string> errors;
  auto need = [&](const Json& j, const char* section, const char* key) -> const Json* {
    auto it = j.find(key);
    if (it == j.end()) {
      errors.push_back(std::string(section) + ": missing key '" + key + "'");
      return nullptr;
    }
    return &*it;
  };

  if (!doc.is_object()) {
    errors.push_back("config root must be an object");
    return errors;
  }
  const Json model = doc.value("model", Json::object());
  const Json penalty = doc.value("penalty", Json::object());
  if (!doc.contains("model")) errors.push_back("missing section 'model'");
  if (!doc.contains("penalty")) errors.push_back("missing section 'penalty'");

  if (const Json* j = need(model, "model", "loss")) {
    try {
      detail::parse_loss(j->get<std::string>());
    } catch (const std::exception& e) {
      errors.push_back(std::string("model.loss: ") + e.what());
    }
  }
  double gamma0 = detail::get_or(model, "gamma0", 0.0);
  if (model.contains("gamma0") && gamma0 <= 0.0)
    errors.push_back("model.gamma0: must be positive (assumption A2)");
  if (model.contains("noise_sigma") && model["noise_sigma"].get<double>() <= 0.0)
    errors.push_back("model.noise_sigma: must be positive");
  if (model.contains("covariance")) {
    const Json& cov = model["covariance"];
    std::string kind = detail::get_or<std::string>(cov, "kind", "identity");
    if (kind != "identity" && kind != "diagonal" && kind != "ar1")
      errors.push_back("model.covariance.kind: unknown '" + kind + "'");
    if (kind == "ar1") {
      double rho = detail::get_or(cov, "rho", 0.0);
      if (!(rho > -1.0 && rho < 1.0))
        errors.push_back("model.covariance.rho: must lie in (-1, 1)");
    }
  }

  if (const Json* j = need(penalty, "penalty", "lambda")) {
    if (j->get<double>() <= 0.0)
      errors.push_back("penalty.lambda: must be positive");
  }
  if (const Json* j = need(penalty, "penalty", "eta")) {
    double eta = j->get<double>();
    if (!(eta > 0.0 && eta < 1.0))
      errors.push_back("penalty.eta: eta must lie strictly inside (0,1) (assumption A4)");
  }
  std::string r0_kind = "lasso";
  if (penalty.contains("r0")) {
    const Json& r0 = penalty["r0"];
    r0_kind = detail::get_or<std::string>(r0, "kind", "lasso");
    if (r0_kind != "lasso" && r0_kind != "generalized_lasso" &&
        r0_kind != "fused" && r0_kind != "group_lasso" &&
        r0_kind != "schatten" && r0_kind != "nuclear")
      errors.push_back("penalty.r0.kind: unknown '" + r0_kind + "'");
    if (r0_kind == "schatten" || r0_kind == "nuclear") {
      const Json params = r0.value("params", Json::object());
      int rows = detail::get_or(params, "rows", 0);
      int p = detail::get_or(model, "p", 0);
      if (rows < 1) {
        errors.push_back("penalty.r0.params.rows: required for schatten/nuclear");
      } else if (p > 0 && p % rows != 0) {
        errors.push_back("penalty.r0.params.rows: p = " + std::to_string(p) +
                         " is not divisible by rows = " + std::to_string(rows));
      }
    }
  }
  if (penalty.contains("theta")) {
    std::string tk =
        detail::get_or<std::string>(penalty["theta"], "kind", "full");
    try {
      detail::parse_theta(tk);
    } catch (const std::exception& e) {
      errors.push_back(std::string("penalty.theta.kind: ") + e.what());
    }
  }
  if (penalty.contains("alpha") && penalty["alpha"].get<double>() <= 0.0)
    errors.push_back("penalty.alpha: must be positive");
  if (penalty.contains("smoothing")) {
    const Json& sm = penalty["smoothing"];
    std::string mode = detail::get_or<std::string>(sm, "mode", "closed_form");
    if (mode != "closed_form" && mode != "monte_carlo")
      errors.push_back("penalty.smoothing.mode: unknown '" + mode + "'");
    if (mode == "closed_form" && r0_kind != "lasso" &&
        r0_kind != "generalized_lasso" && r0_kind != "fused")
      errors.push_back(
          "penalty.smoothing.mode: closed_form requires a lasso or "
          "generalized-lasso penalty");
    if (detail::get_or(sm, "samples", 256) < 100)
      errors.push_back("penalty.smoothing.samples: must be >= 100");
  }

  if (doc.contains("solver")) {
    const Json& s = doc["solver"];
    if (detail::get_or(s, "tol", 1e-8) <= 0.0)
      errors.push_back("solver.tol: must be positive");
    if (detail::get_or(s, "max_iters", 1) < 1)
      errors.push_back("solver.max_iters: must be >= 1");
    std::string rule =
        detail::get_or<std::string>(s, "step_rule", "backtracking");
    if (rule != "backtracking" && rule != "fixed")
      errors.push_back("solver.step_rule: unknown '" + rule + "'");
    double a0 = detail::get_or(s, "alpha0", 100.0);
    double amax = detail::get_or(s, "alpha_max", a0);
    if (a0 <= 0.0 || amax < a0)
      errors.push_back("solver.alpha0/alpha_max: need 0 < alpha0 <= alpha_max");
    if (detail::get_or(s, "alpha_growth", 4.0) <= 1.0)
      errors.push_back("solver.alpha_growth: must exceed 1");
  }
  if (doc.contains("experiment")) {
    const Json& e = doc["experiment"];
    if (detail::get_or(e, "replicates", 50) < 10)
      errors.push_back("experiment.replicates: must be >= 10");
    if (detail::get_or(e, "m_oo", 100000) < 1000)
      errors.push_back("experiment.m_oo: must be >= 1000");
  }
  return errors;
}

inline Config parse_config(const Json& doc) {
  auto errors = validate_config(doc);
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "config validation failed:";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw ConfigError(msg.str());
  }
  Config cfg;
  const Json& model = doc["model"];
  cfg.loss = detail::parse_loss(model["loss"].get<std::string>());
  cfg.metric = model.contains("metric")
                   ? detail::parse_loss(model["metric"].get<std::string>())
                   : cfg.loss;
  cfg.gamma0 = detail::get_or(model, "gamma0", 2.0);
  cfg.p = detail::get_or(model, "p", 0);
  cfg.n = detail::get_or(
      model, "n", static_cast<int>(std::llround(cfg.gamma0 * cfg.p)));
  if (cfg.p == 0 && cfg.n > 0)
    cfg.p = static_cast<int>(std::llround(cfg.n / cfg.gamma0));
  cfg.beta_star_mode =
      detail::get_or<std::string>(model, "beta_star_mode", "rademacher");
  cfg.signal_scale = detail::get_or(model, "signal_scale", 1.0);
  cfg.noise_sigma = detail::get_or(model, "noise_sigma", 1.0);
  cfg.snr_target = detail::get_or(model, "snr_target", -1.0);
  if (model.contains("covariance")) {
    const Json& cov = model["covariance"];
    std::string kind = detail::get_or<std::string>(cov, "kind", "identity");
    if (kind == "identity") {
      cfg.covariance.kind = CovarianceKind::ScaledIdentity;
      cfg.covariance.c = detail::get_or(cov, "c", 1.0);
    } else if (kind == "ar1") {
      cfg.covariance.kind = CovarianceKind::ScaledAR1;
      cfg.covariance.c = detail::get_or(cov, "c", 1.0);
      cfg.covariance.rho = detail::get_or(cov, "rho", 0.5);
    } else {
      cfg.covariance.kind = CovarianceKind::ScaledDiagonal;
      auto d = cov.at("diag").get<std::vector<double>>();
      cfg.covariance.diag =
          Eigen::Map<const Vector>(d.data(), static_cast<int>(d.size()));
    }
  }

  const Json& pen = doc["penalty"];
  cfg.penalty.lambda = pen["lambda"].get<double>();
  cfg.penalty.eta = pen["eta"].get<double>();
  cfg.penalty.alpha = detail::get_or(pen, "alpha", 100.0);
  if (pen.contains("r0")) {
    cfg.r0_kind = detail::get_or<std::string>(pen["r0"], "kind", "lasso");
    cfg.r0_params = pen["r0"].value("params", Json::object());
  }
  if (pen.contains("theta"))
    cfg.theta_kind = detail::get_or<std::string>(pen["theta"], "kind", "full");
  if (pen.contains("smoothing")) {
    const Json& sm = pen["smoothing"];
    cfg.penalty.smoothing_mode =
        detail::get_or<std::string>(sm, "mode", "closed_form") == "monte_carlo"
            ? SmoothingMode::MonteCarlo
            : SmoothingMode::ClosedForm;
    cfg.penalty.smoothing_samples = detail::get_or(sm, "samples", 256);
  }

  if (doc.contains("solver")) {
    const Json& s = doc["solver"];
    cfg.solver.max_iters = detail::get_or(s, "max_iters", 200000);
    cfg.solver.tol = detail::get_or(s, "tol", 1e-8);
    cfg.solver.step_rule =
        detail::get_or<std::string>(s, "step_rule", "backtracking") == "fixed"
            ? StepRule::FixedInverseLipschitz
            : StepRule::BacktrackingArmijo;
    cfg.solver.acceleration = detail::get_or(s, "acceleration", true);
    cfg.solver.alpha0 = detail::get_or(s, "alpha0", cfg.penalty.alpha);
    cfg.solver.alpha_max = detail::get_or(s, "alpha_max", cfg.solver.alpha0);
    cfg.solver.alpha_growth = detail::get_or(s, "alpha_growth", 4.0);
  } else {
    cfg.solver.alpha0 = cfg.penalty.alpha;
    cfg.solver.alpha_max = cfg.penalty.alpha;
  }

  if (doc.contains("experiment")) {
    const Json& e = doc["experiment"];
    if (e.contains("n_grid")) cfg.n_grid = e["n_grid"].get<std::vector<int>>();
    cfg.replicates = detail::get_or(e, "replicates", 50);
    cfg.m_oo = detail::get_or(e, "m_oo", 100000);
    cfg.m_cond = detail::get_or(e, "m_cond", 0);
    if (e.contains("alphas"))
      cfg.audit_alphas = e["alphas"].get<std::vector<double>>();
    cfg.n_draws = detail::get_or(e, "n_draws", 10000);
    cfg.audit_seeds = detail::get_or(e, "seeds", 5);
  }
  return cfg;
}

// Canonical serialization; parse(serialize(parse(doc))) == parse(doc).
inline Json serialize_config(const Config& cfg) {
  Json doc;
  Json model;
  model["loss"] = to_string(cfg.loss);
  model["metric"] = to_string(cfg.metric);
  model["n"] = cfg.n;
  model["p"] = cfg.p;
  model["gamma0"] = cfg.gamma0;
  Json cov;
  switch (cfg.covariance.kind) {
    case CovarianceKind::ScaledIdentity:
      cov["kind"] = "identity";
      cov["c"] = cfg.covariance.c;
      break;
    case CovarianceKind::ScaledAR1:
      cov["kind"] = "ar1";
      cov["c"] = cfg.covariance.c;
      cov["rho"] = cfg.covariance.rho;
      break;
    case CovarianceKind::ScaledDiagonal: {
      cov["kind"] = "diagonal";
      std::vector<double> d(cfg.covariance.diag.data(),
                            cfg.covariance.diag.data() + cfg.covariance.diag.size());
      cov["diag"] = d;
      break;
    }
  }
  model["covariance"] = cov;
  model["beta_star_mode"] = cfg.beta_star_mode;
  model["signal_scale"] = cfg.signal_scale;
  model["noise_sigma"] = cfg.noise_sigma;
  if (cfg.snr_target >= 0.0) model["snr_target"] = cfg.snr_target;
  doc["model"] = model;

  Json pen;
  pen["lambda"] = cfg.penalty.lambda;
  pen["eta"] = cfg.penalty.eta;
  pen["alpha"] = cfg.penalty.alpha;
  pen["r0"] = {{"kind", cfg.r0_kind}, {"params", cfg.r0_params}};
  pen["theta"] = {{"kind", cfg.theta_kind}};
  pen["smoothing"] = {
      {"mode", cfg.penalty.smoothing_mode == SmoothingMode::MonteCarlo
                   ? "monte_carlo"
                   : "closed_form"},
      {"samples", cfg.penalty.smoothing_samples}};
  doc["penalty"] = pen;

  Json sol;
  sol["max_iters"] = cfg.solver.max_iters;
  sol["tol"] = cfg.solver.tol;
  sol["step_rule"] = cfg.solver.step_rule == StepRule::FixedInverseLipschitz
                         ? "fixed"
                         : "backtracking";
  sol["acceleration"] = cfg.solver.acceleration;
  sol["alpha0"] = cfg.solver.alpha0;
  sol["alpha_max"] = cfg.solver.alpha_max;
  sol["alpha_growth"] = cfg.solver.alpha_growth;
  doc["solver"] = sol;

  Json exp;
  exp["n_grid"] = cfg.n_grid;
  exp["replicates"] = cfg.replicates;
  exp["m_oo"] = cfg.m_oo;
  if (cfg.m_cond > 0) exp["m_cond"] = cfg.m_cond;
  exp["alphas"] = cfg.audit_alphas;
  exp["n_draws"] = cfg.n_draws;
  exp["seeds"] = cfg.audit_seeds;
  doc["experiment"] = exp;
  return doc;
}

// Instantiate an R0Variant for a given dimension p from the config fields.
inline R0Variant make_r0(const Config& cfg, int p) {
  if (cfg.r0_kind == "lasso") return R0Variant::lasso(p);
  if (cfg.r0_kind == "fused" || cfg.r0_kind == "generalized_lasso")
    return R0Variant::fused(p);
  if (cfg.r0_kind == "group_lasso") {
    int gsize = cfg.r0_params.value("group_size", 5);
    if (p % gsize != 0)
      throw ConfigError("group_lasso: p not divisible by group_size");
    std::vector<std::vector<int>> gs;
    for (int start = 0; start < p; start += gsize) {
      std::vector<int> g;
      for (int k = 0; k < gsize; ++k) g.push_back(start + k);
      gs.push_back(std::move(g));
    }
    return R0Variant::group(std::move(gs));
  }
  if (cfg.r0_kind == "schatten" || cfg.r0_kind == "nuclear") {
    int rows = cfg.r0_params.value("rows", 0);
    if (rows < 1 || p % rows != 0)
      throw ConfigError("schatten: p must be divisible by params.rows");
    int q = cfg.r0_kind == "nuclear" ? 1 : cfg.r0_params.value("order", 1);
    return R0Variant::schatten(rows, p / rows, q);
  }
  throw ConfigError("unknown r0 kind '" + cfg.r0_kind + "'");
}

inline ConstraintSet make_theta(const Config& cfg, int p) {
  switch (detail::parse_theta(cfg.theta_kind)) {
    case ConstraintKind::FullSpace: return ConstraintSet::full_space();
    case ConstraintKind::NonnegativeOrthant: return ConstraintSet::nonneg();
    case ConstraintKind::Box: {
      double lo = cfg.r0_params.value("box_lo", -1.0);
      double hi = cfg.r0_params.value("box_hi", 1.0);
      return ConstraintSet::box(Vector::Constant(p, lo), Vector::Constant(p, hi));
    }
    case ConstraintKind::EuclideanBall:
      return ConstraintSet::ball(cfg.r0_params.value("radius", 1.0));
    case ConstraintKind::IsotoneCone: return ConstraintSet::isotone();
  }
  return ConstraintSet::full_space();
}

// Materialize a concrete (model, penalty) pair at dimension p.
inline ModelSpec make_model(const Config& cfg, int n, int p,
                            std::uint64_t seed) {
  ModelSpec m;
  m.n = n;
  m.p = p;
  m.gamma0 = cfg.gamma0;
  m.covariance = cfg.covariance;
  m.loss.kind = cfg.loss;
  m.metric.kind = cfg.metric;
  m.noise_sigma = cfg.noise_sigma;
  if (cfg.beta_star_mode == "zero") {
    m.beta_star = Vector::Zero(p);
  } else if (cfg.beta_star_mode == "rademacher") {
    m.beta_star = ModelSpec::rademacher_beta(p, cfg.signal_scale, seed);
  } else {
    throw ConfigError("unknown beta_star_mode '" + cfg.beta_star_mode + "'");
  }
  return m;
}

inline PenaltySpec make_penalty(const Config& cfg, int p) {
  PenaltySpec pen = cfg.penalty;
  pen.r0 = make_r0(cfg, p);
  pen.theta = make_theta(cfg, p);
  return pen;
}

// Apply a dotted-path override ("penalty.lambda=0.5") onto a JSON document.
inline void apply_override(Json& doc, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + kv + "' must look like key.path=value");
  std::string path = kv.substr(0, eq);
  std::string value = kv.substr(eq + 1);
  Json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    auto dot = path.find('.', pos);
    std::string key = path.substr(pos, dot - pos);
    if (dot == std::string::npos) {
      Json parsed = Json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

inline Json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace lorisk
