// lo-risk: experiment driver for leave-one-out vs out-of-sample risk studies.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lorisk/config.hpp"
#include "lorisk/report.hpp"
#include "lorisk/risk.hpp"
#include "lorisk/solver.hpp"
#include "lorisk/verify.hpp"

namespace fs = std::filesystem;
using namespace lorisk;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAuditFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitNonConvergence = 3;

struct CliOptions {
  std::string subcommand;
  std::string config_path;
  std::string output_dir = "out";
  int threads = 0;  // 0 = auto
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;
  bool dry_run = false;
};

void apply_env(CliOptions& opt) {
  if (const char* v = std::getenv("LO_RISK_THREADS")) opt.threads = std::atoi(v);
  if (const char* v = std::getenv("LO_RISK_SEED"))
    opt.seed = std::strtoull(v, nullptr, 10);
  if (const char* v = std::getenv("LO_RISK_OUTPUT_DIR")) opt.output_dir = v;
  if (const char* v = std::getenv("LO_RISK_SET")) opt.overrides.push_back(v);
}

Config load(const CliOptions& opt, Json& doc) {
  doc = load_config_file(opt.config_path);
  for (const auto& kv : opt.overrides) apply_override(doc, kv);
  return parse_config(doc);
}

void print_plan(const CliOptions& opt, const Config& cfg) {
  std::cout << "dry run: subcommand=" << opt.subcommand
            << " loss=" << to_string(cfg.loss) << " r0=" << cfg.r0_kind
            << " theta=" << cfg.theta_kind << " lambda=" << cfg.penalty.lambda
            << " eta=" << cfg.penalty.eta << " gamma0=" << cfg.gamma0
            << " seed=" << opt.seed << " threads=" << resolve_threads(opt.threads)
            << " output=" << opt.output_dir << "\n"
            << "config valid; nothing computed.\n";
}

RiskRowContext row_context(const Config& cfg) {
  RiskRowContext ctx;
  ctx.gamma0 = cfg.gamma0;
  ctx.lambda = cfg.penalty.lambda;
  ctx.eta = cfg.penalty.eta;
  ctx.penalty = cfg.r0_kind;
  ctx.loss = to_string(cfg.loss);
  return ctx;
}

int cmd_fit(const CliOptions& opt, const Config& cfg) {
  ModelSpec model = make_model(cfg, cfg.n, cfg.p, opt.seed);
  PenaltySpec pen = make_penalty(cfg, cfg.p);
  Dataset data = generate_dataset(model, opt.seed);
  FitResult fr = fit(model, pen, data, cfg.solver);
  Json j;
  j["objective"] = fr.objective;
  j["fp_residual"] = fr.fp_residual;
  j["iters"] = fr.iters;
  j["alpha_used"] = fr.alpha_used;
  j["beta_hat"] = std::vector<double>(fr.beta_hat.data(),
                                      fr.beta_hat.data() + fr.beta_hat.size());
  write_file_atomic(fs::path(opt.output_dir) / "fit.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_lo(const CliOptions& opt, const Config& cfg) {
  ModelSpec model = make_model(cfg, cfg.n, cfg.p, opt.seed);
  PenaltySpec pen = make_penalty(cfg, cfg.p);
  Dataset data = generate_dataset(model, opt.seed);
  LooFits loo = fit_loo(model, pen, data, cfg.solver, resolve_threads(opt.threads));
  RiskReport rr = compute_risk(loo, data, model, cfg.m_oo, opt.seed);
  DecompositionReport dec;
  bool have_dec = cfg.m_cond >= 1000;
  if (have_dec) dec = compute_decomposition(loo, data, model, cfg.m_cond, opt.seed);
  std::string csv = std::string(kRiskCsvHeader) + "\n" +
                    risk_csv_row(rr, row_context(cfg), have_dec ? &dec : nullptr) +
                    "\n";
  write_file_atomic(fs::path(opt.output_dir) / "risk.csv", csv);
  Json j;
  j["lo"] = rr.lo;
  j["oo_mc"] = rr.oo_mc;
  j["oo_mc_se"] = rr.oo_mc_se;
  j["sq_err"] = rr.sq_err;
  j["mc_bias"] = rr.mc_bias;
  j["degraded"] = rr.degraded;
  if (have_dec) {
    j["v1"] = dec.v1;
    j["v2"] = dec.v2;
  }
  write_file_atomic(fs::path(opt.output_dir) / "risk.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_rate(const CliOptions& opt, const Config& cfg) {
  RateExperiment exp;
  exp.gamma0 = cfg.gamma0;
  exp.n_grid = cfg.n_grid;
  exp.replicates = cfg.replicates;
  exp.m_oo = cfg.m_oo;
  exp.base_seed = opt.seed;
  exp.signal_scale = cfg.signal_scale;
  exp.model = make_model(cfg, cfg.n_grid.front(),
                         static_cast<int>(std::llround(cfg.n_grid.front() / cfg.gamma0)),
                         opt.seed);
  exp.penalty = make_penalty(cfg, exp.model.p);
  exp.penalty_factory = [&cfg](int p) { return make_penalty(cfg, p); };
  exp.solver = cfg.solver;
  RateReport rep = run_rate_experiment(exp, resolve_threads(opt.threads));
  write_file_atomic(fs::path(opt.output_dir) / "rate_report.csv",
                    rate_report_csv(rep));
  write_file_atomic(fs::path(opt.output_dir) / "summary.json",
                    rate_summary_json(rep).dump(2) + "\n");
  return kExitOk;
}

int cmd_audit_lemma4(const CliOptions& opt, const Config& cfg) {
  BoundAuditReport all;
  for (int s = 0; s < cfg.audit_seeds; ++s) {
    std::uint64_t seed = mix_seed(opt.seed, 900, static_cast<std::uint64_t>(s));
    ModelSpec model = make_model(cfg, cfg.n, cfg.p, seed);
    PenaltySpec pen = make_penalty(cfg, cfg.p);
    Dataset data = generate_dataset(model, seed);
    LooFits loo = fit_loo(model, pen, data, cfg.solver, resolve_threads(opt.threads));
    BoundAuditReport rep = audit_lemma4(model, pen, data, loo, cfg.solver.tol,
                                        "seed" + std::to_string(s));
    all.records.insert(all.records.end(), rep.records.begin(), rep.records.end());
  }
  all.finalize();
  write_file_atomic(fs::path(opt.output_dir) / "bound_audit.csv",
                    bound_audit_csv(all));
  write_file_atomic(fs::path(opt.output_dir) / "summary.json",
                    audit_summary_json(all).dump(2) + "\n");
  return all.all_pass ? kExitOk : kExitAuditFailure;
}

int cmd_audit_lemma8(const CliOptions& opt, const Config& cfg) {
  ModelSpec model = make_model(cfg, cfg.n, cfg.p, opt.seed);
  PenaltySpec pen = make_penalty(cfg, cfg.p);
  Dataset data = generate_dataset(model, opt.seed);
  BoundAuditReport rep =
      audit_lemma8(model, pen, data, cfg.solver, cfg.audit_alphas);
  write_file_atomic(fs::path(opt.output_dir) / "bound_audit.csv",
                    bound_audit_csv(rep));
  write_file_atomic(fs::path(opt.output_dir) / "summary.json",
                    audit_summary_json(rep).dump(2) + "\n");
  return rep.all_pass ? kExitOk : kExitAuditFailure;
}

int cmd_audit_moments(const CliOptions& opt, const Config& cfg) {
  ModelSpec model = make_model(cfg, cfg.n_grid.front(),
                               static_cast<int>(std::llround(cfg.n_grid.front() / cfg.gamma0)),
                               opt.seed);
  MomentAuditReport rep = audit_moments(
      model, [&cfg](int p) { return make_penalty(cfg, p); }, cfg.solver,
      cfg.n_grid, cfg.gamma0, cfg.n_draws, cfg.replicates, opt.seed,
      resolve_threads(opt.threads));
  write_file_atomic(fs::path(opt.output_dir) / "moments.csv", moments_csv(rep));
  Json j;
  j["mean_x8"] = rep.mean_x8;
  j["mean_x8_se"] = rep.mean_x8_se;
  j["bound_x8"] = rep.bound_x8;
  j["x8_pass"] = rep.x8_pass;
  j["beta_stable"] = rep.beta_stable;
  j["phi_stable"] = rep.phi_stable;
  write_file_atomic(fs::path(opt.output_dir) / "summary.json", j.dump(2) + "\n");
  return (rep.x8_pass && rep.beta_stable && rep.phi_stable) ? kExitOk
                                                            : kExitAuditFailure;
}

int cmd_snr(const CliOptions& opt, const Config& cfg) {
  ModelSpec model = make_model(cfg, cfg.n, cfg.p, opt.seed);
  SnrReport rep = compute_snr(model, std::max(cfg.n_draws, 1000), opt.seed);
  Json j;
  j["signal_var"] = rep.signal_var;
  j["mean_noise_var"] = rep.mean_noise_var;
  j["noise_var_se"] = rep.noise_var_se;
  j["snr_se"] = rep.snr_se;
  j["snr"] = rep.infinite ? Json("inf") : Json(rep.snr);
  j["infinite"] = rep.infinite;
  write_file_atomic(fs::path(opt.output_dir) / "snr.json", j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lo-risk: LOO vs out-of-sample risk experiments"};
  app.require_subcommand(1);

  CliOptions opt;
  apply_env(opt);
  std::vector<CLI::App*> subs;
  for (const char* name : {"fit", "lo", "rate", "audit-lemma4", "audit-lemma8",
                           "audit-moments", "snr"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "config document (JSON)")
        ->required();
    sub->add_option("--output-dir", opt.output_dir, "report directory");
    sub->add_option("--threads", opt.threads, "worker threads (0 = auto)");
    sub->add_option("--seed", opt.seed, "base seed");
    sub->add_option("--set", opt.overrides, "dotted-path override key=value");
    sub->add_flag("--dry-run", opt.dry_run, "validate and print plan only");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);
  opt.subcommand = app.get_subcommands().front()->get_name();

  try {
    Json doc;
    Config cfg = load(opt, doc);
    if (opt.dry_run) {
      print_plan(opt, cfg);
      return kExitOk;
    }
    fs::create_directories(opt.output_dir);
    if (opt.subcommand == "fit") return cmd_fit(opt, cfg);
    if (opt.subcommand == "lo") return cmd_lo(opt, cfg);
    if (opt.subcommand == "rate") return cmd_rate(opt, cfg);
    if (opt.subcommand == "audit-lemma4") return cmd_audit_lemma4(opt, cfg);
    if (opt.subcommand == "audit-lemma8") return cmd_audit_lemma8(opt, cfg);
    if (opt.subcommand == "audit-moments") return cmd_audit_moments(opt, cfg);
    if (opt.subcommand == "snr") return cmd_snr(opt, cfg);
    std::cerr << "unknown subcommand\n";
    return kExitConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const NonConvergence& e) {
    std::cerr << "solver did not converge: " << e.what()
              << " (residual " << e.residual << ")\n";
    return kExitNonConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}
