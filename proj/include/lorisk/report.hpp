#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lorisk/config.hpp"
#include "lorisk/risk.hpp"
#include "lorisk/verify.hpp"

namespace lorisk {

// Atomic file write: stage into <path>.tmp, then rename over the target so a
// crash mid-run never leaves a torn report.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

// fixed column order shared by risk and decomposition rows
inline const char* kRiskCsvHeader =
    "n,p,gamma0,lambda,eta,penalty,loss,seed,lo,oo_mc,oo_mc_se,sq_err,v1,v2";

struct RiskRowContext {
  double gamma0 = 0.0;
  double lambda = 0.0;
  double eta = 0.0;
  std::string penalty;
  std::string loss;
};

inline std::string risk_csv_row(const RiskReport& r, const RiskRowContext& ctx,
                                const DecompositionReport* dec = nullptr) {
  std::ostringstream row;
  row << r.n << ',' << r.p << ',' << detail::fmt(ctx.gamma0) << ','
      << detail::fmt(ctx.lambda) << ',' << detail::fmt(ctx.eta) << ','
      << ctx.penalty << ',' << ctx.loss << ',' << r.seed << ','
      << detail::fmt(r.lo) << ',' << detail::fmt(r.oo_mc) << ','
      << detail::fmt(r.oo_mc_se) << ',' << detail::fmt(r.sq_err) << ',';
  if (dec)
    row << detail::fmt(dec->v1) << ',' << detail::fmt(dec->v2);
  else
    row << "nan,nan";
  return row.str();
}

inline std::string rate_report_csv(const RateReport& rep) {
  std::ostringstream out;
  out << "n,p,mse,mse_se,mc_bias,failures\n";
  for (const auto& pt : rep.points)
    out << pt.n << ',' << pt.p << ',' << detail::fmt(pt.mse) << ','
        << detail::fmt(pt.mse_se) << ',' << detail::fmt(pt.mc_bias) << ','
        << pt.failures << '\n';
  return out.str();
}

inline std::string bound_audit_csv(const BoundAuditReport& rep) {
  std::ostringstream out;
  out << "instance,lhs,rhs,slack,pass\n";
  for (const auto& r : rep.records)
    out << r.instance << ',' << detail::fmt(r.lhs) << ',' << detail::fmt(r.rhs)
        << ',' << detail::fmt(r.slack) << ',' << (r.pass ? 1 : 0) << '\n';
  return out.str();
}

inline std::string moments_csv(const MomentAuditReport& rep) {
  std::ostringstream out;
  out << "n,beta_m1,beta_m1_se,beta_m2,beta_m2_se,phi2_m1,phi2_m1_se\n";
  for (std::size_t i = 0; i < rep.n_grid.size(); ++i)
    out << rep.n_grid[i] << ',' << detail::fmt(rep.beta_m1[i]) << ','
        << detail::fmt(rep.beta_m1_se[i]) << ',' << detail::fmt(rep.beta_m2[i])
        << ',' << detail::fmt(rep.beta_m2_se[i]) << ','
        << detail::fmt(rep.phi2_m1[i]) << ',' << detail::fmt(rep.phi2_m1_se[i])
        << '\n';
  return out.str();
}

inline Json rate_summary_json(const RateReport& rep) {
  Json j;
  j["slope"] = rep.slope;
  j["intercept"] = rep.intercept;
  j["slope_ci"] = {rep.slope_ci_lo, rep.slope_ci_hi};
  j["m_oo_used"] = rep.m_oo_used;
  j["m_oo_raised"] = rep.m_oo_raised;
  Json pts = Json::array();
  for (const auto& pt : rep.points)
    pts.push_back({{"n", pt.n},
                   {"p", pt.p},
                   {"mse", pt.mse},
                   {"mse_se", pt.mse_se},
                   {"mc_bias", pt.mc_bias},
                   {"failures", pt.failures}});
  j["points"] = pts;
  return j;
}

inline Json audit_summary_json(const BoundAuditReport& rep) {
  Json j;
  j["pass_rate"] = rep.pass_rate;
  j["all_pass"] = rep.all_pass;
  j["records"] = rep.records.size();
  if (!rep.note.empty()) j["note"] = rep.note;
  return j;
}

}  // namespace lorisk
