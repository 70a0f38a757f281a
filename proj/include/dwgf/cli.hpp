#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/config.hpp"
#include "dwgf/csv.hpp"
#include "dwgf/errors.hpp"
#include "dwgf/flow.hpp"
#include "dwgf/oracle.hpp"
#include "dwgf/verify.hpp"

// Command implementations behind the dwgf executable. Exit codes: 0 success,
// 1 failed run or failed verification, 2 usage or configuration error.
namespace dwgf::cli {

inline constexpr const char *kOutputDirEnv = "DWGF_OUTPUT_DIR";

enum Exit : int { ok = 0, failure = 1, usage = 2 };

/// Headline numbers of one run, as written to sweep_summary.csv.
struct RunSummary {
  double psnr_mean = std::nan("");
  double psnr_std = std::nan("");
  double latent_spread = std::nan(""); // trace of the latent ensemble covariance
};

inline std::filesystem::path output_directory(const ExperimentConfig &cfg) {
  if (const char *env = std::getenv(kOutputDirEnv); env && *env)
    return env;
  return cfg.output.directory;
}

inline bool wants(const ExperimentConfig &cfg, const std::string &metric) {
  for (const auto &m : cfg.output.metrics)
    if (m == metric)
      return true;
  return false;
}

/// Runs the flow and writes every CSV artifact into `dir`.
inline RunSummary run_to_directory(const ExperimentConfig &cfg,
                                   const std::filesystem::path &dir) {
  const Experiment ex = materialize(cfg);
  const RunResult result = run(ex.problem, ex.flow);
  std::filesystem::create_directories(dir);

  const Eigen::MatrixXd &z = result.ensemble.particles;
  const Eigen::MatrixXd &x = result.decoded;
  csv::write_matrix(dir / "particles_latent.csv", z, "z");
  csv::write_matrix(dir / "particles_decoded.csv", x, "x");

  RunSummary summary;
  const Eigen::Index N = z.rows();
  csv::Writer metrics(dir / "metrics.csv", {"metric", "value"});
  auto put = [&](const std::string &name, double v) {
    metrics.row({name, csv::format(v)});
  };

  if (wants(cfg, "psnr") && ex.x_true) {
    const double peak = cfg.output.psnr_peak, cap = cfg.output.psnr_cap;
    Eigen::VectorXd psnr(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      psnr[i] = oracle::psnr(x.row(i).transpose(), *ex.x_true, peak, cap);
      put("psnr_particle_" + std::to_string(i), psnr[i]);
    }
    summary.psnr_mean = psnr.mean();
    summary.psnr_std =
        N > 1 ? std::sqrt((psnr.array() - summary.psnr_mean).square().sum() /
                          static_cast<double>(N - 1))
              : 0.0;
    put("psnr_mean", summary.psnr_mean);
    put("psnr_std", summary.psnr_std);
    const auto &obs = ex.problem.observation;
    if (obs && obs->op().kind() == OperatorKind::mask)
      put("psnr_zero_filled",
          oracle::psnr(obs->op().adjoint(obs->y()), *ex.x_true, peak, cap));
  }

  if (const auto &obs = ex.problem.observation) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
      worst = std::max(worst, (obs->op().apply(x.row(i).transpose()) - obs->y())
                                  .cwiseAbs()
                                  .maxCoeff());
    put("max_observed_residual_over_sigma_y", worst / obs->sigma_y());
  }

  if (wants(cfg, "ensemble")) {
    const Eigen::VectorXd mean = z.colwise().mean().transpose();
    for (Eigen::Index j = 0; j < mean.size(); ++j)
      put("latent_mean_" + std::to_string(j), mean[j]);
    if (N >= 2) {
      const auto stats = oracle::ensemble_stats(z);
      for (Eigen::Index a = 0; a < stats.cov.rows(); ++a)
        for (Eigen::Index b = 0; b < stats.cov.cols(); ++b)
          put("latent_cov_" + std::to_string(a) + "_" + std::to_string(b),
              stats.cov(a, b));
      summary.latent_spread = stats.cov.trace();
      put("latent_cov_trace", summary.latent_spread);
      put("decoded_cov_trace", oracle::ensemble_stats(x).cov.trace());
    }
  }
  metrics.close();

  if (ex.flow.trace) {
    csv::Writer t(dir / "trace.csv",
                  {"step", "s", "particle", "neg_log_likelihood", "consistency",
                   "regularization", "u_norm", "v_norm"});
    for (const auto &r : result.trace)
      t.row({std::to_string(r.step), std::to_string(r.s),
             std::to_string(r.particle), csv::format(r.neg_log_likelihood),
             csv::format(r.consistency), csv::format(r.regularization),
             csv::format(r.u_norm), csv::format(r.v_norm)});
    t.close();
  }
  return summary;
}

inline int cmd_run(const std::filesystem::path &config_path,
                   std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    validate(cfg);
  } catch (const std::exception &e) {
    err << "dwgf run: " << e.what() << "\n";
    return usage;
  }
  const auto dir = output_directory(cfg);
  try {
    const auto s = run_to_directory(cfg, dir);
    out << "wrote " << dir.string() << "\n";
    if (!std::isnan(s.psnr_mean))
      out << "psnr mean " << csv::format(s.psnr_mean) << " dB\n";
    return ok;
  } catch (const ConfigError &e) {
    err << "dwgf run: " << e.what() << "\n";
    return usage;
  } catch (const ShapeError &e) {
    err << "dwgf run: " << e.what() << "\n";
    return usage;
  } catch (const std::exception &e) {
    err << "dwgf run: " << e.what() << "\n";
    return failure;
  }
}

inline int cmd_verify(const std::string &suite, std::ostream &out = std::cout,
                      std::ostream &err = std::cerr) {
  const auto &names = verify::suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end()) {
    err << "dwgf verify: unknown suite '" << suite
        << "' (gradients, theorem1, fixedpoint, reparam)\n";
    return usage;
  }
  const auto result = verify::run_suite(suite);
  for (const auto &c : result.checks)
    out << (c.passed ? "PASS  " : "FAIL  ") << c.name << ": measured "
        << csv::format(c.measured) << ", threshold " << csv::format(c.threshold)
        << "\n";
  out << suite << ": " << (result.passed() ? "all checks passed" : "FAILED") << "\n";
  return result.passed() ? ok : failure;
}

/// Short parameter names accepted by sweep, mapped to config paths. Any
/// dotted path to a numeric or boolean field is accepted as well.
inline const std::map<std::string, std::string> &sweep_aliases() {
  static const std::map<std::string, std::string> aliases{
      {"gamma", "flow.gamma"},
      {"lambda_hat", "flow.lambda_hat"},
      {"N", "flow.N"},
      {"seed", "flow.seed"},
      {"threads", "flow.threads"},
      {"lr", "flow.optimizer.lr"},
      {"step_size", "flow.optimizer.step_size"},
      {"c", "schedule.c"},
      {"T", "schedule.T"},
      {"beta_min", "schedule.beta_min"},
      {"beta_max", "schedule.beta_max"},
      {"rho", "autoencoder.rho"},
      {"sigma_y", "observation.sigma_y"},
  };
  return aliases;
}

inline std::vector<std::string> split_values(const std::string &list) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : list + ",") {
    if (ch == ',') {
      const auto b = cur.find_first_not_of(" \t");
      if (b != std::string::npos)
        out.push_back(cur.substr(b, cur.find_last_not_of(" \t") - b + 1));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

/// Locates the leaf named by a dotted path; nullptr when absent or not a
/// scalar.
inline Json *find_scalar(Json &j, const std::string &path) {
  Json *node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (!node->is_object() || !node->contains(key))
      return nullptr;
    node = &(*node)[key];
    if (dot == std::string::npos)
      break;
    start = dot + 1;
  }
  return node->is_number() || node->is_boolean() ? node : nullptr;
}

inline int cmd_sweep(const std::filesystem::path &config_path,
                     const std::string &param, const std::vector<std::string> &values,
                     std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  if (values.empty()) {
    err << "dwgf sweep: --values needs at least one value\n";
    return usage;
  }
  ExperimentConfig base;
  try {
    base = load_config(config_path);
    validate(base);
  } catch (const std::exception &e) {
    err << "dwgf sweep: " << e.what() << "\n";
    return usage;
  }
  const auto alias = sweep_aliases().find(param);
  const std::string path = alias != sweep_aliases().end() ? alias->second : param;

  // Build every variant first so a bad value fails before any run starts.
  std::vector<ExperimentConfig> variants;
  for (const auto &v : values) {
    Json j = to_json(base);
    Json *leaf = find_scalar(j, path);
    if (!leaf) {
      err << "dwgf sweep: unknown parameter '" << param << "'\n";
      return usage;
    }
    Json parsed;
    try {
      parsed = Json::parse(v);
    } catch (const Json::parse_error &) {
    }
    if (!(parsed.is_number() || parsed.is_boolean())) {
      err << "dwgf sweep: value '" << v << "' for " << path
          << " is not a number or boolean\n";
      return usage;
    }
    *leaf = parsed;
    try {
      auto cfg = config_from_json(j, base.base_dir);
      validate(cfg);
      variants.push_back(std::move(cfg));
    } catch (const std::exception &e) {
      err << "dwgf sweep: " << param << "=" << v << ": " << e.what() << "\n";
      return usage;
    }
  }

  const auto root = output_directory(base);
  std::filesystem::create_directories(root);
  csv::Writer summary(root / "sweep_summary.csv",
                      {"value", "psnr_mean", "psnr_std", "latent_cov_trace"});
  std::string short_name = param.substr(param.rfind('.') + 1);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::string tag = values[k];
    for (char &ch : tag)
      if (ch == '/' || ch == '\\')
        ch = '_';
    const auto dir = root / (short_name + "_" + tag);
    RunSummary s;
    try {
      s = run_to_directory(variants[k], dir);
    } catch (const std::exception &e) {
      err << "dwgf sweep: " << param << "=" << values[k] << ": " << e.what() << "\n";
      return failure;
    }
    summary.row({values[k], csv::format(s.psnr_mean), csv::format(s.psnr_std),
                 csv::format(s.latent_spread)});
    out << param << "=" << values[k] << " -> " << dir.string() << "\n";
  }
  summary.close();
  out << "wrote " << (root / "sweep_summary.csv").string() << "\n";
  return ok;
}

} // namespace dwgf::cli
