#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dwgf/analytic_prior.hpp"
#include "dwgf/autoencoder.hpp"
#include "dwgf/csv.hpp"
#include "dwgf/errors.hpp"
#include "dwgf/flow.hpp"
#include "dwgf/generate.hpp"
#include "dwgf/observation.hpp"
#include "dwgf/random.hpp"
#include "dwgf/schedule.hpp"

namespace dwgf {

using Json = nlohmann::ordered_json;

/// Seeded random mixture: `components` Gaussians in `dim` dimensions.
struct PriorGenerate {
  std::uint64_t seed = 0;
  int dim = 2;
  int components = 2;
  bool operator==(const PriorGenerate &) const = default;
};

struct PriorSpec {
  std::vector<MixtureComponent> components; // empty when generated
  std::optional<PriorGenerate> generate;
  bool operator==(const PriorSpec &) const = default;
};

/// Seeded Gaussian decoder weights of size pixel_dim x prior dimension.
struct DecoderGenerate {
  std::uint64_t seed = 0;
  int pixel_dim = 8;
  bool operator==(const DecoderGenerate &) const = default;
};

struct AutoencoderSpec {
  Eigen::MatrixXd W; // empty when generated
  Eigen::VectorXd b;
  std::optional<DecoderGenerate> generate;
  double rho = 1e-3;
  bool exact_encoder = true;

  bool operator==(const AutoencoderSpec &o) const {
    return detail::same(W, o.W) && detail::same(b, o.b) &&
           generate == o.generate && rho == o.rho &&
           exact_encoder == o.exact_encoder;
  }
};

/// A vector given inline, read from a CSV file, or produced from a seed.
struct VectorSource {
  enum class Kind { values, file, seeded };
  Kind kind = Kind::values;
  Eigen::VectorXd values;
  std::string file;
  std::uint64_t seed = 0;

  bool operator==(const VectorSource &o) const {
    return kind == o.kind && detail::same(values, o.values) && file == o.file &&
           seed == o.seed;
  }
};

struct OperatorSpec {
  OperatorKind kind = OperatorKind::identity;
  std::vector<bool> keep;
  int factor = 1;
  bool operator==(const OperatorSpec &) const = default;
};

struct ObservationSpec {
  OperatorSpec op;
  double sigma_y = 1e-3;
  VectorSource y; // seeded: y = A x_true + sigma_y noise
  bool operator==(const ObservationSpec &) const = default;
};

struct OutputSpec {
  std::string directory = "dwgf_out";
  std::vector<std::string> metrics{"psnr", "ensemble"};
  double psnr_peak = 1.0;
  double psnr_cap = 100.0;
  bool operator==(const OutputSpec &) const = default;
};

struct ExperimentConfig {
  Schedule schedule;
  PriorSpec prior;
  AutoencoderSpec autoencoder;
  std::optional<ObservationSpec> observation;
  std::optional<VectorSource> ground_truth; // seeded: x_true = D(z), z ~ prior
  FlowConfig flow;                          // flow.c lives in the schedule block
  OutputSpec output;
  std::filesystem::path base_dir; // resolves relative file paths; not serialized

  bool operator==(const ExperimentConfig &o) const {
    return schedule == o.schedule && prior == o.prior &&
           autoencoder == o.autoencoder && observation == o.observation &&
           ground_truth == o.ground_truth && flow == o.flow &&
           output == o.output;
  }

  Eigen::Index latent_dim() const {
    return prior.generate ? prior.generate->dim
                          : prior.components.front().mean.size();
  }
  Eigen::Index pixel_dim() const {
    return autoencoder.generate ? autoencoder.generate->pixel_dim
                                : autoencoder.W.rows();
  }
};

namespace config_detail {

inline std::string join(const std::string &path, const std::string &key) {
  return path.empty() ? key : path + "." + key;
}

/// Typed, path-aware access to one JSON object.
class Node {
public:
  Node(const Json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError((path_.empty() ? std::string("config") : path_) +
                        ": expected an object");
  }

  const std::string &path() const { return path_; }
  bool has(const std::string &key) const { return j_.contains(key); }

  void allow_only(std::initializer_list<const char *> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char *k : keys)
        known = known || it.key() == k;
      if (!known)
        throw ConfigError(join(path_, it.key()) + ": unknown field");
    }
  }

  Node child(const std::string &key) const {
    return Node(at(key), join(path_, key));
  }

  double number(const std::string &key) const {
    const Json &v = at(key);
    if (!v.is_number())
      throw ConfigError(join(path_, key) + ": expected a number");
    return v.get<double>();
  }
  double number(const std::string &key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::int64_t integer(const std::string &key) const {
    const Json &v = at(key);
    if (v.is_number_integer())
      return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::floor(d) == d && std::abs(d) < 9e15)
        return static_cast<std::int64_t>(d);
    }
    throw ConfigError(join(path_, key) + ": expected an integer");
  }
  std::int64_t integer(const std::string &key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }

  std::uint64_t seed(const std::string &key) const {
    const Json &v = at(key);
    if (v.is_number_unsigned())
      return v.get<std::uint64_t>();
    const auto i = integer(key);
    if (i < 0)
      throw ConfigError(join(path_, key) + ": must be >= 0");
    return static_cast<std::uint64_t>(i);
  }

  bool boolean(const std::string &key, bool fallback) const {
    if (!has(key))
      return fallback;
    const Json &v = at(key);
    if (!v.is_boolean())
      throw ConfigError(join(path_, key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string &key) const {
    const Json &v = at(key);
    if (!v.is_string())
      throw ConfigError(join(path_, key) + ": expected a string");
    return v.get<std::string>();
  }

  Eigen::VectorXd vector(const std::string &key) const {
    const Json &v = at(key);
    const std::string p = join(path_, key);
    if (!v.is_array() || v.empty())
      throw ConfigError(p + ": expected a non-empty array of numbers");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number())
        throw ConfigError(p + "[" + std::to_string(k) + "]: expected a number");
      out[static_cast<Eigen::Index>(k)] = v[k].get<double>();
    }
    return out;
  }

  /// Array of rows.
  Eigen::MatrixXd matrix(const std::string &key) const {
    const Json &v = at(key);
    const std::string p = join(path_, key);
    if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty())
      throw ConfigError(p + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto cols = static_cast<Eigen::Index>(v[0].size());
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Json &r = v[static_cast<std::size_t>(i)];
      const std::string rp = p + "[" + std::to_string(i) + "]";
      if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
        throw ShapeError(rp + ": expected " + std::to_string(cols) + " entries");
      for (Eigen::Index j = 0; j < cols; ++j) {
        const Json &e = r[static_cast<std::size_t>(j)];
        if (!e.is_number())
          throw ConfigError(rp + "[" + std::to_string(j) + "]: expected a number");
        out(i, j) = e.get<double>();
      }
    }
    return out;
  }

private:
  const Json &at(const std::string &key) const {
    if (!j_.contains(key))
      throw ConfigError(join(path_, key) + ": missing required field");
    return j_.at(key);
  }

  const Json &j_;
  std::string path_;
};

inline Json to_json(const Eigen::VectorXd &v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k)
    a.push_back(v[k]);
  return a;
}

inline Json to_json(const Eigen::MatrixXd &m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    a.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return a;
}

inline VectorSource parse_source(const Node &n, const char *seeded_key) {
  VectorSource src;
  int given = 0;
  if (n.has("values")) {
    src.kind = VectorSource::Kind::values;
    src.values = n.vector("values");
    ++given;
  }
  if (n.has("file")) {
    src.kind = VectorSource::Kind::file;
    src.file = n.string("file");
    ++given;
  }
  if (n.has(seeded_key)) {
    const Node g = n.child(seeded_key);
    g.allow_only({"seed"});
    src.kind = VectorSource::Kind::seeded;
    src.seed = g.seed("seed");
    ++given;
  }
  if (given != 1)
    throw ConfigError(n.path() + ": give exactly one of values, file, " +
                      seeded_key);
  n.allow_only({"values", "file", seeded_key});
  return src;
}

inline Json source_to_json(const VectorSource &src, const char *seeded_key) {
  switch (src.kind) {
  case VectorSource::Kind::values:
    return {{"values", to_json(src.values)}};
  case VectorSource::Kind::file:
    return {{"file", src.file}};
  case VectorSource::Kind::seeded:
    return {{seeded_key, {{"seed", src.seed}}}};
  }
  return {};
}

} // namespace config_detail

/// Builds a config from parsed JSON. Only per-field checks happen here; call
/// validate() for cross-field consistency.
inline ExperimentConfig config_from_json(const Json &j,
                                         std::filesystem::path base_dir = {}) {
  using config_detail::Node;
  ExperimentConfig cfg;
  cfg.base_dir = std::move(base_dir);
  const Node root(j, "");
  root.allow_only({"schedule", "prior", "autoencoder", "observation",
                   "ground_truth", "flow", "output"});

  if (root.has("schedule")) {
    const Node n = root.child("schedule");
    n.allow_only({"T", "beta_min", "beta_max", "c"});
    const auto T = n.integer("T", 999);
    if (T < 1 || T > 100000000)
      throw ConfigError("schedule.T: must be a positive integer");
    cfg.schedule = Schedule(static_cast<int>(T), n.number("beta_min", 0.1),
                            n.number("beta_max", 20.0));
    cfg.flow.c = n.number("c", 0.5);
  }

  {
    const Node n = root.child("prior");
    n.allow_only({"components", "generate"});
    if (n.has("components") == n.has("generate"))
      throw ConfigError("prior: give exactly one of components, generate");
    if (n.has("generate")) {
      const Node g = n.child("generate");
      g.allow_only({"seed", "dim", "components"});
      PriorGenerate pg;
      pg.seed = g.seed("seed");
      pg.dim = static_cast<int>(g.integer("dim"));
      pg.components = static_cast<int>(g.integer("components", 2));
      if (pg.dim < 1)
        throw ConfigError("prior.generate.dim: must be >= 1");
      if (pg.components < 1)
        throw ConfigError("prior.generate.components: must be >= 1");
      cfg.prior.generate = pg;
    } else {
      const Json &arr = j.at("prior").at("components");
      if (!arr.is_array() || arr.empty())
        throw ConfigError("prior.components: expected a non-empty array");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const Node c(arr[k], "prior.components[" + std::to_string(k) + "]");
        c.allow_only({"weight", "mean", "cov"});
        cfg.prior.components.push_back(
            {c.number("weight"), c.vector("mean"), c.matrix("cov")});
      }
    }
  }

  {
    const Node n = root.child("autoencoder");
    n.allow_only({"W", "b", "generate", "rho", "exact_encoder"});
    const bool explicit_weights = n.has("W") || n.has("b");
    if (explicit_weights == n.has("generate"))
      throw ConfigError("autoencoder: give either W and b, or generate");
    if (n.has("generate")) {
      const Node g = n.child("generate");
      g.allow_only({"seed", "pixel_dim"});
      DecoderGenerate dg;
      dg.seed = g.seed("seed");
      dg.pixel_dim = static_cast<int>(g.integer("pixel_dim"));
      if (dg.pixel_dim < 1)
        throw ConfigError("autoencoder.generate.pixel_dim: must be >= 1");
      cfg.autoencoder.generate = dg;
    } else {
      cfg.autoencoder.W = n.matrix("W");
      cfg.autoencoder.b = n.vector("b");
    }
    cfg.autoencoder.rho = n.number("rho", 1e-3);
    cfg.autoencoder.exact_encoder = n.boolean("exact_encoder", true);
  }

  if (root.has("observation")) {
    const Node n = root.child("observation");
    n.allow_only({"operator", "sigma_y", "y"});
    ObservationSpec obs;
    const Node op = n.child("operator");
    op.allow_only({"kind", "keep", "factor"});
    const std::string kind = op.string("kind");
    if (kind == "identity") {
      obs.op.kind = OperatorKind::identity;
    } else if (kind == "mask") {
      obs.op.kind = OperatorKind::mask;
      const Eigen::VectorXd keep = op.vector("keep");
      for (Eigen::Index k = 0; k < keep.size(); ++k) {
        if (keep[k] != 0.0 && keep[k] != 1.0)
          throw ConfigError("observation.operator.keep[" + std::to_string(k) +
                            "]: expected 0 or 1");
        obs.op.keep.push_back(keep[k] == 1.0);
      }
    } else if (kind == "downsample") {
      obs.op.kind = OperatorKind::downsample;
      obs.op.factor = static_cast<int>(op.integer("factor"));
      if (obs.op.factor < 1)
        throw ConfigError("observation.operator.factor: must be >= 1");
    } else {
      throw ConfigError("observation.operator.kind: unknown operator '" + kind +
                        "' (identity, mask, downsample)");
    }
    obs.sigma_y = n.number("sigma_y", 1e-3);
    if (!(obs.sigma_y > 0.0))
      throw ConfigError("observation.sigma_y: must be positive");
    obs.y = config_detail::parse_source(n.child("y"), "generate");
    cfg.observation = std::move(obs);
  }

  if (root.has("ground_truth"))
    cfg.ground_truth =
        config_detail::parse_source(root.child("ground_truth"), "from_prior");

  if (root.has("flow")) {
    const Node n = root.child("flow");
    n.allow_only({"gamma", "lambda_hat", "N", "optimizer", "seed", "trace",
                  "shared_decode_noise", "threads"});
    FlowConfig &f = cfg.flow;
    f.gamma = n.number("gamma", f.gamma);
    f.lambda_hat = n.number("lambda_hat", f.lambda_hat);
    const auto N = n.integer("N", f.N);
    if (N < 1 || N > 100000000)
      throw ConfigError("flow.N: must be a positive integer");
    f.N = static_cast<int>(N);
    if (n.has("seed"))
      f.seed = n.seed("seed");
    f.trace = n.boolean("trace", f.trace);
    f.shared_decode_noise = n.boolean("shared_decode_noise", f.shared_decode_noise);
    const auto threads = n.integer("threads", f.threads);
    if (threads < 1 || threads > 4096)
      throw ConfigError("flow.threads: must be between 1 and 4096");
    f.threads = static_cast<int>(threads);
    if (n.has("optimizer")) {
      const Node o = n.child("optimizer");
      const std::string kind = o.string("kind");
      if (kind == "adam") {
        o.allow_only({"kind", "lr", "beta1", "beta2", "eps_hat"});
        AdamOptions a;
        a.lr = o.number("lr", a.lr);
        a.beta1 = o.number("beta1", a.beta1);
        a.beta2 = o.number("beta2", a.beta2);
        a.eps_hat = o.number("eps_hat", a.eps_hat);
        f.optimizer = a;
      } else if (kind == "euler") {
        o.allow_only({"kind", "step_size"});
        EulerOptions e;
        e.step_size = o.number("step_size", e.step_size);
        f.optimizer = e;
      } else {
        throw ConfigError("flow.optimizer.kind: unknown optimizer '" + kind +
                          "' (adam, euler)");
      }
    }
  }

  if (root.has("output")) {
    const Node n = root.child("output");
    n.allow_only({"directory", "metrics", "psnr_peak", "psnr_cap"});
    OutputSpec &o = cfg.output;
    if (n.has("directory"))
      o.directory = n.string("directory");
    if (n.has("metrics")) {
      const Json &m = j.at("output").at("metrics");
      if (!m.is_array())
        throw ConfigError("output.metrics: expected an array of names");
      o.metrics.clear();
      for (std::size_t k = 0; k < m.size(); ++k) {
        const std::string p = "output.metrics[" + std::to_string(k) + "]";
        if (!m[k].is_string())
          throw ConfigError(p + ": expected a string");
        const auto name = m[k].get<std::string>();
        if (name != "psnr" && name != "ensemble")
          throw ConfigError(p + ": unknown metric '" + name + "' (psnr, ensemble)");
        o.metrics.push_back(name);
      }
    }
    o.psnr_peak = n.number("psnr_peak", o.psnr_peak);
    o.psnr_cap = n.number("psnr_cap", o.psnr_cap);
    if (!(o.psnr_peak > 0.0))
      throw ConfigError("output.psnr_peak: must be positive");
  }
  return cfg;
}

inline Json to_json(const ExperimentConfig &cfg) {
  using config_detail::to_json;
  Json j;
  j["schedule"] = {{"T", cfg.schedule.T()},
                   {"beta_min", cfg.schedule.beta_min()},
                   {"beta_max", cfg.schedule.beta_max()},
                   {"c", cfg.flow.c}};

  if (cfg.prior.generate) {
    j["prior"] = {{"generate",
                   {{"seed", cfg.prior.generate->seed},
                    {"dim", cfg.prior.generate->dim},
                    {"components", cfg.prior.generate->components}}}};
  } else {
    Json comps = Json::array();
    for (const auto &c : cfg.prior.components)
      comps.push_back({{"weight", c.weight},
                       {"mean", to_json(c.mean)},
                       {"cov", to_json(c.cov)}});
    j["prior"] = {{"components", comps}};
  }

  Json ae;
  if (cfg.autoencoder.generate) {
    ae["generate"] = {{"seed", cfg.autoencoder.generate->seed},
                      {"pixel_dim", cfg.autoencoder.generate->pixel_dim}};
  } else {
    ae["W"] = to_json(cfg.autoencoder.W);
    ae["b"] = to_json(cfg.autoencoder.b);
  }
  ae["rho"] = cfg.autoencoder.rho;
  ae["exact_encoder"] = cfg.autoencoder.exact_encoder;
  j["autoencoder"] = ae;

  if (cfg.observation) {
    const auto &obs = *cfg.observation;
    Json op = {{"kind", to_string(obs.op.kind)}};
    if (obs.op.kind == OperatorKind::mask) {
      Json keep = Json::array();
      for (bool k : obs.op.keep)
        keep.push_back(k ? 1 : 0);
      op["keep"] = keep;
    } else if (obs.op.kind == OperatorKind::downsample) {
      op["factor"] = obs.op.factor;
    }
    j["observation"] = {{"operator", op},
                        {"sigma_y", obs.sigma_y},
                        {"y", config_detail::source_to_json(obs.y, "generate")}};
  }
  if (cfg.ground_truth)
    j["ground_truth"] = config_detail::source_to_json(*cfg.ground_truth, "from_prior");

  const FlowConfig &f = cfg.flow;
  Json opt;
  if (const auto *a = std::get_if<AdamOptions>(&f.optimizer))
    opt = {{"kind", "adam"},
           {"lr", a->lr},
           {"beta1", a->beta1},
           {"beta2", a->beta2},
           {"eps_hat", a->eps_hat}};
  else
    opt = {{"kind", "euler"},
           {"step_size", std::get<EulerOptions>(f.optimizer).step_size}};
  j["flow"] = {{"gamma", f.gamma},
               {"lambda_hat", f.lambda_hat},
               {"N", f.N},
               {"optimizer", opt},
               {"seed", f.seed},
               {"trace", f.trace},
               {"shared_decode_noise", f.shared_decode_noise},
               {"threads", f.threads}};
  j["output"] = {{"directory", cfg.output.directory},
                 {"metrics", cfg.output.metrics},
                 {"psnr_peak", cfg.output.psnr_peak},
                 {"psnr_cap", cfg.output.psnr_cap}};
  return j;
}

/// Parses JSON text; // and /* */ comments are allowed.
inline ExperimentConfig parse_config(const std::string &text,
                                     std::filesystem::path base_dir = {}) {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j, std::move(base_dir));
}

inline ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

inline std::string serialize(const ExperimentConfig &cfg) {
  return to_json(cfg).dump(2) + "\n";
}

/// Cross-field checks that need no file I/O and no random draws. Every
/// dimension mismatch names both fields involved.
inline void validate(const ExperimentConfig &cfg) {
  cfg.flow.validate();
  if (!cfg.prior.generate && cfg.prior.components.empty())
    throw ConfigError("prior.components: empty");
  const Eigen::Index dz = cfg.latent_dim();
  for (std::size_t k = 0; k < cfg.prior.components.size(); ++k) {
    const auto &c = cfg.prior.components[k];
    const std::string p = "prior.components[" + std::to_string(k) + "]";
    if (c.mean.size() != dz)
      throw ShapeError(p + ".mean has length " + std::to_string(c.mean.size()) +
                       " but prior.components[0].mean has length " +
                       std::to_string(dz));
    if (c.cov.rows() != dz || c.cov.cols() != dz)
      throw ShapeError(p + ".cov is " + std::to_string(c.cov.rows()) + "x" +
                       std::to_string(c.cov.cols()) + " but " + p +
                       ".mean has length " + std::to_string(dz));
  }

  const auto &ae = cfg.autoencoder;
  const Eigen::Index dx = cfg.pixel_dim();
  if (!ae.generate) {
    if (ae.W.cols() != dz)
      throw ShapeError("autoencoder.W has " + std::to_string(ae.W.cols()) +
                       " columns but the prior dimension (prior.components[0].mean) is " +
                       std::to_string(dz));
    if (ae.b.size() != dx)
      throw ShapeError("autoencoder.b has length " + std::to_string(ae.b.size()) +
                       " but autoencoder.W has " + std::to_string(dx) + " rows");
  } else if (dx < dz) {
    throw ShapeError("autoencoder.generate.pixel_dim " + std::to_string(dx) +
                     " is smaller than prior.generate.dim " + std::to_string(dz));
  }
  if (!(ae.rho > 0.0) || !std::isfinite(ae.rho))
    throw ConfigError("autoencoder.rho: must be positive");

  const std::string dx_field =
      ae.generate ? "autoencoder.generate.pixel_dim" : "autoencoder.W rows";
  if (cfg.observation) {
    const auto &obs = *cfg.observation;
    Eigen::Index out_dim = dx;
    if (obs.op.kind == OperatorKind::mask) {
      const auto n = static_cast<Eigen::Index>(obs.op.keep.size());
      if (n != dx)
        throw ShapeError("observation.operator.keep has length " +
                         std::to_string(n) + " but " + dx_field + " is " +
                         std::to_string(dx));
      out_dim = 0;
      for (bool k : obs.op.keep)
        out_dim += k ? 1 : 0;
      if (out_dim == 0)
        throw ConfigError("observation.operator.keep: no coordinate is kept");
    } else if (obs.op.kind == OperatorKind::downsample) {
      if (dx % obs.op.factor != 0)
        throw ShapeError("observation.operator.factor " +
                         std::to_string(obs.op.factor) + " does not divide " +
                         dx_field + " = " + std::to_string(dx));
      out_dim = dx / obs.op.factor;
    }
    if (obs.y.kind == VectorSource::Kind::values && obs.y.values.size() != out_dim)
      throw ShapeError("observation.y.values has length " +
                       std::to_string(obs.y.values.size()) +
                       " but observation.operator produces " +
                       std::to_string(out_dim) + " values");
    if (obs.y.kind == VectorSource::Kind::seeded && !cfg.ground_truth)
      throw ConfigError("observation.y.generate: requires a ground_truth block");
  }
  if (cfg.ground_truth && cfg.ground_truth->kind == VectorSource::Kind::values &&
      cfg.ground_truth->values.size() != dx)
    throw ShapeError("ground_truth.values has length " +
                     std::to_string(cfg.ground_truth->values.size()) + " but " +
                     dx_field + " is " + std::to_string(dx));
}

/// Everything a run needs, with all random and file-backed inputs resolved.
struct Experiment {
  Problem problem;
  FlowConfig flow;
  std::optional<Eigen::VectorXd> x_true;
};

inline Experiment materialize(const ExperimentConfig &cfg) {
  validate(cfg);
  auto resolve = [&](const std::string &file) {
    const std::filesystem::path p(file);
    return p.is_absolute() ? p : cfg.base_dir / p;
  };

  GaussianMixture prior;
  if (cfg.prior.generate) {
    Rng rng(cfg.prior.generate->seed);
    prior = generate::mixture(rng, cfg.prior.generate->dim,
                              cfg.prior.generate->components);
  } else {
    try {
      prior = GaussianMixture(cfg.prior.components);
    } catch (const std::exception &e) {
      throw ConfigError(std::string("prior.components: ") + e.what());
    }
  }

  Eigen::MatrixXd W = cfg.autoencoder.W;
  Eigen::VectorXd b = cfg.autoencoder.b;
  if (cfg.autoencoder.generate) {
    Rng rng(cfg.autoencoder.generate->seed);
    auto gen = generate::decoder(rng, prior.dim(), cfg.autoencoder.generate->pixel_dim);
    W = std::move(gen.W);
    b = std::move(gen.b);
  }
  const double rho = cfg.autoencoder.rho;
  LinearAutoencoder ae;
  try {
    // A mixture prior enters the exact encoder through its first two moments.
    ae = cfg.autoencoder.exact_encoder
             ? LinearAutoencoder::exact(W, b, rho, prior.mean(), prior.covariance())
             : LinearAutoencoder::pseudo_inverse(W, b, rho);
  } catch (const NumericError &e) {
    throw ConfigError(std::string("autoencoder: ") + e.what());
  }

  std::optional<Eigen::VectorXd> x_true;
  if (cfg.ground_truth) {
    const auto &gt = *cfg.ground_truth;
    switch (gt.kind) {
    case VectorSource::Kind::values:
      x_true = gt.values;
      break;
    case VectorSource::Kind::file:
      x_true = csv::read_vector(resolve(gt.file), "ground_truth.file");
      break;
    case VectorSource::Kind::seeded: {
      Rng rng(gt.seed);
      x_true = ae.decode_mean(prior.sample(1, rng).front());
      break;
    }
    }
    if (x_true->size() != ae.pixel_dim())
      throw ShapeError("ground_truth has length " + std::to_string(x_true->size()) +
                       " but autoencoder.W has " +
                       std::to_string(ae.pixel_dim()) + " rows");
  }

  std::optional<ObservationModel> observation;
  if (cfg.observation) {
    const auto &obs = *cfg.observation;
    ForwardOperator op = ForwardOperator::identity(ae.pixel_dim());
    if (obs.op.kind == OperatorKind::mask)
      op = ForwardOperator::mask(obs.op.keep);
    else if (obs.op.kind == OperatorKind::downsample)
      op = ForwardOperator::downsample(ae.pixel_dim(), obs.op.factor);
    switch (obs.y.kind) {
    case VectorSource::Kind::seeded: {
      Rng rng(obs.y.seed);
      observation = observe(op, *x_true, obs.sigma_y, rng);
      break;
    }
    case VectorSource::Kind::values:
      observation = ObservationModel(op, obs.y.values, obs.sigma_y);
      break;
    case VectorSource::Kind::file: {
      Eigen::VectorXd y = csv::read_vector(resolve(obs.y.file), "observation.y.file");
      if (y.size() != op.output_dim())
        throw ShapeError("observation.y.file has length " + std::to_string(y.size()) +
                         " but observation.operator produces " +
                         std::to_string(op.output_dim()) + " values");
      observation = ObservationModel(op, std::move(y), obs.sigma_y);
      break;
    }
    }
  }

  Experiment ex{Problem{cfg.schedule, std::move(prior), std::move(ae),
                        std::move(observation)},
                cfg.flow, std::move(x_true)};
  ex.problem.validate();
  return ex;
}

} // namespace dwgf
