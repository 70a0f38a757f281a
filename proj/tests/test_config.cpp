#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dwgf/config.hpp"

using namespace dwgf;

namespace {

const char *kMinimal = R"({
  "prior": { "components": [ { "weight": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]] } ] },
  "autoencoder": { "W": [[1, 0], [0, 1], [1, 1]], "b": [0, 0, 0.5] }
})";

std::filesystem::path configs_dir() { return DWGF_SOURCE_DIR "/configs"; }

std::string field_error(const std::string &text) {
  try {
    validate(parse_config(text));
  } catch (const std::exception &e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST(Config, DefaultsMatchReferenceValues) {
  const auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.schedule, Schedule(999, 0.1, 20.0));
  EXPECT_EQ(cfg.flow.c, 0.5);
  EXPECT_EQ(cfg.flow.gamma, 0.15);
  EXPECT_EQ(cfg.flow.lambda_hat, 0.1);
  EXPECT_EQ(cfg.flow.N, 4);
  EXPECT_EQ(std::get<AdamOptions>(cfg.flow.optimizer), AdamOptions{});
  EXPECT_EQ(std::get<AdamOptions>(cfg.flow.optimizer).lr, 1.0);
  EXPECT_EQ(cfg.autoencoder.rho, 1e-3);
  EXPECT_TRUE(cfg.autoencoder.exact_encoder);
  EXPECT_FALSE(cfg.observation);
  EXPECT_EQ(cfg.latent_dim(), 2);
  EXPECT_EQ(cfg.pixel_dim(), 3);
}

TEST(Config, ShippedConfigsRoundTrip) {
  for (const char *name : {"default.jsonc", "identity.jsonc", "inpainting.jsonc"}) {
    const auto cfg = load_config(configs_dir() / name);
    validate(cfg);
    const auto again = parse_config(serialize(cfg));
    EXPECT_EQ(cfg, again) << name;
    EXPECT_EQ(serialize(cfg), serialize(again)) << name;
  }
}

TEST(Config, RoundTripPreservesEveryVariant) {
  auto cfg = parse_config(kMinimal);
  cfg.flow.optimizer = EulerOptions{0.0123456789012345678};
  cfg.flow.gamma = 0.1 + 0.2;
  cfg.flow.seed = 18446744073709551615ull;
  cfg.flow.trace = true;
  cfg.flow.threads = 3;
  cfg.observation = ObservationSpec{{OperatorKind::downsample, {}, 3}, 0.25,
                                    {VectorSource::Kind::file, {}, "y.csv", 0}};
  cfg.ground_truth = VectorSource{VectorSource::Kind::seeded, {}, "", 42};
  cfg.output.metrics = {"ensemble"};
  const auto again = parse_config(serialize(cfg));
  EXPECT_EQ(cfg, again);

  cfg.prior = PriorSpec{{}, PriorGenerate{5, 2, 3}};
  cfg.autoencoder = AutoencoderSpec{{}, {}, DecoderGenerate{6, 9}, 0.01, false};
  cfg.observation->op = {OperatorKind::mask, {true, false, true}, 1};
  cfg.observation->y = {VectorSource::Kind::values, Eigen::Vector2d(1.0 / 3.0, -2.5), "", 0};
  EXPECT_EQ(cfg, parse_config(serialize(cfg)));
}

TEST(Config, CommentsAreAccepted) {
  const std::string text = std::string("// leading\n/* block */") + kMinimal;
  EXPECT_NO_THROW(parse_config(text));
}

TEST(Config, FieldPathDiagnostics) {
  EXPECT_THROW(parse_config("{ not json"), ConfigError);
  EXPECT_NE(field_error(R"({"prior": {"components": []}, "autoencoder": {}})")
                .find("prior.components"),
            std::string::npos);
  const std::string base = R"("prior": { "components": [ { "weight": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]] } ] },
  "autoencoder": { "W": [[1, 0], [0, 1], [1, 1]], "b": [0, 0, 0.5] })";
  auto with = [&](const std::string &extra) { return "{" + base + "," + extra + "}"; };

  EXPECT_NE(field_error(with(R"("flow": {"gamma": "big"})")).find("flow.gamma"),
            std::string::npos);
  EXPECT_NE(field_error(with(R"("flow": {"gama": 1})")).find("flow.gama: unknown field"),
            std::string::npos);
  EXPECT_NE(field_error(with(R"("flow": {"N": 0})")).find("flow.N"), std::string::npos);
  EXPECT_NE(field_error(with(R"("schedule": {"c": 1.5})")).find("c"), std::string::npos);
  EXPECT_NE(field_error(with(R"("flow": {"optimizer": {"kind": "sgd"}})"))
                .find("flow.optimizer.kind"),
            std::string::npos);
  EXPECT_NE(field_error(with(R"("observation": {"operator": {"kind": "identity"},
             "sigma_y": 0, "y": {"values": [1, 2, 3]}})"))
                .find("observation.sigma_y"),
            std::string::npos);
  EXPECT_NE(field_error(with(R"("observation": {"operator": {"kind": "identity"},
             "y": {"generate": {"seed": 1}}})"))
                .find("ground_truth"),
            std::string::npos);
  EXPECT_NE(field_error(with(R"("observation": {"operator": {"kind": "identity"},
             "y": {"values": [1], "file": "y.csv"}})"))
                .find("observation.y"),
            std::string::npos);
}

TEST(Config, DimensionMismatchNamesBothFields) {
  const std::string bad_mask = R"({
    "prior": { "components": [ { "weight": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]] } ] },
    "autoencoder": { "W": [[1, 0], [0, 1], [1, 1]], "b": [0, 0, 0.5] },
    "observation": { "operator": { "kind": "mask", "keep": [1, 0, 1, 1] },
                     "y": { "values": [1, 2, 3] } } })";
  const auto msg = field_error(bad_mask);
  EXPECT_NE(msg.find("observation.operator.keep"), std::string::npos) << msg;
  EXPECT_NE(msg.find("autoencoder.W"), std::string::npos) << msg;
  EXPECT_THROW(validate(parse_config(bad_mask)), ShapeError);

  const std::string bad_W = R"({
    "prior": { "components": [ { "weight": 1, "mean": [0, 0, 0], "cov": [[1, 0, 0], [0, 1, 0], [0, 0, 1]] } ] },
    "autoencoder": { "W": [[1, 0], [0, 1], [1, 1]], "b": [0, 0, 0.5] } })";
  const auto msg2 = field_error(bad_W);
  EXPECT_NE(msg2.find("autoencoder.W"), std::string::npos) << msg2;
  EXPECT_NE(msg2.find("prior"), std::string::npos) << msg2;

  const std::string bad_factor = R"({
    "prior": { "components": [ { "weight": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]] } ] },
    "autoencoder": { "W": [[1, 0], [0, 1], [1, 1]], "b": [0, 0, 0.5] },
    "observation": { "operator": { "kind": "downsample", "factor": 2 },
                     "y": { "values": [1] } } })";
  const auto msg3 = field_error(bad_factor);
  EXPECT_NE(msg3.find("observation.operator.factor"), std::string::npos) << msg3;
  EXPECT_NE(msg3.find("autoencoder.W"), std::string::npos) << msg3;
}

TEST(Config, MaterializeResolvesSeededInputs) {
  const auto cfg = load_config(configs_dir() / "inpainting.jsonc");
  const auto a = materialize(cfg);
  const auto b = materialize(cfg);
  ASSERT_TRUE(a.x_true && a.problem.observation);
  EXPECT_EQ(*a.x_true, *b.x_true);
  EXPECT_EQ(a.problem.observation->y(), b.problem.observation->y());
  EXPECT_EQ(a.problem.observation->y().size(), 16);
  // y differs from A x_true only by the simulated noise.
  const Eigen::VectorXd r =
      a.problem.observation->y() - a.problem.observation->op().apply(*a.x_true);
  EXPECT_GT(r.norm(), 0.0);
  EXPECT_LT(r.cwiseAbs().maxCoeff(), 6e-3);
}

TEST(Config, FileSourcesResolveAgainstConfigDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "dwgf_config_files";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "y.csv") << "y\n0.25\n-1.5\n";
    std::ofstream(dir / "x.csv") << "0.5,1,2\n";
    std::ofstream(dir / "c.jsonc") << R"({
      "prior": { "components": [ { "weight": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]] } ] },
      "autoencoder": { "W": [[1, 0], [0, 1], [1, 1]], "b": [0, 0, 0.5] },
      "observation": { "operator": { "kind": "mask", "keep": [1, 0, 1] },
                       "y": { "file": "y.csv" } },
      "ground_truth": { "file": "x.csv" } })";
  }
  const auto ex = materialize(load_config(dir / "c.jsonc"));
  EXPECT_EQ(ex.problem.observation->y(), Eigen::Vector2d(0.25, -1.5));
  EXPECT_EQ(*ex.x_true, Eigen::Vector3d(0.5, 1, 2));

  std::ofstream(dir / "y.csv") << "y\n0.25\n";
  EXPECT_THROW(materialize(load_config(dir / "c.jsonc")), ShapeError);
  std::filesystem::remove(dir / "y.csv");
  EXPECT_THROW(materialize(load_config(dir / "c.jsonc")), ConfigError);
}

TEST(Config, GeneratedProblemHasDeclaredShape) {
  const auto ex = materialize(load_config(configs_dir() / "default.jsonc"));
  EXPECT_EQ(ex.problem.prior.dim(), 2);
  EXPECT_EQ(ex.problem.prior.size(), 2u);
  EXPECT_EQ(ex.problem.ae.pixel_dim(), 8);
  EXPECT_EQ(ex.problem.observation->y().size(), 4);
}
