#include <gtest/gtest.h>

#include "gdcn/config.hpp"
#include "gdcn/errors.hpp"

using namespace gdcn;
using nlohmann::json;

namespace {

std::string error_key(const json& j) {
  try {
    (void)parse_model_config(j);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

}  // namespace

TEST(ModelConfig, EmptyObjectGivesDefaults) {
  const ModelConfig c = parse_model_config(json::object());
  EXPECT_EQ(c.sgdf.total_steps, 1000u);
  EXPECT_EQ(c.sgdf.grid_points, 5u);
  EXPECT_EQ(c.sgdf.chains, 4u);
  EXPECT_EQ(c.sgdf.mode, SamplerMode::ddim_x0);
  EXPECT_EQ(c.sgdf.hidden, (std::vector<std::size_t>{256, 256}));
  EXPECT_EQ(c.ae.hidden, (std::vector<std::size_t>{500, 500}));
  EXPECT_EQ(c.ae.latent_dim, 64u);
  EXPECT_EQ(c.cl.temperature, 0.5);
  EXPECT_EQ(c.cl.h_dim, 128u);
  EXPECT_EQ(c.train.pretrain_epochs, 200u);
  EXPECT_EQ(c.train.finetune_epochs, 100u);
  EXPECT_EQ(c.train.batch_size, 128u);
  EXPECT_EQ(c.train.learning_rate, 3e-4);
  EXPECT_EQ(c.train.beta1, 0.9);
  EXPECT_EQ(c.train.beta2, 0.999);
  EXPECT_EQ(c.ablation, Ablation::none);
  EXPECT_EQ(c.eval.representation, Representation::fused);
}

TEST(ModelConfig, DottedAndNestedKeysAgree) {
  const ModelConfig a = parse_model_config(json::parse(R"({"sgdf.K": 9, "train": {"batch_size": 32}})"));
  const ModelConfig b = parse_model_config(json::parse(R"({"sgdf": {"K": 9}, "train.batch_size": 32})"));
  EXPECT_EQ(a.sgdf.grid_points, 9u);
  EXPECT_EQ(b.sgdf.grid_points, 9u);
  EXPECT_EQ(a.train.batch_size, 32u);
  EXPECT_EQ(b.train.batch_size, 32u);
}

TEST(ModelConfig, SamplerSeedDefaultsToTopLevelSeed) {
  EXPECT_EQ(parse_model_config(json::parse(R"({"seed": 17})")).sgdf.seed, 17u);
  EXPECT_EQ(parse_model_config(json::parse(R"({"seed": 17, "sgdf.seed": 3})")).sgdf.seed, 3u);
}

TEST(ModelConfig, ParsesEnumsAndAblations) {
  const ModelConfig c = parse_model_config(
      json::parse(R"({"ablation": "no-sgdf", "sgdf.mode": "literal-clamped", "eval.representation": "projected"})"));
  EXPECT_EQ(c.ablation, Ablation::no_sgdf);
  EXPECT_EQ(c.sgdf.mode, SamplerMode::literal_clamped);
  EXPECT_EQ(c.eval.representation, Representation::projected);
  EXPECT_EQ(parse_model_config(json::parse(R"({"ablation": "no-cl"})")).ablation, Ablation::no_cl);
}

TEST(ModelConfig, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(error_key(json::parse(R"({"sgdf.K": 1})")), "sgdf.K");
  EXPECT_EQ(error_key(json::parse(R"({"sgdf.K": 11, "sgdf.T": 10})")), "sgdf.K");
  EXPECT_EQ(error_key(json::parse(R"({"sgdf.B": 0})")), "sgdf.B");
  EXPECT_EQ(error_key(json::parse(R"({"train.batch_size": 1})")), "train.batch_size");
  EXPECT_EQ(error_key(json::parse(R"({"train.learning_rate": 0})")), "train.learning_rate");
  EXPECT_EQ(error_key(json::parse(R"({"train.beta1": 1.0})")), "train.beta1");
  EXPECT_EQ(error_key(json::parse(R"({"cl.temperature": -1})")), "cl.temperature");
  EXPECT_EQ(error_key(json::parse(R"({"cl.similarity_detached": false})")), "cl.similarity_detached");
  EXPECT_EQ(error_key(json::parse(R"({"sgdf.mode": "ddpm"})")), "sgdf.mode");
  EXPECT_EQ(error_key(json::parse(R"({"ablation": "none-at-all"})")), "ablation");
  EXPECT_EQ(error_key(json::parse(R"({"sgdf.Q": 3})")), "sgdf.Q");
  EXPECT_EQ(error_key(json::parse(R"({"bogus": 3})")), "bogus");
  EXPECT_EQ(error_key(json::parse(R"({"train.pretrain_epochs": -1})")), "train.pretrain_epochs");
  EXPECT_EQ(error_key(json::parse(R"({"train.pretrain_epochs": "ten"})")), "train.pretrain_epochs");
  EXPECT_EQ(error_key(json::parse(R"({"ae.hidden": [500, 0]})")), "ae.hidden");
  EXPECT_EQ(error_key(json::parse(R"({"sgdf": 3})")), "sgdf");
  EXPECT_EQ(error_key(json::parse("[1, 2]")), "<root>");
}

TEST(ModelConfig, ConflictingDefinitionsAreRejected) {
  EXPECT_THROW((void)unflatten(json::parse(R"({"sgdf": 4, "sgdf.K": 5})")), ConfigError);
  EXPECT_EQ(unflatten(json::parse(R"({"a.b": 1, "a": {"c": 2}})")), json::parse(R"({"a": {"b": 1, "c": 2}})"));
}

TEST(ModelConfig, JsonRoundTrip) {
  const ModelConfig c = parse_model_config(json::parse(
      R"({"seed": 5, "sgdf": {"K": 7, "B": 2, "seed": 99, "mode": "literal-clamped"}, "cl.temperature": 0.25,
          "ae.hidden": [32], "train.log_acc_every": 0, "ablation": "no-cl"})"));
  const nlohmann::ordered_json j = model_config_to_json(c);
  const ModelConfig back = parse_model_config(json::parse(j.dump()));
  EXPECT_EQ(model_config_to_json(back).dump(), j.dump());
  EXPECT_EQ(back.sgdf.seed, 99u);
  EXPECT_EQ(back.ae.hidden, (std::vector<std::size_t>{32}));
  EXPECT_EQ(back.ablation, Ablation::no_cl);
}
