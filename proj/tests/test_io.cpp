#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "model_fixtures.hpp"

using namespace vln;
using fixtures::tiny_cfg;
namespace fs = std::filesystem;

TEST_SUITE("io") {

TEST_CASE("config: unknown keys and sections are errors") {
  CHECK_THROWS_AS(Config::parse("[training]\nleerning_rate = 0.1\n"), VlnError);
  CHECK_THROWS_AS(Config::parse("[trainign]\nepochs = 3\n"), VlnError);
  CHECK_THROWS_AS(Config::parse("epochs = 3\n"), VlnError);  // key before any section
  CHECK_THROWS_AS(Config::parse("[model]\ndim = twelve\n"), VlnError);
}

TEST_CASE("config: round-trip through text preserves every field") {
  Config cfg = tiny_cfg();
  cfg.alg_variant = "action_priority";
  cfg.sweep_k = {5, 15, 25};
  cfg.lr_pretrain = 3.25e-4;
  const Config back = Config::parse(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.alg_variant == "action_priority");
  CHECK(back.sweep_k == std::vector<int>{5, 15, 25});
}

TEST_CASE("config: validation rejects inconsistent settings") {
  Config cfg = tiny_cfg();
  cfg.isr_heads = 3;  // dim 8 not divisible
  CHECK_THROWS_AS(cfg.validate(), VlnError);
  Config cfg2 = tiny_cfg();
  cfg2.alg_variant = "both";
  CHECK_THROWS_AS(cfg2.validate(), VlnError);
}

TEST_CASE("dataset round-trip: header, episodes and re-rendered observations") {
  const Config cfg = tiny_cfg();
  const sim::Dataset ds = sim::generate_dataset(cfg, 501, 3, 2);
  const auto path = fs::temp_directory_path() / "vln_ds.jsonl";
  sim::save_dataset(ds, path.string());
  const sim::Dataset back = sim::load_dataset(path.string());
  REQUIRE(back.episodes.size() == ds.episodes.size());
  CHECK(back.scene_seeds == ds.scene_seeds);
  CHECK(sim::sim_compatible(back.config, cfg));
  for (size_t i = 0; i < ds.episodes.size(); ++i) {
    const auto& a = ds.episodes[i];
    const auto& b = back.episodes[i];
    CHECK(a.instruction.tokens == b.instruction.tokens);
    CHECK(a.instruction.tags == b.instruction.tags);
    CHECK(a.shortest_length == b.shortest_length);
    REQUIRE(a.steps.size() == b.steps.size());
    for (size_t t = 0; t < a.steps.size(); ++t) {
      CHECK(a.steps[t].pose == b.steps[t].pose);
      CHECK(a.steps[t].expert_action == b.steps[t].expert_action);
    }
  }
  // observations re-render identically from the persisted record
  const auto ep_a = sim::prepare_episode(ds.episodes[0], cfg);
  const auto ep_b = sim::prepare_episode(back.episodes[0], cfg);
  CHECK(ep_a.pano_embed == ep_b.pano_embed);
  CHECK(ep_a.ego_maps[0] == ep_b.ego_maps[0]);
  CHECK(ep_a.d_t == ep_b.d_t);
}

TEST_CASE("dataset: format-version mismatch refuses to load") {
  const auto path = fs::temp_directory_path() / "vln_bad_ds.jsonl";
  {
    std::ofstream f(path);
    f << R"({"format_version":99,"kind":"vln-episodes","config":"","scene_seeds":[]})"
      << "\n";
  }
  CHECK_THROWS_WITH_AS(sim::load_dataset(path.string()),
                       doctest::Contains("format-version"), VlnError);
}

TEST_CASE("checkpoint round-trip preserves weights and config") {
  Config cfg = tiny_cfg();
  cfg.alg_variant = "action_priority";
  nn::Agent agent(cfg, 77);
  const auto path = fs::temp_directory_path() / "vln_ckpt.bin";
  agent.save_checkpoint(path.string());
  const nn::Agent back = nn::Agent::load_checkpoint(path.string());
  CHECK(back.params().weights_hash() == agent.params().weights_hash());
  CHECK(back.config().alg_variant == "action_priority");
  CHECK(back.config().hash() == cfg.hash());
}

TEST_CASE("checkpoint: corrupted magic is rejected") {
  const auto path = fs::temp_directory_path() / "vln_bad_ckpt.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT garbage";
  }
  CHECK_THROWS_AS(nn::Agent::load_checkpoint(path.string()), VlnError);
}

TEST_CASE("pretraining refuses a dataset with mismatched generator settings") {
  const Config data_cfg = tiny_cfg();
  const sim::Dataset ds = sim::generate_dataset(data_cfg, 502, 1, 1);
  Config other = data_cfg;
  other.categories = 4;  // different simulator vocabulary
  CHECK_FALSE(sim::sim_compatible(ds.config, other));
}

}  // TEST_SUITE
