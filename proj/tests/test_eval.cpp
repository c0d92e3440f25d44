#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "model_fixtures.hpp"
#include "vln/eval/report.hpp"
#include "vln/eval/runner.hpp"

using namespace vln;
using namespace vln::eval;
using fixtures::tiny_cfg;

TEST_SUITE("evalcli") {

TEST_CASE("metric oracles on hand-built fixtures") {
  EpisodeResult shortest;  // success along the exact shortest path
  shortest.success = shortest.oracle_success = true;
  shortest.path_length = 2.0;
  shortest.shortest_length = 2.0;
  shortest.final_distance = 0.3;

  EpisodeResult doubled;  // success with twice the shortest length
  doubled.success = doubled.oracle_success = true;
  doubled.path_length = 4.0;
  doubled.shortest_length = 2.0;
  doubled.final_distance = 0.5;
  CHECK(doubled.spl() == doctest::Approx(0.5));  // SPL = l*/max(l*,l) = 1/2

  EpisodeResult oracle_only;  // passed nearby mid-episode, stopped far away
  oracle_only.success = false;
  oracle_only.oracle_success = true;
  oracle_only.path_length = 5.0;
  oracle_only.shortest_length = 2.0;
  oracle_only.final_distance = 3.0;

  const MetricsSummary s = summarize({shortest, doubled, oracle_only});
  CHECK(s.sr == doctest::Approx(100.0 * 2.0 / 3.0));
  CHECK(s.osr == doctest::Approx(100.0));
  CHECK(s.spl == doctest::Approx(100.0 * (1.0 + 0.5 + 0.0) / 3.0));
  CHECK(s.dts == doctest::Approx((0.3 + 0.5 + 3.0) / 3.0));
  CHECK(s.spl <= s.sr);
  CHECK(s.osr >= s.sr);
}

TEST_CASE("summary invariants hold on random result sets") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EpisodeResult> results;
    const int n = 1 + rng.uniform_int(20);
    for (int i = 0; i < n; ++i) {
      EpisodeResult r;
      r.oracle_success = rng.uniform() < 0.6;
      r.success = r.oracle_success && rng.uniform() < 0.7;
      r.shortest_length = rng.uniform(0.5, 8.0);
      r.path_length = r.shortest_length * rng.uniform(0.9, 3.0);
      r.final_distance = r.success ? rng.uniform(0.0, 0.75) : rng.uniform(0.0, 9.0);
      results.push_back(r);
    }
    const MetricsSummary s = summarize(results);
    CHECK(s.spl <= s.sr + 1e-9);
    CHECK(s.osr >= s.sr - 1e-9);
  }
}

TEST_CASE("spearman: monotone 1, reversed -1, ties handled") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 1, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0));
}

TEST_CASE("evaluate: refuses overlapping training scenes and foreign configs") {
  const Config cfg = tiny_cfg();
  const sim::Dataset val = sim::generate_dataset(cfg, 900, 2, 1);
  nn::Agent agent(cfg, 42);
  // overlap: training saw one of the validation scenes
  CHECK_THROWS_AS(evaluate(agent, val, {val.scene_seeds[0]}), VlnError);
  // mismatched simulator settings
  sim::Dataset bad = val;
  bad.config.categories = 3;
  CHECK_THROWS_AS(evaluate(agent, bad, {}), VlnError);
}

TEST_CASE("evaluate: runs rollouts, respects the step budget, side-effect-free") {
  Config cfg = tiny_cfg();
  cfg.max_steps = 20;
  const sim::Dataset val = sim::generate_dataset(cfg, 901, 3, 1);
  nn::Agent agent(cfg, 43);
  const uint64_t before = agent.params().weights_hash();
  const EvalOutput out = evaluate(agent, val, {});
  CHECK(agent.params().weights_hash() == before);  // checkpoint untouched
  REQUIRE(out.episodes.size() == 3);
  for (const auto& r : out.episodes) {
    CHECK(r.steps <= cfg.max_steps);
    CHECK(r.path_length >= 0.0);
    CHECK(r.shortest_length > 0.0);
  }
  // greedy rollouts are deterministic
  const EvalOutput again = evaluate(agent, val, {});
  for (size_t i = 0; i < out.episodes.size(); ++i) {
    CHECK(out.episodes[i].steps == again.episodes[i].steps);
    CHECK(out.episodes[i].final_distance == again.episodes[i].final_distance);
  }
}

TEST_CASE("progress correlation runs on expert trajectories") {
  const Config cfg = tiny_cfg();
  const auto eps = fixtures::tiny_episodes(cfg, 902, 2);
  nn::Agent agent(cfg, 44);
  const real rho = progress_spearman(agent, eps);
  CHECK(rho >= -1.0);
  CHECK(rho <= 1.0);
}

TEST_CASE("run directory: weights dump shape and report generation") {
  namespace fs = std::filesystem;
  Config cfg = tiny_cfg();
  cfg.max_steps = 10;
  const auto root = fs::temp_directory_path() / "vln_eval_run";
  fs::remove_all(root);
  const RunDir dir = RunDir::create(root.string());

  const sim::Dataset val = sim::generate_dataset(cfg, 903, 2, 1);
  nn::Agent agent(cfg, 45);
  EvalOptions opts;
  opts.dump_weight_episodes = 1;
  opts.dump_dir = dir.results();
  const EvalOutput out = evaluate(agent, val, {}, opts);
  write_eval_csv(dir.results() + "/eval.csv", out.episodes);

  // weight CSV: rows = timesteps, columns = token positions
  std::ifstream wf(dir.results() + "/weights_ep0.csv");
  REQUIRE(wf.good());
  std::string header;
  std::getline(wf, header);
  const int expected_cols = val.episodes[0].instruction.length();
  CHECK(std::count(header.begin(), header.end(), ',') == expected_cols);
  int data_rows = 0;
  std::string line;
  while (std::getline(wf, line))
    if (!line.empty()) ++data_rows;
  CHECK(data_rows == out.episodes[0].steps);

  // a trace so the report has loss curves too
  std::vector<train::EpochRecord> recs(2);
  recs[0].epoch = 0;
  recs[1].epoch = 1;
  recs[1].losses.total = 1.5;
  write_trace_jsonl(dir.traces() + "/pretrain.jsonl", recs);

  write_report(root.string());
  CHECK(fs::exists(root / "report.txt"));
  CHECK(fs::exists(root / "plots" / "weights_ep0.svg"));
  CHECK(fs::exists(root / "plots" / "loss_pretrain.svg"));
}

TEST_CASE("report on an empty run directory lists the missing artifacts") {
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "vln_empty_run";
  fs::remove_all(root);
  RunDir::create(root.string());
  try {
    write_report(root.string());
    FAIL("expected an error");
  } catch (const VlnError& e) {
    const std::string what = e.what();
    CHECK(what.find("traces") != std::string::npos);
    CHECK(what.find("results") != std::string::npos);
  }
}

TEST_CASE("sweep harness emits csv rows for every value") {
  namespace fs = std::filesystem;
  Config cfg = tiny_cfg();
  cfg.epochs = 1;
  cfg.num_seeds = 1;
  cfg.max_steps = 8;
  const auto root = fs::temp_directory_path() / "vln_sweep_run";
  fs::remove_all(root);
  const RunDir dir = RunDir::create(root.string());
  const sim::Dataset train_ds = sim::generate_dataset(cfg, 904, 2, 1);
  const sim::Dataset val_ds = sim::generate_dataset(cfg, 905, 2, 1);
  const auto cells = run_sweep(cfg, dir, train_ds, val_ds, "k", {5, 10});
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].row == "sweep_k5");
  CHECK(cells[1].row == "sweep_k10");
  CHECK(fs::exists(root / "results" / "sweep_k.csv"));
}

}  // TEST_SUITE
