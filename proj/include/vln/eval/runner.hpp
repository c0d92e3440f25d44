#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vln/eval/metrics.hpp"
#include "vln/train/trainer.hpp"

namespace vln::eval {

// Run-directory layout: config.snapshot, manifest.json, checkpoints/,
// traces/ (line-delimited records), results/ (CSV), plots/.
struct RunDir {
  std::string root;
  static RunDir create(const std::string& root);
  std::string checkpoints() const { return root + "/checkpoints"; }
  std::string traces() const { return root + "/traces"; }
  std::string results() const { return root + "/results"; }
  std::string plots() const { return root + "/plots"; }
};

void write_manifest(const RunDir& dir, const Config& cfg, const std::string& command,
                    const std::vector<uint64_t>& train_scene_seeds,
                    const std::vector<uint64_t>& eval_scene_seeds);

struct EvalOptions {
  bool sample = false;       // greedy argmax unless sampling is requested
  uint64_t sample_seed = 0;
  int dump_weight_episodes = 0;
  std::string dump_dir;      // where weights_ep<i>.csv go
};

struct EvalOutput {
  MetricsSummary summary;
  std::vector<EpisodeResult> episodes;
};

// Greedy rollouts over every episode of a validation set. Refuses datasets
// whose scenes overlap the training seeds (val-unseen contract).
EvalOutput evaluate(const nn::Agent& agent, const sim::Dataset& val,
                    const std::vector<uint64_t>& train_scene_seeds,
                    const EvalOptions& opts = {});

// Spearman correlation between predicted and true progress along expert
// trajectories (teacher forced).
real progress_spearman(const nn::Agent& agent,
                       const std::vector<sim::PreparedEpisode>& episodes);

std::vector<sim::PreparedEpisode> prepare_all(const sim::Dataset& ds, const Config& cfg);

// Trains a fresh agent on prepared episodes with the given switches/seed.
nn::Agent train_agent(const Config& cfg,
                      const std::vector<sim::PreparedEpisode>& train_eps,
                      std::vector<train::EpochRecord>* trace = nullptr,
                      const train::Trainer::EpochCallback& on_epoch = nullptr);

// Table-3 style switch rows; includes the PA+SA-without-Pro constraint row.
struct AblationRow {
  std::string name;
  bool map, con, kl, pro, pa, sa;
};
std::vector<AblationRow> table3_rows();
std::optional<AblationRow> find_row(const std::string& name);
Config apply_row(const Config& cfg, const AblationRow& row);

struct AblationCell {
  std::string row;
  uint64_t seed = 0;
  MetricsSummary val;
};

// Trains and evaluates each (row, seed) cell under identical data and seeds.
// Existing checkpoints under dir.checkpoints() are reused, which makes
// interrupted matrices resumable. Emits results/ablation.csv.
std::vector<AblationCell> run_ablation(const Config& cfg, const RunDir& dir,
                                       const sim::Dataset& train,
                                       const sim::Dataset& val,
                                       const std::vector<std::string>& row_names);

// Hyperparameter sweeps (Fig. 7 analogue): one run per value, single seed.
// `param` is "k" (imagination horizon) or "grid" (h = w).
std::vector<AblationCell> run_sweep(const Config& cfg, const RunDir& dir,
                                    const sim::Dataset& train, const sim::Dataset& val,
                                    const std::string& param,
                                    const std::vector<int>& values);

void write_ablation_csv(const std::string& path, const std::vector<AblationCell>& cells);
void write_eval_csv(const std::string& path, const std::vector<EpisodeResult>& eps);
void write_trace_jsonl(const std::string& path,
                       const std::vector<train::EpochRecord>& records);
std::vector<train::EpochRecord> read_trace_jsonl(const std::string& path);

}  // namespace vln::eval
