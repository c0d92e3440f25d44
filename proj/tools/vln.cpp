// Command-line front end: gen-data, pretrain, finetune, eval, ablate, report.
// Every subcommand takes --config <file> and --seed; outputs land in a run
// directory with a manifest.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "vln/eval/report.hpp"
#include "vln/eval/runner.hpp"

namespace fs = std::filesystem;
using namespace vln;

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string run_dir = "runs/run";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file");
  cmd->add_option("--seed", args.seed, "base seed (overrides the config)")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--run-dir", args.run_dir, "output run directory");
}

Config load_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config() : Config::load(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

void print_summary(const char* tag, const eval::MetricsSummary& s) {
  std::printf("%s: SR %.1f%%  OSR %.1f%%  SPL %.1f%%  DTS %.2fm  (%d episodes)\n", tag,
              s.sr, s.osr, s.spl, s.dts, s.episodes);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instruction-following gridworld agent with neural-grid scene memory"};
  app.require_subcommand(1);

  CommonArgs args;

  // --- gen-data -------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate train/val episode datasets");
  add_common(gen, args);
  int gen_train_scenes = -1, gen_val_scenes = -1;
  gen->add_option("--train-scenes", gen_train_scenes, "override training scene count");
  gen->add_option("--val-scenes", gen_val_scenes, "override validation scene count");
  gen->callback([&]() {
    Config cfg = load_config(args);
    if (gen_train_scenes > 0) cfg.train_scenes = gen_train_scenes;
    if (gen_val_scenes > 0) cfg.val_scenes = gen_val_scenes;
    eval::RunDir dir = eval::RunDir::create(args.run_dir);
    std::printf("generating %d train scenes x %d episodes...\n", cfg.train_scenes,
                cfg.episodes_per_scene);
    sim::Dataset train =
        sim::generate_dataset(cfg, cfg.seed, cfg.train_scenes, cfg.episodes_per_scene);
    sim::save_dataset(train, args.run_dir + "/train.jsonl");
    std::printf("generating %d val scenes...\n", cfg.val_scenes);
    sim::Dataset val = sim::generate_dataset(cfg, hash_mix(cfg.seed, 0x7A1u),
                                             cfg.val_scenes, 1);
    sim::save_dataset(val, args.run_dir + "/val.jsonl");
    cfg.save(args.run_dir + "/scenes.cfg");  // pins the generator settings
    lang::Vocabulary::builtin().save(args.run_dir + "/vocab.txt",
                                     args.run_dir + "/lexicon.txt");
    eval::write_manifest(dir, cfg, "gen-data", train.scene_seeds, val.scene_seeds);
    std::printf("wrote %zu train / %zu val episodes under %s\n", train.episodes.size(),
                val.episodes.size(), args.run_dir.c_str());
  });

  // --- pretrain ---------------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "behavior-cloning pre-training");
  add_common(pre, args);
  std::string pre_data;
  pre->add_option("--data", pre_data, "training dataset (jsonl)")->required();
  pre->callback([&]() {
    Config cfg = load_config(args);
    eval::RunDir dir = eval::RunDir::create(args.run_dir);
    sim::Dataset train = sim::load_dataset(pre_data);
    if (!sim::sim_compatible(train.config, cfg))
      throw VlnError("pretrain: dataset generator settings disagree with the config");
    std::printf("preparing %zu episodes...\n", train.episodes.size());
    const auto eps = eval::prepare_all(train, cfg);
    std::vector<train::EpochRecord> trace;
    nn::Agent agent = eval::train_agent(cfg, eps, &trace, [](const train::EpochRecord& r) {
      std::printf("epoch %3d stage %d  L_total %.4f  L_Action %.4f\n", r.epoch, r.stage,
                  r.losses.total, r.losses.action);
      std::fflush(stdout);
    });
    agent.save_checkpoint(dir.checkpoints() + "/pretrain.ckpt");
    eval::write_trace_jsonl(dir.traces() + "/pretrain.jsonl", trace);
    eval::write_manifest(dir, cfg, "pretrain", train.scene_seeds, {});
    std::printf("checkpoint: %s\n", (dir.checkpoints() + "/pretrain.ckpt").c_str());
  });

  // --- finetune ---------------------------------------------------------------
  auto* fin = app.add_subcommand("finetune", "DAgger fine-tuning from a checkpoint");
  add_common(fin, args);
  std::string fin_data, fin_ckpt;
  fin->add_option("--data", fin_data, "training dataset (jsonl)")->required();
  fin->add_option("--checkpoint", fin_ckpt, "pretrained checkpoint")->required();
  fin->callback([&]() {
    Config cfg = load_config(args);
    eval::RunDir dir = eval::RunDir::create(args.run_dir);
    sim::Dataset train_ds = sim::load_dataset(fin_data);
    if (!sim::sim_compatible(train_ds.config, cfg))
      throw VlnError("finetune: dataset generator settings disagree with the config");
    nn::Agent agent = nn::Agent::load_checkpoint(fin_ckpt);
    const auto eps = eval::prepare_all(train_ds, cfg);
    train::Trainer trainer(agent, cfg);
    std::ofstream trace(dir.traces() + "/finetune.jsonl");
    trainer.dagger(eps, [&](const train::DaggerRecord& r) {
      std::printf("round %d  mean CE %.4f  aggregated %d\n", r.round, r.mean_ce,
                  r.aggregated_episodes);
      trace << "{\"round\":" << r.round << ",\"mean_ce\":" << r.mean_ce
            << ",\"aggregated\":" << r.aggregated_episodes << "}\n";
      agent.save_checkpoint(dir.checkpoints() + "/finetune_round" +
                            std::to_string(r.round) + ".ckpt");
    });
    agent.save_checkpoint(dir.checkpoints() + "/finetune.ckpt");
    eval::write_manifest(dir, cfg, "finetune", train_ds.scene_seeds, {});
  });

  // --- eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a validation set");
  add_common(ev, args);
  std::string ev_data, ev_ckpt, ev_train_data;
  ev->add_option("--data", ev_data, "validation dataset (jsonl)")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--train-data", ev_train_data,
                 "training dataset used to enforce the val-unseen contract");
  ev->callback([&]() {
    Config cfg = load_config(args);
    eval::RunDir dir = eval::RunDir::create(args.run_dir);
    sim::Dataset val = sim::load_dataset(ev_data);
    std::vector<uint64_t> train_seeds;
    if (!ev_train_data.empty()) train_seeds = sim::load_dataset(ev_train_data).scene_seeds;
    nn::Agent agent = nn::Agent::load_checkpoint(ev_ckpt);
    eval::EvalOptions opts;
    opts.dump_weight_episodes = cfg.dump_weight_episodes;
    opts.dump_dir = dir.results();
    eval::EvalOutput out = eval::evaluate(agent, val, train_seeds, opts);
    eval::write_eval_csv(dir.results() + "/eval.csv", out.episodes);
    eval::write_manifest(dir, cfg, "eval", train_seeds, val.scene_seeds);
    print_summary("val", out.summary);
  });

  // --- ablate -----------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "switch-matrix ablation or hyperparameter sweep");
  add_common(ab, args);
  std::string ab_train, ab_val, ab_rows = "baseline,map,map_con,rvi,rvi_pro_pa,rvi_pa_sa,full";
  std::string ab_sweep;
  ab->add_option("--train-data", ab_train, "training dataset (jsonl)")->required();
  ab->add_option("--val-data", ab_val, "validation dataset (jsonl)")->required();
  ab->add_option("--rows", ab_rows, "comma-separated ablation rows");
  ab->add_option("--sweep", ab_sweep, "run a sweep instead: k or grid");
  ab->callback([&]() {
    Config cfg = load_config(args);
    eval::RunDir dir = eval::RunDir::create(args.run_dir);
    sim::Dataset train_ds = sim::load_dataset(ab_train);
    sim::Dataset val_ds = sim::load_dataset(ab_val);
    if (!sim::sim_compatible(train_ds.config, cfg))
      throw VlnError("ablate: dataset generator settings disagree with the config");
    std::vector<eval::AblationCell> cells;
    if (!ab_sweep.empty()) {
      const auto& values = ab_sweep == "k" ? cfg.sweep_k : cfg.sweep_grid;
      cells = eval::run_sweep(cfg, dir, train_ds, val_ds, ab_sweep, values);
    } else {
      std::vector<std::string> rows;
      std::stringstream ss(ab_rows);
      std::string item;
      while (std::getline(ss, item, ',')) rows.push_back(item);
      cells = eval::run_ablation(cfg, dir, train_ds, val_ds, rows);
    }
    eval::write_manifest(dir, cfg, "ablate", train_ds.scene_seeds, val_ds.scene_seeds);
    for (const auto& c : cells)
      std::printf("%-16s seed %llu  SR %.1f  OSR %.1f  SPL %.1f  DTS %.2f\n",
                  c.row.c_str(), static_cast<unsigned long long>(c.seed), c.val.sr,
                  c.val.osr, c.val.spl, c.val.dts);
  });

  // --- report -----------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "render plots and tables for a run directory");
  add_common(rep, args);
  rep->callback([&]() {
    eval::write_report(args.run_dir);
    std::printf("report written to %s/report.txt and %s/plots/\n", args.run_dir.c_str(),
                args.run_dir.c_str());
  });

  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const VlnError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
