// Times the serial reference kernels against the OpenMP ones, plus one full
// model training step, and prints a speedup table.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "vln/core/kernels.hpp"
#include "vln/core/rng.hpp"
#include "vln/eval/runner.hpp"

using namespace vln;

namespace {

Tensor random_tensor(int r, int c, uint64_t seed) {
  Tensor t(r, c);
  Rng rng(seed);
  for (auto& x : t.v) x = rng.normal();
  return t;
}

double time_ms(const std::function<void()>& fn, int iters) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void row(const std::string& name, const std::function<void()>& serial_fn,
         const std::function<void()>& par_fn, int iters) {
  const double ts = time_ms(serial_fn, iters);
  const double tp = time_ms(par_fn, iters);
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), ts, tp, ts / tp);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", kernels::num_threads());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  {
    Tensor a = random_tensor(288, 288, 1), b = random_tensor(288, 7168, 2), c;
    row("matmul 288x288x7168",
        [&] { kernels::serial::matmul(a, b, c, {}); },
        [&] { kernels::par::matmul(a, b, c, {}); }, 5);
  }
  {
    Tensor a = random_tensor(64, 128, 3), b = random_tensor(128, 512, 4), c;
    row("matmul 64x128x512",
        [&] { kernels::serial::matmul(a, b, c, {}); },
        [&] { kernels::par::matmul(a, b, c, {}); }, 200);
  }
  {
    Tensor x = random_tensor(512, 512, 5), probs;
    row("softmax_rows 512x512",
        [&] { kernels::serial::softmax_rows(x, probs); },
        [&] { kernels::par::softmax_rows(x, probs); }, 100);
  }
  {
    Tensor x = random_tensor(512, 256, 6);
    Tensor gamma = Tensor::full(1, 256, 1.0), beta(1, 256);
    Tensor y, mean, rstd;
    row("layernorm_fwd 512x256",
        [&] { kernels::serial::layernorm_fwd(x, gamma, beta, y, mean, rstd); },
        [&] { kernels::par::layernorm_fwd(x, gamma, beta, y, mean, rstd); }, 200);
  }
  {
    Tensor w = random_tensor(1024, 512, 7), g = random_tensor(1024, 512, 8);
    Tensor m(1024, 512), v(1024, 512);
    int step = 0;
    Tensor w2 = w, m2 = m, v2 = v;
    row("adamw_step 1024x512",
        [&] { kernels::serial::adamw_step(w, g, m, v, 1e-4, 0.9, 0.999, 1e-8, 0.01, ++step); },
        [&] { kernels::par::adamw_step(w2, g, m2, v2, 1e-4, 0.9, 0.999, 1e-8, 0.01, ++step); },
        50);
  }

  // full training step (graph build + backward) on a small config, batch
  // episodes processed serially vs in parallel workers
  {
    Config cfg;
    cfg.extent_m = 6.4;
    cfg.categories = 6;
    cfg.dim = 32;
    cfg.grid_h = cfg.grid_w = 3;
    cfg.isr_layers = 2;
    cfg.isr_heads = 4;
    cfg.xmodal_layers = 1;
    cfg.xmodal_heads = 4;
    cfg.pano_dim = 32;
    cfg.goal_min_m = 1.5;
    cfg.goal_max_m = 3.5;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    sim::Dataset ds = sim::generate_dataset(cfg, 7, 4, 1);
    const auto eps = eval::prepare_all(ds, cfg);
    nn::Agent agent(cfg, 0);
    const nn::LossProfile profile = nn::LossProfile::pretrain(cfg, true);

    auto run_batch = [&](bool parallel) {
      kernels::set_parallel(parallel);
      std::vector<std::vector<Tensor>> sinks(eps.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
      for (int i = 0; i < static_cast<int>(eps.size()); ++i) {
        Graph g;
        auto nodes = agent.build_episode_losses(g, eps[i], profile, 42 + i);
        train::LossBreakdown bd;
        const int total = train::total_loss_node(g, nodes, cfg, &bd);
        sinks[i] = agent.params().make_grad_sink();
        g.backward(total, sinks[i]);
      }
      kernels::set_parallel(true);
    };
    row("train step (4-episode batch)", [&] { run_batch(false); },
        [&] { run_batch(true); }, 3);
  }
  return 0;
}
