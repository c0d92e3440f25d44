#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vln/core/rng.hpp"
#include "vln/core/tensor.hpp"

namespace vln {

// Named model parameters plus AdamW state. Parameters are grouped by a
// prefix ("enc", "isr", "rvi", "alg") so gradient-flow tests can slice them.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor w;
    bool decay = true;  // weight decay applies (off for biases / layernorm)
  };

  int add(const std::string& name, int rows, int cols, bool decay = true);
  // Fan-in scaled gaussian init; deterministic in (seed, name).
  void init_weights(uint64_t seed);

  int index_of(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) > 0; }
  const Tensor& tensor(int i) const { return entries_[i].w; }
  Tensor& tensor(int i) { return entries_[i].w; }
  const Entry& entry(int i) const { return entries_[i]; }
  int count() const { return static_cast<int>(entries_.size()); }
  size_t total_values() const;

  std::vector<Tensor> make_grad_sink() const;
  static void accumulate(std::vector<Tensor>& into, const std::vector<Tensor>& from);
  static void scale_grads(std::vector<Tensor>& grads, real s);
  static real grad_norm(const std::vector<Tensor>& grads);

  uint64_t weights_hash() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> by_name_;
};

class AdamW {
 public:
  AdamW(ParamStore& store, real lr, real weight_decay, real beta1 = 0.9,
        real beta2 = 0.999, real eps = 1e-8);

  void set_lr(real lr) { lr_ = lr; }
  real lr() const { return lr_; }
  // Applies one update from accumulated gradients; optionally clips the
  // global gradient norm first.
  void step(std::vector<Tensor>& grads, real clip_norm = 0.0);

 private:
  ParamStore& store_;
  real lr_, weight_decay_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace vln
