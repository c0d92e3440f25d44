#include "vln/core/params.hpp"

#include <cmath>
#include <cstring>

#include "vln/core/kernels.hpp"

namespace vln {

int ParamStore::add(const std::string& name, int rows, int cols, bool decay) {
  if (by_name_.count(name)) throw VlnError("duplicate parameter: " + name);
  Entry e;
  e.name = name;
  e.w = Tensor(rows, cols);
  e.decay = decay;
  entries_.push_back(std::move(e));
  const int idx = static_cast<int>(entries_.size()) - 1;
  by_name_[name] = idx;
  return idx;
}

void ParamStore::init_weights(uint64_t seed) {
  for (auto& e : entries_) {
    Rng rng = Rng::derive(seed, {fnv1a(e.name.c_str())});
    const bool is_bias = e.w.rows == 1 && !e.decay;
    if (is_bias) {
      for (auto& x : e.w.v) x = 0.0;
      // layernorm gains start at 1
      if (e.name.size() >= 2 && e.name.substr(e.name.size() - 2) == ".g")
        for (auto& x : e.w.v) x = 1.0;
    } else {
      const real std = 1.0 / std::sqrt(static_cast<real>(std::max(1, e.w.rows)));
      for (auto& x : e.w.v) x = std * rng.normal();
    }
  }
}

int ParamStore::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw VlnError("unknown parameter: " + name);
  return it->second;
}

size_t ParamStore::total_values() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.w.v.size();
  return n;
}

std::vector<Tensor> ParamStore::make_grad_sink() const {
  std::vector<Tensor> g;
  g.reserve(entries_.size());
  for (const auto& e : entries_) g.emplace_back(e.w.rows, e.w.cols);
  return g;
}

void ParamStore::accumulate(std::vector<Tensor>& into, const std::vector<Tensor>& from) {
  for (size_t i = 0; i < into.size(); ++i)
    for (size_t j = 0; j < into[i].v.size(); ++j) into[i].v[j] += from[i].v[j];
}

void ParamStore::scale_grads(std::vector<Tensor>& grads, real s) {
  for (auto& g : grads)
    for (auto& x : g.v) x *= s;
}

real ParamStore::grad_norm(const std::vector<Tensor>& grads) {
  real s = 0.0;
  for (const auto& g : grads)
    for (real x : g.v) s += x * x;
  return std::sqrt(s);
}

uint64_t ParamStore::weights_hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& e : entries_)
    for (real x : e.w.v) {
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(x));
      std::memcpy(&bits, &x, sizeof(bits));
      h = hash_mix(h, bits);
    }
  return h;
}

AdamW::AdamW(ParamStore& store, real lr, real weight_decay, real beta1,
             real beta2, real eps)
    : store_(store), lr_(lr), weight_decay_(weight_decay), beta1_(beta1),
      beta2_(beta2), eps_(eps) {
  for (int i = 0; i < store.count(); ++i) {
    const Tensor& w = store.tensor(i);
    m_.emplace_back(w.rows, w.cols);
    v_.emplace_back(w.rows, w.cols);
  }
}

void AdamW::step(std::vector<Tensor>& grads, real clip_norm) {
  if (clip_norm > 0.0) {
    const real norm = ParamStore::grad_norm(grads);
    if (norm > clip_norm) ParamStore::scale_grads(grads, clip_norm / norm);
  }
  ++t_;
  for (int i = 0; i < store_.count(); ++i) {
    const real wd = store_.entry(i).decay ? weight_decay_ : 0.0;
    kernels::adamw_step(store_.tensor(i), grads[i], m_[i], v_[i], lr_, beta1_,
                        beta2_, eps_, wd, t_);
  }
}

}  // namespace vln
