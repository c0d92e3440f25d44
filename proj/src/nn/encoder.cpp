#include "vln/nn/encoder.hpp"

#include <cmath>

namespace vln::nn {

ObservationEncoder::ObservationEncoder(const Config& cfg, ParamStore& store)
    : cfg_(&cfg) {
  const int d = cfg.dim;
  view_feature_dim_ =
      cfg.categories + cfg.sectors_per_view * cfg.depth_bins + 1;
  view_mlp_ = register_mlp(store, "enc.view", view_feature_dim_ + 2, d, d);
  w_pose_ = store.add("enc.pose.w", 4, d);
  b_pose_ = store.add("enc.pose.b", 1, d, false);
  act_emb_ = store.add("enc.act.emb", kNumActions + 1, d);
  w_fuse_ = store.add("enc.fuse.w", 3 * d, d);
  b_fuse_ = store.add("enc.fuse.b", 1, d, false);
  vsp_mlp_ = register_mlp(store, "enc.vsp", d, d, 2 * cfg.views * cfg.categories);
}

int ObservationEncoder::encode(Graph& g, ParamInjector& P,
                               const sim::PanoramicObservation& pano,
                               const Pose& pose, int prev_action_id, int t) const {
  const int K = cfg_->views;
  if (pano.views != K || pano.feature_dim != view_feature_dim_)
    throw VlnError("encode: panorama shape does not match config");
  // view features with each view's relative heading appended as (sin, cos)
  Tensor views(K, view_feature_dim_ + 2);
  for (int k = 0; k < K; ++k) {
    const real* src = pano.features.row_ptr(k);
    real* dst = views.row_ptr(k);
    std::copy(src, src + view_feature_dim_, dst);
    const real phi = 2.0 * kPi * k / K;
    dst[view_feature_dim_] = std::sin(phi);
    dst[view_feature_dim_ + 1] = std::cos(phi);
  }
  const int view_tokens = mlp(g, P, view_mlp_, g.leaf(std::move(views)));
  const int view_mean = g.mean_rows(view_tokens);

  Tensor pose_vec(1, 4);
  pose_vec.v[0] = pose.x / cfg_->extent_m;
  pose_vec.v[1] = pose.y / cfg_->extent_m;
  pose_vec.v[2] = std::sin(pose.theta);
  pose_vec.v[3] = std::cos(pose.theta);
  const int pose_emb = linear(g, g.leaf(std::move(pose_vec)), P(w_pose_), P(b_pose_));

  if (prev_action_id < 0 || prev_action_id > kNumActions)
    throw VlnError("encode: bad previous action id");
  const int act = g.gather_rows(P(act_emb_), {prev_action_id});

  const int fused = linear(g, g.concat_cols({view_mean, pose_emb, act}),
                           P(w_fuse_), P(b_fuse_));
  return g.add(fused, g.leaf(sinusoidal_embedding(t, cfg_->dim)));
}

Tensor ObservationEncoder::vsp_targets(const sim::PanoramicObservation& pano) const {
  const int K = cfg_->views;
  const int C = cfg_->categories;
  Tensor t(1, 2 * K * C);
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c) {
      const real ratio = pano.category_ratio.at(k, c);
      t.v[k * C + c] = ratio > 0.0 ? 1.0 : 0.0;
      t.v[K * C + k * C + c] = ratio;
    }
  return t;
}

int ObservationEncoder::vsp_loss(Graph& g, ParamInjector& P, int o_t,
                                 const sim::PanoramicObservation& pano) const {
  const int logits = mlp(g, P, vsp_mlp_, o_t);
  return g.bce_with_logits(logits, vsp_targets(pano), /*mean=*/true);
}

}  // namespace vln::nn
