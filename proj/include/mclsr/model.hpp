#pragma once

#include "mclsr/graphs.hpp"
#include "mclsr/rng.hpp"
#include "mclsr/types.hpp"

#include <span>
#include <utility>

namespace mclsr {

/// Two-layer MLP head mapping features into the contrastive space:
/// y = w_out * elu(w_in * x + b_in) + b_out.
struct ProjectionHead {
  Mat w_in;   // d x d
  Vec b_in;   // d
  Mat w_out;  // d x d
  Vec b_out;  // d
};

/// Every trainable tensor. Also reused as the gradient container, since
/// gradients mirror parameter shapes exactly.
struct ModelParams {
  Mat user_emb;         // |U| x d
  Mat item_emb;         // |V| x d
  Mat pos_emb;          // kMaxPrefixLen x d
  Mat attn_hidden;      // 4d x d, pre-tanh transform of positioned items
  Vec attn_score;       // 4d, scores the hidden columns into logits
  Mat query_transform;  // d x d, maps a user feature to the attention query
  ProjectionHead interest_head;
  ProjectionHead feature_head;

  Eigen::Index dim() const { return item_emb.cols(); }
  Eigen::Index num_users() const { return user_emb.rows(); }
  Eigen::Index num_items() const { return item_emb.rows(); }
  bool all_finite() const;

  static ModelParams zeros(Eigen::Index users, Eigen::Index items, Eigen::Index dim);
  static ModelParams init(Eigen::Index users, Eigen::Index items, Eigen::Index dim, Rng& rng);
};

/// Applies `f(name, tensor)` to every tensor; iteration order is fixed and
/// shared by the optimizer, checkpoints, and gradient checks.
template <class Params, class F>
void for_each_tensor(Params&& p, F&& f) {
  f("user_emb", p.user_emb);
  f("item_emb", p.item_emb);
  f("pos_emb", p.pos_emb);
  f("attn_hidden", p.attn_hidden);
  f("attn_score", p.attn_score);
  f("query_transform", p.query_transform);
  f("interest.w_in", p.interest_head.w_in);
  f("interest.b_in", p.interest_head.b_in);
  f("interest.w_out", p.interest_head.w_out);
  f("interest.b_out", p.interest_head.b_out);
  f("feature.w_in", p.feature_head.w_in);
  f("feature.b_in", p.feature_head.b_in);
  f("feature.w_out", p.feature_head.w_out);
  f("feature.b_out", p.feature_head.b_out);
}

template <class A, class B, class F>
void for_each_tensor_pair(A&& a, B&& b, F&& f) {
  for_each_tensor(a, [&](const char* name, auto& ta) {
    for_each_tensor(b, [&](const char* name_b, auto& tb) {
      if (std::string_view(name) == name_b)
        if constexpr (std::is_same_v<std::decay_t<decltype(ta)>, std::decay_t<decltype(tb)>>)
          f(name, ta, tb);
    });
  });
}

/// Propagated node features from the three graph views. The joint user-item
/// propagation is computed once and serves both the general-interest path and
/// the feature-level views.
struct NodeFeatures {
  Mat ui_all;    // (|U|+|V|) x d
  Mat uu_users;  // |U| x d
  Mat vv_items;  // |V| x d
  Eigen::Index num_users = 0;

  auto ui_users() const { return ui_all.topRows(num_users); }
  auto ui_items() const { return ui_all.bottomRows(ui_all.rows() - num_users); }
};

struct AttentionOut {
  Vec interest;  // d
  Vec weights;   // one per prefix position, sums to 1
};

/// Sequence-view interest: attention over the prefix's item embeddings with
/// learned positions in the logits. Independent of the user index, so it also
/// serves cold users at inference.
AttentionOut current_interest(const ModelParams& params, std::span<const ItemIndex> prefix,
                              bool attend_positioned = false);

/// Graph-view interest: the user's propagated feature queries the prefix
/// items' propagated features.
AttentionOut general_interest(const ModelParams& params, const NodeFeatures& feats,
                              UserIndex user, std::span<const ItemIndex> prefix);

NodeFeatures node_features(const ModelParams& params, const Graphs& graphs, int layers);

/// Row-wise projection into the contrastive space.
Mat project(const ProjectionHead& head, Eigen::Ref<const Mat> x);

}  // namespace mclsr
