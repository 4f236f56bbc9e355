#pragma once

#include "mclsr/corpus.hpp"
#include "mclsr/graphs.hpp"
#include "mclsr/model.hpp"
#include "mclsr/rng.hpp"

#include <span>

namespace mclsr {

struct Hyper {
  Real alpha = 0.5;
  Real beta = 1.0;
  Real gamma = 0.05;
  Real tau = 0.5;
  int negatives = 1280;
  int layers = 2;
  bool attend_positioned = false;
};

/// Contrastive loss over row-paired anchors/positives with temperature-scaled
/// cosine similarity. Negatives are the other rows of both matrices.
Real info_nce(Eigen::Ref<const Mat> anchors, Eigen::Ref<const Mat> positives, Real tau);

/// One-directional contrast of projected sequence-view interests against the
/// same users' projected graph-view interests.
Real interest_loss(Eigen::Ref<const Mat> seq_proj, Eigen::Ref<const Mat> graph_proj, Real tau);

/// Sum of the user-side and item-side cross-view feature contrasts over the
/// given (deduplicated) entity sets.
Real feature_loss(const ProjectionHead& head, const NodeFeatures& feats,
                  std::span<const UserIndex> users, std::span<const ItemIndex> items, Real tau);

/// Sampled-softmax negative log-likelihood, summed over the batch. One
/// negative set per batch, uniform without replacement, batch targets excluded.
Real prediction_loss(Eigen::Ref<const Mat> combined, std::span<const ItemIndex> targets,
                     Eigen::Ref<const Mat> item_emb, int negatives, Rng& rng);

/// alpha-blend of the two interest views.
Vec combine_interest(const Vec& current, const Vec& general, Real alpha);

struct LossBundle {
  Real prediction = 0.0;        // batch sum
  Real interest_contrast = 0.0; // unweighted
  Real feature_contrast = 0.0;  // unweighted
  Real joint = 0.0;             // prediction + beta*interest + gamma*feature
  ModelParams grads;
};

/// Full forward over one batch and exact reverse-mode gradients of the joint
/// objective with respect to every parameter tensor, including the paths
/// through graph propagation into the embedding tables. `negatives_seed`
/// pins the negative sample so repeated calls are reproducible.
LossBundle joint_loss_and_grads(const ModelParams& params, std::span<const TrainSample> batch,
                                const Graphs& graphs, const Hyper& hyper,
                                std::uint64_t negatives_seed, bool compute_grads = true);

}  // namespace mclsr
