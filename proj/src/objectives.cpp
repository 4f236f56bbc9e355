#include "mclsr/objectives.hpp"

#include "mclsr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <vector>

namespace mclsr {

namespace {

constexpr Real kCosineGuard = 1e-12;

// ---------------------------------------------------------------------------
// InfoNCE with cosine similarity.
//
// For anchors x_i and positives y_j, with s(.,.) = cos(.,.)/tau:
//   L = sum_i [ log( sum_j e^{s(x_i,y_j)} + sum_{j!=i} e^{s(x_i,x_j)} ) - s(x_i,y_i) ]
// The gradient seed is scaled by `scale` so callers can fold in the loss
// weight; the returned loss stays unweighted.
// ---------------------------------------------------------------------------

Real info_nce_impl(Eigen::Ref<const Mat> x, Eigen::Ref<const Mat> y, Real tau, Real scale,
                   Mat* gx, Mat* gy) {
  if (tau <= 0.0) throw ParamError("info_nce: temperature must be positive");
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw ShapeError("info_nce: anchor/positive shapes differ");
  if (x.rows() < 1) throw ParamError("info_nce: empty batch");

  const Eigen::Index b = x.rows();
  const Vec nx = x.rowwise().norm();
  const Vec ny = y.rowwise().norm();

  Mat cos_xy = x * y.transpose();  // cross cosines
  Mat cos_xx = x * x.transpose();  // anchor-anchor cosines
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      cos_xy(i, j) /= std::max(nx[i] * ny[j], kCosineGuard);
      cos_xx(i, j) /= std::max(nx[i] * nx[j], kCosineGuard);
    }

  Real loss = 0.0;
  Mat wxy(b, b);  // dL/ds for cross terms (before 1/tau)
  Mat wxx = Mat::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Real m = cos_xy(i, i);
    for (Eigen::Index j = 0; j < b; ++j) {
      m = std::max(m, cos_xy(i, j));
      if (j != i) m = std::max(m, cos_xx(i, j));
    }
    m /= tau;
    Real z = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      z += std::exp(cos_xy(i, j) / tau - m);
      if (j != i) z += std::exp(cos_xx(i, j) / tau - m);
    }
    const Real log_denom = m + std::log(z);
    loss += log_denom - cos_xy(i, i) / tau;
    if (gx != nullptr) {
      for (Eigen::Index j = 0; j < b; ++j) {
        wxy(i, j) = std::exp(cos_xy(i, j) / tau - log_denom);
        if (j != i) wxx(i, j) = std::exp(cos_xx(i, j) / tau - log_denom);
      }
      wxy(i, i) -= 1.0;
    }
  }
  if (gx == nullptr) return loss;

  const Real w_scale = scale / tau;
  wxy *= w_scale;
  wxx *= w_scale;

  Real min_cross = std::numeric_limits<Real>::infinity();
  Real min_anchor = min_cross;
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      min_cross = std::min(min_cross, nx[i] * ny[j]);
      min_anchor = std::min(min_anchor, nx[i] * nx[j]);
    }

  if (min_cross > kCosineGuard && min_anchor > kCosineGuard) {
    // All pairs on the smooth branch: pure matrix arithmetic.
    Mat xh(b, x.cols());
    Mat yh(b, y.cols());
    for (Eigen::Index i = 0; i < b; ++i) {
      xh.row(i) = x.row(i) / nx[i];
      yh.row(i) = y.row(i) / ny[i];
    }
    const Vec row_xy = wxy.cwiseProduct(cos_xy).rowwise().sum();
    const Vec col_xy = wxy.cwiseProduct(cos_xy).colwise().sum().transpose();
    const Vec row_xx = wxx.cwiseProduct(cos_xx).rowwise().sum();
    const Vec col_xx = wxx.cwiseProduct(cos_xx).colwise().sum().transpose();
    Mat dx = wxy * yh + (wxx + wxx.transpose()) * xh;
    Mat dy = wxy.transpose() * xh;
    for (Eigen::Index i = 0; i < b; ++i) {
      dx.row(i) = (dx.row(i) - (row_xy[i] + row_xx[i] + col_xx[i]) * xh.row(i)) / nx[i];
      dy.row(i) = (dy.row(i) - col_xy[i] * yh.row(i)) / ny[i];
    }
    *gx += dx;
    *gy += dy;
    return loss;
  }

  // Degenerate norms present: per-pair loop with the guarded denominator.
  const auto add_pair_grad = [&](Eigen::Ref<const Mat> a, Eigen::Ref<const Mat> p, Real na,
                                 Real np, Real c, Real w, Eigen::Index i, Eigen::Index j,
                                 Mat& ga, Mat& gp) {
    const Real denom = na * np;
    if (denom > kCosineGuard) {
      ga.row(i) += w * (p.row(j) / denom - c * a.row(i) / (na * na));
      gp.row(j) += w * (a.row(i) / denom - c * p.row(j) / (np * np));
    } else {
      ga.row(i) += (w / kCosineGuard) * p.row(j);
      gp.row(j) += (w / kCosineGuard) * a.row(i);
    }
  };
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      add_pair_grad(x, y, nx[i], ny[j], cos_xy(i, j), wxy(i, j), i, j, *gx, *gy);
      if (j != i) add_pair_grad(x, x, nx[i], nx[j], cos_xx(i, j), wxx(i, j), i, j, *gx, *gx);
    }
  return loss;
}

// ---------------------------------------------------------------------------
// Sampled softmax.
// ---------------------------------------------------------------------------

std::vector<ItemIndex> sample_negatives(Rng& rng, Eigen::Index num_items,
                                        std::span<const ItemIndex> targets, int negatives) {
  if (negatives < 0) throw ParamError("prediction_loss: negatives must be >= 0");
  if (negatives >= num_items - static_cast<Eigen::Index>(targets.size()))
    throw ParamError("prediction_loss: negatives must be < |V| - batch size");
  std::unordered_set<ItemIndex> taken(targets.begin(), targets.end());
  std::vector<ItemIndex> out;
  out.reserve(static_cast<std::size_t>(negatives));
  while (out.size() < static_cast<std::size_t>(negatives)) {
    const ItemIndex cand =
        static_cast<ItemIndex>(rng.bounded(static_cast<std::uint64_t>(num_items)));
    if (taken.insert(cand).second) out.push_back(cand);
  }
  return out;
}

// Returns the batch-summed loss; optionally accumulates gradients w.r.t. the
// combined interests and the item embedding table.
Real prediction_core(Eigen::Ref<const Mat> combined, std::span<const ItemIndex> targets,
                     Eigen::Ref<const Mat> item_emb, std::span<const ItemIndex> negatives,
                     Mat* g_combined, Mat* g_item_emb) {
  const Eigen::Index b = combined.rows();
  const Eigen::Index n_neg = static_cast<Eigen::Index>(negatives.size());
  const Eigen::Index d = combined.cols();

  Mat neg_emb(n_neg, d);
  for (Eigen::Index k = 0; k < n_neg; ++k)
    neg_emb.row(k) = item_emb.row(negatives[static_cast<std::size_t>(k)]);
  const Mat neg_logits = combined * neg_emb.transpose();  // b x n_neg

  Real loss = 0.0;
  Mat neg_probs;
  if (g_combined != nullptr) neg_probs.resize(b, n_neg);
  for (Eigen::Index s = 0; s < b; ++s) {
    const ItemIndex target = targets[static_cast<std::size_t>(s)];
    const Real target_logit = combined.row(s).dot(item_emb.row(target));
    Real m = target_logit;
    for (Eigen::Index k = 0; k < n_neg; ++k) m = std::max(m, neg_logits(s, k));
    Real z = std::exp(target_logit - m);
    for (Eigen::Index k = 0; k < n_neg; ++k) z += std::exp(neg_logits(s, k) - m);
    const Real lse = m + std::log(z);
    loss += lse - target_logit;
    if (g_combined != nullptr) {
      const Real p_target = std::exp(target_logit - lse);
      g_combined->row(s) += (p_target - 1.0) * item_emb.row(target);
      g_item_emb->row(target) += (p_target - 1.0) * combined.row(s);
      for (Eigen::Index k = 0; k < n_neg; ++k) neg_probs(s, k) = std::exp(neg_logits(s, k) - lse);
    }
  }
  if (g_combined != nullptr && n_neg > 0) {
    *g_combined += neg_probs * neg_emb;
    const Mat g_neg = neg_probs.transpose() * combined;  // n_neg x d
    for (Eigen::Index k = 0; k < n_neg; ++k)
      g_item_emb->row(negatives[static_cast<std::size_t>(k)]) += g_neg.row(k);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Projection head forward/backward.
// ---------------------------------------------------------------------------

struct ProjCache {
  Mat pre;  // rows x d, before ELU
  Mat act;  // rows x d, after ELU
};

Mat project_forward(const ProjectionHead& head, Eigen::Ref<const Mat> x, ProjCache& cache) {
  cache.pre = x * head.w_in.transpose();
  cache.pre.rowwise() += head.b_in.transpose();
  cache.act = cache.pre.unaryExpr([](Real v) { return v > 0.0 ? v : std::expm1(v); });
  Mat out = cache.act * head.w_out.transpose();
  out.rowwise() += head.b_out.transpose();
  return out;
}

void project_backward(const ProjectionHead& head, const ProjCache& cache,
                      Eigen::Ref<const Mat> x, Eigen::Ref<const Mat> g_out,
                      ProjectionHead& g_head, Mat& g_x) {
  g_head.w_out += g_out.transpose() * cache.act;
  g_head.b_out += g_out.colwise().sum().transpose();
  Mat g_act = g_out * head.w_out;
  // elu'(v) = 1 for v > 0, otherwise elu(v) + 1.
  Mat g_pre = g_act.cwiseProduct(cache.pre.binaryExpr(
      cache.act, [](Real pre, Real act) { return pre > 0.0 ? 1.0 : act + 1.0; }));
  g_head.w_in += g_pre.transpose() * x;
  g_head.b_in += g_pre.colwise().sum().transpose();
  g_x += g_pre * head.w_in;
}

// ---------------------------------------------------------------------------
// Batch layout: ragged prefixes stored concatenated, one segment per sample.
// ---------------------------------------------------------------------------

struct BatchLayout {
  std::vector<Eigen::Index> offset;  // per sample, size b+1
  std::vector<ItemIndex> items;      // concatenated prefixes, size t
  std::vector<Eigen::Index> pos;     // position within prefix, size t
  std::vector<Eigen::Index> seg;     // owning sample of each slot, size t
  std::vector<UserIndex> users;      // size b
  std::vector<ItemIndex> targets;    // size b
  Eigen::Index total = 0;
};

BatchLayout layout_batch(std::span<const TrainSample> batch, const ModelParams& params) {
  BatchLayout lay;
  lay.offset.push_back(0);
  for (const TrainSample& s : batch) {
    if (s.prefix.empty()) throw ParamError("joint loss: sample with empty prefix");
    if (s.prefix.size() > static_cast<std::size_t>(kMaxPrefixLen))
      throw ParamError("joint loss: prefix longer than position table");
    if (s.user < 0 || s.user >= params.num_users())
      throw IndexError("joint loss: user index out of range");
    if (s.target < 0 || s.target >= params.num_items())
      throw IndexError("joint loss: target index out of range");
    for (std::size_t j = 0; j < s.prefix.size(); ++j) {
      const ItemIndex v = s.prefix[j];
      if (v < 0 || v >= params.num_items())
        throw IndexError("joint loss: prefix item out of range");
      lay.items.push_back(v);
      lay.pos.push_back(static_cast<Eigen::Index>(j));
      lay.seg.push_back(static_cast<Eigen::Index>(lay.users.size()));
    }
    lay.users.push_back(s.user);
    lay.targets.push_back(s.target);
    lay.offset.push_back(static_cast<Eigen::Index>(lay.items.size()));
  }
  lay.total = static_cast<Eigen::Index>(lay.items.size());
  return lay;
}

// In-place softmax over each [offset[s], offset[s+1]) segment.
void segment_softmax(Vec& logits, const std::vector<Eigen::Index>& offset) {
  for (std::size_t s = 0; s + 1 < offset.size(); ++s) {
    const Eigen::Index lo = offset[s];
    const Eigen::Index len = offset[s + 1] - lo;
    auto seg = logits.segment(lo, len);
    seg = (seg.array() - seg.maxCoeff()).exp().matrix();
    seg /= seg.sum();
  }
}

// d(softmax)/d(logits) pullback: gl = p .* (gp - <p, gp>) per segment.
void segment_softmax_backward(const Vec& probs, Vec& grad, // grad: in = d/dp, out = d/dlogit
                              const std::vector<Eigen::Index>& offset) {
  for (std::size_t s = 0; s + 1 < offset.size(); ++s) {
    const Eigen::Index lo = offset[s];
    const Eigen::Index len = offset[s + 1] - lo;
    auto p = probs.segment(lo, len);
    auto g = grad.segment(lo, len);
    const Real inner = p.dot(g);
    g = (p.array() * (g.array() - inner)).matrix();
  }
}

template <class IndexVec>
Mat gather_rows(Eigen::Ref<const Mat> src, const IndexVec& ids, Eigen::Index offset = 0) {
  Mat out(static_cast<Eigen::Index>(ids.size()), src.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = src.row(offset + ids[i]);
  return out;
}

std::vector<ItemIndex> sorted_unique(std::vector<ItemIndex> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void check_finite(Real value, const char* term) {
  if (!std::isfinite(value))
    throw NumericError(std::string("non-finite loss term: ") + term);
}

}  // namespace

Real info_nce(Eigen::Ref<const Mat> anchors, Eigen::Ref<const Mat> positives, Real tau) {
  return info_nce_impl(anchors, positives, tau, 1.0, nullptr, nullptr);
}

Real interest_loss(Eigen::Ref<const Mat> seq_proj, Eigen::Ref<const Mat> graph_proj, Real tau) {
  return info_nce(seq_proj, graph_proj, tau);
}

Real feature_loss(const ProjectionHead& head, const NodeFeatures& feats,
                  std::span<const UserIndex> users, std::span<const ItemIndex> items, Real tau) {
  if (users.empty() || items.empty())
    throw ParamError("feature_loss: entity sets must be non-empty");
  const auto user_set = sorted_unique({users.begin(), users.end()});
  const auto item_set = sorted_unique({items.begin(), items.end()});

  ProjCache scratch;
  const Mat anchors_u = project_forward(head, gather_rows(feats.ui_all, user_set), scratch);
  const Mat positives_u = project_forward(head, gather_rows(feats.uu_users, user_set), scratch);
  const Mat anchors_v =
      project_forward(head, gather_rows(feats.ui_all, item_set, feats.num_users), scratch);
  const Mat positives_v = project_forward(head, gather_rows(feats.vv_items, item_set), scratch);
  return info_nce(anchors_u, positives_u, tau) + info_nce(anchors_v, positives_v, tau);
}

Real prediction_loss(Eigen::Ref<const Mat> combined, std::span<const ItemIndex> targets,
                     Eigen::Ref<const Mat> item_emb, int negatives, Rng& rng) {
  if (combined.rows() != static_cast<Eigen::Index>(targets.size()))
    throw ShapeError("prediction_loss: one target per interest row required");
  const auto negs = sample_negatives(rng, item_emb.rows(), targets, negatives);
  return prediction_core(combined, targets, item_emb, negs, nullptr, nullptr);
}

Vec combine_interest(const Vec& current, const Vec& general, Real alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ParamError("combine_interest: alpha must be in [0,1]");
  if (current.size() != general.size()) throw ShapeError("combine_interest: size mismatch");
  return alpha * current + (1.0 - alpha) * general;
}

LossBundle joint_loss_and_grads(const ModelParams& params, std::span<const TrainSample> batch,
                                const Graphs& graphs, const Hyper& hyper,
                                std::uint64_t negatives_seed, bool compute_grads) {
  if (batch.empty()) throw ParamError("joint loss: empty batch");
  if (hyper.tau <= 0.0) throw ParamError("joint loss: tau must be positive");
  if (hyper.alpha < 0.0 || hyper.alpha > 1.0)
    throw ParamError("joint loss: alpha must be in [0,1]");
  if (hyper.layers < 0) throw ParamError("joint loss: layers must be >= 0");

  const Eigen::Index d = params.dim();
  const Eigen::Index num_users = params.num_users();
  const Eigen::Index num_items = params.num_items();
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const BatchLayout lay = layout_batch(batch, params);

  const NodeFeatures feats = node_features(params, graphs, hyper.layers);

  // --- current interest (sequence view) ---
  const Mat item_rows = gather_rows(params.item_emb, lay.items);
  const Mat pos_rows = gather_rows(params.pos_emb, lay.pos);
  const Mat positioned = item_rows + pos_rows;
  const Mat attn_pre = positioned * params.attn_hidden.transpose();  // t x 4d
  const Mat attn_tanh = attn_pre.array().tanh().matrix();
  Vec seq_weights = attn_tanh * params.attn_score;
  segment_softmax(seq_weights, lay.offset);
  const Mat& attend_src = hyper.attend_positioned ? positioned : item_rows;
  Mat current(b, d);
  current.setZero();
  for (Eigen::Index t = 0; t < lay.total; ++t)
    current.row(lay.seg[t]) += seq_weights[t] * attend_src.row(t);

  // --- general interest (user-item graph view) ---
  const Mat user_feats = gather_rows(feats.ui_all, lay.users);
  const Mat query_pre = user_feats * params.query_transform.transpose();  // b x d
  const Mat query = query_pre.array().tanh().matrix();
  const Mat prefix_feats = gather_rows(feats.ui_all, lay.items, num_users);
  Vec graph_weights(lay.total);
  for (Eigen::Index t = 0; t < lay.total; ++t)
    graph_weights[t] = prefix_feats.row(t).dot(query.row(lay.seg[t]));
  segment_softmax(graph_weights, lay.offset);
  Mat general(b, d);
  general.setZero();
  for (Eigen::Index t = 0; t < lay.total; ++t)
    general.row(lay.seg[t]) += graph_weights[t] * prefix_feats.row(t);

  const Mat combined = hyper.alpha * current + (1.0 - hyper.alpha) * general;

  LossBundle bundle;
  bundle.grads = ModelParams::zeros(num_users, num_items, d);

  Mat g_combined = Mat::Zero(b, d);
  Mat g_current = Mat::Zero(b, d);
  Mat g_general = Mat::Zero(b, d);
  Mat g_node_all = Mat::Zero(num_users + num_items, d);  // d/d feats.ui_all
  Mat g_node_uu;
  Mat g_node_vv;

  // --- prediction loss ---
  Rng neg_rng(negatives_seed);
  const auto negs = sample_negatives(neg_rng, num_items, lay.targets, hyper.negatives);
  bundle.prediction = prediction_core(combined, lay.targets, params.item_emb, negs,
                                      compute_grads ? &g_combined : nullptr,
                                      compute_grads ? &bundle.grads.item_emb : nullptr);
  check_finite(bundle.prediction, "prediction");

  // --- interest-level contrast ---
  if (hyper.beta != 0.0) {
    ProjCache cache_s, cache_c;
    const Mat proj_s = project_forward(params.interest_head, current, cache_s);
    const Mat proj_c = project_forward(params.interest_head, general, cache_c);
    if (compute_grads) {
      Mat g_proj_s = Mat::Zero(b, d);
      Mat g_proj_c = Mat::Zero(b, d);
      bundle.interest_contrast =
          info_nce_impl(proj_s, proj_c, hyper.tau, hyper.beta, &g_proj_s, &g_proj_c);
      project_backward(params.interest_head, cache_s, current, g_proj_s,
                       bundle.grads.interest_head, g_current);
      project_backward(params.interest_head, cache_c, general, g_proj_c,
                       bundle.grads.interest_head, g_general);
    } else {
      bundle.interest_contrast = info_nce_impl(proj_s, proj_c, hyper.tau, 0.0, nullptr, nullptr);
    }
    check_finite(bundle.interest_contrast, "interest contrast");
  }

  // --- feature-level contrast over the batch's entities ---
  if (hyper.gamma != 0.0) {
    const auto user_set =
        sorted_unique(std::vector<ItemIndex>(lay.users.begin(), lay.users.end()));
    std::vector<ItemIndex> item_pool = lay.items;
    item_pool.insert(item_pool.end(), lay.targets.begin(), lay.targets.end());
    const auto item_set = sorted_unique(std::move(item_pool));

    g_node_uu = Mat::Zero(num_users, d);
    g_node_vv = Mat::Zero(num_items, d);

    const auto contrast_side = [&](const Mat& from_ui, const Mat& from_own,
                                   const std::vector<ItemIndex>& ids, Eigen::Index scatter_off,
                                   Mat& g_own, const char* term) {
      ProjCache cache_a, cache_p;
      const Mat anchors = project_forward(params.feature_head, from_ui, cache_a);
      const Mat positives = project_forward(params.feature_head, from_own, cache_p);
      Real value = 0.0;
      if (compute_grads) {
        const Eigen::Index rows = anchors.rows();
        Mat g_anchor = Mat::Zero(rows, d);
        Mat g_positive = Mat::Zero(rows, d);
        value = info_nce_impl(anchors, positives, hyper.tau, hyper.gamma, &g_anchor, &g_positive);
        Mat g_from_ui = Mat::Zero(rows, d);
        Mat g_from_own = Mat::Zero(rows, d);
        project_backward(params.feature_head, cache_a, from_ui, g_anchor,
                         bundle.grads.feature_head, g_from_ui);
        project_backward(params.feature_head, cache_p, from_own, g_positive,
                         bundle.grads.feature_head, g_from_own);
        for (Eigen::Index r = 0; r < rows; ++r) {
          g_node_all.row(scatter_off + ids[static_cast<std::size_t>(r)]) += g_from_ui.row(r);
          g_own.row(ids[static_cast<std::size_t>(r)]) += g_from_own.row(r);
        }
      } else {
        value = info_nce_impl(anchors, positives, hyper.tau, 0.0, nullptr, nullptr);
      }
      check_finite(value, term);
      return value;
    };

    const Real user_contrast =
        contrast_side(gather_rows(feats.ui_all, user_set), gather_rows(feats.uu_users, user_set),
                      user_set, 0, g_node_uu, "user feature contrast");
    const Real item_contrast = contrast_side(
        gather_rows(feats.ui_all, item_set, num_users), gather_rows(feats.vv_items, item_set),
        item_set, num_users, g_node_vv, "item feature contrast");
    bundle.feature_contrast = user_contrast + item_contrast;
  }

  bundle.joint = bundle.prediction + hyper.beta * bundle.interest_contrast +
                 hyper.gamma * bundle.feature_contrast;
  check_finite(bundle.joint, "joint");
  if (!compute_grads) return bundle;

  g_current += hyper.alpha * g_combined;
  g_general += (1.0 - hyper.alpha) * g_combined;

  // --- current interest backward ---
  {
    Vec g_weights(lay.total);
    for (Eigen::Index t = 0; t < lay.total; ++t)
      g_weights[t] = attend_src.row(t).dot(g_current.row(lay.seg[t]));
    segment_softmax_backward(seq_weights, g_weights, lay.offset);
    bundle.grads.attn_score += attn_tanh.transpose() * g_weights;
    Mat g_attn_pre = g_weights * params.attn_score.transpose();  // t x 4d
    g_attn_pre.array() *= 1.0 - attn_tanh.array().square();
    bundle.grads.attn_hidden += g_attn_pre.transpose() * positioned;
    Mat g_positioned = g_attn_pre * params.attn_hidden;  // t x d

    Mat g_attend = Mat::Zero(lay.total, d);
    for (Eigen::Index t = 0; t < lay.total; ++t)
      g_attend.row(t) = seq_weights[t] * g_current.row(lay.seg[t]);

    if (hyper.attend_positioned) g_positioned += g_attend;
    for (Eigen::Index t = 0; t < lay.total; ++t) {
      bundle.grads.pos_emb.row(lay.pos[t]) += g_positioned.row(t);
      bundle.grads.item_emb.row(lay.items[t]) += g_positioned.row(t);
      if (!hyper.attend_positioned) bundle.grads.item_emb.row(lay.items[t]) += g_attend.row(t);
    }
  }

  // --- general interest backward ---
  {
    Vec g_weights(lay.total);
    for (Eigen::Index t = 0; t < lay.total; ++t)
      g_weights[t] = prefix_feats.row(t).dot(g_general.row(lay.seg[t]));
    segment_softmax_backward(graph_weights, g_weights, lay.offset);
    Mat g_prefix_feats(lay.total, d);
    Mat g_query = Mat::Zero(b, d);
    for (Eigen::Index t = 0; t < lay.total; ++t) {
      const Eigen::Index s = lay.seg[t];
      g_prefix_feats.row(t) =
          graph_weights[t] * g_general.row(s) + g_weights[t] * query.row(s);
      g_query.row(s) += g_weights[t] * prefix_feats.row(t);
    }
    Mat g_query_pre = g_query.cwiseProduct((1.0 - query.array().square()).matrix());
    bundle.grads.query_transform += g_query_pre.transpose() * user_feats;
    const Mat g_user_feats = g_query_pre * params.query_transform;  // b x d
    for (Eigen::Index s = 0; s < b; ++s) g_node_all.row(lay.users[s]) += g_user_feats.row(s);
    for (Eigen::Index t = 0; t < lay.total; ++t)
      g_node_all.row(num_users + lay.items[t]) += g_prefix_feats.row(t);
  }

  // --- back through graph propagation (the operator is symmetric) ---
  const Mat g_emb_all = propagate(graphs.ui, g_node_all, hyper.layers);
  bundle.grads.user_emb += g_emb_all.topRows(num_users);
  bundle.grads.item_emb += g_emb_all.bottomRows(num_items);
  if (hyper.gamma != 0.0) {
    bundle.grads.user_emb += propagate(graphs.uu, g_node_uu, hyper.layers);
    bundle.grads.item_emb += propagate(graphs.vv, g_node_vv, hyper.layers);
  }
  return bundle;
}

}  // namespace mclsr
