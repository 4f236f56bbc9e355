#include "mclsr/model.hpp"

#include "mclsr/errors.hpp"

#include <cmath>

namespace mclsr {

namespace {

void fill_normal(Mat& m, Rng& rng, Real stddev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, stddev);
}

void fill_glorot(Mat& m, Rng& rng) {
  const Real bound = std::sqrt(6.0 / static_cast<Real>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
}

Vec softmax(const Vec& logits) {
  const Real m = logits.maxCoeff();
  Vec p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

}  // namespace

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&](const char*, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

ModelParams ModelParams::zeros(Eigen::Index users, Eigen::Index items, Eigen::Index dim) {
  ModelParams p;
  p.user_emb = Mat::Zero(users, dim);
  p.item_emb = Mat::Zero(items, dim);
  p.pos_emb = Mat::Zero(kMaxPrefixLen, dim);
  p.attn_hidden = Mat::Zero(4 * dim, dim);
  p.attn_score = Vec::Zero(4 * dim);
  p.query_transform = Mat::Zero(dim, dim);
  for (ProjectionHead* head : {&p.interest_head, &p.feature_head}) {
    head->w_in = Mat::Zero(dim, dim);
    head->b_in = Vec::Zero(dim);
    head->w_out = Mat::Zero(dim, dim);
    head->b_out = Vec::Zero(dim);
  }
  return p;
}

ModelParams ModelParams::init(Eigen::Index users, Eigen::Index items, Eigen::Index dim,
                              Rng& rng) {
  if (users < 1 || items < 1 || dim < 1) throw ParamError("init: empty model dimensions");
  ModelParams p = zeros(users, items, dim);
  fill_normal(p.user_emb, rng, 0.01);
  fill_normal(p.item_emb, rng, 0.01);
  fill_normal(p.pos_emb, rng, 0.01);
  fill_glorot(p.attn_hidden, rng);
  for (Eigen::Index i = 0; i < p.attn_score.size(); ++i) p.attn_score[i] = rng.normal(0.0, 0.01);
  fill_glorot(p.query_transform, rng);
  for (ProjectionHead* head : {&p.interest_head, &p.feature_head}) {
    fill_glorot(head->w_in, rng);
    fill_glorot(head->w_out, rng);
  }
  return p;
}

AttentionOut current_interest(const ModelParams& params, std::span<const ItemIndex> prefix,
                              bool attend_positioned) {
  const Eigen::Index n = static_cast<Eigen::Index>(prefix.size());
  if (n < 1) throw ParamError("current_interest: empty prefix");
  if (n > kMaxPrefixLen) throw ParamError("current_interest: prefix longer than position table");
  const Eigen::Index d = params.dim();

  Mat items(n, d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const ItemIndex v = prefix[static_cast<std::size_t>(j)];
    if (v < 0 || v >= params.num_items()) throw IndexError("current_interest: item out of range");
    items.row(j) = params.item_emb.row(v);
  }
  const Mat positioned = items + params.pos_emb.topRows(n);

  // logits_j = attn_score . tanh(attn_hidden positioned_j)
  const Mat hidden = (positioned * params.attn_hidden.transpose()).array().tanh().matrix();
  const Vec logits = hidden * params.attn_score;
  AttentionOut out;
  out.weights = softmax(logits);
  out.interest = attend_positioned ? Vec(positioned.transpose() * out.weights)
                                   : Vec(items.transpose() * out.weights);
  return out;
}

AttentionOut general_interest(const ModelParams& params, const NodeFeatures& feats,
                              UserIndex user, std::span<const ItemIndex> prefix) {
  const Eigen::Index n = static_cast<Eigen::Index>(prefix.size());
  if (n < 1) throw ParamError("general_interest: empty prefix");
  if (user < 0 || user >= feats.num_users)
    throw IndexError("general_interest: user index out of range");
  const Eigen::Index d = params.dim();
  const Eigen::Index items_off = feats.num_users;

  Mat item_feats(n, d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const ItemIndex v = prefix[static_cast<std::size_t>(j)];
    if (v < 0 || items_off + v >= feats.ui_all.rows())
      throw IndexError("general_interest: item out of range");
    item_feats.row(j) = feats.ui_all.row(items_off + v);
  }
  const Vec user_feat = feats.ui_all.row(user);
  const Vec query = (params.query_transform * user_feat).array().tanh().matrix();
  const Vec logits = item_feats * query;
  AttentionOut out;
  out.weights = softmax(logits);
  out.interest = item_feats.transpose() * out.weights;
  return out;
}

NodeFeatures node_features(const ModelParams& params, const Graphs& graphs, int layers) {
  if (graphs.ui.size() != params.num_users() + params.num_items())
    throw ShapeError("node_features: user-item graph size mismatch");
  if (graphs.uu.size() != params.num_users())
    throw ShapeError("node_features: user-user graph size mismatch");
  if (graphs.vv.size() != params.num_items())
    throw ShapeError("node_features: item-item graph size mismatch");

  Mat all(params.num_users() + params.num_items(), params.dim());
  all.topRows(params.num_users()) = params.user_emb;
  all.bottomRows(params.num_items()) = params.item_emb;

  NodeFeatures feats;
  feats.num_users = params.num_users();
  feats.ui_all = propagate(graphs.ui, all, layers);
  feats.uu_users = propagate(graphs.uu, params.user_emb, layers);
  feats.vv_items = propagate(graphs.vv, params.item_emb, layers);
  return feats;
}

Mat project(const ProjectionHead& head, Eigen::Ref<const Mat> x) {
  if (x.cols() != head.w_in.cols()) throw ShapeError("project: feature width mismatch");
  Mat hidden = x * head.w_in.transpose();
  hidden.rowwise() += head.b_in.transpose();
  const Mat activated = hidden.unaryExpr([](Real v) { return v > 0.0 ? v : std::expm1(v); });
  Mat out = activated * head.w_out.transpose();
  out.rowwise() += head.b_out.transpose();
  return out;
}

}  // namespace mclsr
