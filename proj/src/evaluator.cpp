#include "mclsr/evaluator.hpp"

#include "mclsr/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace mclsr {

namespace {

bool contains(std::span<const ItemIndex> sorted, ItemIndex v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

}  // namespace

std::vector<ItemIndex> top_n(const Vec& query, Eigen::Ref<const Mat> item_emb, int n,
                             std::span<const ItemIndex> exclude) {
  if (n < 1) throw ParamError("top_n: n must be >= 1");
  if (query.size() != item_emb.cols()) throw ShapeError("top_n: query dimension mismatch");
  const Eigen::Index v = item_emb.rows();
  const Vec scores = item_emb * query;

  std::vector<bool> excluded(static_cast<std::size_t>(v), false);
  for (const ItemIndex e : exclude)
    if (e >= 0 && e < v) excluded[static_cast<std::size_t>(e)] = true;

  std::vector<ItemIndex> candidates;
  candidates.reserve(static_cast<std::size_t>(v));
  for (ItemIndex i = 0; i < v; ++i)
    if (!excluded[static_cast<std::size_t>(i)]) candidates.push_back(i);

  const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(n));
  std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                    [&](ItemIndex a, ItemIndex b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  candidates.resize(keep);
  return candidates;
}

Real recall_at(std::span<const ItemIndex> ranked, std::span<const ItemIndex> gt, int n) {
  if (gt.empty()) throw ParamError("recall_at: empty ground truth");
  const std::size_t limit = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(n));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < limit; ++r)
    if (contains(gt, ranked[r])) ++hits;
  return static_cast<Real>(hits) / static_cast<Real>(gt.size());
}

Real ndcg_at(std::span<const ItemIndex> ranked, std::span<const ItemIndex> gt, int n) {
  if (gt.empty()) throw ParamError("ndcg_at: empty ground truth");
  const std::size_t limit = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(n));
  Real dcg = 0.0;
  for (std::size_t r = 0; r < limit; ++r)
    if (contains(gt, ranked[r])) dcg += 1.0 / std::log2(static_cast<Real>(r) + 2.0);
  const std::size_t ideal = std::min<std::size_t>(gt.size(), static_cast<std::size_t>(n));
  Real idcg = 0.0;
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<Real>(r) + 2.0);
  return dcg / idcg;
}

int hit_at(std::span<const ItemIndex> ranked, std::span<const ItemIndex> gt, int n) {
  const std::size_t limit = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < limit; ++r)
    if (contains(gt, ranked[r])) return 1;
  return 0;
}

namespace {

Real lookup(const MetricsReport& rep, const std::vector<Real>& values, int n) {
  for (std::size_t i = 0; i < rep.cutoffs.size(); ++i)
    if (rep.cutoffs[i] == n) return values[i];
  throw ParamError("metrics report has no cutoff " + std::to_string(n));
}

}  // namespace

Real MetricsReport::recall_at_cutoff(int n) const { return lookup(*this, recall, n); }
Real MetricsReport::ndcg_at_cutoff(int n) const { return lookup(*this, ndcg, n); }
Real MetricsReport::hit_at_cutoff(int n) const { return lookup(*this, hit, n); }

MetricsReport evaluate(const ModelParams& params, const EvalSet& set,
                       std::span<const int> cutoffs, bool allow_repeats,
                       bool attend_positioned) {
  if (set.cases.empty()) throw ParamError("evaluate: no cases");
  if (cutoffs.empty()) throw ParamError("evaluate: no cutoffs");
  MetricsReport rep;
  rep.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  rep.recall.assign(cutoffs.size(), 0.0);
  rep.ndcg.assign(cutoffs.size(), 0.0);
  rep.hit.assign(cutoffs.size(), 0.0);
  rep.skipped = set.skipped;

  const int max_cutoff = *std::max_element(cutoffs.begin(), cutoffs.end());
  const std::vector<ItemIndex> no_exclusions;
  for (const EvalCase& c : set.cases) {
    const std::size_t n = c.prefix.size();
    const std::size_t window = std::min<std::size_t>(n, kMaxPrefixLen);
    const std::span<const ItemIndex> encode_prefix(c.prefix.data() + (n - window), window);
    const AttentionOut out = current_interest(params, encode_prefix, attend_positioned);
    const auto ranked = top_n(out.interest, params.item_emb, max_cutoff,
                              allow_repeats ? std::span<const ItemIndex>(no_exclusions)
                                            : std::span<const ItemIndex>(c.prefix));
    for (std::size_t i = 0; i < rep.cutoffs.size(); ++i) {
      rep.recall[i] += recall_at(ranked, c.ground_truth, rep.cutoffs[i]);
      rep.ndcg[i] += ndcg_at(ranked, c.ground_truth, rep.cutoffs[i]);
      rep.hit[i] += static_cast<Real>(hit_at(ranked, c.ground_truth, rep.cutoffs[i]));
    }
    ++rep.evaluated;
  }
  for (std::size_t i = 0; i < rep.cutoffs.size(); ++i) {
    rep.recall[i] /= rep.evaluated;
    rep.ndcg[i] /= rep.evaluated;
    rep.hit[i] /= rep.evaluated;
  }
  return rep;
}

SvdExportInfo svd_export(Eigen::Ref<const Mat> item_emb,
                         const std::vector<std::string>& item_ids, const std::string& path) {
  if (item_emb.rows() < 2) throw ParamError("svd_export: need at least two items");
  if (static_cast<std::size_t>(item_emb.rows()) != item_ids.size())
    throw ShapeError("svd_export: id count does not match embedding rows");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(item_emb, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  SvdExportInfo info;
  Mat coords = item_emb * svd.matrixV().leftCols(std::min<Eigen::Index>(2, sv.size()));
  if (coords.cols() < 2) {
    coords.conservativeResize(Eigen::NoChange, 2);
    coords.col(1).setZero();
    info.rank_deficient = true;
  } else if (sv.size() < 2 || sv[1] <= sv[0] * 1e-12) {
    coords.col(1).setZero();
    info.rank_deficient = true;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    out << item_ids[static_cast<std::size_t>(i)];
    for (int j = 0; j < 2; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", coords(i, j));
      out << '\t' << buf;
    }
    out << '\n';
  }
  return info;
}

}  // namespace mclsr
