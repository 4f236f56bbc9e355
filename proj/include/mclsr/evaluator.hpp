#pragma once

#include "mclsr/corpus.hpp"
#include "mclsr/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace mclsr {

/// Items ranked by descending inner product with the query; ties go to the
/// smaller item index. Excluded items are removed before ranking; if fewer
/// than n candidates remain, all of them are returned.
std::vector<ItemIndex> top_n(const Vec& query, Eigen::Ref<const Mat> item_emb, int n,
                             std::span<const ItemIndex> exclude);

/// `gt` must be sorted ascending in all three metrics.
Real recall_at(std::span<const ItemIndex> ranked, std::span<const ItemIndex> gt, int n);
Real ndcg_at(std::span<const ItemIndex> ranked, std::span<const ItemIndex> gt, int n);
int hit_at(std::span<const ItemIndex> ranked, std::span<const ItemIndex> gt, int n);

/// Per-user averaged metrics; values are kept as fractions in [0, 1].
/// Printed reports scale by 100 to match the usual percentage convention.
struct MetricsReport {
  std::vector<int> cutoffs;
  std::vector<Real> recall;  // parallel to cutoffs
  std::vector<Real> ndcg;
  std::vector<Real> hit;
  int evaluated = 0;
  int skipped = 0;

  Real recall_at_cutoff(int n) const;
  Real ndcg_at_cutoff(int n) const;
  Real hit_at_cutoff(int n) const;
};

/// Scores every case through the sequence-view interest (valid for users
/// unseen at training time) and averages the ranking metrics.
MetricsReport evaluate(const ModelParams& params, const EvalSet& set,
                       std::span<const int> cutoffs, bool allow_repeats = false,
                       bool attend_positioned = false);

struct SvdExportInfo {
  bool rank_deficient = false;
};

/// Projects item embeddings onto their top-2 right-singular directions and
/// writes `item-id<TAB>x<TAB>y` lines. A rank-deficient input zeroes the
/// second coordinate and reports it.
SvdExportInfo svd_export(Eigen::Ref<const Mat> item_emb,
                         const std::vector<std::string>& item_ids, const std::string& path);

}  // namespace mclsr
