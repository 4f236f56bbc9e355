#pragma once

#include "mclsr/corpus.hpp"
#include "mclsr/types.hpp"

#include <iosfwd>
#include <vector>

namespace mclsr {

enum class Side { User, Item };

/// Symmetric weighted graph plus its degree-normalized propagation matrix.
/// For the joint user-item graph, users occupy indices [0, num_users) and
/// items [num_users, num_users + num_items); the one-sided graphs set the
/// other count to zero.
struct GraphView {
  SpMat adjacency;                 // n x n, symmetric, strictly positive weights
  SpMat normalized;                // w_ij / sqrt(d_i d_j), same sparsity
  Vec degree;                      // weighted degrees, length n
  std::vector<Eigen::Index> isolated;  // zero-degree nodes, ascending
  Eigen::Index num_users = 0;
  Eigen::Index num_items = 0;

  Eigen::Index size() const { return adjacency.rows(); }
};

struct Graphs {
  GraphView ui;  // bipartite user-item graph
  GraphView uu;  // user co-action graph
  GraphView vv;  // item co-action graph
};

/// |U| x |V| interaction counts from training users only.
SpMat interaction_matrix(const Corpus& corpus);

/// Square bipartite graph over users and items with symmetric normalization.
GraphView user_item_graph(const SpMat& interactions);

/// M M^T (user side) or M^T M (item side); the diagonal is dropped unless
/// `keep_diagonal`, since a self edge carries no co-action meaning.
SpMat co_action_matrix(const SpMat& interactions, Side side, bool keep_diagonal = false);

/// Keeps each row's k largest weights (ties to the smaller column index),
/// then symmetrizes by union with the larger weight of the two directions.
GraphView topk_filter(const SpMat& co_action, int k);

/// Repeated normalized-adjacency smoothing, X <- N X, `layers` times.
/// Zero-degree rows bypass each layer and keep their current features.
Mat propagate(const GraphView& view, Eigen::Ref<const Mat> features, int layers);

/// All three views from the training split of `corpus`.
Graphs build_graphs(const Corpus& corpus, int topk_neighbors, bool keep_co_diagonal = false);

/// Audit dump: one `rowid<TAB>colid<TAB>weight` adjacency triple per line,
/// keyed by opaque ids so the bytes do not depend on dense index assignment.
void dump_graph(const GraphView& view, const Corpus& corpus, std::ostream& out);
void dump_graphs(const Graphs& graphs, const Corpus& corpus, const std::string& dir);

}  // namespace mclsr
