#include "mclsr/graphs.hpp"

#include "mclsr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <vector>

namespace mclsr {

namespace {

using Triplet = Eigen::Triplet<Real>;

GraphView make_view(SpMat adjacency, Eigen::Index num_users, Eigen::Index num_items) {
  GraphView view;
  view.num_users = num_users;
  view.num_items = num_items;
  const Eigen::Index n = adjacency.rows();
  view.degree = Vec::Zero(n);
  for (Eigen::Index i = 0; i < adjacency.outerSize(); ++i)
    for (SpMat::InnerIterator it(adjacency, i); it; ++it) view.degree[it.row()] += it.value();

  view.normalized = adjacency;
  for (Eigen::Index i = 0; i < view.normalized.outerSize(); ++i)
    for (SpMat::InnerIterator it(view.normalized, i); it; ++it)
      it.valueRef() /= std::sqrt(view.degree[it.row()] * view.degree[it.col()]);

  for (Eigen::Index i = 0; i < n; ++i)
    if (view.degree[i] == 0.0) view.isolated.push_back(i);

  view.adjacency = std::move(adjacency);
  return view;
}

}  // namespace

SpMat interaction_matrix(const Corpus& corpus) {
  bool has_train = false;
  std::vector<Triplet> triplets;
  for (UserIndex u = 0; u < static_cast<UserIndex>(corpus.sequences.size()); ++u) {
    if (corpus.split[u] != Split::Train) continue;
    has_train = true;
    for (const ItemIndex v : corpus.sequences[u]) triplets.emplace_back(u, v, 1.0);
  }
  if (!has_train) throw EmptyCorpusError("interaction_matrix: corpus has no training users");
  SpMat m(corpus.num_users(), corpus.num_items());
  m.setFromTriplets(triplets.begin(), triplets.end());  // duplicates sum into counts
  return m;
}

GraphView user_item_graph(const SpMat& interactions) {
  const Eigen::Index users = interactions.rows();
  const Eigen::Index items = interactions.cols();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(interactions.nonZeros()) * 2);
  for (Eigen::Index i = 0; i < interactions.outerSize(); ++i)
    for (SpMat::InnerIterator it(interactions, i); it; ++it) {
      triplets.emplace_back(it.row(), users + it.col(), it.value());
      triplets.emplace_back(users + it.col(), it.row(), it.value());
    }
  SpMat adj(users + items, users + items);
  adj.setFromTriplets(triplets.begin(), triplets.end());
  return make_view(std::move(adj), users, items);
}

SpMat co_action_matrix(const SpMat& interactions, Side side, bool keep_diagonal) {
  if (interactions.nonZeros() == 0) throw ParamError("co_action_matrix: empty interaction matrix");
  SpMat transposed = interactions.transpose();
  SpMat product = side == Side::User ? SpMat(interactions * transposed)
                                     : SpMat(transposed * interactions);
  if (!keep_diagonal)
    product.prune([](Eigen::Index r, Eigen::Index c, Real) { return r != c; });
  else
    product.prune([](Eigen::Index, Eigen::Index, Real v) { return v != 0.0; });
  return product;
}

GraphView topk_filter(const SpMat& co_action, int k) {
  if (k < 1) throw ParamError("topk_filter: k must be >= 1");
  if (co_action.rows() != co_action.cols())
    throw ShapeError("topk_filter: matrix must be square");

  const Eigen::Index n = co_action.rows();
  // Kept directed edges, deduplicated via the undirected key. The input is
  // symmetric so union-max symmetrization reduces to mirroring survivors.
  std::vector<Triplet> triplets;
  std::vector<std::pair<Eigen::Index, Real>> row;
  std::vector<std::vector<std::pair<Eigen::Index, Real>>> kept(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (SpMat::InnerIterator it(co_action, i); it; ++it) row.emplace_back(it.col(), it.value());
    const std::size_t keep = std::min<std::size_t>(row.size(), static_cast<std::size_t>(k));
    std::partial_sort(row.begin(), row.begin() + keep, row.end(),
                      [](const auto& a, const auto& b) {
                        if (a.second != b.second) return a.second > b.second;
                        return a.first < b.first;  // tie: smaller column index
                      });
    row.resize(keep);
    kept[i] = row;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& [j, w] : kept[i]) {
      if (j < i) {
        // Already emitted while processing row j if it survived there too.
        const auto& other = kept[j];
        const bool mirrored = std::any_of(other.begin(), other.end(),
                                          [&](const auto& e) { return e.first == i; });
        if (mirrored) continue;
      }
      triplets.emplace_back(i, j, w);
      if (i != j) triplets.emplace_back(j, i, w);
    }
  }
  SpMat adj(n, n);
  adj.setFromTriplets(triplets.begin(), triplets.end());
  return make_view(std::move(adj), n, 0);
}

Mat propagate(const GraphView& view, Eigen::Ref<const Mat> features, int layers) {
  if (features.rows() != view.size())
    throw ShapeError("propagate: feature rows do not match graph size");
  if (layers < 0) throw ParamError("propagate: layers must be >= 0");
  Mat x = features;
  for (int l = 0; l < layers; ++l) {
    Mat y = view.normalized * x;
    for (const Eigen::Index i : view.isolated) y.row(i) = x.row(i);
    x = std::move(y);
  }
  return x;
}

Graphs build_graphs(const Corpus& corpus, int topk_neighbors, bool keep_co_diagonal) {
  const SpMat m = interaction_matrix(corpus);
  Graphs graphs;
  graphs.ui = user_item_graph(m);
  graphs.uu = topk_filter(co_action_matrix(m, Side::User, keep_co_diagonal), topk_neighbors);
  graphs.vv = topk_filter(co_action_matrix(m, Side::Item, keep_co_diagonal), topk_neighbors);
  graphs.uu.num_users = corpus.num_users();
  graphs.uu.num_items = 0;
  graphs.vv.num_users = 0;
  graphs.vv.num_items = corpus.num_items();
  return graphs;
}

void dump_graph(const GraphView& view, const Corpus& corpus, std::ostream& out) {
  const auto node_id = [&](Eigen::Index i) -> const std::string& {
    if (view.num_users > 0 && i < view.num_users)
      return corpus.user_ids[static_cast<std::size_t>(i)];
    if (view.num_users > 0)
      return corpus.item_ids[static_cast<std::size_t>(i - view.num_users)];
    return corpus.item_ids[static_cast<std::size_t>(i)];
  };
  char buf[64];
  for (Eigen::Index i = 0; i < view.adjacency.outerSize(); ++i)
    for (SpMat::InnerIterator it(view.adjacency, i); it; ++it) {
      std::snprintf(buf, sizeof(buf), "%.17g", it.value());
      out << node_id(it.row()) << '\t' << node_id(it.col()) << '\t' << buf << '\n';
    }
}

void dump_graphs(const Graphs& graphs, const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const GraphView& view, const char* name) {
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) throw IoError(std::string("cannot open graph dump: ") + dir + "/" + name);
    dump_graph(view, corpus, out);
  };
  write(graphs.ui, "ui.graph.tsv");
  write(graphs.uu, "uu.graph.tsv");
  write(graphs.vv, "vv.graph.tsv");
}

}  // namespace mclsr
