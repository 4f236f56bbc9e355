#include "mclsr/graphs.hpp"

#include "mclsr/errors.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <sstream>

using namespace mclsr;

namespace {

SpMat sparse_from_dense(const Eigen::MatrixXd& d) {
  std::vector<Eigen::Triplet<Real>> t;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      if (d(i, j) != 0.0) t.emplace_back(i, j, d(i, j));
  SpMat m(d.rows(), d.cols());
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

Eigen::MatrixXd dense(const SpMat& m) { return Eigen::MatrixXd(m); }

}  // namespace

TEST_CASE("interaction matrix counts training events only") {
  Corpus corpus;
  corpus.user_ids = {"u1", "u2"};
  corpus.user_index = {{"u1", 0}, {"u2", 1}};
  corpus.item_ids = {"a", "b"};
  corpus.item_index = {{"a", 0}, {"b", 1}};
  corpus.sequences = {{0, 1, 0}, {1, 1}};
  corpus.split = {Split::Train, Split::Test};
  const SpMat m = interaction_matrix(corpus);
  CHECK(m.coeff(0, 0) == 2.0);
  CHECK(m.coeff(0, 1) == 1.0);
  CHECK(dense(m).row(1).isZero());

  corpus.split = {Split::Test, Split::Test};
  CHECK_THROWS_AS(interaction_matrix(corpus), EmptyCorpusError);
}

TEST_CASE("single-edge bipartite graph normalizes to one") {
  Eigen::MatrixXd m(1, 1);
  m << 3.0;
  const GraphView view = user_item_graph(sparse_from_dense(m));
  CHECK(view.adjacency.coeff(0, 1) == 3.0);
  CHECK(view.adjacency.coeff(1, 0) == 3.0);
  CHECK(view.normalized.coeff(0, 1) == doctest::Approx(1.0));
  CHECK(view.degree[0] == 3.0);
  CHECK(view.isolated.empty());
}

TEST_CASE("bipartite degrees are weighted row and column sums") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 1, 0, 1;
  const GraphView view = user_item_graph(sparse_from_dense(m));
  CHECK(view.degree[0] == 2.0);  // user 0
  CHECK(view.degree[1] == 1.0);  // user 1
  CHECK(view.degree[2] == 1.0);  // item 0
  CHECK(view.degree[3] == 2.0);  // item 1
}

TEST_CASE("all-zero user row leaves the node isolated") {
  Eigen::MatrixXd m(2, 1);
  m << 0, 2;
  const GraphView view = user_item_graph(sparse_from_dense(m));
  REQUIRE(view.isolated.size() == 1);
  CHECK(view.isolated[0] == 0);
}

TEST_CASE("co-action equals the dense product with the diagonal removed") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 1, 0, 1;
  const SpMat c = co_action_matrix(sparse_from_dense(m), Side::User);
  CHECK(c.coeff(0, 1) == 1.0);
  CHECK(c.coeff(1, 0) == 1.0);
  CHECK(c.coeff(0, 0) == 0.0);
  CHECK(c.nonZeros() == 2);
}

TEST_CASE("co-action oracle equivalence on random corpora") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int users = 2 + static_cast<int>(rng.bounded(19));
    const int items = 2 + static_cast<int>(rng.bounded(19));
    const Corpus corpus = testsupport::random_corpus(rng, users, items);
    const SpMat m = interaction_matrix(corpus);
    const Eigen::MatrixXd md = dense(m);
    for (const Side side : {Side::User, Side::Item}) {
      const SpMat c = co_action_matrix(m, side);
      const Eigen::MatrixXd want = oracle::dense_co_action(md, side == Side::User);
      CHECK(dense(c).isApprox(want, 1e-12));
    }
  }
}

TEST_CASE("orthogonal users produce an empty co-action matrix") {
  Eigen::MatrixXd m(2, 4);
  m << 1, 1, 0, 0, 0, 0, 2, 1;
  CHECK(co_action_matrix(sparse_from_dense(m), Side::User).nonZeros() == 0);
  Eigen::MatrixXd single(1, 3);
  single << 1, 2, 1;
  CHECK(co_action_matrix(sparse_from_dense(single), Side::User).nonZeros() == 0);
}

TEST_CASE("keep-diagonal flag retains self co-action") {
  Eigen::MatrixXd m(1, 2);
  m << 1, 2;
  const SpMat c = co_action_matrix(sparse_from_dense(m), Side::User, true);
  CHECK(c.coeff(0, 0) == 5.0);
}

TEST_CASE("top-k keeps whole rows when k is large") {
  Eigen::MatrixXd c(3, 3);
  c << 0, 2, 1, 2, 0, 4, 1, 4, 0;
  const GraphView view = topk_filter(sparse_from_dense(c), 50);
  CHECK(view.adjacency.nonZeros() == 6);
}

TEST_CASE("top-k tie breaks toward the smaller column") {
  // row 0: weights 5 (col 1), 5 (col 2), 1 (col 3); k=2 keeps cols 1 and 2
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(4, 4);
  c(0, 1) = c(1, 0) = 5;
  c(0, 2) = c(2, 0) = 5;
  c(0, 3) = c(3, 0) = 1;
  const GraphView view = topk_filter(sparse_from_dense(c), 2);
  CHECK(view.adjacency.coeff(0, 1) == 5.0);
  CHECK(view.adjacency.coeff(0, 2) == 5.0);
  CHECK(view.adjacency.coeff(0, 3) == 0.0);
  CHECK(view.adjacency.coeff(3, 0) == 0.0);
}

TEST_CASE("one-sided top-k survival still yields both directions") {
  // Edge (0,1) survives row 0 but loses row 1's competition.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(4, 4);
  c(0, 1) = c(1, 0) = 1;
  c(1, 2) = c(2, 1) = 5;
  c(1, 3) = c(3, 1) = 5;
  const GraphView view = topk_filter(sparse_from_dense(c), 2);
  CHECK(view.adjacency.coeff(0, 1) == 1.0);
  CHECK(view.adjacency.coeff(1, 0) == 1.0);
  const Eigen::MatrixXd a = dense(view.adjacency);
  CHECK(a.isApprox(a.transpose()));
}

TEST_CASE("top-k rejects nonpositive k") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(topk_filter(sparse_from_dense(c), 0), ParamError);
}

TEST_CASE("propagation on a swap graph exchanges rows") {
  Eigen::MatrixXd adj(2, 2);
  adj << 0, 1, 1, 0;
  GraphView view = topk_filter(sparse_from_dense(adj), 5);
  Mat x(2, 2);
  x << 1, 0, 0, 1;
  const Mat once = propagate(view, x, 1);
  CHECK(once(0, 0) == 0.0);
  CHECK(once(0, 1) == 1.0);
  CHECK(once(1, 0) == 1.0);
  CHECK(propagate(view, x, 0) == x);

  // doubled weights normalize back to the same swap
  Eigen::MatrixXd adj2(2, 2);
  adj2 << 0, 2, 2, 0;
  GraphView view2 = topk_filter(sparse_from_dense(adj2), 5);
  CHECK(view2.normalized.coeff(0, 1) == doctest::Approx(1.0));
  CHECK(propagate(view2, x, 1).isApprox(once));
}

TEST_CASE("propagation rejects mismatched shapes") {
  Eigen::MatrixXd adj(2, 2);
  adj << 0, 1, 1, 0;
  GraphView view = topk_filter(sparse_from_dense(adj), 5);
  CHECK_THROWS_AS(propagate(view, Mat::Zero(3, 2), 1), ShapeError);
}

TEST_CASE("isolated nodes keep their features through propagation") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
  c(0, 1) = c(1, 0) = 2;
  const GraphView view = topk_filter(sparse_from_dense(c), 5);
  REQUIRE(view.isolated == std::vector<Eigen::Index>{2});
  Mat x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  const Mat out = propagate(view, x, 3);
  CHECK(out(2, 0) == 5.0);
  CHECK(out(2, 1) == 6.0);
}

TEST_CASE("normalized adjacency is non-expansive") {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const Corpus corpus =
        testsupport::random_corpus(rng, 3 + static_cast<int>(rng.bounded(10)),
                                   3 + static_cast<int>(rng.bounded(10)));
    const Graphs graphs = build_graphs(corpus, 1 + static_cast<int>(rng.bounded(6)));
    for (const GraphView* view : {&graphs.ui, &graphs.uu, &graphs.vv}) {
      if (view->adjacency.nonZeros() == 0) continue;
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd((Eigen::MatrixXd(view->normalized)));
      CHECK(svd.singularValues()[0] <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("graph symmetry holds for every built view") {
  Rng rng(8);
  const Corpus corpus = testsupport::random_corpus(rng, 12, 9);
  const Graphs graphs = build_graphs(corpus, 3);
  for (const GraphView* view : {&graphs.ui, &graphs.uu, &graphs.vv}) {
    const Eigen::MatrixXd a = dense(view->adjacency);
    CHECK(a.isApprox(a.transpose()));
  }
}

TEST_CASE("relabeling nodes permutes propagation outputs identically") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng.bounded(8));
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
    for (int e = 0; e < 2 * n; ++e) {
      const int i = static_cast<int>(rng.bounded(n));
      const int j = static_cast<int>(rng.bounded(n));
      if (i == j) continue;
      const Real w = 1.0 + static_cast<Real>(rng.bounded(5));
      c(i, j) = c(j, i) = w;
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Eigen::MatrixXd cp(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cp(perm[i], perm[j]) = c(i, j);

    Mat x(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    Mat xp(n, 3);
    for (int i = 0; i < n; ++i) xp.row(perm[i]) = x.row(i);

    const GraphView view = topk_filter(sparse_from_dense(c), n);
    const GraphView view_p = topk_filter(sparse_from_dense(cp), n);
    const Mat out = propagate(view, x, 2);
    const Mat out_p = propagate(view_p, xp, 2);
    for (int i = 0; i < n; ++i) CHECK(out_p.row(perm[i]).isApprox(out.row(i), 1e-12));
  }
}

TEST_CASE("removing holdout users does not change any graph") {
  Rng rng(10);
  Corpus corpus = testsupport::random_corpus(rng, 15, 12);
  const Graphs before = build_graphs(corpus, 4);
  Corpus stripped = corpus;
  for (std::size_t u = 0; u < stripped.sequences.size(); ++u)
    if (stripped.split[u] != Split::Train) stripped.sequences[u].clear();
  const Graphs after = build_graphs(stripped, 4);
  for (const auto [lhs, rhs] : {std::pair{&before.ui, &after.ui},
                                std::pair{&before.uu, &after.uu},
                                std::pair{&before.vv, &after.vv}}) {
    CHECK(dense(lhs->adjacency) == dense(rhs->adjacency));
    CHECK(dense(lhs->normalized) == dense(rhs->normalized));
  }
}

TEST_CASE("graph dump lists id-keyed triples") {
  Corpus corpus;
  corpus.user_ids = {"alice"};
  corpus.user_index = {{"alice", 0}};
  corpus.item_ids = {"apple"};
  corpus.item_index = {{"apple", 0}};
  corpus.sequences = {{0, 0}};
  corpus.split = {Split::Train};
  const Graphs graphs = build_graphs(corpus, 5);
  std::ostringstream out;
  dump_graph(graphs.ui, corpus, out);
  CHECK(out.str() == "alice\tapple\t2\napple\talice\t2\n");
}
