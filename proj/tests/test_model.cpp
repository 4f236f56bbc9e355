#include "mclsr/model.hpp"

#include "mclsr/errors.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace mclsr;

namespace {

ModelParams small_params(Eigen::Index users, Eigen::Index items, Eigen::Index dim,
                         std::uint64_t seed = 3) {
  Rng rng(seed);
  return ModelParams::init(users, items, dim, rng);
}

Graphs small_graphs(const Corpus& corpus) { return build_graphs(corpus, 50); }

}  // namespace

TEST_CASE("singleton prefix attends with weight one") {
  const ModelParams params = small_params(2, 5, 4);
  const ItemIndex prefix[] = {3};
  const AttentionOut out = current_interest(params, prefix);
  REQUIRE(out.weights.size() == 1);
  CHECK(out.weights[0] == doctest::Approx(1.0));
  CHECK(out.interest.isApprox(params.item_emb.row(3).transpose()));
}

TEST_CASE("zero attention weights give uniform attention") {
  ModelParams params = small_params(2, 6, 4);
  params.attn_hidden.setZero();  // tanh(0) = 0 -> all logits equal
  const ItemIndex prefix[] = {0, 2, 4, 5};
  const AttentionOut out = current_interest(params, prefix);
  for (int j = 0; j < 4; ++j) CHECK(out.weights[j] == doctest::Approx(0.25));
  Vec mean = Vec::Zero(4);
  for (const ItemIndex v : prefix) mean += params.item_emb.row(v).transpose();
  CHECK(out.interest.isApprox(Vec(mean / 4.0), 1e-12));
}

TEST_CASE("attention weights sum to one") {
  const ModelParams params = small_params(2, 30, 8, 11);
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<ItemIndex> prefix;
    const int n = 1 + static_cast<int>(rng.bounded(kMaxPrefixLen));
    for (int j = 0; j < n; ++j) prefix.push_back(static_cast<ItemIndex>(rng.bounded(30)));
    const AttentionOut out = current_interest(params, prefix);
    CHECK(out.weights.sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.weights.minCoeff() >= 0.0);
    CHECK(out.interest.size() == 8);
  }
}

TEST_CASE("current interest rejects empty and overlong prefixes") {
  const ModelParams params = small_params(2, 5, 4);
  CHECK_THROWS_AS(current_interest(params, {}), ParamError);
  std::vector<ItemIndex> too_long(kMaxPrefixLen + 1, 0);
  CHECK_THROWS_AS(current_interest(params, too_long), ParamError);
  const ItemIndex bad[] = {9};
  CHECK_THROWS_AS(current_interest(params, bad), IndexError);
}

TEST_CASE("current interest ignores user embeddings entirely") {
  ModelParams params = small_params(3, 6, 4);
  const ItemIndex prefix[] = {1, 4, 2};
  const AttentionOut before = current_interest(params, prefix);
  params.user_emb.setConstant(123.0);
  const AttentionOut after = current_interest(params, prefix);
  CHECK(before.interest == after.interest);
  CHECK(before.weights == after.weights);
}

TEST_CASE("positioned attention flag switches the pooled rows") {
  const ModelParams params = small_params(2, 6, 4);
  const ItemIndex prefix[] = {1, 3};
  const AttentionOut plain = current_interest(params, prefix, false);
  const AttentionOut positioned = current_interest(params, prefix, true);
  CHECK(plain.weights.isApprox(positioned.weights));
  Vec expected = Vec::Zero(4);
  for (int j = 0; j < 2; ++j)
    expected += plain.weights[j] *
                (params.item_emb.row(prefix[j]) + params.pos_emb.row(j)).transpose();
  CHECK(positioned.interest.isApprox(expected, 1e-12));
  CHECK(!plain.interest.isApprox(positioned.interest, 1e-9));
}

TEST_CASE("general interest of a singleton is that item's propagated feature") {
  Rng rng(21);
  const Corpus corpus = testsupport::random_corpus(rng, 6, 7);
  const ModelParams params = small_params(6, 7, 4);
  const NodeFeatures feats = node_features(params, small_graphs(corpus), 2);
  const ItemIndex prefix[] = {2};
  const AttentionOut out = general_interest(params, feats, 0, prefix);
  CHECK(out.weights[0] == doctest::Approx(1.0));
  CHECK(out.interest.isApprox(feats.ui_all.row(feats.num_users + 2).transpose(), 1e-12));
}

TEST_CASE("zero query transform averages the prefix features") {
  Rng rng(22);
  const Corpus corpus = testsupport::random_corpus(rng, 6, 7);
  ModelParams params = small_params(6, 7, 4);
  params.query_transform.setZero();
  const NodeFeatures feats = node_features(params, small_graphs(corpus), 1);
  const ItemIndex prefix[] = {0, 3, 5};
  const AttentionOut out = general_interest(params, feats, 2, prefix);
  Vec mean = Vec::Zero(4);
  for (const ItemIndex v : prefix)
    mean += feats.ui_all.row(feats.num_users + v).transpose();
  CHECK(out.interest.isApprox(Vec(mean / 3.0), 1e-12));
}

TEST_CASE("repeated prefix item pins the convex combination") {
  Rng rng(23);
  const Corpus corpus = testsupport::random_corpus(rng, 6, 7);
  const ModelParams params = small_params(6, 7, 4, 40);
  const NodeFeatures feats = node_features(params, small_graphs(corpus), 2);
  const ItemIndex prefix[] = {4, 4, 4};
  const AttentionOut out = general_interest(params, feats, 1, prefix);
  CHECK(out.interest.isApprox(feats.ui_all.row(feats.num_users + 4).transpose(), 1e-12));
}

TEST_CASE("general interest validates the user index") {
  Rng rng(24);
  const Corpus corpus = testsupport::random_corpus(rng, 4, 5);
  const ModelParams params = small_params(4, 5, 4);
  const NodeFeatures feats = node_features(params, small_graphs(corpus), 1);
  const ItemIndex prefix[] = {1};
  CHECK_THROWS_AS(general_interest(params, feats, 77, prefix), IndexError);
}

TEST_CASE("zero layers return the raw embeddings") {
  Rng rng(25);
  const Corpus corpus = testsupport::random_corpus(rng, 5, 6);
  const ModelParams params = small_params(5, 6, 4);
  const NodeFeatures feats = node_features(params, small_graphs(corpus), 0);
  CHECK(feats.ui_users() == params.user_emb);
  CHECK(feats.ui_items() == params.item_emb);
  CHECK(feats.uu_users == params.user_emb);
  CHECK(feats.vv_items == params.item_emb);
}

TEST_CASE("node features reject mismatched graphs") {
  Rng rng(26);
  const Corpus corpus = testsupport::random_corpus(rng, 5, 6);
  const Graphs graphs = small_graphs(corpus);
  const ModelParams params = small_params(9, 6, 4);
  CHECK_THROWS_AS(node_features(params, graphs, 1), ShapeError);
}

TEST_CASE("projection is identity for identity weights on nonnegative input") {
  ProjectionHead head;
  head.w_in = Mat::Identity(3, 3);
  head.w_out = Mat::Identity(3, 3);
  head.b_in = Vec::Zero(3);
  head.b_out = Vec::Zero(3);
  Mat x(2, 3);
  x << 0.5, 1.0, 0.0, 2.0, 0.25, 3.0;
  CHECK(project(head, x).isApprox(x, 1e-12));
}

TEST_CASE("projection of zero input is a bias expression") {
  Rng rng(27);
  ProjectionHead head;
  head.w_in = Mat(2, 2);
  head.w_in << 1.0, -2.0, 0.5, 0.25;
  head.w_out = Mat(2, 2);
  head.w_out << 2.0, 0.0, 1.0, 1.0;
  head.b_in = Vec(2);
  head.b_in << -1.0, 0.5;
  head.b_out = Vec(2);
  head.b_out << 0.1, -0.2;
  const Mat out = project(head, Mat::Zero(1, 2));
  // w_out * elu(b_in) + b_out, computed by hand
  Vec elu_b(2);
  elu_b << std::expm1(-1.0), 0.5;
  const Vec expected = head.w_out * elu_b + head.b_out;
  CHECK(out.row(0).transpose().isApprox(expected, 1e-12));

  ProjectionHead zero;
  zero.w_in = Mat::Zero(2, 2);
  zero.w_out = Mat::Zero(2, 2);
  zero.b_in = Vec::Zero(2);
  zero.b_out = Vec(2);
  zero.b_out << 3.0, 4.0;
  const Mat broadcast = project(zero, Mat::Random(5, 2));
  for (int r = 0; r < 5; ++r) {
    CHECK(broadcast(r, 0) == 3.0);
    CHECK(broadcast(r, 1) == 4.0);
  }
}

TEST_CASE("relabeling users and items permutes node features identically") {
  Rng rng(28);
  const Corpus corpus = testsupport::random_corpus(rng, 7, 6);
  const ModelParams params = small_params(7, 6, 4, 91);

  // permute users and items jointly
  std::vector<int> uperm(7), vperm(6);
  std::iota(uperm.begin(), uperm.end(), 0);
  std::iota(vperm.begin(), vperm.end(), 0);
  rng.shuffle(uperm);
  rng.shuffle(vperm);

  Corpus relabeled = corpus;
  for (std::size_t u = 0; u < corpus.sequences.size(); ++u) {
    relabeled.sequences[uperm[u]] = corpus.sequences[u];
    relabeled.split[uperm[u]] = corpus.split[u];
    for (ItemIndex& v : relabeled.sequences[uperm[u]]) v = vperm[v];
  }
  ModelParams moved = params;
  for (int u = 0; u < 7; ++u) moved.user_emb.row(uperm[u]) = params.user_emb.row(u);
  for (int v = 0; v < 6; ++v) moved.item_emb.row(vperm[v]) = params.item_emb.row(v);

  const NodeFeatures base = node_features(params, small_graphs(corpus), 2);
  const NodeFeatures perm = node_features(moved, small_graphs(relabeled), 2);
  for (int u = 0; u < 7; ++u) {
    CHECK(perm.ui_all.row(uperm[u]).isApprox(base.ui_all.row(u), 1e-12));
    CHECK(perm.uu_users.row(uperm[u]).isApprox(base.uu_users.row(u), 1e-12));
  }
  for (int v = 0; v < 6; ++v) {
    CHECK(perm.ui_all.row(7 + vperm[v]).isApprox(base.ui_all.row(7 + v), 1e-12));
    CHECK(perm.vv_items.row(vperm[v]).isApprox(base.vv_items.row(v), 1e-12));
  }
}

TEST_CASE("initialization is finite and seed-reproducible") {
  Rng a(5), b(5), c(6);
  const ModelParams pa = ModelParams::init(4, 5, 8, a);
  const ModelParams pb = ModelParams::init(4, 5, 8, b);
  const ModelParams pc = ModelParams::init(4, 5, 8, c);
  CHECK(pa.all_finite());
  CHECK(pa.item_emb == pb.item_emb);
  CHECK(pa.attn_hidden == pb.attn_hidden);
  CHECK(pa.item_emb != pc.item_emb);
  CHECK(pa.attn_hidden.rows() == 32);
  CHECK(pa.attn_score.size() == 32);
  CHECK(pa.pos_emb.rows() == kMaxPrefixLen);
}
