#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dtplace/errors.hpp"
#include "dtplace/vgae.hpp"
#include "helpers.hpp"

using namespace dtplace;
using namespace dtplace::vgae;
using testing::fd_error;
using testing::randn;

namespace {

CircuitGraph permuted(const CircuitGraph& g, const std::vector<int>& perm) {
  Eigen::PermutationMatrix<Eigen::Dynamic> P(Eigen::VectorXi::Map(perm.data(), static_cast<Eigen::Index>(perm.size())));
  CircuitGraph out;
  out.adjacency = P * g.adjacency * P.transpose();
  out.features = P * g.features;
  out.module_ids.resize(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out.module_ids[perm[i]] = g.module_ids[i];
  return out;
}

}  // namespace

TEST_CASE("normalized adjacency") {
  CHECK(normalized_adjacency(Eigen::MatrixXd::Zero(1, 1))(0, 0) == doctest::Approx(1.0));
  Eigen::MatrixXd a(3, 3);
  a << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const Eigen::MatrixXd n = normalized_adjacency(a);
  const double d[3] = {2, 3, 2};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(n(i, j) == doctest::Approx((a(i, j) + (i == j)) / std::sqrt(d[i] * d[j])));
}

TEST_CASE("encoder: linearity, permutation equivariance, token invariance") {
  const Encoder<float> enc(3);
  CircuitGraph empty;
  empty.adjacency = Eigen::MatrixXd::Zero(4, 4);
  empty.features = Eigen::MatrixXd::Zero(4, kNodeFeatures);
  empty.module_ids = {0, 1, 2, 3};
  CHECK(enc.encode(empty).mu.value().isZero());

  const CircuitGraph g = to_graph(generate_synthetic({.seed = 8, .n_macros = 10, .n_nets = 16}));
  const std::vector<int> perm{3, 7, 1, 0, 9, 2, 8, 5, 4, 6};
  const CircuitGraph pg = permuted(g, perm);
  const Eigen::MatrixXd mu = enc.encode(g).mu.value().cast<double>();
  const Eigen::MatrixXd pmu = enc.encode(pg).mu.value().cast<double>();
  for (int i = 0; i < 10; ++i) CHECK((pmu.row(perm[i]) - mu.row(i)).norm() < 1e-5);
  const CircuitToken t = circuit_token(g, enc);
  CHECK(t.size() == kLatent);
  CHECK((circuit_token(pg, enc) - t).norm() < 1e-6);
  CHECK(t.isApprox(mu.colwise().mean(), 1e-12));
}

TEST_CASE("the two-circuit pair gets different tokens") {
  const auto [c1, c2] = testing::token_pair();
  const Encoder<float> enc(5);
  CHECK((circuit_token(to_graph(c1), enc) - circuit_token(to_graph(c2), enc)).norm() > 1e-3);
}

TEST_CASE("decoder closed forms") {
  CHECK((decode(Eigen::MatrixXd::Zero(3, 4)).array() == 0.5).all());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd d = decode(eye);
  CHECK(d(0, 1) == 0.5);
  CHECK(d(2, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  Rng rng(1);
  const Eigen::MatrixXd r = decode(randn(5, 3, rng));
  CHECK(r.isApprox(r.transpose()));
}

TEST_CASE("loss terms: closed forms and finite differences") {
  auto mu0 = ad::Tensor<double>::constant(ad::Mat<double>::Zero(4, 3));
  CHECK(kl_term(mu0, mu0).item() == doctest::Approx(0.0));
  auto mu1 = ad::Tensor<double>::constant(ad::Mat<double>::Ones(1, 1));
  auto lv0 = ad::Tensor<double>::constant(ad::Mat<double>::Zero(1, 1));
  CHECK(kl_term(mu1, lv0).item() == doctest::Approx(0.5));

  ad::Mat<double> labels = ad::Mat<double>::Identity(3, 3);
  labels(0, 1) = labels(1, 0) = 1;
  ad::Mat<double> z(3, 2);
  z << 10, 0, 10, 0, -10, 0;  // z z^T = +-100, agreeing with every label
  CHECK(reconstruction_loss(ad::Tensor<double>::constant(z), labels).item() < 1e-12);
  CHECK(reconstruction_loss(ad::Tensor<double>::constant(ad::Mat<double>::Zero(3, 2)), labels).item() > 0.1);

  Rng rng(2);
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(5, 5);
  for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {0, 4}}) adj(i, j) = adj(j, i) = 1;
  const Eigen::MatrixXd eps = randn(5, 3, rng);
  const double err = fd_error(
      [&]<typename S>(std::vector<ad::Tensor<S>>& p) { return elbo_loss<S>(adj, p[0], p[1], eps.cast<S>()); },
      {randn(5, 3, rng, 0.5), randn(5, 3, rng, 0.3)});
  CHECK(err < 1e-3);

  const CircuitGraph g = to_graph(generate_synthetic({.seed = 4, .n_macros = 6, .n_nets = 8}));
  const Eigen::MatrixXd na = normalized_adjacency(g.adjacency);
  const double enc_err = fd_error(
      [&]<typename S>(std::vector<ad::Tensor<S>>& p) {
        auto a = ad::Tensor<S>::constant(na.cast<S>());
        auto h = ad::relu(ad::matmul(a, ad::matmul(ad::Tensor<S>::constant(g.features.cast<S>()), p[0])));
        auto mu = ad::matmul(a, ad::matmul(h, p[1]));
        auto lv = ad::matmul(a, ad::matmul(h, p[2]));
        return elbo_loss<S>(g.adjacency, mu, lv, eps.topRows(6).leftCols(2).replicate(1, 1).cast<S>());
      },
      {randn(kNodeFeatures, 4, rng), randn(4, 2, rng, 0.5), randn(4, 2, rng, 0.2)});
  CHECK(enc_err < 1e-3);
}

TEST_CASE("training is deterministic and reduces the loss") {
  std::vector<CircuitGraph> graphs;
  for (std::uint64_t s = 0; s < 3; ++s) graphs.push_back(to_graph(generate_synthetic({.seed = s, .n_macros = 12, .n_nets = 20})));
  const TrainConfig cfg{.epochs = 150, .lr = 1e-2, .seed = 7};
  const TrainResult a = train(graphs, cfg);
  const TrainResult b = train(graphs, cfg);
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.loss_history.size() == 150);
  std::vector<double> coarse;
  for (std::size_t i = 0; i < a.loss_history.size(); i += 10) {
    double m = 0;
    for (std::size_t j = i; j < i + 10; ++j) m += a.loss_history[j];
    coarse.push_back(m / 10);
  }
  CHECK(oracle::mann_kendall(coarse).p_decreasing < 0.05);
  CHECK_THROWS_AS(train({}, cfg), ValidationError);
}

TEST_CASE("edge split and AUC") {
  const CircuitGraph g = to_graph(generate_synthetic({.seed = 3, .n_macros = 16, .n_nets = 30}));
  const EdgeSplit sp = split_edges(g, 0.2, 1);
  CHECK(sp.positives.size() == sp.negatives.size());
  CHECK(!sp.positives.empty());
  for (auto [i, j] : sp.positives) {
    CHECK(g.adjacency(i, j) == 1.0);
    CHECK(sp.train.adjacency(i, j) == 0.0);
    CHECK(sp.train.adjacency(j, i) == 0.0);
  }
  for (auto [i, j] : sp.negatives) CHECK(g.adjacency(i, j) == 0.0);

  Eigen::MatrixXd mu(4, 1);
  mu << 1, 1, -1, 0;
  CHECK(edge_auc(mu, {{0, 1}}, {{0, 2}}) == 1.0);
  CHECK(edge_auc(mu, {{0, 2}}, {{0, 1}}) == 0.0);
  CHECK(edge_auc(mu, {{0, 3}}, {{1, 3}}) == 0.5);
}

TEST_CASE("encoder checkpoint round trip") {
  const Encoder<float> enc(11);
  std::stringstream ss;
  save(ss, enc);
  const Encoder<float> back = load(ss);
  const CircuitGraph g = to_graph(generate_synthetic({.seed = 1}));
  CHECK(circuit_token(g, back) == circuit_token(g, enc));
}
