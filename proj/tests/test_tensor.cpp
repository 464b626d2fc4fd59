#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "dtplace/errors.hpp"
#include "dtplace/tensor.hpp"
#include "helpers.hpp"

using namespace dtplace;
using namespace dtplace::ad;
using testing::fd_error;
using testing::randn;

namespace {

constexpr double kTol = 1e-3;

template <typename S>
Mat<S> cast(const Eigen::MatrixXd& m) {
  return m.cast<S>();
}

// Weighted sum, so every output entry gets a distinct upstream gradient.
template <typename S>
Tensor<S> wsum(const Tensor<S>& x, const Eigen::MatrixXd& w) {
  return sum(mul(x, Tensor<S>::constant(cast<S>(w.topLeftCorner(x.rows(), x.cols())))));
}

}  // namespace

TEST_CASE("finite differences: elementwise and reductions") {
  Rng rng(1);
  const auto A = randn(3, 4, rng), B = randn(3, 4, rng), row = randn(1, 4, rng), col = randn(3, 1, rng),
             s = randn(1, 1, rng), W = randn(8, 8, rng);
  using V = std::vector<Eigen::MatrixXd>;
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(add(p[0], p[1]), W); }, V{A, B}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(add(p[0], p[1]), W); }, V{A, row}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(add(p[0], p[1]), W); }, V{A, col}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(sub(p[0], p[1]), W); }, V{A, s}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(mul(p[0], p[1]), W); }, V{A, B}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(mul(p[0], p[1]), W); }, V{A, row}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(scale(add_scalar(p[0], 0.3), -2.5), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(relu(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(gelu(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(sigmoid(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(exp(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(square(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return square(mean(p[0])); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return square(sum(p[0])); }, V{A}) < kTol);
}

TEST_CASE("finite differences: shape ops and indexing") {
  Rng rng(2);
  const auto A = randn(3, 4, rng), B = randn(4, 5, rng), C = randn(2, 4, rng), W = randn(12, 12, rng);
  using V = std::vector<Eigen::MatrixXd>;
  const std::vector<int> idx{2, 0, 2};
  const std::vector<int> cols{1, 3, 0};
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(matmul(p[0], p[1]), W); }, V{A, B}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(transpose(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(reshape(p[0], 2, 6), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(slice_cols(p[0], 1, 2), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) {
          const std::vector<Tensor<S>> parts{p[0], p[1]};
          return wsum(concat_rows<S>(parts), W);
        }, V{A, C}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) {
          const std::vector<Tensor<S>> parts{p[0], transpose(p[1])};
          return wsum(concat_cols<S>(parts), W);
        }, V{A, randn(2, 3, rng)}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(gather_rows(p[0], idx), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(embedding(p[0], idx), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(pick(p[0], cols), W); }, V{A}) < kTol);
}

TEST_CASE("finite differences: normalization, softmax family, losses") {
  Rng rng(3);
  const auto A = randn(3, 5, rng), g = randn(1, 5, rng), b = randn(1, 5, rng), W = randn(8, 8, rng);
  using V = std::vector<Eigen::MatrixXd>;
  Eigen::MatrixXd keep = Eigen::MatrixXd::Ones(3, 5);
  keep(0, 1) = keep(1, 4) = keep(2, 0) = keep(2, 2) = 0.0;
  Eigen::MatrixXd y = (randn(3, 5, rng).array() > 0).cast<double>();
  const std::vector<int> targets{0, 3, 4};
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(layer_norm(p[0], p[1], p[2]), W); }, V{A, g, b}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(softmax_rows(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) {
          Mat<S> mask = Mat<S>::Zero(3, 5);
          mask(1, 2) = -std::numeric_limits<S>::infinity();
          return wsum(softmax_rows(p[0], &mask), W);
        }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(log_softmax_rows(p[0]), W); }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) {
          return sum(row_entropy(log_softmax_rows(masked_fill(p[0], cast<S>(keep)))));
        }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) {
          return cross_entropy(masked_fill(p[0], cast<S>(keep)), targets);
        }, V{A}) < kTol);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return bce_with_logits(p[0], cast<S>(y), 2.5); }, V{A}) < kTol);
}

TEST_CASE("finite differences: convolution and causal attention") {
  Rng rng(4);
  const Conv2dGeometry geo{.channels = 2, .height = 6, .width = 5, .kernel = 3, .stride = 2, .padding = 1};
  const int out = 3 * geo.out_height() * geo.out_width();
  const auto x = randn(2, 2 * 6 * 5, rng), w = randn(3, 2 * 9, rng, 0.5), bias = randn(1, 3, rng), W = randn(2, out, rng);
  using V = std::vector<Eigen::MatrixXd>;
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(conv2d(p[0], p[1], p[2], geo), W); }, V{x, w, bias}) < kTol);

  const std::vector<Segment> segs{{0, 4, 4}, {4, 5, 3}};
  const auto qkv = randn(9, 12, rng), Wa = randn(9, 4, rng);
  CHECK(fd_error([&]<typename S>(std::vector<Tensor<S>>& p) { return wsum(causal_attention(p[0], 2, std::span<const Segment>(segs)), Wa); }, V{qkv}) < kTol);
}

TEST_CASE("attention is causal and segments are independent") {
  Rng rng(5);
  Mat<double> q = randn(7, 6, rng);
  const std::vector<Segment> segs{{0, 3, 3}, {3, 4, 4}};
  const auto base = causal_attention(Tensor<double>::constant(q), 1, std::span<const Segment>(segs)).value();
  Mat<double> later = q;
  later.row(6).setRandom();
  later.row(2).setRandom();
  const auto changed = causal_attention(Tensor<double>::constant(later), 1, std::span<const Segment>(segs)).value();
  CHECK(changed.topRows(2).isApprox(base.topRows(2)));
  CHECK(changed.middleRows(3, 3).isApprox(base.middleRows(3, 3)));
  CHECK_FALSE(changed.row(6).isApprox(base.row(6)));
}

TEST_CASE("convolution matches a direct loop") {
  Rng rng(6);
  const Conv2dGeometry geo{.channels = 1, .height = 5, .width = 5, .kernel = 3, .stride = 2, .padding = 1};
  Mat<double> x = randn(1, 25, rng), w = randn(1, 9, rng);
  const auto y = conv2d(Tensor<double>::constant(x), Tensor<double>::constant(w), Tensor<double>::constant(Mat<double>::Zero(1, 1)), geo).value();
  REQUIRE(y.cols() == 9);
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 3; ++ox) {
      double acc = 0.0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
          if (iy >= 0 && iy < 5 && ix >= 0 && ix < 5) acc += w(0, ky * 3 + kx) * x(0, iy * 5 + ix);
        }
      CHECK(y(0, oy * 3 + ox) == doctest::Approx(acc));
    }
}

TEST_CASE("masked entries get probability zero and no gradient") {
  Mat<double> keep = Mat<double>::Ones(1, 4);
  keep(0, 2) = 0;
  auto x = Tensor<double>::parameter(Mat<double>::Constant(1, 4, 0.5));
  auto lp = log_softmax_rows(masked_fill(x, keep));
  CHECK(std::isinf(lp.value()(0, 2)));
  CHECK(std::exp(lp.value()(0, 0)) == doctest::Approx(1.0 / 3));
  auto h = row_entropy(lp);
  CHECK(h.item() == doctest::Approx(std::log(3.0)));
  backward(sum(h));
  CHECK(x.grad()(0, 2) == 0.0);
}

TEST_CASE("shape errors, dropout, NoGrad") {
  auto a = Tensor<double>::constant(Mat<double>::Ones(2, 3));
  auto b = Tensor<double>::constant(Mat<double>::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, Tensor<double>::constant(Mat<double>::Ones(3, 2))), ShapeError);
  CHECK_THROWS_AS(backward(a), ShapeError);

  Rng r1(7), r2(7);
  auto big = Tensor<double>::constant(Mat<double>::Ones(50, 50));
  const auto d1 = dropout(big, 0.25, r1).value();
  CHECK(d1 == dropout(big, 0.25, r2).value());
  CHECK(d1.mean() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(((d1.array() == 0).count() + (d1.array() == 1.0 / 0.75).count()) == 2500);
  CHECK(dropout(big, 0.0, r1).value() == big.value());

  auto p = Tensor<double>::parameter(Mat<double>::Ones(1, 1));
  {
    NoGrad<double> off;
    auto y = square(p);
    CHECK(Tape<double>::current().size() == 0);
  }
}

TEST_CASE("adam minimizes a quadratic; clipping bounds the norm") {
  ParameterSet<double> ps;
  auto x = ps.add("x", Mat<double>::Constant(1, 3, 5.0));
  AdamState<double> st;
  for (int i = 0; i < 2000; ++i) {
    ps.zero_grad();
    backward(sum(square(add_scalar(x, -1.0))));
    adam_step(ps, st, 0.05);
  }
  CHECK((x.value().array() - 1.0).abs().maxCoeff() < 1e-3);

  ps.zero_grad();
  backward(scale(sum(x), 100.0));
  CHECK(ps.grad_norm() == doctest::Approx(100.0 * std::sqrt(3.0)));
  ps.clip_grad_norm(1.0);
  CHECK(ps.grad_norm() == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round trip and mismatch detection") {
  Rng rng(8);
  ParameterSet<float> a;
  a.add("w", randn(3, 4, rng).cast<float>());
  a.add("b", randn(1, 4, rng).cast<float>());
  std::stringstream ss;
  write_checkpoint(ss, a, "hdr v1");
  ParameterSet<float> b;
  b.add("w", Mat<float>::Zero(3, 4));
  b.add("b", Mat<float>::Zero(1, 4));
  CHECK(read_checkpoint(ss, b) == "hdr v1");
  CHECK(b.get("w").value() == a.get("w").value());

  std::stringstream again;
  write_checkpoint(again, a, "hdr v1");
  ParameterSet<float> wrong;
  wrong.add("w", Mat<float>::Zero(4, 3));
  wrong.add("b", Mat<float>::Zero(1, 4));
  CHECK_THROWS_AS(read_checkpoint(again, wrong), ValidationError);

  std::stringstream junk("not a checkpoint");
  CHECK_THROWS(read_checkpoint(junk, b));
}
