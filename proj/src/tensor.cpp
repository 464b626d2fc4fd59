#include "dtplace/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "dtplace/errors.hpp"

namespace dtplace::ad {

namespace {

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

template <typename S>
void check_output(const Mat<S>& value, const char* op) {
  const S* p = value.data();
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    // -inf is the masking sentinel; NaN and +inf are errors.
    if (std::isnan(p[i]) || p[i] == std::numeric_limits<S>::infinity())
      throw NonFiniteError(std::string("non-finite output from ") + op);
  }
}

template <typename S>
bool tracking(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::current().recording()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S>
Tensor<S> emit(Mat<S> value, const char* op, bool track) {
  check_output(value, op);
  return Tensor<S>(std::move(value), track);
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

template <typename S>
Broadcast broadcast_kind(const Mat<S>& a, const Mat<S>& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  throw ShapeError(std::string(op) + ": cannot broadcast " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()) + " onto " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()));
}

template <typename S>
Mat<S> expand(const Mat<S>& b, Eigen::Index rows, Eigen::Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kCol:
      return b.replicate(1, cols);
    case Broadcast::kScalar:
      return Mat<S>::Constant(rows, cols, b(0, 0));
  }
  return b;
}

template <typename S>
Mat<S> reduce(const Mat<S>& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kCol:
      return g.rowwise().sum();
    case Broadcast::kScalar:
      return Mat<S>::Constant(1, 1, static_cast<S>(g.template cast<double>().sum()));
  }
  return g;
}

template <typename S>
void require(bool ok, const char* message) {
  if (!ok) throw ShapeError(message);
}

template <typename S, typename F>
Tensor<S> unary(const Tensor<S>& x, const char* op, F&& forward_fn,
                std::function<Mat<S>(const Mat<S>& x, const Mat<S>& y, const Mat<S>& g)> grad_fn) {
  const bool track = tracking<S>({&x});
  Tensor<S> out = emit<S>(forward_fn(x.value()), op, track);
  if (track) {
    NodePtr<S> xn = x.node(), on = out.node();
    Tape<S>::current().push([xn, on, grad_fn]() {
      if (on->grad.size() == 0) return;
      xn->accumulate(grad_fn(xn->value, on->value, on->grad));
    });
  }
  return out;
}

}  // namespace

template <typename S>
Tape<S>& Tape<S>::current() {
  thread_local Tape<S> tape;
  return tape;
}

template <typename S>
void Tape<S>::run_backward() {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  records_.clear();
}

template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward needs a scalar loss, got " + std::to_string(loss.rows()) + "x" +
                     std::to_string(loss.cols()));
  Tape<S>& tape = Tape<S>::current();
  if (tape.size() == 0)
    throw std::logic_error("backward called with an empty tape (no recorded forward pass)");
  loss.node()->accumulate(Mat<S>::Ones(1, 1));
  tape.run_backward();
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  const bool track = tracking<S>({&a, &b});
  Mat<S> value = a.value() * b.value();
  Tensor<S> out = emit<S>(std::move(value), "matmul", track);
  if (track) {
    NodePtr<S> an = a.node(), bn = b.node(), on = out.node();
    Tape<S>::current().push([an, bn, on]() {
      if (on->grad.size() == 0) return;
      if (an->requires_grad) an->accumulate(on->grad * bn->value.transpose());
      if (bn->requires_grad) bn->accumulate(an->value.transpose() * on->grad);
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  const bool track = tracking<S>({&a, &b});
  Mat<S> value;
  switch (kind) {
    case Broadcast::kSame:
      value = a.value() + b.value();
      break;
    case Broadcast::kRow:
      value = a.value().rowwise() + b.value().row(0);
      break;
    case Broadcast::kCol:
      value = a.value().colwise() + b.value().col(0);
      break;
    case Broadcast::kScalar:
      value = (a.value().array() + b.value()(0, 0)).matrix();
      break;
  }
  Tensor<S> out = emit<S>(std::move(value), "add", track);
  if (track) {
    NodePtr<S> an = a.node(), bn = b.node(), on = out.node();
    Tape<S>::current().push([an, bn, on, kind]() {
      if (on->grad.size() == 0) return;
      if (an->requires_grad) an->accumulate(on->grad);
      if (bn->requires_grad) bn->accumulate(reduce<S>(on->grad, kind));
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, scale(b, -1.0));
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
  const bool track = tracking<S>({&a, &b});
  const Mat<S> bx = expand<S>(b.value(), a.rows(), a.cols(), kind);
  Tensor<S> out = emit<S>(a.value().cwiseProduct(bx), "mul", track);
  if (track) {
    NodePtr<S> an = a.node(), bn = b.node(), on = out.node();
    Tape<S>::current().push([an, bn, on, kind]() {
      if (on->grad.size() == 0) return;
      if (an->requires_grad)
        an->accumulate(
            on->grad.cwiseProduct(expand<S>(bn->value, an->value.rows(), an->value.cols(), kind)));
      if (bn->requires_grad) bn->accumulate(reduce<S>(on->grad.cwiseProduct(an->value), kind));
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double factor) {
  const S f = static_cast<S>(factor);
  return unary<S>(
      a, "scale", [f](const Mat<S>& x) -> Mat<S> { return x * f; },
      [f](const Mat<S>&, const Mat<S>&, const Mat<S>& g) -> Mat<S> { return g * f; });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, double c) {
  const S v = static_cast<S>(c);
  return unary<S>(
      a, "add_scalar", [v](const Mat<S>& x) -> Mat<S> { return (x.array() + v).matrix(); },
      [](const Mat<S>&, const Mat<S>&, const Mat<S>& g) -> Mat<S> { return g; });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary<S>(
      x, "relu", [](const Mat<S>& v) -> Mat<S> { return v.cwiseMax(S(0)); },
      [](const Mat<S>& v, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        return (v.array() > S(0)).select(g, S(0));
      });
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  return unary<S>(
      x, "gelu",
      [](const Mat<S>& v) -> Mat<S> {
        return v.unaryExpr([](S u) {
          return static_cast<S>(0.5 * u * (1.0 + std::tanh(kC * (u + 0.044715 * u * u * u))));
        });
      },
      [](const Mat<S>& v, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        Mat<S> d = v.unaryExpr([](S u) {
          const double uu = u;
          const double inner = kC * (uu + 0.044715 * uu * uu * uu);
          const double t = std::tanh(inner);
          const double dinner = kC * (1.0 + 3.0 * 0.044715 * uu * uu);
          return static_cast<S>(0.5 * (1.0 + t) + 0.5 * uu * (1.0 - t * t) * dinner);
        });
        return g.cwiseProduct(d);
      });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary<S>(
      x, "sigmoid",
      [](const Mat<S>& v) -> Mat<S> {
        return v.unaryExpr([](S u) {
          return u >= 0 ? S(1) / (S(1) + std::exp(-u)) : std::exp(u) / (S(1) + std::exp(u));
        });
      },
      [](const Mat<S>&, const Mat<S>& y, const Mat<S>& g) -> Mat<S> {
        return g.cwiseProduct(y.cwiseProduct((S(1) - y.array()).matrix()));
      });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return unary<S>(
      x, "exp", [](const Mat<S>& v) -> Mat<S> { return v.array().exp().matrix(); },
      [](const Mat<S>&, const Mat<S>& y, const Mat<S>& g) -> Mat<S> { return g.cwiseProduct(y); });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return unary<S>(
      x, "square", [](const Mat<S>& v) -> Mat<S> { return v.cwiseProduct(v); },
      [](const Mat<S>& v, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        return S(2) * g.cwiseProduct(v);
      });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  return unary<S>(
      x, "sum",
      [](const Mat<S>& v) -> Mat<S> {
        return Mat<S>::Constant(1, 1, static_cast<S>(v.template cast<double>().sum()));
      },
      [](const Mat<S>& v, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        return Mat<S>::Constant(v.rows(), v.cols(), g(0, 0));
      });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  require<S>(x.size() > 0, "mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  return unary<S>(
      x, "mean",
      [inv](const Mat<S>& v) -> Mat<S> {
        return Mat<S>::Constant(1, 1, static_cast<S>(v.template cast<double>().sum() * inv));
      },
      [inv](const Mat<S>& v, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        return Mat<S>::Constant(v.rows(), v.cols(), static_cast<S>(g(0, 0) * inv));
      });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  return unary<S>(
      x, "transpose", [](const Mat<S>& v) -> Mat<S> { return v.transpose(); },
      [](const Mat<S>&, const Mat<S>&, const Mat<S>& g) -> Mat<S> { return g.transpose(); });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Eigen::Index rows, Eigen::Index cols) {
  require<S>(rows * cols == x.size(), "reshape: size mismatch");
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  return unary<S>(
      x, "reshape",
      [rows, cols](const Mat<S>& v) -> Mat<S> {
        return Eigen::Map<const Mat<S>>(v.data(), rows, cols);
      },
      [r0, c0](const Mat<S>&, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        return Eigen::Map<const Mat<S>>(g.data(), r0, c0);
      });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, Eigen::Index start, Eigen::Index count) {
  require<S>(start >= 0 && count >= 0 && start + count <= x.cols(), "slice_cols out of range");
  return unary<S>(
      x, "slice_cols",
      [start, count](const Mat<S>& v) -> Mat<S> { return v.middleCols(start, count); },
      [start, count](const Mat<S>& v, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        Mat<S> d = Mat<S>::Zero(v.rows(), v.cols());
        d.middleCols(start, count) = g;
        return d;
      });
}

template <typename S>
Tensor<S> concat_cols(std::span<const Tensor<S>> parts) {
  require<S>(!parts.empty(), "concat_cols of nothing");
  Eigen::Index cols = 0;
  bool track = false;
  for (const auto& p : parts) {
    require<S>(p.rows() == parts[0].rows(), "concat_cols: row mismatch");
    cols += p.cols();
    track = track || tracking<S>({&p});
  }
  Mat<S> value(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    value.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tensor<S> out = emit<S>(std::move(value), "concat_cols", track);
  if (track) {
    std::vector<NodePtr<S>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr<S> on = out.node();
    Tape<S>::current().push([nodes, on]() {
      if (on->grad.size() == 0) return;
      Eigen::Index at = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) n->accumulate(on->grad.middleCols(at, n->value.cols()));
        at += n->value.cols();
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_rows(std::span<const Tensor<S>> parts) {
  require<S>(!parts.empty(), "concat_rows of nothing");
  Eigen::Index rows = 0;
  bool track = false;
  for (const auto& p : parts) {
    require<S>(p.cols() == parts[0].cols(), "concat_rows: column mismatch");
    rows += p.rows();
    track = track || tracking<S>({&p});
  }
  Mat<S> value(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    value.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  Tensor<S> out = emit<S>(std::move(value), "concat_rows", track);
  if (track) {
    std::vector<NodePtr<S>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr<S> on = out.node();
    Tape<S>::current().push([nodes, on]() {
      if (on->grad.size() == 0) return;
      Eigen::Index at = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) n->accumulate(on->grad.middleRows(at, n->value.rows()));
        at += n->value.rows();
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& x, std::span<const int> index) {
  std::vector<int> idx(index.begin(), index.end());
  for (int i : idx) require<S>(i >= 0 && i < x.rows(), "gather_rows: index out of range");
  const bool track = tracking<S>({&x});
  Mat<S> value(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) value.row(r) = x.value().row(idx[r]);
  Tensor<S> out = emit<S>(std::move(value), "gather_rows", track);
  if (track) {
    NodePtr<S> xn = x.node(), on = out.node();
    Tape<S>::current().push([xn, on, idx = std::move(idx)]() {
      if (on->grad.size() == 0) return;
      if (xn->grad.size() == 0) xn->grad = Mat<S>::Zero(xn->value.rows(), xn->value.cols());
      for (std::size_t r = 0; r < idx.size(); ++r) xn->grad.row(idx[r]) += on->grad.row(r);
    });
  }
  return out;
}

template <typename S>
Tensor<S> embedding(const Tensor<S>& table, std::span<const int> ids) {
  return gather_rows(table, ids);
}

template <typename S>
Tensor<S> pick(const Tensor<S>& x, std::span<const int> cols) {
  require<S>(static_cast<Eigen::Index>(cols.size()) == x.rows(), "pick: one column per row");
  std::vector<int> c(cols.begin(), cols.end());
  for (int v : c) require<S>(v >= 0 && v < x.cols(), "pick: column out of range");
  const bool track = tracking<S>({&x});
  Mat<S> value(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) value(r, 0) = x.value()(r, c[r]);
  Tensor<S> out = emit<S>(std::move(value), "pick", track);
  if (track) {
    NodePtr<S> xn = x.node(), on = out.node();
    Tape<S>::current().push([xn, on, c = std::move(c)]() {
      if (on->grad.size() == 0) return;
      Mat<S> d = Mat<S>::Zero(xn->value.rows(), xn->value.cols());
      for (std::size_t r = 0; r < c.size(); ++r) d(r, c[r]) = on->grad(r, 0);
      xn->accumulate(d);
    });
  }
  return out;
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     double eps) {
  require<S>(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 &&
                 bias.cols() == x.cols(),
             "layer_norm: parameter shape");
  const Eigen::Index R = x.rows(), C = x.cols();
  Mat<S> xhat(R, C);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const auto row = x.value().row(r).template cast<double>();
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<S>(is);
    xhat.row(r) = ((row.array() - mu) * is).matrix().template cast<S>();
  }
  const bool track = tracking<S>({&x, &gain, &bias});
  Mat<S> value = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  value.rowwise() += bias.value().row(0);
  Tensor<S> out = emit<S>(std::move(value), "layer_norm", track);
  if (track) {
    NodePtr<S> xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    Tape<S>::current().push([xn, gn, bn, on, xhat = std::move(xhat), inv_std]() {
      if (on->grad.size() == 0) return;
      const Mat<S>& g = on->grad;
      if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
      if (bn->requires_grad) bn->accumulate(g.colwise().sum());
      if (xn->requires_grad) {
        const Mat<S> dxhat = (g.array().rowwise() * gn->value.row(0).array()).matrix();
        const Eigen::Index C = g.cols();
        Mat<S> dx(g.rows(), C);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const S m1 = dxhat.row(r).sum() / static_cast<S>(C);
          const S m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<S>(C);
          dx.row(r) = (inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2)).matrix();
        }
        xn->accumulate(dx);
      }
    });
  }
  return out;
}

namespace {

template <typename S>
Mat<S> softmax_forward(const Mat<S>& z) {
  Mat<S> p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    if (m == -std::numeric_limits<S>::infinity())
      throw NonFiniteError("softmax over a fully masked row");
    p.row(r) = (z.row(r).array() - m).exp().matrix();
    const double total = p.row(r).template cast<double>().sum();
    p.row(r) /= static_cast<S>(total);
  }
  return p;
}

}  // namespace

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x, const Mat<S>* additive_mask) {
  Mat<S> z = x.value();
  if (additive_mask) {
    require<S>(additive_mask->rows() == z.rows() && additive_mask->cols() == z.cols(),
               "softmax_rows: mask shape");
    z += *additive_mask;
  }
  return unary<S>(
      x, "softmax_rows", [&z](const Mat<S>&) -> Mat<S> { return softmax_forward<S>(z); },
      [](const Mat<S>&, const Mat<S>& p, const Mat<S>& g) -> Mat<S> {
        const auto dot = g.cwiseProduct(p).rowwise().sum();
        return p.cwiseProduct((g.colwise() - dot).eval());
      });
}

template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& x) {
  return unary<S>(
      x, "log_softmax_rows",
      [](const Mat<S>& z) -> Mat<S> {
        Mat<S> out(z.rows(), z.cols());
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
          const S m = z.row(r).maxCoeff();
          if (m == -std::numeric_limits<S>::infinity())
            throw NonFiniteError("log_softmax over a fully masked row");
          const double lse =
              std::log((z.row(r).array() - m).exp().matrix().template cast<double>().sum());
          out.row(r) = (z.row(r).array() - m - static_cast<S>(lse)).matrix();
        }
        return out;
      },
      [](const Mat<S>&, const Mat<S>& y, const Mat<S>& g) -> Mat<S> {
        const Mat<S> p = y.array().exp().matrix();
        const auto total = g.rowwise().sum();
        return g - (p.array().colwise() * total.array()).matrix();
      });
}

template <typename S>
Tensor<S> masked_fill(const Tensor<S>& x, const Mat<S>& keep) {
  require<S>(keep.rows() == x.rows() && keep.cols() == x.cols(), "masked_fill: mask shape");
  const S ninf = -std::numeric_limits<S>::infinity();
  Mat<S> k = keep;
  return unary<S>(
      x, "masked_fill",
      [&k, ninf](const Mat<S>& v) -> Mat<S> { return (k.array() != S(0)).select(v, ninf); },
      [k](const Mat<S>&, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        return (k.array() != S(0)).select(g, S(0));
      });
}

template <typename S>
Tensor<S> row_entropy(const Tensor<S>& log_probs) {
  return unary<S>(
      log_probs, "row_entropy",
      [](const Mat<S>& l) -> Mat<S> {
        Mat<S> h(l.rows(), 1);
        for (Eigen::Index r = 0; r < l.rows(); ++r) {
          double acc = 0.0;
          for (Eigen::Index c = 0; c < l.cols(); ++c) {
            const double v = l(r, c);
            if (std::isfinite(v)) acc -= std::exp(v) * v;
          }
          h(r, 0) = static_cast<S>(acc);
        }
        return h;
      },
      [](const Mat<S>& l, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        Mat<S> d = Mat<S>::Zero(l.rows(), l.cols());
        for (Eigen::Index r = 0; r < l.rows(); ++r)
          for (Eigen::Index c = 0; c < l.cols(); ++c) {
            const S v = l(r, c);
            if (std::isfinite(v)) d(r, c) = -g(r, 0) * std::exp(v) * (v + S(1));
          }
        return d;
      });
}

template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const int> targets) {
  return scale(mean(pick(log_softmax_rows(logits), targets)), -1.0);
}

template <typename S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const Mat<S>& targets, double pos_weight) {
  require<S>(targets.rows() == logits.rows() && targets.cols() == logits.cols(),
             "bce_with_logits: target shape");
  const double inv = 1.0 / static_cast<double>(logits.size());
  Mat<S> y = targets;
  auto softplus = [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); };
  return unary<S>(
      logits, "bce_with_logits",
      [&y, pos_weight, inv, softplus](const Mat<S>& x) -> Mat<S> {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double v = x.data()[i];
          const double t = y.data()[i];
          acc += pos_weight * t * softplus(-v) + (1.0 - t) * softplus(v);
        }
        return Mat<S>::Constant(1, 1, static_cast<S>(acc * inv));
      },
      [y, pos_weight, inv](const Mat<S>& x, const Mat<S>&, const Mat<S>& g) -> Mat<S> {
        Mat<S> d(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double v = x.data()[i];
          const double t = y.data()[i];
          const double s = 1.0 / (1.0 + std::exp(-v));
          d.data()[i] = static_cast<S>(g(0, 0) * inv * (-pos_weight * t * (1.0 - s) + (1.0 - t) * s));
        }
        return d;
      });
}

template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  require<S>(rate < 1.0, "dropout rate must be < 1");
  Mat<S> keep(x.rows(), x.cols());
  const S s = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() < rate ? S(0) : s;
  return mul(x, Tensor<S>::constant(std::move(keep)));
}

namespace {

template <typename S>
void im2col(const S* in, const Conv2dGeometry& g, Mat<S>& cols) {
  const int Ho = g.out_height(), Wo = g.out_width(), k = g.kernel;
  cols.setZero(static_cast<Eigen::Index>(g.channels) * k * k, static_cast<Eigen::Index>(Ho) * Wo);
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        S* row = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          const S* src = in + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) row[oy * Wo + ox] = src[ix];
          }
        }
      }
}

template <typename S>
void col2im(const Mat<S>& cols, const Conv2dGeometry& g, S* out) {
  const int Ho = g.out_height(), Wo = g.out_width(), k = g.kernel;
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const S* row = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          S* dst = out + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 const Conv2dGeometry& g) {
  const int Ho = g.out_height(), Wo = g.out_width();
  const Eigen::Index in_size = static_cast<Eigen::Index>(g.channels) * g.height * g.width;
  const Eigen::Index patch = static_cast<Eigen::Index>(g.channels) * g.kernel * g.kernel;
  require<S>(Ho > 0 && Wo > 0, "conv2d: empty output");
  if (input.cols() != in_size)
    throw ShapeError("conv2d: input has " + std::to_string(input.cols()) +
                     " features, geometry needs " + std::to_string(in_size));
  require<S>(weight.cols() == patch, "conv2d: weight patch size");
  const Eigen::Index Cout = weight.rows();
  require<S>(bias.rows() == 1 && bias.cols() == Cout, "conv2d: bias shape");
  const Eigen::Index P = static_cast<Eigen::Index>(Ho) * Wo;

  const bool track = tracking<S>({&input, &weight, &bias});
  Mat<S> value(input.rows(), Cout * P);
  Mat<S> cols;
  for (Eigen::Index b = 0; b < input.rows(); ++b) {
    im2col(input.value().row(b).data(), g, cols);
    Eigen::Map<Mat<S>> out(value.row(b).data(), Cout, P);
    out.noalias() = weight.value() * cols;
    out.colwise() += bias.value().row(0).transpose();
  }
  Tensor<S> out = emit<S>(std::move(value), "conv2d", track);
  if (track) {
    NodePtr<S> in = input.node(), wn = weight.node(), bn = bias.node(), on = out.node();
    Tape<S>::current().push([in, wn, bn, on, g, Cout, P]() {
      if (on->grad.size() == 0) return;
      Mat<S> cols;
      Mat<S> dw = Mat<S>::Zero(Cout, wn->value.cols());
      Mat<S> db = Mat<S>::Zero(1, Cout);
      Mat<S> dx;
      if (in->requires_grad) dx = Mat<S>::Zero(in->value.rows(), in->value.cols());
      for (Eigen::Index b = 0; b < in->value.rows(); ++b) {
        Eigen::Map<const Mat<S>> gout(on->grad.row(b).data(), Cout, P);
        if (wn->requires_grad || in->requires_grad) im2col(in->value.row(b).data(), g, cols);
        if (wn->requires_grad) dw.noalias() += gout * cols.transpose();
        if (bn->requires_grad) db += gout.rowwise().sum().transpose();
        if (in->requires_grad) {
          const Mat<S> dcols = wn->value.transpose() * gout;
          col2im(dcols, g, dx.row(b).data());
        }
      }
      if (wn->requires_grad) wn->accumulate(dw);
      if (bn->requires_grad) bn->accumulate(db);
      if (in->requires_grad) in->accumulate(dx);
    });
  }
  return out;
}

namespace {

template <typename S>
Mat<S> attention_probs(const Mat<S>& q, const Mat<S>& k, int valid, S scale_factor) {
  Mat<S> scores = (q * k.transpose()) * scale_factor;
  const S ninf = -std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (j > i || j >= valid) scores(i, j) = ninf;
  return softmax_forward<S>(scores);
}

}  // namespace

template <typename S>
Tensor<S> causal_attention(const Tensor<S>& qkv, int heads, std::span<const Segment> segments) {
  require<S>(heads > 0 && qkv.cols() % (3 * heads) == 0, "causal_attention: qkv width");
  const Eigen::Index H = qkv.cols() / 3;
  const Eigen::Index d = H / heads;
  const S sf = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<Segment> segs(segments.begin(), segments.end());
  for (const auto& s : segs)
    require<S>(s.valid >= 1 && s.valid <= s.length && s.start >= 0 &&
                   s.start + s.length <= qkv.rows(),
               "causal_attention: bad segment");

  const bool track = tracking<S>({&qkv});
  Mat<S> value = Mat<S>::Zero(qkv.rows(), H);
  const Mat<S>& x = qkv.value();
  for (const auto& s : segs)
    for (int h = 0; h < heads; ++h) {
      const Mat<S> q = x.block(s.start, h * d, s.length, d);
      const Mat<S> k = x.block(s.start, H + h * d, s.length, d);
      const Mat<S> v = x.block(s.start, 2 * H + h * d, s.length, d);
      value.block(s.start, h * d, s.length, d) = attention_probs<S>(q, k, s.valid, sf) * v;
    }
  Tensor<S> out = emit<S>(std::move(value), "causal_attention", track);
  if (track) {
    NodePtr<S> xn = qkv.node(), on = out.node();
    Tape<S>::current().push([xn, on, segs = std::move(segs), heads, H, d, sf]() {
      if (on->grad.size() == 0) return;
      const Mat<S>& x = xn->value;
      Mat<S> dx = Mat<S>::Zero(x.rows(), x.cols());
      for (const auto& s : segs)
        for (int h = 0; h < heads; ++h) {
          const Mat<S> q = x.block(s.start, h * d, s.length, d);
          const Mat<S> k = x.block(s.start, H + h * d, s.length, d);
          const Mat<S> v = x.block(s.start, 2 * H + h * d, s.length, d);
          const Mat<S> p = attention_probs<S>(q, k, s.valid, sf);
          const Mat<S> dout = on->grad.block(s.start, h * d, s.length, d);
          const Mat<S> dp = dout * v.transpose();
          const auto rowdot = dp.cwiseProduct(p).rowwise().sum();
          const Mat<S> ds = p.cwiseProduct((dp.colwise() - rowdot).eval()) * sf;
          dx.block(s.start, h * d, s.length, d) += ds * k;
          dx.block(s.start, H + h * d, s.length, d) += ds.transpose() * q;
          dx.block(s.start, 2 * H + h * d, s.length, d) += p.transpose() * dout;
        }
      xn->accumulate(dx);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> ParameterSet<S>::add(std::string name, Mat<S> init) {
  for (const auto& e : entries_)
    if (e.name == name) throw ValidationError("duplicate parameter '" + name + "'");
  entries_.push_back({std::move(name), Tensor<S>::parameter(std::move(init))});
  return entries_.back().tensor;
}

template <typename S>
const Tensor<S>& ParameterSet<S>::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ValidationError("no parameter named '" + name + "'");
}

template <typename S>
std::size_t ParameterSet<S>::count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += static_cast<std::size_t>(e.tensor.size());
  return total;
}

template <typename S>
void ParameterSet<S>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename S>
double ParameterSet<S>::grad_norm() const {
  double acc = 0.0;
  for (const auto& e : entries_)
    if (e.tensor.has_grad()) acc += e.tensor.grad().template cast<double>().squaredNorm();
  return std::sqrt(acc);
}

template <typename S>
void ParameterSet<S>::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  const S f = static_cast<S>(max_norm / norm);
  for (auto& e : entries_)
    if (e.tensor.has_grad()) e.tensor.mutable_grad() *= f;
}

template <typename S>
Mat<S> glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat<S> w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
  return w;
}

template <typename S>
Mat<S> normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Mat<S> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(stddev * rng.normal());
  return w;
}

template <typename S>
void adam_step(ParameterSet<S>& params, AdamState<S>& state, double lr) {
  auto& entries = params.entries();
  if (state.first.size() != entries.size()) {
    state.first.clear();
    state.second.clear();
    for (const auto& e : entries) {
      state.first.push_back(Mat<S>::Zero(e.tensor.rows(), e.tensor.cols()));
      state.second.push_back(Mat<S>::Zero(e.tensor.rows(), e.tensor.cols()));
    }
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].tensor;
    if (!t.has_grad()) continue;
    if (state.first[i].rows() != t.rows() || state.first[i].cols() != t.cols())
      throw ShapeError("adam: moment shape mismatch for '" + entries[i].name + "'");
    const Mat<S>& g = t.grad();
    state.first[i] = c.beta1 * state.first[i] + (1.0 - c.beta1) * g;
    state.second[i] = c.beta2 * state.second[i] + (1.0 - c.beta2) * g.cwiseProduct(g);
    const auto m_hat = state.first[i].array() / static_cast<S>(bc1);
    const auto v_hat = state.second[i].array() / static_cast<S>(bc2);
    t.mutable_value().array() -= static_cast<S>(lr) * m_hat / (v_hat.sqrt() + static_cast<S>(c.eps));
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'T', 'P', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_string(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw ValidationError("truncated checkpoint");
  return s;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_preamble(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ValidationError("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  return get_string(is);
}

}  // namespace

template <typename S>
void write_checkpoint(std::ostream& os, const ParameterSet<S>& params, const std::string& header) {
  os.write(kMagic, 8);
  put_u32(os, kCheckpointVersion);
  put_string(os, header);
  put_u32(os, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& e : params.entries()) {
    put_string(os, e.name);
    put_u32(os, 2);
    put_u32(os, static_cast<std::uint32_t>(e.tensor.rows()));
    put_u32(os, static_cast<std::uint32_t>(e.tensor.cols()));
    const Mat<S>& v = e.tensor.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const float f = static_cast<float>(v.data()[i]);
      put_u32(os, std::bit_cast<std::uint32_t>(f));
    }
  }
  if (!os) throw IoError("failed to write checkpoint");
}

std::string read_checkpoint_header(std::istream& is) { return read_preamble(is); }

template <typename S>
std::string read_checkpoint(std::istream& is, ParameterSet<S>& params) {
  std::string header = read_preamble(is);
  const std::uint32_t count = get_u32(is);
  if (count != params.entries().size())
    throw ValidationError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.entries().size()));
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = get_string(is);
    const std::uint32_t rank = get_u32(is);
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = get_u32(is);
    Tensor<S> target = params.get(name);
    if (rank != 2 || dims[0] != target.rows() || dims[1] != target.cols())
      throw ValidationError("shape mismatch for tensor '" + name + "'");
    Mat<S>& v = target.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v.data()[i] = static_cast<S>(std::bit_cast<float>(get_u32(is)));
  }
  return header;
}

#define DTPLACE_INSTANTIATE(S)                                                                \
  template class Tape<S>;                                                                     \
  template class ParameterSet<S>;                                                             \
  template void backward(const Tensor<S>&);                                                   \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                              \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> scale(const Tensor<S>&, double);                                         \
  template Tensor<S> add_scalar(const Tensor<S>&, double);                                    \
  template Tensor<S> relu(const Tensor<S>&);                                                  \
  template Tensor<S> gelu(const Tensor<S>&);                                                  \
  template Tensor<S> sigmoid(const Tensor<S>&);                                               \
  template Tensor<S> exp(const Tensor<S>&);                                                   \
  template Tensor<S> square(const Tensor<S>&);                                                \
  template Tensor<S> sum(const Tensor<S>&);                                                   \
  template Tensor<S> mean(const Tensor<S>&);                                                  \
  template Tensor<S> transpose(const Tensor<S>&);                                             \
  template Tensor<S> reshape(const Tensor<S>&, Eigen::Index, Eigen::Index);                   \
  template Tensor<S> slice_cols(const Tensor<S>&, Eigen::Index, Eigen::Index);                \
  template Tensor<S> concat_cols(std::span<const Tensor<S>>);                                 \
  template Tensor<S> concat_rows(std::span<const Tensor<S>>);                                 \
  template Tensor<S> gather_rows(const Tensor<S>&, std::span<const int>);                     \
  template Tensor<S> embedding(const Tensor<S>&, std::span<const int>);                       \
  template Tensor<S> pick(const Tensor<S>&, std::span<const int>);                            \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, double); \
  template Tensor<S> softmax_rows(const Tensor<S>&, const Mat<S>*);                           \
  template Tensor<S> log_softmax_rows(const Tensor<S>&);                                      \
  template Tensor<S> masked_fill(const Tensor<S>&, const Mat<S>&);                            \
  template Tensor<S> row_entropy(const Tensor<S>&);                                           \
  template Tensor<S> cross_entropy(const Tensor<S>&, std::span<const int>);                   \
  template Tensor<S> bce_with_logits(const Tensor<S>&, const Mat<S>&, double);                \
  template Tensor<S> dropout(const Tensor<S>&, double, Rng&);                                 \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,             \
                            const Conv2dGeometry&);                                           \
  template Tensor<S> causal_attention(const Tensor<S>&, int, std::span<const Segment>);       \
  template Mat<S> glorot_uniform<S>(Eigen::Index, Eigen::Index, Rng&);                        \
  template Mat<S> normal_init<S>(Eigen::Index, Eigen::Index, double, Rng&);                   \
  template void adam_step(ParameterSet<S>&, AdamState<S>&, double);                           \
  template void write_checkpoint(std::ostream&, const ParameterSet<S>&, const std::string&);  \
  template std::string read_checkpoint(std::istream&, ParameterSet<S>&);

DTPLACE_INSTANTIATE(float)
DTPLACE_INSTANTIATE(double)

#undef DTPLACE_INSTANTIATE

}  // namespace dtplace::ad
