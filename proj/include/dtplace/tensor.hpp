#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dtplace/rng.hpp"

namespace dtplace::ad {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Node {
  Mat<Scalar> value;
  Mat<Scalar> grad;  // empty until something flows back
  bool requires_grad = false;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

/// Shared handle to a node in the computation graph. Copies alias.
template <typename Scalar>
class Tensor {
 public:
  using Matrix = Mat<Scalar>;

  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) {
    return Tensor(Matrix::Zero(rows, cols));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  Scalar item() const { return node_->value(0, 0); }

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

/// Per-thread record of differentiable ops in execution order.
template <typename Scalar>
class Tape {
 public:
  static Tape& current();

  bool recording() const { return enabled_; }
  void push(std::function<void()> backward) { records_.push_back(std::move(backward)); }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Runs every record once in reverse order, then clears the tape.
  void run_backward();

  class NoGrad {
   public:
    NoGrad() : tape_(Tape::current()), saved_(tape_.enabled_) { tape_.enabled_ = false; }
    ~NoGrad() { tape_.enabled_ = saved_; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Tape& tape_;
    bool saved_;
  };

 private:
  std::vector<std::function<void()>> records_;
  bool enabled_ = true;
};

template <typename Scalar>
using NoGrad = typename Tape<Scalar>::NoGrad;

/// Seeds d(loss)/d(loss) = 1 and propagates. Throws ShapeError for a
/// non-scalar loss and std::logic_error when nothing has been recorded.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

// ---------------------------------------------------------------------------
// Ops. Binary elementwise ops broadcast the right operand when it is 1 x C
// (per column), R x 1 (per row) or 1 x 1.
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, double factor);
template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, double c);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
/// tanh approximation, as in GPT-2.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x);

/// 1 x 1 reductions, accumulated in double.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x);
/// Row-major reinterpretation; rows * cols must equal x.size().
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Eigen::Index rows, Eigen::Index cols);

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Eigen::Index start, Eigen::Index count);
template <typename Scalar>
Tensor<Scalar> concat_cols(std::span<const Tensor<Scalar>> parts);
template <typename Scalar>
Tensor<Scalar> concat_rows(std::span<const Tensor<Scalar>> parts);
/// out.row(i) = x.row(index[i]); backward scatters.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& x, std::span<const int> index);
/// Rows of an embedding table.
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const int> ids);
/// out(i, 0) = x(i, cols[i]).
template <typename Scalar>
Tensor<Scalar> pick(const Tensor<Scalar>& x, std::span<const int> cols);

/// Row-wise normalization with learned gain (1 x C) and bias (1 x C).
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                          const Tensor<Scalar>& bias, double eps = 1e-5);

/// Row-wise softmax of x + mask; mask entries of -inf give probability 0.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x, const Mat<Scalar>* additive_mask = nullptr);
template <typename Scalar>
Tensor<Scalar> log_softmax_rows(const Tensor<Scalar>& x);
/// Sets entries where keep == 0 to -inf. Gradient there is zero.
template <typename Scalar>
Tensor<Scalar> masked_fill(const Tensor<Scalar>& x, const Mat<Scalar>& keep);
/// -sum_j p_j log p_j per row for log-probabilities; -inf entries contribute 0.
template <typename Scalar>
Tensor<Scalar> row_entropy(const Tensor<Scalar>& log_probs);

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets);

/// Mean over all entries of pos_weight * y * softplus(-x) + (1 - y) * softplus(x).
template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, const Mat<Scalar>& targets,
                               double pos_weight);

/// Inverted dropout; identity when rate == 0.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double rate, Rng& rng);

struct Conv2dGeometry {
  int channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  int out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

/// Batched 2-D convolution. Each input row is one C x H x W sample; weight is
/// C_out x (C * k * k); bias is 1 x C_out. Each output row is C_out x Ho x Wo.
/// Output sizes use floor division.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const Conv2dGeometry& geometry);

/// Rows [start, start + length) of qkv form one sequence; the first `valid`
/// rows are real tokens and later rows are padding.
struct Segment {
  int start = 0;
  int length = 0;
  int valid = 0;
};

/// Multi-head causal self-attention over packed sequences. qkv is R x 3H
/// ([Q | K | V]); returns R x H. Keys at padding rows are masked out.
template <typename Scalar>
Tensor<Scalar> causal_attention(const Tensor<Scalar>& qkv, int heads,
                                std::span<const Segment> segments);

// ---------------------------------------------------------------------------
// Parameters and optimization
// ---------------------------------------------------------------------------

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

template <typename Scalar>
class ParameterSet {
 public:
  /// Registers a trainable tensor; the returned handle aliases the stored one.
  Tensor<Scalar> add(std::string name, Mat<Scalar> init);
  const Tensor<Scalar>& get(const std::string& name) const;
  std::vector<NamedTensor<Scalar>>& entries() { return entries_; }
  const std::vector<NamedTensor<Scalar>>& entries() const { return entries_; }
  std::size_t count() const;
  void zero_grad();
  /// Global L2 norm of gradients (double accumulation).
  double grad_norm() const;
  /// Rescales gradients so their global norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  /// Copies values (cast) from another set with identical names and shapes.
  template <typename Other>
  void copy_from(const ParameterSet<Other>& other);

 private:
  std::vector<NamedTensor<Scalar>> entries_;
};

template <typename Scalar>
template <typename Other>
void ParameterSet<Scalar>::copy_from(const ParameterSet<Other>& other) {
  for (auto& e : entries_) e.tensor.mutable_value() = other.get(e.name).value().template cast<Scalar>();
}

template <typename Scalar>
Mat<Scalar> glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
template <typename Scalar>
Mat<Scalar> normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::vector<Mat<Scalar>> first;
  std::vector<Mat<Scalar>> second;
  std::int64_t step = 0;
};

/// Bias-corrected Adam update of every parameter that holds a gradient.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, AdamState<Scalar>& state, double lr);

// ---------------------------------------------------------------------------
// Checkpoints: "DTPCKPT1" magic, u32 version, u32 header length + UTF-8
// header, u32 tensor count, then per tensor u32 name length + name, u32 rank,
// u32 dims, raw little-endian float32 data. All integers little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
void write_checkpoint(std::ostream& os, const ParameterSet<Scalar>& params,
                      const std::string& header);
/// Fills `params` by name; throws ValidationError on missing names or shape
/// mismatch. Returns the stored header.
template <typename Scalar>
std::string read_checkpoint(std::istream& is, ParameterSet<Scalar>& params);
std::string read_checkpoint_header(std::istream& is);

}  // namespace dtplace::ad
