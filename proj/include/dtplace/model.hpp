#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtplace/canvas.hpp"
#include "dtplace/tensor.hpp"
#include "dtplace/vgae.hpp"

namespace dtplace::model {

struct ModelConfig {
  int layers = 6;
  int hidden = 128;
  int heads = 8;
  int window = 256;  // state tokens kept in the context
  int grid = 84;
  int token_dim = vgae::kLatent;
  std::vector<int> projector{1024, 1024, 768};
  int state_fc = 784;
  double dropout = 0.1;

  int context() const { return 1 + 2 * window; }
  int actions() const { return grid * grid; }
  /// Throws ValidationError on inconsistent shapes.
  void validate() const;

  std::string to_header() const;
  static ModelConfig from_header(const std::string& header);

  /// Small variant for single-core runs: same layout, narrower and shallower.
  static ModelConfig desk(int grid);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Flattened [view | position | wire] channels of one state, 3 n^2 values.
template <typename Scalar>
ad::Mat<Scalar> state_features(const MaskSet& masks);

/// One sequence as the network sees it: the circuit token, states s_1..s_k
/// and the actions a_1..a_{k-1} taken between them (a_k may be present for
/// teacher forcing; it is never an input to the prediction at s_k).
struct Episode {
  const vgae::CircuitToken* token = nullptr;
  std::vector<const MaskSet*> states;
  std::vector<Action> actions;
};

/// Applies the sliding window: keeps the latest `window` states of a history
/// of states s_1..s_t and the actions between them.
Episode windowed(const vgae::CircuitToken& token, std::span<const MaskSet> states,
                 std::span<const Action> actions, int window);

template <typename Scalar>
class Policy {
 public:
  using Tensor = ad::Tensor<Scalar>;
  using Mat = ad::Mat<Scalar>;

  Policy(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ad::ParameterSet<Scalar>& params() { return params_; }
  const ad::ParameterSet<Scalar>& params() const { return params_; }

  /// Token projector output, 1 x H.
  Tensor project_token(const vgae::CircuitToken& token) const;
  /// State encoder over stacked state_features rows, R x H.
  Tensor encode_states(const Mat& features) const;
  /// Action embeddings, one row per action.
  Tensor embed_actions(std::span<const Action> actions) const;

  /// Interleaves precomputed pieces into [circuit, s_1, a_1, ..., s_k] and
  /// adds positional embeddings. Uses actions[0 .. k-2] only.
  Tensor sequence_from_parts(const Tensor& token_row, const Tensor& state_rows,
                             std::span<const Action> actions,
                             std::optional<int> pad_to = std::nullopt) const;

  /// Sequence layout [circuit, s_1, a_1, ..., s_k] with positional
  /// embeddings added, padded with zero rows up to `pad_to` rows when given.
  /// Padding rows carry no positional embedding.
  Tensor embed_sequence(const Episode& episode, std::optional<int> pad_to = std::nullopt) const;

  /// Transformer stack over packed sequences; returns final-normed hidden rows.
  Tensor backbone(const Tensor& x, std::span<const ad::Segment> segments, Rng* dropout) const;

  /// Masked action logits from hidden rows at state positions. `position`
  /// and `wire` hold one flattened n x n mask per row. Infeasible cells are
  /// -inf.
  Tensor action_logits(const Tensor& hidden, const Mat& position, const Mat& wire) const;

  /// Logits for every state of every episode, rows in episode order.
  Tensor forward(std::span<const Episode> episodes, Rng* dropout = nullptr) const;

  /// Logits for the last state of one episode.
  Eigen::VectorXd next_logits(const Episode& episode) const;

 private:
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) const;

  ModelConfig config_;
  ad::ParameterSet<Scalar> params_;

  std::vector<Tensor> proj_w_, proj_b_;
  std::vector<Tensor> conv_w_, conv_b_;
  std::vector<ad::Conv2dGeometry> conv_geom_;
  Tensor state_fc1_w_, state_fc1_b_, state_fc2_w_, state_fc2_b_;
  Tensor action_table_, positions_;
  struct Block {
    Tensor ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, fc_w, fc_b, proj_w, proj_b;
  };
  std::vector<Block> blocks_;
  Tensor ln_f_g_, ln_f_b_;
  Tensor head_w_, head_b_;
  Tensor pix1_w_, pix1_b_, pix2_w_, pix2_b_, pix3_w_, pix3_b_;
  Tensor merge_w_, merge_b_;
};

/// Mean cross-entropy of the expert actions over all states of all episodes.
/// Throws IllegalActionError naming the circuit and step when an expert action
/// falls on a masked cell. `names` labels episodes in that message.
template <typename Scalar>
ad::Tensor<Scalar> bc_loss(const ad::Tensor<Scalar>& logits, std::span<const Action> targets,
                           std::span<const std::string> names = {},
                           std::span<const int> steps_per_episode = {});

/// Per-row entropy of the masked policy (over feasible cells only).
template <typename Scalar>
ad::Tensor<Scalar> policy_entropy(const ad::Tensor<Scalar>& logits);

/// Temperature 0 takes the argmax with the lowest-index tie-break; otherwise
/// samples softmax(logits / temperature). Throws DeadEndError when every
/// logit is -inf.
Action sample_action(const Eigen::VectorXd& logits, double temperature, Rng& rng);

/// Probabilities (or the one-hot argmax at temperature 0) for a rollout.
Eigen::VectorXd action_weights(const Eigen::VectorXd& logits, double temperature);

/// Rollout policy backed by the network; caches state embeddings within a
/// rollout so each step encodes only the new state.
PolicyFn make_policy_fn(const Policy<float>& policy, const vgae::CircuitToken& token,
                        double temperature);

void save(std::ostream& os, const Policy<float>& policy);
Policy<float> load(std::istream& is);

}  // namespace dtplace::model
