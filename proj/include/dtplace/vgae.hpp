#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dtplace/netlist.hpp"
#include "dtplace/tensor.hpp"

namespace dtplace::vgae {

/// Pooled latent mean identifying a circuit's topology.
using CircuitToken = Eigen::RowVectorXd;

inline constexpr int kHidden = 32;
inline constexpr int kLatent = 32;

/// D^-1/2 (A + I) D^-1/2.
Eigen::MatrixXd normalized_adjacency(const Eigen::MatrixXd& adjacency);

/// Two-layer graph convolutional encoder with mean and log-variance heads.
template <typename Scalar>
class Encoder {
 public:
  explicit Encoder(std::uint64_t seed, int features = kNodeFeatures, int hidden = kHidden,
                   int latent = kLatent);

  ad::ParameterSet<Scalar>& params() { return params_; }
  const ad::ParameterSet<Scalar>& params() const { return params_; }
  int features() const { return features_; }
  int hidden() const { return hidden_; }
  int latent() const { return latent_; }

  /// Checkpoint header describing the shapes.
  std::string header() const;

  struct Output {
    ad::Tensor<Scalar> mu;
    ad::Tensor<Scalar> logvar;
  };
  /// `norm_adj` is normalized_adjacency() of the graph being encoded.
  Output encode(const ad::Mat<Scalar>& norm_adj, const ad::Mat<Scalar>& features) const;
  Output encode(const CircuitGraph& graph) const;

 private:
  int features_, hidden_, latent_;
  ad::ParameterSet<Scalar> params_;
  ad::Tensor<Scalar> w1_, w_mu_, w_logvar_;
};

/// sigmoid(Z Z^T).
Eigen::MatrixXd decode(const Eigen::MatrixXd& z);

/// Reconstruction term: mean weighted binary cross-entropy of Z Z^T against
/// `labels` (A + I), positives weighted by #zeros / #ones, scaled by
/// N^2 / (2 #zeros) so the term is comparable across densities.
template <typename Scalar>
ad::Tensor<Scalar> reconstruction_loss(const ad::Tensor<Scalar>& z, const ad::Mat<Scalar>& labels);

/// Per-node mean of KL(N(mu, sigma^2) || N(0, I)), divided once more by N.
template <typename Scalar>
ad::Tensor<Scalar> kl_term(const ad::Tensor<Scalar>& mu, const ad::Tensor<Scalar>& logvar);

/// Reparameterized ELBO loss: Z = mu + exp(logvar / 2) * eps.
template <typename Scalar>
ad::Tensor<Scalar> elbo_loss(const Eigen::MatrixXd& adjacency, const ad::Tensor<Scalar>& mu,
                             const ad::Tensor<Scalar>& logvar, const ad::Mat<Scalar>& eps);

struct TrainConfig {
  int epochs = 800;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Encoder<float> encoder;
  std::vector<double> loss_history;  // one entry per epoch, mean over graphs
};

/// Full-batch training: one Adam step per epoch on the mean loss over graphs.
/// Throws NonFiniteError naming the epoch if the loss diverges.
TrainResult train(const std::vector<CircuitGraph>& graphs, const TrainConfig& config);

/// Column mean of mu; no sampling.
CircuitToken circuit_token(const CircuitGraph& graph, const Encoder<float>& encoder);

struct EdgeSplit {
  CircuitGraph train;  // held-out edges removed from the adjacency
  std::vector<std::pair<int, int>> positives;
  std::vector<std::pair<int, int>> negatives;
};

/// Holds out `fraction` of the edges (at least one when any exist) and the
/// same number of sampled non-edges.
EdgeSplit split_edges(const CircuitGraph& graph, double fraction, std::uint64_t seed);

/// Area under the ROC curve of sigmoid(mu_i . mu_j) separating positives from
/// negatives; ties count one half.
double edge_auc(const Eigen::MatrixXd& mu, const std::vector<std::pair<int, int>>& positives,
                const std::vector<std::pair<int, int>>& negatives);

void save(std::ostream& os, const Encoder<float>& encoder);
Encoder<float> load(std::istream& is);

}  // namespace dtplace::vgae
