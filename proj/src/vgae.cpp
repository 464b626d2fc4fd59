#include "dtplace/vgae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

#include "dtplace/errors.hpp"

namespace dtplace::vgae {

Eigen::MatrixXd normalized_adjacency(const Eigen::MatrixXd& adjacency) {
  const Eigen::Index n = adjacency.rows();
  Eigen::MatrixXd a = adjacency + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

template <typename S>
Encoder<S>::Encoder(std::uint64_t seed, int features, int hidden, int latent)
    : features_(features), hidden_(hidden), latent_(latent) {
  Rng rng(seed);
  w1_ = params_.add("gcn1.weight", ad::glorot_uniform<S>(features, hidden, rng));
  w_mu_ = params_.add("gcn_mu.weight", ad::glorot_uniform<S>(hidden, latent, rng));
  w_logvar_ = params_.add("gcn_logvar.weight", ad::glorot_uniform<S>(hidden, latent, rng));
}

template <typename S>
std::string Encoder<S>::header() const {
  std::ostringstream os;
  os << "vgae features=" << features_ << " hidden=" << hidden_ << " latent=" << latent_;
  return os.str();
}

template <typename S>
typename Encoder<S>::Output Encoder<S>::encode(const ad::Mat<S>& norm_adj,
                                               const ad::Mat<S>& features) const {
  if (features.cols() != features_)
    throw ShapeError("encoder expects " + std::to_string(features_) + " node features, got " +
                     std::to_string(features.cols()));
  if (norm_adj.rows() != features.rows() || norm_adj.cols() != features.rows())
    throw ShapeError("adjacency and feature rows disagree");
  const auto a = ad::Tensor<S>::constant(norm_adj);
  const auto x = ad::Tensor<S>::constant(features);
  // (A X) W is cheaper than A (X W) when features < hidden.
  const auto h = ad::relu(ad::matmul(ad::matmul(a, x), w1_));
  const auto ah = ad::matmul(a, h);
  return {ad::matmul(ah, w_mu_), ad::matmul(ah, w_logvar_)};
}

template <typename S>
typename Encoder<S>::Output Encoder<S>::encode(const CircuitGraph& graph) const {
  return encode(normalized_adjacency(graph.adjacency).template cast<S>(),
                graph.features.template cast<S>());
}

Eigen::MatrixXd decode(const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd logits = z * z.transpose();
  return logits.unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
}

template <typename S>
ad::Tensor<S> reconstruction_loss(const ad::Tensor<S>& z, const ad::Mat<S>& labels) {
  const double total = static_cast<double>(labels.size());
  const double ones = static_cast<double>((labels.array() > S(0.5)).count());
  const double zeros = total - ones;
  double pos_weight = 1.0, norm = 1.0;
  if (zeros > 0.0 && ones > 0.0) {
    pos_weight = zeros / ones;
    norm = total / (2.0 * zeros);
  }
  const auto logits = ad::matmul(z, ad::transpose(z));
  return ad::scale(ad::bce_with_logits(logits, labels, pos_weight), norm);
}

template <typename S>
ad::Tensor<S> kl_term(const ad::Tensor<S>& mu, const ad::Tensor<S>& logvar) {
  // 0.5 * (mu^2 + sigma^2 - 1 - log sigma^2), summed over latent dims.
  const double n = static_cast<double>(mu.rows());
  const auto per_entry =
      ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
  return ad::scale(ad::sum(per_entry), 0.5 / (n * n));
}

template <typename S>
ad::Tensor<S> elbo_loss(const Eigen::MatrixXd& adjacency, const ad::Tensor<S>& mu,
                        const ad::Tensor<S>& logvar, const ad::Mat<S>& eps) {
  if (eps.rows() != mu.rows() || eps.cols() != mu.cols())
    throw ShapeError("noise shape must match mu");
  const auto sigma = ad::exp(ad::scale(logvar, 0.5));
  const auto z = ad::add(mu, ad::mul(sigma, ad::Tensor<S>::constant(eps)));
  const ad::Mat<S> labels =
      (adjacency + Eigen::MatrixXd::Identity(adjacency.rows(), adjacency.cols())).template cast<S>();
  return ad::add(reconstruction_loss(z, labels), kl_term(mu, logvar));
}

TrainResult train(const std::vector<CircuitGraph>& graphs, const TrainConfig& config) {
  if (graphs.empty()) throw ValidationError("training needs at least one graph");
  TrainResult result{Encoder<float>(mix_seed(config.seed, 1)), {}};
  auto& enc = result.encoder;

  struct Prepared {
    ad::Mat<float> norm_adj, features;
  };
  std::vector<Prepared> prepared;
  for (const auto& g : graphs)
    prepared.push_back({normalized_adjacency(g.adjacency).cast<float>(), g.features.cast<float>()});

  ad::AdamState<float> adam;
  Rng noise(mix_seed(config.seed, 2));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    enc.params().zero_grad();
    std::vector<ad::Tensor<float>> losses;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      const auto out = enc.encode(prepared[i].norm_adj, prepared[i].features);
      ad::Mat<float> eps(out.mu.rows(), out.mu.cols());
      for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = static_cast<float>(noise.normal());
      losses.push_back(elbo_loss(graphs[i].adjacency, out.mu, out.logvar, eps));
    }
    const auto stacked = ad::concat_rows<float>(losses);
    const auto loss = ad::mean(stacked);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw NonFiniteError("circuit encoder loss diverged at epoch " + std::to_string(epoch));
    ad::backward(loss);
    ad::adam_step(enc.params(), adam, config.lr);
    result.loss_history.push_back(value);
  }
  return result;
}

CircuitToken circuit_token(const CircuitGraph& graph, const Encoder<float>& encoder) {
  if (graph.adjacency.rows() == 0) return CircuitToken::Zero(encoder.latent());
  ad::NoGrad<float> guard;
  const auto out = encoder.encode(graph);
  const Eigen::MatrixXd mu = out.mu.value().cast<double>();
  return mu.colwise().mean();
}

EdgeSplit split_edges(const CircuitGraph& graph, double fraction, std::uint64_t seed) {
  const auto n = static_cast<int>(graph.adjacency.rows());
  std::vector<std::pair<int, int>> edges, non_edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      (graph.adjacency(i, j) > 0.5 ? edges : non_edges).emplace_back(i, j);
  Rng rng(seed);
  rng.shuffle(edges.begin(), edges.end());
  rng.shuffle(non_edges.begin(), non_edges.end());
  std::size_t held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(edges.size())));
  if (held == 0 && !edges.empty()) held = 1;
  held = std::min(held, non_edges.size());

  EdgeSplit split;
  split.train = graph;
  split.positives.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(held));
  split.negatives.assign(non_edges.begin(), non_edges.begin() + static_cast<std::ptrdiff_t>(held));
  for (auto [i, j] : split.positives) split.train.adjacency(i, j) = split.train.adjacency(j, i) = 0.0;
  return split;
}

double edge_auc(const Eigen::MatrixXd& mu, const std::vector<std::pair<int, int>>& positives,
                const std::vector<std::pair<int, int>>& negatives) {
  if (positives.empty() || negatives.empty()) throw ValidationError("AUC needs both classes");
  auto score = [&](std::pair<int, int> e) { return mu.row(e.first).dot(mu.row(e.second)); };
  double wins = 0.0;
  for (const auto& p : positives) {
    const double sp = score(p);
    for (const auto& q : negatives) {
      const double sq = score(q);
      wins += sp > sq ? 1.0 : (sp == sq ? 0.5 : 0.0);
    }
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

void save(std::ostream& os, const Encoder<float>& encoder) {
  ad::write_checkpoint(os, encoder.params(), encoder.header());
}

Encoder<float> load(std::istream& is) {
  const auto start = is.tellg();
  const std::string header = ad::read_checkpoint_header(is);
  int features = 0, hidden = 0, latent = 0;
  if (std::sscanf(header.c_str(), "vgae features=%d hidden=%d latent=%d", &features, &hidden,
                  &latent) != 3)
    throw ValidationError("not a circuit encoder checkpoint: '" + header + "'");
  Encoder<float> enc(0, features, hidden, latent);
  is.seekg(start);
  ad::read_checkpoint(is, enc.params());
  return enc;
}

template class Encoder<float>;
template class Encoder<double>;
template ad::Tensor<float> reconstruction_loss(const ad::Tensor<float>&, const ad::Mat<float>&);
template ad::Tensor<double> reconstruction_loss(const ad::Tensor<double>&, const ad::Mat<double>&);
template ad::Tensor<float> kl_term(const ad::Tensor<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> kl_term(const ad::Tensor<double>&, const ad::Tensor<double>&);
template ad::Tensor<float> elbo_loss(const Eigen::MatrixXd&, const ad::Tensor<float>&,
                                     const ad::Tensor<float>&, const ad::Mat<float>&);
template ad::Tensor<double> elbo_loss(const Eigen::MatrixXd&, const ad::Tensor<double>&,
                                      const ad::Tensor<double>&, const ad::Mat<double>&);

}  // namespace dtplace::vgae
