#include "dtplace/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <sstream>

#include "dtplace/errors.hpp"

namespace dtplace::model {

namespace {
constexpr double kWirePrior = 2.0;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("model config: " + m); };
  if (layers < 1) fail("layers must be >= 1");
  if (hidden < 1 || heads < 1 || hidden % heads != 0) fail("hidden must be a positive multiple of heads");
  if (window < 1) fail("window must be >= 1");
  if (grid < 6 || grid > 256) fail("grid must be in [6, 256]");
  if (token_dim < 1) fail("token_dim must be >= 1");
  for (int d : projector)
    if (d < 1) fail("projector widths must be positive");
  if (state_fc < 1) fail("state_fc must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

std::string ModelConfig::to_header() const {
  std::ostringstream os;
  os << "policy layers=" << layers << " hidden=" << hidden << " heads=" << heads
     << " window=" << window << " grid=" << grid << " token=" << token_dim << " projector=";
  for (std::size_t i = 0; i < projector.size(); ++i) os << (i ? "," : "") << projector[i];
  if (projector.empty()) os << "-";
  os << " state_fc=" << state_fc << " dropout=" << dropout;
  return os.str();
}

ModelConfig ModelConfig::from_header(const std::string& header) {
  std::istringstream is(header);
  std::string word;
  is >> word;
  if (word != "policy") throw ValidationError("not a policy checkpoint: '" + header + "'");
  std::map<std::string, std::string> kv;
  while (is >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw ValidationError("bad header field '" + word + "'");
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  auto get = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ValidationError(std::string("policy header lacks '") + k + "'");
    return it->second;
  };
  ModelConfig c;
  c.layers = std::stoi(get("layers"));
  c.hidden = std::stoi(get("hidden"));
  c.heads = std::stoi(get("heads"));
  c.window = std::stoi(get("window"));
  c.grid = std::stoi(get("grid"));
  c.token_dim = std::stoi(get("token"));
  c.projector.clear();
  if (get("projector") != "-") {
    std::istringstream ps(get("projector"));
    for (std::string part; std::getline(ps, part, ',');) c.projector.push_back(std::stoi(part));
  }
  c.state_fc = std::stoi(get("state_fc"));
  c.dropout = std::stod(get("dropout"));
  c.validate();
  return c;
}

ModelConfig ModelConfig::desk(int grid) {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 64;
  c.heads = 4;
  c.window = 64;
  c.grid = grid;
  c.projector = {256, 256, 192};
  c.state_fc = 196;
  c.dropout = 0.0;
  return c;
}

template <typename S>
ad::Mat<S> state_features(const MaskSet& masks) {
  const int cells = masks.n() * masks.n();
  ad::Mat<S> row(1, 3 * cells);
  row.leftCols(cells) = Eigen::Map<const ad::Mat<double>>(masks.view.data(), 1, cells).cast<S>();
  row.middleCols(cells, cells) =
      Eigen::Map<const ad::Mat<double>>(masks.position.data(), 1, cells).cast<S>();
  row.rightCols(cells) = Eigen::Map<const ad::Mat<double>>(masks.wire.data(), 1, cells).cast<S>();
  return row;
}

Episode windowed(const vgae::CircuitToken& token, std::span<const MaskSet> states,
                 std::span<const Action> actions, int window) {
  if (states.empty()) throw ValidationError("an episode needs at least one state");
  if (actions.size() + 1 < states.size())
    throw ValidationError("episode has " + std::to_string(states.size()) + " states but only " +
                          std::to_string(actions.size()) + " actions");
  const std::size_t k = states.size();
  const std::size_t first = k > static_cast<std::size_t>(window) ? k - window : 0;
  Episode e;
  e.token = &token;
  for (std::size_t i = first; i < k; ++i) e.states.push_back(&states[i]);
  for (std::size_t i = first; i + 1 < k; ++i) e.actions.push_back(actions[i]);
  return e;
}

// ---------------------------------------------------------------------------

template <typename S>
Policy<S>::Policy(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int H = config_.hidden;
  const int n = config_.grid;
  auto zeros = [](int r, int c) { return ad::Mat<S>::Zero(r, c); };
  auto ones = [](int r, int c) { return ad::Mat<S>::Ones(r, c); };

  int width = config_.token_dim;
  std::vector<int> dims = config_.projector;
  dims.push_back(H);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const std::string p = "token_proj." + std::to_string(i);
    proj_w_.push_back(params_.add(p + ".weight", ad::glorot_uniform<S>(width, dims[i], rng)));
    proj_b_.push_back(params_.add(p + ".bias", zeros(1, dims[i])));
    width = dims[i];
  }

  const int channels[4] = {3, 16, 32, 16};
  const int kernels[3] = {8, 4, 3};
  int side = n;
  for (int i = 0; i < 3; ++i) {
    ad::Conv2dGeometry g{channels[i], side, side, kernels[i], 2, 1};
    if (g.out_height() < 1) throw ValidationError("grid too small for the state encoder");
    const int patch = channels[i] * kernels[i] * kernels[i];
    const std::string p = "state_conv." + std::to_string(i);
    conv_w_.push_back(params_.add(
        p + ".weight", ad::Mat<S>(ad::glorot_uniform<S>(patch, channels[i + 1], rng).transpose())));
    conv_b_.push_back(params_.add(p + ".bias", zeros(1, channels[i + 1])));
    conv_geom_.push_back(g);
    side = g.out_height();
  }
  const int flat = channels[3] * side * side;
  state_fc1_w_ = params_.add("state_fc1.weight", ad::glorot_uniform<S>(flat, config_.state_fc, rng));
  state_fc1_b_ = params_.add("state_fc1.bias", zeros(1, config_.state_fc));
  state_fc2_w_ = params_.add("state_fc2.weight", ad::glorot_uniform<S>(config_.state_fc, H, rng));
  state_fc2_b_ = params_.add("state_fc2.bias", zeros(1, H));

  action_table_ = params_.add("action_embedding", ad::normal_init<S>(n * n, H, 0.02, rng));
  positions_ = params_.add("position_embedding", ad::normal_init<S>(config_.context(), H, 0.02, rng));

  const double resid = 0.02 / std::sqrt(2.0 * config_.layers);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "block." + std::to_string(l) + ".";
    Block b;
    b.ln1_g = params_.add(p + "ln1.gain", ones(1, H));
    b.ln1_b = params_.add(p + "ln1.bias", zeros(1, H));
    b.qkv_w = params_.add(p + "attn.qkv.weight", ad::normal_init<S>(H, 3 * H, 0.02, rng));
    b.qkv_b = params_.add(p + "attn.qkv.bias", zeros(1, 3 * H));
    b.out_w = params_.add(p + "attn.out.weight", ad::normal_init<S>(H, H, resid, rng));
    b.out_b = params_.add(p + "attn.out.bias", zeros(1, H));
    b.ln2_g = params_.add(p + "ln2.gain", ones(1, H));
    b.ln2_b = params_.add(p + "ln2.bias", zeros(1, H));
    b.fc_w = params_.add(p + "mlp.fc.weight", ad::normal_init<S>(H, 4 * H, 0.02, rng));
    b.fc_b = params_.add(p + "mlp.fc.bias", zeros(1, 4 * H));
    b.proj_w = params_.add(p + "mlp.proj.weight", ad::normal_init<S>(4 * H, H, resid, rng));
    b.proj_b = params_.add(p + "mlp.proj.bias", zeros(1, H));
    blocks_.push_back(b);
  }
  ln_f_g_ = params_.add("ln_f.gain", ones(1, H));
  ln_f_b_ = params_.add("ln_f.bias", zeros(1, H));

  head_w_ = params_.add("action_head.weight", ad::normal_init<S>(H, n * n, 0.02, rng));
  head_b_ = params_.add("action_head.bias", zeros(1, n * n));
  pix1_w_ = params_.add("action_head.conv1.weight", ad::glorot_uniform<S>(1, 8, rng));
  pix1_b_ = params_.add("action_head.conv1.bias", zeros(1, 8));
  pix2_w_ = params_.add("action_head.conv2.weight", ad::glorot_uniform<S>(8, 8, rng));
  pix2_b_ = params_.add("action_head.conv2.bias", zeros(1, 8));
  pix3_w_ = params_.add("action_head.conv3.weight", ad::glorot_uniform<S>(8, 1, rng));
  pix3_b_ = params_.add("action_head.conv3.bias", zeros(1, 1));
  // Channels are [head, position, wire]; starting with a strongly negative
  // wire weight makes the untrained policy a soft wire-mask greedy.
  ad::Mat<S> merge = ad::glorot_uniform<S>(3, 1, rng);
  merge(2, 0) = static_cast<S>(-kWirePrior * n);
  merge_w_ = params_.add("action_merge.weight", merge);
  merge_b_ = params_.add("action_merge.bias", zeros(1, 1));
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::linear(const Tensor& x, const Tensor& w, const Tensor& b) const {
  return ad::add(ad::matmul(x, w), b);
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::project_token(const vgae::CircuitToken& token) const {
  if (token.size() != config_.token_dim)
    throw ShapeError("circuit token has " + std::to_string(token.size()) + " entries, model expects " +
                     std::to_string(config_.token_dim));
  Tensor x = Tensor::constant(token.template cast<S>());
  for (std::size_t i = 0; i < proj_w_.size(); ++i) {
    x = linear(x, proj_w_[i], proj_b_[i]);
    if (i + 1 < proj_w_.size()) x = ad::relu(x);
  }
  return x;
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::encode_states(const Mat& features) const {
  const int cells = config_.grid * config_.grid;
  if (features.cols() != 3 * cells)
    throw ShapeError("state features have " + std::to_string(features.cols()) +
                     " columns, grid needs " + std::to_string(3 * cells));
  Tensor x = Tensor::constant(features);
  for (std::size_t i = 0; i < conv_w_.size(); ++i)
    x = ad::relu(ad::conv2d(x, conv_w_[i], conv_b_[i], conv_geom_[i]));
  x = ad::relu(linear(x, state_fc1_w_, state_fc1_b_));
  return linear(x, state_fc2_w_, state_fc2_b_);
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::embed_actions(std::span<const Action> actions) const {
  for (Action a : actions)
    if (a < 0 || a >= config_.actions())
      throw ShapeError("action " + std::to_string(a) + " outside the " +
                       std::to_string(config_.actions()) + "-cell grid");
  return ad::embedding(action_table_, actions);
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::sequence_from_parts(const Tensor& token_row,
                                                           const Tensor& state_rows,
                                                           std::span<const Action> actions,
                                                           std::optional<int> pad_to) const {
  const int k = static_cast<int>(state_rows.rows());
  if (k < 1 || k > config_.window)
    throw ShapeError("sequence must hold 1.." + std::to_string(config_.window) + " states, got " +
                     std::to_string(k));
  if (static_cast<int>(actions.size()) < k - 1)
    throw ShapeError("sequence with " + std::to_string(k) + " states needs " +
                     std::to_string(k - 1) + " actions");
  const Tensor action_rows = embed_actions(actions.first(k - 1));
  std::vector<Tensor> parts{token_row, state_rows};
  if (k > 1) parts.push_back(action_rows);
  const Tensor stacked = ad::concat_rows<S>(parts);
  std::vector<int> order{0};
  for (int i = 0; i < k; ++i) {
    order.push_back(1 + i);
    if (i + 1 < k) order.push_back(1 + k + i);
  }
  const int rows = static_cast<int>(order.size());
  std::vector<int> pos(rows);
  for (int i = 0; i < rows; ++i) pos[i] = i;
  Tensor seq = ad::add(ad::gather_rows(stacked, std::span<const int>(order)),
                       ad::gather_rows(positions_, std::span<const int>(pos)));
  if (pad_to && *pad_to > rows) {
    const std::vector<Tensor> padded{seq, Tensor::zeros(*pad_to - rows, config_.hidden)};
    seq = ad::concat_rows<S>(padded);
  }
  return seq;
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::embed_sequence(const Episode& episode,
                                                     std::optional<int> pad_to) const {
  if (!episode.token) throw ValidationError("episode has no circuit token");
  Mat features(static_cast<Eigen::Index>(episode.states.size()), 3 * config_.actions());
  for (std::size_t i = 0; i < episode.states.size(); ++i)
    features.row(i) = state_features<S>(*episode.states[i]);
  return sequence_from_parts(project_token(*episode.token), encode_states(features),
                             episode.actions, pad_to);
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::backbone(const Tensor& input, std::span<const ad::Segment> segments,
                                               Rng* dropout) const {
  const double p = dropout ? config_.dropout : 0.0;
  auto drop = [&](const Tensor& t) { return p > 0.0 ? ad::dropout(t, p, *dropout) : t; };
  Tensor x = drop(input);
  for (const Block& b : blocks_) {
    const Tensor h = ad::layer_norm(x, b.ln1_g, b.ln1_b);
    const Tensor att = ad::causal_attention(linear(h, b.qkv_w, b.qkv_b), config_.heads, segments);
    x = ad::add(x, drop(linear(att, b.out_w, b.out_b)));
    const Tensor h2 = ad::layer_norm(x, b.ln2_g, b.ln2_b);
    const Tensor m = linear(ad::gelu(linear(h2, b.fc_w, b.fc_b)), b.proj_w, b.proj_b);
    x = ad::add(x, drop(m));
  }
  return ad::layer_norm(x, ln_f_g_, ln_f_b_);
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::action_logits(const Tensor& hidden, const Mat& position,
                                                    const Mat& wire) const {
  const int cells = config_.actions();
  const Eigen::Index R = hidden.rows();
  if (position.rows() != R || position.cols() != cells || wire.rows() != R || wire.cols() != cells)
    throw ShapeError("action head masks must be " + std::to_string(R) + " x " + std::to_string(cells));
  const Tensor head = linear(hidden, head_w_, head_b_);
  Tensor pix = ad::reshape(head, R * cells, 1);
  pix = ad::relu(linear(pix, pix1_w_, pix1_b_));
  pix = ad::relu(linear(pix, pix2_w_, pix2_b_));
  pix = linear(pix, pix3_w_, pix3_b_);
  const std::vector<Tensor> channels{
      pix, Tensor::constant(Eigen::Map<const Mat>(position.data(), R * cells, 1)),
      Tensor::constant(Eigen::Map<const Mat>(wire.data(), R * cells, 1))};
  const Tensor merged = linear(ad::concat_cols<S>(channels), merge_w_, merge_b_);
  return ad::masked_fill(ad::reshape(merged, R, cells), position);
}

template <typename S>
typename Policy<S>::Tensor Policy<S>::forward(std::span<const Episode> episodes, Rng* dropout) const {
  if (episodes.empty()) throw ValidationError("forward needs at least one episode");
  const int cells = config_.actions();

  // Each distinct circuit token is projected once per batch.
  std::vector<const vgae::CircuitToken*> tokens;
  std::vector<int> token_of;
  int total_states = 0, total_actions = 0;
  for (const Episode& e : episodes) {
    if (!e.token) throw ValidationError("episode has no circuit token");
    if (e.states.empty()) throw ValidationError("episode has no states");
    if (static_cast<int>(e.states.size()) > config_.window)
      throw ShapeError("episode longer than the context window; apply windowed() first");
    if (e.actions.size() + 1 < e.states.size())
      throw ShapeError("episode is missing actions between its states");
    auto it = std::find(tokens.begin(), tokens.end(), e.token);
    token_of.push_back(static_cast<int>(it - tokens.begin()));
    if (it == tokens.end()) tokens.push_back(e.token);
    total_states += static_cast<int>(e.states.size());
    total_actions += static_cast<int>(e.states.size()) - 1;
  }

  std::vector<Tensor> token_rows;
  for (const auto* t : tokens) token_rows.push_back(project_token(*t));
  Mat features(total_states, 3 * cells), position(total_states, cells), wire(total_states, cells);
  std::vector<Action> actions;
  actions.reserve(total_actions);
  int r = 0;
  for (const Episode& e : episodes) {
    for (std::size_t i = 0; i < e.states.size(); ++i, ++r) {
      features.row(r) = state_features<S>(*e.states[i]);
      position.row(r) = features.row(r).segment(cells, cells);
      wire.row(r) = features.row(r).segment(2 * cells, cells);
    }
    for (std::size_t i = 0; i + 1 < e.states.size(); ++i) actions.push_back(e.actions[i]);
  }

  std::vector<Tensor> parts = token_rows;
  parts.push_back(encode_states(features));
  if (!actions.empty()) parts.push_back(embed_actions(actions));
  const Tensor stacked = ad::concat_rows<S>(parts);
  const int state_base = static_cast<int>(tokens.size());
  const int action_base = state_base + total_states;

  std::vector<int> order, pos, state_rows;
  std::vector<ad::Segment> segments;
  int s_off = 0, a_off = 0;
  for (std::size_t ei = 0; ei < episodes.size(); ++ei) {
    const int k = static_cast<int>(episodes[ei].states.size());
    const int start = static_cast<int>(order.size());
    order.push_back(token_of[ei]);
    for (int i = 0; i < k; ++i) {
      state_rows.push_back(static_cast<int>(order.size()));
      order.push_back(state_base + s_off + i);
      if (i + 1 < k) order.push_back(action_base + a_off + i);
    }
    for (int i = 0; i < 2 * k; ++i) pos.push_back(i);
    segments.push_back({start, 2 * k, 2 * k});
    s_off += k;
    a_off += k - 1;
  }
  const Tensor x = ad::add(ad::gather_rows(stacked, std::span<const int>(order)),
                           ad::gather_rows(positions_, std::span<const int>(pos)));
  const Tensor h = backbone(x, segments, dropout);
  return action_logits(ad::gather_rows(h, std::span<const int>(state_rows)), position, wire);
}

template <typename S>
Eigen::VectorXd Policy<S>::next_logits(const Episode& episode) const {
  ad::NoGrad<S> guard;
  const Tensor logits = forward(std::span<const Episode>(&episode, 1));
  return logits.value().row(logits.rows() - 1).transpose().template cast<double>();
}

// ---------------------------------------------------------------------------

template <typename S>
ad::Tensor<S> bc_loss(const ad::Tensor<S>& logits, std::span<const Action> targets,
                      std::span<const std::string> names, std::span<const int> steps_per_episode) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    throw ShapeError("bc_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " rows");
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Action a = targets[r];
    if (a < 0 || a >= logits.cols() || !std::isfinite(logits.value()(r, a))) {
      std::string where = "row " + std::to_string(r);
      if (!steps_per_episode.empty()) {
        Eigen::Index left = r;
        for (std::size_t e = 0; e < steps_per_episode.size(); ++e) {
          if (left < steps_per_episode[e]) {
            where = "circuit '" + (e < names.size() ? names[e] : std::to_string(e)) + "' step " +
                    std::to_string(left);
            break;
          }
          left -= steps_per_episode[e];
        }
      }
      throw IllegalActionError("expert action " + std::to_string(a) + " is masked at " + where);
    }
  }
  return ad::cross_entropy(logits, targets);
}

template <typename S>
ad::Tensor<S> policy_entropy(const ad::Tensor<S>& logits) {
  return ad::row_entropy(ad::log_softmax_rows(logits));
}

Action sample_action(const Eigen::VectorXd& logits, double temperature, Rng& rng) {
  const Eigen::VectorXd w = action_weights(logits, temperature);
  if (temperature <= 0.0) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w[i] > 0.0) return static_cast<Action>(i);
  }
  double u = rng.uniform();
  Action last = -1;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    last = static_cast<Action>(i);
    if (u < w[i]) return last;
    u -= w[i];
  }
  return last;
}

Eigen::VectorXd action_weights(const Eigen::VectorXd& logits, double temperature) {
  Eigen::Index best = -1;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (std::isfinite(logits[i]) && (best < 0 || logits[i] > logits[best])) best = i;
  if (best < 0) throw DeadEndError("every action is masked");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(logits.size());
  if (temperature <= 0.0) {
    w[best] = 1.0;
    return w;
  }
  const double m = logits[best];
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (std::isfinite(logits[i])) w[i] = std::exp((logits[i] - m) / temperature);
  return w / w.sum();
}

PolicyFn make_policy_fn(const Policy<float>& policy, const vgae::CircuitToken& token,
                        double temperature) {
  struct Session {
    const Policy<float>* policy;
    vgae::CircuitToken token;
    double temperature;
    ad::Mat<float> token_row;
    std::vector<ad::Mat<float>> states;  // encoded rows, one per step
  };
  auto session = std::make_shared<Session>(Session{&policy, token, temperature, {}, {}});
  return [session](const PolicyInput& in, Rng&) -> Eigen::VectorXd {
    ad::NoGrad<float> guard;
    Session& s = *session;
    const Policy<float>& p = *s.policy;
    const std::size_t t = in.history.size();
    if (t == 0 || s.token_row.size() == 0) {
      s.token_row = p.project_token(s.token).value();
      s.states.clear();
    }
    if (s.states.size() > t) s.states.resize(t);
    auto encode = [&](const MaskSet& m) { return p.encode_states(state_features<float>(m)).value(); };
    while (s.states.size() < t) s.states.push_back(encode(in.history[s.states.size()]));
    s.states.push_back(encode(in.current));

    const int window = p.config().window;
    const std::size_t k = std::min<std::size_t>(s.states.size(), window);
    const std::size_t first = s.states.size() - k;
    ad::Mat<float> rows(static_cast<Eigen::Index>(k), p.config().hidden);
    for (std::size_t i = 0; i < k; ++i) rows.row(i) = s.states[first + i];
    const auto seq = p.sequence_from_parts(ad::Tensor<float>::constant(s.token_row),
                                           ad::Tensor<float>::constant(rows),
                                           in.actions.subspan(first));
    const ad::Segment seg{0, static_cast<int>(seq.rows()), static_cast<int>(seq.rows())};
    const auto h = p.backbone(seq, std::span<const ad::Segment>(&seg, 1), nullptr);
    const int cells = p.config().actions();
    const auto f = state_features<float>(in.current);
    const auto logits = p.action_logits(
        ad::Tensor<float>::constant(h.value().bottomRows(1)), f.middleCols(cells, cells),
        f.rightCols(cells));
    return action_weights(logits.value().row(0).transpose().cast<double>(), s.temperature);
  };
}

void save(std::ostream& os, const Policy<float>& policy) {
  ad::write_checkpoint(os, policy.params(), policy.config().to_header());
}

Policy<float> load(std::istream& is) {
  const auto start = is.tellg();
  const ModelConfig config = ModelConfig::from_header(ad::read_checkpoint_header(is));
  Policy<float> policy(config, 0);
  is.seekg(start);
  ad::read_checkpoint(is, policy.params());
  return policy;
}

template ad::Mat<float> state_features<float>(const MaskSet&);
template ad::Mat<double> state_features<double>(const MaskSet&);
template class Policy<float>;
template class Policy<double>;
template ad::Tensor<float> bc_loss(const ad::Tensor<float>&, std::span<const Action>,
                                   std::span<const std::string>, std::span<const int>);
template ad::Tensor<double> bc_loss(const ad::Tensor<double>&, std::span<const Action>,
                                    std::span<const std::string>, std::span<const int>);
template ad::Tensor<float> policy_entropy(const ad::Tensor<float>&);
template ad::Tensor<double> policy_entropy(const ad::Tensor<double>&);

}  // namespace dtplace::model
