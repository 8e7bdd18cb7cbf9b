#include "activity_airl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace activity_airl::nn {

namespace {

// tanh through the vectorized exponential; exact to rounding and several times faster.
Matrix fast_tanh(const Matrix& x) { return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix(); }

void uniform_fill(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterVector

void ParameterVector::append(const ParameterVector& other) {
  blocks_.insert(blocks_.end(), other.blocks_.begin(), other.blocks_.end());
}

Eigen::Index ParameterVector::size() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks_) n += b.value->size();
  return n;
}

Vector ParameterVector::get() const {
  Vector flat(size());
  Eigen::Index off = 0;
  for (const auto& b : blocks_) {
    flat.segment(off, b.value->size()) = Eigen::Map<const Vector>(b.value->data(), b.value->size());
    off += b.value->size();
  }
  return flat;
}

void ParameterVector::set(const Vector& flat) {
  if (flat.size() != size()) throw ShapeMismatch("parameter vector size mismatch");
  Eigen::Index off = 0;
  for (const auto& b : blocks_) {
    Eigen::Map<Vector>(b.value->data(), b.value->size()) = flat.segment(off, b.value->size());
    off += b.value->size();
  }
}

Vector ParameterVector::gradient() const {
  Vector flat(size());
  Eigen::Index off = 0;
  for (const auto& b : blocks_) {
    flat.segment(off, b.grad->size()) = Eigen::Map<const Vector>(b.grad->data(), b.grad->size());
    off += b.grad->size();
  }
  return flat;
}

void ParameterVector::zero_grad() {
  for (const auto& b : blocks_) b.grad->setZero();
}

double ParameterVector::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& b : blocks_) sq += b.grad->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    for (const auto& b : blocks_) *b.grad *= scale;
  }
  return norm;
}

nlohmann::json to_json(const ArchitectureConfig& c) {
  return {{"time_embedding_dim", c.time_embedding_dim},
          {"embedding_dim", c.embedding_dim},
          {"hidden", {c.hidden1, c.hidden2}}};
}

ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig c;
  c.time_embedding_dim = j.at("time_embedding_dim").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  const auto& h = j.at("hidden");
  if (!h.is_array() || h.size() != 2) throw ConfigError("model.hidden must list two widths");
  c.hidden1 = h[0].get<int>();
  c.hidden2 = h[1].get<int>();
  if (c.time_embedding_dim < 1 || c.embedding_dim < 1 || c.hidden1 < 1 || c.hidden2 < 1)
    throw ConfigError("model dimensions must be positive");
  return c;
}

// ---------------------------------------------------------------------------
// Layers

EmbeddingTable::EmbeddingTable(int num_categories, int dim)
    : weights_(Matrix::Zero(dim, num_categories)), grad_(Matrix::Zero(dim, num_categories)) {}

Vector EmbeddingTable::lookup(int c) const {
  if (c < 0 || c >= num_categories()) throw ValidationError("embedding category out of range");
  return weights_.col(c);
}

void EmbeddingTable::gather(std::span<const int> ids, Eigen::Ref<Matrix> out) const {
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const int c = ids[b];
    if (c < 0 || c >= num_categories()) throw ValidationError("embedding category out of range");
    out.col(static_cast<Eigen::Index>(b)) = weights_.col(c);
  }
}

void EmbeddingTable::accumulate(std::span<const int> ids, const Eigen::Ref<const Matrix>& dout) {
  for (std::size_t b = 0; b < ids.size(); ++b) grad_.col(ids[b]) += dout.col(static_cast<Eigen::Index>(b));
}

void EmbeddingTable::init(Rng& rng) { uniform_fill(weights_, 0.5, rng); }

void EmbeddingTable::collect(std::vector<ParamBlock>& out, const std::string& name) {
  out.push_back({name, &weights_, &grad_});
}

Linear::Linear(int in, int out)
    : weight_(Matrix::Zero(out, in)),
      bias_(Matrix::Zero(out, 1)),
      grad_weight_(Matrix::Zero(out, in)),
      grad_bias_(Matrix::Zero(out, 1)) {}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = weight_ * x;
  y.colwise() += bias_.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  grad_weight_.noalias() += dy * x.transpose();
  grad_bias_.col(0) += dy.rowwise().sum();
  return weight_.transpose() * dy;
}

void Linear::init(Rng& rng) {
  uniform_fill(weight_, 1.0 / std::sqrt(static_cast<double>(in_dim())), rng);
  bias_.setZero();
}

void Linear::collect(std::vector<ParamBlock>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight_, &grad_weight_});
  out.push_back({prefix + ".bias", &bias_, &grad_bias_});
}

FeedForwardNet::FeedForwardNet(int in, int hidden1, int hidden2, int out)
    : layer1_(in, hidden1), layer2_(hidden1, hidden2), layer3_(hidden2, out) {}

Matrix FeedForwardNet::forward(const Matrix& x, Cache* cache) const {
  Matrix h1 = fast_tanh(layer1_.forward(x));
  Matrix h2 = fast_tanh(layer2_.forward(h1));
  Matrix y = layer3_.forward(h2);
  if (cache) {
    cache->input = x;
    cache->hidden1 = std::move(h1);
    cache->hidden2 = std::move(h2);
  }
  return y;
}

Matrix FeedForwardNet::backward(const Cache& cache, const Matrix& dout) {
  Matrix dh2 = layer3_.backward(cache.hidden2, dout);
  dh2.array() *= 1.0 - cache.hidden2.array().square();
  Matrix dh1 = layer2_.backward(cache.hidden1, dh2);
  dh1.array() *= 1.0 - cache.hidden1.array().square();
  return layer1_.backward(cache.input, dh1);
}

void FeedForwardNet::init(Rng& rng) {
  layer1_.init(rng);
  layer2_.init(rng);
  layer3_.init(rng);
}

void FeedForwardNet::collect(std::vector<ParamBlock>& out, const std::string& prefix) {
  layer1_.collect(out, prefix + ".layer1");
  layer2_.collect(out, prefix + ".layer2");
  layer3_.collect(out, prefix + ".layer3");
}

// ---------------------------------------------------------------------------
// Encoders

StateEncoder::StateEncoder(const ArchitectureConfig& c)
    : time_(mdp::kNumSteps + 1, c.time_embedding_dim),
      activity_(mdp::kNumActivities + 1, c.embedding_dim),
      stay_(mdp::kNumSteps + 1, c.embedding_dim),
      count_(mdp::kNumSteps + 1, c.embedding_dim),
      out_home_(mdp::kNumSteps + 1, c.embedding_dim) {}

int StateEncoder::dim() const {
  return time_.dim() + activity_.dim() + stay_.dim() + count_.dim() + out_home_.dim();
}

void StateEncoder::encode(std::span<const mdp::State> states, Eigen::Ref<Matrix> out, StateIds* ids) const {
  StateIds local;
  StateIds& s = ids ? *ids : local;
  const std::size_t n = states.size();
  s.time.resize(n);
  s.token.resize(n);
  s.stay.resize(n);
  s.count.resize(n);
  s.out_home.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const mdp::State& st = states[b];
    s.time[b] = st.time_step;
    s.token[b] = st.activity_token();
    s.stay[b] = st.stay_duration;
    s.count[b] = st.activity_count;
    s.out_home[b] = st.out_home_duration;
  }
  int row = 0;
  time_.gather(s.time, out.middleRows(row, time_.dim()));
  row += time_.dim();
  activity_.gather(s.token, out.middleRows(row, activity_.dim()));
  row += activity_.dim();
  stay_.gather(s.stay, out.middleRows(row, stay_.dim()));
  row += stay_.dim();
  count_.gather(s.count, out.middleRows(row, count_.dim()));
  row += count_.dim();
  out_home_.gather(s.out_home, out.middleRows(row, out_home_.dim()));
}

void StateEncoder::backward(const StateIds& ids, const Eigen::Ref<const Matrix>& dout) {
  int row = 0;
  time_.accumulate(ids.time, dout.middleRows(row, time_.dim()));
  row += time_.dim();
  activity_.accumulate(ids.token, dout.middleRows(row, activity_.dim()));
  row += activity_.dim();
  stay_.accumulate(ids.stay, dout.middleRows(row, stay_.dim()));
  row += stay_.dim();
  count_.accumulate(ids.count, dout.middleRows(row, count_.dim()));
  row += count_.dim();
  out_home_.accumulate(ids.out_home, dout.middleRows(row, out_home_.dim()));
}

void StateEncoder::init(Rng& rng) {
  time_.init(rng);
  activity_.init(rng);
  stay_.init(rng);
  count_.init(rng);
  out_home_.init(rng);
}

void StateEncoder::collect(std::vector<ParamBlock>& out, const std::string& prefix) {
  time_.collect(out, prefix + ".time");
  activity_.collect(out, prefix + ".activity");
  stay_.collect(out, prefix + ".stay");
  count_.collect(out, prefix + ".count");
  out_home_.collect(out, prefix + ".out_home");
}

ProfileEncoder::ProfileEncoder(const ArchitectureConfig& c) : employment_(mdp::kNumEmployment, c.embedding_dim) {}

void ProfileEncoder::encode(std::span<const mdp::AgentProfile> profiles, Eigen::Ref<Matrix> out,
                            std::vector<int>* ids) const {
  std::vector<int> local;
  std::vector<int>& e = ids ? *ids : local;
  e.resize(profiles.size());
  for (std::size_t b = 0; b < profiles.size(); ++b) {
    const auto& p = profiles[b];
    const auto col = static_cast<Eigen::Index>(b);
    out(0, col) = p.age;
    out(1, col) = p.female ? 1.0 : 0.0;
    out(2, col) = p.car_owner ? 1.0 : 0.0;
    out(3, col) = p.income;
    e[b] = mdp::index(p.employment);
  }
  employment_.gather(e, out.middleRows(kNumContinuous, employment_.dim()));
}

void ProfileEncoder::backward(const std::vector<int>& ids, const Eigen::Ref<const Matrix>& dout) {
  employment_.accumulate(ids, dout.middleRows(kNumContinuous, employment_.dim()));
}

void ProfileEncoder::init(Rng& rng) { employment_.init(rng); }

void ProfileEncoder::collect(std::vector<ParamBlock>& out, const std::string& prefix) {
  employment_.collect(out, prefix + ".employment");
}

// ---------------------------------------------------------------------------
// Networks

StateProfileNet::StateProfileNet(const ArchitectureConfig& c, int out_dim)
    : config_(c), state_(c), profile_(c), head_(state_.dim() + profile_.dim(), c.hidden1, c.hidden2, out_dim) {}

Matrix StateProfileNet::forward(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles,
                                Cache* cache) const {
  if (states.size() != profiles.size()) throw ValidationError("states/profiles batch size mismatch");
  const auto n = static_cast<Eigen::Index>(states.size());
  Matrix x(state_.dim() + profile_.dim(), n);
  state_.encode(states, x.topRows(state_.dim()), cache ? &cache->state_ids : nullptr);
  profile_.encode(profiles, x.bottomRows(profile_.dim()), cache ? &cache->employment_ids : nullptr);
  return head_.forward(x, cache ? &cache->ff : nullptr);
}

void StateProfileNet::backward(const Cache& cache, const Matrix& dout) {
  const Matrix dx = head_.backward(cache.ff, dout);
  state_.backward(cache.state_ids, dx.topRows(state_.dim()));
  profile_.backward(cache.employment_ids, dx.bottomRows(profile_.dim()));
}

void StateProfileNet::init(std::uint64_t seed) {
  Rng rng(seed);
  state_.init(rng);
  profile_.init(rng);
  head_.init(rng);
}

ParameterVector StateProfileNet::params(const std::string& prefix) {
  std::vector<ParamBlock> blocks;
  state_.collect(blocks, prefix + "state");
  profile_.collect(blocks, prefix + "profile");
  head_.collect(blocks, prefix + "head");
  return ParameterVector(std::move(blocks));
}

TransitionNet::TransitionNet(const ArchitectureConfig& c)
    : config_(c),
      state_(c),
      action_(mdp::kNumActivities, c.embedding_dim),
      profile_(c),
      head_(2 * state_.dim() + action_.dim() + profile_.dim(), c.hidden1, c.hidden2, 1) {}

Matrix TransitionNet::forward(std::span<const mdp::State> states, std::span<const mdp::Activity> actions,
                              std::span<const mdp::State> next_states, std::span<const mdp::AgentProfile> profiles,
                              Cache* cache) const {
  const std::size_t n = states.size();
  if (actions.size() != n || next_states.size() != n || profiles.size() != n)
    throw ValidationError("transition batch size mismatch");
  const int sd = state_.dim();
  Matrix x(2 * sd + action_.dim() + profile_.dim(), static_cast<Eigen::Index>(n));
  state_.encode(states, x.middleRows(0, sd), cache ? &cache->state_ids : nullptr);
  std::vector<int> local_actions;
  std::vector<int>& a = cache ? cache->action_ids : local_actions;
  a.resize(n);
  for (std::size_t b = 0; b < n; ++b) a[b] = mdp::index(actions[b]);
  action_.gather(a, x.middleRows(sd, action_.dim()));
  state_.encode(next_states, x.middleRows(sd + action_.dim(), sd), cache ? &cache->next_ids : nullptr);
  profile_.encode(profiles, x.bottomRows(profile_.dim()), cache ? &cache->employment_ids : nullptr);
  return head_.forward(x, cache ? &cache->ff : nullptr);
}

void TransitionNet::backward(const Cache& cache, const Matrix& dout) {
  const Matrix dx = head_.backward(cache.ff, dout);
  const int sd = state_.dim();
  state_.backward(cache.state_ids, dx.middleRows(0, sd));
  action_.accumulate(cache.action_ids, dx.middleRows(sd, action_.dim()));
  state_.backward(cache.next_ids, dx.middleRows(sd + action_.dim(), sd));
  profile_.backward(cache.employment_ids, dx.bottomRows(profile_.dim()));
}

void TransitionNet::init(std::uint64_t seed) {
  Rng rng(seed);
  state_.init(rng);
  action_.init(rng);
  profile_.init(rng);
  head_.init(rng);
}

ParameterVector TransitionNet::params(const std::string& prefix) {
  std::vector<ParamBlock> blocks;
  state_.collect(blocks, prefix + "state");
  action_.collect(blocks, prefix + "action");
  profile_.collect(blocks, prefix + "profile");
  head_.collect(blocks, prefix + "head");
  return ParameterVector(std::move(blocks));
}

// ---------------------------------------------------------------------------
// Softmax helpers

Matrix masked_softmax(const Matrix& logits, std::span<const mdp::ActionMask> masks) {
  if (static_cast<std::size_t>(logits.cols()) != masks.size())
    throw ValidationError("mask count does not match batch size");
  Matrix probs = Matrix::Zero(logits.rows(), logits.cols());
  constexpr double kMasked = std::numeric_limits<double>::lowest();
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const mdp::ActionMask mask = masks[static_cast<std::size_t>(b)];
    if (mask.empty()) throw ValidationError("empty action mask");
    double mx = kMasked;
    for (Eigen::Index k = 0; k < logits.rows(); ++k)
      if (mask.contains(static_cast<int>(k))) mx = std::max(mx, logits(k, b));
    double total = 0.0;
    for (Eigen::Index k = 0; k < logits.rows(); ++k) {
      if (!mask.contains(static_cast<int>(k))) continue;
      const double e = std::exp(logits(k, b) - mx);
      probs(k, b) = e;
      total += e;
    }
    probs.col(b) /= total;
  }
  return probs;
}

Matrix masked_log_softmax_grad(const Matrix& probs, const Matrix& weights) {
  Matrix grad = weights;
  const Eigen::RowVectorXd totals = weights.colwise().sum();
  for (Eigen::Index b = 0; b < probs.cols(); ++b) grad.col(b) -= totals(b) * probs.col(b);
  return grad;
}

Vector entropy(const Matrix& probs) {
  Vector h = Vector::Zero(probs.cols());
  for (Eigen::Index b = 0; b < probs.cols(); ++b)
    for (Eigen::Index k = 0; k < probs.rows(); ++k) {
      const double p = probs(k, b);
      if (p > 0.0) h(b) -= p * std::log(p);
    }
  return h;
}

// ---------------------------------------------------------------------------
// Gradient check

double grad_check(ParameterVector params, const std::function<double(bool)>& loss, double step) {
  params.zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) throw ValidationError("grad_check: loss is not finite");
  const Vector analytic = params.gradient();
  Vector theta = params.get();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double orig = theta(i);
    theta(i) = orig + step;
    params.set(theta);
    const double up = loss(false);
    theta(i) = orig - step;
    params.set(theta);
    const double down = loss(false);
    theta(i) = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      params.set(theta);
      throw ValidationError("grad_check: loss is not finite");
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), kGradCheckFloor});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  params.set(theta);
  return worst;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(ParameterVector params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& b : params_.blocks()) {
    m_.push_back(Matrix::Zero(b.value->rows(), b.value->cols()));
    v_.push_back(Matrix::Zero(b.value->rows(), b.value->cols()));
  }
}

void Adam::step() {
  if (options_.max_grad_norm > 0.0) params_.clip_grad_norm(options_.max_grad_norm);
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const auto blocks = params_.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Matrix& g = *blocks[i].grad;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    blocks[i].value->array() -=
        options_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json params_to_json(const ParameterVector& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : params.blocks()) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.value->size(); ++i) data.push_back(b.value->data()[i]);
    arr.push_back({{"name", b.name}, {"rows", b.value->rows()}, {"cols", b.value->cols()}, {"data", std::move(data)}});
  }
  return arr;
}

void params_from_json(const nlohmann::json& arrays, ParameterVector& params) {
  const auto blocks = params.blocks();
  if (!arrays.is_array() || arrays.size() != blocks.size())
    throw ShapeMismatch("checkpoint has " + std::to_string(arrays.size()) + " arrays, model expects " +
                        std::to_string(blocks.size()));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& a = arrays[i];
    const auto& b = blocks[i];
    if (a.at("name").get<std::string>() != b.name || a.at("rows").get<Eigen::Index>() != b.value->rows() ||
        a.at("cols").get<Eigen::Index>() != b.value->cols())
      throw ShapeMismatch("checkpoint array '" + a.at("name").get<std::string>() + "' does not match '" + b.name + "'");
    const auto& data = a.at("data");
    if (static_cast<Eigen::Index>(data.size()) != b.value->size())
      throw ShapeMismatch("checkpoint array '" + b.name + "' has wrong length");
    for (Eigen::Index k = 0; k < b.value->size(); ++k) b.value->data()[k] = data[static_cast<std::size_t>(k)].get<double>();
  }
}

nlohmann::json make_checkpoint(const std::string& kind, nlohmann::json config, const ParameterVector& params) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["kind"] = kind;
  doc["config"] = std::move(config);
  doc["params"] = params_to_json(params);
  return doc;
}

nlohmann::json read_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat)
    throw ConfigError(path.string() + " is not an activity-airl checkpoint");
  if (doc.value("version", 0) != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version in " + path.string());
  if (!expected_kind.empty() && doc.value("kind", "") != expected_kind)
    throw ShapeMismatch("checkpoint " + path.string() + " holds a '" + doc.value("kind", "") + "' model, expected '" +
                        expected_kind + "'");
  return doc;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

}  // namespace activity_airl::nn
