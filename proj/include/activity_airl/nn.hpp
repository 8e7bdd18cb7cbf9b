#pragma once

// Small differentiable building blocks with explicit forward/backward passes.
// Batches are stored column-wise: one column per sample.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "activity_airl/common.hpp"
#include "activity_airl/mdp.hpp"

namespace activity_airl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A named parameter array and its gradient accumulator.
struct ParamBlock {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

/// Flat view over every parameter of one or more models. Holds pointers into
/// the models, which must outlive the view and must not be moved meanwhile.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {}

  void append(const ParameterVector& other);
  std::span<const ParamBlock> blocks() const { return blocks_; }
  Eigen::Index size() const;

  Vector get() const;
  void set(const Vector& flat);
  Vector gradient() const;
  void zero_grad();
  /// Scales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<ParamBlock> blocks_;
};

/// Shapes of the encoders and hidden layers.
struct ArchitectureConfig {
  int time_embedding_dim = 8;
  int embedding_dim = 4;
  int hidden1 = 64;
  int hidden2 = 64;

  bool operator==(const ArchitectureConfig&) const = default;
};

nlohmann::json to_json(const ArchitectureConfig& c);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int num_categories, int dim);

  int num_categories() const { return static_cast<int>(weights_.cols()); }
  int dim() const { return static_cast<int>(weights_.rows()); }
  /// Embedding of category c.
  Vector lookup(int c) const;
  void gather(std::span<const int> ids, Eigen::Ref<Matrix> out) const;
  /// Adds dout columns into the rows of the looked-up categories only.
  void accumulate(std::span<const int> ids, const Eigen::Ref<const Matrix>& dout);

  void init(Rng& rng);
  void collect(std::vector<ParamBlock>& out, const std::string& name);

 private:
  Matrix weights_;  // dim x num_categories
  Matrix grad_;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out);

  int in_dim() const { return static_cast<int>(weight_.cols()); }
  int out_dim() const { return static_cast<int>(weight_.rows()); }
  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients and returns d(loss)/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  void init(Rng& rng);
  void collect(std::vector<ParamBlock>& out, const std::string& prefix);

 private:
  Matrix weight_, bias_;
  Matrix grad_weight_, grad_bias_;
};

/// Three affine layers with tanh between them.
class FeedForwardNet {
 public:
  struct Cache {
    Matrix input, hidden1, hidden2;
  };

  FeedForwardNet() = default;
  FeedForwardNet(int in, int hidden1, int hidden2, int out);

  int in_dim() const { return layer1_.in_dim(); }
  int out_dim() const { return layer3_.out_dim(); }
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dout);

  void init(Rng& rng);
  void collect(std::vector<ParamBlock>& out, const std::string& prefix);

 private:
  Linear layer1_, layer2_, layer3_;
};

/// Embedding indices of a batch of states, kept for the backward pass.
struct StateIds {
  std::vector<int> time, token, stay, count, out_home;
};

/// Embeds the five state features: time step, activity (with the start token),
/// stay duration, activity count and out-of-home duration (0 is its own bucket).
class StateEncoder {
 public:
  StateEncoder() = default;
  explicit StateEncoder(const ArchitectureConfig& config);

  int dim() const;
  void encode(std::span<const mdp::State> states, Eigen::Ref<Matrix> out, StateIds* ids) const;
  void backward(const StateIds& ids, const Eigen::Ref<const Matrix>& dout);

  void init(Rng& rng);
  void collect(std::vector<ParamBlock>& out, const std::string& prefix);

 private:
  EmbeddingTable time_, activity_, stay_, count_, out_home_;
};

/// Continuous profile fields enter raw; employment type is embedded.
class ProfileEncoder {
 public:
  static constexpr int kNumContinuous = 4;

  ProfileEncoder() = default;
  explicit ProfileEncoder(const ArchitectureConfig& config);

  int dim() const { return kNumContinuous + employment_.dim(); }
  void encode(std::span<const mdp::AgentProfile> profiles, Eigen::Ref<Matrix> out, std::vector<int>* ids) const;
  void backward(const std::vector<int>& ids, const Eigen::Ref<const Matrix>& dout);

  void init(Rng& rng);
  void collect(std::vector<ParamBlock>& out, const std::string& prefix);

 private:
  EmbeddingTable employment_;
};

/// f(s | m): state and profile encoders feeding a feedforward head.
/// Used for the policy logits, the value baseline and the shaping potential.
class StateProfileNet {
 public:
  struct Cache {
    StateIds state_ids;
    std::vector<int> employment_ids;
    FeedForwardNet::Cache ff;
  };

  StateProfileNet() = default;
  StateProfileNet(const ArchitectureConfig& config, int out_dim);

  const ArchitectureConfig& config() const { return config_; }
  int out_dim() const { return head_.out_dim(); }
  Matrix forward(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles,
                 Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Matrix& dout);

  void init(std::uint64_t seed);
  ParameterVector params(const std::string& prefix = "");

 private:
  ArchitectureConfig config_;
  StateEncoder state_;
  ProfileEncoder profile_;
  FeedForwardNet head_;
};

/// g(s, a, s' | m): current and next state share one state encoder.
class TransitionNet {
 public:
  struct Cache {
    StateIds state_ids, next_ids;
    std::vector<int> action_ids, employment_ids;
    FeedForwardNet::Cache ff;
  };

  TransitionNet() = default;
  explicit TransitionNet(const ArchitectureConfig& config);

  const ArchitectureConfig& config() const { return config_; }
  Matrix forward(std::span<const mdp::State> states, std::span<const mdp::Activity> actions,
                 std::span<const mdp::State> next_states, std::span<const mdp::AgentProfile> profiles,
                 Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Matrix& dout);

  void init(std::uint64_t seed);
  ParameterVector params(const std::string& prefix = "");

 private:
  ArchitectureConfig config_;
  StateEncoder state_;
  EmbeddingTable action_;
  ProfileEncoder profile_;
  FeedForwardNet head_;
};

/// Softmax over the feasible entries of each column. Infeasible logits are
/// replaced by the lowest representable double, so their probability is exactly 0.
/// Throws ValidationError on an empty mask.
Matrix masked_softmax(const Matrix& logits, std::span<const mdp::ActionMask> masks);

/// Gradient of sum_b w_b . log p_b with respect to the logits, where p = masked_softmax.
/// Columns of `weights` are per-sample target weights (zero off-mask).
Matrix masked_log_softmax_grad(const Matrix& probs, const Matrix& weights);

/// Entropy of each probability column (0 log 0 = 0).
Vector entropy(const Matrix& probs);

/// Per-parameter relative error between the analytic gradient and central
/// finite differences, maximized over all parameters. The denominator is
/// floored at kGradCheckFloor so that near-zero gradients are judged absolutely.
inline constexpr double kGradCheckFloor = 1e-3;

/// `loss(true)` must evaluate the loss and accumulate its gradient into the
/// parameters' grad buffers (which are zeroed beforehand); `loss(false)` only evaluates.
/// Throws ValidationError when the loss is not finite.
double grad_check(ParameterVector params, const std::function<double(bool)>& loss, double step);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; non-positive disables clipping.
  double max_grad_norm = 0.0;
};

class Adam {
 public:
  Adam() = default;
  Adam(ParameterVector params, AdamOptions options);
  void step();
  void zero_grad() { params_.zero_grad(); }
  const AdamOptions& options() const { return options_; }

 private:
  ParameterVector params_;
  AdamOptions options_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

// Checkpoints: a JSON document
//   {"format": "activity-airl-checkpoint", "version": 1, "kind": ..., "config": {...},
//    "params": [{"name": ..., "rows": r, "cols": c, "data": [column-major values]}]}
inline constexpr const char* kCheckpointFormat = "activity-airl-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json params_to_json(const ParameterVector& params);
/// Throws ShapeMismatch when names or shapes differ from the target.
void params_from_json(const nlohmann::json& arrays, ParameterVector& params);

nlohmann::json make_checkpoint(const std::string& kind, nlohmann::json config, const ParameterVector& params);
/// Validates the header; returns the document.
nlohmann::json read_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "");
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace activity_airl::nn
