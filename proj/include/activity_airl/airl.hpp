#pragma once

// Adversarial inverse reinforcement learning: shaped reward, discriminator,
// rollout collection and a clipped policy-gradient generator.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activity_airl/generation.hpp"
#include "activity_airl/nn.hpp"

namespace activity_airl::airl {

using nn::Matrix;
using nn::Vector;

/// pi(a | s, m) over the five activities, masked by feasible_actions.
class PolicyModel : public gen::ChoiceModel {
 public:
  PolicyModel() = default;
  PolicyModel(const nn::ArchitectureConfig& config, std::uint64_t seed);

  Matrix choice_probabilities(std::span<const mdp::State> states,
                              std::span<const mdp::AgentProfile> profiles) const override;
  /// Masked probabilities for given masks; keeps what backward needs in cache.
  Matrix probabilities(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles,
                       std::span<const mdp::ActionMask> masks, nn::StateProfileNet::Cache* cache = nullptr) const;
  /// log pi of the taken actions, computed stably from the logits.
  Vector log_probabilities(const gen::StepBatch& batch) const;

  nn::StateProfileNet& net() { return net_; }
  const nn::StateProfileNet& net() const { return net_; }
  nn::ParameterVector params() { return net_.params("policy."); }

  nlohmann::json checkpoint(const std::string& kind = "policy");
  static PolicyModel from_checkpoint(const nlohmann::json& doc);

 private:
  nn::StateProfileNet net_;
};

/// Baseline V(s | m) for advantage estimation. Predictions are kept in a
/// standardized scale and mapped back with running return statistics.
class ValueModel {
 public:
  ValueModel() = default;
  ValueModel(const nn::ArchitectureConfig& config, std::uint64_t seed);

  Vector predict(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles) const;
  nn::StateProfileNet& net() { return net_; }
  nn::ParameterVector params() { return net_.params("value."); }

  double mean = 0.0;
  double scale = 1.0;

 private:
  nn::StateProfileNet net_;
};

/// R(s, a, s' | m) = g(s, a, s' | m) + gamma h(s' | m) - h(s | m).
class RewardModel {
 public:
  struct Cache {
    nn::TransitionNet::Cache g;
    nn::StateProfileNet::Cache h_now, h_next;
  };

  RewardModel() = default;
  RewardModel(const nn::ArchitectureConfig& config, double gamma, std::uint64_t seed);

  double gamma() const { return gamma_; }
  void set_gamma(double gamma) { gamma_ = gamma; }

  Vector g(const gen::StepBatch& batch) const;
  Vector h(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles) const;
  Vector shaped(const gen::StepBatch& batch, Cache* cache = nullptr) const;
  /// Accumulates d(loss)/d(params) given d(loss)/dR per sample.
  void backward(const Cache& cache, const Vector& dreward);

  /// Single transition; throws ValidationError when next differs from transition(s, a).
  double shaped_reward(const mdp::State& s, mdp::Activity a, const mdp::State& next,
                       const mdp::AgentProfile& profile) const;

  nn::TransitionNet& g_net() { return g_; }
  nn::StateProfileNet& h_net() { return h_; }
  nn::ParameterVector params() {
    auto p = g_.params("reward.g.");
    p.append(h_.params("reward.h."));
    return p;
  }

  nlohmann::json checkpoint();
  static RewardModel from_checkpoint(const nlohmann::json& doc);

 private:
  nn::TransitionNet g_;
  nn::StateProfileNet h_;
  double gamma_ = 0.99;
};

/// D = exp(R) / (exp(R) + pi), evaluated as sigmoid(R - log pi).
/// Throws ValidationError unless 0 < pi <= 1 and R is finite.
double discriminate(double reward, double policy_prob);

/// Mean binary cross-entropy, expert labelled 1 and generated 0; D is clamped to [eps, 1 - eps].
double discriminator_loss(std::span<const double> d_expert, std::span<const double> d_generated,
                          double eps = 1e-12);

struct LogitLoss {
  double value = 0.0;
  Vector grad_expert;
  Vector grad_generated;
};

/// Same loss written on the logits z = R - log pi, with d(loss)/dz.
LogitLoss discriminator_loss_logits(const Vector& z_expert, const Vector& z_generated);

enum class RewardSignal { MaxEnt, Raw };
RewardSignal parse_reward_signal(const std::string& name);

/// MaxEnt: log D - log(1 - D) = R - log pi. Raw: R.
double policy_reward_signal(double reward, double policy_prob, RewardSignal mode = RewardSignal::MaxEnt);

struct RolloutBatch {
  gen::StepBatch steps;
  int num_episodes = 0;
  std::vector<mdp::Trajectory> trajectories;
  Vector log_behavior;  // log pi_old of the taken action
  Vector reward;        // per-step generator reward signal
  Vector value;
  Vector advantage;
  Vector returns;
};

/// Samples episodes_per_profile rollouts for each profile. Episode e draws from
/// derive_seed(seed, e), episodes ordered profile-major.
RolloutBatch collect_rollouts(const PolicyModel& policy, std::span<const mdp::Trajectory> profiles,
                              int episodes_per_profile, std::uint64_t seed, int jobs = 1);

/// Generalized advantage estimation; each episode ends after kNumSteps with zero bootstrap.
/// Fills advantage and returns from reward and value. Throws ValidationError on non-finite input.
void compute_advantages(RolloutBatch& batch, double gamma, double lambda);

struct PpoConfig {
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 2048;
  double entropy_coef = 0.01;
  double learning_rate = 3e-4;
  double value_learning_rate = 1e-3;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
};

struct PpoStats {
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  /// Largest |ratio - 1| within the first minibatch of the first epoch.
  double first_minibatch_ratio_deviation = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

/// Clipped surrogate objective with an entropy bonus, followed by value regression.
/// Throws ValidationError when an advantage is not finite.
PpoStats ppo_update(PolicyModel& policy, ValueModel& value, nn::Adam& policy_opt, nn::Adam& value_opt,
                    const RolloutBatch& batch, const PpoConfig& config, Rng& rng);

/// Per-sample surrogate objective -min(r A, clip(r) A) - c H, averaged, with its
/// gradient accumulated into the policy parameters when accumulate is set.
double ppo_policy_loss(PolicyModel& policy, const gen::StepBatch& steps, const Vector& log_behavior,
                       const Vector& advantage, double clip, double entropy_coef, bool accumulate,
                       PpoStats* stats = nullptr);

/// Mean negative log-likelihood of the taken actions.
double bc_loss(PolicyModel& policy, const gen::StepBatch& batch, bool accumulate);

/// Discriminator loss of the reward model on fixed policy log-probabilities.
double reward_loss(RewardModel& reward, const gen::StepBatch& expert, const Vector& log_pi_expert,
                   const gen::StepBatch& generated, const Vector& log_pi_generated, bool accumulate);

struct TrainConfig {
  nn::ArchitectureConfig architecture;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int iterations = 60;
  int episodes_per_iteration = 256;
  int discriminator_epochs = 1;
  int discriminator_minibatch = 2048;
  double discriminator_learning_rate = 2e-3;
  double discriminator_l2 = 1e-4;
  PpoConfig ppo;
  RewardSignal reward_signal = RewardSignal::MaxEnt;
  /// Supervised epochs on the demonstrations before adversarial training (0 disables).
  int bc_warmstart_epochs = 0;
  double bc_learning_rate = 1e-3;
  int bc_minibatch = 512;
  int eval_every = 10;
  int eval_users = 200;
  int divergence_patience = 25;
  double divergence_threshold = 0.49;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct IterationLog {
  int iteration = 0;
  double discriminator_loss = 0.0;
  double mean_d_expert = 0.0;
  double mean_d_generated = 0.0;
  double policy_entropy = 0.0;
  std::optional<double> eval_accuracy;
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
};

nlohmann::json to_json(const IterationLog& log);

struct TrainResult {
  PolicyModel policy;
  RewardModel reward;
  ValueModel value;
  std::vector<IterationLog> log;
};

using IterationCallback = std::function<void(const IterationLog&)>;

/// Alternates discriminator and generator updates. Throws TrainingDiverged when
/// the discriminator separates both classes too well for divergence_patience iterations.
TrainResult train(std::span<const mdp::Trajectory> demonstrations, const TrainConfig& config,
                  const IterationCallback& on_iteration = {});

struct BcConfig {
  nn::ArchitectureConfig architecture;
  int epochs = 20;
  int minibatch = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

/// Supervised cross-entropy on (state, next activity) pairs; continues from `init` when given.
PolicyModel fit_bc(std::span<const mdp::Trajectory> demonstrations, const BcConfig& config,
                   const PolicyModel* init = nullptr);

}  // namespace activity_airl::airl
