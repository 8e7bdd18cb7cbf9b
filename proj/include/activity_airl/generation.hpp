#pragma once

// Masked recursive sampling shared by the learned policy and every baseline.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "activity_airl/mdp.hpp"

namespace activity_airl::gen {

/// Anything that maps states (with profiles) to a distribution over the next activity.
class ChoiceModel {
 public:
  virtual ~ChoiceModel() = default;
  /// 5 x B matrix; column b is zero outside feasible_actions(states[b]) and sums to 1.
  virtual Eigen::MatrixXd choice_probabilities(std::span<const mdp::State> states,
                                               std::span<const mdp::AgentProfile> profiles) const = 0;
};

/// Draws an activity from a probability column using one uniform number u in [0, 1).
/// Entries with zero probability are never returned.
mdp::Activity sample_activity(const Eigen::Ref<const Eigen::VectorXd>& probs, double u);

/// One rollout per profile from the virtual start. Episode i draws from its own
/// stream derive_seed(seed, i), so results do not depend on batch size or jobs.
std::vector<mdp::Trajectory> generate(const ChoiceModel& model, std::span<const mdp::Trajectory> templates,
                                      std::uint64_t seed, int jobs = 1);

mdp::Trajectory generate_one(const ChoiceModel& model, const mdp::AgentProfile& profile, std::uint64_t seed);

/// Flat transition table of a set of trajectories, in trajectory-major order.
struct StepBatch {
  std::vector<mdp::State> states;
  std::vector<mdp::Activity> actions;
  std::vector<mdp::State> next_states;
  std::vector<mdp::AgentProfile> profiles;
  std::vector<mdp::ActionMask> masks;
  std::vector<int> episode;

  std::size_t size() const { return states.size(); }
  void append(const StepBatch& other, int episode_offset = 0);
  StepBatch subset(std::span<const std::size_t> rows) const;
};

/// Throws MaskViolation when a trajectory breaks the action mask.
StepBatch flatten(std::span<const mdp::Trajectory> trajectories);

/// Labels of each trajectory, in order.
std::vector<std::vector<mdp::Activity>> labels_of(std::span<const mdp::Trajectory> trajectories);

}  // namespace activity_airl::gen
