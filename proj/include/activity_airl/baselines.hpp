#pragma once

// Comparison models: first-order Markov chain over (time step, activity),
// hard-label multinomial logit, and behavior cloning.

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "activity_airl/airl.hpp"
#include "activity_airl/distill.hpp"
#include "activity_airl/generation.hpp"

namespace activity_airl::baselines {

/// Next-activity frequencies per (time step, current activity token).
/// Rows never observed in training keep the current activity (home at the start).
class MarkovChain : public gen::ChoiceModel {
 public:
  static constexpr int kTokens = mdp::kNumActivities + 1;
  using Row = std::array<double, mdp::kNumActivities>;

  MarkovChain();

  void add(const mdp::State& state, mdp::Activity action);
  /// Normalized row for a state; applies the unseen-row fallback.
  Row row(const mdp::State& state) const;
  bool seen(int time_step, int token) const;
  double count(int time_step, int token, mdp::Activity action) const;

  Eigen::MatrixXd choice_probabilities(std::span<const mdp::State> states,
                                       std::span<const mdp::AgentProfile> profiles) const override;

  nlohmann::json to_json() const;
  static MarkovChain from_json(const nlohmann::json& doc);
  /// time_step,activity,next_activity,count,probability for every populated row.
  void write_table(std::ostream& out) const;

 private:
  std::size_t offset(int time_step, int token) const;
  std::vector<double> counts_;  // kNumSteps x kTokens x kNumActivities
};

/// Throws ValidationError on an empty training set.
MarkovChain fit_mmc(std::span<const mdp::Trajectory> train);

/// Multinomial logit on the shared feature encoding, fitted to observed labels only.
distill::FitResult fit_mnl(std::span<const mdp::Trajectory> train, const distill::FitOptions& options = {});

/// Same architecture as the adversarial policy, trained by cross-entropy.
airl::PolicyModel fit_bc(std::span<const mdp::Trajectory> train, const airl::BcConfig& config);

}  // namespace activity_airl::baselines
