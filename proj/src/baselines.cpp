#include "activity_airl/baselines.hpp"

#include <iomanip>
#include <ostream>

namespace activity_airl::baselines {

MarkovChain::MarkovChain()
    : counts_(static_cast<std::size_t>(mdp::kNumSteps * kTokens * mdp::kNumActivities), 0.0) {}

std::size_t MarkovChain::offset(int time_step, int token) const {
  if (time_step < 0 || time_step >= mdp::kNumSteps || token < 0 || token >= kTokens)
    throw ValidationError("Markov chain row out of range");
  return static_cast<std::size_t>((time_step * kTokens + token) * mdp::kNumActivities);
}

void MarkovChain::add(const mdp::State& state, mdp::Activity action) {
  if (!mdp::feasible_actions(state).contains(action)) throw MaskViolation("observed transition breaks the mask");
  counts_[offset(state.time_step, state.activity_token()) + static_cast<std::size_t>(mdp::index(action))] += 1.0;
}

bool MarkovChain::seen(int time_step, int token) const {
  const std::size_t o = offset(time_step, token);
  for (int k = 0; k < mdp::kNumActivities; ++k)
    if (counts_[o + static_cast<std::size_t>(k)] > 0.0) return true;
  return false;
}

double MarkovChain::count(int time_step, int token, mdp::Activity action) const {
  return counts_[offset(time_step, token) + static_cast<std::size_t>(mdp::index(action))];
}

MarkovChain::Row MarkovChain::row(const mdp::State& state) const {
  Row r{};
  const std::size_t o = offset(state.time_step, state.activity_token());
  double total = 0.0;
  for (int k = 0; k < mdp::kNumActivities; ++k) total += counts_[o + static_cast<std::size_t>(k)];
  if (total > 0.0) {
    for (int k = 0; k < mdp::kNumActivities; ++k)
      r[static_cast<std::size_t>(k)] = counts_[o + static_cast<std::size_t>(k)] / total;
  } else {
    r[static_cast<std::size_t>(state.is_start() ? mdp::index(mdp::Activity::Home) : mdp::index(state.activity))] = 1.0;
  }
  return r;
}

Eigen::MatrixXd MarkovChain::choice_probabilities(std::span<const mdp::State> states,
                                                  std::span<const mdp::AgentProfile>) const {
  Eigen::MatrixXd out(mdp::kNumActivities, static_cast<Eigen::Index>(states.size()));
  for (std::size_t b = 0; b < states.size(); ++b) {
    const Row r = row(states[b]);
    for (int k = 0; k < mdp::kNumActivities; ++k)
      out(k, static_cast<Eigen::Index>(b)) = r[static_cast<std::size_t>(k)];
  }
  return out;
}

nlohmann::json MarkovChain::to_json() const {
  nlohmann::json doc;
  doc["format"] = nn::kCheckpointFormat;
  doc["version"] = nn::kCheckpointVersion;
  doc["kind"] = "mmc";
  doc["config"] = {{"time_steps", mdp::kNumSteps}, {"tokens", kTokens}, {"activities", mdp::kNumActivities}};
  doc["params"] = nlohmann::json::array(
      {{{"name", "counts"}, {"rows", mdp::kNumSteps * kTokens}, {"cols", mdp::kNumActivities}, {"data", counts_}}});
  return doc;
}

MarkovChain MarkovChain::from_json(const nlohmann::json& doc) {
  MarkovChain m;
  const auto& arr = doc.at("params");
  if (!arr.is_array() || arr.size() != 1 || arr[0].at("name") != "counts")
    throw ShapeMismatch("Markov chain checkpoint must hold one 'counts' array");
  auto data = arr[0].at("data").get<std::vector<double>>();
  if (data.size() != m.counts_.size()) throw ShapeMismatch("Markov chain count table has the wrong size");
  m.counts_ = std::move(data);
  return m;
}

void MarkovChain::write_table(std::ostream& out) const {
  out << "time_step,activity,next_activity,count,probability\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(10);
  for (int t = 0; t < mdp::kNumSteps; ++t)
    for (int tok = 0; tok < kTokens; ++tok) {
      if (!seen(t, tok)) continue;
      const std::size_t o = offset(t, tok);
      double total = 0.0;
      for (int k = 0; k < mdp::kNumActivities; ++k) total += counts_[o + static_cast<std::size_t>(k)];
      for (int k = 0; k < mdp::kNumActivities; ++k) {
        const double c = counts_[o + static_cast<std::size_t>(k)];
        if (c == 0.0) continue;
        out << t << ',' << (tok == mdp::kStartToken ? std::string("start") : std::string(mdp::to_string(mdp::activity_from_index(tok))))
            << ',' << mdp::to_string(mdp::activity_from_index(k)) << ',' << static_cast<long>(c) << ',' << c / total
            << '\n';
      }
    }
  out.flags(flags);
  out.precision(prec);
}

MarkovChain fit_mmc(std::span<const mdp::Trajectory> train) {
  if (train.empty()) throw ValidationError("cannot fit a Markov chain on an empty training set");
  MarkovChain m;
  for (const auto& traj : train) {
    mdp::State s = mdp::start_state();
    for (mdp::Activity a : traj.labels) {
      m.add(s, a);
      s = mdp::transition(s, a);
    }
  }
  return m;
}

distill::FitResult fit_mnl(std::span<const mdp::Trajectory> train, const distill::FitOptions& options) {
  if (train.empty()) throw ValidationError("cannot fit a logit model on an empty training set");
  return distill::fit_mnl(distill::encode_dataset(train), options);
}

airl::PolicyModel fit_bc(std::span<const mdp::Trajectory> train, const airl::BcConfig& config) {
  return airl::fit_bc(train, config);
}

}  // namespace activity_airl::baselines
