#include "activity_airl/generation.hpp"

#include <algorithm>
#include <thread>

#include "activity_airl/common.hpp"

namespace activity_airl::gen {

mdp::Activity sample_activity(const Eigen::Ref<const Eigen::VectorXd>& probs, double u) {
  double cum = 0.0;
  int last = -1;
  for (int k = 0; k < probs.size(); ++k) {
    if (!(probs(k) > 0.0)) continue;
    cum += probs(k);
    last = k;
    if (u < cum) return mdp::activity_from_index(k);
  }
  if (last < 0) throw ValidationError("cannot sample from an all-zero distribution");
  return mdp::activity_from_index(last);
}

namespace {

// Lockstep sampling of episodes [begin, end) of `templates`.
void generate_range(const ChoiceModel& model, std::span<const mdp::Trajectory> templates, std::uint64_t seed,
                    std::size_t begin, std::size_t end, std::vector<mdp::Trajectory>& out) {
  const std::size_t n = end - begin;
  std::vector<Rng> rngs;
  rngs.reserve(n);
  std::vector<mdp::State> states(n, mdp::start_state());
  std::vector<mdp::AgentProfile> profiles(n);
  for (std::size_t i = 0; i < n; ++i) {
    rngs.emplace_back(derive_seed(seed, begin + i));
    profiles[i] = templates[begin + i].profile;
    mdp::validate(profiles[i]);
    auto& traj = out[begin + i];
    traj.person_id = templates[begin + i].person_id;
    traj.profile = profiles[i];
    traj.labels.clear();
    traj.labels.reserve(mdp::kNumSteps);
  }
  for (int t = 0; t < mdp::kNumSteps; ++t) {
    const Eigen::MatrixXd probs = model.choice_probabilities(states, profiles);
    for (std::size_t i = 0; i < n; ++i) {
      const mdp::Activity a = sample_activity(probs.col(static_cast<Eigen::Index>(i)), uniform01(rngs[i]));
      states[i] = mdp::transition(states[i], a);
      out[begin + i].labels.push_back(a);
    }
  }
}

}  // namespace

std::vector<mdp::Trajectory> generate(const ChoiceModel& model, std::span<const mdp::Trajectory> templates,
                                      std::uint64_t seed, int jobs) {
  std::vector<mdp::Trajectory> out(templates.size());
  if (templates.empty()) return out;
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, templates.size());
  if (workers == 1) {
    generate_range(model, templates, seed, 0, templates.size(), out);
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (templates.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(templates.size(), b + chunk);
    if (b >= e) break;
    threads.emplace_back([&, w, b, e] {
      try {
        generate_range(model, templates, seed, b, e, out);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

mdp::Trajectory generate_one(const ChoiceModel& model, const mdp::AgentProfile& profile, std::uint64_t seed) {
  mdp::Trajectory tmpl;
  tmpl.profile = profile;
  return generate(model, std::span<const mdp::Trajectory>(&tmpl, 1), seed).front();
}

void StepBatch::append(const StepBatch& other, int episode_offset) {
  states.insert(states.end(), other.states.begin(), other.states.end());
  actions.insert(actions.end(), other.actions.begin(), other.actions.end());
  next_states.insert(next_states.end(), other.next_states.begin(), other.next_states.end());
  profiles.insert(profiles.end(), other.profiles.begin(), other.profiles.end());
  masks.insert(masks.end(), other.masks.begin(), other.masks.end());
  for (int e : other.episode) episode.push_back(e + episode_offset);
}

StepBatch StepBatch::subset(std::span<const std::size_t> rows) const {
  StepBatch out;
  out.states.reserve(rows.size());
  out.actions.reserve(rows.size());
  out.next_states.reserve(rows.size());
  out.profiles.reserve(rows.size());
  out.masks.reserve(rows.size());
  out.episode.reserve(rows.size());
  for (std::size_t r : rows) {
    out.states.push_back(states[r]);
    out.actions.push_back(actions[r]);
    out.next_states.push_back(next_states[r]);
    out.profiles.push_back(profiles[r]);
    out.masks.push_back(masks[r]);
    out.episode.push_back(episode[r]);
  }
  return out;
}

StepBatch flatten(std::span<const mdp::Trajectory> trajectories) {
  StepBatch out;
  const std::size_t total = trajectories.size() * static_cast<std::size_t>(mdp::kNumSteps);
  out.states.reserve(total);
  out.actions.reserve(total);
  out.next_states.reserve(total);
  out.profiles.reserve(total);
  out.masks.reserve(total);
  out.episode.reserve(total);
  for (std::size_t e = 0; e < trajectories.size(); ++e) {
    const auto& traj = trajectories[e];
    mdp::State s = mdp::start_state();
    for (mdp::Activity a : traj.labels) {
      const mdp::ActionMask mask = mdp::feasible_actions(s);
      mdp::State next = mdp::transition(s, a);
      out.states.push_back(s);
      out.actions.push_back(a);
      out.next_states.push_back(next);
      out.profiles.push_back(traj.profile);
      out.masks.push_back(mask);
      out.episode.push_back(static_cast<int>(e));
      s = next;
    }
  }
  return out;
}

std::vector<std::vector<mdp::Activity>> labels_of(std::span<const mdp::Trajectory> trajectories) {
  std::vector<std::vector<mdp::Activity>> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.push_back(t.labels);
  return out;
}

}  // namespace activity_airl::gen
