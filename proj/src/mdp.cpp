#include "activity_airl/mdp.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <sstream>

#include "activity_airl/common.hpp"

namespace activity_airl::mdp {

namespace {

constexpr std::array<std::string_view, kNumActivities> kActivityNames = {"home", "work", "school",
                                                                         "others", "travel"};

constexpr std::array<std::string_view, kNumEmployment> kEmploymentNames = {
    "homemaker",     "full_time_student", "employed_part_time", "employed_full_time",
    "self_employed", "unemployed",        "retired",            "domestic_worker"};

std::string normalize_token(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ' ' || c == '-' || c == '_') {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace

Activity activity_from_index(int i) {
  if (i < 0 || i >= kNumActivities) throw ValidationError("activity index out of range: " + std::to_string(i));
  return static_cast<Activity>(i);
}

std::string_view to_string(Activity a) { return kActivityNames[index(a)]; }

Activity parse_activity(std::string_view name) {
  for (int i = 0; i < kNumActivities; ++i)
    if (kActivityNames[i] == name) return static_cast<Activity>(i);
  throw ValidationError("unknown activity label '" + std::string(name) + "'");
}

Employment employment_from_index(int i) {
  if (i < 0 || i >= kNumEmployment) throw ValidationError("employment index out of range: " + std::to_string(i));
  return static_cast<Employment>(i);
}

std::string_view to_string(Employment e) { return kEmploymentNames[index(e)]; }

Employment parse_employment(std::string_view name) {
  const std::string key = normalize_token(name);
  for (int i = 0; i < kNumEmployment; ++i)
    if (kEmploymentNames[i] == key) return static_cast<Employment>(i);
  throw ValidationError("unknown employment type '" + std::string(name) + "'");
}

int ActionMask::size() const { return std::popcount(static_cast<unsigned>(bits_)); }

void validate(const AgentProfile& p) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(p.age)) throw ValidationError("profile age not normalized to [0,1]");
  if (!in_unit(p.income)) throw ValidationError("profile income not normalized to [0,1]");
  if (index(p.employment) < 0 || index(p.employment) >= kNumEmployment)
    throw ValidationError("profile employment type out of range");
}

std::string to_string(const State& s) {
  std::ostringstream os;
  if (s.is_start()) {
    os << "(start)";
  } else {
    os << "(i=" << s.time_step << ", " << to_string(s.activity) << ", d=" << s.stay_duration
       << ", p=" << s.activity_count << ", q=" << s.out_home_duration << ")";
  }
  return os.str();
}

void validate(const State& s) {
  if (s.time_step < 0 || s.time_step > kNumSteps)
    throw ValidationError("time_step out of range: " + to_string(s));
  if (index(s.activity) < 0 || index(s.activity) >= kNumActivities)
    throw ValidationError("activity out of range");
  if (s.is_start()) {
    if (s.stay_duration != 0 || s.activity_count != 0 || s.out_home_duration != 0)
      throw ValidationError("virtual start state must have zero counters");
    return;
  }
  if (s.stay_duration < 1 || s.stay_duration > s.time_step)
    throw ValidationError("stay_duration must lie in [1, time_step]: " + to_string(s));
  if (s.activity_count < 1 || s.activity_count > s.time_step)
    throw ValidationError("activity_count must lie in [1, time_step]: " + to_string(s));
  if (s.out_home_duration < 0 || s.out_home_duration > s.time_step)
    throw ValidationError("out_home_duration must lie in [0, time_step]: " + to_string(s));
  if ((s.out_home_duration == 0) != (s.activity == Activity::Home))
    throw ValidationError("out_home_duration must be zero exactly at home: " + to_string(s));
}

ActionMask feasible_actions(const State& s) {
  validate(s);
  if (s.is_start() || s.activity == Activity::Travel) return ActionMask::all();
  return ActionMask::of({s.activity, Activity::Travel});
}

State transition(const State& s, Activity action) {
  if (s.time_step >= kNumSteps) throw EpisodeEnded("episode already reached step " + std::to_string(kNumSteps));
  if (!feasible_actions(s).contains(action))
    throw MaskViolation("action " + std::string(to_string(action)) + " infeasible in state " + to_string(s));

  State next;
  next.time_step = s.time_step + 1;
  next.activity = action;
  if (s.is_start()) {
    next.stay_duration = 1;
    next.activity_count = 1;
    next.out_home_duration = action == Activity::Home ? 0 : 1;
    return next;
  }
  if (action == s.activity) {
    next.stay_duration = std::min(s.stay_duration + 1, kNumSteps);
    next.activity_count = s.activity_count;
  } else {
    next.stay_duration = 1;
    next.activity_count = std::min(s.activity_count + 1, kNumSteps);
  }
  next.out_home_duration = action == Activity::Home ? 0 : std::min(s.out_home_duration + 1, kNumSteps);
  return next;
}

State start_state() { return State{}; }

State new_episode(const AgentProfile& profile) {
  validate(profile);
  return start_state();
}

TrajectoryCheck validate_trajectory(std::span<const Activity> labels) {
  TrajectoryCheck check;
  if (labels.size() != static_cast<std::size_t>(kNumSteps)) {
    check.valid = false;
    check.reason = "expected " + std::to_string(kNumSteps) + " labels, got " + std::to_string(labels.size());
    return check;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (index(labels[i]) < 0 || index(labels[i]) >= kNumActivities) {
      check.valid = false;
      check.first_violation = static_cast<int>(i);
      check.reason = "label out of range";
      return check;
    }
    if (i == 0) continue;
    const Activity prev = labels[i - 1];
    if (prev != Activity::Travel && labels[i] != prev && labels[i] != Activity::Travel) {
      check.valid = false;
      check.first_violation = static_cast<int>(i);
      check.reason = std::string(to_string(prev)) + " -> " + std::string(to_string(labels[i])) +
                     " without travel";
      return check;
    }
  }
  return check;
}

std::vector<State> rollout_states(std::span<const Activity> labels) {
  std::vector<State> states;
  states.reserve(labels.size() + 1);
  states.push_back(start_state());
  for (Activity a : labels) states.push_back(transition(states.back(), a));
  return states;
}

}  // namespace activity_airl::mdp
