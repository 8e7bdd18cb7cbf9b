#include <doctest.h>

#include <vector>

#include "activity_airl/common.hpp"
#include "activity_airl/mdp.hpp"

using namespace activity_airl;
using namespace activity_airl::mdp;

namespace {

State make(int i, Activity a, int d, int p, int q) { return State{i, a, d, p, q}; }

std::vector<Activity> random_walk(Rng& rng) {
  std::vector<Activity> labels;
  State s = start_state();
  for (int t = 0; t < kNumSteps; ++t) {
    const ActionMask m = feasible_actions(s);
    std::vector<Activity> options;
    for (Activity a : kAllActivities)
      if (m.contains(a)) options.push_back(a);
    // Bias towards staying so runs are long enough to exercise the counters.
    Activity a = options[uniform_index(rng, options.size())];
    if (!s.is_start() && uniform01(rng) < 0.7) a = s.activity;
    labels.push_back(a);
    s = transition(s, a);
  }
  return labels;
}

}  // namespace

TEST_CASE("feasible actions follow the stay-or-travel rule") {
  const ActionMask work = feasible_actions(make(32, Activity::Work, 8, 2, 10));
  CHECK(work == ActionMask::of({Activity::Work, Activity::Travel}));
  CHECK(feasible_actions(make(40, Activity::Travel, 1, 3, 5)) == ActionMask::all());
  CHECK(feasible_actions(start_state()) == ActionMask::all());
  CHECK(feasible_actions(make(3, Activity::Home, 3, 1, 0)).size() == 2);
}

TEST_CASE("invalid states are rejected") {
  CHECK_THROWS_AS(feasible_actions(make(97, Activity::Home, 1, 1, 0)), ValidationError);
  CHECK_THROWS_AS(feasible_actions(make(5, Activity::Home, 6, 1, 0)), ValidationError);
  CHECK_THROWS_AS(feasible_actions(make(5, Activity::Work, 2, 2, 0)), ValidationError);
  CHECK_THROWS_AS(feasible_actions(make(5, Activity::Home, 2, 2, 3)), ValidationError);
  CHECK_THROWS_AS(feasible_actions(make(0, Activity::Home, 1, 0, 0)), ValidationError);
}

TEST_CASE("transition examples") {
  CHECK(transition(make(32, Activity::Work, 8, 2, 10), Activity::Work) == make(33, Activity::Work, 9, 2, 11));
  CHECK(transition(make(30, Activity::Home, 30, 1, 0), Activity::Travel) == make(31, Activity::Travel, 1, 2, 1));
  CHECK(transition(make(70, Activity::Travel, 2, 4, 40), Activity::Home) == make(71, Activity::Home, 1, 5, 0));
}

TEST_CASE("transition errors") {
  CHECK_THROWS_AS(transition(make(10, Activity::Home, 10, 1, 0), Activity::Work), MaskViolation);
  CHECK_THROWS_AS(transition(make(96, Activity::Home, 96, 1, 0), Activity::Home), EpisodeEnded);
}

TEST_CASE("first action initializes the counters") {
  const AgentProfile profile;
  const State s0 = new_episode(profile);
  CHECK(s0.time_step == 0);
  CHECK(s0.activity_token() == kStartToken);
  CHECK(transition(s0, Activity::Home) == make(1, Activity::Home, 1, 1, 0));
  CHECK(transition(s0, Activity::Travel) == make(1, Activity::Travel, 1, 1, 1));
  CHECK(transition(s0, Activity::Work) == make(1, Activity::Work, 1, 1, 1));
}

TEST_CASE("new_episode validates the profile") {
  AgentProfile bad;
  bad.age = 1.5;
  CHECK_THROWS_AS(new_episode(bad), ValidationError);
}

TEST_CASE("validate_trajectory") {
  std::vector<Activity> home(kNumSteps, Activity::Home);
  CHECK(validate_trajectory(home).valid);

  std::vector<Activity> jump = home;
  jump[1] = Activity::Work;
  const TrajectoryCheck c = validate_trajectory(jump);
  CHECK_FALSE(c.valid);
  CHECK(c.first_violation == 1);

  std::vector<Activity> short_day(kNumSteps - 1, Activity::Home);
  const TrajectoryCheck s = validate_trajectory(short_day);
  CHECK_FALSE(s.valid);
  CHECK(s.first_violation == -1);

  std::vector<Activity> travel_start = home;
  travel_start[0] = Activity::Travel;
  CHECK(validate_trajectory(travel_start).valid);
}

TEST_CASE("counters are capped at the horizon") {
  State s = start_state();
  for (int t = 0; t < kNumSteps; ++t) s = transition(s, Activity::Travel);
  CHECK(s.stay_duration == kNumSteps);
  CHECK(s.out_home_duration == kNumSteps);
}

TEST_CASE("rollout properties hold on random walks") {
  Rng rng(derive_seed(2024, 0));
  for (int trial = 0; trial < 300; ++trial) {
    const auto labels = random_walk(rng);
    REQUIRE(validate_trajectory(labels).valid);
    const auto states = rollout_states(labels);
    REQUIRE(states.size() == static_cast<std::size_t>(kNumSteps + 1));
    int changes = 0;
    for (int t = 1; t <= kNumSteps; ++t) {
      const State& s = states[static_cast<std::size_t>(t)];
      if (t > 1 && labels[static_cast<std::size_t>(t - 1)] != labels[static_cast<std::size_t>(t - 2)]) ++changes;
      CHECK(s.activity_count == 1 + changes);
      CHECK((s.out_home_duration == 0) == (s.activity == Activity::Home));
      CHECK(s.stay_duration <= s.time_step);
      CHECK(s.activity_count <= s.time_step);
      const ActionMask m = feasible_actions(s);
      CHECK(m.contains(Activity::Travel));
      CHECK(m.contains(s.activity));
      // Purity.
      if (t < kNumSteps) {
        const Activity next = labels[static_cast<std::size_t>(t)];
        CHECK(transition(s, next) == transition(s, next));
      }
    }
  }
}

TEST_CASE("name round trips") {
  for (Activity a : kAllActivities) CHECK(parse_activity(to_string(a)) == a);
  for (int e = 0; e < kNumEmployment; ++e) {
    const Employment emp = employment_from_index(e);
    CHECK(parse_employment(to_string(emp)) == emp);
  }
  CHECK(parse_employment("Full-time Student") == Employment::FullTimeStudent);
  CHECK_THROWS_AS(parse_activity("sleep"), ValidationError);
}
