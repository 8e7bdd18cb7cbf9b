#pragma once

// Activity-travel decision process: a day of 96 fifteen-minute decisions.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace activity_airl::mdp {

inline constexpr int kNumSteps = 96;
inline constexpr int kNumActivities = 5;
/// Embedding index reserved for the virtual start state's activity.
inline constexpr int kStartToken = kNumActivities;
inline constexpr int kNumEmployment = 8;

enum class Activity : std::uint8_t { Home = 0, Work, School, Others, Travel };

inline constexpr std::array<Activity, kNumActivities> kAllActivities = {
    Activity::Home, Activity::Work, Activity::School, Activity::Others, Activity::Travel};

constexpr int index(Activity a) { return static_cast<int>(a); }
Activity activity_from_index(int i);
std::string_view to_string(Activity a);
/// Accepts the lower-case names produced by to_string; throws ValidationError otherwise.
Activity parse_activity(std::string_view name);

enum class Employment : std::uint8_t {
  Homemaker = 0,
  FullTimeStudent,
  EmployedPartTime,
  EmployedFullTime,
  SelfEmployed,
  Unemployed,
  Retired,
  DomesticWorker
};

constexpr int index(Employment e) { return static_cast<int>(e); }
Employment employment_from_index(int i);
std::string_view to_string(Employment e);
/// Case-insensitive; spaces, hyphens and underscores are interchangeable.
Employment parse_employment(std::string_view name);

/// Set of activities, one bit per category.
class ActionMask {
 public:
  constexpr ActionMask() = default;
  static constexpr ActionMask all() { return ActionMask(0x1f); }
  static constexpr ActionMask none() { return ActionMask(0); }
  /// Bit k set means activity k is feasible; bits above the fifth are ignored.
  static constexpr ActionMask from_bits(std::uint8_t bits) { return ActionMask(static_cast<std::uint8_t>(bits & 0x1f)); }
  static constexpr ActionMask of(std::initializer_list<Activity> acts) {
    ActionMask m;
    for (Activity a : acts) m.bits_ |= static_cast<std::uint8_t>(1u << index(a));
    return m;
  }

  constexpr bool contains(Activity a) const { return (bits_ >> index(a)) & 1u; }
  constexpr bool contains(int i) const { return (bits_ >> i) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  int size() const;
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const ActionMask&) const = default;

 private:
  constexpr explicit ActionMask(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

/// Socio-demographic attributes as the models see them: continuous fields scaled to [0, 1].
struct AgentProfile {
  double age = 0.0;
  bool female = false;
  bool car_owner = false;
  double income = 0.0;
  Employment employment = Employment::EmployedFullTime;

  bool operator==(const AgentProfile&) const = default;
};

void validate(const AgentProfile& profile);

/// MDP state. time_step 0 is the virtual start; its activity field is unused.
struct State {
  int time_step = 0;
  Activity activity = Activity::Home;
  int stay_duration = 0;
  int activity_count = 0;
  int out_home_duration = 0;

  bool is_start() const { return time_step == 0; }
  /// Activity index, or kStartToken at the virtual start.
  int activity_token() const { return is_start() ? kStartToken : index(activity); }
  bool operator==(const State&) const = default;
};

std::string to_string(const State& s);

/// Throws ValidationError when the fields are out of range or mutually inconsistent.
void validate(const State& state);

ActionMask feasible_actions(const State& state);

/// Throws MaskViolation for infeasible actions and EpisodeEnded at the last step.
State transition(const State& state, Activity action);

State start_state();
State new_episode(const AgentProfile& profile);

struct Trajectory {
  std::string person_id;
  AgentProfile profile;
  std::vector<Activity> labels;
};

struct TrajectoryCheck {
  bool valid = true;
  /// Index of the first offending label, or -1 for a length error / valid sequence.
  int first_violation = -1;
  std::string reason;

  explicit operator bool() const { return valid; }
};

TrajectoryCheck validate_trajectory(std::span<const Activity> labels);
inline TrajectoryCheck validate_trajectory(const Trajectory& traj) {
  return validate_trajectory(traj.labels);
}

/// States s_0 (virtual start) through s_N visited by following the labels.
/// Throws MaskViolation if the sequence is infeasible.
std::vector<State> rollout_states(std::span<const Activity> labels);

}  // namespace activity_airl::mdp
