#pragma once

// Survey ingestion, time discretization, user-level splits and a seeded
// synthetic population used in place of a real travel survey.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activity_airl/mdp.hpp"

namespace activity_airl::data {

using mdp::Activity;
using mdp::Employment;

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kMinutesPerStep = kMinutesPerDay / mdp::kNumSteps;

/// Socio-demographics in survey units (years, currency).
struct Demographics {
  double age_years = 0.0;
  bool female = false;
  bool car_owner = false;
  double income = 0.0;
  Employment employment = Employment::EmployedFullTime;

  bool operator==(const Demographics&) const = default;
};

struct TripRecord {
  std::string person_id;
  int trip_index = 0;
  std::string purpose;
  int start_minute = 0;
  int end_minute = 0;
};

/// Maps raw purpose strings onto the four non-travel activities.
class PurposeTaxonomy {
 public:
  /// work/school/home map exactly; everything else falls back to others.
  static PurposeTaxonomy standard();
  /// {"map": {"purpose": "activity", ...}, "fallback": "others" | null}
  static PurposeTaxonomy from_json_text(const std::string& text);
  static PurposeTaxonomy load(const std::filesystem::path& path);

  void set(const std::string& purpose, Activity activity);
  void set_fallback(std::optional<Activity> fallback) { fallback_ = fallback; }
  /// Throws TaxonomyError for unmapped purposes when no fallback is configured.
  Activity map(std::string_view purpose) const;

 private:
  std::map<std::string, Activity> table_;
  std::optional<Activity> fallback_;
};

/// One person's trips to a 96-interval label sequence. Trips must be sorted
/// and non-overlapping (DataError otherwise). The day starts at home.
std::vector<Activity> discretize(std::span<const TripRecord> trips, const PurposeTaxonomy& taxonomy);

enum class Archetype : std::uint8_t { Worker = 0, Student, Homemaker, Retiree };
inline constexpr int kNumArchetypes = 4;
std::string_view to_string(Archetype a);
Archetype parse_archetype(std::string_view name);

struct Person {
  std::string person_id;
  Demographics demographics;
  std::vector<Activity> labels;
  /// Generating archetype for synthetic data; empty for survey data.
  std::string archetype;
};

struct Dataset {
  std::vector<Person> persons;
  std::uint64_t split_seed = 0;
};

/// Min-max scaling of age and income, fitted on one split and applied to any.
class ProfileScaler {
 public:
  ProfileScaler() = default;
  ProfileScaler(double age_min, double age_max, double income_min, double income_max);
  static ProfileScaler fit(std::span<const Person> persons);

  /// Values outside the fitted range are clamped to [0, 1].
  mdp::AgentProfile apply(const Demographics& d) const;

  double age_min() const { return age_min_; }
  double age_max() const { return age_max_; }
  double income_min() const { return income_min_; }
  double income_max() const { return income_max_; }

 private:
  double age_min_ = 0.0, age_max_ = 1.0, income_min_ = 0.0, income_max_ = 1.0;
};

std::vector<mdp::Trajectory> to_trajectories(std::span<const Person> persons, const ProfileScaler& scaler);

struct Split {
  Dataset train;
  Dataset test;
};

/// User-level random partition. The training share is round(ratio * M).
Split split(const Dataset& dataset, double ratio, std::uint64_t seed);

struct ArchetypeMix {
  double worker = 0.25;
  double student = 0.25;
  double homemaker = 0.25;
  double retiree = 0.25;
};

struct SynthConfig {
  int population = 2000;
  ArchetypeMix mix;
  /// Standard deviation of departure-time and duration noise.
  double jitter_minutes = 20.0;
  /// Probability of an extra "others" stop inserted into a template day.
  double others_rate = 0.15;
};

Dataset synthesize_population(const SynthConfig& config, std::uint64_t seed);

/// Trip template of one archetype with every noise source switched off.
std::vector<Activity> archetype_template(Archetype archetype);

struct LoadReport {
  long rows_read = 0;
  long rows_dropped = 0;
  long users_dropped = 0;
  long users_loaded = 0;
  std::vector<std::string> warnings;
};

/// Survey format: delimited text with a header naming person_id, age, gender,
/// income, car_ownership, employment_type, trip_index, purpose, start_time,
/// end_time (HH:MM). A row with empty trip fields declares a person without trips.
/// Structural problems raise ParseError; invalid field values drop the row and its user.
Dataset parse_survey(std::istream& in, const PurposeTaxonomy& taxonomy, LoadReport* report = nullptr);
Dataset load_survey(const std::filesystem::path& path, const PurposeTaxonomy& taxonomy,
                    LoadReport* report = nullptr);

/// Parses "HH:MM" into minutes after midnight; "24:00" is accepted.
std::optional<int> parse_clock(std::string_view text);

/// Line-delimited JSON, one person per line with 96 string labels.
void write_trajectories(std::ostream& out, const Dataset& dataset);
Dataset read_trajectories(std::istream& in);
void save_trajectories(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_trajectories(const std::filesystem::path& path);

/// Delimited table of person demographics (and archetype when known).
void write_profiles(std::ostream& out, const Dataset& dataset);

}  // namespace activity_airl::data
