#pragma once

// Reward sequences along observed days, k-means grouping of planners and
// discounted long-term returns with demographic summaries.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "activity_airl/airl.hpp"
#include "activity_airl/data_io.hpp"

namespace activity_airl::interpret {

using nn::Matrix;

struct RewardSequence {
  std::string person_id;
  std::vector<double> values;
};

/// r_i = R(s_{i-1}, y_i, s_i | m) along the reconstructed states.
/// Throws MaskViolation for a trajectory that breaks the action mask.
RewardSequence reward_sequence(const mdp::Trajectory& trajectory, const airl::RewardModel& reward);
std::vector<RewardSequence> reward_sequences(std::span<const mdp::Trajectory> trajectories,
                                             const airl::RewardModel& reward);

/// Rows are samples.
Matrix to_matrix(std::span<const RewardSequence> sequences);

struct ClusterAssignment {
  std::vector<int> labels;
  Matrix centroids;  // k x dim
  double inertia = 0.0;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

/// Sum of squared distances of each row to its centroid.
double inertia(const Matrix& data, const Matrix& centroids, std::span<const int> labels);

/// Lloyd iterations from the given centroids until assignments stop changing.
/// When trace is non-null it receives the inertia after every iteration.
ClusterAssignment lloyd(const Matrix& data, Matrix centroids, int max_iterations,
                        std::vector<double>* trace = nullptr);

/// Best of `restarts` runs seeded by greedy k-means++. Throws ValidationError when rows < k.
ClusterAssignment cluster(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Inertia for k = k_min..k_max. Each k also tries the previous best centroids plus
/// the farthest point, so the curve never increases.
std::vector<double> elbow(const Matrix& data, int k_min, int k_max, std::uint64_t seed,
                          const KMeansOptions& options = {});

/// Fraction of rows whose cluster's majority class matches their own class.
double purity(std::span<const int> clusters, std::span<const int> classes);

/// U = sum_{t=i}^{N} gamma^(t-i) r_t, with i counted from 1.
double long_term_return(std::span<const double> rewards, double gamma, int i = 1);

enum class QuantileGroup { Top = 0, MidHigh, MidLow, Low };
inline constexpr int kNumGroups = 4;
std::string_view to_string(QuantileGroup g);

struct ReturnRecord {
  std::string person_id;
  double value = 0.0;
  QuantileGroup group = QuantileGroup::Low;
};

/// Sorted by descending return, ties by person_id; split into four groups
/// whose sizes differ by at most one (earlier groups take the remainder).
std::vector<ReturnRecord> assign_return_groups(std::span<const RewardSequence> sequences, double gamma);

struct GroupSummary {
  QuantileGroup group = QuantileGroup::Top;
  int count = 0;
  std::array<double, mdp::kNumEmployment> employment_share{};
  double mean_age = 0.0;
  double female_share = 0.0;
  double mean_income = 0.0;
};

/// Survey-unit demographics per return group. Throws DataError for unknown person ids.
std::vector<GroupSummary> quantile_report(std::span<const ReturnRecord> records,
                                          std::span<const data::Person> persons);

void write_reward_sequences(std::ostream& out, std::span<const RewardSequence> sequences);
void write_clusters(std::ostream& out, std::span<const RewardSequence> sequences, const ClusterAssignment& a);
void write_returns(std::ostream& out, std::span<const ReturnRecord> records);
void write_quantile_report(std::ostream& out, std::span<const GroupSummary> groups);

}  // namespace activity_airl::interpret
