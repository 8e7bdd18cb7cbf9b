#include "activity_airl/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace activity_airl::interpret {

RewardSequence reward_sequence(const mdp::Trajectory& trajectory, const airl::RewardModel& reward) {
  const mdp::TrajectoryCheck check = mdp::validate_trajectory(trajectory.labels);
  if (!check.valid)
    throw MaskViolation("trajectory " + trajectory.person_id + " is not mask-feasible: " + check.reason);
  const gen::StepBatch steps = gen::flatten(std::span<const mdp::Trajectory>(&trajectory, 1));
  const Eigen::VectorXd r = reward.shaped(steps);
  RewardSequence seq;
  seq.person_id = trajectory.person_id;
  seq.values.assign(r.data(), r.data() + r.size());
  return seq;
}

std::vector<RewardSequence> reward_sequences(std::span<const mdp::Trajectory> trajectories,
                                             const airl::RewardModel& reward) {
  std::vector<RewardSequence> out;
  out.reserve(trajectories.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < trajectories.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, trajectories.size() - start);
    const auto part = trajectories.subspan(start, len);
    for (const auto& t : part) {
      const mdp::TrajectoryCheck check = mdp::validate_trajectory(t.labels);
      if (!check.valid) throw MaskViolation("trajectory " + t.person_id + " is not mask-feasible: " + check.reason);
    }
    const gen::StepBatch steps = gen::flatten(part);
    const Eigen::VectorXd r = reward.shaped(steps);
    for (std::size_t i = 0; i < len; ++i) {
      RewardSequence seq;
      seq.person_id = part[i].person_id;
      const auto off = static_cast<Eigen::Index>(i * mdp::kNumSteps);
      seq.values.assign(r.data() + off, r.data() + off + mdp::kNumSteps);
      out.push_back(std::move(seq));
    }
  }
  return out;
}

Matrix to_matrix(std::span<const RewardSequence> sequences) {
  if (sequences.empty()) return Matrix();
  const auto dim = static_cast<Eigen::Index>(sequences.front().values.size());
  Matrix m(static_cast<Eigen::Index>(sequences.size()), dim);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (static_cast<Eigen::Index>(sequences[i].values.size()) != dim)
      throw ValidationError("reward sequences differ in length");
    for (Eigen::Index j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), j) = sequences[i].values[static_cast<std::size_t>(j)];
  }
  return m;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

// Squared distance from every row to its nearest centroid among the first `k`.
Eigen::VectorXd nearest_sq(const Matrix& data, const Matrix& centroids, Eigen::Index k) {
  Eigen::VectorXd best = Eigen::VectorXd::Constant(data.rows(), std::numeric_limits<double>::infinity());
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::VectorXd d = (data.rowwise() - centroids.row(c)).rowwise().squaredNorm();
    best = best.cwiseMin(d);
  }
  return best;
}

Matrix kmeanspp(const Matrix& data, int k, Rng& rng) {
  const Eigen::Index n = data.rows();
  Matrix centroids(k, data.cols());
  centroids.row(0) = data.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = nearest_sq(data, centroids, 1);
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    double best_pot = std::numeric_limits<double>::infinity();
    Eigen::Index best_idx = 0;
    Eigen::VectorXd best_d2;
    for (int t = 0; t < trials; ++t) {
      Eigen::Index idx = 0;
      if (total > 0.0) {
        const double u = uniform01(rng) * total;
        double cum = 0.0;
        idx = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
          cum += d2(i);
          if (u < cum) {
            idx = i;
            break;
          }
        }
      } else {
        idx = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
      }
      const Eigen::VectorXd cand = d2.cwiseMin((data.rowwise() - data.row(idx)).rowwise().squaredNorm());
      const double pot = cand.sum();
      if (pot < best_pot) {
        best_pot = pot;
        best_idx = idx;
        best_d2 = cand;
      }
    }
    centroids.row(c) = data.row(best_idx);
    d2 = best_d2;
  }
  return centroids;
}

}  // namespace

double inertia(const Matrix& data, const Matrix& centroids, std::span<const int> labels) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    s += (data.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

ClusterAssignment lloyd(const Matrix& data, Matrix centroids, int max_iterations, std::vector<double>* trace) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centroids.rows();
  ClusterAssignment a;
  a.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < std::max(max_iterations, 1); ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = (data.row(i) - centroids.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      if (a.labels[static_cast<std::size_t>(i)] != best) {
        a.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (trace) trace->push_back(inertia(data, centroids, a.labels));
    if (!changed && it > 0) break;
    // Centroid update; an empty cluster takes the point farthest from its centroid.
    Matrix sums = Matrix::Zero(k, data.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(a.labels[static_cast<std::size_t>(i)]) += data.row(i);
      ++counts[static_cast<std::size_t>(a.labels[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      Eigen::Index far = 0;
      double fd = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int own = a.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(own)] <= 1) continue;
        const double d = (data.row(i) - centroids.row(own)).squaredNorm();
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      if (fd < 0.0) continue;
      const int own = a.labels[static_cast<std::size_t>(far)];
      sums.row(own) -= data.row(far);
      --counts[static_cast<std::size_t>(own)];
      centroids.row(own) = sums.row(own) / counts[static_cast<std::size_t>(own)];
      a.labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      counts[static_cast<std::size_t>(c)] = 1;
      centroids.row(c) = data.row(far);
    }
  }
  a.centroids = std::move(centroids);
  a.inertia = inertia(data, a.centroids, a.labels);
  return a;
}

ClusterAssignment cluster(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (data.rows() < k) throw ValidationError("fewer sequences than clusters");
  ClusterAssignment best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(options.restarts, 1); ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    ClusterAssignment a = lloyd(data, kmeanspp(data, k, rng), options.max_iterations);
    if (a.inertia < best.inertia) best = std::move(a);
  }
  return best;
}

std::vector<double> elbow(const Matrix& data, int k_min, int k_max, std::uint64_t seed, const KMeansOptions& options) {
  if (k_min < 1 || k_max < k_min) throw ValidationError("invalid k range");
  std::vector<double> curve;
  ClusterAssignment prev;
  for (int k = k_min; k <= k_max; ++k) {
    ClusterAssignment best = cluster(data, k, derive_seed(seed, static_cast<std::uint64_t>(k)), options);
    if (k > k_min) {
      const Eigen::VectorXd d2 = nearest_sq(data, prev.centroids, prev.centroids.rows());
      Eigen::Index far = 0;
      d2.maxCoeff(&far);
      Matrix init(k, data.cols());
      init.topRows(k - 1) = prev.centroids;
      init.row(k - 1) = data.row(far);
      ClusterAssignment warm = lloyd(data, init, options.max_iterations);
      if (warm.inertia < best.inertia) best = std::move(warm);
    }
    curve.push_back(best.inertia);
    prev = std::move(best);
  }
  return curve;
}

double purity(std::span<const int> clusters, std::span<const int> classes) {
  if (clusters.size() != classes.size() || clusters.empty()) throw ValidationError("purity needs aligned labels");
  std::map<int, std::map<int, int>> table;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++table[clusters[i]][classes[i]];
  long hits = 0;
  for (const auto& [c, row] : table) {
    int best = 0;
    for (const auto& [cls, n] : row) best = std::max(best, n);
    hits += best;
  }
  return static_cast<double>(hits) / static_cast<double>(clusters.size());
}

// ---------------------------------------------------------------------------
// Returns

double long_term_return(std::span<const double> rewards, double gamma, int i) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
  if (i < 1 || static_cast<std::size_t>(i) > rewards.size()) throw ValidationError("start index out of range");
  double u = 0.0;
  for (std::size_t t = rewards.size(); t-- > static_cast<std::size_t>(i - 1);) u = rewards[t] + gamma * u;
  return u;
}

std::string_view to_string(QuantileGroup g) {
  switch (g) {
    case QuantileGroup::Top: return "top";
    case QuantileGroup::MidHigh: return "mid-high";
    case QuantileGroup::MidLow: return "mid-low";
    case QuantileGroup::Low: return "low";
  }
  return "low";
}

std::vector<ReturnRecord> assign_return_groups(std::span<const RewardSequence> sequences, double gamma) {
  std::vector<ReturnRecord> records;
  records.reserve(sequences.size());
  for (const auto& s : sequences) records.push_back({s.person_id, long_term_return(s.values, gamma), QuantileGroup::Low});
  std::sort(records.begin(), records.end(), [](const ReturnRecord& a, const ReturnRecord& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.person_id < b.person_id;
  });
  const std::size_t n = records.size();
  const std::size_t base = n / kNumGroups, extra = n % kNumGroups;
  std::size_t pos = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    const std::size_t size = base + (static_cast<std::size_t>(g) < extra ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) records[pos++].group = static_cast<QuantileGroup>(g);
  }
  return records;
}

std::vector<GroupSummary> quantile_report(std::span<const ReturnRecord> records, std::span<const data::Person> persons) {
  std::unordered_map<std::string, const data::Person*> by_id;
  for (const auto& p : persons) by_id[p.person_id] = &p;
  std::vector<GroupSummary> out(kNumGroups);
  for (int g = 0; g < kNumGroups; ++g) out[static_cast<std::size_t>(g)].group = static_cast<QuantileGroup>(g);
  for (const auto& r : records) {
    const auto it = by_id.find(r.person_id);
    if (it == by_id.end()) throw DataError("no demographics for person " + r.person_id);
    const data::Demographics& d = it->second->demographics;
    GroupSummary& s = out[static_cast<std::size_t>(r.group)];
    ++s.count;
    s.employment_share[static_cast<std::size_t>(mdp::index(d.employment))] += 1.0;
    s.mean_age += d.age_years;
    s.female_share += d.female ? 1.0 : 0.0;
    s.mean_income += d.income;
  }
  for (auto& s : out) {
    if (s.count == 0) continue;
    const double c = s.count;
    for (double& e : s.employment_share) e /= c;
    s.mean_age /= c;
    s.female_share /= c;
    s.mean_income /= c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exports

void write_reward_sequences(std::ostream& out, std::span<const RewardSequence> sequences) {
  for (const auto& s : sequences) {
    nlohmann::ordered_json j;
    j["person_id"] = s.person_id;
    j["rewards"] = s.values;
    out << j.dump() << '\n';
  }
}

void write_clusters(std::ostream& out, std::span<const RewardSequence> sequences, const ClusterAssignment& a) {
  out << "person_id,cluster\n";
  for (std::size_t i = 0; i < sequences.size(); ++i) out << sequences[i].person_id << ',' << a.labels[i] << '\n';
}

void write_returns(std::ostream& out, std::span<const ReturnRecord> records) {
  out << "person_id,return,group\n";
  const auto prec = out.precision();
  out << std::setprecision(12);
  for (const auto& r : records) out << r.person_id << ',' << r.value << ',' << to_string(r.group) << '\n';
  out.precision(prec);
}

void write_quantile_report(std::ostream& out, std::span<const GroupSummary> groups) {
  out << "group,count";
  for (int e = 0; e < mdp::kNumEmployment; ++e) out << ",share_" << mdp::to_string(mdp::employment_from_index(e));
  out << ",mean_age,female_share,mean_income\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::fixed << std::setprecision(6);
  for (const auto& g : groups) {
    out << to_string(g.group) << ',' << g.count;
    for (double s : g.employment_share) out << ',' << s;
    out << ',' << g.mean_age << ',' << g.female_share << ',' << g.mean_income << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace activity_airl::interpret
