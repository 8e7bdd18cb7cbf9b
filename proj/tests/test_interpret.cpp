#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "activity_airl/interpret.hpp"

using namespace activity_airl;
using namespace activity_airl::interpret;
using mdp::Activity;

namespace {

nn::ArchitectureConfig tiny() {
  nn::ArchitectureConfig c;
  c.time_embedding_dim = 3;
  c.embedding_dim = 2;
  c.hidden1 = 6;
  c.hidden2 = 5;
  return c;
}

data::Dataset synth(int n, std::uint64_t seed) {
  data::SynthConfig c;
  c.population = n;
  return data::synthesize_population(c, seed);
}

void zero(nn::ParameterVector p) { p.set(nn::Vector::Zero(p.size())); }

// A stand-in reward per step so clustering and grouping can be checked without training.
std::vector<RewardSequence> indicator_sequences(const data::Dataset& ds) {
  std::vector<RewardSequence> out;
  for (const auto& p : ds.persons) {
    RewardSequence s{p.person_id, {}};
    for (Activity a : p.labels) s.values.push_back(static_cast<double>(mdp::index(a)));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> archetype_ids(const data::Dataset& ds) {
  std::vector<int> ids;
  for (const auto& p : ds.persons) ids.push_back(static_cast<int>(data::parse_archetype(p.archetype)));
  return ids;
}

}  // namespace

TEST_CASE("reward sequences from a zero model are zero") {
  const data::Dataset ds = synth(10, 1);
  const auto trajs = data::to_trajectories(ds.persons, data::ProfileScaler::fit(ds.persons));
  airl::RewardModel reward(tiny(), 0.99, 3);
  zero(reward.params());
  for (const auto& seq : reward_sequences(trajs, reward)) {
    CHECK(seq.values.size() == static_cast<std::size_t>(mdp::kNumSteps));
    for (double v : seq.values) CHECK(v == 0.0);
  }
}

TEST_CASE("reward sequences are pure and match single evaluation") {
  const data::Dataset ds = synth(12, 2);
  auto trajs = data::to_trajectories(ds.persons, data::ProfileScaler::fit(ds.persons));
  const airl::RewardModel reward(tiny(), 0.9, 4);
  trajs.push_back(trajs[0]);
  trajs.back().person_id = "copy";
  const auto seqs = reward_sequences(trajs, reward);
  CHECK(seqs.front().values == seqs.back().values);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const RewardSequence one = reward_sequence(trajs[i], reward);
    CHECK(one.person_id == trajs[i].person_id);
    for (std::size_t t = 0; t < one.values.size(); ++t)
      CHECK(one.values[t] == doctest::Approx(seqs[i].values[t]).epsilon(1e-12));
    // Step-by-step agreement with the single-transition reward.
    const auto states = mdp::rollout_states(trajs[i].labels);
    for (int t = 0; t < mdp::kNumSteps; t += 17) {
      const auto u = static_cast<std::size_t>(t);
      CHECK(one.values[u] == doctest::Approx(reward.shaped_reward(states[u], trajs[i].labels[u], states[u + 1],
                                                                  trajs[i].profile))
                                 .epsilon(1e-10));
    }
  }
}

TEST_CASE("undiscounted potential-only rewards telescope") {
  const data::Dataset ds = synth(8, 3);
  const auto trajs = data::to_trajectories(ds.persons, data::ProfileScaler::fit(ds.persons));
  airl::RewardModel reward(tiny(), 1.0, 5);
  zero(reward.g_net().params("g."));
  for (const auto& t : trajs) {
    const RewardSequence seq = reward_sequence(t, reward);
    const auto states = mdp::rollout_states(t.labels);
    const std::vector<mdp::State> ends{states.front(), states.back()};
    const std::vector<mdp::AgentProfile> profiles{t.profile, t.profile};
    const nn::Vector h = reward.h(ends, profiles);
    double sum = 0.0;
    for (double v : seq.values) sum += v;
    CHECK(sum == doctest::Approx(h(1) - h(0)).epsilon(1e-9));
    CHECK(long_term_return(seq.values, 1.0) == doctest::Approx(h(1) - h(0)).epsilon(1e-9));
  }
}

TEST_CASE("infeasible trajectories are rejected") {
  mdp::Trajectory t;
  t.person_id = "bad";
  t.labels.assign(mdp::kNumSteps, Activity::Home);
  t.labels[10] = Activity::Work;
  const airl::RewardModel reward(tiny(), 0.99, 1);
  CHECK_THROWS_AS(reward_sequence(t, reward), MaskViolation);
  CHECK_THROWS_AS(reward_sequences(std::vector<mdp::Trajectory>{t}, reward), MaskViolation);
}

TEST_CASE("k-means recovers duplicated points exactly") {
  Rng rng(6);
  Matrix centers(4, 96);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers(i) = 4.0 * uniform01(rng);
  Matrix data(100, 96);
  for (int r = 0; r < 100; ++r) data.row(r) = centers.row(r % 4);
  const ClusterAssignment a = cluster(data, 4, 9);
  CHECK(a.inertia == doctest::Approx(0.0).scale(1.0));
  for (int c = 0; c < 4; ++c) {
    double best = 1e9;
    for (int j = 0; j < 4; ++j) best = std::min(best, (a.centroids.row(j) - centers.row(c)).norm());
    CHECK(best < 1e-12);
  }
  for (int r = 4; r < 100; ++r) CHECK(a.labels[static_cast<std::size_t>(r)] == a.labels[static_cast<std::size_t>(r % 4)]);
  std::vector<int> truth;
  for (int r = 0; r < 100; ++r) truth.push_back(r % 4);
  CHECK(purity(a.labels, truth) == 1.0);
  const auto curve = elbow(data, 1, 6, 9);
  CHECK(curve[3] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("single cluster is the mean with total variance") {
  Rng rng(7);
  Matrix data(30, 5);
  for (Eigen::Index i = 0; i < data.size(); ++i) data(i) = uniform01(rng);
  const ClusterAssignment a = cluster(data, 1, 1);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  CHECK((a.centroids.row(0) - mean).norm() < 1e-12);
  CHECK(a.inertia == doctest::Approx((data.rowwise() - mean).squaredNorm()));
  CHECK_THROWS_AS(cluster(data.topRows(2), 3, 1), ValidationError);
}

TEST_CASE("lloyd iterations decrease inertia and end at a fixed point") {
  Rng rng(8);
  Matrix data(200, 6);
  for (Eigen::Index i = 0; i < data.size(); ++i) data(i) = uniform01(rng);
  Matrix init = data.topRows(5);
  std::vector<double> trace;
  const ClusterAssignment a = lloyd(data, init, 300, &trace);
  REQUIRE_FALSE(trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
  CHECK(a.inertia == doctest::Approx(inertia(data, a.centroids, a.labels)));
  const ClusterAssignment again = lloyd(data, a.centroids, 1);
  CHECK(again.labels == a.labels);
  CHECK((again.centroids - a.centroids).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("clustering is deterministic under seed") {
  Rng rng(9);
  Matrix data(80, 10);
  for (Eigen::Index i = 0; i < data.size(); ++i) data(i) = uniform01(rng);
  const ClusterAssignment a = cluster(data, 4, 42);
  const ClusterAssignment b = cluster(data, 4, 42);
  CHECK(a.labels == b.labels);
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("archetype days separate into four clusters") {
  const data::Dataset ds = synth(400, 10);
  const Matrix x = to_matrix(indicator_sequences(ds));
  const ClusterAssignment a = cluster(x, 4, 3);
  CHECK(purity(a.labels, archetype_ids(ds)) >= 0.8);
  const auto curve = elbow(x, 1, 8, 3);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1]);
  // curve[k - 1] holds inertia for k clusters.
  CHECK(curve[3] / curve[2] < curve[4] / curve[3]);
}

TEST_CASE("long-term return examples") {
  CHECK(long_term_return(std::vector<double>(96, 1.0), 1.0) == 96.0);
  CHECK(long_term_return(std::vector<double>{1, 1, 1}, 0.5) == doctest::Approx(1.75));
  const std::vector<double> r{0.3, -1.2, 2.5, 0.7};
  CHECK(long_term_return(r, 0.8, 4) == 0.7);
  CHECK(long_term_return(r, 0.8, 2) == doctest::Approx(-1.2 + 0.8 * 2.5 + 0.64 * 0.7));
  CHECK_THROWS_AS(long_term_return(r, 0.0), ValidationError);
  CHECK_THROWS_AS(long_term_return(r, 0.9, 5), ValidationError);
}

TEST_CASE("return properties on random sequences") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(96);
    double sum = 0.0;
    for (auto& v : r) {
      v = 10.0 * (uniform01(rng) - 0.5);
      sum += v;
    }
    CHECK(long_term_return(r, 1.0) == doctest::Approx(sum).epsilon(1e-9));
    const double gamma = 0.05 + 0.95 * uniform01(rng);
    const double base = long_term_return(r, gamma);
    auto bumped = r;
    const auto t = uniform_index(rng, 96);
    bumped[t] += 0.5;
    // Strict once the discounted bump survives rounding.
    CHECK(long_term_return(bumped, gamma) >= base);
    if (std::pow(gamma, static_cast<double>(t)) > 1e-6) CHECK(long_term_return(bumped, gamma) > base);
  }
}

TEST_CASE("return groups split evenly with ties by person id") {
  std::vector<RewardSequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back({"p" + std::to_string(9 - i), std::vector<double>(96, 1.0)});
  const auto recs = assign_return_groups(seqs, 0.9);
  std::map<QuantileGroup, int> sizes;
  for (const auto& r : recs) ++sizes[r.group];
  CHECK(sizes[QuantileGroup::Top] == 3);
  CHECK(sizes[QuantileGroup::MidHigh] == 3);
  CHECK(sizes[QuantileGroup::MidLow] == 2);
  CHECK(sizes[QuantileGroup::Low] == 2);
  CHECK(recs.front().person_id == "p0");
  CHECK(recs.front().group == QuantileGroup::Top);
  CHECK(recs.back().person_id == "p9");

  Rng rng(12);
  for (int n : {4, 7, 33, 101}) {
    std::vector<RewardSequence> s;
    for (int i = 0; i < n; ++i) s.push_back({"u" + std::to_string(i), {uniform01(rng)}});
    std::map<QuantileGroup, int> c;
    for (const auto& r : assign_return_groups(s, 1.0)) ++c[r.group];
    int lo = n, hi = 0;
    for (int g = 0; g < kNumGroups; ++g) {
      lo = std::min(lo, c[static_cast<QuantileGroup>(g)]);
      hi = std::max(hi, c[static_cast<QuantileGroup>(g)]);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("the highest-return archetype dominates the top group") {
  const data::Dataset ds = synth(200, 13);
  // Reward one per step at work: workers earn the most.
  std::vector<RewardSequence> seqs;
  for (const auto& p : ds.persons) {
    RewardSequence s{p.person_id, {}};
    for (Activity a : p.labels) s.values.push_back(a == Activity::Work ? 1.0 : 0.0);
    seqs.push_back(std::move(s));
  }
  const auto recs = assign_return_groups(seqs, 0.99);
  const auto report = quantile_report(recs, ds.persons);
  std::map<std::string, std::string> arch;
  for (const auto& p : ds.persons) arch[p.person_id] = p.archetype;
  int top = 0, top_workers = 0;
  for (const auto& r : recs)
    if (r.group == QuantileGroup::Top) {
      ++top;
      top_workers += arch[r.person_id] == "worker";
    }
  CHECK(top_workers > top / 2);
  int counted = 0;
  for (const auto& g : report) {
    counted += g.count;
    double share = 0.0;
    for (double e : g.employment_share) share += e;
    CHECK(share == doctest::Approx(1.0));
    CHECK(g.female_share >= 0.0);
    CHECK(g.female_share <= 1.0);
  }
  CHECK(counted == 200);
}

TEST_CASE("quantile report arithmetic") {
  data::Dataset ds;
  for (int i = 0; i < 4; ++i) {
    data::Person p;
    p.person_id = "p" + std::to_string(i);
    p.demographics.age_years = 20.0 + 10 * i;
    p.demographics.female = i % 2 == 0;
    p.demographics.income = 1000.0 * i;
    p.demographics.employment = i < 2 ? mdp::Employment::Retired : mdp::Employment::EmployedFullTime;
    ds.persons.push_back(p);
  }
  std::vector<ReturnRecord> recs{{"p0", 4, QuantileGroup::Top},
                                 {"p1", 3, QuantileGroup::Top},
                                 {"p2", 2, QuantileGroup::Low},
                                 {"p3", 1, QuantileGroup::Low}};
  const auto rep = quantile_report(recs, ds.persons);
  CHECK(rep[0].count == 2);
  CHECK(rep[0].mean_age == doctest::Approx(25.0));
  CHECK(rep[0].female_share == doctest::Approx(0.5));
  CHECK(rep[0].mean_income == doctest::Approx(500.0));
  CHECK(rep[0].employment_share[static_cast<std::size_t>(mdp::index(mdp::Employment::Retired))] == 1.0);
  CHECK(rep[1].count == 0);
  CHECK(rep[3].mean_age == doctest::Approx(45.0));

  recs.push_back({"ghost", 0, QuantileGroup::Low});
  CHECK_THROWS_AS(quantile_report(recs, ds.persons), DataError);

  std::ostringstream out;
  write_quantile_report(out, rep);
  CHECK(out.str().rfind("group,count,share_", 0) == 0);
  std::ostringstream ret;
  write_returns(ret, recs);
  CHECK(ret.str().rfind("person_id,return,group\np0,4,top\n", 0) == 0);
}
