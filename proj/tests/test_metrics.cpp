#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "activity_airl/common.hpp"
#include "activity_airl/metrics.hpp"

using namespace activity_airl;
using namespace activity_airl::metrics;
using mdp::Activity;

namespace {

constexpr Activity H = Activity::Home;
constexpr Activity W = Activity::Work;
constexpr Activity S = Activity::School;
constexpr Activity O = Activity::Others;
constexpr Activity T = Activity::Travel;

Sequence random_sequence(Rng& rng, std::size_t n, int alphabet = mdp::kNumActivities) {
  Sequence s(n);
  for (auto& a : s) a = mdp::activity_from_index(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(alphabet))));
  return s;
}

// Plain recursion over prefixes, exponential but fine for short inputs.
int brute_levenshtein(const Sequence& a, std::size_t i, const Sequence& b, std::size_t j) {
  if (i == 0) return static_cast<int>(j);
  if (j == 0) return static_cast<int>(i);
  const int sub = brute_levenshtein(a, i - 1, b, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
  return std::min({brute_levenshtein(a, i - 1, b, j) + 1, brute_levenshtein(a, i, b, j - 1) + 1, sub});
}

// Clipped j-gram precision by direct enumeration of the candidate's n-grams.
double oracle_precision(const Sequence& pred, const Sequence& truth, std::size_t j) {
  std::vector<Sequence> cand, ref;
  for (std::size_t i = 0; i + j <= pred.size(); ++i) cand.emplace_back(pred.begin() + i, pred.begin() + i + j);
  for (std::size_t i = 0; i + j <= truth.size(); ++i) ref.emplace_back(truth.begin() + i, truth.begin() + i + j);
  std::vector<Sequence> distinct = cand;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  double matched = 0.0;
  for (const auto& g : distinct) {
    const auto w = std::count(cand.begin(), cand.end(), g);
    const auto w_max = std::count(ref.begin(), ref.end(), g);
    matched += static_cast<double>(std::min(w, w_max));
  }
  return matched / static_cast<double>(cand.size());
}

double oracle_bleu(const Sequence& pred, const Sequence& truth, int n) {
  double log_sum = 0.0;
  for (int j = 1; j <= n; ++j) log_sum += std::log(std::max(oracle_precision(pred, truth, static_cast<std::size_t>(j)), 1e-9));
  return std::exp(log_sum / n);
}

}  // namespace

TEST_CASE("accuracy examples") {
  Rng rng(1);
  std::vector<Sequence> truth, half;
  for (int u = 0; u < 5; ++u) {
    truth.push_back(random_sequence(rng, mdp::kNumSteps));
    Sequence p = truth.back();
    for (std::size_t i = 0; i < 48; ++i) p[2 * i] = p[2 * i] == H ? W : H;
    half.push_back(p);
  }
  CHECK(accuracy(std::span<const Sequence>(truth), std::span<const Sequence>(truth)) == 1.0);
  CHECK(accuracy(std::span<const Sequence>(half), std::span<const Sequence>(truth)) == 0.5);
}

TEST_CASE("edit distance examples") {
  Sequence a(mdp::kNumSteps, H);
  CHECK(edit_distance(a, a) == 0.0);
  Sequence b = a;
  b[40] = W;
  CHECK(edit_distance(b, a) == doctest::Approx(1.0 / 96.0));
  CHECK(edit_distance(b, a) == doctest::Approx(0.0104).epsilon(1e-3));
  const Sequence c(mdp::kNumSteps, S);
  CHECK(edit_distance(c, a) == 1.0);
}

TEST_CASE("bleu examples") {
  const Sequence pred{H, H, W, W};
  const Sequence truth{H, W, W, W};
  CHECK(oracle_precision(pred, truth, 1) == doctest::Approx(0.75));
  CHECK(oracle_precision(pred, truth, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(bleu(pred, truth, 2) == doctest::Approx(std::sqrt(0.75 * 2.0 / 3.0)));
  CHECK(bleu(pred, truth, 2) == doctest::Approx(0.7071).epsilon(1e-4));

  Sequence day(mdp::kNumSteps, H);
  CHECK(bleu(day, day) == doctest::Approx(1.0));
  const Sequence other(mdp::kNumSteps, O);
  CHECK(bleu(other, day) < 1e-8);
}

TEST_CASE("bleu agrees with an enumeration oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 4 + uniform_index(rng, 60);
    const Sequence truth = random_sequence(rng, n, 3);
    Sequence pred = truth;
    for (auto& a : pred)
      if (uniform01(rng) < 0.3) a = mdp::activity_from_index(static_cast<int>(uniform_index(rng, 5)));
    CHECK(bleu(pred, truth) == doctest::Approx(oracle_bleu(pred, truth, kBleuOrder)).epsilon(1e-12));
  }
  // Orders longer than the sequence are skipped.
  CHECK(bleu(Sequence{H, W}, Sequence{H, W}) == doctest::Approx(1.0));
}

TEST_CASE("mismatched inputs are rejected") {
  const Sequence a(96, H), b(95, H);
  CHECK_THROWS_AS(accuracy(a, b), ValidationError);
  CHECK_THROWS_AS(edit_distance(a, b), ValidationError);
  CHECK_THROWS_AS(bleu(a, b), ValidationError);
  const std::vector<Sequence> one{a}, two{a, a};
  CHECK_THROWS_AS(accuracy(std::span<const Sequence>(one), std::span<const Sequence>(two)), ValidationError);
}

TEST_CASE("self-agreement and ranges on random sets") {
  Rng rng(3);
  std::vector<Sequence> x, y;
  for (int u = 0; u < 40; ++u) {
    x.push_back(random_sequence(rng, mdp::kNumSteps));
    y.push_back(random_sequence(rng, mdp::kNumSteps));
  }
  const std::span<const Sequence> xs(x), ys(y);
  CHECK(accuracy(xs, xs) == 1.0);
  CHECK(edit_distance(xs, xs) == 0.0);
  CHECK(bleu(xs, xs) == doctest::Approx(1.0));
  for (double v : {accuracy(xs, ys), edit_distance(xs, ys), bleu(xs, ys)}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("levenshtein symmetry and triangle inequality against recursion") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Sequence a = random_sequence(rng, uniform_index(rng, 9), 3);
    const Sequence b = random_sequence(rng, uniform_index(rng, 9), 3);
    const Sequence c = random_sequence(rng, uniform_index(rng, 9), 3);
    const int ab = levenshtein(a, b);
    CHECK(ab == brute_levenshtein(a, a.size(), b, b.size()));
    CHECK(ab == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= ab + levenshtein(b, c));
  }
  // Longer triples up to length 12 against the recursion.
  for (int trial = 0; trial < 10; ++trial) {
    const Sequence a = random_sequence(rng, 12, 2);
    const Sequence b = random_sequence(rng, 10, 2);
    CHECK(levenshtein(a, b) == brute_levenshtein(a, a.size(), b, b.size()));
  }
  // Equal-length sequences also agree with the normalized form both ways.
  const Sequence p{H, W, T, H}, q{W, T, H, H};
  CHECK(edit_distance(p, q) == edit_distance(q, p));
}

TEST_CASE("set metrics ignore user order") {
  Rng rng(5);
  std::vector<Sequence> x, y;
  for (int u = 0; u < 25; ++u) {
    x.push_back(random_sequence(rng, mdp::kNumSteps));
    Sequence p = x.back();
    for (auto& a : p)
      if (uniform01(rng) < 0.2) a = T;
    y.push_back(p);
  }
  const EvalReport r = evaluate("m", x, y);
  std::vector<std::size_t> perm(x.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  shuffle_in_place(perm, rng);
  std::vector<Sequence> xp, yp;
  for (std::size_t i : perm) {
    xp.push_back(x[i]);
    yp.push_back(y[i]);
  }
  const EvalReport s = evaluate("m", xp, yp);
  CHECK(s.accuracy == doctest::Approx(r.accuracy).epsilon(1e-14));
  CHECK(s.edit_distance == doctest::Approx(r.edit_distance).epsilon(1e-14));
  CHECK(s.bleu == doctest::Approx(r.bleu).epsilon(1e-14));
  CHECK(r.per_user_accuracy.size() == x.size());
}

TEST_CASE("report table layout") {
  std::vector<Sequence> x{Sequence(96, H)};
  const std::vector<EvalReport> reports{evaluate("truth", x, x)};
  std::ostringstream out;
  write_report_table(out, reports);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "model,ACC,ED,BLEU");
  CHECK(row.rfind("truth,1", 0) == 0);
}
