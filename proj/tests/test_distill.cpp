#include <doctest.h>

#include <cmath>
#include <sstream>

#include "activity_airl/baselines.hpp"
#include "activity_airl/data_io.hpp"
#include "activity_airl/distill.hpp"

using namespace activity_airl;
using namespace activity_airl::distill;
using mdp::Activity;

namespace {

std::vector<mdp::Trajectory> population(int n, std::uint64_t seed) {
  data::SynthConfig c;
  c.population = n;
  const auto ds = data::synthesize_population(c, seed);
  return data::to_trajectories(ds.persons, data::ProfileScaler::fit(ds.persons));
}

Matrix masked_softmax_oracle(const Matrix& logits, std::span<const mdp::ActionMask> masks) {
  Matrix p = Matrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    double z = 0.0;
    for (int k = 0; k < logits.rows(); ++k)
      if (masks[static_cast<std::size_t>(b)].contains(k)) z += std::exp(logits(k, b));
    for (int k = 0; k < logits.rows(); ++k)
      if (masks[static_cast<std::size_t>(b)].contains(k)) p(k, b) = std::exp(logits(k, b)) / z;
  }
  return p;
}

// Small design with a few informative random features and full masks.
EncodedData random_design(int n, const Matrix& planted, Rng& rng) {
  EncodedData d;
  d.features = Matrix::Zero(kNumFeatures, n);
  for (int b = 0; b < n; ++b) {
    d.features(0, b) = 1.0;
    d.features(1, b) = uniform01(rng);
    d.features(2, b) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    d.masks.push_back(mdp::ActionMask::all());
  }
  const Matrix p = masked_softmax_oracle(planted * d.features, d.masks);
  d.soft = p;
  for (int b = 0; b < n; ++b) {
    const double u = uniform01(rng);
    double acc = 0.0;
    int label = mdp::kNumActivities - 1;
    for (int k = 0; k < mdp::kNumActivities; ++k) {
      acc += p(k, b);
      if (u < acc) {
        label = k;
        break;
      }
    }
    d.labels.push_back(label);
  }
  return d;
}

Matrix planted_small() {
  Matrix w = Matrix::Zero(mdp::kNumActivities, kNumFeatures);
  w.col(0) << 0.5, 0.2, -0.3, -0.6, 0.2;
  w.col(1) << 2.0, -0.5, -0.5, -0.5, -0.5;
  w.col(2) << -0.4, 1.2, -0.4, -0.2, -0.2;
  return w;
}

}  // namespace

TEST_CASE("encoding layout") {
  CHECK(kNumFeatures == 32);
  CHECK(feature_names().size() == static_cast<std::size_t>(kNumFeatures));
  const auto trajs = population(30, 1);
  const EncodedData d = encode_dataset(trajs);
  const gen::StepBatch steps = gen::flatten(trajs);
  REQUIRE(d.size() == steps.size());
  for (std::size_t b = 0; b < d.size(); ++b) {
    const Vector x = d.features.col(static_cast<Eigen::Index>(b));
    CHECK(x.segment(0, 5).sum() == (steps.states[b].is_start() ? 0.0 : 1.0));
    CHECK(x.segment(5, 12).sum() == 1.0);
    CHECK(x.segment(24, 8).sum() == 1.0);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x.maxCoeff() <= 1.0);
  }
  // 23:30 falls in the last two-hour bin.
  const Vector late = encode(mdp::State{95, Activity::Home, 30, 3, 0}, mdp::AgentProfile{});
  CHECK(late(5 + 11) == 1.0);
}

TEST_CASE("soft labels from uniform and deterministic teachers") {
  const auto trajs = population(20, 2);
  const gen::StepBatch steps = gen::flatten(trajs);

  const MnlModel uniform;
  const Matrix soft = soft_labels(uniform, trajs);
  for (Eigen::Index b = 0; b < soft.cols(); ++b) {
    const mdp::ActionMask m = steps.masks[static_cast<std::size_t>(b)];
    CHECK(soft.col(b).sum() == doctest::Approx(1.0));
    for (int k = 0; k < mdp::kNumActivities; ++k)
      CHECK(soft(k, b) == doctest::Approx(m.contains(k) ? 1.0 / m.size() : 0.0));
  }
  CHECK(soft(0, 0) == doctest::Approx(0.2));

  // A chain fitted on one day is one-hot along that day.
  const std::vector<mdp::Trajectory> one{trajs[0]};
  const baselines::MarkovChain mmc = baselines::fit_mmc(one);
  const Matrix hard = soft_labels(mmc, one);
  for (Eigen::Index b = 0; b < hard.cols(); ++b) {
    CHECK(hard.col(b).maxCoeff() == 1.0);
    CHECK(hard(mdp::index(one[0].labels[static_cast<std::size_t>(b)]), b) == 1.0);
  }
}

TEST_CASE("distill loss examples") {
  Matrix p(5, 1);
  p << 0.8, 0.2, 0.0, 0.0, 0.0;
  const std::vector<int> y{0};
  CHECK(distill_loss(p, y, Matrix(), 0.0) == doctest::Approx(-std::log(0.8)));
  CHECK(distill_loss(p, y, Matrix(), 0.0) == doctest::Approx(0.2231).epsilon(1e-4));
  CHECK_THROWS_AS(distill_loss(p, y, p, 1.5), ValidationError);

  // alpha = 1 with matching distributions gives the entropy, the minimum over model outputs.
  Rng rng(3);
  Matrix q = Matrix::Zero(5, 50);
  for (Eigen::Index b = 0; b < q.cols(); ++b) {
    for (int k = 0; k < 5; ++k) q(k, b) = 0.1 + uniform01(rng);
    q.col(b) /= q.col(b).sum();
  }
  std::vector<int> labels(50, 1);
  double entropy = 0.0;
  for (Eigen::Index b = 0; b < q.cols(); ++b)
    for (int k = 0; k < 5; ++k) entropy -= q(k, b) * std::log(q(k, b));
  CHECK(distill_loss(q, labels, q, 1.0) == doctest::Approx(entropy));
  for (int trial = 0; trial < 20; ++trial) {
    Matrix r = q;
    for (Eigen::Index b = 0; b < r.cols(); ++b) {
      for (int k = 0; k < 5; ++k) r(k, b) *= 0.5 + uniform01(rng);
      r.col(b) /= r.col(b).sum();
    }
    CHECK(distill_loss(r, labels, q, 1.0) >= entropy);
  }
}

TEST_CASE("distill loss is the hard NLL at zero and linear in alpha") {
  const auto trajs = population(20, 4);
  EncodedData d = encode_dataset(trajs);
  Rng rng(5);
  Matrix w(5, kNumFeatures);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = uniform01(rng) - 0.5;
  const MnlModel model(w);
  const Matrix p = model.probabilities(d.features, d.masks);
  CHECK(p.isApprox(masked_softmax_oracle(w * d.features, d.masks), 1e-12));
  d.soft = soft_labels(MnlModel(Matrix(w * 0.3)), trajs);

  double nll = 0.0;
  for (Eigen::Index b = 0; b < p.cols(); ++b) nll -= std::log(p(d.labels[static_cast<std::size_t>(b)], b));
  double soft_ce = 0.0;
  for (Eigen::Index b = 0; b < p.cols(); ++b)
    for (int k = 0; k < 5; ++k)
      if (d.soft(k, b) > 0.0) soft_ce -= d.soft(k, b) * std::log(p(k, b));
  CHECK(distill_loss(p, d.labels, d.soft, 0.0) == doctest::Approx(nll).epsilon(1e-12));
  for (double a : {0.25, 0.5, 0.9})
    CHECK(distill_loss(p, d.labels, d.soft, a) == doctest::Approx((1 - a) * nll + a * soft_ce).epsilon(1e-12));
}

TEST_CASE("objective gradient matches finite differences") {
  const auto trajs = population(10, 6);
  EncodedData d = encode_dataset(trajs);
  Rng rng(7);
  Matrix w(5, kNumFeatures);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.4 * (uniform01(rng) - 0.5);
  d.soft = soft_labels(MnlModel(Matrix(-w)), trajs);
  FitOptions opt;
  opt.alpha = 0.6;
  opt.l2 = 1e-2;
  Matrix g;
  objective(w, d, opt, &g);
  const double h = 1e-6;
  for (int trial = 0; trial < 30; ++trial) {
    const auto k = static_cast<Eigen::Index>(uniform_index(rng, 5));
    const auto f = static_cast<Eigen::Index>(uniform_index(rng, kNumFeatures));
    Matrix a = w, b = w;
    a(k, f) += h;
    b(k, f) -= h;
    const double fd = (objective(a, d, opt) - objective(b, d, opt)) / (2 * h);
    CHECK(g(k, f) == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("alpha zero surrogate equals the hard-label logit") {
  const auto trajs = population(120, 8);
  EncodedData d = encode_dataset(trajs);
  d.soft = soft_labels(MnlModel(), trajs);
  FitOptions opt;
  const FitResult mnl = fit_mnl(d, opt);
  opt.alpha = 0.0;
  const FitResult sur = fit_surrogate(d, opt);
  CHECK(mnl.converged);
  CHECK(sur.gradient_norm < 1e-5);
  CHECK((mnl.model.coefficients() - sur.model.coefficients()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("soft labels from a planted logit recover its coefficients") {
  const auto trajs = population(80, 9);
  EncodedData d = encode_dataset(trajs);
  // Every alternative feasible everywhere, so only the one-hot collinearities are unidentified.
  for (auto& m : d.masks) m = mdp::ActionMask::all();
  Rng rng(10);
  Matrix planted(5, kNumFeatures);
  for (Eigen::Index i = 0; i < planted.size(); ++i) planted(i) = 2.0 * (uniform01(rng) - 0.5);
  d.soft = masked_softmax_oracle(planted * d.features, d.masks);

  // Only logit differences between feasible alternatives are seen by the data. Project the
  // planted matrix onto the span of those differences (column-major vec of W).
  const int dim = 5 * kNumFeatures;
  Matrix gram = Matrix::Zero(dim, dim);
  for (std::size_t b = 0; b < d.size(); ++b) {
    const Vector x = d.features.col(static_cast<Eigen::Index>(b));
    const mdp::ActionMask m = d.masks[b];
    const int ref = mdp::index(Activity::Travel);
    for (int k = 0; k < 5; ++k) {
      if (k == ref || !m.contains(k)) continue;
      Vector row = Vector::Zero(dim);
      for (int f = 0; f < kNumFeatures; ++f) {
        row(f * 5 + k) = x(f);
        row(f * 5 + ref) = -x(f);
      }
      gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
    }
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double tol = 1e-9 * eig.eigenvalues().maxCoeff();
  Matrix basis(dim, 0);
  for (int i = 0; i < dim; ++i)
    if (eig.eigenvalues()(i) > tol) {
      basis.conservativeResize(dim, basis.cols() + 1);
      basis.col(basis.cols() - 1) = eig.eigenvectors().col(i);
    }
  const Vector vec = Eigen::Map<const Vector>(planted.data(), dim);
  const Vector projected = basis * (basis.transpose() * vec);
  const Matrix target = Eigen::Map<const Matrix>(projected.data(), 5, kNumFeatures);

  FitOptions opt;
  opt.alpha = 1.0;
  opt.l2 = 0.0;
  opt.max_iterations = 3000;
  opt.tolerance = 1e-8;
  const FitResult res = fit_surrogate(d, opt);
  INFO(res.message, " after ", res.iterations);
  const double err = (res.model.coefficients() - target).cwiseAbs().maxCoeff();
  CHECK(err < 0.05);
  const Matrix p = res.model.probabilities(d.features, d.masks);
  CHECK((p - d.soft).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("type-7 quantiles") {
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.975) == 5.0);
  CHECK(quantile({0, 10}, 0.025) == doctest::Approx(0.25));
  CHECK_THROWS_AS(quantile({}, 0.5), ValidationError);
}

TEST_CASE("a single resample collapses the interval") {
  const auto trajs = population(40, 11);
  const EncodedData d = encode_dataset(trajs);
  const CoefficientTable t = bootstrap_cis(d, FitOptions{}, 1, 0.8, 3);
  for (const auto& row : t.rows)
    for (const auto& c : row) {
      CHECK(c.lo == c.hi);
      CHECK(c.mean == c.lo);
    }
}

TEST_CASE("a constant feature is pinned at zero and flagged") {
  const auto trajs = population(60, 12);
  EncodedData d = encode_dataset(trajs);
  d.features.row(20).setZero();  // female
  const CoefficientTable t = bootstrap_cis(d, FitOptions{}, 10, 0.8, 4);
  for (const auto& c : t.rows[20]) {
    CHECK(c.estimate == 0.0);
    CHECK(c.lo == 0.0);
    CHECK(c.hi == 0.0);
    CHECK(c.sign_inconsistent);
  }
  std::ostringstream out;
  t.write_csv(out);
  CHECK(out.str().rfind("variable,home_coef,home_lo,home_hi,work_coef", 0) == 0);
  CHECK(out.str().find("\nfemale,") != std::string::npos);
}

TEST_CASE("a planted strong effect is sign-consistent across resamples") {
  Rng rng(13);
  const EncodedData d = random_design(3000, planted_small(), rng);
  const CoefficientTable t = bootstrap_cis(d, FitOptions{}, 100, 0.8, 5, 2);
  CHECK(t.failures == 0);
  const CoefficientCell& home_x = t.rows[1][0];
  CHECK(home_x.lo > 0.0);
  CHECK_FALSE(home_x.sign_inconsistent);
  for (const auto& row : t.rows)
    for (const auto& c : row) {
      CHECK(c.lo <= c.mean);
      CHECK(c.mean <= c.hi);
    }
}

TEST_CASE("bootstrap intervals usually contain the full-data estimate") {
  int contained = 0;
  for (int run = 0; run < 100; ++run) {
    Rng rng(derive_seed(14, static_cast<std::uint64_t>(run)));
    const EncodedData d = random_design(400, planted_small(), rng);
    const CoefficientTable t = bootstrap_cis(d, FitOptions{}, 40, 0.8, derive_seed(15, static_cast<std::uint64_t>(run)));
    const CoefficientCell& c = t.rows[1][0];
    CHECK(c.lo <= c.hi);
    contained += c.lo <= c.estimate && c.estimate <= c.hi;
  }
  CHECK(contained >= 95);
}

TEST_CASE("surrogate checkpoints round trip") {
  Rng rng(16);
  Matrix w(5, kNumFeatures);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = uniform01(rng);
  MnlModel m(w);
  const MnlModel back = MnlModel::from_checkpoint(m.checkpoint("surrogate", 0.5));
  CHECK(back.coefficients() == w);
  CHECK_THROWS_AS(MnlModel(Matrix::Zero(4, kNumFeatures)), ShapeMismatch);
}
