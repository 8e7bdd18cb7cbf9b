#include "activity_airl/distill.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace activity_airl::distill {

namespace {

constexpr int kActivityOffset = 0;
constexpr int kTimeOffset = kActivityOffset + mdp::kNumActivities;
constexpr int kDurationOffset = kTimeOffset + kNumTimeBins;
constexpr int kProfileOffset = kDurationOffset + 3;
constexpr int kEmploymentOffset = kProfileOffset + 4;
static_assert(kEmploymentOffset + mdp::kNumEmployment == kNumFeatures);

constexpr double kLogFloor = 1e-300;

std::vector<std::string> build_names() {
  std::vector<std::string> names;
  for (mdp::Activity a : mdp::kAllActivities) names.push_back("activity_" + std::string(mdp::to_string(a)));
  for (int b = 0; b < kNumTimeBins; ++b) {
    std::ostringstream os;
    os << "time_" << std::setw(2) << std::setfill('0') << 2 * b << '_' << std::setw(2) << std::setfill('0')
       << 2 * b + 2;
    names.push_back(os.str());
  }
  names.insert(names.end(), {"stay_duration", "activity_count", "out_home_duration", "age", "female",
                             "car_ownership", "income"});
  for (int e = 0; e < mdp::kNumEmployment; ++e)
    names.push_back("employment_" + std::string(mdp::to_string(mdp::employment_from_index(e))));
  return names;
}

// Target weights (1 - alpha) y + alpha soft, zeroed off-mask.
Matrix targets(const EncodedData& data, double alpha) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix t = Matrix::Zero(mdp::kNumActivities, n);
  if (alpha > 0.0) {
    if (data.soft.cols() != n) throw ValidationError("soft labels are required when alpha > 0");
    t = alpha * data.soft;
  }
  for (Eigen::Index b = 0; b < n; ++b) {
    t(data.labels[static_cast<std::size_t>(b)], b) += 1.0 - alpha;
    for (int k = 0; k < mdp::kNumActivities; ++k)
      if (!data.masks[static_cast<std::size_t>(b)].contains(k)) t(k, b) = 0.0;
  }
  return t;
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = build_names();
  return names;
}

Vector encode(const mdp::State& s, const mdp::AgentProfile& p) {
  Vector x = Vector::Zero(kNumFeatures);
  if (!s.is_start()) x(kActivityOffset + mdp::index(s.activity)) = 1.0;
  x(kTimeOffset + std::max(s.time_step - 1, 0) / 8) = 1.0;
  x(kDurationOffset + 0) = s.stay_duration / static_cast<double>(mdp::kNumSteps);
  x(kDurationOffset + 1) = s.activity_count / static_cast<double>(mdp::kNumSteps);
  x(kDurationOffset + 2) = s.out_home_duration / static_cast<double>(mdp::kNumSteps);
  x(kProfileOffset + 0) = p.age;
  x(kProfileOffset + 1) = p.female ? 1.0 : 0.0;
  x(kProfileOffset + 2) = p.car_owner ? 1.0 : 0.0;
  x(kProfileOffset + 3) = p.income;
  x(kEmploymentOffset + mdp::index(p.employment)) = 1.0;
  return x;
}

EncodedData EncodedData::subset(std::span<const std::size_t> rows) const {
  EncodedData out;
  out.features.resize(features.rows(), static_cast<Eigen::Index>(rows.size()));
  if (soft.cols() > 0) out.soft.resize(soft.rows(), static_cast<Eigen::Index>(rows.size()));
  out.masks.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    const auto dst = static_cast<Eigen::Index>(r);
    out.features.col(dst) = features.col(src);
    if (soft.cols() > 0) out.soft.col(dst) = soft.col(src);
    out.masks.push_back(masks[rows[r]]);
    out.labels.push_back(labels[rows[r]]);
  }
  return out;
}

EncodedData encode_dataset(std::span<const mdp::Trajectory> trajectories) {
  const gen::StepBatch steps = gen::flatten(trajectories);
  EncodedData data;
  data.features.resize(kNumFeatures, static_cast<Eigen::Index>(steps.size()));
  data.masks = steps.masks;
  data.labels.reserve(steps.size());
  for (std::size_t b = 0; b < steps.size(); ++b) {
    data.features.col(static_cast<Eigen::Index>(b)) = encode(steps.states[b], steps.profiles[b]);
    data.labels.push_back(mdp::index(steps.actions[b]));
  }
  return data;
}

Matrix soft_labels(const gen::ChoiceModel& teacher, std::span<const mdp::Trajectory> trajectories) {
  const gen::StepBatch steps = gen::flatten(trajectories);
  Matrix out(mdp::kNumActivities, static_cast<Eigen::Index>(steps.size()));
  constexpr std::size_t kChunk = 16384;
  for (std::size_t start = 0; start < steps.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, steps.size() - start);
    const std::span<const mdp::State> st(steps.states.data() + start, len);
    const std::span<const mdp::AgentProfile> pr(steps.profiles.data() + start, len);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) =
        teacher.choice_probabilities(st, pr);
  }
  return out;
}

// ---------------------------------------------------------------------------

MnlModel::MnlModel(Matrix coefficients) : coefficients_(std::move(coefficients)) {
  if (coefficients_.rows() != mdp::kNumActivities || coefficients_.cols() != kNumFeatures)
    throw ShapeMismatch("MNL coefficients must be 5 x " + std::to_string(kNumFeatures));
  grad_ = Matrix::Zero(coefficients_.rows(), coefficients_.cols());
}

Matrix MnlModel::probabilities(const Matrix& features, std::span<const mdp::ActionMask> masks) const {
  return nn::masked_softmax(coefficients_ * features, masks);
}

Matrix MnlModel::choice_probabilities(std::span<const mdp::State> states,
                                      std::span<const mdp::AgentProfile> profiles) const {
  if (states.size() != profiles.size()) throw ValidationError("states/profiles batch size mismatch");
  Matrix x(kNumFeatures, static_cast<Eigen::Index>(states.size()));
  std::vector<mdp::ActionMask> masks;
  masks.reserve(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    x.col(static_cast<Eigen::Index>(b)) = encode(states[b], profiles[b]);
    masks.push_back(mdp::feasible_actions(states[b]));
  }
  return probabilities(x, masks);
}

nlohmann::json MnlModel::checkpoint(const std::string& kind, double alpha) {
  nn::ParameterVector p({{"coefficients", &coefficients_, &grad_}});
  return nn::make_checkpoint(kind, {{"alpha", alpha}, {"features", feature_names()}}, p);
}

MnlModel MnlModel::from_checkpoint(const nlohmann::json& doc) {
  MnlModel m;
  nn::ParameterVector p({{"coefficients", &m.coefficients_, &m.grad_}});
  nn::params_from_json(doc.at("params"), p);
  return m;
}

// ---------------------------------------------------------------------------

double distill_loss(const Matrix& probs, std::span<const int> labels, const Matrix& soft, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (static_cast<std::size_t>(probs.cols()) != labels.size()) throw ValidationError("label count mismatch");
  if (alpha > 0.0 && soft.cols() != probs.cols()) throw ValidationError("soft label count mismatch");
  double hard = 0.0, soft_term = 0.0;
  for (Eigen::Index b = 0; b < probs.cols(); ++b) {
    hard += std::log(std::max(probs(labels[static_cast<std::size_t>(b)], b), kLogFloor));
    if (alpha > 0.0)
      for (Eigen::Index k = 0; k < probs.rows(); ++k)
        if (soft(k, b) > 0.0) soft_term += soft(k, b) * std::log(std::max(probs(k, b), kLogFloor));
  }
  return -((1.0 - alpha) * hard + alpha * soft_term);
}

double objective(const Matrix& w, const EncodedData& data, const FitOptions& options, Matrix* gradient) {
  if (data.size() == 0) throw ValidationError("empty data");
  const double n = static_cast<double>(data.size());
  const Matrix probs = nn::masked_softmax(w * data.features, data.masks);
  const double loss = distill_loss(probs, data.labels, data.soft, options.alpha) / n;
  if (gradient) {
    const Matrix g = -nn::masked_log_softmax_grad(probs, targets(data, options.alpha)) / n;
    *gradient = g * data.features.transpose() + options.l2 * w;
  }
  return loss + 0.5 * options.l2 * w.squaredNorm();
}

FitResult fit_surrogate(const EncodedData& data, const FitOptions& options, const Matrix* start) {
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (data.size() == 0) throw ValidationError("cannot fit on an empty sample");
  FitResult res;
  Matrix w = start ? *start : Matrix::Zero(mdp::kNumActivities, kNumFeatures);
  Matrix g;
  double f = objective(w, data, options, &g);
  if (!std::isfinite(f)) throw FitError("objective is not finite at the starting point");
  res.objective_history.push_back(f);

  std::deque<std::pair<Vector, Vector>> memory;  // (s, y) pairs
  auto flat = [](const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); };

  // Unregularized hard labels that are all predicted almost surely: the likelihood
  // keeps rising as coefficients grow, so a small gradient is not an optimum.
  auto separated = [&](double value) { return options.l2 == 0.0 && options.alpha == 0.0 && value < 1e-4; };

  int it = 0;
  res.message = "iteration cap reached";
  for (; it < options.max_iterations; ++it) {
    const Vector gv = flat(g);
    res.gradient_norm = gv.norm();
    if (res.gradient_norm < options.tolerance && !separated(f)) {
      res.converged = true;
      res.message = "converged";
      break;
    }
    // Two-loop recursion.
    Vector q = gv;
    std::vector<double> alphas(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const auto& [s, y] = memory[i];
      alphas[i] = s.dot(q) / y.dot(s);
      q -= alphas[i] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.dot(y);
    } else {
      q /= std::max(res.gradient_norm, 1.0);
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [s, y] = memory[i];
      const double beta = y.dot(q) / y.dot(s);
      q += (alphas[i] - beta) * s;
    }
    Vector dir = -q;
    double slope = gv.dot(dir);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -gv / std::max(res.gradient_norm, 1.0);
      slope = gv.dot(dir);
    }

    double step = 1.0;
    Matrix w_new, g_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      w_new = w + step * Eigen::Map<const Matrix>(dir.data(), w.rows(), w.cols());
      f_new = objective(w_new, data, options, &g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.message = "line search made no progress";
      break;
    }
    Vector s = flat(w_new) - flat(w);
    Vector y = flat(g_new) - flat(g);
    if (s.dot(y) > 1e-12 * s.squaredNorm()) {
      memory.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
    }
    w = std::move(w_new);
    g = std::move(g_new);
    f = f_new;
    res.objective_history.push_back(f);
  }
  res.gradient_norm = flat(g).norm();
  if (separated(f)) {
    res.converged = false;
    res.message = "perfect separation: " + res.message;
  } else if (!res.converged && res.gradient_norm < options.tolerance) {
    res.converged = true;
    res.message = "converged";
  }
  if (!std::isfinite(f)) throw FitError("objective diverged");
  res.iterations = it;
  res.model = MnlModel(std::move(w));
  return res;
}

FitResult fit_mnl(const EncodedData& data, FitOptions options) {
  options.alpha = 0.0;
  return fit_surrogate(data, options);
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void CoefficientTable::write_csv(std::ostream& out) const {
  out << "variable";
  for (mdp::Activity a : mdp::kAllActivities) {
    const std::string n(mdp::to_string(a));
    out << ',' << n << "_coef," << n << "_lo," << n << "_hi";
  }
  out << ",sign_inconsistent\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::fixed << std::setprecision(6);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << variables[r];
    std::string flagged;
    for (int k = 0; k < mdp::kNumActivities; ++k) {
      const auto& c = rows[r][static_cast<std::size_t>(k)];
      out << ',' << c.mean << ',' << c.lo << ',' << c.hi;
      if (c.sign_inconsistent) {
        if (!flagged.empty()) flagged += ';';
        flagged += mdp::to_string(mdp::activity_from_index(k));
      }
    }
    out << ',' << flagged << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

CoefficientTable bootstrap_cis(const EncodedData& data, const FitOptions& options, int resamples, double frac,
                               std::uint64_t seed, int jobs) {
  if (resamples < 1) throw ConfigError("bootstrap needs at least one resample");
  if (!(frac > 0.0)) throw ConfigError("bootstrap fraction must be positive");
  const FitResult full = fit_surrogate(data, options);
  const Matrix& estimate = full.model.coefficients();
  const auto draw = static_cast<std::size_t>(std::max<long>(1, std::lround(frac * static_cast<double>(data.size()))));

  std::vector<Matrix> fits(static_cast<std::size_t>(resamples));
  std::vector<char> ok(static_cast<std::size_t>(resamples), 0);
  std::vector<std::string> errors(static_cast<std::size_t>(resamples));

  auto run = [&](int b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::vector<std::size_t> rows(draw);
    for (auto& r : rows) r = uniform_index(rng, data.size());
    try {
      const FitResult fr = fit_surrogate(data.subset(rows), options, &estimate);
      fits[static_cast<std::size_t>(b)] = fr.model.coefficients();
      ok[static_cast<std::size_t>(b)] = 1;
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(b)] = e.what();
    }
  };
  const int workers = std::clamp(jobs, 1, resamples);
  if (workers == 1) {
    for (int b = 0; b < resamples; ++b) run(b);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w)
      threads.emplace_back([&, w] {
        for (int b = w; b < resamples; b += workers) run(b);
      });
    for (auto& t : threads) t.join();
  }

  CoefficientTable table;
  table.variables = feature_names();
  table.resamples = resamples;
  for (int b = 0; b < resamples; ++b)
    if (!ok[static_cast<std::size_t>(b)]) {
      ++table.failures;
      table.warnings.push_back("resample " + std::to_string(b) + " failed: " + errors[static_cast<std::size_t>(b)]);
    }
  if (table.failures == resamples) throw FitError("every bootstrap resample failed");
  if (table.failures > 0.05 * resamples)
    table.warnings.push_back(std::to_string(table.failures) + " of " + std::to_string(resamples) +
                             " bootstrap fits failed and were excluded");

  table.rows.resize(kNumFeatures);
  std::vector<double> values;
  for (int f = 0; f < kNumFeatures; ++f)
    for (int k = 0; k < mdp::kNumActivities; ++k) {
      values.clear();
      for (int b = 0; b < resamples; ++b)
        if (ok[static_cast<std::size_t>(b)]) values.push_back(fits[static_cast<std::size_t>(b)](k, f));
      CoefficientCell& c = table.rows[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)];
      c.estimate = estimate(k, f);
      double s = 0.0;
      for (double v : values) s += v;
      c.mean = s / static_cast<double>(values.size());
      c.lo = quantile(values, 0.025);
      c.hi = quantile(values, 0.975);
      c.sign_inconsistent = c.lo <= 0.0 && c.hi >= 0.0;
    }
  return table;
}

}  // namespace activity_airl::distill
