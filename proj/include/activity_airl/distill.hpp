#pragma once

// Surrogate multinomial logit fitted to a mix of observed labels and a teacher
// policy's choice probabilities, plus bootstrap coefficient intervals.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "activity_airl/generation.hpp"
#include "activity_airl/nn.hpp"

namespace activity_airl::distill {

using nn::Matrix;
using nn::Vector;

inline constexpr int kNumTimeBins = 12;
inline constexpr int kNumFeatures = mdp::kNumActivities + kNumTimeBins + 3 + 4 + mdp::kNumEmployment;

/// Row labels of the coefficient table, in feature order.
const std::vector<std::string>& feature_names();

/// Activity one-hot (all zero at the virtual start), two-hour bin of the current
/// interval, stay/count/out-of-home durations divided by 96, scaled profile
/// fields, employment one-hot.
Vector encode(const mdp::State& state, const mdp::AgentProfile& profile);

struct EncodedData {
  Matrix features;                     // kNumFeatures x n
  std::vector<mdp::ActionMask> masks;  // n
  std::vector<int> labels;             // n, observed next activity
  Matrix soft;                         // 5 x n teacher probabilities, or empty

  std::size_t size() const { return labels.size(); }
  EncodedData subset(std::span<const std::size_t> rows) const;
};

EncodedData encode_dataset(std::span<const mdp::Trajectory> trajectories);

/// Teacher probabilities at every observed state, in flatten() order.
Matrix soft_labels(const gen::ChoiceModel& teacher, std::span<const mdp::Trajectory> trajectories);

class MnlModel : public gen::ChoiceModel {
 public:
  MnlModel() : coefficients_(Matrix::Zero(mdp::kNumActivities, kNumFeatures)), grad_(coefficients_) {}
  explicit MnlModel(Matrix coefficients);

  const Matrix& coefficients() const { return coefficients_; }
  Matrix& coefficients() { return coefficients_; }

  /// Masked choice probabilities for pre-encoded features.
  Matrix probabilities(const Matrix& features, std::span<const mdp::ActionMask> masks) const;
  Matrix choice_probabilities(std::span<const mdp::State> states,
                              std::span<const mdp::AgentProfile> profiles) const override;

  nlohmann::json checkpoint(const std::string& kind, double alpha);
  static MnlModel from_checkpoint(const nlohmann::json& doc);

 private:
  Matrix coefficients_;
  Matrix grad_;
};

/// Summed mixed loss: -sum[(1 - alpha) log p_y + alpha sum_k soft_k log p_k].
/// Probabilities are clamped at 1e-300 inside the logarithm.
double distill_loss(const Matrix& probs, std::span<const int> labels, const Matrix& soft, double alpha);

struct FitOptions {
  double alpha = 0.0;
  double l2 = 1e-4;
  int max_iterations = 500;
  double tolerance = 1e-5;
  int history = 10;
};

/// distill_loss / n + (l2 / 2) |W|^2 and its gradient.
double objective(const Matrix& coefficients, const EncodedData& data, const FitOptions& options,
                 Matrix* gradient = nullptr);

struct FitResult {
  MnlModel model;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::vector<double> objective_history;
  std::string message;
};

/// L-BFGS with backtracking; stops when the objective gradient norm falls below
/// tolerance or at max_iterations. Throws FitError on a non-finite objective.
FitResult fit_surrogate(const EncodedData& data, const FitOptions& options, const Matrix* start = nullptr);

/// Hard-label fit: fit_surrogate with alpha = 0.
FitResult fit_mnl(const EncodedData& data, FitOptions options = {});

struct CoefficientCell {
  double estimate = 0.0;  // full-data fit
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool sign_inconsistent = false;
};

struct CoefficientTable {
  std::vector<std::string> variables;
  std::vector<std::array<CoefficientCell, mdp::kNumActivities>> rows;
  int resamples = 0;
  int failures = 0;
  std::vector<std::string> warnings;

  /// variable, then (coef, lo, hi) per alternative, then the list of flagged alternatives.
  void write_csv(std::ostream& out) const;
};

/// Type-7 empirical quantile of unsorted values.
double quantile(std::vector<double> values, double p);

/// B refits on resamples of round(frac * n) observations drawn with replacement.
CoefficientTable bootstrap_cis(const EncodedData& data, const FitOptions& options, int resamples, double frac,
                               std::uint64_t seed, int jobs = 1);

}  // namespace activity_airl::distill
