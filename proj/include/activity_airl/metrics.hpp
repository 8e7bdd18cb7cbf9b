#pragma once

// Sequence-level agreement between generated and observed activity sequences.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "activity_airl/mdp.hpp"

namespace activity_airl::metrics {

using Sequence = std::vector<mdp::Activity>;

inline constexpr int kBleuOrder = 4;
inline constexpr double kBleuEpsilon = 1e-9;

/// Unit-cost insert/delete/substitute distance.
int levenshtein(std::span<const mdp::Activity> a, std::span<const mdp::Activity> b);

/// Per-user match fraction. Throws ValidationError on length mismatches.
double accuracy(std::span<const mdp::Activity> pred, std::span<const mdp::Activity> truth);
/// min(levenshtein / N, 1) where N is the truth length.
double edit_distance(std::span<const mdp::Activity> pred, std::span<const mdp::Activity> truth);
/// Geometric mean of clipped j-gram precisions, j = 1..n. Orders longer than the
/// sequence are skipped; a zero precision is floored at kBleuEpsilon. No brevity penalty.
double bleu(std::span<const mdp::Activity> pred, std::span<const mdp::Activity> truth, int n = kBleuOrder);

/// Set-level versions: means over users. The two sets must be aligned and equally sized.
double accuracy(std::span<const Sequence> pred, std::span<const Sequence> truth);
double edit_distance(std::span<const Sequence> pred, std::span<const Sequence> truth);
double bleu(std::span<const Sequence> pred, std::span<const Sequence> truth, int n = kBleuOrder);

struct EvalReport {
  std::string model;
  double accuracy = 0.0;
  double edit_distance = 0.0;
  double bleu = 0.0;
  std::vector<double> per_user_accuracy;
  std::vector<double> per_user_edit_distance;
  std::vector<double> per_user_bleu;
};

EvalReport evaluate(const std::string& model, std::span<const Sequence> pred, std::span<const Sequence> truth);

/// Comma-separated table with header model,ACC,ED,BLEU.
void write_report_table(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace activity_airl::metrics
