#include "activity_airl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "activity_airl/common.hpp"

namespace activity_airl::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError("sequence length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw ValidationError("empty sequence");
}

void check_sets(std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError("prediction and truth sets differ in size");
  if (a == 0) throw ValidationError("empty evaluation set");
}

// n-gram counts keyed by their base-5 code.
std::map<long, int> ngram_counts(std::span<const mdp::Activity> s, int n) {
  std::map<long, int> counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
    long code = 0;
    for (int k = 0; k < n; ++k) code = code * mdp::kNumActivities + mdp::index(s[i + k]);
    ++counts[code];
  }
  return counts;
}

}  // namespace

int levenshtein(std::span<const mdp::Activity> a, std::span<const mdp::Activity> b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double accuracy(std::span<const mdp::Activity> pred, std::span<const mdp::Activity> truth) {
  check_lengths(pred.size(), truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double edit_distance(std::span<const mdp::Activity> pred, std::span<const mdp::Activity> truth) {
  check_lengths(pred.size(), truth.size());
  const double d = static_cast<double>(levenshtein(pred, truth)) / static_cast<double>(truth.size());
  return std::min(d, 1.0);
}

double bleu(std::span<const mdp::Activity> pred, std::span<const mdp::Activity> truth, int n) {
  check_lengths(pred.size(), truth.size());
  if (n < 1) throw ValidationError("BLEU order must be positive");
  double log_sum = 0.0;
  int orders = 0;
  for (int j = 1; j <= n; ++j) {
    const auto cand = ngram_counts(pred, j);
    if (cand.empty()) continue;
    const auto ref = ngram_counts(truth, j);
    long matched = 0, total = 0;
    for (const auto& [code, w] : cand) {
      total += w;
      const auto it = ref.find(code);
      if (it != ref.end()) matched += std::min(w, it->second);
    }
    const double p = std::max(static_cast<double>(matched) / static_cast<double>(total), kBleuEpsilon);
    log_sum += std::log(p);
    ++orders;
  }
  if (orders == 0) return 0.0;
  return std::exp(log_sum / orders);
}

double accuracy(std::span<const Sequence> pred, std::span<const Sequence> truth) {
  check_sets(pred.size(), truth.size());
  double s = 0.0;
  for (std::size_t u = 0; u < pred.size(); ++u) s += accuracy(pred[u], truth[u]);
  return s / static_cast<double>(pred.size());
}

double edit_distance(std::span<const Sequence> pred, std::span<const Sequence> truth) {
  check_sets(pred.size(), truth.size());
  double s = 0.0;
  for (std::size_t u = 0; u < pred.size(); ++u) s += edit_distance(pred[u], truth[u]);
  return s / static_cast<double>(pred.size());
}

double bleu(std::span<const Sequence> pred, std::span<const Sequence> truth, int n) {
  check_sets(pred.size(), truth.size());
  double s = 0.0;
  for (std::size_t u = 0; u < pred.size(); ++u) s += bleu(pred[u], truth[u], n);
  return s / static_cast<double>(pred.size());
}

EvalReport evaluate(const std::string& model, std::span<const Sequence> pred, std::span<const Sequence> truth) {
  check_sets(pred.size(), truth.size());
  EvalReport r;
  r.model = model;
  for (std::size_t u = 0; u < pred.size(); ++u) {
    r.per_user_accuracy.push_back(accuracy(pred[u], truth[u]));
    r.per_user_edit_distance.push_back(edit_distance(pred[u], truth[u]));
    r.per_user_bleu.push_back(bleu(pred[u], truth[u]));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  r.accuracy = mean(r.per_user_accuracy);
  r.edit_distance = mean(r.per_user_edit_distance);
  r.bleu = mean(r.per_user_bleu);
  return r;
}

void write_report_table(std::ostream& out, std::span<const EvalReport> reports) {
  out << "model,ACC,ED,BLEU\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::fixed << std::setprecision(6);
  for (const auto& r : reports) out << r.model << ',' << r.accuracy << ',' << r.edit_distance << ',' << r.bleu << '\n';
  out.flags(flags);
  out.precision(prec);
}

}  // namespace activity_airl::metrics
