#include "activity_airl/airl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "activity_airl/metrics.hpp"

namespace activity_airl::airl {

namespace {

struct PolicyPass {
  Matrix logits;
  Matrix probs;
  Vector log_taken;
  nn::StateProfileNet::Cache cache;
};

PolicyPass policy_pass(const nn::StateProfileNet& net, const gen::StepBatch& batch, bool keep_cache) {
  PolicyPass pass;
  pass.logits = net.forward(batch.states, batch.profiles, keep_cache ? &pass.cache : nullptr);
  pass.probs = nn::masked_softmax(pass.logits, batch.masks);
  pass.log_taken.resize(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const mdp::ActionMask mask = batch.masks[b];
    if (!mask.contains(batch.actions[b]))
      throw MaskViolation("taken action " + std::string(mdp::to_string(batch.actions[b])) + " is masked out");
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < mdp::kNumActivities; ++k)
      if (mask.contains(k)) mx = std::max(mx, pass.logits(k, col));
    double s = 0.0;
    for (int k = 0; k < mdp::kNumActivities; ++k)
      if (mask.contains(k)) s += std::exp(pass.logits(k, col) - mx);
    pass.log_taken(col) = pass.logits(mdp::index(batch.actions[b]), col) - mx - std::log(s);
  }
  return pass;
}

std::vector<mdp::ActionMask> masks_for(std::span<const mdp::State> states) {
  std::vector<mdp::ActionMask> masks;
  masks.reserve(states.size());
  for (const auto& s : states) masks.push_back(mdp::feasible_actions(s));
  return masks;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void check_finite(const Vector& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i))) throw ValidationError(std::string("non-finite ") + what + " at row " + std::to_string(i));
}

}  // namespace

// ---------------------------------------------------------------------------
// Models

PolicyModel::PolicyModel(const nn::ArchitectureConfig& config, std::uint64_t seed) : net_(config, mdp::kNumActivities) {
  net_.init(seed);
}

Matrix PolicyModel::choice_probabilities(std::span<const mdp::State> states,
                                         std::span<const mdp::AgentProfile> profiles) const {
  const auto masks = masks_for(states);
  return probabilities(states, profiles, masks);
}

Matrix PolicyModel::probabilities(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles,
                                  std::span<const mdp::ActionMask> masks, nn::StateProfileNet::Cache* cache) const {
  return nn::masked_softmax(net_.forward(states, profiles, cache), masks);
}

Vector PolicyModel::log_probabilities(const gen::StepBatch& batch) const {
  return policy_pass(net_, batch, false).log_taken;
}

nlohmann::json PolicyModel::checkpoint(const std::string& kind) {
  return nn::make_checkpoint(kind, {{"architecture", nn::to_json(net_.config())}}, params());
}

PolicyModel PolicyModel::from_checkpoint(const nlohmann::json& doc) {
  PolicyModel m(nn::architecture_from_json(doc.at("config").at("architecture")), 0);
  auto p = m.params();
  nn::params_from_json(doc.at("params"), p);
  return m;
}

ValueModel::ValueModel(const nn::ArchitectureConfig& config, std::uint64_t seed) : net_(config, 1) { net_.init(seed); }

Vector ValueModel::predict(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles) const {
  const Matrix out = net_.forward(states, profiles);
  return (mean + scale * out.row(0).array()).matrix().transpose();
}

RewardModel::RewardModel(const nn::ArchitectureConfig& config, double gamma, std::uint64_t seed)
    : g_(config), h_(config, 1), gamma_(gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  g_.init(derive_seed(seed, 0));
  h_.init(derive_seed(seed, 1));
}

Vector RewardModel::g(const gen::StepBatch& batch) const {
  return g_.forward(batch.states, batch.actions, batch.next_states, batch.profiles).row(0).transpose();
}

Vector RewardModel::h(std::span<const mdp::State> states, std::span<const mdp::AgentProfile> profiles) const {
  return h_.forward(states, profiles).row(0).transpose();
}

Vector RewardModel::shaped(const gen::StepBatch& batch, Cache* cache) const {
  const Matrix g = g_.forward(batch.states, batch.actions, batch.next_states, batch.profiles,
                              cache ? &cache->g : nullptr);
  const Matrix h_next = h_.forward(batch.next_states, batch.profiles, cache ? &cache->h_next : nullptr);
  const Matrix h_now = h_.forward(batch.states, batch.profiles, cache ? &cache->h_now : nullptr);
  return (g + gamma_ * h_next - h_now).row(0).transpose();
}

void RewardModel::backward(const Cache& cache, const Vector& dreward) {
  const Matrix d = dreward.transpose();
  g_.backward(cache.g, d);
  h_.backward(cache.h_next, gamma_ * d);
  h_.backward(cache.h_now, -d);
}

double RewardModel::shaped_reward(const mdp::State& s, mdp::Activity a, const mdp::State& next,
                                  const mdp::AgentProfile& profile) const {
  if (!(mdp::transition(s, a) == next))
    throw ValidationError("next state " + mdp::to_string(next) + " does not follow from " + mdp::to_string(s));
  gen::StepBatch one;
  one.states = {s};
  one.actions = {a};
  one.next_states = {next};
  one.profiles = {profile};
  return shaped(one)(0);
}

nlohmann::json RewardModel::checkpoint() {
  return nn::make_checkpoint("reward", {{"architecture", nn::to_json(g_.config())}, {"gamma", gamma_}}, params());
}

RewardModel RewardModel::from_checkpoint(const nlohmann::json& doc) {
  const auto& cfg = doc.at("config");
  RewardModel m(nn::architecture_from_json(cfg.at("architecture")), cfg.at("gamma").get<double>(), 0);
  auto p = m.params();
  nn::params_from_json(doc.at("params"), p);
  return m;
}

// ---------------------------------------------------------------------------
// Discriminator

double discriminate(double reward, double policy_prob) {
  if (!(policy_prob > 0.0 && policy_prob <= 1.0))
    throw ValidationError("policy probability must lie in (0, 1], got " + std::to_string(policy_prob));
  if (!std::isfinite(reward)) throw ValidationError("reward is not finite");
  return sigmoid(reward - std::log(policy_prob));
}

double discriminator_loss(std::span<const double> d_expert, std::span<const double> d_generated, double eps) {
  if (d_expert.empty() || d_generated.empty()) throw ValidationError("discriminator batches must be non-empty");
  double s = 0.0;
  for (double d : d_expert) s -= std::log(std::clamp(d, eps, 1.0 - eps));
  for (double d : d_generated) s -= std::log(1.0 - std::clamp(d, eps, 1.0 - eps));
  return s / static_cast<double>(d_expert.size() + d_generated.size());
}

LogitLoss discriminator_loss_logits(const Vector& z_expert, const Vector& z_generated) {
  if (z_expert.size() == 0 || z_generated.size() == 0)
    throw ValidationError("discriminator batches must be non-empty");
  const double n = static_cast<double>(z_expert.size() + z_generated.size());
  LogitLoss out;
  out.grad_expert.resize(z_expert.size());
  out.grad_generated.resize(z_generated.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < z_expert.size(); ++i) {
    s += softplus(-z_expert(i));
    out.grad_expert(i) = (sigmoid(z_expert(i)) - 1.0) / n;
  }
  for (Eigen::Index i = 0; i < z_generated.size(); ++i) {
    s += softplus(z_generated(i));
    out.grad_generated(i) = sigmoid(z_generated(i)) / n;
  }
  out.value = s / n;
  return out;
}

RewardSignal parse_reward_signal(const std::string& name) {
  if (name == "maxent") return RewardSignal::MaxEnt;
  if (name == "raw") return RewardSignal::Raw;
  throw ConfigError("unknown reward signal '" + name + "' (expected maxent or raw)");
}

double policy_reward_signal(double reward, double policy_prob, RewardSignal mode) {
  if (!(policy_prob > 0.0 && policy_prob <= 1.0))
    throw ValidationError("policy probability must lie in (0, 1], got " + std::to_string(policy_prob));
  if (!std::isfinite(reward)) throw ValidationError("reward is not finite");
  return mode == RewardSignal::MaxEnt ? reward - std::log(policy_prob) : reward;
}

double reward_loss(RewardModel& reward, const gen::StepBatch& expert, const Vector& log_pi_expert,
                   const gen::StepBatch& generated, const Vector& log_pi_generated, bool accumulate) {
  RewardModel::Cache ce, cg;
  const Vector re = reward.shaped(expert, accumulate ? &ce : nullptr);
  const Vector rg = reward.shaped(generated, accumulate ? &cg : nullptr);
  const LogitLoss l = discriminator_loss_logits(re - log_pi_expert, rg - log_pi_generated);
  if (accumulate) {
    reward.backward(ce, l.grad_expert);
    reward.backward(cg, l.grad_generated);
  }
  return l.value;
}

// ---------------------------------------------------------------------------
// Rollouts and advantages

RolloutBatch collect_rollouts(const PolicyModel& policy, std::span<const mdp::Trajectory> profiles,
                              int episodes_per_profile, std::uint64_t seed, int jobs) {
  if (episodes_per_profile < 1) throw ConfigError("episodes_per_profile must be positive");
  std::vector<mdp::Trajectory> templates;
  templates.reserve(profiles.size() * static_cast<std::size_t>(episodes_per_profile));
  for (const auto& p : profiles)
    for (int j = 0; j < episodes_per_profile; ++j) {
      mdp::Trajectory t;
      t.person_id = p.person_id;
      t.profile = p.profile;
      templates.push_back(std::move(t));
    }
  RolloutBatch batch;
  batch.trajectories = gen::generate(policy, templates, seed, jobs);
  batch.num_episodes = static_cast<int>(batch.trajectories.size());
  batch.steps = gen::flatten(batch.trajectories);
  batch.log_behavior = policy.log_probabilities(batch.steps);
  return batch;
}

void compute_advantages(RolloutBatch& batch, double gamma, double lambda) {
  const auto n = static_cast<Eigen::Index>(batch.steps.size());
  if (batch.reward.size() != n || batch.value.size() != n) throw ValidationError("reward/value size mismatch");
  check_finite(batch.reward, "reward");
  check_finite(batch.value, "value");
  batch.advantage.resize(n);
  batch.returns.resize(n);
  const Eigen::Index horizon = mdp::kNumSteps;
  if (n % horizon != 0) throw ValidationError("rollout length is not a multiple of the episode length");
  for (Eigen::Index e = 0; e < n / horizon; ++e) {
    double gae = 0.0;
    for (Eigen::Index t = horizon - 1; t >= 0; --t) {
      const Eigen::Index i = e * horizon + t;
      const double next_v = t == horizon - 1 ? 0.0 : batch.value(i + 1);
      const double delta = batch.reward(i) + gamma * next_v - batch.value(i);
      gae = delta + gamma * lambda * gae;
      batch.advantage(i) = gae;
      batch.returns(i) = gae + batch.value(i);
    }
  }
}

// ---------------------------------------------------------------------------
// Policy losses

double ppo_policy_loss(PolicyModel& policy, const gen::StepBatch& steps, const Vector& log_behavior,
                       const Vector& advantage, double clip, double entropy_coef, bool accumulate,
                       PpoStats* stats) {
  PolicyPass pass = policy_pass(policy.net(), steps, accumulate);
  const auto n = static_cast<Eigen::Index>(steps.size());
  const Vector ent = nn::entropy(pass.probs);
  Matrix dlogits = Matrix::Zero(pass.logits.rows(), n);
  double loss = 0.0, ratio_sum = 0.0, max_dev = 0.0;
  long clipped = 0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const double ratio = std::exp(pass.log_taken(b) - log_behavior(b));
    const double a = advantage(b);
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    loss -= std::min(ratio * a, clipped_ratio * a) + entropy_coef * ent(b);
    ratio_sum += ratio;
    max_dev = std::max(max_dev, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > clip) ++clipped;
    if (!accumulate) continue;
    const bool frozen = (a > 0.0 && ratio > 1.0 + clip) || (a < 0.0 && ratio < 1.0 - clip);
    const int taken = mdp::index(steps.actions[static_cast<std::size_t>(b)]);
    if (!frozen) {
      const double coef = -a * ratio / static_cast<double>(n);
      dlogits.col(b) -= coef * pass.probs.col(b);
      dlogits(taken, b) += coef;
    }
    for (Eigen::Index k = 0; k < pass.probs.rows(); ++k) {
      const double p = pass.probs(k, b);
      if (p > 0.0) dlogits(k, b) += entropy_coef * p * (std::log(p) + ent(b)) / static_cast<double>(n);
    }
  }
  loss /= static_cast<double>(n);
  if (accumulate) policy.net().backward(pass.cache, dlogits);
  if (stats) {
    stats->mean_ratio = ratio_sum / static_cast<double>(n);
    stats->clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
    stats->entropy = ent.mean();
    stats->first_minibatch_ratio_deviation = max_dev;
    stats->policy_loss = loss;
  }
  return loss;
}

double bc_loss(PolicyModel& policy, const gen::StepBatch& batch, bool accumulate) {
  if (batch.size() == 0) throw ValidationError("empty batch");
  PolicyPass pass = policy_pass(policy.net(), batch, accumulate);
  const double n = static_cast<double>(batch.size());
  const double loss = -pass.log_taken.sum() / n;
  if (accumulate) {
    Matrix w = Matrix::Zero(pass.probs.rows(), pass.probs.cols());
    for (std::size_t b = 0; b < batch.size(); ++b)
      w(mdp::index(batch.actions[b]), static_cast<Eigen::Index>(b)) = -1.0 / n;
    policy.net().backward(pass.cache, nn::masked_log_softmax_grad(pass.probs, w));
  }
  return loss;
}

PpoStats ppo_update(PolicyModel& policy, ValueModel& value, nn::Adam& policy_opt, nn::Adam& value_opt,
                    const RolloutBatch& batch, const PpoConfig& config, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(batch.steps.size());
  if (n == 0) throw ValidationError("empty rollout batch");
  if (batch.advantage.size() != n || batch.returns.size() != n) throw ValidationError("advantages not computed");
  check_finite(batch.advantage, "advantage");
  check_finite(batch.returns, "return");

  Vector adv = batch.advantage;
  if (config.normalize_advantages) {
    const double mu = adv.mean();
    const double sd = std::sqrt((adv.array() - mu).square().mean());
    adv = ((adv.array() - mu) / (sd + 1e-8)).matrix();
  }

  // Running return statistics for the value scale.
  {
    const double mu = batch.returns.mean();
    const double sd = std::max(std::sqrt((batch.returns.array() - mu).square().mean()), 1e-3);
    if (value.mean == 0.0 && value.scale == 1.0) {
      value.mean = mu;
      value.scale = sd;
    } else {
      value.mean = 0.9 * value.mean + 0.1 * mu;
      value.scale = 0.9 * value.scale + 0.1 * sd;
    }
  }

  const std::size_t mb = static_cast<std::size_t>(std::max(config.minibatch, 1));
  std::vector<std::size_t> order = iota_rows(static_cast<std::size_t>(n));
  PpoStats total;
  double ratio_sum = 0.0, clip_sum = 0.0, ent_sum = 0.0, ploss_sum = 0.0, vloss_sum = 0.0;
  long updates = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const gen::StepBatch sub = batch.steps.subset(rows);
      Vector sub_logb(static_cast<Eigen::Index>(rows.size())), sub_adv(sub_logb.size()), sub_ret(sub_logb.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        sub_logb(static_cast<Eigen::Index>(r)) = batch.log_behavior(i);
        sub_adv(static_cast<Eigen::Index>(r)) = adv(i);
        sub_ret(static_cast<Eigen::Index>(r)) = batch.returns(i);
      }

      PpoStats s;
      policy_opt.zero_grad();
      ppo_policy_loss(policy, sub, sub_logb, sub_adv, config.clip, config.entropy_coef, true, &s);
      policy_opt.step();
      if (updates == 0) total.first_minibatch_ratio_deviation = s.first_minibatch_ratio_deviation;

      nn::StateProfileNet::Cache vc;
      const Matrix out = value.net().forward(sub.states, sub.profiles, &vc);
      const Eigen::RowVectorXd target = ((sub_ret.array() - value.mean) / value.scale).matrix().transpose();
      const Eigen::RowVectorXd diff = out.row(0) - target;
      const double m = static_cast<double>(rows.size());
      value_opt.zero_grad();
      value.net().backward(vc, Matrix(diff / m));
      value_opt.step();

      ratio_sum += s.mean_ratio;
      clip_sum += s.clip_fraction;
      ent_sum += s.entropy;
      ploss_sum += s.policy_loss;
      vloss_sum += 0.5 * diff.squaredNorm() / m;
      ++updates;
    }
  }
  if (updates > 0) {
    const double u = static_cast<double>(updates);
    total.mean_ratio = ratio_sum / u;
    total.clip_fraction = clip_sum / u;
    total.entropy = ent_sum / u;
    total.policy_loss = ploss_sum / u;
    total.value_loss = vloss_sum / u;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Behavior cloning

PolicyModel fit_bc(std::span<const mdp::Trajectory> demonstrations, const BcConfig& config, const PolicyModel* init) {
  if (demonstrations.empty()) throw ValidationError("behavior cloning needs demonstrations");
  PolicyModel policy = init ? *init : PolicyModel(config.architecture, derive_seed(config.seed, 1));
  const gen::StepBatch all = gen::flatten(demonstrations);
  nn::Adam opt(policy.params(), nn::AdamOptions{config.learning_rate});
  Rng rng(derive_seed(config.seed, 4));
  std::vector<std::size_t> order = iota_rows(all.size());
  const std::size_t mb = static_cast<std::size_t>(std::max(config.minibatch, 1));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      const gen::StepBatch sub = all.subset(std::span<const std::size_t>(order.data() + start, end - start));
      opt.zero_grad();
      bc_loss(policy, sub, true);
      opt.step();
    }
  }
  return policy;
}

// ---------------------------------------------------------------------------
// Training loop

nlohmann::json to_json(const IterationLog& log) {
  nlohmann::ordered_json j;
  j["iteration"] = log.iteration;
  j["discriminator_loss"] = log.discriminator_loss;
  j["mean_D_expert"] = log.mean_d_expert;
  j["mean_D_generated"] = log.mean_d_generated;
  j["policy_entropy"] = log.policy_entropy;
  j["eval_accuracy"] = log.eval_accuracy ? nlohmann::ordered_json(*log.eval_accuracy) : nlohmann::ordered_json();
  j["mean_ratio"] = log.mean_ratio;
  j["clip_fraction"] = log.clip_fraction;
  return nlohmann::json::parse(j.dump());
}

TrainResult train(std::span<const mdp::Trajectory> demonstrations, const TrainConfig& config,
                  const IterationCallback& on_iteration) {
  if (demonstrations.empty()) throw ValidationError("training set is empty");
  if (config.iterations < 0) throw ConfigError("iterations must be non-negative");
  if (config.episodes_per_iteration < 1) throw ConfigError("episodes_per_iteration must be positive");

  TrainResult result{PolicyModel(config.architecture, derive_seed(config.seed, 1)),
                     RewardModel(config.architecture, config.gamma, derive_seed(config.seed, 3)),
                     ValueModel(config.architecture, derive_seed(config.seed, 2)),
                     {}};
  if (config.iterations == 0) return result;

  PolicyModel& policy = result.policy;
  RewardModel& reward = result.reward;
  ValueModel& value = result.value;

  if (config.bc_warmstart_epochs > 0) {
    BcConfig bc;
    bc.architecture = config.architecture;
    bc.epochs = config.bc_warmstart_epochs;
    bc.minibatch = config.bc_minibatch;
    bc.learning_rate = config.bc_learning_rate;
    bc.seed = derive_seed(config.seed, 6);
    policy = fit_bc(demonstrations, bc, &policy);
  }

  nn::Adam policy_opt(policy.params(), nn::AdamOptions{config.ppo.learning_rate, 0.9, 0.999, 1e-8,
                                                       config.ppo.max_grad_norm});
  nn::Adam value_opt(value.params(), nn::AdamOptions{config.ppo.value_learning_rate, 0.9, 0.999, 1e-8,
                                                     config.ppo.max_grad_norm});
  nn::ParameterVector reward_params = reward.params();
  nn::Adam reward_opt(reward_params, nn::AdamOptions{config.discriminator_learning_rate});

  Rng rng(derive_seed(config.seed, 4));
  const std::size_t m = demonstrations.size();
  std::vector<std::size_t> users = iota_rows(m);

  // Fixed evaluation subset.
  std::vector<mdp::Trajectory> eval_set;
  {
    Rng eval_rng(derive_seed(config.seed, 5));
    std::vector<std::size_t> pick = users;
    shuffle_in_place(pick, eval_rng);
    pick.resize(std::min<std::size_t>(m, static_cast<std::size_t>(std::max(config.eval_users, 0))));
    std::sort(pick.begin(), pick.end());
    for (std::size_t i : pick) eval_set.push_back(demonstrations[i]);
  }
  const auto eval_truth = gen::labels_of(eval_set);

  const std::size_t per_iter = std::min<std::size_t>(m, static_cast<std::size_t>(config.episodes_per_iteration));
  int streak = 0;
  for (int it = 0; it < config.iterations; ++it) {
    // Partial Fisher-Yates for a subset of users.
    for (std::size_t i = 0; i < per_iter; ++i) std::swap(users[i], users[i + uniform_index(rng, m - i)]);
    std::vector<std::size_t> chosen(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(per_iter));
    std::sort(chosen.begin(), chosen.end());
    std::vector<mdp::Trajectory> batch_users;
    batch_users.reserve(per_iter);
    for (std::size_t i : chosen) batch_users.push_back(demonstrations[i]);

    RolloutBatch rollouts = collect_rollouts(policy, batch_users, 1, derive_seed(config.seed, 1000 + it), config.jobs);
    const gen::StepBatch expert = gen::flatten(batch_users);
    const Vector log_pi_expert = policy.log_probabilities(expert);

    IterationLog log;
    log.iteration = it;
    {
      const Vector ze = reward.shaped(expert) - log_pi_expert;
      const Vector zg = reward.shaped(rollouts.steps) - rollouts.log_behavior;
      log.discriminator_loss = discriminator_loss_logits(ze, zg).value;
      double de = 0.0, dg = 0.0, fe = 0.0, fg = 0.0;
      for (Eigen::Index i = 0; i < ze.size(); ++i) {
        const double d = sigmoid(ze(i));
        de += d;
        fe += std::abs(d - 0.5);
      }
      for (Eigen::Index i = 0; i < zg.size(); ++i) {
        const double d = sigmoid(zg(i));
        dg += d;
        fg += std::abs(d - 0.5);
      }
      log.mean_d_expert = de / static_cast<double>(ze.size());
      log.mean_d_generated = dg / static_cast<double>(zg.size());
      fe /= static_cast<double>(ze.size());
      fg /= static_cast<double>(zg.size());
      if (fe > config.divergence_threshold && fg > config.divergence_threshold) {
        if (++streak >= config.divergence_patience) {
          std::ostringstream os;
          os << "discriminator saturated for " << streak << " iterations (iteration " << it
             << ", mean D expert " << log.mean_d_expert << ", generated " << log.mean_d_generated << ")";
          throw TrainingDiverged(os.str());
        }
      } else {
        streak = 0;
      }
    }

    // Discriminator.
    const std::size_t n_exp = expert.size(), n_gen = rollouts.steps.size();
    const std::size_t half = static_cast<std::size_t>(std::max(config.discriminator_minibatch / 2, 1));
    std::vector<std::size_t> eorder = iota_rows(n_exp), gorder = iota_rows(n_gen);
    for (int epoch = 0; epoch < config.discriminator_epochs; ++epoch) {
      shuffle_in_place(eorder, rng);
      shuffle_in_place(gorder, rng);
      for (std::size_t start = 0; start < std::min(n_exp, n_gen); start += half) {
        const std::size_t len = std::min(half, std::min(n_exp, n_gen) - start);
        const std::span<const std::size_t> er(eorder.data() + start, len), gr(gorder.data() + start, len);
        const gen::StepBatch eb = expert.subset(er), gb = rollouts.steps.subset(gr);
        Vector lpe(static_cast<Eigen::Index>(len)), lpg(static_cast<Eigen::Index>(len));
        for (std::size_t r = 0; r < len; ++r) {
          lpe(static_cast<Eigen::Index>(r)) = log_pi_expert(static_cast<Eigen::Index>(er[r]));
          lpg(static_cast<Eigen::Index>(r)) = rollouts.log_behavior(static_cast<Eigen::Index>(gr[r]));
        }
        reward_opt.zero_grad();
        reward_loss(reward, eb, lpe, gb, lpg, true);
        if (config.discriminator_l2 > 0.0)
          for (const auto& blk : reward_params.blocks()) *blk.grad += config.discriminator_l2 * *blk.value;
        reward_opt.step();
      }
    }

    // Generator.
    const Vector r = reward.shaped(rollouts.steps);
    rollouts.reward.resize(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i)
      rollouts.reward(i) = config.reward_signal == RewardSignal::MaxEnt ? r(i) - rollouts.log_behavior(i) : r(i);
    rollouts.value = value.predict(rollouts.steps.states, rollouts.steps.profiles);
    compute_advantages(rollouts, config.gamma, config.gae_lambda);
    const PpoStats stats = ppo_update(policy, value, policy_opt, value_opt, rollouts, config.ppo, rng);
    log.policy_entropy = stats.entropy;
    log.mean_ratio = stats.mean_ratio;
    log.clip_fraction = stats.clip_fraction;

    if (!eval_set.empty() && config.eval_every > 0 &&
        ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations)) {
      const auto gen_eval = gen::generate(policy, eval_set, derive_seed(config.seed, 500000 + it), config.jobs);
      log.eval_accuracy = metrics::accuracy(gen::labels_of(gen_eval), eval_truth);
    }

    result.log.push_back(log);
    if (on_iteration) on_iteration(log);
  }
  return result;
}

}  // namespace activity_airl::airl
