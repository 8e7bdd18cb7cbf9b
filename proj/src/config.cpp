#include "activity_airl/config.hpp"

#include <fstream>

namespace activity_airl::config {

Json defaults() {
  return Json::parse(R"json({
  "seed": 7,
  "jobs": 1,
  "out": "out",
  "data": {
    "source": "synthetic",
    "survey_path": "",
    "taxonomy_path": "",
    "trajectories_path": "",
    "split_ratio": 0.8,
    "synth": {
      "population": 2500,
      "mix": {"worker": 0.25, "student": 0.25, "homemaker": 0.25, "retiree": 0.25},
      "jitter_minutes": 20.0,
      "others_rate": 0.15
    }
  },
  "model": {"time_embedding_dim": 8, "embedding_dim": 4, "hidden": [64, 64]},
  "train": {
    "gamma": 0.99,
    "gae_lambda": 0.95,
    "iterations": 60,
    "episodes_per_iteration": 256,
    "discriminator_epochs": 1,
    "discriminator_minibatch": 2048,
    "discriminator_learning_rate": 0.002,
    "discriminator_l2": 0.0001,
    "reward_signal": "maxent",
    "bc_warmstart_epochs": 0,
    "eval_every": 10,
    "eval_users": 200,
    "divergence_patience": 25,
    "divergence_threshold": 0.49,
    "ppo": {
      "clip": 0.2,
      "epochs": 4,
      "minibatch": 2048,
      "entropy_coef": 0.01,
      "learning_rate": 0.0003,
      "value_learning_rate": 0.001,
      "max_grad_norm": 0.5
    },
    "bc": {"epochs": 20, "minibatch": 512, "learning_rate": 0.001}
  },
  "mnl": {"l2": 0.0001, "max_iterations": 500, "tolerance": 1e-05},
  "evaluate": {"model": ""},
  "distill": {
    "policy": "",
    "alphas": [0.0, 0.5, 0.9, 0.99, 1.0],
    "bootstrap_alpha": 1.0,
    "bootstrap_resamples": 100,
    "bootstrap_fraction": 0.8
  },
  "interpret": {
    "reward": "",
    "k": 4,
    "k_max": 8,
    "restarts": 10,
    "gamma": null,
    "histogram_bins": 40
  }
})json");
}

namespace {

bool same_kind(const Json& def, const Json& user) {
  if (def.is_null() || user.is_null()) return true;
  if (def.is_number() && user.is_number()) return !def.is_number_integer() || user.is_number_integer();
  return def.type() == user.type();
}

void merge_at(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    Json& slot = base[it.key()];
    if (key == "data.synth.mix") {
      if (!it.value().is_object()) throw ConfigError("data.synth.mix must be an object");
      for (const auto& [name, _] : slot.items())
        if (!it.value().contains(name)) throw ConfigError("archetype weight '" + name + "' is missing from data.synth.mix");
    }
    if (slot.is_object()) {
      merge_at(slot, it.value(), key);
      continue;
    }
    if (!same_kind(slot, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
    slot = it.value();
  }
}

}  // namespace

void merge(Json& base, const Json& user) { merge_at(base, user, ""); }

Json load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json user;
  try {
    user = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  Json cfg = defaults();
  merge(cfg, user);
  return cfg;
}

void apply_override(Json& cfg, const std::string& dotted, const std::string& value) {
  Json* node = &cfg;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    parts.push_back(dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config key '" + dotted + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back())) throw ConfigError("unknown config key '" + dotted + "'");
  Json& slot = (*node)[parts.back()];
  Json parsed;
  if (slot.is_string()) {
    parsed = value;
  } else {
    try {
      parsed = Json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      throw ConfigError("cannot read '" + value + "' as a value for " + dotted);
    }
  }
  if (slot.is_object()) {
    Json tmp = slot;
    merge_at(tmp, parsed, dotted);
    slot = std::move(tmp);
    return;
  }
  if (!same_kind(slot, parsed)) throw ConfigError("config key '" + dotted + "' has the wrong type");
  slot = std::move(parsed);
}

nn::ArchitectureConfig architecture(const Json& cfg) {
  return nn::architecture_from_json(nlohmann::json::parse(cfg.at("model").dump()));
}

data::SynthConfig synth(const Json& cfg) {
  const auto& s = cfg.at("data").at("synth");
  data::SynthConfig c;
  c.population = s.at("population").get<int>();
  if (c.population < 1) throw ConfigError("data.synth.population must be positive");
  const auto& mix = s.at("mix");
  for (const char* k : {"worker", "student", "homemaker", "retiree"})
    if (mix.at(k).is_null()) throw ConfigError(std::string("archetype weight '") + k + "' is missing");
  c.mix.worker = mix.at("worker").get<double>();
  c.mix.student = mix.at("student").get<double>();
  c.mix.homemaker = mix.at("homemaker").get<double>();
  c.mix.retiree = mix.at("retiree").get<double>();
  c.jitter_minutes = s.at("jitter_minutes").get<double>();
  c.others_rate = s.at("others_rate").get<double>();
  return c;
}

airl::TrainConfig train(const Json& cfg) {
  const auto& t = cfg.at("train");
  airl::TrainConfig c;
  c.architecture = architecture(cfg);
  c.gamma = t.at("gamma").get<double>();
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("train.gamma must lie in (0, 1]");
  c.gae_lambda = t.at("gae_lambda").get<double>();
  c.iterations = t.at("iterations").get<int>();
  c.episodes_per_iteration = t.at("episodes_per_iteration").get<int>();
  c.discriminator_epochs = t.at("discriminator_epochs").get<int>();
  c.discriminator_minibatch = t.at("discriminator_minibatch").get<int>();
  c.discriminator_learning_rate = t.at("discriminator_learning_rate").get<double>();
  c.discriminator_l2 = t.at("discriminator_l2").get<double>();
  c.reward_signal = airl::parse_reward_signal(t.at("reward_signal").get<std::string>());
  c.bc_warmstart_epochs = t.at("bc_warmstart_epochs").get<int>();
  c.eval_every = t.at("eval_every").get<int>();
  c.eval_users = t.at("eval_users").get<int>();
  c.divergence_patience = t.at("divergence_patience").get<int>();
  c.divergence_threshold = t.at("divergence_threshold").get<double>();
  const auto& p = t.at("ppo");
  c.ppo.clip = p.at("clip").get<double>();
  c.ppo.epochs = p.at("epochs").get<int>();
  c.ppo.minibatch = p.at("minibatch").get<int>();
  c.ppo.entropy_coef = p.at("entropy_coef").get<double>();
  c.ppo.learning_rate = p.at("learning_rate").get<double>();
  c.ppo.value_learning_rate = p.at("value_learning_rate").get<double>();
  c.ppo.max_grad_norm = p.at("max_grad_norm").get<double>();
  const airl::BcConfig b = bc(cfg);
  c.bc_learning_rate = b.learning_rate;
  c.bc_minibatch = b.minibatch;
  c.seed = seed(cfg);
  c.jobs = jobs(cfg);
  return c;
}

airl::BcConfig bc(const Json& cfg) {
  const auto& b = cfg.at("train").at("bc");
  airl::BcConfig c;
  c.architecture = architecture(cfg);
  c.epochs = b.at("epochs").get<int>();
  c.minibatch = b.at("minibatch").get<int>();
  c.learning_rate = b.at("learning_rate").get<double>();
  c.seed = seed(cfg);
  return c;
}

distill::FitOptions surrogate(const Json& cfg, double alpha) {
  const auto& m = cfg.at("mnl");
  distill::FitOptions o;
  o.alpha = alpha;
  o.l2 = m.at("l2").get<double>();
  o.max_iterations = m.at("max_iterations").get<int>();
  o.tolerance = m.at("tolerance").get<double>();
  return o;
}

std::uint64_t seed(const Json& cfg) {
  const auto& s = cfg.at("seed");
  if (s.is_number_unsigned()) return s.get<std::uint64_t>();
  const auto v = s.get<long long>();
  if (v < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

int jobs(const Json& cfg) {
  const int j = cfg.at("jobs").get<int>();
  if (j < 1) throw ConfigError("jobs must be at least 1");
  return j;
}

}  // namespace activity_airl::config
