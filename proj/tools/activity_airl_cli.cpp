// activity-airl: synthesize data, train models, evaluate, distill and interpret.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "activity_airl/airl.hpp"
#include "activity_airl/baselines.hpp"
#include "activity_airl/config.hpp"
#include "activity_airl/data_io.hpp"
#include "activity_airl/distill.hpp"
#include "activity_airl/interpret.hpp"
#include "activity_airl/metrics.hpp"
#include "activity_airl/plots.hpp"

namespace fs = std::filesystem;
using namespace activity_airl;
using config::Json;

namespace {

// Seed streams derived from the master seed.
constexpr std::uint64_t kSplitStream = 11;
constexpr std::uint64_t kEvalStream = 12;
constexpr std::uint64_t kBootstrapStream = 13;
constexpr std::uint64_t kClusterStream = 14;

struct Options {
  std::string command;
  std::string config_path;
  std::optional<long long> seed;
  std::string out;
  std::string baseline = "airl";
  std::optional<int> jobs;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct Prepared {
  data::Dataset all;
  data::Split split;
  data::ProfileScaler scaler;
  std::vector<mdp::Trajectory> train, test;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

Prepared prepare(const Json& cfg) {
  const auto& d = cfg.at("data");
  const std::string source = d.at("source").get<std::string>();
  const std::uint64_t seed = config::seed(cfg);
  Prepared p;
  if (source == "synthetic") {
    p.all = data::synthesize_population(config::synth(cfg), seed);
  } else if (source == "trajectories") {
    const fs::path path = d.at("trajectories_path").get<std::string>();
    if (path.empty() || !fs::exists(path)) throw ConfigError("trajectory file not found: '" + path.string() + "'");
    p.all = data::load_trajectories(path);
  } else if (source == "survey") {
    const fs::path path = d.at("survey_path").get<std::string>();
    if (path.empty() || !fs::exists(path)) throw ConfigError("survey file not found: '" + path.string() + "'");
    const std::string tax = d.at("taxonomy_path").get<std::string>();
    const data::PurposeTaxonomy taxonomy = tax.empty() ? data::PurposeTaxonomy::standard() : data::PurposeTaxonomy::load(tax);
    data::LoadReport report;
    p.all = data::load_survey(path, taxonomy, &report);
    std::cerr << "survey: " << report.rows_read << " rows, " << report.rows_dropped << " dropped, "
              << report.users_loaded << " users loaded, " << report.users_dropped << " users dropped\n";
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  } else {
    throw ConfigError("data.source must be synthetic, trajectories or survey");
  }
  p.split = data::split(p.all, d.at("split_ratio").get<double>(), derive_seed(seed, kSplitStream));
  p.scaler = data::ProfileScaler::fit(p.split.train.persons);
  p.train = data::to_trajectories(p.split.train.persons, p.scaler);
  p.test = data::to_trajectories(p.split.test.persons, p.scaler);
  return p;
}

void check_architecture(const nlohmann::json& doc, const Json& cfg) {
  const nn::ArchitectureConfig stored = nn::architecture_from_json(doc.at("config").at("architecture"));
  if (!(stored == config::architecture(cfg)))
    throw ShapeMismatch("checkpoint architecture " + doc.at("config").at("architecture").dump() +
                        " does not match the configured model " + cfg.at("model").dump());
}

void write_config(const fs::path& path, const Json& cfg) {
  auto out = open_out(path);
  out << cfg.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

int cmd_synth(const Json& cfg, const fs::path& out_dir) {
  const data::Dataset ds = data::synthesize_population(config::synth(cfg), config::seed(cfg));
  fs::create_directories(out_dir);
  data::save_trajectories(out_dir / "trajectories.jsonl", ds);
  {
    auto out = open_out(out_dir / "profiles.csv");
    data::write_profiles(out, ds);
  }
  std::map<std::string, int> counts;
  for (const auto& p : ds.persons) ++counts[p.archetype];
  std::cout << "wrote " << ds.persons.size() << " trajectories to " << (out_dir / "trajectories.jsonl").string() << '\n';
  for (const auto& [a, n] : counts) std::cout << "  " << a << ": " << n << '\n';
  return 0;
}

int cmd_train(const Json& cfg, const fs::path& out_dir, const std::string& baseline) {
  const Prepared p = prepare(cfg);
  const fs::path dir = out_dir / baseline;
  fs::create_directories(dir);
  std::cout << "training " << baseline << " on " << p.train.size() << " users\n";
  if (baseline == "airl") {
    const airl::TrainConfig tc = config::train(cfg);
    auto log = open_out(dir / "train_log.jsonl");
    airl::TrainResult res = airl::train(p.train, tc, [&](const airl::IterationLog& l) {
      log << airl::to_json(l).dump() << '\n';
      log.flush();
      if (l.eval_accuracy)
        std::cout << "  iteration " << l.iteration << ": D loss " << fmt(l.discriminator_loss) << ", accuracy "
                  << fmt(*l.eval_accuracy) << '\n';
    });
    nn::write_json_file(dir / "policy.json", res.policy.checkpoint());
    nn::write_json_file(dir / "reward.json", res.reward.checkpoint());
  } else if (baseline == "mmc") {
    const baselines::MarkovChain m = baselines::fit_mmc(p.train);
    nn::write_json_file(dir / "model.json", m.to_json());
    auto out = open_out(dir / "transition_table.csv");
    m.write_table(out);
  } else if (baseline == "mnl") {
    distill::FitResult fr = baselines::fit_mnl(p.train, config::surrogate(cfg, 0.0));
    std::cout << "  " << fr.message << " after " << fr.iterations << " iterations, gradient norm "
              << fr.gradient_norm << '\n';
    nn::write_json_file(dir / "model.json", fr.model.checkpoint("mnl", 0.0));
  } else if (baseline == "bc") {
    airl::PolicyModel m = baselines::fit_bc(p.train, config::bc(cfg));
    nn::write_json_file(dir / "model.json", m.checkpoint("bc"));
  } else {
    throw ConfigError("unknown baseline '" + baseline + "' (expected airl, mmc, mnl or bc)");
  }
  write_config(dir / "config.json", cfg);
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

std::unique_ptr<gen::ChoiceModel> load_model(const Json& cfg, const fs::path& out_dir, const std::string& baseline) {
  std::string path = cfg.at("evaluate").at("model").get<std::string>();
  if (baseline == "airl") {
    if (path.empty()) path = (out_dir / "airl" / "policy.json").string();
    const auto doc = nn::read_checkpoint(path, "policy");
    check_architecture(doc, cfg);
    return std::make_unique<airl::PolicyModel>(airl::PolicyModel::from_checkpoint(doc));
  }
  if (path.empty()) path = (out_dir / baseline / "model.json").string();
  if (baseline == "bc") {
    const auto doc = nn::read_checkpoint(path, "bc");
    check_architecture(doc, cfg);
    return std::make_unique<airl::PolicyModel>(airl::PolicyModel::from_checkpoint(doc));
  }
  if (baseline == "mmc")
    return std::make_unique<baselines::MarkovChain>(baselines::MarkovChain::from_json(nn::read_checkpoint(path, "mmc")));
  if (baseline == "mnl")
    return std::make_unique<distill::MnlModel>(distill::MnlModel::from_checkpoint(nn::read_checkpoint(path, "mnl")));
  throw ConfigError("unknown baseline '" + baseline + "' (expected airl, mmc, mnl, bc or truth)");
}

metrics::EvalReport evaluate_model(const gen::ChoiceModel& model, const std::string& name,
                                   std::span<const mdp::Trajectory> test, const Json& cfg) {
  const auto generated = gen::generate(model, test, derive_seed(config::seed(cfg), kEvalStream), config::jobs(cfg));
  return metrics::evaluate(name, gen::labels_of(generated), gen::labels_of(test));
}

int cmd_evaluate(const Json& cfg, const fs::path& out_dir, const std::string& baseline) {
  const Prepared p = prepare(cfg);
  metrics::EvalReport report;
  if (baseline == "truth") {
    const auto truth = gen::labels_of(p.test);
    report = metrics::evaluate("truth", truth, truth);
  } else {
    const auto model = load_model(cfg, out_dir, baseline);
    report = evaluate_model(*model, baseline, p.test, cfg);
  }
  const fs::path dir = out_dir / "evaluation";
  fs::create_directories(dir);
  auto out = open_out(dir / (baseline + ".csv"));
  metrics::write_report_table(out, std::span<const metrics::EvalReport>(&report, 1));
  std::cout << baseline << ": ACC " << fmt(report.accuracy) << "  ED " << fmt(report.edit_distance) << "  BLEU "
            << fmt(report.bleu) << "  (" << p.test.size() << " test users)\n";
  return 0;
}

int cmd_distill(const Json& cfg, const fs::path& out_dir) {
  const Prepared p = prepare(cfg);
  const auto& d = cfg.at("distill");
  std::string path = d.at("policy").get<std::string>();
  if (path.empty()) path = (out_dir / "airl" / "policy.json").string();
  const auto doc = nn::read_checkpoint(path, "policy");
  check_architecture(doc, cfg);
  const airl::PolicyModel teacher = airl::PolicyModel::from_checkpoint(doc);

  distill::EncodedData data = distill::encode_dataset(p.train);
  data.soft = distill::soft_labels(teacher, p.train);

  const fs::path dir = out_dir / "distill";
  fs::create_directories(dir);
  auto sweep = open_out(dir / "alpha_sweep.csv");
  sweep << "alpha,ACC,ED,BLEU\n" << std::fixed << std::setprecision(6);
  for (const auto& a : d.at("alphas")) {
    const double alpha = a.get<double>();
    distill::FitResult fr = distill::fit_surrogate(data, config::surrogate(cfg, alpha));
    const metrics::EvalReport r = evaluate_model(fr.model, "alpha", p.test, cfg);
    sweep << alpha << ',' << r.accuracy << ',' << r.edit_distance << ',' << r.bleu << '\n';
    std::ostringstream name;
    name << "surrogate_alpha_" << alpha << ".json";
    nn::write_json_file(dir / name.str(), fr.model.checkpoint("mnl", alpha));
    std::cout << "alpha " << alpha << ": ACC " << fmt(r.accuracy) << "  ED " << fmt(r.edit_distance) << "  BLEU "
              << fmt(r.bleu) << "  (" << fr.message << ", " << fr.iterations << " iterations)\n";
  }
  const double alpha = d.at("bootstrap_alpha").get<double>();
  const distill::CoefficientTable table = distill::bootstrap_cis(
      data, config::surrogate(cfg, alpha), d.at("bootstrap_resamples").get<int>(),
      d.at("bootstrap_fraction").get<double>(), derive_seed(config::seed(cfg), kBootstrapStream), config::jobs(cfg));
  {
    auto out = open_out(dir / "coefficients.csv");
    table.write_csv(out);
  }
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

// Averages consecutive rows into at most `bands` rows so large populations stay plottable.
nn::Matrix band_rows(const nn::Matrix& m, int bands) {
  if (m.rows() <= bands) return m;
  nn::Matrix out = nn::Matrix::Zero(bands, m.cols());
  for (int b = 0; b < bands; ++b) {
    const Eigen::Index lo = m.rows() * b / bands, hi = m.rows() * (b + 1) / bands;
    out.row(b) = m.middleRows(lo, hi - lo).colwise().mean();
  }
  return out;
}

int cmd_interpret(const Json& cfg, const fs::path& out_dir) {
  const Prepared p = prepare(cfg);
  const auto& ic = cfg.at("interpret");
  std::string path = ic.at("reward").get<std::string>();
  if (path.empty()) path = (out_dir / "airl" / "reward.json").string();
  const auto doc = nn::read_checkpoint(path, "reward");
  check_architecture(doc, cfg);
  const airl::RewardModel reward = airl::RewardModel::from_checkpoint(doc);
  const double gamma = ic.at("gamma").is_null() ? reward.gamma() : ic.at("gamma").get<double>();

  std::vector<mdp::Trajectory> trajs = data::to_trajectories(p.all.persons, p.scaler);
  const auto sequences = interpret::reward_sequences(trajs, reward);
  const nn::Matrix x = interpret::to_matrix(sequences);

  const int k = ic.at("k").get<int>();
  interpret::KMeansOptions km;
  km.restarts = ic.at("restarts").get<int>();
  const std::uint64_t cseed = derive_seed(config::seed(cfg), kClusterStream);
  const interpret::ClusterAssignment assignment = interpret::cluster(x, k, cseed, km);
  const int k_max = std::min<int>(ic.at("k_max").get<int>(), static_cast<int>(x.rows()));
  const std::vector<double> curve = interpret::elbow(x, 1, k_max, cseed, km);
  const auto records = interpret::assign_return_groups(sequences, gamma);
  const auto groups = interpret::quantile_report(records, p.all.persons);

  const fs::path dir = out_dir / "interpret";
  const fs::path plot_dir = dir / "plots";
  fs::create_directories(plot_dir);
  {
    auto out = open_out(dir / "reward_sequences.jsonl");
    interpret::write_reward_sequences(out, sequences);
  }
  {
    auto out = open_out(dir / "clusters.csv");
    interpret::write_clusters(out, sequences, assignment);
  }
  {
    auto out = open_out(dir / "elbow.csv");
    out << "k,inertia\n" << std::setprecision(12);
    for (std::size_t i = 0; i < curve.size(); ++i) out << i + 1 << ',' << curve[i] << '\n';
  }
  {
    auto out = open_out(dir / "returns.csv");
    interpret::write_returns(out, records);
  }
  {
    auto out = open_out(dir / "quantile_report.csv");
    interpret::write_quantile_report(out, groups);
  }

  bool labelled = !p.all.persons.empty();
  for (const auto& person : p.all.persons) labelled = labelled && !person.archetype.empty();
  if (labelled) {
    std::vector<int> classes;
    std::map<std::string, int> ids;
    for (const auto& person : p.all.persons) classes.push_back(ids.emplace(person.archetype, static_cast<int>(ids.size())).first->second);
    std::map<int, std::map<std::string, int>> table;
    for (std::size_t i = 0; i < classes.size(); ++i) ++table[assignment.labels[i]][p.all.persons[i].archetype];
    auto out = open_out(dir / "cluster_archetypes.csv");
    out << "cluster";
    for (const auto& [name, _] : ids) out << ',' << name;
    out << '\n';
    for (int c = 0; c < k; ++c) {
      out << c;
      for (const auto& [name, _] : ids) out << ',' << table[c][name];
      out << '\n';
    }
    std::cout << "cluster purity against archetypes: " << fmt(interpret::purity(assignment.labels, classes)) << '\n';
  }

  // Plots.
  std::vector<plots::IndexEntry> index;
  {
    std::vector<plots::Series> by_activity;
    for (mdp::Activity a : mdp::kAllActivities) by_activity.push_back({std::string(mdp::to_string(a)), {}});
    for (std::size_t i = 0; i < trajs.size(); ++i)
      for (std::size_t t = 0; t < trajs[i].labels.size(); ++t)
        by_activity[static_cast<std::size_t>(mdp::index(trajs[i].labels[t]))].values.push_back(sequences[i].values[t]);
    plots::histograms(plot_dir / "reward_by_activity.svg", by_activity, ic.at("histogram_bins").get<int>(),
                      "Step rewards by chosen activity");
    index.push_back({"reward_by_activity.svg", "distribution of step rewards for each activity"});
  }
  {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return assignment.labels[static_cast<std::size_t>(a)] < assignment.labels[static_cast<std::size_t>(b)];
    });
    nn::Matrix sorted(x.rows(), x.cols());
    for (std::size_t i = 0; i < order.size(); ++i) sorted.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
    plots::heatmap(plot_dir / "cluster_heatmap.svg", band_rows(sorted, 200), "Reward sequences grouped by cluster",
                   "time interval", "planners (by cluster)");
    index.push_back({"cluster_heatmap.svg", "reward sequences ordered by cluster"});
    plots::heatmap(plot_dir / "cluster_centroids.svg", assignment.centroids, "Cluster centroids", "time interval",
                   "cluster");
    index.push_back({"cluster_centroids.svg", "mean reward sequence of each cluster"});
  }
  {
    std::map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < sequences.size(); ++i) row_of[sequences[i].person_id] = static_cast<Eigen::Index>(i);
    nn::Matrix sorted(x.rows(), x.cols());
    for (std::size_t i = 0; i < records.size(); ++i) sorted.row(static_cast<Eigen::Index>(i)) = x.row(row_of.at(records[i].person_id));
    plots::heatmap(plot_dir / "returns_heatmap.svg", band_rows(sorted, 200), "Reward sequences by descending return",
                   "time interval", "planners (highest return first)");
    index.push_back({"returns_heatmap.svg", "reward sequences sorted by long-term return"});
  }
  {
    std::vector<double> ks;
    for (std::size_t i = 0; i < curve.size(); ++i) ks.push_back(static_cast<double>(i + 1));
    plots::line_chart(plot_dir / "elbow.svg", ks, curve, "k-means inertia", "k", "inertia");
    index.push_back({"elbow.svg", "inertia against the number of clusters"});
  }
  {
    std::vector<std::string> cats;
    for (int e = 0; e < mdp::kNumEmployment; ++e) cats.emplace_back(mdp::to_string(mdp::employment_from_index(e)));
    std::vector<plots::Series> series;
    for (const auto& g : groups)
      series.push_back({std::string(interpret::to_string(g.group)), {g.employment_share.begin(), g.employment_share.end()}});
    plots::grouped_bars(plot_dir / "return_groups_employment.svg", cats, series, "Employment share by return group");
    index.push_back({"return_groups_employment.svg", "employment composition of each return group"});
    std::vector<plots::Series> profile;
    for (const auto& g : groups) profile.push_back({std::string(interpret::to_string(g.group)), {g.female_share}});
    plots::grouped_bars(plot_dir / "return_groups_female.svg", {"female share"}, profile, "Female share by return group");
    index.push_back({"return_groups_female.svg", "female share of each return group"});
  }
  plots::write_index(plot_dir / "index.txt", index);
  std::cout << "wrote " << dir.string() << " (" << sequences.size() << " reward sequences, k = " << k << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"Adversarial inverse reinforcement learning for daily activity-travel sequences"};
  app.allow_extras();
  app.add_option("command", opt.command, "synth | train | evaluate | distill | interpret")
      ->required()
      ->check(CLI::IsMember({"synth", "train", "evaluate", "distill", "interpret"}));
  app.add_option("--config", opt.config_path, "JSON configuration file");
  app.add_option("--seed", opt.seed, "master seed (overrides the config)");
  app.add_option("--out", opt.out, "output directory (ACTIVITY_AIRL_OUT takes precedence)");
  app.add_option("--baseline", opt.baseline, "model for train/evaluate: airl, mmc, mnl, bc (evaluate also: truth)");
  app.add_option("--jobs", opt.jobs, "worker thread cap");
  app.footer("Any config key can be overridden with --section.key=value.");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Json cfg = opt.config_path.empty() ? config::defaults() : config::load(opt.config_path);
    const auto extras = app.remaining();
    for (std::size_t i = 0; i < extras.size(); ++i) {
      std::string arg = extras[i];
      if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
      arg = arg.substr(2);
      std::string value;
      const auto eq = arg.find('=');
      if (eq != std::string::npos) {
        value = arg.substr(eq + 1);
        arg = arg.substr(0, eq);
      } else if (i + 1 < extras.size()) {
        value = extras[++i];
      } else {
        throw ConfigError("missing value for --" + arg);
      }
      config::apply_override(cfg, arg, value);
    }
    if (opt.seed) {
      if (*opt.seed < 0) throw ConfigError("--seed must be non-negative");
      cfg["seed"] = static_cast<std::uint64_t>(*opt.seed);
    }
    if (opt.jobs) cfg["jobs"] = *opt.jobs;
    if (!opt.out.empty()) cfg["out"] = opt.out;
    if (const char* env = std::getenv("ACTIVITY_AIRL_OUT"); env && *env) cfg["out"] = env;
    config::jobs(cfg);
    const fs::path out_dir = cfg.at("out").get<std::string>();

    if (opt.command == "synth") return cmd_synth(cfg, out_dir);
    if (opt.command == "train") return cmd_train(cfg, out_dir, opt.baseline);
    if (opt.command == "evaluate") return cmd_evaluate(cfg, out_dir, opt.baseline);
    if (opt.command == "distill") return cmd_distill(cfg, out_dir);
    return cmd_interpret(cfg, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
