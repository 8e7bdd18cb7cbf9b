#include "activity_airl/data_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "activity_airl/common.hpp"

namespace activity_airl::data {

namespace {

using ojson = nlohmann::ordered_json;

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<double> parse_number(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<bool> parse_flag(std::string_view text) {
  auto v = parse_number(text);
  if (!v) return std::nullopt;
  if (*v == 0.0) return false;
  if (*v == 1.0) return true;
  return std::nullopt;
}

// Splits one delimited line; double quotes protect delimiters and "" escapes a quote.
std::vector<std::string> split_fields(const std::string& line, char delim, long line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  fields.push_back(std::move(cur));
  return fields;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double gaussian(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

// ---------------------------------------------------------------------------
// Taxonomy

PurposeTaxonomy PurposeTaxonomy::standard() {
  PurposeTaxonomy t;
  t.set("home", Activity::Home);
  t.set("work", Activity::Work);
  t.set("school", Activity::School);
  t.set("others", Activity::Others);
  t.set_fallback(Activity::Others);
  return t;
}

PurposeTaxonomy PurposeTaxonomy::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("purpose taxonomy: ") + e.what());
  }
  PurposeTaxonomy t;
  if (!j.is_object() || !j.contains("map") || !j["map"].is_object())
    throw ConfigError("purpose taxonomy must be an object with a \"map\" object");
  for (const auto& [purpose, act] : j["map"].items()) {
    if (!act.is_string()) throw ConfigError("purpose taxonomy: activity for '" + purpose + "' must be a string");
    const Activity a = mdp::parse_activity(act.get<std::string>());
    if (a == Activity::Travel) throw ConfigError("purpose taxonomy cannot map a purpose to travel");
    t.set(purpose, a);
  }
  for (const auto& [key, _] : j.items())
    if (key != "map" && key != "fallback") throw ConfigError("purpose taxonomy: unknown key '" + key + "'");
  if (j.contains("fallback") && !j["fallback"].is_null()) {
    const Activity a = mdp::parse_activity(j["fallback"].get<std::string>());
    if (a == Activity::Travel) throw ConfigError("purpose taxonomy fallback cannot be travel");
    t.set_fallback(a);
  }
  return t;
}

PurposeTaxonomy PurposeTaxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open purpose taxonomy " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

void PurposeTaxonomy::set(const std::string& purpose, Activity activity) { table_[lower(trim(purpose))] = activity; }

Activity PurposeTaxonomy::map(std::string_view purpose) const {
  const auto it = table_.find(lower(trim(purpose)));
  if (it != table_.end()) return it->second;
  if (fallback_) return *fallback_;
  throw TaxonomyError("unmapped trip purpose '" + std::string(purpose) + "'");
}

// ---------------------------------------------------------------------------
// Discretization

std::vector<Activity> discretize(std::span<const TripRecord> trips, const PurposeTaxonomy& taxonomy) {
  std::array<Activity, kMinutesPerDay> minute{};
  minute.fill(Activity::Home);
  Activity current = Activity::Home;
  int cursor = 0;
  for (const TripRecord& trip : trips) {
    if (trip.start_minute < 0 || trip.end_minute > kMinutesPerDay || trip.start_minute >= trip.end_minute)
      throw DataError("trip " + std::to_string(trip.trip_index) + " of " + trip.person_id +
                      " has invalid times");
    if (trip.start_minute < cursor)
      throw DataError("trip " + std::to_string(trip.trip_index) + " of " + trip.person_id +
                      " overlaps the previous trip");
    const Activity destination = taxonomy.map(trip.purpose);
    std::fill(minute.begin() + cursor, minute.begin() + trip.start_minute, current);
    std::fill(minute.begin() + trip.start_minute, minute.begin() + trip.end_minute, Activity::Travel);
    current = destination;
    cursor = trip.end_minute;
  }
  std::fill(minute.begin() + cursor, minute.end(), current);

  std::vector<Activity> labels(mdp::kNumSteps);
  std::vector<int> travel_minutes(mdp::kNumSteps, 0);
  for (int i = 0; i < mdp::kNumSteps; ++i) {
    std::array<int, mdp::kNumActivities> count{};
    std::array<int, mdp::kNumActivities> first_seen;
    first_seen.fill(kMinutesPerStep);
    for (int m = 0; m < kMinutesPerStep; ++m) {
      const int a = mdp::index(minute[i * kMinutesPerStep + m]);
      ++count[a];
      first_seen[a] = std::min(first_seen[a], m);
    }
    travel_minutes[i] = count[mdp::index(Activity::Travel)];
    const int best = *std::max_element(count.begin(), count.end());
    int chosen = -1;
    if (count[mdp::index(Activity::Travel)] == best) {
      chosen = mdp::index(Activity::Travel);
    } else {
      // Tie between non-travel activities: the one occupying the interval first.
      for (int a = 0; a < mdp::kNumActivities; ++a)
        if (count[a] == best && (chosen < 0 || first_seen[a] < first_seen[chosen])) chosen = a;
    }
    labels[i] = mdp::activity_from_index(chosen);
  }

  // A trip shorter than half an interval can vanish under the majority rule,
  // leaving two different activities adjacent. Relabel the interval that held
  // more of the trip as travel.
  for (int i = 1; i < mdp::kNumSteps; ++i) {
    const Activity a = labels[i - 1], b = labels[i];
    if (a != b && a != Activity::Travel && b != Activity::Travel) {
      if (travel_minutes[i - 1] > travel_minutes[i])
        labels[i - 1] = Activity::Travel;
      else
        labels[i] = Activity::Travel;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Archetypes

namespace {

constexpr std::array<std::string_view, kNumArchetypes> kArchetypeNames = {"worker", "student", "homemaker",
                                                                          "retiree"};

}  // namespace

std::string_view to_string(Archetype a) { return kArchetypeNames[static_cast<int>(a)]; }

Archetype parse_archetype(std::string_view name) {
  for (int i = 0; i < kNumArchetypes; ++i)
    if (kArchetypeNames[i] == name) return static_cast<Archetype>(i);
  throw ValidationError("unknown archetype '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Scaling and splitting

ProfileScaler::ProfileScaler(double age_min, double age_max, double income_min, double income_max)
    : age_min_(age_min), age_max_(age_max), income_min_(income_min), income_max_(income_max) {}

ProfileScaler ProfileScaler::fit(std::span<const Person> persons) {
  if (persons.empty()) return ProfileScaler();
  double amin = persons.front().demographics.age_years, amax = amin;
  double imin = persons.front().demographics.income, imax = imin;
  for (const Person& p : persons) {
    amin = std::min(amin, p.demographics.age_years);
    amax = std::max(amax, p.demographics.age_years);
    imin = std::min(imin, p.demographics.income);
    imax = std::max(imax, p.demographics.income);
  }
  return ProfileScaler(amin, amax, imin, imax);
}

mdp::AgentProfile ProfileScaler::apply(const Demographics& d) const {
  auto scale = [](double v, double lo, double hi) {
    if (hi <= lo) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  };
  mdp::AgentProfile p;
  p.age = scale(d.age_years, age_min_, age_max_);
  p.income = scale(d.income, income_min_, income_max_);
  p.female = d.female;
  p.car_owner = d.car_owner;
  p.employment = d.employment;
  return p;
}

std::vector<mdp::Trajectory> to_trajectories(std::span<const Person> persons, const ProfileScaler& scaler) {
  std::vector<mdp::Trajectory> out;
  out.reserve(persons.size());
  for (const Person& p : persons) out.push_back({p.person_id, scaler.apply(p.demographics), p.labels});
  return out;
}

Split split(const Dataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  const std::size_t m = dataset.persons.size();
  if (m == 0) throw DataError("cannot split an empty dataset");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = m - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);

  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(m)));
  Split s;
  s.train.split_seed = s.test.split_seed = seed;
  for (std::size_t k = 0; k < m; ++k) {
    const Person& p = dataset.persons[order[k]];
    (k < n_train ? s.train : s.test).persons.push_back(p);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic population

namespace {

// Builds a chain of trips from a start minute. Each stop is (purpose, planned
// duration); the final destination is always home.
class DayBuilder {
 public:
  explicit DayBuilder(std::string person_id) : person_id_(std::move(person_id)) {}

  // Returns false once the day is full; later trips are then skipped.
  bool trip(int depart, int travel_minutes, const std::string& purpose) {
    depart = std::max(depart, cursor_);
    travel_minutes = std::max(travel_minutes, 5);
    if (depart + travel_minutes > kMinutesPerDay - 1) return false;
    trips_.push_back({person_id_, static_cast<int>(trips_.size()) + 1, purpose, depart, depart + travel_minutes});
    cursor_ = depart + travel_minutes;
    return true;
  }

  int cursor() const { return cursor_; }
  std::vector<TripRecord> take() { return std::move(trips_); }

 private:
  std::string person_id_;
  std::vector<TripRecord> trips_;
  int cursor_ = 0;
};

struct Noise {
  Rng* rng = nullptr;
  double sigma = 0.0;

  int jitter(double base, double scale = 1.0) const {
    if (sigma <= 0.0 || rng == nullptr) return static_cast<int>(std::lround(base));
    return static_cast<int>(std::lround(base + sigma * scale * gaussian(*rng)));
  }
};

int clamp_duration(int minutes, int lo, int hi) { return std::clamp(minutes, lo, hi); }

std::vector<TripRecord> build_day(Archetype archetype, bool extra_stop, const Noise& noise,
                                  const std::string& id) {
  DayBuilder day(id);
  switch (archetype) {
    case Archetype::Worker: {
      const int depart = noise.jitter(480);
      const int work_end = noise.jitter(1050);
      if (!day.trip(depart, clamp_duration(noise.jitter(30, 0.3), 10, 60), "work")) break;
      if (extra_stop) {
        if (!day.trip(work_end, clamp_duration(noise.jitter(20, 0.3), 5, 45), "others")) break;
        const int stay = clamp_duration(noise.jitter(75), 20, 150);
        day.trip(day.cursor() + stay, clamp_duration(noise.jitter(30, 0.3), 10, 60), "home");
      } else {
        day.trip(work_end, clamp_duration(noise.jitter(30, 0.3), 10, 60), "home");
      }
      break;
    }
    case Archetype::Student: {
      const int depart = noise.jitter(420);
      const int school_end = noise.jitter(900);
      if (!day.trip(depart, clamp_duration(noise.jitter(30, 0.3), 10, 60), "school")) break;
      if (extra_stop) {
        if (!day.trip(school_end, clamp_duration(noise.jitter(20, 0.3), 5, 45), "others")) break;
        const int stay = clamp_duration(noise.jitter(90), 20, 180);
        day.trip(day.cursor() + stay, clamp_duration(noise.jitter(30, 0.3), 10, 60), "home");
      } else {
        day.trip(school_end, clamp_duration(noise.jitter(30, 0.3), 10, 60), "home");
      }
      break;
    }
    case Archetype::Homemaker: {
      const int depart = noise.jitter(540);
      if (!day.trip(depart, clamp_duration(noise.jitter(20, 0.3), 5, 45), "others")) break;
      const int stay = clamp_duration(noise.jitter(120), 30, 240);
      if (!day.trip(day.cursor() + stay, clamp_duration(noise.jitter(20, 0.3), 5, 45), "home")) break;
      if (extra_stop) {
        if (!day.trip(noise.jitter(960), clamp_duration(noise.jitter(20, 0.3), 5, 45), "others")) break;
        const int stay2 = clamp_duration(noise.jitter(60), 20, 120);
        day.trip(day.cursor() + stay2, clamp_duration(noise.jitter(20, 0.3), 5, 45), "home");
      }
      break;
    }
    case Archetype::Retiree: {
      const int depart = noise.jitter(840);
      if (!day.trip(depart, clamp_duration(noise.jitter(20, 0.3), 5, 45), "others")) break;
      const int stay = clamp_duration(noise.jitter(90), 30, 180);
      if (!day.trip(day.cursor() + stay, clamp_duration(noise.jitter(20, 0.3), 5, 45), "home")) break;
      if (extra_stop) {
        if (!day.trip(noise.jitter(1140), clamp_duration(noise.jitter(15, 0.3), 5, 45), "others")) break;
        const int stay2 = clamp_duration(noise.jitter(60), 20, 120);
        day.trip(day.cursor() + stay2, clamp_duration(noise.jitter(15, 0.3), 5, 45), "home");
      }
      break;
    }
  }
  return day.take();
}

Demographics sample_demographics(Archetype archetype, Rng& rng) {
  Demographics d;
  const double u = uniform01(rng);
  switch (archetype) {
    case Archetype::Worker:
      d.employment = u < 0.7 ? Employment::EmployedFullTime
                             : (u < 0.85 ? Employment::EmployedPartTime : Employment::SelfEmployed);
      d.age_years = std::floor(uniform(rng, 25, 61));
      d.income = 10.0 * std::round(uniform(rng, 300, 1000));
      d.female = bernoulli(rng, 0.4);
      d.car_owner = bernoulli(rng, 0.5);
      break;
    case Archetype::Student:
      d.employment = Employment::FullTimeStudent;
      d.age_years = std::floor(uniform(rng, 7, 25));
      d.income = 10.0 * std::round(uniform(rng, 0, 50));
      d.female = bernoulli(rng, 0.5);
      d.car_owner = bernoulli(rng, 0.05);
      break;
    case Archetype::Homemaker:
      d.employment = u < 0.7 ? Employment::Homemaker
                             : (u < 0.85 ? Employment::DomesticWorker : Employment::Unemployed);
      d.age_years = std::floor(uniform(rng, 30, 61));
      d.income = 10.0 * std::round(uniform(rng, 0, 150));
      d.female = bernoulli(rng, 0.85);
      d.car_owner = bernoulli(rng, 0.4);
      break;
    case Archetype::Retiree:
      d.employment = u < 0.85 ? Employment::Retired : Employment::Unemployed;
      d.age_years = std::floor(uniform(rng, 60, 86));
      d.income = 10.0 * std::round(uniform(rng, 0, 200));
      d.female = bernoulli(rng, 0.55);
      d.car_owner = bernoulli(rng, 0.3);
      break;
  }
  return d;
}

std::string synthetic_id(int i) {
  std::ostringstream os;
  os << "S" << std::setw(6) << std::setfill('0') << i + 1;
  return os.str();
}

}  // namespace

std::vector<Activity> archetype_template(Archetype archetype) {
  const auto trips = build_day(archetype, false, Noise{}, "template");
  return discretize(trips, PurposeTaxonomy::standard());
}

Dataset synthesize_population(const SynthConfig& config, std::uint64_t seed) {
  const auto& m = config.mix;
  const std::array<double, kNumArchetypes> weights = {m.worker, m.student, m.homemaker, m.retiree};
  for (double w : weights)
    if (!(w >= 0.0)) throw ConfigError("archetype weights must be non-negative");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("archetype weights must sum to 1 (got " + format_number(total) + ")");
  if (config.population < 1) throw ConfigError("population must be positive");
  if (config.jitter_minutes < 0.0) throw ConfigError("jitter_minutes must be non-negative");
  if (!(config.others_rate >= 0.0 && config.others_rate <= 1.0)) throw ConfigError("others_rate must lie in [0, 1]");

  const PurposeTaxonomy taxonomy = PurposeTaxonomy::standard();
  Dataset ds;
  ds.persons.reserve(config.population);
  for (int i = 0; i < config.population; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double u = uniform01(rng);
    int a = 0;
    double cum = weights[0];
    while (a + 1 < kNumArchetypes && (u >= cum || weights[a] == 0.0)) cum += weights[++a];
    while (weights[a] == 0.0 && a > 0) --a;
    const auto archetype = static_cast<Archetype>(a);

    Person p;
    p.person_id = synthetic_id(i);
    p.demographics = sample_demographics(archetype, rng);
    p.archetype = std::string(to_string(archetype));
    const bool extra = config.others_rate > 0.0 && bernoulli(rng, config.others_rate);
    const auto trips = build_day(archetype, extra, Noise{&rng, config.jitter_minutes},
                                 p.person_id);
    p.labels = discretize(trips, taxonomy);
    ds.persons.push_back(std::move(p));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Survey ingestion

std::optional<int> parse_clock(std::string_view text) {
  const std::string t = trim(text);
  const auto colon = t.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 3 != t.size()) return std::nullopt;
  int h = 0, m = 0;
  auto r1 = std::from_chars(t.data(), t.data() + colon, h);
  auto r2 = std::from_chars(t.data() + colon + 1, t.data() + t.size(), m);
  if (r1.ec != std::errc() || r1.ptr != t.data() + colon) return std::nullopt;
  if (r2.ec != std::errc() || r2.ptr != t.data() + t.size()) return std::nullopt;
  if (h < 0 || m < 0 || m > 59 || h > 24 || (h == 24 && m != 0)) return std::nullopt;
  return h * 60 + m;
}

Dataset parse_survey(std::istream& in, const PurposeTaxonomy& taxonomy, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = LoadReport{};
  Dataset ds;

  std::string header_line;
  if (!std::getline(in, header_line)) {
    rep.warnings.push_back("survey file is empty");
    return ds;
  }
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  const char delim = header_line.find('\t') != std::string::npos ? '\t' : ',';
  const auto header = split_fields(header_line, delim, 1);

  static const std::array<std::string, 10> kColumns = {"person_id",       "age",        "gender",  "income",
                                                       "car_ownership",   "employment_type", "trip_index",
                                                       "purpose",         "start_time", "end_time"};
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[lower(trim(header[i]))] = i;
  for (const auto& c : kColumns)
    if (!col.count(c)) throw ParseError("missing column '" + c + "' in header", 1);

  struct Pending {
    Demographics demographics;
    std::vector<TripRecord> trips;
    bool valid = true;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> people;

  std::string line;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split_fields(line, delim, line_no);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()),
                       line_no);
    ++rep.rows_read;
    auto field = [&](const char* name) { return trim(f[col.at(name)]); };

    const std::string id = field("person_id");
    if (id.empty()) {
      ++rep.rows_dropped;
      continue;
    }
    auto [it, inserted] = people.try_emplace(id);
    if (inserted) order.push_back(id);
    Pending& person = it->second;

    bool ok = true;
    Demographics d;
    const auto age = parse_number(field("age"));
    const auto gender = parse_flag(field("gender"));
    const auto income = parse_number(field("income"));
    const auto car = parse_flag(field("car_ownership"));
    ok = age && *age >= 0 && gender && income && *income >= 0 && car;
    if (ok) {
      try {
        d.employment = mdp::parse_employment(field("employment_type"));
      } catch (const ValidationError&) {
        ok = false;
      }
    }
    if (ok) {
      d.age_years = *age;
      d.female = *gender;
      d.income = *income;
      d.car_owner = *car;
      if (inserted)
        person.demographics = d;
      else if (!(person.demographics == d))
        ok = false;  // inconsistent profile across rows
    }

    const std::string purpose = field("purpose"), start = field("start_time"), end = field("end_time"),
                      trip_index = field("trip_index");
    const bool no_trip = purpose.empty() && start.empty() && end.empty() && trip_index.empty();
    if (ok && !no_trip) {
      const auto s = parse_clock(start);
      const auto e = parse_clock(end);
      const auto ti = parse_number(trip_index);
      ok = s && e && ti && !purpose.empty() && *s < *e && *s >= 0 && *e <= kMinutesPerDay;
      if (ok) person.trips.push_back({id, static_cast<int>(*ti), purpose, *s, *e});
    }
    if (!ok) {
      ++rep.rows_dropped;
      person.valid = false;
    }
  }

  for (const std::string& id : order) {
    Pending& p = people.at(id);
    if (!p.valid) {
      ++rep.users_dropped;
      continue;
    }
    std::stable_sort(p.trips.begin(), p.trips.end(), [](const TripRecord& a, const TripRecord& b) {
      return a.start_minute != b.start_minute ? a.start_minute < b.start_minute : a.trip_index < b.trip_index;
    });
    try {
      Person person;
      person.person_id = id;
      person.demographics = p.demographics;
      person.labels = discretize(p.trips, taxonomy);
      ds.persons.push_back(std::move(person));
    } catch (const DataError& e) {
      ++rep.users_dropped;
      rep.warnings.push_back("dropped user " + id + ": " + e.what());
    }
  }
  rep.users_loaded = static_cast<long>(ds.persons.size());
  if (rep.rows_read == 0) rep.warnings.push_back("survey file has no data rows");
  return ds;
}

Dataset load_survey(const std::filesystem::path& path, const PurposeTaxonomy& taxonomy, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open survey file " + path.string());
  return parse_survey(in, taxonomy, report);
}

// ---------------------------------------------------------------------------
// Trajectory files

void write_trajectories(std::ostream& out, const Dataset& dataset) {
  for (const Person& p : dataset.persons) {
    ojson j;
    j["person_id"] = p.person_id;
    j["age"] = p.demographics.age_years;
    j["gender"] = p.demographics.female ? 1 : 0;
    j["income"] = p.demographics.income;
    j["car_ownership"] = p.demographics.car_owner ? 1 : 0;
    j["employment_type"] = std::string(mdp::to_string(p.demographics.employment));
    if (!p.archetype.empty()) j["archetype"] = p.archetype;
    ojson labels = ojson::array();
    for (Activity a : p.labels) labels.push_back(std::string(mdp::to_string(a)));
    j["labels"] = std::move(labels);
    out << j.dump() << '\n';
  }
}

Dataset read_trajectories(std::istream& in) {
  Dataset ds;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Person p;
      p.person_id = j.at("person_id").get<std::string>();
      p.demographics.age_years = j.at("age").get<double>();
      p.demographics.female = j.at("gender").get<int>() != 0;
      p.demographics.income = j.at("income").get<double>();
      p.demographics.car_owner = j.at("car_ownership").get<int>() != 0;
      p.demographics.employment = mdp::parse_employment(j.at("employment_type").get<std::string>());
      if (j.contains("archetype")) p.archetype = j["archetype"].get<std::string>();
      for (const auto& l : j.at("labels")) p.labels.push_back(mdp::parse_activity(l.get<std::string>()));
      const auto check = mdp::validate_trajectory(p.labels);
      if (!check) throw DataError("person " + p.person_id + ": " + check.reason);
      ds.persons.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    } catch (const DataError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return ds;
}

void save_trajectories(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_trajectories(out, dataset);
}

Dataset load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file " + path.string());
  return read_trajectories(in);
}

void write_profiles(std::ostream& out, const Dataset& dataset) {
  out << "person_id,age,gender,income,car_ownership,employment_type,archetype\n";
  for (const Person& p : dataset.persons) {
    out << p.person_id << ',' << format_number(p.demographics.age_years) << ',' << (p.demographics.female ? 1 : 0)
        << ',' << format_number(p.demographics.income) << ',' << (p.demographics.car_owner ? 1 : 0) << ','
        << mdp::to_string(p.demographics.employment) << ',' << p.archetype << '\n';
  }
}

}  // namespace activity_airl::data
