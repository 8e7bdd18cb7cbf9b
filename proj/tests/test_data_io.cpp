#include <doctest.h>

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "activity_airl/common.hpp"
#include "activity_airl/data_io.hpp"

using namespace activity_airl;
using namespace activity_airl::data;
using mdp::Activity;

namespace {

TripRecord trip(int idx, const std::string& purpose, int start, int end) { return {"p", idx, purpose, start, end}; }

// Minute-count labelling written independently of the library: per interval,
// count minutes of each activity and take the majority, preferring travel on ties
// and otherwise the earlier activity.
std::vector<Activity> majority_oracle(const std::vector<TripRecord>& trips) {
  std::vector<Activity> minute(1440, Activity::Home);
  Activity here = Activity::Home;
  int cursor = 0;
  for (const auto& t : trips) {
    for (int m = cursor; m < t.start_minute; ++m) minute[m] = here;
    for (int m = t.start_minute; m < t.end_minute; ++m) minute[m] = Activity::Travel;
    here = PurposeTaxonomy::standard().map(t.purpose);
    cursor = t.end_minute;
  }
  for (int m = cursor; m < 1440; ++m) minute[m] = here;
  std::vector<Activity> out;
  for (int i = 0; i < 96; ++i) {
    std::array<int, 5> c{};
    for (int m = 0; m < 15; ++m) ++c[mdp::index(minute[i * 15 + m])];
    int best = 4;
    for (int a = 0; a < 4; ++a)
      if (c[a] > c[best]) best = a;
    if (c[best] == c[4]) best = 4;
    if (best != 4) {
      // earliest among tied non-travel activities
      for (int m = 0; m < 15; ++m) {
        const int a = mdp::index(minute[i * 15 + m]);
        if (c[a] == c[best]) {
          best = a;
          break;
        }
      }
    }
    out.push_back(mdp::activity_from_index(best));
  }
  return out;
}

}  // namespace

TEST_CASE("discretize examples") {
  const auto tax = PurposeTaxonomy::standard();
  SUBCASE("travel 08:00-08:30 covers intervals 33 and 34") {
    const std::vector<TripRecord> trips = {trip(1, "work", 480, 510)};
    const auto labels = discretize(trips, tax);
    CHECK(labels[31] == Activity::Home);
    CHECK(labels[32] == Activity::Travel);
    CHECK(labels[33] == Activity::Travel);
    CHECK(labels[34] == Activity::Work);
  }
  SUBCASE("no trips is a home day") {
    const auto labels = discretize({}, tax);
    CHECK(labels == std::vector<Activity>(96, Activity::Home));
  }
  SUBCASE("split interval goes to the majority activity") {
    // 08:15-08:30 holds 5 travel minutes and 10 work minutes.
    const std::vector<TripRecord> short_trip = {trip(1, "work", 480, 500)};
    const auto a = discretize(short_trip, tax);
    CHECK(a[32] == Activity::Travel);
    CHECK(a[33] == Activity::Work);
    // 10 travel minutes and 5 work minutes.
    const std::vector<TripRecord> long_trip = {trip(1, "work", 480, 505)};
    const auto b = discretize(long_trip, tax);
    CHECK(b[33] == Activity::Travel);
    CHECK(b[34] == Activity::Work);
  }
  SUBCASE("tie goes to travel") {
    const std::vector<TripRecord> trips = {trip(1, "work", 487, 510)};
    CHECK(discretize(trips, tax)[32] == Activity::Travel);
  }
  SUBCASE("short trip still leaves a feasible sequence") {
    const std::vector<TripRecord> trips = {trip(1, "shopping", 603, 608), trip(2, "home", 700, 703)};
    CHECK(mdp::validate_trajectory(discretize(trips, tax)).valid);
  }
}

TEST_CASE("discretize errors") {
  const auto tax = PurposeTaxonomy::standard();
  const std::vector<TripRecord> overlap = {trip(1, "work", 480, 520), trip(2, "home", 510, 530)};
  CHECK_THROWS_AS(discretize(overlap, tax), DataError);
  PurposeTaxonomy strict = PurposeTaxonomy::from_json_text(R"({"map": {"work": "work"}, "fallback": null})");
  const std::vector<TripRecord> odd = {trip(1, "gym", 480, 500)};
  CHECK_THROWS_AS(discretize(odd, strict), TaxonomyError);
}

TEST_CASE("discretize matches the minute-count oracle and validates") {
  Rng rng(derive_seed(99, 1));
  const char* purposes[] = {"work", "school", "shopping", "home", "eat out"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TripRecord> trips;
    int t = static_cast<int>(uniform_index(rng, 600));
    int idx = 0;
    while (t < 1400) {
      const int len = 15 + static_cast<int>(uniform_index(rng, 60));
      if (t + len > 1440) break;
      trips.push_back(trip(++idx, purposes[uniform_index(rng, 5)], t, t + len));
      t += len + 15 + static_cast<int>(uniform_index(rng, 240));
    }
    const auto labels = discretize(trips, PurposeTaxonomy::standard());
    REQUIRE(labels.size() == 96u);
    CHECK(mdp::validate_trajectory(labels).valid);
    CHECK(labels == majority_oracle(trips));
  }
  // Arbitrary short trips: only validity can be guaranteed.
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TripRecord> trips;
    int t = static_cast<int>(uniform_index(rng, 120));
    int idx = 0;
    while (true) {
      const int len = 1 + static_cast<int>(uniform_index(rng, 30));
      if (t + len > 1440) break;
      trips.push_back(trip(++idx, purposes[uniform_index(rng, 5)], t, t + len));
      t += len + static_cast<int>(uniform_index(rng, 90));
    }
    const auto labels = discretize(trips, PurposeTaxonomy::standard());
    CHECK(mdp::validate_trajectory(labels).valid);
  }
}

TEST_CASE("taxonomy") {
  const auto tax = PurposeTaxonomy::standard();
  CHECK(tax.map("Work") == Activity::Work);
  CHECK(tax.map(" school ") == Activity::School);
  CHECK(tax.map("home") == Activity::Home);
  CHECK(tax.map("dentist") == Activity::Others);
  CHECK_THROWS_AS(PurposeTaxonomy::from_json_text(R"({"map": {"x": "travel"}})"), ConfigError);
}

TEST_CASE("split sizes and determinism") {
  Dataset ten;
  for (int i = 0; i < 10; ++i) ten.persons.push_back({"u" + std::to_string(i), {}, std::vector<Activity>(96), ""});
  const Split s = split(ten, 0.8, 3);
  CHECK(s.train.persons.size() == 8);
  CHECK(s.test.persons.size() == 2);

  Dataset big;
  for (int i = 0; i < 21936; ++i) big.persons.push_back({std::to_string(i), {}, {}, ""});
  const Split b = split(big, 0.8, 1);
  CHECK(b.train.persons.size() == 17549);
  CHECK(b.test.persons.size() == 4387);

  const Split again = split(ten, 0.8, 3);
  for (std::size_t i = 0; i < s.train.persons.size(); ++i)
    CHECK(s.train.persons[i].person_id == again.train.persons[i].person_id);

  std::set<std::string> seen;
  for (const auto& p : s.train.persons) seen.insert(p.person_id);
  for (const auto& p : s.test.persons) CHECK(seen.insert(p.person_id).second);
  CHECK(seen.size() == 10);

  CHECK_THROWS_AS(split(Dataset{}, 0.8, 1), DataError);
  CHECK_THROWS_AS(split(ten, 1.0, 1), ConfigError);
}

TEST_CASE("synthetic population") {
  SUBCASE("degenerate worker mix reproduces the template") {
    SynthConfig c;
    c.population = 50;
    c.mix = {1.0, 0.0, 0.0, 0.0};
    c.jitter_minutes = 0.0;
    c.others_rate = 0.0;
    const Dataset ds = synthesize_population(c, 5);
    const auto tmpl = archetype_template(Archetype::Worker);
    for (const auto& p : ds.persons) CHECK(p.labels == tmpl);
  }
  SUBCASE("deterministic and valid") {
    SynthConfig c;
    c.population = 400;
    const Dataset a = synthesize_population(c, 7), b = synthesize_population(c, 7);
    std::ostringstream sa, sb;
    write_trajectories(sa, a);
    write_trajectories(sb, b);
    CHECK(sa.str() == sb.str());
    for (const auto& p : a.persons) CHECK(mdp::validate_trajectory(p.labels).valid);
  }
  SUBCASE("workers travel at least twice") {
    SynthConfig c;
    c.population = 300;
    c.mix = {1.0, 0.0, 0.0, 0.0};
    for (const auto& p : synthesize_population(c, 11).persons) {
      int segments = 0;
      for (std::size_t i = 0; i < p.labels.size(); ++i)
        if (p.labels[i] == Activity::Travel && (i == 0 || p.labels[i - 1] != Activity::Travel)) ++segments;
      CHECK(segments >= 2);
    }
  }
  SUBCASE("profiles follow the archetype") {
    SynthConfig c;
    c.population = 200;
    c.mix = {0.0, 1.0, 0.0, 0.0};
    for (const auto& p : synthesize_population(c, 2).persons) {
      CHECK(p.archetype == "student");
      CHECK(p.demographics.employment == mdp::Employment::FullTimeStudent);
    }
  }
  SUBCASE("bad weights") {
    SynthConfig c;
    c.mix = {0.5, 0.5, 0.5, 0.0};
    CHECK_THROWS_AS(synthesize_population(c, 1), ConfigError);
  }
}

TEST_CASE("profile scaling uses the fitted range") {
  std::vector<Person> persons(2);
  persons[0].demographics.age_years = 20;
  persons[0].demographics.income = 1000;
  persons[1].demographics.age_years = 60;
  persons[1].demographics.income = 5000;
  const ProfileScaler s = ProfileScaler::fit(persons);
  Demographics d;
  d.age_years = 40;
  d.income = 9000;
  const auto p = s.apply(d);
  CHECK(p.age == doctest::Approx(0.5));
  CHECK(p.income == 1.0);
}

TEST_CASE("survey loading") {
  const std::string header = "person_id,age,gender,income,car_ownership,employment_type,trip_index,purpose,start_time,end_time\n";
  SUBCASE("three users") {
    std::istringstream in(header +
                          "a,35,1,3000,1,employed full-time,1,work,08:00,08:30\n"
                          "a,35,1,3000,1,employed full-time,2,home,17:00,17:45\n"
                          "b,20,0,500,0,full-time student,1,school,07:00,07:20\n"
                          "b,20,0,500,0,full-time student,2,home,15:00,15:30\n"
                          "c,70,0,200,0,retired,,,,\n");
    LoadReport rep;
    const Dataset ds = parse_survey(in, PurposeTaxonomy::standard(), &rep);
    REQUIRE(ds.persons.size() == 3);
    CHECK(rep.rows_dropped == 0);
    for (const auto& p : ds.persons) CHECK(p.labels.size() == 96u);
    // Manual discretization of user a.
    std::vector<Activity> a(96, Activity::Home);
    for (int i = 32; i < 34; ++i) a[i] = Activity::Travel;
    for (int i = 34; i < 68; ++i) a[i] = Activity::Work;
    for (int i = 68; i < 71; ++i) a[i] = Activity::Travel;
    CHECK(ds.persons[0].labels == a);
    // User b: 07:00-07:20 fills interval 29 and a third of interval 30.
    CHECK(ds.persons[1].labels[27] == Activity::Home);
    CHECK(ds.persons[1].labels[28] == Activity::Travel);
    CHECK(ds.persons[1].labels[29] == Activity::School);
    CHECK(ds.persons[2].labels == std::vector<Activity>(96, Activity::Home));
  }
  SUBCASE("reversed times are dropped and counted") {
    std::istringstream in(header + "a,35,1,3000,1,retired,1,work,09:00,08:00\n"
                                   "b,35,1,3000,1,retired,1,work,08:00,09:00\n");
    LoadReport rep;
    const Dataset ds = parse_survey(in, PurposeTaxonomy::standard(), &rep);
    CHECK(rep.rows_dropped == 1);
    CHECK(rep.users_dropped == 1);
    CHECK(ds.persons.size() == 1);
  }
  SUBCASE("empty input") {
    std::istringstream in("");
    LoadReport rep;
    CHECK(parse_survey(in, PurposeTaxonomy::standard(), &rep).persons.empty());
    CHECK_FALSE(rep.warnings.empty());
  }
  SUBCASE("malformed rows report the line") {
    std::istringstream in(header + "a,35,1,3000,1,retired,1,work,08:00,09:00\nb,1,2\n");
    try {
      parse_survey(in, PurposeTaxonomy::standard());
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
}

TEST_CASE("clock parsing") {
  CHECK(parse_clock("08:15") == 495);
  CHECK(parse_clock("24:00") == 1440);
  CHECK_FALSE(parse_clock("24:01"));
  CHECK_FALSE(parse_clock("8:5"));
  CHECK_FALSE(parse_clock("ab:cd"));
}

TEST_CASE("trajectory files round trip") {
  SynthConfig c;
  c.population = 30;
  const Dataset ds = synthesize_population(c, 3);
  std::stringstream io;
  write_trajectories(io, ds);
  const Dataset back = read_trajectories(io);
  REQUIRE(back.persons.size() == ds.persons.size());
  for (std::size_t i = 0; i < ds.persons.size(); ++i) {
    CHECK(back.persons[i].person_id == ds.persons[i].person_id);
    CHECK(back.persons[i].labels == ds.persons[i].labels);
    CHECK(back.persons[i].archetype == ds.persons[i].archetype);
    CHECK(back.persons[i].demographics.employment == ds.persons[i].demographics.employment);
  }
  std::istringstream bad("{\"person_id\": \"x\"}\n");
  CHECK_THROWS_AS(read_trajectories(bad), ParseError);
}
