#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "maskprivacy/dataset.hpp"
#include "support.hpp"

using namespace maskprivacy;

TEST_CASE("parse_label reads UTK names") {
  auto l = parse_label("25_0_1_20170116174525125.jpg");
  CHECK(l.age_years == 25);
  CHECK(l.sex == Sex::male);
  CHECK(l.race == Race::black);

  l = parse_label("0_1_0_x.jpg");
  CHECK(l.age_years == 0);
  CHECK(l.sex == Sex::female);
  CHECK(l.race == Race::white);

  // trailing fields vary between releases
  CHECK(parse_label("61_1_4_2017_extra_bits.jpg.chip.jpg").race == Race::other);
}

TEST_CASE("parse_label rejects malformed names") {
  CHECK_THROWS_AS(parse_label("25_3_1_x.jpg"), MalformedFilename);
  CHECK_THROWS_AS(parse_label("25_0_5_x.jpg"), MalformedFilename);
  CHECK_THROWS_AS(parse_label("25_0.jpg"), MalformedFilename);
  CHECK_THROWS_AS(parse_label("a_0_1_x.jpg"), MalformedFilename);
  CHECK_THROWS_AS(parse_label("-3_0_1_x.jpg"), MalformedFilename);
  CHECK_THROWS_AS(parse_label("25__1_x.jpg"), MalformedFilename);
}

TEST_CASE("format and parse round-trip") {
  for (const auto& l : testing::synthetic_labels(500, 3)) {
    auto back = parse_label(l.image_id);
    CHECK(back.age_years == l.age_years);
    CHECK(back.sex == l.sex);
    CHECK(back.race == l.race);
    CHECK(format_label(back, l.image_id.substr(l.image_id.rfind('_') + 1)) == l.image_id);
  }
}

TEST_CASE("age bins") {
  CHECK(bin_age(0) == AgeBin::baby);
  CHECK(bin_age(3) == AgeBin::baby);
  CHECK(bin_age(4) == AgeBin::child);
  CHECK(bin_age(12) == AgeBin::child);
  CHECK(bin_age(13) == AgeBin::teenager);
  CHECK(bin_age(19) == AgeBin::teenager);
  CHECK(bin_age(20) == AgeBin::young);
  CHECK(bin_age(30) == AgeBin::young);
  CHECK(bin_age(31) == AgeBin::adult);
  CHECK(bin_age(45) == AgeBin::adult);
  CHECK(bin_age(46) == AgeBin::middle_aged);
  CHECK(bin_age(60) == AgeBin::middle_aged);
  CHECK(bin_age(61) == AgeBin::senior);
  CHECK(bin_age(1000) == AgeBin::senior);
  CHECK_THROWS_AS(bin_age(-1), DomainError);

  // every age falls in exactly one table row
  for (int a = 0; a <= 500; ++a) {
    int hits = 0;
    for (const auto& r : age_bin_table())
      if (a >= r.lower && (!r.upper || a <= *r.upper)) ++hits;
    CHECK(hits == 1);
  }
}

TEST_CASE("random split sizes") {
  auto ten = testing::synthetic_labels(10, 1);
  for (std::uint64_t seed : {0ull, 1ull, 77ull}) {
    auto m = make_random_split(ten, seed);
    CHECK(m.count(Partition::train) == 7);
    CHECK(m.count(Partition::val) == 2);
    CHECK(m.count(Partition::test) == 1);
  }
  auto big = testing::synthetic_labels(23002, 2);
  auto m = make_random_split(big, 5);
  CHECK(m.count(Partition::train) >= 16101);
  CHECK(m.count(Partition::train) <= 16102);
  CHECK(m.count(Partition::val) >= 4600);
  CHECK(m.count(Partition::val) <= 4601);
  CHECK(m.count(Partition::test) >= 2300);
  CHECK(m.count(Partition::test) <= 2301);
  CHECK(m.entries.size() == 23002);
  CHECK_THROWS_AS(make_random_split(testing::synthetic_labels(2, 1), 0), TooFewItems);
}

TEST_CASE("random split is deterministic and order independent") {
  auto labels = testing::synthetic_labels(300, 9);
  auto a = make_random_split(labels, 42);
  std::mt19937_64 rng(1);
  std::shuffle(labels.begin(), labels.end(), rng);
  auto b = make_random_split(labels, 42);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].label.image_id == b.entries[i].label.image_id);
    CHECK(a.entries[i].partition == b.entries[i].partition);
  }
  auto c = make_random_split(labels, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) differs |= a.entries[i].partition != c.entries[i].partition;
  CHECK(differs);

  // disjoint and complete
  std::set<std::string> ids;
  for (const auto& e : a.entries) ids.insert(e.label.image_id);
  CHECK(ids.size() == 300);
}

TEST_CASE("uniform split quotas and shortfalls") {
  std::vector<AttributeLabel> labels;
  auto all = testing::synthetic_labels(2000, 4);
  int male = 0, female = 0;
  for (auto& l : all) {
    if (l.sex == Sex::male && male < 100) {
      labels.push_back(l);
      ++male;
    } else if (l.sex == Sex::female && female < 100) {
      labels.push_back(l);
      ++female;
    }
  }
  auto m = make_uniform_split(labels, 1, {Attribute::sex}, 10);
  std::map<Sex, int> test;
  for (const auto& e : m.entries)
    if (e.partition == Partition::test) ++test[e.label.sex];
  CHECK(test[Sex::male] == 10);
  CHECK(test[Sex::female] == 10);
  CHECK(m.shortfalls.empty());
  CHECK(m.entries.size() == labels.size());

  // shrink one stratum to 5
  std::vector<AttributeLabel> skewed;
  int f = 0;
  for (auto& l : labels)
    if (l.sex == Sex::male || f++ < 5) skewed.push_back(l);
  m = make_uniform_split(skewed, 1, {Attribute::sex}, 10);
  test.clear();
  for (const auto& e : m.entries)
    if (e.partition == Partition::test) ++test[e.label.sex];
  CHECK(test[Sex::male] == 10);
  CHECK(test[Sex::female] == 5);
  REQUIRE(m.shortfalls.size() == 1);
  CHECK(m.shortfalls[0].available == 5);
  CHECK(m.shortfalls[0].quota == 10);
}

TEST_CASE("manifest file round-trip") {
  testing::TempDir dir("split");
  auto m = make_uniform_split(testing::synthetic_labels(400, 8), 11, {Attribute::sex, Attribute::race}, 5);
  write_manifest(m, dir.path / "split.tsv");
  auto r = read_manifest(dir.path / "split.tsv");
  CHECK(r.kind == SplitKind::uniform);
  CHECK(r.seed == 11);
  CHECK(r.balance_on == m.balance_on);
  REQUIRE(r.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    CHECK(r.entries[i].label == m.entries[i].label);
    CHECK(r.entries[i].partition == m.entries[i].partition);
  }
  CHECK(r.shortfalls.size() == m.shortfalls.size());

  std::ifstream in(dir.path / "split.tsv");
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("#", 0) == 0);
}

TEST_CASE("scan_labels records skipped files") {
  testing::TempDir dir("scan");
  for (const auto* name : {"20_0_1_a.jpg", "30_1_2_b.jpg", "bad.jpg", "25_3_1_c.jpg"}) std::ofstream(dir.path / name) << "x";
  auto scan = scan_labels(dir.path);
  CHECK(scan.labels.size() == 2);
  CHECK(scan.skipped.size() == 2);
}
