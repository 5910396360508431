#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fairaudit/encoding.hpp"
#include "test_support.hpp"

using namespace fairaudit;

namespace {

CaseRecord record(const std::string& id, const std::string& judge, int age = 30, Race race = Race::white,
                  Gender gender = Gender::female, bool outcome = false) {
  CaseRecord r;
  r.case_id = id;
  r.charge_id = "1";
  r.act = "720 ILCS 570";
  r.section = "402(c)";
  r.age_at_incident = age;
  r.class_code = "4";
  r.judge = judge;
  r.law_enforcement_agency = "CHICAGO PD";
  r.disposition_charged_offense_title = "POSSESSION";
  r.race = race;
  r.gender = gender;
  r.outcome = outcome;
  r.incident_city = "Chicago";
  return r;
}

EncodedDataset labelled(std::size_t positives, std::size_t negatives) {
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> g;
  for (std::size_t i = 0; i < positives + negatives; ++i) {
    rows.push_back({static_cast<double>(i)});
    y.push_back(i < positives ? 1 : 0);
    g.push_back(i % 2);
  }
  return EncodedDataset::from_dense(rows, y, g);
}

std::size_t count_positive(const EncodedDataset& d) {
  return static_cast<std::size_t>(std::count(d.y.begin(), d.y.end(), 1));
}

}  // namespace

TEST(BuildSchema, JudgeVocabularyPlusOther) {
  const std::vector<CaseRecord> recs = {record("a", "J2"), record("b", "J1"), record("c", "J2")};
  const auto schema = build_schema(recs);
  const auto& judge = schema.features()[4];
  EXPECT_EQ(judge.name, "judge");
  EXPECT_EQ(judge.vocabulary, (std::vector<std::string>{"J1", "J2"}));
  EXPECT_EQ(judge.width(), 3u);
  EXPECT_EQ(schema.column_names().size(), schema.width());
}

TEST(BuildSchema, PermutationInvariantAndEmptyRejected) {
  std::vector<CaseRecord> recs = {record("a", "J2"), record("b", "J1"), record("c", "J3", 40)};
  const auto s1 = build_schema(recs);
  std::reverse(recs.begin(), recs.end());
  EXPECT_EQ(build_schema(recs), s1);
  EXPECT_THROW(build_schema(std::vector<CaseRecord>{}), DataError);
}

TEST(BuildSchema, SaveLoadRoundTrip) {
  std::vector<CaseRecord> recs = {record("a", "Judge, \"A\""), record("b", "line\\break")};
  recs[1].judge += '\n';
  const auto schema = build_schema(recs);
  std::stringstream s;
  schema.save(s);
  const auto back = FeatureSchema::load(s);
  EXPECT_EQ(back, schema);
  std::stringstream again;
  back.save(again);
  std::stringstream first;
  schema.save(first);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Encode, OneHotArithmetic) {
  const std::vector<CaseRecord> recs = {record("a", "J1", 45, Race::black, Gender::male)};
  const auto schema = build_schema(recs);
  const auto d = encode(recs, schema, GroupAttribute::race);
  ASSERT_EQ(d.X.rows(), 1u);
  EXPECT_EQ(d.X.cols(), schema.width());
  const auto row = d.X.dense_row(0);
  EXPECT_EQ(std::count(row.begin(), row.end(), 1.0), 6);
  EXPECT_DOUBLE_EQ(row[schema.features()[2].offset], 0.45);
  EXPECT_EQ(d.X.nonzeros(), 7u);
  EXPECT_EQ(d.group[0], 1);
  EXPECT_EQ(d.sample_weight[0], 1.0);
}

TEST(Encode, GroupConvention) {
  const std::vector<CaseRecord> recs = {record("a", "J1", 30, Race::white, Gender::male),
                                        record("b", "J1", 30, Race::black, Gender::female)};
  const auto schema = build_schema(recs);
  EXPECT_EQ(encode(recs, schema, GroupAttribute::race).group, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_EQ(encode(recs, schema, GroupAttribute::gender).group, (std::vector<std::uint8_t>{1, 0}));
}

TEST(Encode, UnseenValueHitsOtherColumn) {
  const std::vector<CaseRecord> train = {record("a", "J1"), record("b", "J2")};
  const std::vector<CaseRecord> test = {record("c", "J9")};
  const auto schema = build_schema(train);
  const auto d = encode(test, schema, GroupAttribute::race);
  const auto& judge = schema.features()[4];
  EXPECT_EQ(d.X.at(0, judge.offset + judge.vocabulary.size()), 1.0);
  EXPECT_EQ(d.X.at(0, judge.offset), 0.0);
  EXPECT_EQ(d.X.at(0, judge.offset + 1), 0.0);
}

TEST(Encode, AgeOutsideRangeIsAnError) {
  const std::vector<CaseRecord> ok = {record("a", "J1")};
  const std::vector<CaseRecord> bad = {record("a", "J1", 120)};
  EXPECT_THROW(encode(bad, build_schema(ok), GroupAttribute::race), DataError);
}

TEST(Split, SizesFollowFloorRule) {
  auto [tr, te] = split(labelled(50, 50), 0.75, 1);
  EXPECT_EQ(tr.size(), 75u);
  EXPECT_EQ(te.size(), 25u);
  auto [tr7, te7] = split(labelled(4, 3), 0.75, 1);
  EXPECT_EQ(tr7.size(), 5u);
  EXPECT_EQ(te7.size(), 2u);
  EXPECT_THROW(split(labelled(2, 1), 0.75, 1), DataError);
  EXPECT_THROW(split(labelled(5, 5), 1.0, 1), DataError);
  EXPECT_THROW(split(labelled(5, 5), 0.0, 1), DataError);
}

TEST(Split, DeterministicDisjointExhaustive) {
  auto [a, b] = split_indices(100, 0.75, 42);
  auto [c, d] = split_indices(100, 0.75, 42);
  EXPECT_EQ(a, c);
  EXPECT_EQ(b, d);
  std::set<std::size_t> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  EXPECT_EQ(all.size(), 100u);
  auto [e, f] = split_indices(100, 0.75, 43);
  EXPECT_NE(a, e);
  const auto [train, test] = split(labelled(50, 50), 0.75, 42);
  EXPECT_EQ(train.provenance, (Provenance{"train", 42}));
  EXPECT_EQ(test.provenance, (Provenance{"test", 42}));
}

TEST(Balance, MajoritySubsampled) {
  const auto d = balance(labelled(70, 30), 5);
  EXPECT_EQ(d.size(), 60u);
  EXPECT_EQ(count_positive(d), 30u);
  const auto e = balance(labelled(20, 45), 5);
  EXPECT_EQ(e.size(), 40u);
  EXPECT_EQ(count_positive(e), 20u);
}

TEST(Balance, EvenDataUnchanged) {
  const auto d = labelled(25, 25);
  EXPECT_EQ(balance_indices(d.y, 9).size(), 50u);
  auto b = balance(d, 9);
  b.provenance = d.provenance;
  EXPECT_EQ(b, d);
}

TEST(Balance, DroppedRowDependsOnSeed) {
  const auto d = labelled(31, 30);
  std::set<std::size_t> dropped;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto keep = balance_indices(d.y, seed);
    ASSERT_EQ(keep.size(), 60u);
    EXPECT_EQ(balance_indices(d.y, seed), keep);
    for (std::size_t i = 0; i < 31; ++i) {
      if (!std::binary_search(keep.begin(), keep.end(), i)) dropped.insert(i);
    }
  }
  EXPECT_GT(dropped.size(), 1u);
  EXPECT_THROW(balance(labelled(5, 0), 1), DataError);
}

TEST(ClassWeights, PublishedFrequencies) {
  const auto a = ClassWeights::from_frequencies(0.484, 0.516);
  EXPECT_NEAR(a.w_true, 1.033, 0.0005);
  EXPECT_NEAR(a.w_false, 0.969, 0.0005);
  const auto b = ClassWeights::from_frequencies(0.683, 0.317);
  EXPECT_NEAR(b.w_true, 0.732, 0.0005);
  EXPECT_GE(b.w_false, 1.577 - 0.0005);
  EXPECT_LE(b.w_false, 1.580 + 0.0005);
  const auto c = ClassWeights::from_frequencies(0.5, 0.5);
  EXPECT_EQ(c.w_true, 1.0);
  EXPECT_EQ(c.w_false, 1.0);
}

TEST(ClassWeights, ProductIsOneHalf) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = rng.bernoulli(rng.uniform()) ? 1 : 0;
    y[0] = 1;
    y[1] = 0;
    const auto w = class_weights(y);
    const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    const double f_true = pos / static_cast<double>(n);
    EXPECT_NEAR(w.w_true * f_true, 0.5, 1e-12);
    EXPECT_NEAR(w.w_false * (1.0 - f_true), 0.5, 1e-12);
    const auto sw = sample_weights(y, w);
    double sum = 0.0;
    for (double s : sw) sum += s;
    EXPECT_NEAR(sum, static_cast<double>(n), 1e-9 * static_cast<double>(n));
  }
  EXPECT_THROW(class_weights(std::vector<std::uint8_t>{1, 1}), DataError);
  EXPECT_THROW(ClassWeights::from_frequencies(0.0, 1.0), DataError);
}

TEST(SampleWeights, Examples) {
  const std::vector<std::uint8_t> y = {1, 0};
  EXPECT_EQ(sample_weights(y, class_weights(y)), (std::vector<double>{1.0, 1.0}));
  const std::vector<std::uint8_t> one = {1};
  EXPECT_EQ(sample_weights(one, ClassWeights{1.033, 0.969}), (std::vector<double>{1.033}));
}

TEST(CanonicalSort, PermutationInvariant) {
  Rng rng(11);
  std::vector<CaseRecord> recs;
  for (int i = 0; i < 40; ++i) recs.push_back(record("C" + std::to_string(rng.below(15)), "J" + std::to_string(i % 3)));
  auto a = recs;
  auto b = recs;
  rng.shuffle(std::span<CaseRecord>(b));
  canonical_sort(a);
  canonical_sort(b);
  EXPECT_EQ(a, b);
}

TEST(EncodedDataset, ValidateCatchesBadWeights) {
  auto d = labelled(3, 3);
  d.sample_weight[2] = 0.0;
  EXPECT_THROW(d.validate(), DataError);
  d.sample_weight[2] = 1.0;
  d.y.pop_back();
  EXPECT_THROW(d.validate(), DataError);
}
