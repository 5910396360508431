#include <gtest/gtest.h>

#include <sstream>

#include "fairaudit/ingestion.hpp"
#include "test_support.hpp"

using namespace fairaudit;
using fairaudit::testing::data_path;
using fairaudit::testing::read_file;

namespace {

const char* kInitHeader =
    "CASE_ID,CHARGE_ID,UPDATED_OFFENSE_CATEGORY,ACT,SECTION,AGE_AT_INCIDENT,RACE,GENDER,LAW_ENFORCEMENT_AGENCY,"
    "INCIDENT_CITY,PRIMARY_CHARGE_FLAG,CLASS,BOND_TYPE_CURRENT\n";
const char* kDispHeader =
    "CASE_ID,CHARGE_ID,UPDATED_OFFENSE_CATEGORY,ACT,SECTION,AGE_AT_INCIDENT,RACE,GENDER,LAW_ENFORCEMENT_AGENCY,"
    "INCIDENT_CITY,PRIMARY_CHARGE_FLAG,DISPOSITION_CHARGED_CLASS,JUDGE,DISPOSITION_CHARGED_OFFENSE_TITLE,"
    "CHARGE_DISPOSITION\n";

ParseResult parse(const std::string& text, Source source) {
  std::istringstream in(text);
  return parse_charges(in, source, IngestionSchema::cook_county());
}

std::string init_row(const std::string& id, const std::string& category, int age, const std::string& cls,
                     const std::string& bond, const std::string& race = "Black", const std::string& gender = "Male") {
  return id + ",1," + category + ",720 ILCS 570,402(c)," + std::to_string(age) + "," + race + "," + gender +
         ",CHICAGO PD,Chicago,true," + cls + "," + bond + "\n";
}

std::string disp_row(const std::string& id, const std::string& category, int age, const std::string& cls,
                     const std::string& plea = "Plea Of Guilty") {
  return id + ",1," + category + ",720 ILCS 570,402(c)," + std::to_string(age) +
         ",Black,Male,CHICAGO PD,Chicago,true," + cls + ",Judge A,POSSESSION," + plea + "\n";
}

FilterResult pipeline(const std::string& init_csv, const std::string& disp_csv, CrimeType crime, OutcomeKind outcome) {
  const auto schema = IngestionSchema::cook_county();
  const auto init = parse(init_csv, Source::initiation);
  const auto disp = parse(disp_csv, Source::disposition);
  return filter_and_label(join_cases(init.rows, disp.rows).rows, crime, outcome, schema);
}

struct Outputs {
  std::string cases;
  std::string rejects;
  std::string funnel;
  std::vector<CaseRecord> records;
};

Outputs run_fixture(CrimeType crime, OutcomeKind outcome) {
  const auto schema = IngestionSchema::cook_county();
  std::istringstream init_in(read_file(data_path("cook_initiations.csv")));
  std::istringstream disp_in(read_file(data_path("cook_dispositions.csv")));
  const auto init = parse_charges(init_in, Source::initiation, schema);
  const auto disp = parse_charges(disp_in, Source::disposition, schema);
  const auto joined = join_cases(init.rows, disp.rows);
  const auto filtered = filter_and_label(joined.rows, crime, outcome, schema);
  std::vector<Reject> rejects = init.rejects;
  rejects.insert(rejects.end(), disp.rejects.begin(), disp.rejects.end());
  Outputs o;
  std::ostringstream c, r, f;
  write_cases(c, filtered.records);
  write_rejects(r, rejects);
  write_funnel(f, init, disp, joined.stats, filtered.funnel);
  o.cases = c.str();
  o.rejects = r.str();
  o.funnel = f.str();
  o.records = filtered.records;
  return o;
}

std::optional<bool> label_of(const std::vector<CaseRecord>& records, const std::string& case_id) {
  for (const auto& r : records) {
    if (r.case_id == case_id) return r.outcome;
  }
  return std::nullopt;
}

}  // namespace

TEST(ParseCharges, EmptyFileWithHeaderGivesNothing) {
  const auto r = parse(kInitHeader, Source::initiation);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_TRUE(r.rejects.empty());
  EXPECT_EQ(r.data_rows, 0u);
}

TEST(ParseCharges, MissingCaseIdIsRejectedNotDropped) {
  std::string text = kInitHeader;
  text += init_row("C1", "Narcotics", 30, "4", "I Bond");
  text += init_row("", "Narcotics", 31, "4", "I Bond");
  text += init_row("C3", "Narcotics", 32, "4", "I Bond");
  const auto r = parse(text, Source::initiation);
  ASSERT_EQ(r.rows.size(), 2u);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].reason, "missing_case_id");
  EXPECT_EQ(r.rejects[0].line, 3u);
  EXPECT_EQ(r.rows.size() + r.rejects.size(), r.data_rows);
}

TEST(ParseCharges, MissingColumnNamesTheColumn) {
  std::string text = "CASE_ID,CHARGE_ID,ACT\nC1,1,x\n";
  try {
    parse(text, Source::initiation);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("UPDATED_OFFENSE_CATEGORY"), std::string::npos) << e.what();
  }
}

TEST(ParseCharges, RejectReasons) {
  std::string text = kInitHeader;
  text += "C1,1,Narcotics\n";                                       // field_count
  text += init_row("C2", "Narcotics", 30, "4", "I Bond");
  text += "C3,,Narcotics,a,b,30,Black,Male,x,y,true,4,I Bond\n";    // missing_charge_id
  text += "C4,1,Narcotics,a,b,3x,Black,Male,x,y,true,4,I Bond\n";   // bad_age
  text += "\n";
  const auto r = parse(text, Source::initiation);
  ASSERT_EQ(r.rejects.size(), 3u);
  EXPECT_EQ(r.rejects[0].reason, "field_count");
  EXPECT_EQ(r.rejects[1].reason, "missing_charge_id");
  EXPECT_EQ(r.rejects[2].reason, "bad_age");
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.data_rows, 4u);
}

TEST(Severity, RanksFollowTheTable) {
  const SeverityTable t;
  EXPECT_EQ(t.rank("M")->rank, 0);
  EXPECT_EQ(t.rank("C")->rank, static_cast<int>(t.size()) - 1);
  EXPECT_EQ(t.rank("x")->rank, 1);
  EXPECT_FALSE(t.rank("Z").has_value());
  EXPECT_FALSE(t.rank("").has_value());
  EXPECT_THROW(SeverityTable({"1", "2", "1"}), SchemaError);
}

TEST(Severity, TruncationKeepsRelativeOrder) {
  const SeverityTable t;
  const auto small = t.truncated_to({"4", "2", "X", "C"}, {"2", "4", "C", "M"});
  EXPECT_EQ(small.order(), (std::vector<std::string>{"2", "4", "C"}));
  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{{"2", "4"}, {"4", "C"}, {"2", "C"}}) {
    EXPECT_EQ(derive_charge_reduction(a, b, t), derive_charge_reduction(a, b, small));
    EXPECT_EQ(derive_charge_reduction(b, a, t), derive_charge_reduction(b, a, small));
  }
}

TEST(DeriveChargeReduction, ComparesRanks) {
  const SeverityTable t;
  EXPECT_EQ(derive_charge_reduction("X", "2", t), true);   // rank 1 -> 3
  EXPECT_EQ(derive_charge_reduction("1", "1", t), false);  // rank 2 -> 2
  EXPECT_EQ(derive_charge_reduction("2", "X", t), false);  // rank 3 -> 1
  EXPECT_FALSE(derive_charge_reduction("Z", "2", t).has_value());
  EXPECT_FALSE(derive_charge_reduction("2", "U", t).has_value());
}

TEST(DeriveBondOutcome, IBondIsFree) {
  EXPECT_EQ(derive_bond_outcome("I Bond"), true);
  EXPECT_EQ(derive_bond_outcome("No Bond"), false);
  EXPECT_EQ(derive_bond_outcome("D Bond"), false);
  EXPECT_EQ(derive_bond_outcome("C Bond"), false);
  EXPECT_EQ(derive_bond_outcome("  i bond "), true);
  EXPECT_FALSE(derive_bond_outcome("EHM").has_value());
  EXPECT_FALSE(derive_bond_outcome("").has_value());
}

TEST(JoinCases, DisjointKeys) {
  const auto init = parse(std::string(kInitHeader) + init_row("A", "Narcotics", 30, "4", "I Bond"), Source::initiation);
  const auto disp = parse(std::string(kDispHeader) + disp_row("B", "Narcotics", 30, "4"), Source::disposition);
  const auto j = join_cases(init.rows, disp.rows);
  EXPECT_TRUE(j.rows.empty());
  EXPECT_EQ(j.stats.unmatched_initiation, 1u);
  EXPECT_EQ(j.stats.unmatched_disposition, 1u);
}

TEST(JoinCases, OneMatch) {
  const auto init = parse(std::string(kInitHeader) + init_row("A", "Narcotics", 30, "4", "I Bond"), Source::initiation);
  const auto disp = parse(std::string(kDispHeader) + disp_row("A", "Narcotics", 30, "A"), Source::disposition);
  const auto j = join_cases(init.rows, disp.rows);
  ASSERT_EQ(j.rows.size(), 1u);
  EXPECT_EQ(j.rows[0].initiation.get(Field::class_code), "4");
  EXPECT_EQ(j.rows[0].disposition.get(Field::class_code), "A");
  EXPECT_EQ(j.stats.matched, 1u);
}

TEST(JoinCases, DuplicateKeyResolvedByContent) {
  const auto init = parse(std::string(kInitHeader) + init_row("A", "Narcotics", 30, "4", "I Bond"), Source::initiation);
  std::string d = kDispHeader;
  d += disp_row("A", "Narcotics", 30, "C");
  d += disp_row("A", "Narcotics", 30, "A");
  const auto disp = parse(d, Source::disposition);
  auto forward = join_cases(init.rows, disp.rows);
  std::vector<RawChargeRow> reversed(disp.rows.rbegin(), disp.rows.rend());
  auto backward = join_cases(init.rows, reversed);
  ASSERT_EQ(forward.rows.size(), 1u);
  EXPECT_EQ(forward.stats.duplicate_disposition, 1u);
  EXPECT_EQ(forward.rows[0].disposition.get(Field::class_code), "A");
  EXPECT_EQ(backward.rows[0].disposition.get(Field::class_code), "A");
}

TEST(FilterAndLabel, AgeOver100Excluded) {
  std::string i = kInitHeader;
  i += init_row("A", "Narcotics", 100, "4", "I Bond");
  i += init_row("B", "Narcotics", 101, "4", "I Bond");
  std::string d = kDispHeader;
  d += disp_row("A", "Narcotics", 100, "A");
  d += disp_row("B", "Narcotics", 101, "A");
  const auto r = pipeline(i, d, CrimeType::narcotics, OutcomeKind::charge_reduction);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].case_id, "A");
  EXPECT_TRUE(r.records[0].outcome);
  EXPECT_EQ(r.funnel[4].stage, "age_range");
  EXPECT_EQ(r.funnel[4].excluded, 1u);
}

TEST(FilterAndLabel, TheftIncludesRetailTheft) {
  std::string i = kInitHeader;
  i += init_row("A", "Theft", 30, "4", "I Bond");
  i += init_row("B", "Retail Theft", 30, "4", "C Bond");
  i += init_row("C", "Narcotics", 30, "4", "I Bond");
  std::string d = kDispHeader;
  d += disp_row("A", "Theft", 30, "4");
  d += disp_row("B", "Retail Theft", 30, "4");
  d += disp_row("C", "Narcotics", 30, "4");
  const auto r = pipeline(i, d, CrimeType::theft, OutcomeKind::free_bond);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_TRUE(r.records[0].outcome);
  EXPECT_FALSE(r.records[1].outcome);
  EXPECT_EQ(r.funnel[0].excluded, 1u);
}

TEST(FilterAndLabel, UnknownDemographicsAndNonPleasExcluded) {
  std::string i = kInitHeader;
  i += init_row("A", "Narcotics", 30, "4", "I Bond", "Black", "Unknown");
  i += init_row("B", "Narcotics", 30, "4", "I Bond", "HISPANIC", "Male");
  i += init_row("C", "Narcotics", 30, "4", "I Bond");
  std::string d = kDispHeader;
  d += disp_row("A", "Narcotics", 30, "A");
  d += disp_row("B", "Narcotics", 30, "A");
  d += disp_row("C", "Narcotics", 30, "A", "Finding Guilty");
  const auto r = pipeline(i, d, CrimeType::narcotics, OutcomeKind::charge_reduction);
  EXPECT_TRUE(r.records.empty());
  std::map<std::string, std::size_t> excluded;
  for (const auto& s : r.funnel) excluded[s.stage] = s.excluded;
  EXPECT_EQ(excluded["gender"], 1u);
  EXPECT_EQ(excluded["race"], 1u);
  EXPECT_EQ(excluded["plea"], 1u);
}

TEST(CaseRecordsCsv, RoundTrip) {
  const auto o = run_fixture(CrimeType::narcotics, OutcomeKind::free_bond);
  std::istringstream in(o.cases);
  const auto back = read_cases(in);
  EXPECT_EQ(back, o.records);
  std::istringstream empty("");
  EXPECT_TRUE(read_cases(empty).empty());
}

class Golden : public ::testing::TestWithParam<std::pair<CrimeType, OutcomeKind>> {};

TEST_P(Golden, MatchesIndependentOracleByteForByte) {
  const auto [crime, outcome] = GetParam();
  const std::string dir = std::string("expected/") + to_string(crime) + "_" + to_string(outcome) + "/";
  const auto o = run_fixture(crime, outcome);
  EXPECT_EQ(o.cases, read_file(data_path(dir + "cases.csv")));
  EXPECT_EQ(o.rejects, read_file(data_path(dir + "rejects.csv")));
  EXPECT_EQ(o.funnel, read_file(data_path(dir + "funnel.csv")));
  const auto again = run_fixture(crime, outcome);
  EXPECT_EQ(o.cases, again.cases);
  EXPECT_EQ(o.rejects, again.rejects);
  EXPECT_EQ(o.funnel, again.funnel);
}

INSTANTIATE_TEST_SUITE_P(AllStudies, Golden,
                         ::testing::Values(std::pair{CrimeType::narcotics, OutcomeKind::charge_reduction},
                                           std::pair{CrimeType::narcotics, OutcomeKind::free_bond},
                                           std::pair{CrimeType::theft, OutcomeKind::charge_reduction},
                                           std::pair{CrimeType::theft, OutcomeKind::free_bond}));

TEST(Golden, HandLabelledChargeReduction) {
  const auto o = run_fixture(CrimeType::narcotics, OutcomeKind::charge_reduction);
  EXPECT_EQ(o.records.size(), 17u);
  for (const char* id : {"H0001", "H0004", "H0008", "H0013", "H0015", "H0020", "H0021"}) {
    EXPECT_EQ(label_of(o.records, id), std::optional<bool>(true)) << id;
  }
  for (const char* id : {"H0002", "H0003", "H0009"}) EXPECT_EQ(label_of(o.records, id), std::optional<bool>(false)) << id;
  for (const char* id : {"H0005", "H0006"}) EXPECT_FALSE(label_of(o.records, id).has_value()) << id;
}

TEST(Golden, HandLabelledFreeBond) {
  const auto o = run_fixture(CrimeType::narcotics, OutcomeKind::free_bond);
  EXPECT_EQ(o.records.size(), 33u);
  for (const char* id : {"H0001", "H0005", "H0008", "H0009", "H0013", "H0020", "H0021"}) {
    EXPECT_EQ(label_of(o.records, id), std::optional<bool>(true)) << id;
  }
  for (const char* id : {"H0002", "H0003", "H0004", "H0015"}) {
    EXPECT_EQ(label_of(o.records, id), std::optional<bool>(false)) << id;
  }
}

TEST(Golden, EveryRowAccountedFor) {
  const auto schema = IngestionSchema::cook_county();
  for (auto [file, source] : {std::pair{"cook_initiations.csv", Source::initiation},
                              std::pair{"cook_dispositions.csv", Source::disposition}}) {
    std::istringstream in(read_file(data_path(file)));
    const auto r = parse_charges(in, source, schema);
    EXPECT_EQ(r.rows.size() + r.rejects.size(), r.data_rows) << file;
    EXPECT_EQ(r.rejects.size(), 5u) << file;
  }
}
