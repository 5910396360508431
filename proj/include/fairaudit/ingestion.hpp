#pragma once

// Court-record ingestion: CSV parsing under a configurable column map, the
// per-charge join of initiation and disposition extracts, outcome derivation
// and the demographic / crime-type filters that produce CaseRecords.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fairaudit/config.hpp"
#include "fairaudit/csv.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/text.hpp"

namespace fairaudit {

enum class Source { initiation, disposition };
enum class Race { white, black };
enum class Gender { female, male };
enum class CrimeType { narcotics, theft };
enum class OutcomeKind { charge_reduction, free_bond };

inline const char* to_string(Source s) { return s == Source::initiation ? "initiation" : "disposition"; }
inline const char* to_string(Race r) { return r == Race::white ? "white" : "black"; }
inline const char* to_string(Gender g) { return g == Gender::female ? "female" : "male"; }
inline const char* to_string(CrimeType c) { return c == CrimeType::narcotics ? "narcotics" : "theft"; }
inline const char* to_string(OutcomeKind o) {
  return o == OutcomeKind::charge_reduction ? "charge_reduction" : "free_bond";
}

inline std::optional<Race> parse_race(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "white") return Race::white;
  if (f == "black") return Race::black;
  return std::nullopt;
}
inline std::optional<Gender> parse_gender(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "female") return Gender::female;
  if (f == "male") return Gender::male;
  return std::nullopt;
}
inline std::optional<CrimeType> parse_crime_type(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "narcotics") return CrimeType::narcotics;
  if (f == "theft") return CrimeType::theft;
  return std::nullopt;
}
inline std::optional<OutcomeKind> parse_outcome_kind(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "charge_reduction" || f == "charge-reduction") return OutcomeKind::charge_reduction;
  if (f == "free_bond" || f == "bond" || f == "free-bond") return OutcomeKind::free_bond;
  return std::nullopt;
}

// Logical fields a raw extract may carry.
enum class Field : std::size_t {
  case_id,
  charge_id,
  offense_category,
  class_code,
  act,
  section,
  age_at_incident,
  race,
  gender,
  judge,
  law_enforcement_agency,
  disposition_charged_offense_title,
  bond_type,
  incident_city,
  charge_disposition,
  primary_charge_flag,
  count_
};

inline constexpr std::size_t kFieldCount = static_cast<std::size_t>(Field::count_);

inline constexpr std::array<const char*, kFieldCount> kFieldNames = {
    "case_id",
    "charge_id",
    "offense_category",
    "class_code",
    "act",
    "section",
    "age_at_incident",
    "race",
    "gender",
    "judge",
    "law_enforcement_agency",
    "disposition_charged_offense_title",
    "bond_type",
    "incident_city",
    "charge_disposition",
    "primary_charge_flag",
};

struct RawChargeRow {
  std::array<std::string, kFieldCount> fields;
  std::optional<int> age_at_incident;
  Source source = Source::initiation;
  std::size_t line = 0;

  const std::string& get(Field f) const { return fields[static_cast<std::size_t>(f)]; }
  std::string& get(Field f) { return fields[static_cast<std::size_t>(f)]; }
  const std::string& case_id() const { return get(Field::case_id); }
  const std::string& charge_id() const { return get(Field::charge_id); }

  // Content ordering used for deterministic duplicate resolution; the
  // physical line number does not participate.
  auto content_key() const { return std::tie(fields, age_at_incident); }
};

struct Reject {
  Source source = Source::initiation;
  std::size_t line = 0;
  std::string reason;
  std::string case_id;
  std::string charge_id;
};

struct ParseResult {
  std::vector<RawChargeRow> rows;
  std::vector<Reject> rejects;
  std::size_t data_rows = 0;
};

// Ordered list of admitted class codes; position 0 is the most severe.
struct SeverityRank {
  int rank = 0;
  friend auto operator<=>(const SeverityRank&, const SeverityRank&) = default;
};

class SeverityTable {
 public:
  SeverityTable() : SeverityTable(std::vector<std::string>{"M", "X", "1", "2", "3", "4", "A", "B", "C"}) {}

  explicit SeverityTable(std::vector<std::string> order) : order_(std::move(order)) {
    for (std::size_t i = 0; i < order_.size(); ++i) {
      const auto key = text::fold(order_[i]);
      if (!ranks_.emplace(key, static_cast<int>(i)).second) {
        throw SchemaError("severity order lists class '" + order_[i] + "' twice");
      }
    }
  }

  // nullopt means the code is not admitted and the case is excluded.
  std::optional<SeverityRank> rank(std::string_view class_code) const {
    auto it = ranks_.find(text::fold(class_code));
    if (it == ranks_.end()) return std::nullopt;
    return SeverityRank{it->second};
  }

  // Restricts the table to codes observed in both extracts, preserving order.
  SeverityTable truncated_to(const std::vector<std::string>& present_a,
                             const std::vector<std::string>& present_b) const {
    auto contains = [](const std::vector<std::string>& v, const std::string& code) {
      return std::any_of(v.begin(), v.end(),
                         [&](const std::string& s) { return text::fold(s) == text::fold(code); });
    };
    std::vector<std::string> kept;
    for (const auto& code : order_) {
      if (contains(present_a, code) && contains(present_b, code)) kept.push_back(code);
    }
    return SeverityTable(std::move(kept));
  }

  const std::vector<std::string>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::string> order_;
  std::map<std::string, int> ranks_;
};

// Everything the filters need besides the data: column bindings per source
// and the value tables for offense categories, demographics, pleas and bonds.
struct IngestionSchema {
  std::array<std::array<std::string, kFieldCount>, 2> columns;
  SeverityTable severity;
  std::vector<std::string> narcotics_categories{"narcotics"};
  std::vector<std::string> theft_categories{"theft", "retail theft"};
  std::vector<std::string> white_values{"white"};
  std::vector<std::string> black_values{"black"};
  std::vector<std::string> female_values{"female"};
  std::vector<std::string> male_values{"male"};
  std::vector<std::string> plea_values{"plea of guilty"};
  std::vector<std::string> free_bond_values{"i bond"};
  std::vector<std::string> restricted_bond_values{"c bond", "d bond", "no bond"};
  std::vector<std::string> primary_flag_values{"true"};

  const std::string& column(Source s, Field f) const {
    return columns[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
  }
  std::string& column(Source s, Field f) {
    return columns[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
  }

  // Column names of the Cook County State's Attorney extracts.
  static IngestionSchema cook_county() {
    IngestionSchema s;
    auto bind = [&](Source src, Field f, const char* header) { s.column(src, f) = header; };
    for (Source src : {Source::initiation, Source::disposition}) {
      bind(src, Field::case_id, "CASE_ID");
      bind(src, Field::charge_id, "CHARGE_ID");
      bind(src, Field::offense_category, "UPDATED_OFFENSE_CATEGORY");
      bind(src, Field::act, "ACT");
      bind(src, Field::section, "SECTION");
      bind(src, Field::age_at_incident, "AGE_AT_INCIDENT");
      bind(src, Field::race, "RACE");
      bind(src, Field::gender, "GENDER");
      bind(src, Field::law_enforcement_agency, "LAW_ENFORCEMENT_AGENCY");
      bind(src, Field::incident_city, "INCIDENT_CITY");
      bind(src, Field::primary_charge_flag, "PRIMARY_CHARGE_FLAG");
    }
    bind(Source::initiation, Field::class_code, "CLASS");
    bind(Source::initiation, Field::bond_type, "BOND_TYPE_CURRENT");
    bind(Source::disposition, Field::class_code, "DISPOSITION_CHARGED_CLASS");
    bind(Source::disposition, Field::judge, "JUDGE");
    bind(Source::disposition, Field::disposition_charged_offense_title,
         "DISPOSITION_CHARGED_OFFENSE_TITLE");
    bind(Source::disposition, Field::charge_disposition, "CHARGE_DISPOSITION");
    return s;
  }

  // Applies a schema-map file on top of the Cook County defaults.
  //   initiation.<field> = HEADER      (empty value unbinds the field)
  //   disposition.<field> = HEADER
  //   <field> = HEADER                 (both sources)
  //   severity_order = M, X, 1, ...
  //   offense.narcotics / offense.theft / race.white / race.black /
  //   gender.female / gender.male / plea_values / bond.free / bond.restricted /
  //   primary_flag_values = comma lists
  static IngestionSchema from_config(const KeyValueConfig& cfg) {
    IngestionSchema s = cook_county();
    for (std::size_t f = 0; f < kFieldCount; ++f) {
      const std::string name = kFieldNames[f];
      if (auto v = cfg.find(name)) {
        s.columns[0][f] = *v;
        s.columns[1][f] = *v;
      }
      if (auto v = cfg.find("initiation." + name)) s.columns[0][f] = *v;
      if (auto v = cfg.find("disposition." + name)) s.columns[1][f] = *v;
    }
    auto folded_list = [&](const std::string& key, std::vector<std::string>& target) {
      if (auto v = cfg.find(key)) {
        target.clear();
        for (auto& item : text::split_list(*v)) target.push_back(text::fold(item));
      }
    };
    if (auto v = cfg.find("severity_order")) s.severity = SeverityTable(text::split_list(*v));
    folded_list("offense.narcotics", s.narcotics_categories);
    folded_list("offense.theft", s.theft_categories);
    folded_list("race.white", s.white_values);
    folded_list("race.black", s.black_values);
    folded_list("gender.female", s.female_values);
    folded_list("gender.male", s.male_values);
    folded_list("plea_values", s.plea_values);
    folded_list("bond.free", s.free_bond_values);
    folded_list("bond.restricted", s.restricted_bond_values);
    folded_list("primary_flag_values", s.primary_flag_values);
    cfg.require_all_used();
    return s;
  }
};

namespace detail {
inline bool in_list(const std::vector<std::string>& folded_values, std::string_view raw) {
  const auto f = text::fold(raw);
  return std::find(folded_values.begin(), folded_values.end(), f) != folded_values.end();
}
}  // namespace detail

// Parses one extract. A header missing a bound column raises SchemaError;
// malformed data rows go to `rejects` with a reason code.
inline ParseResult parse_charges(std::istream& in, Source source, const IngestionSchema& schema) {
  ParseResult result;
  csv::Reader reader(in);
  csv::Row header;
  if (!reader.next(header)) return result;
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::array<std::optional<std::size_t>, kFieldCount> index{};
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    const auto& want = schema.columns[static_cast<std::size_t>(source)][f];
    if (want.empty()) continue;
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return text::trim(h) == want; });
    if (it == header.end()) {
      throw SchemaError(std::string(to_string(source)) + " extract is missing column '" + want +
                        "' (field " + kFieldNames[f] + ")");
    }
    index[f] = static_cast<std::size_t>(it - header.begin());
  }
  for (Field f : {Field::case_id, Field::charge_id}) {
    if (!index[static_cast<std::size_t>(f)]) {
      throw SchemaError(std::string("field ") + kFieldNames[static_cast<std::size_t>(f)] +
                        " must be bound for the " + to_string(source) + " extract");
    }
  }

  csv::Row row;
  while (reader.next(row)) {
    const bool malformed = reader.take_malformed();
    if (row.size() == 1 && text::trim(row[0]).empty()) continue;  // blank line
    ++result.data_rows;
    RawChargeRow out;
    out.source = source;
    out.line = reader.line();
    auto reject = [&](std::string reason) {
      result.rejects.push_back(Reject{source, out.line, std::move(reason), out.case_id(), out.charge_id()});
    };
    if (row.size() != header.size()) {
      for (std::size_t f = 0; f < 2; ++f) {
        if (index[f] && *index[f] < row.size()) out.fields[f] = std::string(text::trim(row[*index[f]]));
      }
      reject("field_count");
      continue;
    }
    for (std::size_t f = 0; f < kFieldCount; ++f) {
      if (index[f]) out.fields[f] = std::string(text::trim(row[*index[f]]));
    }
    if (malformed) {
      reject("malformed_quotes");
      continue;
    }
    if (out.case_id().empty()) {
      reject("missing_case_id");
      continue;
    }
    if (out.charge_id().empty()) {
      reject("missing_charge_id");
      continue;
    }
    const auto& age_text = out.get(Field::age_at_incident);
    if (!age_text.empty()) {
      auto age = csv::parse_int<int>(age_text);
      if (!age) {
        reject("bad_age");
        continue;
      }
      out.age_at_incident = *age;
    }
    result.rows.push_back(std::move(out));
  }
  return result;
}

// True iff the disposition class is strictly less severe than the initiation
// class; nullopt when either class is not admitted.
inline std::optional<bool> derive_charge_reduction(std::string_view init_class, std::string_view disp_class,
                                                   const SeverityTable& table) {
  auto a = table.rank(init_class);
  auto b = table.rank(disp_class);
  if (!a || !b) return std::nullopt;
  return b->rank > a->rank;
}

// I Bond is a free bond; C, D and No Bond are restricted. Anything else is
// not recognised.
inline std::optional<bool> derive_bond_outcome(std::string_view bond_type, const IngestionSchema& schema) {
  if (detail::in_list(schema.free_bond_values, bond_type)) return true;
  if (detail::in_list(schema.restricted_bond_values, bond_type)) return false;
  return std::nullopt;
}

inline std::optional<bool> derive_bond_outcome(std::string_view bond_type) {
  static const IngestionSchema defaults = IngestionSchema::cook_county();
  return derive_bond_outcome(bond_type, defaults);
}

struct JoinedRow {
  RawChargeRow initiation;
  RawChargeRow disposition;

  const std::string& case_id() const { return initiation.case_id(); }
  const std::string& charge_id() const { return initiation.charge_id(); }

  // Value from the preferred side, falling back to the other when empty.
  const std::string& pick(Field f, Source preferred) const {
    const auto& first = preferred == Source::initiation ? initiation : disposition;
    const auto& second = preferred == Source::initiation ? disposition : initiation;
    return first.get(f).empty() ? second.get(f) : first.get(f);
  }
};

struct JoinStats {
  std::size_t initiation_rows = 0;
  std::size_t disposition_rows = 0;
  std::size_t matched = 0;
  std::size_t unmatched_initiation = 0;
  std::size_t unmatched_disposition = 0;
  std::size_t duplicate_initiation = 0;
  std::size_t duplicate_disposition = 0;
};

struct JoinResult {
  std::vector<JoinedRow> rows;
  JoinStats stats;
};

namespace detail {
using Key = std::pair<std::string, std::string>;

// One row per key: the lexicographically smallest by content.
inline std::map<Key, const RawChargeRow*> dedupe(const std::vector<RawChargeRow>& rows, std::size_t& duplicates) {
  std::map<Key, const RawChargeRow*> out;
  for (const auto& r : rows) {
    auto [it, inserted] = out.try_emplace(Key{r.case_id(), r.charge_id()}, &r);
    if (!inserted) {
      ++duplicates;
      if (r.content_key() < it->second->content_key()) it->second = &r;
    }
  }
  return out;
}
}  // namespace detail

// Inner join on (case_id, charge_id), output sorted by key.
inline JoinResult join_cases(const std::vector<RawChargeRow>& initiations,
                             const std::vector<RawChargeRow>& dispositions) {
  JoinResult result;
  result.stats.initiation_rows = initiations.size();
  result.stats.disposition_rows = dispositions.size();
  const auto init = detail::dedupe(initiations, result.stats.duplicate_initiation);
  const auto disp = detail::dedupe(dispositions, result.stats.duplicate_disposition);
  for (const auto& [key, row] : init) {
    auto it = disp.find(key);
    if (it == disp.end()) {
      ++result.stats.unmatched_initiation;
      continue;
    }
    result.rows.push_back(JoinedRow{*row, *it->second});
  }
  result.stats.matched = result.rows.size();
  result.stats.unmatched_disposition = disp.size() - result.stats.matched;
  return result;
}

struct CaseRecord {
  std::string case_id;
  std::string charge_id;
  std::string act;
  std::string section;
  int age_at_incident = 0;
  std::string class_code;
  std::string judge;
  std::string law_enforcement_agency;
  std::string disposition_charged_offense_title;
  Race race = Race::white;
  Gender gender = Gender::female;
  CrimeType crime_type = CrimeType::narcotics;
  OutcomeKind outcome_kind = OutcomeKind::charge_reduction;
  bool outcome = false;
  std::string incident_city;

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

struct FunnelStage {
  std::string stage;
  std::size_t input = 0;
  std::size_t excluded = 0;
  std::size_t remaining() const { return input - excluded; }
};

struct FilterResult {
  std::vector<CaseRecord> records;
  std::vector<FunnelStage> funnel;
};

// Applies the crime-type, demographic, age and outcome filters in a fixed
// stage order and labels the survivors. Every exclusion lands in `funnel`.
inline FilterResult filter_and_label(const std::vector<JoinedRow>& rows, CrimeType crime_type,
                                     OutcomeKind outcome_kind, const IngestionSchema& schema) {
  const bool reduction = outcome_kind == OutcomeKind::charge_reduction;
  std::vector<FunnelStage> funnel = {
      {"crime_type"}, {"gender"}, {"race"}, {"age_missing"}, {"age_range"}, {"primary_charge"},
  };
  if (reduction) {
    funnel.push_back({"plea"});
    funnel.push_back({"severity_admitted"});
  } else {
    funnel.push_back({"bond_type"});
  }

  const auto& categories = crime_type == CrimeType::narcotics ? schema.narcotics_categories
                                                              : schema.theft_categories;
  FilterResult result;
  for (const auto& row : rows) {
    std::size_t stage = 0;
    auto pass = [&](bool keep) {
      ++funnel[stage].input;
      if (!keep) ++funnel[stage].excluded;
      ++stage;
      return keep;
    };
    const auto init = Source::initiation;
    const auto disp = Source::disposition;

    if (!pass(detail::in_list(categories, row.pick(Field::offense_category, init)))) continue;

    const auto& gender_raw = row.pick(Field::gender, init);
    std::optional<Gender> gender;
    if (detail::in_list(schema.female_values, gender_raw)) gender = Gender::female;
    else if (detail::in_list(schema.male_values, gender_raw)) gender = Gender::male;
    if (!pass(gender.has_value())) continue;

    const auto& race_raw = row.pick(Field::race, init);
    std::optional<Race> race;
    if (detail::in_list(schema.white_values, race_raw)) race = Race::white;
    else if (detail::in_list(schema.black_values, race_raw)) race = Race::black;
    if (!pass(race.has_value())) continue;

    auto age = row.initiation.age_at_incident ? row.initiation.age_at_incident
                                              : row.disposition.age_at_incident;
    if (!pass(age.has_value())) continue;
    if (!pass(*age >= 0 && *age <= 100)) continue;

    const auto& flag = row.pick(Field::primary_charge_flag, init);
    if (!pass(flag.empty() || detail::in_list(schema.primary_flag_values, flag))) continue;

    std::optional<bool> outcome;
    if (reduction) {
      if (!pass(detail::in_list(schema.plea_values, row.pick(Field::charge_disposition, disp)))) continue;
      outcome = derive_charge_reduction(row.initiation.get(Field::class_code),
                                        row.disposition.get(Field::class_code), schema.severity);
      if (!pass(outcome.has_value())) continue;
    } else {
      outcome = derive_bond_outcome(row.pick(Field::bond_type, init), schema);
      if (!pass(outcome.has_value())) continue;
    }

    CaseRecord rec;
    rec.case_id = row.case_id();
    rec.charge_id = row.charge_id();
    rec.act = row.pick(Field::act, init);
    rec.section = row.pick(Field::section, init);
    rec.age_at_incident = *age;
    rec.class_code = row.pick(Field::class_code, init);
    rec.judge = row.pick(Field::judge, disp);
    rec.law_enforcement_agency = row.pick(Field::law_enforcement_agency, init);
    rec.disposition_charged_offense_title = row.pick(Field::disposition_charged_offense_title, disp);
    rec.race = *race;
    rec.gender = *gender;
    rec.crime_type = crime_type;
    rec.outcome_kind = outcome_kind;
    rec.outcome = *outcome;
    rec.incident_city = row.pick(Field::incident_city, init);
    result.records.push_back(std::move(rec));
  }
  result.funnel = std::move(funnel);
  return result;
}

// ---- File formats ---------------------------------------------------------

// Column order of the canonical CaseRecord CSV.
inline const csv::Row& case_record_header() {
  static const csv::Row header = {
      "case_id", "charge_id", "act", "section", "age_at_incident", "class_code", "judge",
      "law_enforcement_agency", "disposition_charged_offense_title", "race", "gender",
      "crime_type", "outcome_kind", "outcome", "incident_city"};
  return header;
}

inline void write_cases(std::ostream& out, const std::vector<CaseRecord>& records) {
  csv::write_row(out, case_record_header());
  for (const auto& r : records) {
    csv::write_row(out, {r.case_id, r.charge_id, r.act, r.section, std::to_string(r.age_at_incident),
                         r.class_code, r.judge, r.law_enforcement_agency,
                         r.disposition_charged_offense_title, to_string(r.race), to_string(r.gender),
                         to_string(r.crime_type), to_string(r.outcome_kind), r.outcome ? "1" : "0",
                         r.incident_city});
  }
}

inline std::vector<CaseRecord> read_cases(std::istream& in, const std::string& origin = "<cases>") {
  std::vector<CaseRecord> out;
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) return out;
  if (row != case_record_header()) throw SchemaError(origin + ": not a case-record CSV (unexpected header)");
  const std::size_t width = case_record_header().size();
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    auto fail = [&](const std::string& what) -> SchemaError {
      return SchemaError(origin + ":" + std::to_string(reader.line()) + ": " + what);
    };
    if (row.size() != width) throw fail("expected " + std::to_string(width) + " fields");
    CaseRecord r;
    r.case_id = row[0];
    r.charge_id = row[1];
    r.act = row[2];
    r.section = row[3];
    auto age = csv::parse_int<int>(row[4]);
    if (!age || *age < 0 || *age > 100) throw fail("bad age_at_incident '" + row[4] + "'");
    r.age_at_incident = *age;
    r.class_code = row[5];
    r.judge = row[6];
    r.law_enforcement_agency = row[7];
    r.disposition_charged_offense_title = row[8];
    auto race = parse_race(row[9]);
    auto gender = parse_gender(row[10]);
    auto crime = parse_crime_type(row[11]);
    auto kind = parse_outcome_kind(row[12]);
    if (!race) throw fail("bad race '" + row[9] + "'");
    if (!gender) throw fail("bad gender '" + row[10] + "'");
    if (!crime) throw fail("bad crime_type '" + row[11] + "'");
    if (!kind) throw fail("bad outcome_kind '" + row[12] + "'");
    if (row[13] != "0" && row[13] != "1") throw fail("bad outcome '" + row[13] + "'");
    r.race = *race;
    r.gender = *gender;
    r.crime_type = *crime;
    r.outcome_kind = *kind;
    r.outcome = row[13] == "1";
    r.incident_city = row[14];
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_rejects(std::ostream& out, const std::vector<Reject>& rejects) {
  csv::write_row(out, {"source", "line", "reason", "case_id", "charge_id"});
  for (const auto& r : rejects) {
    csv::write_row(out, {to_string(r.source), std::to_string(r.line), r.reason, r.case_id, r.charge_id});
  }
}

// Funnel report: parse and join accounting first, then one row per filter stage.
inline void write_funnel(std::ostream& out, const ParseResult& initiations, const ParseResult& dispositions,
                         const JoinStats& join, const std::vector<FunnelStage>& funnel) {
  csv::write_row(out, {"stage", "input", "excluded", "remaining"});
  auto row = [&](const std::string& stage, std::size_t input, std::size_t excluded) {
    csv::write_row(out, {stage, std::to_string(input), std::to_string(excluded), std::to_string(input - excluded)});
  };
  row("parse_initiation", initiations.data_rows, initiations.rejects.size());
  row("parse_disposition", dispositions.data_rows, dispositions.rejects.size());
  row("dedupe_initiation", join.initiation_rows, join.duplicate_initiation);
  row("dedupe_disposition", join.disposition_rows, join.duplicate_disposition);
  row("join", join.initiation_rows - join.duplicate_initiation, join.unmatched_initiation);
  for (const auto& s : funnel) row(s.stage, s.input, s.excluded);
}

}  // namespace fairaudit
