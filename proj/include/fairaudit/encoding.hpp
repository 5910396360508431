#pragma once

// Numeric encoding of CaseRecords: one-hot categoricals with an "other"
// column per feature, age scaled by 1/100, sparse row storage, seeded
// splitting / balancing and balanced class weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/ingestion.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/text.hpp"

namespace fairaudit {

enum class GroupAttribute { race, gender };

inline const char* to_string(GroupAttribute g) { return g == GroupAttribute::race ? "race" : "gender"; }

inline std::optional<GroupAttribute> parse_group_attribute(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "race") return GroupAttribute::race;
  if (f == "gender") return GroupAttribute::gender;
  return std::nullopt;
}

// Protected group id: white -> 0, black -> 1; female -> 0, male -> 1.
inline std::uint8_t group_of(const CaseRecord& r, GroupAttribute attr) {
  return attr == GroupAttribute::race ? (r.race == Race::black ? 1 : 0) : (r.gender == Gender::male ? 1 : 0);
}

// Compressed sparse row matrix. Encoded rows hold one entry per categorical
// feature plus the age cell, so dense storage would waste most of its memory.
class SparseMatrix {
 public:
  struct Entry {
    std::uint32_t col;
    double value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  SparseMatrix() : row_ptr_{0} {}
  explicit SparseMatrix(std::size_t cols) : cols_(cols), row_ptr_{0} {}

  static SparseMatrix from_dense(const std::vector<std::vector<double>>& dense, std::size_t cols) {
    SparseMatrix m(cols);
    for (const auto& r : dense) {
      if (r.size() != cols) throw DataError("dense row width mismatch");
      std::vector<Entry> entries;
      for (std::size_t j = 0; j < cols; ++j) {
        if (r[j] != 0.0) entries.push_back({static_cast<std::uint32_t>(j), r[j]});
      }
      m.append_row(entries);
    }
    return m;
  }

  // Entries must be sorted by column with no duplicates.
  void append_row(std::span<const Entry> entries) {
    for (const auto& e : entries) {
      if (e.col >= cols_) throw DataError("sparse entry column out of range");
      entries_.push_back(e);
    }
    row_ptr_.push_back(entries_.size());
  }

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return entries_.size(); }

  std::span<const Entry> row(std::size_t i) const {
    return {entries_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  double at(std::size_t i, std::size_t j) const {
    for (const auto& e : row(i)) {
      if (e.col == j) return e.value;
    }
    return 0.0;
  }

  double dot(std::size_t i, std::span<const double> coef) const {
    double s = 0.0;
    for (const auto& e : row(i)) s += e.value * coef[e.col];
    return s;
  }

  SparseMatrix select_rows(std::span<const std::size_t> idx) const {
    SparseMatrix out(cols_);
    for (std::size_t i : idx) out.append_row(row(i));
    return out;
  }

  std::vector<double> dense_row(std::size_t i) const {
    std::vector<double> out(cols_, 0.0);
    for (const auto& e : row(i)) out[e.col] = e.value;
    return out;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<Entry> entries_;
};

struct Provenance {
  std::string split = "all";
  std::uint64_t seed = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct EncodedDataset {
  SparseMatrix X;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> group;
  std::vector<double> sample_weight;
  Provenance provenance;

  std::size_t size() const { return y.size(); }
  std::size_t width() const { return X.cols(); }

  // Checks the shape and value invariants; throws DataError on violation.
  void validate() const {
    const std::size_t n = X.rows();
    if (y.size() != n || group.size() != n || sample_weight.size() != n) {
      throw DataError("encoded dataset length mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] > 1 || group[i] > 1) throw DataError("labels and groups must be 0/1");
      if (!(sample_weight[i] > 0.0) || !std::isfinite(sample_weight[i])) {
        throw DataError("sample weights must be positive and finite");
      }
      for (const auto& e : X.row(i)) {
        if (!std::isfinite(e.value)) throw DataError("non-finite feature value");
      }
    }
  }

  EncodedDataset subset(std::span<const std::size_t> idx) const {
    EncodedDataset out;
    out.X = X.select_rows(idx);
    out.provenance = provenance;
    for (std::size_t i : idx) {
      out.y.push_back(y[i]);
      out.group.push_back(group[i]);
      out.sample_weight.push_back(sample_weight[i]);
    }
    return out;
  }

  static EncodedDataset from_dense(const std::vector<std::vector<double>>& rows, std::vector<std::uint8_t> labels,
                                   std::vector<std::uint8_t> groups, std::vector<double> weights = {}) {
    EncodedDataset d;
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    d.X = SparseMatrix::from_dense(rows, cols);
    d.y = std::move(labels);
    d.group = std::move(groups);
    d.sample_weight = weights.empty() ? std::vector<double>(d.y.size(), 1.0) : std::move(weights);
    d.validate();
    return d;
  }

  friend bool operator==(const EncodedDataset&, const EncodedDataset&) = default;
};

// ---- Feature schema ---------------------------------------------------------

struct FeatureSpec {
  enum class Kind { categorical, numeric };
  std::string name;
  Kind kind = Kind::categorical;
  std::vector<std::string> vocabulary;  // sorted; categorical only
  double scale = 1.0;                   // numeric only: encoded = value / scale
  std::size_t offset = 0;

  std::size_t width() const { return kind == Kind::numeric ? 1 : vocabulary.size() + 1; }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  explicit FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
    width_ = 0;
    for (auto& f : features_) {
      f.offset = width_;
      width_ += f.width();
    }
  }

  const std::vector<FeatureSpec>& features() const { return features_; }
  std::size_t width() const { return width_; }

  // Column for a categorical value; unseen values map to the feature's
  // trailing "other" column.
  std::size_t column(std::size_t feature, std::string_view value) const {
    const auto& f = features_[feature];
    auto it = std::lower_bound(f.vocabulary.begin(), f.vocabulary.end(), value);
    if (it != f.vocabulary.end() && *it == value) {
      return f.offset + static_cast<std::size_t>(it - f.vocabulary.begin());
    }
    return f.offset + f.vocabulary.size();
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    for (const auto& f : features_) {
      if (f.kind == FeatureSpec::Kind::numeric) {
        out.push_back(f.name);
        continue;
      }
      for (const auto& v : f.vocabulary) out.push_back(f.name + "=" + v);
      out.push_back(f.name + "=<other>");
    }
    return out;
  }

  void save(std::ostream& out) const {
    out << "fairaudit-feature-schema 1\n";
    for (const auto& f : features_) {
      if (f.kind == FeatureSpec::Kind::numeric) {
        out << "numeric " << f.name << ' ' << csv::format_double(f.scale) << '\n';
      } else {
        out << "categorical " << f.name << ' ' << f.vocabulary.size() << '\n';
        for (const auto& v : f.vocabulary) out << text::escape_line(v) << '\n';
      }
    }
    out << "end\n";
  }

  static FeatureSchema load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "fairaudit-feature-schema 1") {
      throw SchemaError("not a feature schema file");
    }
    std::vector<FeatureSpec> features;
    while (std::getline(in, line)) {
      if (line == "end") return FeatureSchema(std::move(features));
      const auto parts = text::split_list(line, ' ');
      if (parts.size() != 3) throw SchemaError("bad feature schema line: " + line);
      FeatureSpec f;
      f.name = parts[1];
      if (parts[0] == "numeric") {
        f.kind = FeatureSpec::Kind::numeric;
        auto s = csv::parse_double(parts[2]);
        if (!s || !(*s > 0.0)) throw SchemaError("bad numeric scale: " + line);
        f.scale = *s;
      } else if (parts[0] == "categorical") {
        auto count = csv::parse_int<std::size_t>(parts[2]);
        if (!count) throw SchemaError("bad vocabulary size: " + line);
        for (std::size_t i = 0; i < *count; ++i) {
          if (!std::getline(in, line)) throw SchemaError("truncated vocabulary for " + f.name);
          f.vocabulary.push_back(text::unescape_line(line));
        }
        if (!std::is_sorted(f.vocabulary.begin(), f.vocabulary.end())) {
          throw SchemaError("vocabulary for " + f.name + " is not sorted");
        }
      } else {
        throw SchemaError("unknown feature kind: " + parts[0]);
      }
      features.push_back(std::move(f));
    }
    throw SchemaError("feature schema missing 'end'");
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<FeatureSpec> features_;
  std::size_t width_ = 0;
};

namespace detail {

inline constexpr double kAgeScale = 100.0;

// Predictive features in encoding order; index 2 (age) is numeric.
inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "act", "section", "age_at_incident", "class_code", "judge", "law_enforcement_agency",
      "disposition_charged_offense_title"};
  return names;
}

inline const std::string& categorical_value(const CaseRecord& r, std::size_t feature) {
  switch (feature) {
    case 0: return r.act;
    case 1: return r.section;
    case 3: return r.class_code;
    case 4: return r.judge;
    case 5: return r.law_enforcement_agency;
    default: return r.disposition_charged_offense_title;
  }
}

}  // namespace detail

inline FeatureSchema build_schema(std::span<const CaseRecord> records) {
  if (records.empty()) throw DataError("cannot build a feature schema from zero records");
  std::vector<FeatureSpec> features;
  const auto& names = detail::feature_names();
  for (std::size_t f = 0; f < names.size(); ++f) {
    FeatureSpec spec;
    spec.name = names[f];
    if (f == 2) {
      spec.kind = FeatureSpec::Kind::numeric;
      spec.scale = detail::kAgeScale;
    } else {
      for (const auto& r : records) spec.vocabulary.push_back(detail::categorical_value(r, f));
      std::sort(spec.vocabulary.begin(), spec.vocabulary.end());
      spec.vocabulary.erase(std::unique(spec.vocabulary.begin(), spec.vocabulary.end()), spec.vocabulary.end());
    }
    features.push_back(std::move(spec));
  }
  return FeatureSchema(std::move(features));
}

// Encodes records under `schema`. Sample weights start at 1.
inline EncodedDataset encode(std::span<const CaseRecord> records, const FeatureSchema& schema,
                             GroupAttribute attr) {
  EncodedDataset d;
  d.X = SparseMatrix(schema.width());
  std::vector<SparseMatrix::Entry> entries;
  for (const auto& r : records) {
    entries.clear();
    for (std::size_t f = 0; f < schema.features().size(); ++f) {
      const auto& spec = schema.features()[f];
      if (spec.kind == FeatureSpec::Kind::numeric) {
        if (r.age_at_incident < 0 || r.age_at_incident > 100) throw DataError("age outside [0, 100]");
        const double v = r.age_at_incident / spec.scale;
        if (v != 0.0) entries.push_back({static_cast<std::uint32_t>(spec.offset), v});
      } else {
        const auto col = schema.column(f, detail::categorical_value(r, f));
        entries.push_back({static_cast<std::uint32_t>(col), 1.0});
      }
    }
    d.X.append_row(entries);
    d.y.push_back(r.outcome ? 1 : 0);
    d.group.push_back(group_of(r, attr));
    d.sample_weight.push_back(1.0);
  }
  return d;
}

// Seeded permutation of [0, n) cut at floor(fraction * n).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DataError("train fraction must lie in (0, 1)");
  if (n < 4) throw DataError("cannot split fewer than 4 examples");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
  return {std::move(train), std::move(test)};
}

inline std::pair<EncodedDataset, EncodedDataset> split(const EncodedDataset& d, double train_fraction,
                                                       std::uint64_t seed) {
  auto [train_idx, test_idx] = split_indices(d.size(), train_fraction, seed);
  auto train = d.subset(train_idx);
  auto test = d.subset(test_idx);
  train.provenance = {"train", seed};
  test.provenance = {"test", seed};
  return {std::move(train), std::move(test)};
}

// Row indices kept by outcome balancing: all of the minority class plus a
// seeded uniform subset of the majority class of the same size, ascending.
inline std::vector<std::size_t> balance_indices(std::span<const std::uint8_t> y, std::uint64_t seed) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw DataError("balancing needs both outcome classes");
  auto& major = pos.size() >= neg.size() ? pos : neg;
  auto& minor = pos.size() >= neg.size() ? neg : pos;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(major));
  major.resize(minor.size());
  std::vector<std::size_t> keep = minor;
  keep.insert(keep.end(), major.begin(), major.end());
  std::sort(keep.begin(), keep.end());
  return keep;
}

inline EncodedDataset balance(const EncodedDataset& d, std::uint64_t seed) {
  auto out = d.subset(balance_indices(d.y, seed));
  out.provenance.split += "+balanced";
  return out;
}

struct ClassWeights {
  double w_true = 1.0;
  double w_false = 1.0;

  // w_c = 1 / (2 f_c).
  static ClassWeights from_frequencies(double f_true, double f_false) {
    if (!(f_true > 0.0) || !(f_false > 0.0)) throw DataError("class frequencies must be positive");
    return {1.0 / (2.0 * f_true), 1.0 / (2.0 * f_false)};
  }

  double of(bool label) const { return label ? w_true : w_false; }
};

// Balanced weighting n / (2 n_c).
inline ClassWeights class_weights(std::span<const std::uint8_t> y) {
  std::size_t pos = 0;
  for (auto v : y) pos += v ? 1 : 0;
  const std::size_t neg = y.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("class weights need both outcome classes");
  const double n = static_cast<double>(y.size());
  return {n / (2.0 * static_cast<double>(pos)), n / (2.0 * static_cast<double>(neg))};
}

inline std::vector<double> sample_weights(std::span<const std::uint8_t> y, const ClassWeights& w) {
  std::vector<double> out;
  out.reserve(y.size());
  for (auto v : y) out.push_back(w.of(v != 0));
  return out;
}

// Sorts records into the canonical (case_id, charge_id, content) order that
// seeded splitting is applied to.
inline void canonical_sort(std::vector<CaseRecord>& records) {
  auto key = [](const CaseRecord& r) {
    return std::tie(r.case_id, r.charge_id, r.act, r.section, r.age_at_incident, r.class_code, r.judge,
                    r.law_enforcement_agency, r.disposition_charged_offense_title, r.race, r.gender,
                    r.crime_type, r.outcome_kind, r.outcome, r.incident_city);
  };
  std::stable_sort(records.begin(), records.end(),
                   [&](const CaseRecord& a, const CaseRecord& b) { return key(a) < key(b); });
}

inline void write_encoded_csv(std::ostream& out, const EncodedDataset& d, const FeatureSchema& schema) {
  csv::Row header = schema.column_names();
  header.insert(header.end(), {"y", "group", "sample_weight"});
  csv::write_row(out, header);
  for (std::size_t i = 0; i < d.size(); ++i) {
    csv::Row row;
    for (double v : d.X.dense_row(i)) row.push_back(csv::format_double(v));
    row.push_back(std::to_string(d.y[i]));
    row.push_back(std::to_string(d.group[i]));
    row.push_back(csv::format_double(d.sample_weight[i]));
    csv::write_row(out, row);
  }
}

}  // namespace fairaudit
