#pragma once

// Group fairness deltas and descriptive statistics over case records.
// Rates carry their numerator and denominator; an empty denominator yields
// an undefined rate rather than zero.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/ingestion.hpp"

namespace fairaudit {

struct Rate {
  std::size_t count = 0;
  std::size_t denominator = 0;

  std::optional<double> value() const {
    if (denominator == 0) return std::nullopt;
    return static_cast<double>(count) / static_cast<double>(denominator);
  }
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  Rate selection() const { return {tp + fp, total()}; }
  Rate tpr() const { return {tp, tp + fn}; }
  Rate fpr() const { return {fp, fp + tn}; }
};

struct GroupConfusion {
  std::array<ConfusionCounts, 2> group;
};

inline GroupConfusion group_confusion(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> y,
                                      std::span<const std::uint8_t> group) {
  if (predictions.size() != y.size() || group.size() != y.size()) {
    throw DataError("fairness metrics: prediction, label and group lengths differ");
  }
  GroupConfusion gc;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (group[i] > 1) throw DataError("group ids must be 0 or 1");
    auto& c = gc.group[group[i]];
    const bool p = predictions[i] != 0;
    if (y[i]) (p ? c.tp : c.fn)++;
    else (p ? c.fp : c.tn)++;
  }
  return gc;
}

struct FairnessReport {
  std::optional<double> delta_dp;
  std::optional<double> delta_tp;
  std::optional<double> delta_fp;
  GroupConfusion confusion;

  std::array<std::size_t, 2> group_sizes() const {
    return {confusion.group[0].total(), confusion.group[1].total()};
  }
};

namespace detail {
inline std::optional<double> abs_gap(const Rate& a, const Rate& b) {
  auto va = a.value();
  auto vb = b.value();
  if (!va || !vb) return std::nullopt;
  return std::abs(*va - *vb);
}
}  // namespace detail

// Delta_DP, Delta_TP and Delta_FP on hard predictions.
inline FairnessReport fairness_report(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> y,
                                      std::span<const std::uint8_t> group) {
  FairnessReport r;
  r.confusion = group_confusion(predictions, y, group);
  const auto& g0 = r.confusion.group[0];
  const auto& g1 = r.confusion.group[1];
  r.delta_dp = detail::abs_gap(g0.selection(), g1.selection());
  r.delta_tp = detail::abs_gap(g0.tpr(), g1.tpr());
  r.delta_fp = detail::abs_gap(g0.fpr(), g1.fpr());
  return r;
}

// Thresholds expectation-mode predictions (>= threshold is positive).
inline std::vector<std::uint8_t> threshold_predictions(std::span<const double> q, double threshold = 0.5) {
  std::vector<std::uint8_t> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] >= threshold ? 1 : 0;
  return out;
}

inline double accuracy(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> y,
                       std::span<const double> sample_weight = {}) {
  if (predictions.size() != y.size()) throw DataError("accuracy: length mismatch");
  if (!sample_weight.empty() && sample_weight.size() != y.size()) throw DataError("accuracy: weight length mismatch");
  double correct = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = sample_weight.empty() ? 1.0 : sample_weight[i];
    total += w;
    if ((predictions[i] != 0) == (y[i] != 0)) correct += w;
  }
  return total > 0.0 ? correct / total : 0.0;
}

namespace detail {
inline std::string format_optional(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string("undefined");
}
}  // namespace detail

// Rows: metric, value, denominator_0, denominator_1.
inline void write_report_csv(std::ostream& out, const FairnessReport& r, bool header = true) {
  if (header) csv::write_row(out, {"metric", "value", "denominator_0", "denominator_1"});
  const auto& g = r.confusion.group;
  auto row = [&](const char* name, const std::optional<double>& v, std::size_t d0, std::size_t d1) {
    csv::write_row(out, {name, detail::format_optional(v), std::to_string(d0), std::to_string(d1)});
  };
  row("delta_dp", r.delta_dp, g[0].selection().denominator, g[1].selection().denominator);
  row("delta_tp", r.delta_tp, g[0].tpr().denominator, g[1].tpr().denominator);
  row("delta_fp", r.delta_fp, g[0].fpr().denominator, g[1].fpr().denominator);
}

// ---- Descriptive statistics ---------------------------------------------------

using DemographicKey = std::tuple<CrimeType, Race, Gender>;

inline constexpr std::array<Race, 2> kRaces = {Race::white, Race::black};
inline constexpr std::array<Gender, 2> kGenders = {Gender::female, Gender::male};
inline constexpr std::array<CrimeType, 2> kCrimeTypes = {CrimeType::narcotics, CrimeType::theft};

struct ArrestCounts {
  std::map<DemographicKey, std::size_t> counts;
  // Black-male narcotics count over the largest other narcotics group.
  std::optional<double> black_male_narcotics_ratio;
};

inline ArrestCounts arrest_counts(std::span<const CaseRecord> records) {
  ArrestCounts out;
  for (auto c : kCrimeTypes)
    for (auto r : kRaces)
      for (auto g : kGenders) out.counts[{c, r, g}] = 0;
  for (const auto& rec : records) ++out.counts[{rec.crime_type, rec.race, rec.gender}];
  std::size_t next_largest = 0;
  for (auto r : kRaces)
    for (auto g : kGenders)
      if (!(r == Race::black && g == Gender::male)) {
        next_largest = std::max(next_largest, out.counts[{CrimeType::narcotics, r, g}]);
      }
  if (next_largest > 0) {
    out.black_male_narcotics_ratio =
        static_cast<double>(out.counts[{CrimeType::narcotics, Race::black, Gender::male}]) /
        static_cast<double>(next_largest);
  }
  return out;
}

struct OutcomeRate {
  CrimeType crime_type;
  OutcomeKind outcome_kind;
  Race race;
  Gender gender;
  Rate rate;
};

// P[outcome | crime, outcome kind, race, gender] for every demographic cell
// of each (crime, outcome kind) present. Empty cells keep an undefined rate.
inline std::vector<OutcomeRate> group_outcome_rates(std::span<const CaseRecord> records) {
  std::map<std::tuple<CrimeType, OutcomeKind, Race, Gender>, Rate> cells;
  std::map<std::pair<CrimeType, OutcomeKind>, bool> studies;
  for (const auto& rec : records) studies[{rec.crime_type, rec.outcome_kind}] = true;
  for (const auto& [study, unused] : studies)
    for (auto r : kRaces)
      for (auto g : kGenders) cells[{study.first, study.second, r, g}] = Rate{};
  for (const auto& rec : records) {
    auto& rate = cells[{rec.crime_type, rec.outcome_kind, rec.race, rec.gender}];
    ++rate.denominator;
    if (rec.outcome) ++rate.count;
  }
  std::vector<OutcomeRate> out;
  for (const auto& [key, rate] : cells) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), rate});
  }
  return out;
}

// Histogram bins keyed by their lower edge: [k, k + width).
using AgeHistogram = std::map<DemographicKey, std::map<int, std::size_t>>;

inline AgeHistogram age_histogram(std::span<const CaseRecord> records, int bin_width = 1) {
  if (bin_width < 1) throw DataError("bin width must be >= 1");
  AgeHistogram out;
  for (const auto& rec : records) {
    const int bin = (rec.age_at_incident / bin_width) * bin_width;
    ++out[{rec.crime_type, rec.race, rec.gender}][bin];
  }
  return out;
}

struct CityCounts {
  std::map<std::string, std::array<std::size_t, 2>> counts;  // indexed by CrimeType
  std::array<std::optional<double>, 2> median;               // over cities with a nonzero count

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& [city, c] : counts) t += c[0] + c[1];
    return t;
  }

  // Share of all arrests in the `k` cities with the most arrests.
  std::optional<double> top_k_coverage(std::size_t k) const {
    std::vector<std::size_t> totals;
    for (const auto& [city, c] : counts) totals.push_back(c[0] + c[1]);
    std::sort(totals.rbegin(), totals.rend());
    std::size_t covered = 0;
    for (std::size_t i = 0; i < std::min(k, totals.size()); ++i) covered += totals[i];
    const std::size_t t = total();
    if (t == 0) return std::nullopt;
    return static_cast<double>(covered) / static_cast<double>(t);
  }
};

inline std::optional<double> median_of(std::vector<std::size_t> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return static_cast<double>(values[n / 2]);
  return 0.5 * static_cast<double>(values[n / 2 - 1] + values[n / 2]);
}

inline CityCounts city_counts(std::span<const CaseRecord> records) {
  CityCounts out;
  for (const auto& rec : records) ++out.counts[rec.incident_city][static_cast<std::size_t>(rec.crime_type)];
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<std::size_t> nonzero;
    for (const auto& [city, counts] : out.counts) {
      if (counts[c] > 0) nonzero.push_back(counts[c]);
    }
    out.median[c] = median_of(std::move(nonzero));
  }
  return out;
}

// ---- Tidy CSV writers -----------------------------------------------------------

inline void write_arrest_counts_csv(std::ostream& out, const ArrestCounts& a) {
  csv::write_row(out, {"crime_type", "race", "gender", "count"});
  for (const auto& [key, n] : a.counts) {
    csv::write_row(out, {to_string(std::get<0>(key)), to_string(std::get<1>(key)), to_string(std::get<2>(key)),
                         std::to_string(n)});
  }
}

inline void write_outcome_rates_csv(std::ostream& out, const std::vector<OutcomeRate>& rates) {
  csv::write_row(out, {"crime_type", "outcome_kind", "race", "gender", "positives", "total", "rate"});
  for (const auto& r : rates) {
    csv::write_row(out, {to_string(r.crime_type), to_string(r.outcome_kind), to_string(r.race), to_string(r.gender),
                         std::to_string(r.rate.count), std::to_string(r.rate.denominator),
                         detail::format_optional(r.rate.value())});
  }
}

inline void write_age_histogram_csv(std::ostream& out, const AgeHistogram& h, int bin_width) {
  csv::write_row(out, {"crime_type", "race", "gender", "bin_start", "bin_end", "count"});
  for (const auto& [key, bins] : h) {
    for (const auto& [start, n] : bins) {
      csv::write_row(out, {to_string(std::get<0>(key)), to_string(std::get<1>(key)), to_string(std::get<2>(key)),
                           std::to_string(start), std::to_string(start + bin_width), std::to_string(n)});
    }
  }
}

inline void write_city_counts_csv(std::ostream& out, const CityCounts& c) {
  csv::write_row(out, {"incident_city", "narcotics", "theft"});
  for (const auto& [city, n] : c.counts) csv::write_row(out, {city, std::to_string(n[0]), std::to_string(n[1])});
}

// Scalar summaries: arrest ratio, city medians and top-30 coverage.
inline void write_stats_summary_csv(std::ostream& out, const ArrestCounts& a, const CityCounts& c) {
  csv::write_row(out, {"statistic", "value"});
  csv::write_row(out, {"black_male_narcotics_ratio_to_next_largest", detail::format_optional(a.black_male_narcotics_ratio)});
  csv::write_row(out, {"city_median_narcotics", detail::format_optional(c.median[0])});
  csv::write_row(out, {"city_median_theft", detail::format_optional(c.median[1])});
  csv::write_row(out, {"city_count", std::to_string(c.counts.size())});
  csv::write_row(out, {"top30_city_coverage", detail::format_optional(c.top_k_coverage(30))});
}

}  // namespace fairaudit
