#pragma once

// Study-grid orchestration: one AuditCell per (crime, outcome, model,
// mitigation, balancing, protected attribute) configuration, evaluated on a
// held-out split, plus a seeded synthetic case generator and renderers for
// the Delta_DP / Delta_TP / Delta_FP tables.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "fairaudit/config.hpp"
#include "fairaudit/csv.hpp"
#include "fairaudit/encoding.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/fair_reduction.hpp"
#include "fairaudit/ingestion.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/models.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

enum class Mitigation { none, dp, eodds, eopp };

inline constexpr std::array<Mitigation, 4> kMitigations = {Mitigation::none, Mitigation::dp, Mitigation::eodds,
                                                           Mitigation::eopp};

inline const char* to_string(Mitigation m) {
  switch (m) {
    case Mitigation::none: return "none";
    case Mitigation::dp: return "dp";
    case Mitigation::eodds: return "eodds";
    default: return "eopp";
  }
}

inline std::optional<Mitigation> parse_mitigation(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "none" || f == "baseline") return Mitigation::none;
  if (auto k = parse_constraint_kind(f)) {
    switch (*k) {
      case ConstraintKind::demographic_parity: return Mitigation::dp;
      case ConstraintKind::equalized_odds: return Mitigation::eodds;
      case ConstraintKind::equal_opportunity: return Mitigation::eopp;
    }
  }
  return std::nullopt;
}

inline ConstraintKind constraint_of(Mitigation m) {
  switch (m) {
    case Mitigation::dp: return ConstraintKind::demographic_parity;
    case Mitigation::eodds: return ConstraintKind::equalized_odds;
    case Mitigation::eopp: return ConstraintKind::equal_opportunity;
    default: throw DataError("baseline has no fairness constraint");
  }
}

enum class ClassWeighting { none, balanced };

// How a mitigated cell turns its mixture into hard test labels: one seeded
// draw per example (the randomized classifier itself), or the mixture
// expectation thresholded at 0.5.
enum class Evaluation { sample, threshold };

inline const char* to_string(Evaluation e) { return e == Evaluation::sample ? "sample" : "threshold"; }

inline std::optional<Evaluation> parse_evaluation(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "sample") return Evaluation::sample;
  if (f == "threshold") return Evaluation::threshold;
  return std::nullopt;
}

struct StudyConfig {
  CrimeType crime_type = CrimeType::narcotics;
  OutcomeKind outcome_kind = OutcomeKind::charge_reduction;
  ModelKind model = ModelKind::logistic;
  Mitigation mitigation = Mitigation::none;
  bool balanced = false;
  GroupAttribute group_attribute = GroupAttribute::race;
  std::uint64_t seed = 0;
  TrainConfig train;
  ReductionConfig reduction;  // ignored when mitigation == none
  // Balanced class weights for logistic regression, unit weights for
  // boosting, unless overridden.
  std::optional<ClassWeighting> class_weighting;
  Evaluation evaluation = Evaluation::sample;

  ClassWeighting effective_weighting() const {
    if (class_weighting) return *class_weighting;
    return model == ModelKind::logistic ? ClassWeighting::balanced : ClassWeighting::none;
  }

  std::string dataset_key() const {
    return std::string(to_string(crime_type)) + "." + to_string(outcome_kind) + "." + to_string(group_attribute);
  }

  // Stable, filename-safe identity of the cell within a grid.
  std::string key() const {
    return std::string(to_string(group_attribute)) + "." + to_string(outcome_kind) + "." + to_string(model) + "." +
           to_string(crime_type) + "." + to_string(mitigation) + "." + (balanced ? "balanced" : "unbalanced");
  }

  // Everything that influences the result, in canonical text form.
  std::string canonical() const {
    std::ostringstream s;
    s << key() << "|seed=" << seed << "|weighting=" << (effective_weighting() == ClassWeighting::balanced ? "b" : "n")
      << "|train=" << train.max_iter << ',' << csv::format_double(train.tolerance) << ','
      << csv::format_double(train.learning_rate) << ',' << train.n_stages << ',' << csv::format_double(train.l2)
      << ',' << csv::format_double(train.gamma_bound) << ',' << csv::format_double(train.decision_threshold);
    if (mitigation != Mitigation::none) {
      s << "|reduction=" << csv::format_double(reduction.epsilon) << ',' << reduction.max_rounds << ','
        << csv::format_double(reduction.eg_rate) << ',' << csv::format_double(reduction.lambda_bound) << ','
        << csv::format_double(reduction.gap_tol) << ','
        << (reduction.selection == MixtureSelection::uniform ? "uniform" : "best_gap") << "|evaluation="
        << to_string(evaluation);
    }
    return s.str();
  }
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t dataset_hash(const EncodedDataset& d, std::uint64_t h = 0xcbf29ce484222325ULL) {
  auto mix = [&](const void* p, std::size_t n) { h = fnv1a(std::string_view(static_cast<const char*>(p), n), h); };
  const auto rows = d.size();
  const auto cols = d.width();
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (const auto& e : d.X.row(i)) {
      mix(&e.col, sizeof e.col);
      mix(&e.value, sizeof e.value);
    }
    mix(&d.y[i], 1);
    mix(&d.group[i], 1);
    mix(&d.sample_weight[i], sizeof(double));
  }
  return h;
}

struct TraceSummary {
  int rounds = 0;
  int selected_rounds = 0;
  bool converged = false;
  double final_gap = 0.0;
  double final_max_violation = 0.0;
};

struct AuditCell {
  StudyConfig config;
  FairnessReport report;
  double accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::string fingerprint;
  std::optional<TraceSummary> trace_summary;
  std::optional<ReductionResult> reduction;  // full trace and mixture, mitigated cells only
  std::optional<ConstraintSet> constraints;  // as built on the training data
  std::optional<Model> model;                // baseline cells only
};

// Trains per `config` on `train` (balanced first when requested) and reports
// fairness on `test`. Deterministic given the config seed.
inline AuditCell run_cell(const StudyConfig& config, const EncodedDataset& train, const EncodedDataset& test) {
  const std::uint64_t data_hash = dataset_hash(test, dataset_hash(train));
  const std::string fingerprint = hex64(fnv1a(config.canonical() + "|data=" + hex64(data_hash)));
  try {
    if (train.width() != test.width()) throw DataError("train and test encodings differ in width");
    EncodedDataset fit =
        config.balanced ? balance(train, derive_seed(config.seed, "balance/" + config.dataset_key())) : train;
    if (config.effective_weighting() == ClassWeighting::balanced) {
      fit.sample_weight = sample_weights(fit.y, class_weights(fit.y));
    } else {
      fit.sample_weight.assign(fit.size(), 1.0);
    }

    AuditCell cell;
    cell.config = config;
    cell.fingerprint = fingerprint;
    cell.train_size = fit.size();
    cell.test_size = test.size();

    std::vector<std::uint8_t> predictions;
    if (config.mitigation == Mitigation::none) {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seed, config.key());
      Model m = train_model(config.model, fit, tc);
      predictions = predict_labels(m, test.X, tc.decision_threshold);
      cell.model = std::move(m);
    } else {
      ReductionConfig rc = config.reduction;
      rc.base_learner = config.model;
      rc.train = config.train;
      rc.seed = derive_seed(config.seed, config.key());
      rc.train.seed = rc.seed;
      const FairnessConstraint constraint{constraint_of(config.mitigation), rc.epsilon};
      auto result = run_exponentiated_gradient(fit, constraint, rc);
      cell.constraints = build_constraints(constraint.kind, fit, constraint.epsilon);
      if (config.evaluation == Evaluation::threshold) {
        predictions = threshold_predictions(result.classifier.expectation(test.X), 0.5);
      } else {
        Rng rng(derive_seed(rc.seed, "evaluate"));
        predictions.resize(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) predictions[i] = result.classifier.sample(test.X, i, rng) ? 1 : 0;
      }
      TraceSummary ts;
      ts.rounds = static_cast<int>(result.trace.size());
      ts.selected_rounds = result.selected_rounds;
      ts.converged = result.converged;
      ts.final_gap = result.trace.back().gap;
      ts.final_max_violation = result.trace.back().mixture_max_violation;
      cell.trace_summary = ts;
      cell.reduction = std::move(result);
    }
    cell.report = fairness_report(predictions, test.y, test.group);
    cell.accuracy = accuracy(predictions, test.y);
    return cell;
  } catch (const Error& e) {
    throw Error("cell " + config.key() + " [" + fingerprint + "]: " + e.what());
  }
}

// ---- Grid ------------------------------------------------------------------------

struct CellOutcome {
  StudyConfig config;
  std::optional<AuditCell> cell;
  std::string error;  // set when the cell failed

  bool ok() const { return cell.has_value(); }
};

struct AuditTable {
  std::map<std::string, CellOutcome> cells;  // keyed by StudyConfig::key()

  std::size_t succeeded() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.second.ok(); }));
  }
  std::size_t failed() const { return cells.size() - succeeded(); }
};

using DataRegistry = std::map<std::pair<CrimeType, OutcomeKind>, std::vector<CaseRecord>>;

inline DataRegistry make_registry(const std::vector<CaseRecord>& records) {
  DataRegistry reg;
  for (const auto& r : records) reg[{r.crime_type, r.outcome_kind}].push_back(r);
  return reg;
}

enum class BalanceStage { after_split, before_split };

struct GridOptions {
  std::uint64_t master_seed = 0;
  double train_fraction = 0.75;
  BalanceStage balance_stage = BalanceStage::after_split;
  int jobs = 1;
};

struct PreparedSplit {
  FeatureSchema schema;
  EncodedDataset train;
  EncodedDataset test;
};

// Canonical sort, seeded split, schema from the training records only, encode.
// With `prebalance`, outcome balancing is applied to the whole record set
// before splitting.
inline PreparedSplit prepare_split(std::vector<CaseRecord> records, GroupAttribute attr, double train_fraction,
                                   std::uint64_t seed, bool prebalance = false) {
  canonical_sort(records);
  if (prebalance) {
    std::vector<std::uint8_t> y;
    for (const auto& r : records) y.push_back(r.outcome ? 1 : 0);
    std::vector<CaseRecord> kept;
    for (std::size_t i : balance_indices(y, derive_seed(seed, "prebalance"))) kept.push_back(records[i]);
    records = std::move(kept);
  }
  auto [train_idx, test_idx] = split_indices(records.size(), train_fraction, derive_seed(seed, "split"));
  std::vector<CaseRecord> train_records;
  std::vector<CaseRecord> test_records;
  for (std::size_t i : train_idx) train_records.push_back(records[i]);
  for (std::size_t i : test_idx) test_records.push_back(records[i]);
  PreparedSplit out;
  out.schema = build_schema(train_records);
  out.train = encode(train_records, out.schema, attr);
  out.test = encode(test_records, out.schema, attr);
  out.train.provenance = {"train", seed};
  out.test.provenance = {"test", seed};
  return out;
}

// Runs every config; failures are recorded per cell and never abort the grid.
// `on_cell` (optional) is invoked once per finished cell in key order.
inline AuditTable run_grid(const std::vector<StudyConfig>& configs, const DataRegistry& registry,
                           const GridOptions& options,
                           const std::function<void(const CellOutcome&)>& on_cell = {}) {
  AuditTable table;
  std::vector<StudyConfig> unique;
  for (auto c : configs) {
    c.seed = options.master_seed;
    if (table.cells.emplace(c.key(), CellOutcome{c, std::nullopt, {}}).second) unique.push_back(c);
  }

  // Shared splits per dataset, prepared up front so workers only read them.
  std::map<std::string, std::optional<PreparedSplit>> splits;
  std::map<std::string, std::string> split_errors;
  auto split_key = [&](const StudyConfig& c) {
    const bool pre = c.balanced && options.balance_stage == BalanceStage::before_split;
    return c.dataset_key() + (pre ? ".prebalanced" : "");
  };
  for (const auto& c : unique) {
    const auto k = split_key(c);
    if (splits.contains(k) || split_errors.contains(k)) continue;
    try {
      auto it = registry.find({c.crime_type, c.outcome_kind});
      if (it == registry.end() || it->second.empty()) {
        throw DataError(std::string("no case records for ") + to_string(c.crime_type) + "/" + to_string(c.outcome_kind));
      }
      const bool pre = c.balanced && options.balance_stage == BalanceStage::before_split;
      splits[k] = prepare_split(it->second, c.group_attribute, options.train_fraction,
                                derive_seed(options.master_seed, "data/" + c.dataset_key()), pre);
    } catch (const Error& e) {
      split_errors[k] = e.what();
    }
  }

  std::vector<CellOutcome> results(unique.size());
  auto work = [&](std::size_t i) {
    const auto& c = unique[i];
    results[i].config = c;
    const auto k = split_key(c);
    if (auto e = split_errors.find(k); e != split_errors.end()) {
      results[i].error = e->second;
      return;
    }
    const auto& prepared = *splits.at(k);
    // Balancing already happened before the split in that mode.
    StudyConfig effective = c;
    if (c.balanced && options.balance_stage == BalanceStage::before_split) effective.balanced = false;
    try {
      auto cell = run_cell(effective, prepared.train, prepared.test);
      cell.config = c;
      results[i].cell = std::move(cell);
    } catch (const Error& e) {
      results[i].error = e.what();
    }
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < unique.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < unique.size(); i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& r : results) table.cells[r.config.key()] = std::move(r);
  if (on_cell) {
    for (const auto& [key, outcome] : table.cells) on_cell(outcome);
  }
  return table;
}

// Full cross product of the given axes.
inline std::vector<StudyConfig> cross_product(const std::vector<CrimeType>& crimes,
                                              const std::vector<OutcomeKind>& outcomes,
                                              const std::vector<ModelKind>& models,
                                              const std::vector<Mitigation>& mitigations,
                                              const std::vector<bool>& balanced,
                                              const std::vector<GroupAttribute>& attrs, const StudyConfig& base) {
  std::vector<StudyConfig> out;
  for (auto a : attrs)
    for (auto c : crimes)
      for (auto o : outcomes)
        for (auto m : models)
          for (auto mit : mitigations)
            for (bool b : balanced) {
              StudyConfig s = base;
              s.group_attribute = a;
              s.crime_type = c;
              s.outcome_kind = o;
              s.model = m;
              s.mitigation = mit;
              s.balanced = b;
              out.push_back(s);
            }
  return out;
}

// ---- Synthetic data -----------------------------------------------------------

// Synthetic case generator. The protected attribute sets the outcome base
// rate (base_rate +/- gap / 2); informative features follow the outcome, and
// the law-enforcement agency acts as a proxy for the protected group.
struct SynthSpec {
  std::size_t n = 4000;
  double group1_fraction = 0.5;
  double base_rate = 0.5;
  double gap = 0.3;           // P[Y=1 | A=0] - P[Y=1 | A=1]
  double label_noise = 0.3;   // chance a record's informative features ignore the outcome
  double signal = 0.7;        // chance an informative feature takes its outcome-matched value
  double proxy_strength = 0.9;
  GroupAttribute protected_attribute = GroupAttribute::race;
  CrimeType crime_type = CrimeType::narcotics;
  OutcomeKind outcome_kind = OutcomeKind::charge_reduction;
  int n_judges = 12;
  int n_agencies = 6;

  double rate(int group) const { return group == 0 ? base_rate + gap / 2.0 : base_rate - gap / 2.0; }

  std::array<std::size_t, 2> group_sizes() const {
    const auto n1 = static_cast<std::size_t>(std::llround(group1_fraction * static_cast<double>(n)));
    return {n - n1, n1};
  }

  // Positives per group; rounding makes the realised gap exact up to 1/n_g.
  std::array<std::size_t, 2> positives() const {
    const auto sizes = group_sizes();
    return {static_cast<std::size_t>(std::llround(rate(0) * static_cast<double>(sizes[0]))),
            static_cast<std::size_t>(std::llround(rate(1) * static_cast<double>(sizes[1])))};
  }

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw DataError(std::string("synthetic spec: ") + what + " outside [0, 1]");
    };
    prob(group1_fraction, "group1_fraction");
    prob(base_rate, "base_rate");
    prob(gap, "gap");
    prob(label_noise, "label_noise");
    prob(signal, "signal");
    prob(proxy_strength, "proxy_strength");
    prob(rate(0), "P[Y=1 | A=0]");
    prob(rate(1), "P[Y=1 | A=1]");
    if (n_judges < 2 || n_agencies < 2) throw DataError("synthetic spec: need at least 2 judges and 2 agencies");
    const auto sizes = group_sizes();
    const auto pos = positives();
    for (int a = 0; a < 2; ++a) {
      if (pos[a] < 1 || sizes[a] - pos[a] < 1) {
        throw DataError("synthetic spec: every (group, outcome) cell needs at least one record");
      }
    }
  }

  static SynthSpec from_config(const KeyValueConfig& cfg, const std::string& prefix = "") {
    SynthSpec s;
    s.n = static_cast<std::size_t>(cfg.get_int(prefix + "n", static_cast<long long>(s.n)));
    s.group1_fraction = cfg.get_double(prefix + "group1_fraction", s.group1_fraction);
    s.base_rate = cfg.get_double(prefix + "base_rate", s.base_rate);
    s.gap = cfg.get_double(prefix + "gap", s.gap);
    s.label_noise = cfg.get_double(prefix + "label_noise", s.label_noise);
    s.signal = cfg.get_double(prefix + "signal", s.signal);
    s.proxy_strength = cfg.get_double(prefix + "proxy_strength", s.proxy_strength);
    s.n_judges = static_cast<int>(cfg.get_int(prefix + "n_judges", s.n_judges));
    s.n_agencies = static_cast<int>(cfg.get_int(prefix + "n_agencies", s.n_agencies));
    if (auto v = cfg.find(prefix + "protected_attribute")) {
      auto a = parse_group_attribute(*v);
      if (!a) throw SchemaError("bad protected_attribute '" + *v + "'");
      s.protected_attribute = *a;
    }
    if (auto v = cfg.find(prefix + "crime_type")) {
      auto c = parse_crime_type(*v);
      if (!c) throw SchemaError("bad crime_type '" + *v + "'");
      s.crime_type = *c;
    }
    if (auto v = cfg.find(prefix + "outcome_kind")) {
      auto o = parse_outcome_kind(*v);
      if (!o) throw SchemaError("bad outcome_kind '" + *v + "'");
      s.outcome_kind = *o;
    }
    return s;
  }
};

inline std::vector<CaseRecord> generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto sizes = spec.group_sizes();
  const auto pos = spec.positives();

  // (group, outcome) per record, in a seeded random order.
  std::vector<std::pair<int, int>> cells;
  for (int a = 0; a < 2; ++a) {
    for (std::size_t i = 0; i < sizes[a]; ++i) cells.emplace_back(a, i < pos[a] ? 1 : 0);
  }
  rng.shuffle(std::span<std::pair<int, int>>(cells));

  const bool narcotics = spec.crime_type == CrimeType::narcotics;
  const std::vector<std::string> acts = narcotics ? std::vector<std::string>{"720 ILCS 570", "720 ILCS 646"}
                                                  : std::vector<std::string>{"720 ILCS 5"};
  const std::vector<std::string> sections = narcotics
      ? std::vector<std::string>{"402(c)", "401(d)", "402(a)(2)", "401(c)(2)"}
      : std::vector<std::string>{"16-1(a)(1)", "16-25(a)(1)", "16-1(a)(4)", "16A-3(a)"};
  const std::vector<std::string> titles = narcotics
      ? std::vector<std::string>{"POSSESSION OF A CONTROLLED SUBSTANCE", "MFG/DEL CANNABIS",
                                 "POSSESSION OF CANNABIS", "MFG/DEL HEROIN"}
      : std::vector<std::string>{"RETAIL THEFT", "THEFT", "THEFT FROM PERSON", "THEFT/LABOR/SERVICES/PROPERTY"};
  const std::vector<std::string> classes = {"1", "2", "3", "4"};
  const std::vector<std::string> cities = {"CHICAGO", "CHICAGO", "CHICAGO", "EVANSTON", "CICERO", "SKOKIE",
                                           "MAYWOOD", "HARVEY"};

  // Index drawn from the outcome-matched half with probability `signal`.
  auto informative_pick = [&](std::size_t count, int outcome, bool informative) -> std::size_t {
    if (!informative) return static_cast<std::size_t>(rng.below(count));
    const std::size_t half = count / 2;
    const bool matched = rng.bernoulli(spec.signal);
    const bool low_half = (outcome == 1) == matched;
    return low_half ? static_cast<std::size_t>(rng.below(half))
                    : half + static_cast<std::size_t>(rng.below(count - half));
  };

  std::vector<CaseRecord> out;
  out.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [group, outcome] = cells[i];
    const bool informative = !rng.bernoulli(spec.label_noise);
    CaseRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "SYN-%07zu", i + 1);
    r.case_id = id;
    r.charge_id = "1";
    r.act = acts[rng.below(acts.size())];
    r.section = sections[informative_pick(sections.size(), outcome, informative)];
    r.class_code = classes[informative_pick(classes.size(), outcome, informative)];
    r.judge = "JUDGE " + std::to_string(1 + informative_pick(static_cast<std::size_t>(spec.n_judges), outcome, informative));
    r.disposition_charged_offense_title = titles[informative_pick(titles.size(), outcome, informative)];
    {
      const auto agencies = static_cast<std::size_t>(spec.n_agencies);
      const std::size_t half = agencies / 2;
      const bool own = rng.bernoulli(spec.proxy_strength);
      const bool low = (group == 0) == own;
      const std::size_t idx = low ? rng.below(half) : half + rng.below(agencies - half);
      r.law_enforcement_agency = "AGENCY " + std::to_string(idx + 1);
    }
    const double mean_age = group == 0 ? 33.0 : 28.0;
    r.age_at_incident = static_cast<int>(std::clamp(std::lround(rng.normal(mean_age, 9.0)), 18L, 80L));
    const int other = rng.bernoulli(0.5) ? 1 : 0;
    if (spec.protected_attribute == GroupAttribute::race) {
      r.race = group ? Race::black : Race::white;
      r.gender = other ? Gender::male : Gender::female;
    } else {
      r.gender = group ? Gender::male : Gender::female;
      r.race = other ? Race::black : Race::white;
    }
    r.crime_type = spec.crime_type;
    r.outcome_kind = spec.outcome_kind;
    r.outcome = outcome == 1;
    r.incident_city = cities[rng.below(cities.size())];
    out.push_back(std::move(r));
  }
  return out;
}

// ---- Per-cell files ---------------------------------------------------------------

inline std::string cell_status(const CellOutcome& c) { return c.ok() ? "ok" : "failed"; }

// metric,value,denominator_0,denominator_1 rows; config and status rows
// leave the denominators empty.
inline void write_cell_csv(std::ostream& out, const CellOutcome& c) {
  csv::write_row(out, {"metric", "value", "denominator_0", "denominator_1"});
  auto kv = [&](const std::string& k, const std::string& v) { csv::write_row(out, {k, v, "", ""}); };
  const auto& cfg = c.config;
  kv("config.crime_type", to_string(cfg.crime_type));
  kv("config.outcome_kind", to_string(cfg.outcome_kind));
  kv("config.model", to_string(cfg.model));
  kv("config.mitigation", to_string(cfg.mitigation));
  kv("config.balanced", cfg.balanced ? "true" : "false");
  kv("config.group_attribute", to_string(cfg.group_attribute));
  kv("config.seed", std::to_string(cfg.seed));
  kv("config.evaluation", to_string(cfg.evaluation));
  kv("status", cell_status(c));
  if (!c.ok()) {
    kv("error", c.error);
    return;
  }
  const auto& cell = *c.cell;
  kv("fingerprint", cell.fingerprint);
  write_report_csv(out, cell.report, false);
  kv("accuracy", csv::format_double(cell.accuracy));
  kv("train_size", std::to_string(cell.train_size));
  kv("test_size", std::to_string(cell.test_size));
  if (cell.trace_summary) {
    kv("reduction.rounds", std::to_string(cell.trace_summary->rounds));
    kv("reduction.selected_rounds", std::to_string(cell.trace_summary->selected_rounds));
    kv("reduction.converged", cell.trace_summary->converged ? "true" : "false");
    kv("reduction.final_gap", csv::format_double(cell.trace_summary->final_gap));
    kv("reduction.final_max_violation", csv::format_double(cell.trace_summary->final_max_violation));
  }
}

// Reads back what `render_table` needs: config, status and the three deltas.
inline CellOutcome read_cell_csv(std::istream& in, const std::string& origin = "<cell>") {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row) || row.empty() || row[0] != "metric") throw SchemaError(origin + ": not a cell file");
  std::map<std::string, std::string> values;
  while (reader.next(row)) {
    if (row.size() < 2) continue;
    values[row[0]] = row[1];
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = values.find(k);
    if (it == values.end()) throw SchemaError(origin + ": missing row '" + k + "'");
    return it->second;
  };
  CellOutcome c;
  auto crime = parse_crime_type(need("config.crime_type"));
  auto kind = parse_outcome_kind(need("config.outcome_kind"));
  auto model = parse_model_kind(need("config.model"));
  auto mit = parse_mitigation(need("config.mitigation"));
  auto attr = parse_group_attribute(need("config.group_attribute"));
  auto seed = csv::parse_int<std::uint64_t>(need("config.seed"));
  if (!crime || !kind || !model || !mit || !attr || !seed) throw SchemaError(origin + ": bad config rows");
  c.config.crime_type = *crime;
  c.config.outcome_kind = *kind;
  c.config.model = *model;
  c.config.mitigation = *mit;
  c.config.balanced = need("config.balanced") == "true";
  c.config.group_attribute = *attr;
  c.config.seed = *seed;
  if (values.contains("config.evaluation")) {
    auto ev = parse_evaluation(values["config.evaluation"]);
    if (!ev) throw SchemaError(origin + ": bad config.evaluation");
    c.config.evaluation = *ev;
  }
  if (need("status") != "ok") {
    c.error = values.contains("error") ? values["error"] : "failed";
    return c;
  }
  AuditCell cell;
  cell.config = c.config;
  cell.fingerprint = need("fingerprint");
  auto delta = [&](const std::string& k) -> std::optional<double> {
    const auto& v = need(k);
    if (v == "undefined") return std::nullopt;
    auto d = csv::parse_double(v);
    if (!d) throw SchemaError(origin + ": bad value for " + k);
    return d;
  };
  cell.report.delta_dp = delta("delta_dp");
  cell.report.delta_tp = delta("delta_tp");
  cell.report.delta_fp = delta("delta_fp");
  cell.accuracy = delta("accuracy").value_or(0.0);
  c.cell = std::move(cell);
  return c;
}

// ---- Table rendering -----------------------------------------------------------

enum class TableFormat { text, csv };

namespace detail {

inline const char* model_title(ModelKind m) {
  return m == ModelKind::logistic ? "Logistic Regression" : "Gradient Boosting";
}

inline const char* outcome_title(OutcomeKind o) {
  return o == OutcomeKind::charge_reduction ? "Charge reduction" : "Bond";
}

inline const char* kMissing = "—";

}  // namespace detail

// One table per (protected attribute, outcome, model); rows are the three
// deltas per crime type, columns Baseline / DP / EOdd / EOpp x Unbalanced /
// Balanced. Text rounds to 3 decimals, CSV keeps full precision. Missing or
// failed cells render as an em dash (text) or empty (CSV).
inline std::string render_table(const AuditTable& table, TableFormat format) {
  using TableKey = std::tuple<GroupAttribute, OutcomeKind, ModelKind>;
  std::map<TableKey, std::map<CrimeType, std::map<std::pair<Mitigation, bool>, const CellOutcome*>>> grouped;
  for (const auto& [key, outcome] : table.cells) {
    const auto& c = outcome.config;
    grouped[{c.group_attribute, c.outcome_kind, c.model}][c.crime_type][{c.mitigation, c.balanced}] = &outcome;
  }
  const char* metric_names[3] = {"delta_dp", "delta_tp", "delta_fp"};
  auto metric = [](const FairnessReport& r, int m) {
    return m == 0 ? r.delta_dp : m == 1 ? r.delta_tp : r.delta_fp;
  };

  std::ostringstream out;
  if (format == TableFormat::csv) {
    csv::Row header = {"group_attribute", "outcome_kind", "model", "crime_type", "metric"};
    for (auto mit : kMitigations) {
      for (bool b : {false, true}) header.push_back(std::string(to_string(mit)) + (b ? "_balanced" : "_unbalanced"));
    }
    csv::write_row(out, header);
  }
  for (const auto& [tkey, crimes] : grouped) {
    const auto [attr, kind, model] = tkey;
    if (format == TableFormat::text) {
      out << detail::model_title(model) << " | " << detail::outcome_title(kind) << " | protected attribute: "
          << to_string(attr) << '\n';
      out << std::left << std::setw(22) << "";
      for (const char* t : {"Baseline", "Mitigated (DP)", "Mitigated (EOdd)", "Mitigated (EOpp)"}) {
        out << std::setw(24) << t;
      }
      out << '\n' << std::setw(22) << "";
      for (int i = 0; i < 4; ++i) out << std::setw(12) << "Unbalanced" << std::setw(12) << "Balanced";
      out << '\n';
    }
    for (const auto& [crime, cells] : crimes) {
      for (int m = 0; m < 3; ++m) {
        std::vector<std::string> values;
        for (auto mit : kMitigations) {
          for (bool b : {false, true}) {
            auto it = cells.find({mit, b});
            if (it == cells.end() || !it->second->ok()) {
              values.push_back(format == TableFormat::text ? detail::kMissing : "");
              continue;
            }
            auto v = metric(it->second->cell->report, m);
            if (!v) values.push_back("undefined");
            else values.push_back(format == TableFormat::text ? csv::format_fixed(*v, 3) : csv::format_double(*v));
          }
        }
        if (format == TableFormat::csv) {
          csv::Row row = {to_string(attr), to_string(kind), to_string(model), to_string(crime), metric_names[m]};
          row.insert(row.end(), values.begin(), values.end());
          csv::write_row(out, row);
        } else {
          out << std::setw(22) << (std::string(to_string(crime)) + " " + metric_names[m]);
          for (const auto& v : values) {
            // setw counts bytes; the em dash is three.
            const int pad = v == detail::kMissing ? 14 : 12;
            out << std::setw(pad) << v;
          }
          out << '\n';
        }
      }
    }
    if (format == TableFormat::text) out << '\n';
  }
  if (format == TableFormat::text) {
    for (const auto& [key, outcome] : table.cells) {
      if (!outcome.ok()) out << "failed: " << key << ": " << outcome.error << '\n';
    }
  }
  return out.str();
}

// ---- Grid config ---------------------------------------------------------------

// Parsed grid file. Cells come either from explicit `cell.<name> = crime,
// outcome, model, mitigation, balanced[, attribute]` lines or from the cross
// product of the axis lists.
struct GridSpec {
  std::vector<StudyConfig> configs;
  GridOptions options;
  std::vector<std::filesystem::path> data;
  std::optional<SynthSpec> synthetic;
};

namespace detail {

template <typename T, typename Parse>
std::vector<T> parse_axis(const KeyValueConfig& cfg, const std::string& key, const std::vector<std::string>& fallback,
                          Parse parse) {
  std::vector<T> out;
  for (const auto& v : cfg.get_list(key, fallback)) {
    auto p = parse(v);
    if (!p) throw SchemaError(cfg.origin() + ": bad value '" + v + "' in " + key);
    if (std::find(out.begin(), out.end(), *p) == out.end()) out.push_back(*p);
  }
  return out;
}

inline std::optional<bool> parse_balanced(std::string_view v) {
  const auto f = text::fold(v);
  if (f == "true" || f == "balanced" || f == "yes" || f == "1") return true;
  if (f == "false" || f == "unbalanced" || f == "no" || f == "0") return false;
  return std::nullopt;
}

}  // namespace detail

inline GridSpec parse_grid(const KeyValueConfig& cfg) {
  GridSpec g;
  StudyConfig base;
  auto& t = base.train;
  t.max_iter = static_cast<int>(cfg.get_int("train.max_iter", t.max_iter));
  t.tolerance = cfg.get_double("train.tolerance", t.tolerance);
  t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
  t.n_stages = static_cast<int>(cfg.get_int("train.n_stages", t.n_stages));
  t.l2 = cfg.get_double("train.l2", t.l2);
  t.gamma_bound = cfg.get_double("train.gamma_bound", t.gamma_bound);
  t.decision_threshold = cfg.get_double("train.decision_threshold", t.decision_threshold);
  if (auto w = cfg.find("train.class_weighting")) {
    const auto f = text::fold(*w);
    if (f == "balanced") base.class_weighting = ClassWeighting::balanced;
    else if (f == "none") base.class_weighting = ClassWeighting::none;
    else if (f != "auto") throw SchemaError(cfg.origin() + ": train.class_weighting must be auto, balanced or none");
  }
  try {
    t.validate();
  } catch (const DataError& e) {
    throw SchemaError(cfg.origin() + ": " + e.what());
  }
  if (auto ev = cfg.find("evaluation")) {
    auto e = parse_evaluation(*ev);
    if (!e) throw SchemaError(cfg.origin() + ": evaluation must be sample or threshold");
    base.evaluation = *e;
  }
  auto& r = base.reduction;
  r.epsilon = cfg.get_double("reduction.epsilon", r.epsilon);
  r.max_rounds = static_cast<int>(cfg.get_int("reduction.max_rounds", r.max_rounds));
  r.eg_rate = cfg.get_double("reduction.eg_rate", r.eg_rate);
  r.lambda_bound = cfg.get_double("reduction.lambda_bound", r.lambda_bound);
  r.gap_tol = cfg.get_double("reduction.gap_tol", r.gap_tol);
  if (auto sel = cfg.find("reduction.selection")) {
    const auto f = text::fold(*sel);
    if (f == "uniform") r.selection = MixtureSelection::uniform;
    else if (f == "best_gap") r.selection = MixtureSelection::best_gap;
    else throw SchemaError(cfg.origin() + ": reduction.selection must be uniform or best_gap");
  }
  try {
    r.validate();
  } catch (const DataError& e) {
    throw SchemaError(cfg.origin() + ": " + e.what());
  }

  g.options.train_fraction = cfg.get_double("train_fraction", g.options.train_fraction);
  if (!(g.options.train_fraction > 0.0 && g.options.train_fraction < 1.0)) {
    throw SchemaError(cfg.origin() + ": train_fraction must be in (0, 1)");
  }
  const auto stage = text::fold(cfg.get("balance_stage", "after_split"));
  if (stage == "after_split") g.options.balance_stage = BalanceStage::after_split;
  else if (stage == "before_split") g.options.balance_stage = BalanceStage::before_split;
  else throw SchemaError(cfg.origin() + ": balance_stage must be after_split or before_split");

  const auto cell_keys = cfg.keys_with_prefix("cell.");
  if (!cell_keys.empty()) {
    for (const auto& k : cell_keys) {
      const auto parts = cfg.get_list(k, {});
      if (parts.size() != 5 && parts.size() != 6) {
        throw SchemaError(cfg.origin() + ": " + k + " needs crime, outcome, model, mitigation, balanced[, attribute]");
      }
      StudyConfig c = base;
      auto crime = parse_crime_type(parts[0]);
      auto kind = parse_outcome_kind(parts[1]);
      auto model = parse_model_kind(parts[2]);
      auto mit = parse_mitigation(parts[3]);
      auto bal = detail::parse_balanced(parts[4]);
      auto attr = parts.size() == 6 ? parse_group_attribute(parts[5]) : std::optional(GroupAttribute::race);
      if (!crime || !kind || !model || !mit || !bal || !attr) throw SchemaError(cfg.origin() + ": bad value in " + k);
      c.crime_type = *crime;
      c.outcome_kind = *kind;
      c.model = *model;
      c.mitigation = *mit;
      c.balanced = *bal;
      c.group_attribute = *attr;
      g.configs.push_back(c);
    }
  } else {
    auto crimes = detail::parse_axis<CrimeType>(cfg, "crimes", {"narcotics", "theft"}, parse_crime_type);
    auto outcomes = detail::parse_axis<OutcomeKind>(cfg, "outcomes", {"charge_reduction", "free_bond"},
                                                    parse_outcome_kind);
    auto models = detail::parse_axis<ModelKind>(cfg, "models", {"logistic", "gbstumps"}, parse_model_kind);
    auto mits = detail::parse_axis<Mitigation>(cfg, "mitigations", {"none", "dp", "eodds", "eopp"}, parse_mitigation);
    auto bals = detail::parse_axis<bool>(cfg, "balanced", {"false", "true"}, detail::parse_balanced);
    auto attrs = detail::parse_axis<GroupAttribute>(cfg, "group_attributes", {"race"}, parse_group_attribute);
    g.configs = cross_product(crimes, outcomes, models, mits, bals, attrs, base);
  }

  for (const auto& d : cfg.get_list("data", {})) g.data.push_back(cfg.resolve(d));
  if (!cfg.keys_with_prefix("synthetic.").empty()) g.synthetic = SynthSpec::from_config(cfg, "synthetic.");
  if (g.data.empty() && !g.synthetic) throw SchemaError(cfg.origin() + ": needs data = <case CSVs> or synthetic.* keys");
  if (!g.data.empty() && g.synthetic) throw SchemaError(cfg.origin() + ": data and synthetic.* are exclusive");
  cfg.require_all_used();
  return g;
}

// Case records for every (crime, outcome) the grid needs: read from the data
// files, or generated with a seed derived from the master seed.
inline DataRegistry build_registry(const GridSpec& g, std::uint64_t master_seed) {
  if (!g.data.empty()) {
    std::vector<CaseRecord> all;
    for (const auto& path : g.data) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot read case file " + path.string());
      auto records = read_cases(in, path.string());
      all.insert(all.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
    }
    return make_registry(all);
  }
  DataRegistry reg;
  for (const auto& c : g.configs) {
    const std::pair key{c.crime_type, c.outcome_kind};
    if (reg.contains(key)) continue;
    SynthSpec s = *g.synthetic;
    s.crime_type = c.crime_type;
    s.outcome_kind = c.outcome_kind;
    reg[key] = generate_synthetic(
        s, derive_seed(master_seed, std::string("synthetic/") + to_string(c.crime_type) + "/" + to_string(c.outcome_kind)));
  }
  return reg;
}

}  // namespace fairaudit
