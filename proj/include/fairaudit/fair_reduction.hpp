#pragma once

// Fairness-constrained training by the exponentiated-gradient reduction.
//
// A fairness notion becomes a set of signed moment constraints
//   gamma_{e,s}(h) = s * (mean_{i in e, A=0} h_i - mean_{i in e, A=1} h_i) - epsilon
// over conditioning events e (all examples; Y=0; Y=1). The learner plays
// cost-sensitive best responses against multipliers lambda kept on the
// scaled simplex {lambda >= 0, |lambda|_1 <= B} by exponentiated-gradient
// updates. The output is a uniform mixture of the best responses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/encoding.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/models.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/text.hpp"

namespace fairaudit {

enum class ConstraintKind { demographic_parity, equalized_odds, equal_opportunity };

inline const char* to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::demographic_parity: return "dp";
    case ConstraintKind::equalized_odds: return "eodds";
    default: return "eopp";
  }
}

inline std::optional<ConstraintKind> parse_constraint_kind(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "dp" || f == "demographic_parity") return ConstraintKind::demographic_parity;
  if (f == "eodds" || f == "eodd" || f == "equalized_odds") return ConstraintKind::equalized_odds;
  if (f == "eopp" || f == "equal_opportunity") return ConstraintKind::equal_opportunity;
  return std::nullopt;
}

struct FairnessConstraint {
  ConstraintKind kind = ConstraintKind::demographic_parity;
  double epsilon = 0.01;
};

class ConstraintSet {
 public:
  struct Event {
    std::string name;
    std::array<std::vector<std::size_t>, 2> members;  // example ids per group
  };

  ConstraintSet(ConstraintKind kind, double epsilon, std::vector<Event> events)
      : kind_(kind), epsilon_(epsilon), events_(std::move(events)) {}

  ConstraintKind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  const std::vector<Event>& events() const { return events_; }

  // Two signed constraints per event, ordered (event 0, +), (event 0, -), ...
  std::size_t size() const { return 2 * events_.size(); }
  static int sign(std::size_t k) { return k % 2 == 0 ? 1 : -1; }
  const Event& event_of(std::size_t k) const { return events_[k / 2]; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : events_) {
      out.push_back(e.name + "+");
      out.push_back(e.name + "-");
    }
    return out;
  }

  // Group-0 mean minus group-1 mean of `predictions` within each event.
  std::vector<double> differences(std::span<const double> predictions) const {
    std::vector<double> out;
    for (const auto& e : events_) {
      double mean[2];
      for (int a = 0; a < 2; ++a) {
        double s = 0.0;
        for (std::size_t i : e.members[a]) s += predictions[i];
        mean[a] = s / static_cast<double>(e.members[a].size());
      }
      out.push_back(mean[0] - mean[1]);
    }
    return out;
  }

  std::vector<double> violations(std::span<const double> predictions) const {
    std::vector<double> out;
    for (double d : differences(predictions)) {
      out.push_back(d - epsilon_);
      out.push_back(-d - epsilon_);
    }
    return out;
  }

  // Keeps only the net multiplier of each (+, -) pair; the moment terms of a
  // pair depend on the difference alone.
  std::vector<double> project(std::span<const double> lambda) const {
    std::vector<double> out(lambda.begin(), lambda.end());
    for (std::size_t k = 0; k + 1 < out.size(); k += 2) {
      const double net = out[k] - out[k + 1];
      out[k] = std::max(net, 0.0);
      out[k + 1] = std::max(-net, 0.0);
    }
    return out;
  }

 private:
  ConstraintKind kind_;
  double epsilon_;
  std::vector<Event> events_;
};

inline std::vector<double> constraint_violations(std::span<const double> predictions, const ConstraintSet& cs) {
  return cs.violations(predictions);
}

inline ConstraintSet build_constraints(ConstraintKind kind, const EncodedDataset& d, double epsilon) {
  if (!(epsilon >= 0.0)) throw DataError("epsilon must be >= 0");
  struct Spec {
    const char* name;
    int label;  // -1: all examples
  };
  std::vector<Spec> specs;
  switch (kind) {
    case ConstraintKind::demographic_parity: specs = {{"all", -1}}; break;
    case ConstraintKind::equal_opportunity: specs = {{"y=1", 1}}; break;
    case ConstraintKind::equalized_odds: specs = {{"y=0", 0}, {"y=1", 1}}; break;
  }
  std::vector<ConstraintSet::Event> events;
  for (const auto& s : specs) {
    ConstraintSet::Event e;
    e.name = s.name;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (s.label < 0 || d.y[i] == s.label) e.members[d.group[i]].push_back(i);
    }
    for (int a = 0; a < 2; ++a) {
      if (e.members[a].empty()) {
        throw DataError(std::string("constraint cell is empty: event ") + s.name + ", group A=" + std::to_string(a));
      }
    }
    events.push_back(std::move(e));
  }
  return ConstraintSet(kind, epsilon, std::move(events));
}

// ---- Randomized classifier ----------------------------------------------------

struct RandomizedClassifier {
  std::vector<Model> components;
  std::vector<double> weights;  // nonnegative, sum to 1
  double threshold = 0.5;       // component decision threshold

  // Expected hard prediction sum_k pi_k * h_k(x).
  double expectation(const SparseMatrix& X, std::size_t i) const {
    double q = 0.0;
    for (std::size_t k = 0; k < components.size(); ++k) {
      if (weights[k] == 0.0) continue;
      q += weights[k] * (predict_label(predict_proba(components[k], X, i), threshold) ? 1.0 : 0.0);
    }
    return q;
  }

  std::vector<double> expectation(const SparseMatrix& X) const {
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = expectation(X, i);
    return out;
  }

  // Draws one component by its weight and returns that component's label.
  bool sample(const SparseMatrix& X, std::size_t i, Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = components.size() - 1;
    for (std::size_t k = 0; k < components.size(); ++k) {
      acc += weights[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    return predict_label(predict_proba(components[pick], X, i), threshold);
  }

  void save(std::ostream& out) const {
    out << "fairaudit-mixture 1\n" << components.size() << ' ' << csv::format_double(threshold) << '\n';
    for (std::size_t k = 0; k < components.size(); ++k) {
      out << csv::format_double(weights[k]) << '\n';
      save_model(out, components[k]);
    }
  }

  static RandomizedClassifier load(std::istream& in) {
    std::string magic;
    std::string version;
    if (!(in >> magic >> version) || magic != "fairaudit-mixture" || version != "1") {
      throw SchemaError("not a mixture model");
    }
    std::string count_tok;
    std::string thr_tok;
    in >> count_tok >> thr_tok;
    auto count = csv::parse_int<std::size_t>(count_tok);
    auto thr = csv::parse_double(thr_tok);
    if (!count || !thr) throw SchemaError("bad mixture header");
    RandomizedClassifier rc;
    rc.threshold = *thr;
    for (std::size_t k = 0; k < *count; ++k) {
      std::string wtok;
      in >> wtok;
      auto w = csv::parse_double(wtok);
      if (!w) throw SchemaError("bad mixture weight");
      rc.weights.push_back(*w);
      rc.components.push_back(load_model(in));
    }
    return rc;
  }
};

enum class PredictMode { expectation, sample };

// Expectation mode returns q(x) in [0, 1]; sample mode returns 0 or 1 drawn
// with a generator seeded by `seed` and the row index.
inline double predict_randomized(const RandomizedClassifier& rc, const SparseMatrix& X, std::size_t i,
                                 PredictMode mode, std::uint64_t seed = 0) {
  if (mode == PredictMode::expectation) return rc.expectation(X, i);
  Rng rng(derive_seed(seed, "sample-row-" + std::to_string(i)));
  return rc.sample(X, i, rng) ? 1.0 : 0.0;
}

// ---- Reduction --------------------------------------------------------------

enum class MixtureSelection { uniform, best_gap };

struct ReductionConfig {
  double epsilon = 0.01;
  int max_rounds = 50;
  double eg_rate = 2.0;
  double lambda_bound = 100.0;
  double gap_tol = 1e-3;
  ModelKind base_learner = ModelKind::logistic;
  MixtureSelection selection = MixtureSelection::uniform;
  std::uint64_t seed = 0;
  TrainConfig train;

  void validate() const {
    if (!(epsilon >= 0.0)) throw DataError("reduction epsilon must be >= 0");
    if (max_rounds < 1) throw DataError("reduction max_rounds must be >= 1");
    if (!(eg_rate > 0.0) || !(lambda_bound > 0.0) || !(gap_tol > 0.0)) {
      throw DataError("reduction eg_rate, lambda_bound and gap_tol must be positive");
    }
    train.validate();
  }
};

// Relabelled weighted-classification problem equivalent to minimising
// sum_i c_i^{h_i}.
struct CostSensitiveProblem {
  std::vector<double> cost_one;   // cost of predicting 1
  std::vector<double> cost_zero;  // cost of predicting 0
  std::vector<std::uint8_t> label;
  std::vector<double> weight;
};

// Costs of the Lagrangian err(h) + lambda . gamma(h), scaled by the total
// sample weight W so that err contributes w_i per mistake:
//   c_i^1 = w_i [y_i = 0] + W sum_{k : i in e_k} lambda_k s_k (+1/n_{e,0} | -1/n_{e,1})
//   c_i^0 = w_i [y_i = 1]
inline CostSensitiveProblem cost_sensitive_transform(std::span<const double> lambda, const EncodedDataset& d,
                                                     const ConstraintSet& cs) {
  if (lambda.size() != cs.size()) throw DataError("lambda has wrong length");
  const std::size_t n = d.size();
  double total_weight = 0.0;
  for (double w : d.sample_weight) total_weight += w;

  std::vector<double> moment(n, 0.0);
  for (std::size_t k = 0; k < cs.size(); ++k) {
    if (lambda[k] == 0.0) continue;
    const auto& e = cs.event_of(k);
    for (int a = 0; a < 2; ++a) {
      const double coef = (a == 0 ? 1.0 : -1.0) / static_cast<double>(e.members[a].size());
      const double term = lambda[k] * ConstraintSet::sign(k) * coef;
      for (std::size_t i : e.members[a]) moment[i] += term;
    }
  }
  CostSensitiveProblem p;
  p.cost_one.resize(n);
  p.cost_zero.resize(n);
  p.label.resize(n);
  p.weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = d.sample_weight[i];
    p.cost_one[i] = (d.y[i] ? 0.0 : w) + total_weight * moment[i];
    p.cost_zero[i] = d.y[i] ? w : 0.0;
    p.label[i] = p.cost_zero[i] > p.cost_one[i] ? 1 : 0;
    p.weight[i] = std::abs(p.cost_zero[i] - p.cost_one[i]);
  }
  return p;
}

// Trains the base learner on the cost-sensitive transformation for `lambda`.
// Zero-weight examples are dropped; a single remaining class (or none) gives
// a constant classifier.
inline Model best_response(std::span<const double> lambda, const EncodedDataset& d, const ConstraintSet& cs,
                           ModelKind learner, const TrainConfig& config) {
  const auto p = cost_sensitive_transform(lambda, d, cs);
  std::vector<std::size_t> keep;
  std::size_t ones = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (p.weight[i] > 0.0) {
      keep.push_back(i);
      ones += p.label[i];
    }
  }
  if (keep.empty()) {
    std::size_t all_ones = std::accumulate(p.label.begin(), p.label.end(), std::size_t{0});
    return ConstantClassifier{2 * all_ones > p.label.size()};
  }
  if (ones == 0 || ones == keep.size()) return ConstantClassifier{ones != 0};

  EncodedDataset train;
  if (keep.size() == d.size()) {
    train.X = d.X;
    train.group = d.group;
    train.y = p.label;
    train.sample_weight = p.weight;
  } else {
    train.X = d.X.select_rows(keep);
    for (std::size_t i : keep) {
      train.y.push_back(p.label[i]);
      train.group.push_back(d.group[i]);
      train.sample_weight.push_back(p.weight[i]);
    }
  }
  train.provenance = d.provenance;
  return train_model(learner, train, config);
}

struct RoundTrace {
  int round = 0;
  std::vector<double> lambda;
  std::vector<double> violations;  // of this round's best response
  double error = 0.0;              // weighted error of this round's best response
  double mixture_max_violation = 0.0;
  double mixture_error = 0.0;
  double gap = 0.0;
};

struct ReductionResult {
  RandomizedClassifier classifier;
  std::vector<RoundTrace> trace;
  bool converged = false;
  int selected_rounds = 0;
};

namespace detail {

inline double weighted_error(std::span<const double> pred, const EncodedDataset& d, double total_weight) {
  double e = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    e += d.sample_weight[i] * (d.y[i] ? 1.0 - pred[i] : pred[i]);
  }
  return e / total_weight;
}

inline double lagrangian(double error, std::span<const double> lambda, std::span<const double> gamma) {
  double l = error;
  for (std::size_t k = 0; k < lambda.size(); ++k) l += lambda[k] * gamma[k];
  return l;
}

}  // namespace detail

// Saddle-point loop. Each round: lambda_t = B exp(theta) / (1 + sum exp(theta)),
// h_t = best_response(lambda_t), theta += (eta / B) gamma(h_t). The gap of the
// running pair (uniform mixture, mean lambda) is tracked; the loop stops once
// it falls to gap_tol.
inline ReductionResult run_exponentiated_gradient(const EncodedDataset& d, const FairnessConstraint& constraint,
                                                  const ReductionConfig& config) {
  config.validate();
  d.validate();
  const ConstraintSet cs = build_constraints(constraint.kind, d, constraint.epsilon);
  const std::size_t K = cs.size();
  const double B = config.lambda_bound;
  const double step = config.eg_rate / B;
  double total_weight = 0.0;
  for (double w : d.sample_weight) total_weight += w;

  std::vector<double> theta(K, 0.0);
  std::vector<double> lambda_sum(K, 0.0);
  std::vector<Model> models;
  std::vector<std::vector<double>> preds;
  std::vector<double> mixture_sum(d.size(), 0.0);
  ReductionResult result;
  int best_round = 1;
  double best_gap = std::numeric_limits<double>::infinity();

  auto hard_predictions = [&](const Model& m) {
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      out[i] = predict_label(predict_proba(m, d.X, i), config.train.decision_threshold) ? 1.0 : 0.0;
    }
    return out;
  };
  auto train = [&](std::span<const double> lambda, int round) -> Model {
    try {
      return best_response(cs.project(lambda), d, cs, config.base_learner, config.train);
    } catch (const Error& e) {
      throw TrainingError("best response failed in round " + std::to_string(round) + ": " + e.what());
    }
  };

  for (int t = 1; t <= config.max_rounds; ++t) {
    // lambda on the scaled simplex, computed with a max shift.
    const double shift = std::max(0.0, *std::max_element(theta.begin(), theta.end()));
    double denom = std::exp(-shift);
    std::vector<double> lambda(K);
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(theta[k] - shift);
    for (std::size_t k = 0; k < K; ++k) lambda[k] = B * std::exp(theta[k] - shift) / denom;

    models.push_back(train(lambda, t));
    preds.push_back(hard_predictions(models.back()));
    const auto& h = preds.back();
    for (std::size_t i = 0; i < d.size(); ++i) mixture_sum[i] += h[i];
    for (std::size_t k = 0; k < K; ++k) lambda_sum[k] += lambda[k];

    RoundTrace row;
    row.round = t;
    row.lambda = lambda;
    row.violations = cs.violations(h);
    row.error = detail::weighted_error(h, d, total_weight);

    // Duality gap of (uniform mixture Q, projected mean lambda).
    std::vector<double> q(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) q[i] = mixture_sum[i] / t;
    std::vector<double> lambda_hat(K);
    for (std::size_t k = 0; k < K; ++k) lambda_hat[k] = lambda_sum[k] / t;
    lambda_hat = cs.project(lambda_hat);
    const auto gamma_q = cs.violations(q);
    const double err_q = detail::weighted_error(q, d, total_weight);
    const double max_gamma = *std::max_element(gamma_q.begin(), gamma_q.end());
    const double l_hat = detail::lagrangian(err_q, lambda_hat, gamma_q);
    const double l_high = err_q + B * std::max(0.0, max_gamma);

    double l_low = std::numeric_limits<double>::infinity();
    for (const auto& p : preds) {
      l_low = std::min(l_low, detail::lagrangian(detail::weighted_error(p, d, total_weight), lambda_hat,
                                                 cs.violations(p)));
    }
    if (t > 1) {
      const auto response = hard_predictions(train(lambda_hat, t));
      l_low = std::min(l_low, detail::lagrangian(detail::weighted_error(response, d, total_weight), lambda_hat,
                                                 cs.violations(response)));
    }
    row.gap = std::max({l_high - l_hat, l_hat - l_low, 0.0});
    row.mixture_max_violation = max_gamma;
    row.mixture_error = err_q;
    result.trace.push_back(row);
    if (row.gap < best_gap) {
      best_gap = row.gap;
      best_round = t;
    }
    if (row.gap <= config.gap_tol) {
      result.converged = true;
      break;
    }
    for (std::size_t k = 0; k < K; ++k) theta[k] += step * row.violations[k];
  }

  const int rounds = config.selection == MixtureSelection::best_gap && !result.converged
                         ? best_round
                         : static_cast<int>(models.size());
  result.selected_rounds = rounds;
  result.classifier.threshold = config.train.decision_threshold;
  for (int k = 0; k < rounds; ++k) {
    result.classifier.components.push_back(std::move(models[static_cast<std::size_t>(k)]));
    result.classifier.weights.push_back(1.0 / rounds);
  }
  return result;
}

inline void write_trace_csv(std::ostream& out, const ReductionResult& r, const ConstraintSet& cs) {
  csv::Row header = {"round"};
  for (const auto& n : cs.names()) header.push_back("violation[" + n + "]");
  for (const auto& n : cs.names()) header.push_back("lambda[" + n + "]");
  header.insert(header.end(), {"weighted_error", "mixture_max_violation", "mixture_error", "gap"});
  csv::write_row(out, header);
  for (const auto& t : r.trace) {
    csv::Row row = {std::to_string(t.round)};
    for (double v : t.violations) row.push_back(csv::format_double(v));
    for (double v : t.lambda) row.push_back(csv::format_double(v));
    row.push_back(csv::format_double(t.error));
    row.push_back(csv::format_double(t.mixture_max_violation));
    row.push_back(csv::format_double(t.mixture_error));
    row.push_back(csv::format_double(t.gap));
    csv::write_row(out, row);
  }
}

}  // namespace fairaudit
