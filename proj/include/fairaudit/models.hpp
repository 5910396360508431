#pragma once

// Baseline classifiers trained from scratch on weighted logistic loss:
//  - logistic regression, P(x) = sigmoid(a + b.x), fitted by full-batch
//    gradient descent with backtracking and an L2 penalty on b;
//  - gradient-boosted decision stumps, F_j = F_{j-1} + lr * gamma_j * h_j,
//    each h_j a one-feature threshold split fitted to the loss gradient and
//    gamma_j found by golden-section search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/encoding.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/text.hpp"

namespace fairaudit {

enum class ModelKind { logistic, gbstumps };

inline const char* to_string(ModelKind k) { return k == ModelKind::logistic ? "logistic" : "gbstumps"; }

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  const auto f = text::fold(s);
  if (f == "logistic") return ModelKind::logistic;
  if (f == "gbstumps" || f == "gb" || f == "gradient_boosting") return ModelKind::gbstumps;
  return std::nullopt;
}

struct TrainConfig {
  int max_iter = 5000;
  double tolerance = 1e-6;  // gradient-norm stopping threshold (logistic)
  double learning_rate = 0.1;
  int n_stages = 100;
  std::uint64_t seed = 0;
  // L2 strength on the logistic coefficients; negative selects 1/n.
  double l2 = -1.0;
  double gamma_bound = 4.0;
  double decision_threshold = 0.5;

  void validate() const {
    if (max_iter < 1) throw DataError("max_iter must be >= 1");
    if (!(tolerance > 0.0)) throw DataError("tolerance must be > 0");
    if (!(learning_rate > 0.0)) throw DataError("learning_rate must be > 0");
    if (n_stages < 0) throw DataError("n_stages must be >= 0");
    if (!(gamma_bound > 0.0)) throw DataError("gamma_bound must be > 0");
  }
};

// Overflow-safe logistic function.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline constexpr double kProbClamp = 1e-12;

// Weighted mean log loss of probabilities, clamped to [1e-12, 1 - 1e-12].
inline double weighted_logloss(std::span<const double> probs, std::span<const std::uint8_t> y,
                               std::span<const double> w) {
  if (probs.size() != y.size() || w.size() != y.size()) throw DataError("weighted_logloss: length mismatch");
  double total = 0.0;
  double wsum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    total += w[i] * (y[i] ? -std::log(p) : -std::log1p(-p));
    wsum += w[i];
  }
  return wsum > 0.0 ? total / wsum : 0.0;
}

// Same loss evaluated from raw scores through softplus, so it stays smooth
// where the clamped form would flatten; used as the training objective.
inline double weighted_logloss_scores(std::span<const double> scores, std::span<const std::uint8_t> y,
                                      std::span<const double> w) {
  double total = 0.0;
  double wsum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total += w[i] * (y[i] ? softplus(-scores[i]) : softplus(scores[i]));
    wsum += w[i];
  }
  return wsum > 0.0 ? total / wsum : 0.0;
}

inline bool predict_label(double probability, double threshold = 0.5) { return probability >= threshold; }

// ---- Logistic regression ----------------------------------------------------

struct LogisticModel {
  double intercept = 0.0;
  std::vector<double> coefficients;

  double score(const SparseMatrix& X, std::size_t i) const { return intercept + X.dot(i, coefficients); }

  double score(std::span<const double> x) const {
    if (x.size() != coefficients.size()) throw DataError("feature vector width does not match model");
    double s = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) s += coefficients[j] * x[j];
    return s;
  }

  double predict_proba(std::span<const double> x) const { return sigmoid(score(x)); }
  double predict_proba(const SparseMatrix& X, std::size_t i) const { return sigmoid(score(X, i)); }

  void save(std::ostream& out) const {
    out << "logistic " << coefficients.size() << '\n' << csv::format_double(intercept) << '\n';
    for (std::size_t j = 0; j < coefficients.size(); ++j) {
      out << (j ? " " : "") << csv::format_double(coefficients[j]);
    }
    out << '\n';
  }

  friend bool operator==(const LogisticModel&, const LogisticModel&) = default;
};

inline double predict_proba_logistic(const LogisticModel& m, std::span<const double> x) { return m.predict_proba(x); }

struct LogisticObjective {
  double value = 0.0;
  std::vector<double> gradient;  // [d/da, d/db_0, ..., d/db_{m-1}]
};

// Penalized training objective: weighted mean log loss + (l2 / 2) * |b|^2,
// with its analytic gradient.
inline LogisticObjective logistic_objective(const LogisticModel& model, const EncodedDataset& d, double l2,
                                            bool with_gradient = true) {
  const std::size_t m = d.width();
  LogisticObjective out;
  if (with_gradient) out.gradient.assign(m + 1, 0.0);
  double wsum = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = model.score(d.X, i);
    const double w = d.sample_weight[i];
    wsum += w;
    // softplus(+-z) and sigmoid(z) share e = exp(-|z|).
    const double e = std::exp(-std::abs(z));
    const double log_term = std::log1p(e);
    const double signed_z = d.y[i] ? -z : z;
    loss += w * (std::max(signed_z, 0.0) + log_term);
    if (with_gradient) {
      const double p = z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      const double r = w * (p - d.y[i]);
      out.gradient[0] += r;
      for (const auto& e : d.X.row(i)) out.gradient[1 + e.col] += r * e.value;
    }
  }
  double penalty = 0.0;
  for (double b : model.coefficients) penalty += b * b;
  out.value = loss / wsum + 0.5 * l2 * penalty;
  if (with_gradient) {
    for (auto& g : out.gradient) g /= wsum;
    for (std::size_t j = 0; j < m; ++j) out.gradient[1 + j] += l2 * model.coefficients[j];
  }
  return out;
}

struct LogisticDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;
  bool converged = false;
};

namespace detail {
inline void require_both_classes(const EncodedDataset& d) {
  bool pos = false;
  bool neg = false;
  for (auto v : d.y) (v ? pos : neg) = true;
  if (!pos || !neg) throw DataError("training data must contain both outcome classes");
}
}  // namespace detail

inline LogisticModel train_logistic(const EncodedDataset& d, const TrainConfig& config,
                                    LogisticDiagnostics* diagnostics = nullptr) {
  config.validate();
  d.validate();
  detail::require_both_classes(d);
  const double l2 = config.l2 >= 0.0 ? config.l2 : 1.0 / static_cast<double>(d.size());
  const std::size_t m = d.width();

  LogisticModel model{0.0, std::vector<double>(m, 0.0)};
  LogisticModel trial = model;
  auto current = logistic_objective(model, d, l2);
  LogisticObjective candidate;
  double step = 1.0;
  double prev_step = 0.0;
  std::vector<double> prev_gradient;
  LogisticDiagnostics diag;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    double gnorm2 = 0.0;
    for (double g : current.gradient) gnorm2 += g * g;
    diag.gradient_norm = std::sqrt(gnorm2);
    diag.iterations = iter;
    if (!std::isfinite(current.value) || !std::isfinite(gnorm2)) {
      throw TrainingError("logistic training diverged at iteration " + std::to_string(iter) +
                          " (objective " + csv::format_double(current.value) + ")");
    }
    if (diag.gradient_norm < config.tolerance) {
      diag.converged = true;
      break;
    }
    // Initial step: Barzilai-Borwein s.s / s.y from the previous move
    // (s = -prev_step * prev_gradient), else twice the last accepted step.
    if (!prev_gradient.empty()) {
      double gg = 0.0;
      double gy = 0.0;
      for (std::size_t j = 0; j <= m; ++j) {
        gg += prev_gradient[j] * prev_gradient[j];
        gy += prev_gradient[j] * (prev_gradient[j] - current.gradient[j]);
      }
      step = gy > 0.0 ? prev_step * gg / gy : step * 2.0;
    } else {
      step = step * 2.0;
    }
    step = std::min(step, 1e6);
    // Armijo backtracking.
    while (true) {
      trial.intercept = model.intercept - step * current.gradient[0];
      for (std::size_t j = 0; j < m; ++j) trial.coefficients[j] = model.coefficients[j] - step * current.gradient[1 + j];
      candidate = logistic_objective(trial, d, l2);
      if (candidate.value <= current.value - 1e-4 * step * gnorm2) break;
      step *= 0.5;
      if (step < 1e-20) break;
    }
    if (step < 1e-20) {
      diag.converged = true;  // no representable descent step remains
      break;
    }
    std::swap(model, trial);
    prev_gradient = std::move(current.gradient);
    prev_step = step;
    current = std::move(candidate);
    diag.iterations = iter + 1;
  }
  if (diag.iterations == config.max_iter) {
    double gnorm2 = 0.0;
    for (double g : current.gradient) gnorm2 += g * g;
    diag.gradient_norm = std::sqrt(gnorm2);
    diag.converged = diag.gradient_norm < config.tolerance;
  }
  diag.objective = current.value;
  if (!std::isfinite(current.value)) throw TrainingError("logistic training produced a non-finite objective");
  if (diagnostics) *diagnostics = diag;
  return model;
}

// ---- Gradient-boosted stumps -----------------------------------------------

struct Stump {
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double left = 0.0;   // x[feature] <= threshold
  double right = 0.0;  // x[feature] >  threshold
  double gamma = 0.0;

  double eval(double x) const { return x <= threshold ? left : right; }

  friend bool operator==(const Stump&, const Stump&) = default;
};

struct StumpEnsemble {
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::size_t width = 0;
  std::vector<Stump> stages;

  double score(const SparseMatrix& X, std::size_t i) const {
    double s = base_score;
    for (const auto& st : stages) s += learning_rate * st.gamma * st.eval(X.at(i, st.feature));
    return s;
  }

  double score(std::span<const double> x) const {
    if (x.size() != width) throw DataError("feature vector width does not match model");
    double s = base_score;
    for (const auto& st : stages) s += learning_rate * st.gamma * st.eval(x[st.feature]);
    return s;
  }

  double predict_proba(const SparseMatrix& X, std::size_t i) const { return sigmoid(score(X, i)); }
  double predict_proba(std::span<const double> x) const { return sigmoid(score(x)); }

  void save(std::ostream& out) const {
    out << "gbstumps " << width << ' ' << stages.size() << '\n'
        << csv::format_double(base_score) << ' ' << csv::format_double(learning_rate) << '\n';
    for (const auto& s : stages) {
      out << s.feature << ' ' << csv::format_double(s.threshold) << ' ' << csv::format_double(s.left) << ' '
          << csv::format_double(s.right) << ' ' << csv::format_double(s.gamma) << '\n';
    }
  }

  friend bool operator==(const StumpEnsemble&, const StumpEnsemble&) = default;
};

inline double predict_score_gb(const StumpEnsemble& e, std::span<const double> x) { return e.score(x); }

// Candidate split with its least-squares gain on the residuals.
struct StumpSplit {
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double left = 0.0;
  double right = 0.0;
  double gain = -std::numeric_limits<double>::infinity();
};

// Column-major view used by the stump search: per column the nonzero rows
// sorted by value. Zeros are implicit.
class ColumnIndex {
 public:
  struct Cell {
    std::uint32_t row;
    double value;
  };

  explicit ColumnIndex(const SparseMatrix& X) : rows_(X.rows()), columns_(X.cols()) {
    for (std::size_t i = 0; i < X.rows(); ++i) {
      for (const auto& e : X.row(i)) columns_[e.col].push_back({static_cast<std::uint32_t>(i), e.value});
    }
    for (auto& c : columns_) {
      std::stable_sort(c.begin(), c.end(), [](const Cell& a, const Cell& b) { return a.value < b.value; });
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  std::span<const Cell> column(std::size_t j) const { return columns_[j]; }

 private:
  std::size_t rows_;
  std::vector<std::vector<Cell>> columns_;
};

// Best single-feature threshold split of `residual` under squared error.
// Thresholds are midpoints between consecutive distinct values. Ties keep
// the lowest feature index, then the lowest threshold.
inline StumpSplit best_stump(const ColumnIndex& index, std::span<const double> residual) {
  const std::size_t n = index.rows();
  double total = 0.0;
  for (double r : residual) total += r;
  const double base = n ? total * total / static_cast<double>(n) : 0.0;

  struct Group {
    double value;
    std::size_t count;
    double sum;
  };
  std::vector<Group> groups;
  StumpSplit best;
  for (std::size_t j = 0; j < index.cols(); ++j) {
    const auto col = index.column(j);
    groups.clear();
    double nz_sum = 0.0;
    for (const auto& c : col) nz_sum += residual[c.row];
    const std::size_t zeros = n - col.size();
    bool zero_pending = zeros > 0;
    auto push = [&](double v, double r) {
      if (!groups.empty() && groups.back().value == v) {
        ++groups.back().count;
        groups.back().sum += r;
      } else {
        groups.push_back({v, 1, r});
      }
    };
    for (const auto& c : col) {
      if (zero_pending && c.value > 0.0) {
        groups.push_back({0.0, zeros, total - nz_sum});
        zero_pending = false;
      }
      push(c.value, residual[c.row]);
    }
    if (zero_pending) groups.push_back({0.0, zeros, total - nz_sum});

    std::size_t left_n = 0;
    double left_sum = 0.0;
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
      left_n += groups[g].count;
      left_sum += groups[g].sum;
      const std::size_t right_n = n - left_n;
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                          right_sum * right_sum / static_cast<double>(right_n) - base;
      if (gain > best.gain) {
        best.feature = static_cast<std::uint32_t>(j);
        best.threshold = 0.5 * (groups[g].value + groups[g + 1].value);
        best.left = left_sum / static_cast<double>(left_n);
        best.right = right_sum / static_cast<double>(right_n);
        best.gain = gain;
      }
    }
  }
  return best;
}

// Golden-section minimisation of a unimodal function on [lo, hi].
template <typename F>
double golden_section_minimize(F&& f, double lo, double hi, int iterations = 50) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

struct GbDiagnostics {
  std::vector<double> loss_history;  // entry 0 is the F_0 loss
  std::vector<double> stage_loss_at_zero;
  std::vector<double> stage_loss_at_gamma;  // loss(F + gamma h) before shrinkage
};

inline StumpEnsemble train_gbstumps(const EncodedDataset& d, const TrainConfig& config,
                                    GbDiagnostics* diagnostics = nullptr) {
  config.validate();
  d.validate();
  detail::require_both_classes(d);
  const std::size_t n = d.size();

  // Weights rescaled to mean 1 so residual magnitudes, and with them the
  // gamma search interval, do not depend on the weight scale.
  double wsum = 0.0;
  double wpos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wsum += d.sample_weight[i];
    if (d.y[i]) wpos += d.sample_weight[i];
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = d.sample_weight[i] * static_cast<double>(n) / wsum;

  StumpEnsemble model;
  model.learning_rate = config.learning_rate;
  model.width = d.width();
  model.base_score = std::log(wpos / (wsum - wpos));

  std::vector<double> F(n, model.base_score);
  std::vector<double> residual(n);
  std::vector<double> h(n);
  std::vector<double> trial(n);
  GbDiagnostics diag;
  double loss = weighted_logloss_scores(F, d.y, w);
  diag.loss_history.push_back(loss);

  const ColumnIndex index(d.X);
  for (int stage = 0; stage < config.n_stages; ++stage) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = w[i] * (d.y[i] - sigmoid(F[i]));
    const StumpSplit split = best_stump(index, residual);
    if (!(split.gain > 1e-14 * static_cast<double>(n))) break;

    for (std::size_t i = 0; i < n; ++i) h[i] = d.X.at(i, split.feature) <= split.threshold ? split.left : split.right;
    auto loss_at = [&](double gamma) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = F[i] + gamma * h[i];
      return weighted_logloss_scores(trial, d.y, w);
    };
    double gamma = golden_section_minimize(loss_at, -config.gamma_bound, config.gamma_bound);
    const double at_gamma = loss_at(gamma);
    if (!std::isfinite(at_gamma)) throw TrainingError("boosting loss non-finite at stage " + std::to_string(stage));
    if (!(at_gamma < loss)) break;  // no split improves the loss

    for (std::size_t i = 0; i < n; ++i) F[i] += config.learning_rate * gamma * h[i];
    const double next = weighted_logloss_scores(F, d.y, w);
    // Convexity of the loss along h bounds the shrunken step by the endpoints.
    if (next > loss) break;
    model.stages.push_back({split.feature, split.threshold, split.left, split.right, gamma});
    diag.stage_loss_at_zero.push_back(loss);
    diag.stage_loss_at_gamma.push_back(at_gamma);
    loss = next;
    diag.loss_history.push_back(loss);
  }
  if (diagnostics) *diagnostics = std::move(diag);
  return model;
}

// ---- Trained-model handle -----------------------------------------------------

// Always predicts one label; what a cost-sensitive oracle returns when the
// relabelled problem has a single class or zero weight.
struct ConstantClassifier {
  bool label = false;
  void save(std::ostream& out) const { out << "constant " << (label ? 1 : 0) << '\n'; }
  friend bool operator==(const ConstantClassifier&, const ConstantClassifier&) = default;
};

using Model = std::variant<ConstantClassifier, LogisticModel, StumpEnsemble>;

inline double predict_proba(const Model& model, const SparseMatrix& X, std::size_t i) {
  return std::visit(
      [&](const auto& m) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, ConstantClassifier>) {
          return m.label ? 1.0 : 0.0;
        } else {
          return m.predict_proba(X, i);
        }
      },
      model);
}

inline std::vector<double> predict_proba(const Model& model, const SparseMatrix& X) {
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_proba(model, X, i);
  return out;
}

inline std::vector<std::uint8_t> predict_labels(const Model& model, const SparseMatrix& X, double threshold = 0.5) {
  std::vector<std::uint8_t> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_label(predict_proba(model, X, i), threshold) ? 1 : 0;
  return out;
}

inline Model train_model(ModelKind kind, const EncodedDataset& d, const TrainConfig& config) {
  if (kind == ModelKind::logistic) return train_logistic(d, config);
  return train_gbstumps(d, config);
}

inline void save_model(std::ostream& out, const Model& model) {
  std::visit([&](const auto& m) { m.save(out); }, model);
}

inline Model load_model(std::istream& in) {
  std::string kind;
  if (!(in >> kind)) throw SchemaError("model stream is empty");
  auto read_double = [&]() {
    std::string tok;
    if (!(in >> tok)) throw SchemaError("truncated model");
    auto v = csv::parse_double(tok);
    if (!v) throw SchemaError("bad number in model: " + tok);
    return *v;
  };
  auto read_size = [&]() {
    std::string tok;
    if (!(in >> tok)) throw SchemaError("truncated model");
    auto v = csv::parse_int<std::size_t>(tok);
    if (!v) throw SchemaError("bad integer in model: " + tok);
    return *v;
  };
  if (kind == "constant") {
    return ConstantClassifier{read_size() != 0};
  }
  if (kind == "logistic") {
    LogisticModel m;
    const std::size_t width = read_size();
    m.intercept = read_double();
    m.coefficients.resize(width);
    for (auto& c : m.coefficients) c = read_double();
    return m;
  }
  if (kind == "gbstumps") {
    StumpEnsemble e;
    e.width = read_size();
    const std::size_t stages = read_size();
    e.base_score = read_double();
    e.learning_rate = read_double();
    for (std::size_t s = 0; s < stages; ++s) {
      Stump st;
      st.feature = static_cast<std::uint32_t>(read_size());
      if (st.feature >= e.width) throw SchemaError("stump feature index out of range");
      st.threshold = read_double();
      st.left = read_double();
      st.right = read_double();
      st.gamma = read_double();
      e.stages.push_back(st);
    }
    return e;
  }
  throw SchemaError("unknown model kind '" + kind + "'");
}

}  // namespace fairaudit
