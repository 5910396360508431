#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "fairaudit/fair_reduction.hpp"
#include "fairaudit/metrics.hpp"
#include "test_support.hpp"

using namespace fairaudit;
using fairaudit::testing::random_dataset;

namespace {

std::vector<double> as_double(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::uint8_t> random_labels(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (auto& v : out) v = rng.bernoulli(0.5) ? 1 : 0;
  return out;
}

// Both groups hold both labels so every constraint kind can be built.
EncodedDataset covered_dataset(Rng& rng, std::size_t n, std::size_t m) {
  auto d = random_dataset(rng, n, m);
  d.y[0] = 1, d.group[0] = 0;
  d.y[1] = 0, d.group[1] = 0;
  d.y[2] = 1, d.group[2] = 1;
  d.y[3] = 0, d.group[3] = 1;
  return d;
}

}  // namespace

TEST(BuildConstraints, Counts) {
  Rng rng(1);
  const auto d = covered_dataset(rng, 30, 3);
  EXPECT_EQ(build_constraints(ConstraintKind::demographic_parity, d, 0.01).size(), 2u);
  EXPECT_EQ(build_constraints(ConstraintKind::equal_opportunity, d, 0.01).size(), 2u);
  const auto eo = build_constraints(ConstraintKind::equalized_odds, d, 0.01);
  EXPECT_EQ(eo.size(), 4u);
  EXPECT_EQ(eo.names(), (std::vector<std::string>{"y=0+", "y=0-", "y=1+", "y=1-"}));
}

TEST(BuildConstraints, EmptyCellIsNamed) {
  // No Y=1 example in group 1.
  const auto d = EncodedDataset::from_dense({{0.0}, {1.0}, {0.0}, {1.0}}, {1, 0, 0, 0}, {0, 0, 1, 1});
  try {
    build_constraints(ConstraintKind::equal_opportunity, d, 0.01);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("y=1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("A=1"), std::string::npos);
  }
  EXPECT_NO_THROW(build_constraints(ConstraintKind::demographic_parity, d, 0.01));
  EXPECT_THROW(build_constraints(ConstraintKind::demographic_parity, d, -0.1), DataError);
}

TEST(ConstraintViolations, Examples) {
  const auto d = EncodedDataset::from_dense({{0.0}, {0.0}, {0.0}, {0.0}}, {1, 0, 1, 0}, {0, 0, 1, 1});
  const auto dp = build_constraints(ConstraintKind::demographic_parity, d, 0.01);
  const std::vector<double> same = {1, 0, 0, 1};
  for (double v : constraint_violations(same, dp)) EXPECT_DOUBLE_EQ(v, -0.01);
  const auto dp0 = build_constraints(ConstraintKind::demographic_parity, d, 0.0);
  const std::vector<double> gap = {1, 1, 1, 0};
  EXPECT_EQ(constraint_violations(gap, dp0), (std::vector<double>{0.5, -0.5}));
  // Hand case: group 0 = {1, 0.5}, group 1 = {0.25, 0}; y=1 rows are 0 and 2.
  const std::vector<double> soft = {1.0, 0.5, 0.25, 0.0};
  EXPECT_EQ(constraint_violations(soft, dp0), (std::vector<double>{0.625, -0.625}));
  const auto eo = build_constraints(ConstraintKind::equalized_odds, d, 0.0);
  EXPECT_EQ(constraint_violations(soft, eo), (std::vector<double>{0.5, -0.5, 0.75, -0.75}));
}

TEST(ConstraintViolations, MaxSignedPlusEpsilonEqualsDelta) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const auto d = covered_dataset(rng, 4 + rng.below(30), 1);
    const auto pred = random_labels(rng, d.size());
    const double eps = rng.uniform() * 0.05;
    const auto report = fairness_report(pred, d.y, d.group);
    const auto p = as_double(pred);
    auto check = [&](ConstraintKind kind, std::size_t k, const std::optional<double>& delta) {
      const auto v = build_constraints(kind, d, eps).violations(p);
      ASSERT_TRUE(delta.has_value());
      EXPECT_NEAR(std::max(v[k], v[k + 1]) + eps, *delta, 1e-15);
    };
    check(ConstraintKind::demographic_parity, 0, report.delta_dp);
    check(ConstraintKind::equal_opportunity, 0, report.delta_tp);
    check(ConstraintKind::equalized_odds, 0, report.delta_fp);
    check(ConstraintKind::equalized_odds, 2, report.delta_tp);
  }
}

TEST(CostSensitiveTransform, ZeroLambdaIsPlainTraining) {
  Rng rng(3);
  const auto d = covered_dataset(rng, 40, 3);
  const auto cs = build_constraints(ConstraintKind::equalized_odds, d, 0.01);
  const auto p = cost_sensitive_transform(std::vector<double>(4, 0.0), d, cs);
  EXPECT_EQ(p.label, d.y);
  EXPECT_EQ(p.weight, d.sample_weight);
}

TEST(CostSensitiveTransform, TwoExampleHandCase) {
  const auto d = EncodedDataset::from_dense({{0.0}, {1.0}}, {1, 0}, {0, 1}, {1.0, 2.0});
  const auto cs = build_constraints(ConstraintKind::demographic_parity, d, 0.0);
  const std::vector<double> lambda = {0.3, 0.1};
  const auto p = cost_sensitive_transform(lambda, d, cs);
  // W = 3; the moment of row 0 is (0.3 - 0.1) / 1, of row 1 its negative.
  EXPECT_NEAR(p.cost_one[0], 0.6, 1e-15);
  EXPECT_EQ(p.cost_zero[0], 1.0);
  EXPECT_NEAR(p.cost_one[1], 1.4, 1e-15);
  EXPECT_EQ(p.cost_zero[1], 0.0);
  EXPECT_EQ(p.label, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_NEAR(p.weight[0], 0.4, 1e-15);
  EXPECT_NEAR(p.weight[1], 1.4, 1e-15);
}

TEST(CostSensitiveTransform, CostsEqualScaledLagrangian) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto d = covered_dataset(rng, 6 + rng.below(25), 2);
    const auto cs = build_constraints(t % 2 ? ConstraintKind::equalized_odds : ConstraintKind::demographic_parity, d,
                                      0.02);
    std::vector<double> lambda(cs.size());
    for (auto& l : lambda) l = rng.uniform() * 5.0;
    const auto p = cost_sensitive_transform(lambda, d, cs);
    const auto h = random_labels(rng, d.size());
    const double W = std::accumulate(d.sample_weight.begin(), d.sample_weight.end(), 0.0);
    double cost = 0.0, relabelled = 0.0, floor = 0.0, err = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      cost += h[i] ? p.cost_one[i] : p.cost_zero[i];
      relabelled += h[i] != p.label[i] ? p.weight[i] : 0.0;
      floor += std::min(p.cost_one[i], p.cost_zero[i]);
      err += h[i] != d.y[i] ? d.sample_weight[i] : 0.0;
    }
    const auto gamma = cs.violations(as_double(h));
    double lagrangian = err / W;
    for (std::size_t k = 0; k < cs.size(); ++k) lagrangian += lambda[k] * (gamma[k] + cs.epsilon());
    EXPECT_NEAR(cost, W * lagrangian, 1e-9);
    EXPECT_NEAR(cost, relabelled + floor, 1e-9);
  }
}

TEST(BestResponse, ZeroLambdaMatchesBaseline) {
  Rng rng(5);
  for (int t = 0; t < 4; ++t) {
    const auto d = covered_dataset(rng, 50, 4);
    const auto cs = build_constraints(ConstraintKind::equalized_odds, d, 0.01);
    TrainConfig c;
    c.n_stages = 10;
    for (auto kind : {ModelKind::logistic, ModelKind::gbstumps}) {
      EXPECT_EQ(best_response(std::vector<double>(4, 0.0), d, cs, kind, c), train_model(kind, d, c));
    }
  }
}

TEST(BestResponse, HugePositiveDpDualFlipsSelectionOrder) {
  // Group 0 is mostly positive and the group is visible through feature 0.
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> y, g;
  for (int i = 0; i < 80; ++i) {
    const std::uint8_t a = i % 2;
    rows.push_back({static_cast<double>(a), (i % 5) / 5.0});
    g.push_back(a);
    y.push_back(a == 0 ? (i % 10 != 0) : (i % 10 == 1));
  }
  const auto d = EncodedDataset::from_dense(rows, y, g);
  const auto cs = build_constraints(ConstraintKind::demographic_parity, d, 0.0);
  const Model base = best_response(std::vector<double>{0.0, 0.0}, d, cs, ModelKind::logistic, TrainConfig{});
  const Model pushed = best_response(std::vector<double>{1000.0, 0.0}, d, cs, ModelKind::logistic, TrainConfig{});
  auto rates = [&](const Model& m) {
    const auto r = fairness_report(predict_labels(m, d.X), d.y, d.group);
    return std::pair{r.confusion.group[0].selection().value().value(), r.confusion.group[1].selection().value().value()};
  };
  EXPECT_GT(rates(base).first, rates(base).second);
  EXPECT_LE(rates(pushed).first, rates(pushed).second);
}

TEST(BestResponse, AllWeightZeroGivesConstant) {
  // Costs cancel when lambda offsets the error exactly; the oracle then
  // returns the majority relabel as a constant.
  const auto d = EncodedDataset::from_dense({{0.0}, {1.0}}, {1, 0}, {0, 1});
  const auto cs = build_constraints(ConstraintKind::demographic_parity, d, 0.0);
  const Model m = best_response(std::vector<double>{0.5, 0.0}, d, cs, ModelKind::logistic, TrainConfig{});
  EXPECT_TRUE(std::holds_alternative<ConstantClassifier>(m));
}

TEST(ExponentiatedGradient, SingleRoundIsOneBestResponse) {
  Rng rng(6);
  const auto d = covered_dataset(rng, 60, 4);
  ReductionConfig rc;
  rc.max_rounds = 1;
  const auto r = run_exponentiated_gradient(d, {ConstraintKind::demographic_parity, 0.01}, rc);
  ASSERT_EQ(r.classifier.components.size(), 1u);
  EXPECT_EQ(r.classifier.weights, std::vector<double>{1.0});
  EXPECT_EQ(r.trace.size(), 1u);
  const auto cs = build_constraints(ConstraintKind::demographic_parity, d, 0.01);
  const double l = rc.lambda_bound / 3.0;
  const Model direct = best_response(cs.project(std::vector<double>{l, l}), d, cs, rc.base_learner, rc.train);
  EXPECT_EQ(r.classifier.components[0], direct);
}

TEST(ExponentiatedGradient, SatisfiedConstraintStopsAfterOneRound) {
  // Every row appears once per group, so any classifier has equal rates.
  Rng rng(7);
  auto half = random_dataset(rng, 30, 3);
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> y, g;
  for (int a = 0; a < 2; ++a) {
    for (std::size_t i = 0; i < half.size(); ++i) {
      rows.push_back(half.X.dense_row(i));
      y.push_back(half.y[i]);
      g.push_back(static_cast<std::uint8_t>(a));
    }
  }
  const auto d = EncodedDataset::from_dense(rows, y, g);
  for (auto kind : {ConstraintKind::demographic_parity, ConstraintKind::equalized_odds}) {
    const auto r = run_exponentiated_gradient(d, {kind, 0.01}, ReductionConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.classifier.components.size(), 1u);
    EXPECT_EQ(r.trace[0].gap, 0.0);
  }
}

TEST(ExponentiatedGradient, TraceAndMixtureAreConsistent) {
  Rng rng(8);
  const auto d = covered_dataset(rng, 120, 5);
  ReductionConfig rc;
  rc.max_rounds = 8;
  rc.gap_tol = 1e-12;
  const auto r = run_exponentiated_gradient(d, {ConstraintKind::equalized_odds, 0.01}, rc);
  ASSERT_EQ(r.trace.size(), 8u);
  EXPECT_EQ(r.selected_rounds, 8);
  double sum = 0.0;
  for (double w : r.classifier.weights) {
    EXPECT_GE(w, 0.0);
    sum += w;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto cs = build_constraints(ConstraintKind::equalized_odds, d, 0.01);
  const auto q = r.classifier.expectation(d.X);
  const auto v = cs.violations(q);
  EXPECT_NEAR(*std::max_element(v.begin(), v.end()), r.trace.back().mixture_max_violation, 1e-12);
  for (double x : q) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  for (std::size_t t = 0; t < r.trace.size(); ++t) {
    EXPECT_EQ(r.trace[t].round, static_cast<int>(t) + 1);
    EXPECT_EQ(r.trace[t].lambda.size(), 4u);
    EXPECT_GE(r.trace[t].gap, 0.0);
    double lsum = 0.0;
    for (double l : r.trace[t].lambda) lsum += l;
    EXPECT_LE(lsum, rc.lambda_bound + 1e-9);
  }
  std::ostringstream csv_out;
  write_trace_csv(csv_out, r, cs);
  const std::string text = csv_out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
}

TEST(ExponentiatedGradient, BestGapSelectsPrefix) {
  Rng rng(9);
  const auto d = covered_dataset(rng, 100, 4);
  ReductionConfig rc;
  rc.max_rounds = 6;
  rc.gap_tol = 1e-12;
  rc.selection = MixtureSelection::best_gap;
  const auto r = run_exponentiated_gradient(d, {ConstraintKind::demographic_parity, 0.01}, rc);
  int best = 1;
  for (std::size_t t = 0; t < r.trace.size(); ++t) {
    if (r.trace[t].gap < r.trace[static_cast<std::size_t>(best) - 1].gap) best = static_cast<int>(t) + 1;
  }
  EXPECT_EQ(r.selected_rounds, r.converged ? static_cast<int>(r.trace.size()) : best);
  EXPECT_EQ(r.classifier.components.size(), static_cast<std::size_t>(r.selected_rounds));
}

TEST(ExponentiatedGradient, InvalidConfigRejected) {
  Rng rng(10);
  const auto d = covered_dataset(rng, 20, 2);
  ReductionConfig rc;
  rc.max_rounds = 0;
  EXPECT_THROW(run_exponentiated_gradient(d, {ConstraintKind::demographic_parity, 0.01}, rc), DataError);
}

TEST(PredictRandomized, Modes) {
  const auto X = SparseMatrix::from_dense({{0.0}, {1.0}}, 1);
  RandomizedClassifier rc;
  rc.components = {ConstantClassifier{false}, ConstantClassifier{true}};
  rc.weights = {0.5, 0.5};
  EXPECT_EQ(predict_randomized(rc, X, 0, PredictMode::expectation), 0.5);
  int ones = 0;
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    const double s = predict_randomized(rc, X, 1, PredictMode::sample, seed);
    EXPECT_TRUE(s == 0.0 || s == 1.0);
    ones += s == 1.0;
  }
  EXPECT_NEAR(ones / 4000.0, 0.5, 0.03);
  EXPECT_EQ(predict_randomized(rc, X, 1, PredictMode::sample, 17), predict_randomized(rc, X, 1, PredictMode::sample, 17));

  RandomizedClassifier single;
  single.components = {LogisticModel{-0.2, {1.0}}};
  single.weights = {1.0};
  for (std::size_t i = 0; i < 2; ++i) {
    const double label = predict_label(predict_proba(single.components[0], X, i)) ? 1.0 : 0.0;
    EXPECT_EQ(predict_randomized(single, X, i, PredictMode::expectation), label);
    EXPECT_EQ(predict_randomized(single, X, i, PredictMode::sample, 3), label);
  }
}

TEST(RandomizedClassifier, SaveLoadRoundTrip) {
  RandomizedClassifier rc;
  rc.components = {ConstantClassifier{true}, LogisticModel{0.25, {1.0, -2.0}}};
  rc.weights = {0.25, 0.75};
  std::stringstream s;
  rc.save(s);
  const auto back = RandomizedClassifier::load(s);
  EXPECT_EQ(back.weights, rc.weights);
  EXPECT_EQ(back.components, rc.components);
  EXPECT_EQ(back.threshold, rc.threshold);
}
