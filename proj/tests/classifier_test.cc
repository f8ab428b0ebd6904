// Copyright 2026 The gdrift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gdrift/classifier.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gdrift/error.h"
#include "oracles.h"

namespace gdrift {
namespace {

struct Data {
  FeatureMatrix x;
  LabelVector y;
};

// Two Gaussian blobs in `dim` dimensions; members are shifted by `shift`.
Data Blobs(int n_per_class, int dim, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Data d;
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int label = i % 2;
    std::vector<double> row(dim);
    for (double& v : row) v = n(rng) + label * shift;
    d.x.push_back(row);
    d.y.push_back(label);
  }
  return d;
}

TEST(FitTest, SeparableToyIsPerfect) {
  Data d;
  for (int i = 0; i < 4; ++i) {
    d.x.push_back({1.0 + 0.01 * i, 1.0});
    d.y.push_back(1);
    d.x.push_back({-1.0, -1.0 - 0.01 * i});
    d.y.push_back(0);
  }
  FitOptions o;
  o.folds = 2;
  const LogRegModel m = Fit(d.x, d.y, {}, o);
  const ThresholdMetrics t = ComputeThresholdMetrics(m, d.x, d.y, 0.5);
  EXPECT_EQ(t.accuracy, 1.0);
  EXPECT_EQ(t.tpr, 1.0);
  EXPECT_EQ(t.fpr, 0.0);
}

TEST(FitTest, HugeLambdaShrinksToHalf) {
  const Data d = Blobs(20, 3, 2.0, 1);
  FitOptions o;
  o.lambda_grid = {1e9};
  const LogRegModel m = Fit(d.x, d.y, {}, o);
  for (double w : m.weights) EXPECT_LT(std::abs(w), 1e-8);
  for (const auto& row : d.x) EXPECT_NEAR(PredictProba(m, row), 0.5, 1e-8);
}

TEST(SolveLogisticTest, MatchesGridSearchOracle) {
  const std::vector<double> x = {0.0, 0.2, 0.35, 0.5, 0.8, 1.0};
  const std::vector<int> y = {0, 0, 1, 0, 1, 1};
  FeatureMatrix rows;
  for (double v : x) rows.push_back({v});
  for (double lambda : {0.0, 0.01, 0.1}) {
    const SolverResult r = SolveLogistic(rows, y, lambda);
    EXPECT_TRUE(r.converged);
    const oracle::GridMinimum g = oracle::GridSearchLogistic1D(x, y, lambda);
    EXPECT_NEAR(r.objective, g.objective, 1e-4) << lambda;
    EXPECT_LE(r.objective, g.objective + 1e-12) << lambda;
    EXPECT_NEAR(r.weights[0], g.w, 1e-3) << lambda;
    EXPECT_NEAR(r.bias, g.b, 1e-3) << lambda;
    EXPECT_NEAR(LogisticObjective(rows, y, r.weights, r.bias, lambda), r.objective, 1e-15);
  }
}

TEST(SolveLogisticTest, SmallerLambdaNeverWorsensLikelihood) {
  const Data d = Blobs(30, 4, 0.8, 2);
  double prev = -1e300;
  for (double lambda : {1.0, 0.1, 0.01, 1e-3, 0.0}) {
    const SolverResult r = SolveLogistic(d.x, d.y, lambda);
    const double loglik = -LogisticObjective(d.x, d.y, r.weights, r.bias, 0.0);
    EXPECT_GE(loglik, prev - 1e-9) << lambda;
    prev = loglik;
  }
}

TEST(FitTest, DeterministicAndReportsCv) {
  const Data d = Blobs(25, 3, 1.0, 3);
  FitOptions o;
  o.seed = 4;
  const LogRegModel a = Fit(d.x, d.y, {}, o);
  const LogRegModel b = Fit(d.x, d.y, {}, o);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.cv_auc.size(), o.lambda_grid.size());
  EXPECT_NE(std::find(o.lambda_grid.begin(), o.lambda_grid.end(), a.l2_lambda),
            o.lambda_grid.end());
}

TEST(FitTest, RejectsBadInputs) {
  const Data d = Blobs(5, 2, 1.0, 5);
  const FitOptions o;
  const LabelVector one_class(d.y.size(), 1);
  EXPECT_THROW(Fit(d.x, one_class, {}, o), InputError);
  EXPECT_THROW(Fit(d.x, d.y, {false, false}, o), InputError);
  const FeatureMatrix few = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
  EXPECT_THROW(Fit(few, LabelVector{0, 1, 1}, {}, o), InputError);
}

TEST(PredictTest, Examples) {
  LogRegModel m;
  m.weights = {0.0};
  m.feature_mask = {true};
  m.scaler = MinMaxScaler({0.0}, {1.0});
  EXPECT_EQ(PredictProba(m, std::vector<double>{0.3}), 0.5);
  m.weights = {1.0};
  EXPECT_EQ(PredictProba(m, std::vector<double>{0.0}), 0.5);
  EXPECT_LT(PredictProba(m, std::vector<double>{0.2}), PredictProba(m, std::vector<double>{0.7}));
  EXPECT_NEAR(PredictProba(m, std::vector<double>{1.0}), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_THROW(PredictProba(m, std::vector<double>{1.0, 2.0}), ContractError);
  EXPECT_THROW(DecisionFunction(m, std::vector<double>{}), ContractError);
}

TEST(PredictTest, MaskSelectsFeatures) {
  LogRegModel m;
  m.weights = {2.0};
  m.bias = -1.0;
  m.feature_mask = {false, true, false};
  m.scaler = MinMaxScaler({0.0}, {4.0});
  EXPECT_DOUBLE_EQ(DecisionFunction(m, std::vector<double>{100.0, 2.0, -7.0}), 0.0);
}

TEST(RocAucTest, Examples) {
  EXPECT_EQ(RocAuc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, LabelVector{1, 1, 0, 0}).auc, 1.0);
  EXPECT_EQ(RocAuc(std::vector<double>{0.1, 0.2, 0.9, 0.8}, LabelVector{1, 1, 0, 0}).auc, 0.0);
  EXPECT_EQ(RocAuc(std::vector<double>(6, 0.3), LabelVector{1, 0, 1, 0, 1, 0}).auc, 0.5);
  EXPECT_THROW(RocAuc(std::vector<double>{1.0, 2.0}, LabelVector{1, 1}), InputError);
  EXPECT_THROW(RocAuc(std::vector<double>{1.0}, LabelVector{1, 0}), InputError);
}

TEST(RocAucTest, CurveShape) {
  const RocResult r =
      RocAuc(std::vector<double>{0.9, 0.7, 0.7, 0.3, 0.1}, LabelVector{1, 1, 0, 0, 1});
  ASSERT_EQ(r.curve.fpr.size(), 5u);
  EXPECT_EQ(r.curve.fpr.front(), 0.0);
  EXPECT_EQ(r.curve.tpr.front(), 0.0);
  EXPECT_EQ(r.curve.fpr.back(), 1.0);
  EXPECT_EQ(r.curve.tpr.back(), 1.0);
  EXPECT_EQ(r.curve.thresholds.size(), 4u);
  EXPECT_EQ(r.curve.thresholds[0], 0.9);
  EXPECT_EQ(r.curve.thresholds[1], 0.7);
  EXPECT_DOUBLE_EQ(r.curve.tpr[2], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.curve.fpr[2], 0.5);
  EXPECT_DOUBLE_EQ(TprAtFpr(r.curve, 0.0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(TprAtFpr(r.curve, 0.5), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(TprAtFpr(r.curve, 1.0), 1.0);
}

TEST(RocAucTest, MatchesPairCountOracleExactly) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> coarse(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(20);
    LabelVector labels(20);
    for (int i = 0; i < 20; ++i) {
      scores[i] = coarse(rng) / 10.0;
      labels[i] = i < 10 ? 1 : 0;
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    EXPECT_EQ(RocAuc(scores, labels).auc, oracle::PairCountAuc(scores, labels));
  }
}

TEST(RocAucTest, InvariantUnderMonotoneTransforms) {
  const Data d = Blobs(15, 1, 1.0, 7);
  std::vector<double> s, t;
  for (const auto& r : d.x) {
    s.push_back(r[0]);
    t.push_back(std::exp(3.0 * r[0]) + 5.0);
  }
  EXPECT_EQ(RocAuc(s, d.y).auc, RocAuc(t, d.y).auc);
}

TEST(ThresholdTest, Examples) {
  const std::vector<double> p = {0.9, 0.6, 0.4, 0.2};
  const LabelVector y = {1, 1, 0, 0};
  const ThresholdMetrics zero = ComputeThresholdMetrics(p, y, 0.0);
  EXPECT_EQ(zero.tpr, 1.0);
  EXPECT_EQ(zero.fpr, 1.0);
  const ThresholdMetrics one = ComputeThresholdMetrics(p, y, 1.0);
  EXPECT_EQ(one.tpr, 0.0);
  EXPECT_EQ(one.fpr, 0.0);
  const ThresholdMetrics half = ComputeThresholdMetrics(p, y, 0.5);
  EXPECT_EQ(half.tpr, 1.0);
  EXPECT_EQ(half.fpr, 0.0);
  EXPECT_EQ(half.accuracy, 1.0);
  const ThresholdMetrics strict = ComputeThresholdMetrics(p, y, 0.6);
  EXPECT_EQ(strict.tpr, 0.5);
  EXPECT_THROW(ComputeThresholdMetrics(p, y, 1.5), InputError);
  EXPECT_EQ(SelectThreshold(p, y), 0.4);
}

TEST(AblationTest, CanonicalRows) {
  const auto& specs = CanonicalAblations();
  ASSERT_EQ(specs.size(), 13u);
  EXPECT_EQ(specs[0].name, "all");
  EXPECT_EQ(specs[12].name, "all but feat proj");
  for (const auto& s : specs) {
    ASSERT_EQ(s.keep.size(), 7u);
    const int kept = static_cast<int>(std::count(s.keep.begin(), s.keep.end(), true));
    EXPECT_GE(kept, 4) << s.name;
  }
  EXPECT_EQ(specs[9].name, "all but group after");
  EXPECT_EQ(specs[9].keep, (std::vector<bool>{true, true, true, false, false, false, true}));
}

TEST(AblationTest, AllMatchesPlainFitAndConstantIsChance) {
  const Data train = Blobs(30, 7, 0.7, 8);
  const Data test = Blobs(20, 7, 0.7, 9);
  FitOptions o;
  o.seed = 3;
  const auto rows = RunAblation(train.x, train.y, test.x, test.y, CanonicalAblations(), o);
  ASSERT_EQ(rows.size(), 13u);
  const LogRegModel m = Fit(train.x, train.y, {}, o);
  std::vector<double> scores;
  for (const auto& r : test.x) scores.push_back(DecisionFunction(m, r));
  EXPECT_EQ(rows[0].auc, RocAuc(scores, test.y).auc);

  Data flat_train = train, flat_test = test;
  for (auto& r : flat_train.x) r[0] = 3.0;
  for (auto& r : flat_test.x) r[0] = 3.0;
  const std::vector<AblationSpec> only_first = {
      {"constant", {true, false, false, false, false, false, false}}};
  const auto flat = RunAblation(flat_train.x, flat_train.y, flat_test.x, flat_test.y,
                                only_first, o);
  EXPECT_EQ(flat[0].auc, 0.5);
}

}  // namespace
}  // namespace gdrift
