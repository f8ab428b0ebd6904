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
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "gdrift/error.h"

namespace gdrift {
namespace {

double Softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Objective and gradient over the packed parameter vector [w..., b].
double ObjectiveAndGradient(std::span<const std::vector<double>> x,
                            std::span<const int> y, std::span<const double> theta,
                            double lambda, std::vector<double>* grad) {
  const std::size_t m = theta.size() - 1;
  const double n = static_cast<double>(x.size());
  double loss = 0.0;
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = theta[m];
    for (std::size_t j = 0; j < m; ++j) z += theta[j] * x[i][j];
    loss += Softplus(z) - y[i] * z;
    if (grad) {
      const double r = Sigmoid(z) - y[i];
      for (std::size_t j = 0; j < m; ++j) (*grad)[j] += r * x[i][j];
      (*grad)[m] += r;
    }
  }
  loss /= n;
  double reg = 0.0;
  for (std::size_t j = 0; j < m; ++j) reg += theta[j] * theta[j];
  loss += 0.5 * lambda * reg;
  if (grad) {
    for (double& g : *grad) g /= n;
    for (std::size_t j = 0; j < m; ++j) (*grad)[j] += lambda * theta[j];
  }
  return loss;
}

double Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void CheckLabels(std::span<const int> labels, std::size_t rows) {
  if (labels.size() != rows) {
    throw InputError("classifier: " + std::to_string(rows) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw InputError("classifier: labels must be 0 or 1");
  }
}

std::vector<std::vector<double>> ApplyMask(std::span<const std::vector<double>> rows,
                                           const std::vector<bool>& mask) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != mask.size()) {
      throw ContractError("classifier: row has " + std::to_string(r.size()) +
                          " features, mask has " + std::to_string(mask.size()));
    }
    std::vector<double> kept;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (mask[j]) kept.push_back(r[j]);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

double LinearScore(std::span<const double> w, double b, std::span<const double> x) {
  double z = b;
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z;
}

}  // namespace

double LogisticObjective(std::span<const std::vector<double>> x,
                         std::span<const int> y, std::span<const double> w,
                         double b, double lambda) {
  std::vector<double> theta(w.begin(), w.end());
  theta.push_back(b);
  return ObjectiveAndGradient(x, y, theta, lambda, nullptr);
}

SolverResult SolveLogistic(std::span<const std::vector<double>> x,
                           std::span<const int> y, double lambda,
                           const SolverOptions& options) {
  if (x.empty()) throw InputError("logistic: no rows");
  CheckLabels(y, x.size());
  if (!(lambda >= 0.0)) throw InputError("logistic: lambda must be >= 0");
  const std::size_t m = x[0].size();
  for (const auto& r : x) {
    if (r.size() != m) throw ContractError("logistic: ragged rows");
  }
  const Eigen::Index dim = static_cast<Eigen::Index>(m + 1);
  const double n = static_cast<double>(x.size());

  std::vector<double> theta(m + 1, 0.0), grad(m + 1), cand(m + 1);
  double f = ObjectiveAndGradient(x, y, theta, lambda, &grad);
  SolverResult res;
  res.gradient_norm = Norm(grad);
  int it = 0;
  while (res.gradient_norm >= options.tolerance && it < options.max_iterations) {
    ++it;
    // Hessian of the objective; the bias row and column are unpenalised.
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& row : x) {
      double z = theta[m];
      for (std::size_t j = 0; j < m; ++j) z += theta[j] * row[j];
      const double p = Sigmoid(z);
      const double s = p * (1.0 - p) / n;
      for (std::size_t a = 0; a <= m; ++a) {
        const double xa = a < m ? row[a] : 1.0;
        for (std::size_t b = 0; b <= a; ++b) {
          h(a, b) += s * xa * (b < m ? row[b] : 1.0);
        }
      }
    }
    for (std::size_t j = 0; j < m; ++j) h(j, j) += lambda;
    h = h.selfadjointView<Eigen::Lower>();
    const Eigen::Map<const Eigen::VectorXd> g(grad.data(), dim);

    // Levenberg damping keeps the direction a descent direction when the
    // Hessian is singular (constant columns, separable data).
    Eigen::VectorXd dir;
    double damping = 0.0;
    while (true) {
      Eigen::MatrixXd hd = h;
      hd.diagonal().array() += damping;
      Eigen::LLT<Eigen::MatrixXd> llt(hd);
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(g);
        if (dir.allFinite() && dir.dot(g) < 0.0) break;
      }
      damping = damping == 0.0 ? 1e-10 : damping * 10.0;
      if (damping > 1e10) {
        dir = -g;
        break;
      }
    }

    // Armijo backtracking.
    const double slope = dir.dot(g);
    double step = 1.0;
    double f_cand = f;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      for (Eigen::Index j = 0; j < dim; ++j) cand[j] = theta[j] + step * dir[j];
      f_cand = ObjectiveAndGradient(x, y, cand, lambda, nullptr);
      if (f_cand <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable
    theta = cand;
    f = ObjectiveAndGradient(x, y, theta, lambda, &grad);
    res.gradient_norm = Norm(grad);
  }
  res.weights.assign(theta.begin(), theta.begin() + m);
  res.bias = theta[m];
  res.objective = f;
  res.iterations = it;
  res.converged = res.gradient_norm < options.tolerance;
  return res;
}

LogRegModel Fit(std::span<const std::vector<double>> rows,
                std::span<const int> labels, std::vector<bool> mask,
                const FitOptions& options) {
  CheckLabels(labels, rows.size());
  if (rows.empty()) throw InputError("fit: no rows");
  if (mask.empty()) mask.assign(rows[0].size(), true);
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw InputError("fit: mask retains no feature");
  }
  const int positives = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  const int negatives = static_cast<int>(labels.size()) - positives;
  if (positives < 2 || negatives < 2) {
    throw InputError("fit: need at least two samples per class");
  }
  if (options.lambda_grid.empty()) throw InputError("fit: empty lambda grid");

  LogRegModel model;
  model.feature_mask = mask;
  const auto masked = ApplyMask(rows, mask);
  model.scaler = MinMaxScaler::Fit(masked);
  const auto x = model.scaler.Transform(masked);

  // Stratified fold assignment.
  const int folds = std::max(2, std::min({options.folds, positives, negatives}));
  std::vector<int> fold(rows.size());
  {
    std::mt19937_64 rng(options.seed);
    for (int cls : {1, 0}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == cls) idx.push_back(i);
      }
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % folds);
    }
  }

  std::size_t best = 0;
  for (std::size_t li = 0; li < options.lambda_grid.size(); ++li) {
    const double lambda = options.lambda_grid[li];
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::vector<double>> tx, vx;
      std::vector<int> ty, vy;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (fold[i] == f) {
          vx.push_back(x[i]);
          vy.push_back(labels[i]);
        } else {
          tx.push_back(x[i]);
          ty.push_back(labels[i]);
        }
      }
      const SolverResult r = SolveLogistic(tx, ty, lambda, options.solver);
      std::vector<double> scores;
      for (const auto& row : vx) scores.push_back(LinearScore(r.weights, r.bias, row));
      total += RocAuc(scores, vy).auc;
    }
    model.cv_auc.push_back(total / folds);
    if (model.cv_auc[li] > model.cv_auc[best] ||
        (model.cv_auc[li] == model.cv_auc[best] &&
         lambda > options.lambda_grid[best])) {
      best = li;
    }
  }

  model.l2_lambda = options.lambda_grid[best];
  const SolverResult r = SolveLogistic(x, labels, model.l2_lambda, options.solver);
  model.weights = r.weights;
  model.bias = r.bias;
  model.converged = r.converged;
  return model;
}

double DecisionFunction(const LogRegModel& model, std::span<const double> row) {
  if (row.size() != model.feature_mask.size()) {
    throw ContractError("predict: row has " + std::to_string(row.size()) +
                        " features, model expects " +
                        std::to_string(model.feature_mask.size()));
  }
  std::vector<double> kept;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (model.feature_mask[j]) kept.push_back(row[j]);
  }
  return LinearScore(model.weights, model.bias, model.scaler.Transform(kept));
}

double PredictProba(const LogRegModel& model, std::span<const double> row) {
  return Sigmoid(DecisionFunction(model, row));
}

RocResult RocAuc(std::span<const double> scores, std::span<const int> labels) {
  CheckLabels(labels, scores.size());
  const std::int64_t pos = std::count(labels.begin(), labels.end(), 1);
  const std::int64_t neg = static_cast<std::int64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw InputError("roc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult res;
  res.curve.fpr.push_back(0.0);
  res.curve.tpr.push_back(0.0);
  std::int64_t tp = 0, fp = 0;
  // Twice the area in units of one (positive, negative) pair.
  std::int64_t area2 = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double cut = scores[order[i]];
    std::int64_t dtp = 0, dfp = 0;
    while (i < order.size() && scores[order[i]] == cut) {
      (labels[order[i]] == 1 ? dtp : dfp)++;
      ++i;
    }
    area2 += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    res.curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    res.curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    res.curve.thresholds.push_back(cut);
  }
  res.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos * neg));
  return res;
}

double TprAtFpr(const RocCurve& curve, double max_fpr) {
  double best = 0.0;
  for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
    if (curve.fpr[i] <= max_fpr) best = std::max(best, curve.tpr[i]);
  }
  return best;
}

ThresholdMetrics ComputeThresholdMetrics(std::span<const double> probabilities,
                                         std::span<const int> labels,
                                         double threshold) {
  CheckLabels(labels, probabilities.size());
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InputError("threshold must lie in [0, 1]");
  }
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = probabilities[i] > threshold;
    if (labels[i] == 1) {
      (predicted ? tp : fn)++;
    } else {
      (predicted ? fp : tn)++;
    }
  }
  ThresholdMetrics m;
  m.tpr = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.fpr = fp + tn > 0 ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
  m.accuracy = labels.empty()
                   ? 0.0
                   : static_cast<double>(tp + tn) / static_cast<double>(labels.size());
  return m;
}

ThresholdMetrics ComputeThresholdMetrics(const LogRegModel& model,
                                         std::span<const std::vector<double>> rows,
                                         std::span<const int> labels,
                                         double threshold) {
  std::vector<double> probs;
  probs.reserve(rows.size());
  for (const auto& r : rows) probs.push_back(PredictProba(model, r));
  return ComputeThresholdMetrics(probs, labels, threshold);
}

double SelectThreshold(std::span<const double> probabilities,
                       std::span<const int> labels) {
  CheckLabels(labels, probabilities.size());
  std::vector<double> candidates = {0.0};
  for (double p : probabilities) {
    if (p >= 0.0 && p <= 1.0) candidates.push_back(p);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_t = candidates.front();
  double best_acc = -1.0;
  for (double t : candidates) {
    const double acc = ComputeThresholdMetrics(probabilities, labels, t).accuracy;
    if (acc > best_acc) {
      best_acc = acc;
      best_t = t;
    }
  }
  return best_t;
}

const std::vector<AblationSpec>& CanonicalAblations() {
  // Feature order: loss, logit, proj (before), loss, logit, proj (after), drift.
  static const std::vector<AblationSpec> specs = [] {
    auto without = [](std::string name, std::initializer_list<int> drop) {
      std::vector<bool> keep(kNumDriftFeatures, true);
      for (int j : drop) keep[j] = false;
      return AblationSpec{std::move(name), std::move(keep)};
    };
    return std::vector<AblationSpec>{
        without("all", {}),
        without("all but loss before", {0}),
        without("all but logit before", {1}),
        without("all but feat proj before", {2}),
        without("all but loss after", {3}),
        without("all but logit after", {4}),
        without("all but feat proj after", {5}),
        without("all but euclid drift", {6}),
        without("all but group before", {0, 1, 2}),
        without("all but group after", {3, 4, 5}),
        without("all but loss", {0, 3}),
        without("all but logit", {1, 4}),
        without("all but feat proj", {2, 5}),
    };
  }();
  return specs;
}

std::vector<AblationRow> RunAblation(std::span<const std::vector<double>> train,
                                     std::span<const int> train_labels,
                                     std::span<const std::vector<double>> test,
                                     std::span<const int> test_labels,
                                     std::span<const AblationSpec> specs,
                                     const FitOptions& options) {
  std::vector<AblationRow> out;
  for (const AblationSpec& spec : specs) {
    if (std::none_of(spec.keep.begin(), spec.keep.end(), [](bool b) { return b; })) {
      throw InputError("ablation '" + spec.name + "' retains no feature");
    }
    const LogRegModel model = Fit(train, train_labels, spec.keep, options);
    std::vector<double> scores;
    scores.reserve(test.size());
    for (const auto& r : test) scores.push_back(DecisionFunction(model, r));
    out.push_back({spec.name, RocAuc(scores, test_labels).auc});
  }
  return out;
}

}  // namespace gdrift
