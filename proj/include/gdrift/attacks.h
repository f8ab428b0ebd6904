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

#ifndef GDRIFT_ATTACKS_H_
#define GDRIFT_ATTACKS_H_

// Membership signals computed against a CausalLM.
//
// GDriftFeatures applies one gradient-ascent step on the cross-entropy of the
// answer's first subtoken and records how loss, target logit, a fixed random
// projection of the hidden state, and the hidden state itself move. The
// baselines (Min-k%, perplexity, zlib ratio, neighbour comparison) score the
// full prompt+answer token sequence. Every score is oriented so that larger
// means "more member-like".

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdrift/corpus.h"
#include "gdrift/model.h"
#include "gdrift/tensor.h"

namespace gdrift {

inline constexpr double kDefaultEta = 1e-2;

struct ProbeDirection {
  std::vector<double> v;  // unit L2 norm
  std::uint64_t seed = 0;

  // Gaussian draw normalised to unit length.
  static ProbeDirection Random(std::size_t dim, std::uint64_t seed);
  std::size_t dim() const { return v.size(); }
};

inline constexpr std::size_t kNumDriftFeatures = 7;

// Field order is the classifier's feature order.
struct DriftFeatures {
  double loss_before = 0.0;
  double logit_before = 0.0;
  double proj_before = 0.0;
  double loss_after = 0.0;
  double logit_after = 0.0;
  double proj_after = 0.0;
  double hidden_drift = 0.0;

  std::array<double, kNumDriftFeatures> ToArray() const;
  static DriftFeatures FromArray(std::span<const double> values);
  static const std::array<std::string_view, kNumDriftFeatures>& Names();

  double LossDelta() const { return loss_after - loss_before; }
  double LogitDelta() const { return logit_after - logit_before; }
  double ProjDelta() const { return proj_after - proj_before; }
};

// Hidden states on either side of the update, for callers that audit the
// features.
struct DriftTrace {
  Tensor hidden_before;
  Tensor hidden_after;
};

// Throws InputError unless eta > 0 and the probe matches the hidden size.
// Parameters are restored bitwise before returning; a failed restore throws
// IntegrityError.
DriftFeatures GDriftFeatures(CausalLM& model, std::span<const int> prompt,
                             int target, const ProbeDirection& probe,
                             double eta = kDefaultEta,
                             DriftTrace* trace = nullptr);

// Per-token log-likelihoods log p(t_i | t_<i) for i = 1..n-1.
std::vector<double> TokenLogLikelihoods(const CausalLM& model,
                                        std::span<const int> tokens);

// Mean of the lowest k% token log-likelihoods (at least one token). Throws
// InputError for k outside (0, 100] or fewer than two tokens.
double MinKScore(const CausalLM& model, std::span<const int> tokens,
                 double k_percent);
double MinKFromLogLikelihoods(std::span<const double> ll, double k_percent);

// Mean negative log-likelihood is capped at this value before
// exponentiation.
inline constexpr double kMaxMeanNll = 700.0;

double Perplexity(const CausalLM& model, std::span<const int> tokens);
double PerplexityFromLogLikelihoods(std::span<const double> ll);
// -perplexity.
double PerplexityScore(const CausalLM& model, std::span<const int> tokens);

// DEFLATE (zlib container, default level) size of `text` in bytes.
std::size_t ZlibCompressedSize(std::string_view text);
// -(perplexity / compressed bits).
double ZlibScore(const CausalLM& model, std::string_view text,
                 std::span<const int> tokens);

struct NeighbourOptions {
  int n_neighbours = 10;
  std::uint64_t seed = 0;
  int max_resample = 64;
};

// Mean neighbour loss minus the sample's own loss, where loss is the
// cross-entropy of the first answer subtoken given the prompt, the quantity
// fine-tuning minimises. Each neighbour replaces one random prompt
// token (never position 0, never the answer) with a different token drawn
// from the model's predictive distribution at that position.
double NeighbourScore(const CausalLM& model, const Sample& sample,
                      const NeighbourOptions& options);
// The sequences NeighbourScore evaluates.
std::vector<std::vector<int>> GenerateNeighbours(
    const CausalLM& model, const Sample& sample,
    const NeighbourOptions& options);
// -log p(target | prompt) from a single forward pass.
double TargetNll(const CausalLM& model, std::span<const int> prompt, int target);

namespace internal {
// Same as GDriftFeatures but accepts eta == 0.
DriftFeatures ComputeDrift(CausalLM& model, std::span<const int> prompt,
                           int target, const ProbeDirection& probe, double eta,
                           DriftTrace* trace);
// Score from precomputed losses; lets tests evaluate the degenerate
// "neighbour equals sample" case.
double NeighbourScoreFromLosses(double sample_loss,
                                std::span<const double> neighbour_losses);
}  // namespace internal

// Per-column affine map onto [0, 1] fitted on training rows. Constant
// columns map to 0. Values outside the fitted range are not clipped.
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(std::vector<double> min, std::vector<double> max);

  static MinMaxScaler Fit(std::span<const std::vector<double>> rows);
  std::vector<double> Transform(std::span<const double> row) const;
  std::vector<std::vector<double>> Transform(
      std::span<const std::vector<double>> rows) const;

  const std::vector<double>& min() const { return min_; }
  const std::vector<double>& max() const { return max_; }
  std::size_t dim() const { return min_.size(); }

 private:
  std::vector<double> min_;
  std::vector<double> max_;
};

// Fits on `train` and transforms `rows`. Requires at least two train rows.
std::vector<std::vector<double>> NormalizeMinMax(
    std::span<const std::vector<double>> train,
    std::span<const std::vector<double>> rows);

// Feature table: CSV with header
//   sample_id,label,loss_before,logit_before,proj_before,loss_after,
//   logit_after,proj_after,hidden_drift
// label is 1 for members, 0 otherwise; values use shortest round-trip text.
struct FeatureRow {
  int sample_id = 0;
  Label label = Label::kNonMember;
  DriftFeatures features;
};

std::string SerializeFeatureTable(std::span<const FeatureRow> rows);
std::vector<FeatureRow> ParseFeatureTable(std::string_view text);

// Baseline score table: CSV with header sample_id,label,<attack>... .
struct ScoreTable {
  std::vector<std::string> attacks;
  std::vector<int> sample_ids;
  std::vector<Label> labels;
  std::vector<std::vector<double>> scores;  // [sample][attack]
};

std::string SerializeScoreTable(const ScoreTable& table);
ScoreTable ParseScoreTable(std::string_view text);

}  // namespace gdrift

#endif  // GDRIFT_ATTACKS_H_
