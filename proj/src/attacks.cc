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

#include "gdrift/attacks.h"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <utility>

#include "gdrift/autodiff.h"
#include "gdrift/error.h"
#include "gdrift/io.h"

namespace gdrift {
namespace {

double CrossEntropyOf(const Tensor& logits, int target) {
  ad::Graph g;
  return ad::CrossEntropy(g.Constant(logits), target).value().item();
}

double Project(const Tensor& hidden, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += hidden[i] * v[i];
  return s;
}

std::vector<std::string_view> SplitCsvLine(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string_view> Lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    pos = end + 1;
  }
  return out;
}

double ParseDouble(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InputError("csv: bad number '" + std::string(s) + "'");
  }
  return v;
}

int ParseInt(std::string_view s) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InputError("csv: bad integer '" + std::string(s) + "'");
  }
  return v;
}

Label ParseLabelColumn(std::string_view s) {
  const int v = ParseInt(s);
  if (v != 0 && v != 1) throw InputError("csv: label must be 0 or 1");
  return v == 1 ? Label::kMember : Label::kNonMember;
}

}  // namespace

ProbeDirection ProbeDirection::Random(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw InputError("probe: dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ProbeDirection p;
  p.seed = seed;
  p.v.resize(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : p.v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : p.v) x /= norm;
  return p;
}

std::array<double, kNumDriftFeatures> DriftFeatures::ToArray() const {
  return {loss_before, logit_before, proj_before, loss_after,
          logit_after, proj_after,   hidden_drift};
}

DriftFeatures DriftFeatures::FromArray(std::span<const double> v) {
  if (v.size() != kNumDriftFeatures) {
    throw ContractError("drift features: expected 7 values");
  }
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

const std::array<std::string_view, kNumDriftFeatures>& DriftFeatures::Names() {
  static constexpr std::array<std::string_view, kNumDriftFeatures> kNames = {
      "loss_before", "logit_before", "proj_before", "loss_after",
      "logit_after", "proj_after",   "hidden_drift"};
  return kNames;
}

namespace internal {

DriftFeatures ComputeDrift(CausalLM& model, std::span<const int> prompt,
                           int target, const ProbeDirection& probe, double eta,
                           DriftTrace* trace) {
  if (probe.dim() != model.hidden_size()) {
    throw InputError("gdrift: probe dimension " + std::to_string(probe.dim()) +
                     " does not match hidden size " +
                     std::to_string(model.hidden_size()));
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw InputError("gdrift: eta must be finite and non-negative");
  }
  DriftFeatures f;
  const ForwardTrace before = model.Forward(prompt);
  f.loss_before = CrossEntropyOf(before.logits, target);
  f.logit_before = before.logits[static_cast<std::size_t>(target)];
  f.proj_before = Project(before.hidden, probe.v);

  const ParamSnapshot original = Snapshot(model.params());
  ForwardTrace after;
  try {
    LossAndGrad lg = model.LossAndGradient(prompt, target);
    SgdStep(model.params(), lg.grads, eta, Direction::kAscent);
    after = model.Forward(prompt);
  } catch (...) {
    Restore(model.params(), original);
    throw;
  }
  Restore(model.params(), original);

  f.loss_after = CrossEntropyOf(after.logits, target);
  f.logit_after = after.logits[static_cast<std::size_t>(target)];
  f.proj_after = Project(after.hidden, probe.v);
  double sq = 0.0;
  for (std::size_t i = 0; i < before.hidden.size(); ++i) {
    const double d = after.hidden[i] - before.hidden[i];
    sq += d * d;
  }
  f.hidden_drift = std::sqrt(sq);
  if (trace != nullptr) {
    trace->hidden_before = before.hidden;
    trace->hidden_after = after.hidden;
  }
  return f;
}

double NeighbourScoreFromLosses(double sample_loss,
                                std::span<const double> neighbour_losses) {
  if (neighbour_losses.empty()) {
    throw InputError("neighbour: at least one neighbour loss required");
  }
  double total = 0.0;
  for (double l : neighbour_losses) total += l;
  return total / static_cast<double>(neighbour_losses.size()) - sample_loss;
}

}  // namespace internal

DriftFeatures GDriftFeatures(CausalLM& model, std::span<const int> prompt,
                             int target, const ProbeDirection& probe,
                             double eta, DriftTrace* trace) {
  if (!(eta > 0.0)) throw InputError("gdrift: eta must be > 0");
  return internal::ComputeDrift(model, prompt, target, probe, eta, trace);
}

std::vector<double> TokenLogLikelihoods(const CausalLM& model,
                                        std::span<const int> tokens) {
  if (tokens.size() < 2) {
    throw InputError("token log-likelihoods need at least two tokens");
  }
  const Tensor lp = model.SequenceLogProbs(tokens);
  std::vector<double> ll(tokens.size() - 1);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    ll[i - 1] = lp.at(i - 1, static_cast<std::size_t>(tokens[i]));
  }
  return ll;
}

double MinKFromLogLikelihoods(std::span<const double> ll, double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw InputError("min-k: k must lie in (0, 100]");
  }
  if (ll.empty()) throw InputError("min-k: no token log-likelihoods");
  std::vector<double> sorted(ll.begin(), ll.end());
  std::sort(sorted.begin(), sorted.end());
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::floor(k_percent / 100.0 * static_cast<double>(sorted.size()) + 1e-9)));
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += sorted[i];
  return total / static_cast<double>(count);
}

double MinKScore(const CausalLM& model, std::span<const int> tokens,
                 double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw InputError("min-k: k must lie in (0, 100]");
  }
  return MinKFromLogLikelihoods(TokenLogLikelihoods(model, tokens), k_percent);
}

double PerplexityFromLogLikelihoods(std::span<const double> ll) {
  if (ll.empty()) throw InputError("perplexity: no token log-likelihoods");
  double nll = 0.0;
  for (double x : ll) nll -= x;
  nll /= static_cast<double>(ll.size());
  return std::exp(std::min(nll, kMaxMeanNll));
}

double Perplexity(const CausalLM& model, std::span<const int> tokens) {
  return PerplexityFromLogLikelihoods(TokenLogLikelihoods(model, tokens));
}

double PerplexityScore(const CausalLM& model, std::span<const int> tokens) {
  return -Perplexity(model, tokens);
}

std::size_t ZlibCompressedSize(std::string_view text) {
  uLongf bound = compressBound(static_cast<uLong>(text.size()));
  std::vector<Bytef> out(bound);
  const int rc = compress2(out.data(), &bound,
                           reinterpret_cast<const Bytef*>(text.data()),
                           static_cast<uLong>(text.size()), Z_DEFAULT_COMPRESSION);
  if (rc != Z_OK) throw Error("zlib: compress2 failed with code " + std::to_string(rc));
  return bound;
}

double ZlibScore(const CausalLM& model, std::string_view text,
                 std::span<const int> tokens) {
  if (text.empty()) throw InputError("zlib: empty text");
  const double bits = 8.0 * static_cast<double>(ZlibCompressedSize(text));
  return -(Perplexity(model, tokens) / bits);
}

double TargetNll(const CausalLM& model, std::span<const int> prompt, int target) {
  const Tensor logits = model.Forward(prompt).logits;
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw IndexError("target id " + std::to_string(target) + " outside vocabulary");
  }
  double mx = logits[0];
  for (double z : logits.values()) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : logits.values()) sum += std::exp(z - mx);
  return -(logits[target] - mx - std::log(sum));
}

std::vector<std::vector<int>> GenerateNeighbours(
    const CausalLM& model, const Sample& sample,
    const NeighbourOptions& options) {
  if (options.n_neighbours < 1) {
    throw InputError("neighbour: n_neighbours must be >= 1");
  }
  if (sample.prompt_tokens.size() < 2) {
    throw InputError("neighbour: prompt too short to perturb");
  }
  const std::vector<int> seq = sample.FullSequence();
  const Tensor lp = model.SequenceLogProbs(seq);
  const std::size_t vocab = lp.cols();

  std::seed_seq sseq{static_cast<std::uint32_t>(options.seed),
                     static_cast<std::uint32_t>(options.seed >> 32),
                     static_cast<std::uint32_t>(sample.sample_id)};
  std::mt19937_64 rng(sseq);
  std::uniform_int_distribution<std::size_t> pick_pos(
      1, sample.prompt_tokens.size() - 1);

  std::vector<std::vector<int>> out;
  out.reserve(options.n_neighbours);
  std::vector<double> probs(vocab);
  for (int n = 0; n < options.n_neighbours; ++n) {
    const std::size_t pos = pick_pos(rng);
    for (std::size_t j = 0; j < vocab; ++j) probs[j] = std::exp(lp.at(pos - 1, j));
    std::discrete_distribution<int> draw(probs.begin(), probs.end());
    int token = seq[pos];
    for (int tries = 0; tries < options.max_resample && token == seq[pos]; ++tries) {
      token = draw(rng);
    }
    if (token == seq[pos]) {
      // The model is near-deterministic here; take the likeliest other token.
      double best = -1.0;
      for (std::size_t j = 0; j < vocab; ++j) {
        if (static_cast<int>(j) != seq[pos] && probs[j] > best) {
          best = probs[j];
          token = static_cast<int>(j);
        }
      }
    }
    std::vector<int> neighbour = seq;
    neighbour[pos] = token;
    out.push_back(std::move(neighbour));
  }
  return out;
}

double NeighbourScore(const CausalLM& model, const Sample& sample,
                      const NeighbourOptions& options) {
  const auto neighbours = GenerateNeighbours(model, sample, options);
  std::vector<double> losses;
  losses.reserve(neighbours.size());
  const std::size_t len = sample.prompt_tokens.size();
  for (const auto& n : neighbours) {
    losses.push_back(TargetNll(model, std::span<const int>(n).first(len), sample.target));
  }
  return internal::NeighbourScoreFromLosses(
      TargetNll(model, sample.prompt_tokens, sample.target), losses);
}

MinMaxScaler::MinMaxScaler(std::vector<double> min, std::vector<double> max)
    : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) {
    throw ContractError("minmax: min and max lengths differ");
  }
}

MinMaxScaler MinMaxScaler::Fit(std::span<const std::vector<double>> rows) {
  if (rows.size() < 2) throw InputError("minmax: need at least two rows");
  std::vector<double> lo = rows[0], hi = rows[0];
  for (const auto& r : rows) {
    if (r.size() != lo.size()) throw ContractError("minmax: ragged rows");
    for (std::size_t j = 0; j < r.size(); ++j) {
      lo[j] = std::min(lo[j], r[j]);
      hi[j] = std::max(hi[j], r[j]);
    }
  }
  return MinMaxScaler(std::move(lo), std::move(hi));
}

std::vector<double> MinMaxScaler::Transform(std::span<const double> row) const {
  if (row.size() != min_.size()) {
    throw ContractError("minmax: row has " + std::to_string(row.size()) +
                        " columns, scaler has " + std::to_string(min_.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    const double range = max_[j] - min_[j];
    out[j] = range > 0.0 ? (row[j] - min_[j]) / range : 0.0;
  }
  return out;
}

std::vector<std::vector<double>> MinMaxScaler::Transform(
    std::span<const std::vector<double>> rows) const {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(Transform(r));
  return out;
}

std::vector<std::vector<double>> NormalizeMinMax(
    std::span<const std::vector<double>> train,
    std::span<const std::vector<double>> rows) {
  return MinMaxScaler::Fit(train).Transform(rows);
}

std::string SerializeFeatureTable(std::span<const FeatureRow> rows) {
  std::string out = "sample_id,label";
  for (auto name : DriftFeatures::Names()) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (const FeatureRow& r : rows) {
    out += std::to_string(r.sample_id);
    out += r.label == Label::kMember ? ",1" : ",0";
    for (double v : r.features.ToArray()) {
      out += ',';
      out += FormatDouble(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<FeatureRow> ParseFeatureTable(std::string_view text) {
  const auto lines = Lines(text);
  if (lines.empty()) throw InputError("feature table: empty");
  std::string expected = "sample_id,label";
  for (auto name : DriftFeatures::Names()) {
    expected += ',';
    expected += name;
  }
  if (lines[0] != expected) throw InputError("feature table: unexpected header");
  std::vector<FeatureRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = SplitCsvLine(lines[i]);
    if (cols.size() != 2 + kNumDriftFeatures) {
      throw InputError("feature table: line " + std::to_string(i + 1) +
                       " has wrong column count");
    }
    FeatureRow r;
    r.sample_id = ParseInt(cols[0]);
    r.label = ParseLabelColumn(cols[1]);
    std::array<double, kNumDriftFeatures> v;
    for (std::size_t j = 0; j < kNumDriftFeatures; ++j) v[j] = ParseDouble(cols[2 + j]);
    r.features = DriftFeatures::FromArray(v);
    rows.push_back(r);
  }
  return rows;
}

std::string SerializeScoreTable(const ScoreTable& t) {
  std::string out = "sample_id,label";
  for (const auto& a : t.attacks) out += "," + a;
  out += '\n';
  for (std::size_t i = 0; i < t.sample_ids.size(); ++i) {
    out += std::to_string(t.sample_ids[i]);
    out += t.labels[i] == Label::kMember ? ",1" : ",0";
    for (double v : t.scores[i]) {
      out += ',';
      out += FormatDouble(v);
    }
    out += '\n';
  }
  return out;
}

ScoreTable ParseScoreTable(std::string_view text) {
  const auto lines = Lines(text);
  if (lines.empty()) throw InputError("score table: empty");
  const auto header = SplitCsvLine(lines[0]);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label") {
    throw InputError("score table: unexpected header");
  }
  ScoreTable t;
  for (std::size_t j = 2; j < header.size(); ++j) t.attacks.emplace_back(header[j]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = SplitCsvLine(lines[i]);
    if (cols.size() != header.size()) {
      throw InputError("score table: line " + std::to_string(i + 1) +
                       " has wrong column count");
    }
    t.sample_ids.push_back(ParseInt(cols[0]));
    t.labels.push_back(ParseLabelColumn(cols[1]));
    std::vector<double> row;
    for (std::size_t j = 2; j < cols.size(); ++j) row.push_back(ParseDouble(cols[j]));
    t.scores.push_back(std::move(row));
  }
  return t;
}

}  // namespace gdrift
