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

#include "gdrift/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "gdrift/autodiff.h"
#include "gdrift/checksum.h"
#include "gdrift/error.h"

namespace gdrift {
namespace {

std::string LayerPrefix(int layer) {
  return "layers." + std::to_string(layer) + ".";
}

// Final-layer-norm output for every position, shape [n, d].
ad::Var BuildHidden(ad::Graph& g, const ModelConfig& c, const TensorMap& p,
                    std::span<const int> tokens) {
  auto param = [&](const std::string& name) {
    return g.Parameter(name, p.at(name));
  };
  const std::size_t n = tokens.size();
  const std::size_t d = static_cast<std::size_t>(c.model_dim);
  const std::size_t hd = static_cast<std::size_t>(c.head_dim());
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ad::Var x = ad::Add(ad::Embedding(param("tok_emb"), tokens),
                      ad::SliceRows(param("pos_emb"), 0, n));
  for (int layer = 0; layer < c.n_layers; ++layer) {
    const std::string pre = LayerPrefix(layer);
    ad::Var a = ad::LayerNorm(x, param(pre + "ln1.gamma"),
                              param(pre + "ln1.beta"));
    ad::Var qkv = ad::AddBias(ad::MatMul(a, param(pre + "attn.w_qkv")),
                              param(pre + "attn.b_qkv"));
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(c.n_heads));
    for (std::size_t h = 0; h < static_cast<std::size_t>(c.n_heads); ++h) {
      ad::Var q = ad::SliceCols(qkv, h * hd, hd);
      ad::Var k = ad::SliceCols(qkv, d + h * hd, hd);
      ad::Var v = ad::SliceCols(qkv, 2 * d + h * hd, hd);
      ad::Var scores = ad::Scale(ad::MatMul(q, ad::Transpose(k)), attn_scale);
      heads.push_back(ad::MatMul(ad::CausalSoftmax(scores), v));
    }
    ad::Var attn = heads.size() == 1 ? heads[0] : ad::ConcatCols(heads);
    x = ad::Add(x, ad::AddBias(ad::MatMul(attn, param(pre + "attn.w_out")),
                               param(pre + "attn.b_out")));
    ad::Var m = ad::LayerNorm(x, param(pre + "ln2.gamma"),
                              param(pre + "ln2.beta"));
    ad::Var f = ad::Gelu(ad::AddBias(ad::MatMul(m, param(pre + "ffn.w_in")),
                                     param(pre + "ffn.b_in")));
    x = ad::Add(x, ad::AddBias(ad::MatMul(f, param(pre + "ffn.w_out")),
                               param(pre + "ffn.b_out")));
  }
  return ad::LayerNorm(x, param("ln_f.gamma"), param("ln_f.beta"));
}

struct LastPosition {
  ad::Var hidden;  // [d]
  ad::Var logits;  // [V]
};

LastPosition BuildLast(ad::Graph& g, const ModelConfig& c, const TensorMap& p,
                       std::span<const int> tokens) {
  ad::Var hf = BuildHidden(g, c, p, tokens);
  ad::Var hidden = ad::Row(hf, tokens.size() - 1);
  ad::Var row = ad::Reshape(hidden, Shape{1, static_cast<std::size_t>(c.model_dim)});
  ad::Var logits = ad::Reshape(ad::MatMul(row, g.Parameter("lm_head", p.at("lm_head"))),
                               Shape{static_cast<std::size_t>(c.vocab_size)});
  return {hidden, logits};
}

void CheckSameLayout(const TensorMap& params, const TensorMap& other,
                     const char* what) {
  if (params.size() != other.size()) {
    throw ContractError(std::string(what) + ": parameter count " +
                        std::to_string(params.size()) + " vs " +
                        std::to_string(other.size()));
  }
  for (auto a = params.begin(), b = other.begin(); a != params.end(); ++a, ++b) {
    if (a->first != b->first) {
      throw ContractError(std::string(what) + ": name mismatch '" + a->first +
                          "' vs '" + b->first + "'");
    }
    if (a->second.shape() != b->second.shape()) {
      throw ContractError(std::string(what) + ": shape mismatch for '" +
                          a->first + "': " + ShapeString(a->second.shape()) +
                          " vs " + ShapeString(b->second.shape()));
    }
  }
}

}  // namespace

void ModelConfig::Validate() const {
  if (vocab_size < 2) throw InputError("model config: vocab_size must be >= 2");
  if (model_dim <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_dim <= 0 ||
      max_seq_len <= 0) {
    throw InputError("model config: all dimensions must be positive");
  }
  if (model_dim % n_heads != 0) {
    throw InputError("model config: model_dim " + std::to_string(model_dim) +
                     " not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::vector<std::pair<std::string, Shape>> ParameterLayout(
    const ModelConfig& c) {
  c.Validate();
  const std::size_t v = c.vocab_size, d = c.model_dim, f = c.ffn_dim,
                    t = c.max_seq_len;
  std::vector<std::pair<std::string, Shape>> layout = {
      {"tok_emb", {v, d}},      {"pos_emb", {t, d}},  {"ln_f.gamma", {d}},
      {"ln_f.beta", {d}},       {"lm_head", {d, v}},
  };
  for (int layer = 0; layer < c.n_layers; ++layer) {
    const std::string pre = LayerPrefix(layer);
    layout.push_back({pre + "ln1.gamma", {d}});
    layout.push_back({pre + "ln1.beta", {d}});
    layout.push_back({pre + "attn.w_qkv", {d, 3 * d}});
    layout.push_back({pre + "attn.b_qkv", {3 * d}});
    layout.push_back({pre + "attn.w_out", {d, d}});
    layout.push_back({pre + "attn.b_out", {d}});
    layout.push_back({pre + "ln2.gamma", {d}});
    layout.push_back({pre + "ln2.beta", {d}});
    layout.push_back({pre + "ffn.w_in", {d, f}});
    layout.push_back({pre + "ffn.b_in", {f}});
    layout.push_back({pre + "ffn.w_out", {f, d}});
    layout.push_back({pre + "ffn.b_out", {d}});
  }
  std::sort(layout.begin(), layout.end());
  return layout;
}

Transformer::Transformer(ModelConfig config, TensorMap params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
  const auto layout = ParameterLayout(config_);
  if (layout.size() != params_.size()) {
    throw IntegrityError("transformer: expected " +
                         std::to_string(layout.size()) + " tensors, got " +
                         std::to_string(params_.size()));
  }
  for (const auto& [name, shape] : layout) {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw IntegrityError("transformer: missing tensor '" + name + "'");
    }
    if (it->second.shape() != shape) {
      throw IntegrityError("transformer: tensor '" + name + "' has shape " +
                           ShapeString(it->second.shape()) + ", expected " +
                           ShapeString(shape));
    }
  }
}

void Transformer::CheckTokens(std::span<const int> tokens) const {
  if (tokens.empty()) throw InputError("forward: empty prompt");
  if (tokens.size() > static_cast<std::size_t>(config_.max_seq_len)) {
    throw InputError("forward: prompt of " + std::to_string(tokens.size()) +
                     " tokens exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len));
  }
  for (int id : tokens) {
    if (id < 0 || id >= config_.vocab_size) {
      throw InputError("forward: token id " + std::to_string(id) +
                       " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
}

ForwardTrace Transformer::Forward(std::span<const int> prompt) const {
  CheckTokens(prompt);
  ad::Graph g;
  LastPosition last = BuildLast(g, config_, params_, prompt);
  return {last.logits.value(), last.hidden.value()};
}

Tensor Transformer::SequenceLogProbs(std::span<const int> tokens) const {
  CheckTokens(tokens);
  ad::Graph g;
  ad::Var hf = BuildHidden(g, config_, params_, tokens);
  ad::Var logits = ad::MatMul(hf, g.Parameter("lm_head", params_.at("lm_head")));
  return ad::LogSoftmax(logits).value();
}

LossAndGrad Transformer::LossAndGradient(std::span<const int> prompt,
                                         int target) const {
  CheckTokens(prompt);
  ad::Graph g;
  LastPosition last = BuildLast(g, config_, params_, prompt);
  ad::Var loss = ad::CrossEntropy(last.logits, target);
  return {loss.value().item(), g.Backward(loss, params_)};
}

Transformer InitModel(ModelConfig config, std::uint64_t seed) {
  config.rng_seed = seed;
  const auto layout = ParameterLayout(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.n_layers);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };

  TensorMap params;
  for (const auto& [name, shape] : layout) {
    Tensor t(shape);
    if (ends_with(name, ".gamma")) {
      std::fill(t.values().begin(), t.values().end(), 1.0);
    } else if (shape.size() == 2) {
      double stddev = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      if (name == "tok_emb" || name == "pos_emb") stddev = 0.1;
      if (ends_with(name, "attn.w_out") || ends_with(name, "ffn.w_out")) {
        stddev *= residual_scale;
      }
      for (double& v : t.values()) v = stddev * normal(rng);
    }
    params.emplace(name, std::move(t));
  }
  return Transformer(config, std::move(params));
}

void SgdStep(TensorMap& params, const GradientSet& grads, double lr,
             Direction direction) {
  CheckSameLayout(params, grads, "sgd_step");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ContractError("sgd_step: learning rate must be finite and >= 0");
  }
  const double sign = direction == Direction::kAscent ? 1.0 : -1.0;
  auto g = grads.begin();
  for (auto& [name, t] : params) {
    const Tensor& grad = g->second;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += sign * (lr * grad[i]);
    ++g;
  }
}

ParamSnapshot Snapshot(const TensorMap& params) {
  return {params, TensorChecksum(params)};
}

void Restore(TensorMap& params, const ParamSnapshot& snapshot) {
  try {
    CheckSameLayout(params, snapshot.tensors, "restore");
  } catch (const ContractError& e) {
    throw IntegrityError(e.what());
  }
  auto src = snapshot.tensors.begin();
  for (auto& [name, t] : params) {
    std::copy(src->second.values().begin(), src->second.values().end(),
              t.values().begin());
    ++src;
  }
  const std::string now = TensorChecksum(params);
  if (now != snapshot.checksum) {
    throw IntegrityError("restore: checksum mismatch (expected " +
                         snapshot.checksum + ", got " + now + ")");
  }
}

double MeanLoss(const CausalLM& model, std::span<const TrainExample> examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const TrainExample& ex : examples) {
    const ForwardTrace trace = model.Forward(ex.prompt);
    ad::Graph g;
    total += ad::CrossEntropy(g.Constant(trace.logits), ex.target).value().item();
  }
  return total / static_cast<double>(examples.size());
}

TrainingLog Train(CausalLM& model, std::span<const TrainExample> examples,
                  const TrainOptions& options) {
  if (examples.empty()) throw InputError("train: empty member set");
  if (options.epochs < 1) throw InputError("train: epochs must be >= 1");
  if (!(options.lr > 0.0)) throw InputError("train: lr must be > 0");

  TrainingLog log;
  std::vector<std::size_t> order(examples.size());
  for (int e = 0; e < options.epochs; ++e) {
    const int epoch = options.start_epoch + e;
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                      static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    try {
      for (std::size_t idx : order) {
        const TrainExample& ex = examples[idx];
        LossAndGrad lg = model.LossAndGradient(ex.prompt, ex.target);
        total += lg.loss;
        SgdStep(model.params(), lg.grads, options.lr, Direction::kDescent);
      }
    } catch (const NumericError& err) {
      throw TrainingError("train: diverged in epoch " + std::to_string(epoch) +
                              ": " + err.what(),
                          epoch);
    }
    const double mean = total / static_cast<double>(examples.size());
    if (!std::isfinite(mean)) {
      throw TrainingError(
          "train: non-finite mean loss in epoch " + std::to_string(epoch), epoch);
    }
    log.epoch_loss.push_back(mean);
    if (options.on_epoch) options.on_epoch(epoch, mean);
  }
  log.final_loss = MeanLoss(model, examples);
  return log;
}

}  // namespace gdrift
