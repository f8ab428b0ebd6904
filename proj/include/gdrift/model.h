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

#ifndef GDRIFT_MODEL_H_
#define GDRIFT_MODEL_H_

// Small decoder-only transformer with explicit parameter snapshot/restore and
// single-step SGD in either direction.
//
// Architecture: token + learned positional embeddings, `n_layers` pre-norm
// blocks (causal multi-head attention, GELU feed-forward), a final layer norm
// and an untied output projection. The hidden state exposed in ForwardTrace is
// the final-layer-norm output at the last prompt position, i.e. the vector
// that is multiplied by the output projection.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gdrift/tensor.h"

namespace gdrift {

struct ModelConfig {
  int vocab_size = 0;
  int model_dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 256;
  int max_seq_len = 32;
  std::uint64_t rng_seed = 0;

  int head_dim() const { return model_dim / n_heads; }
  // Throws InputError when the configuration is unusable.
  void Validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ForwardTrace {
  Tensor logits;  // [V] at the last prompt position
  Tensor hidden;  // [d] at the same position
};

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

enum class Direction { kAscent, kDescent };

// Deep copy of a parameter set plus its content checksum.
struct ParamSnapshot {
  TensorMap tensors;
  std::string checksum;
};

// The model surface the attacks are written against. A transformer is the
// production implementation; tests plug in closed-form toy models.
class CausalLM {
 public:
  virtual ~CausalLM() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t hidden_size() const = 0;

  // Logits and hidden state at the last position of `prompt`.
  virtual ForwardTrace Forward(std::span<const int> prompt) const = 0;
  // Row i holds log p(. | tokens[0..i]); shape [tokens.size(), V].
  virtual Tensor SequenceLogProbs(std::span<const int> tokens) const = 0;
  // Cross-entropy of `target` after `prompt`, and its parameter gradient.
  virtual LossAndGrad LossAndGradient(std::span<const int> prompt,
                                      int target) const = 0;

  virtual TensorMap& params() = 0;
  virtual const TensorMap& params() const = 0;
};

class Transformer final : public CausalLM {
 public:
  Transformer(ModelConfig config, TensorMap params);

  const ModelConfig& config() const { return config_; }

  std::size_t vocab_size() const override { return config_.vocab_size; }
  std::size_t hidden_size() const override { return config_.model_dim; }
  ForwardTrace Forward(std::span<const int> prompt) const override;
  Tensor SequenceLogProbs(std::span<const int> tokens) const override;
  LossAndGrad LossAndGradient(std::span<const int> prompt,
                              int target) const override;
  TensorMap& params() override { return params_; }
  const TensorMap& params() const override { return params_; }

 private:
  void CheckTokens(std::span<const int> tokens) const;

  ModelConfig config_;
  TensorMap params_;
};

// Parameter names and shapes implied by a configuration, in map order.
std::vector<std::pair<std::string, Shape>> ParameterLayout(
    const ModelConfig& config);

// Deterministic initialisation: weight matrices ~ N(0, 1/fan_in) (residual
// output projections further scaled by 1/sqrt(2 n_layers)), embeddings
// ~ N(0, 0.1^2), biases and layer-norm shifts zero, layer-norm scales one.
Transformer InitModel(ModelConfig config, std::uint64_t seed);

// theta <- theta + lr * grad (ascent) or theta - lr * grad (descent).
void SgdStep(TensorMap& params, const GradientSet& grads, double lr,
             Direction direction);

ParamSnapshot Snapshot(const TensorMap& params);
// Copies the snapshot back and verifies the checksum of the result. Throws
// IntegrityError on name/shape mismatch or checksum failure.
void Restore(TensorMap& params, const ParamSnapshot& snapshot);

struct TrainExample {
  std::vector<int> prompt;
  int target = 0;
};

struct TrainOptions {
  int epochs = 1;
  double lr = 0.05;
  std::uint64_t seed = 0;
  // Epoch index to start from; lets a resumed run continue the same
  // per-epoch shuffle sequence.
  int start_epoch = 0;
  // Called after every completed epoch with its index and mean loss.
  std::function<void(int, double)> on_epoch;
};

struct TrainingLog {
  // Mean loss of the per-sample steps within each epoch.
  std::vector<double> epoch_loss;
  // Mean loss over the training set after the final epoch.
  double final_loss = 0.0;
};

// Batch-size-1 SGD descent over a seeded shuffle of `examples`. Throws
// InputError for an empty set or epochs < 1 and TrainingError when an epoch
// diverges.
TrainingLog Train(CausalLM& model, std::span<const TrainExample> examples,
                  const TrainOptions& options);

// Mean cross-entropy of each example's target.
double MeanLoss(const CausalLM& model, std::span<const TrainExample> examples);

}  // namespace gdrift

#endif  // GDRIFT_MODEL_H_
