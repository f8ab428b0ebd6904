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

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gdrift/checksum.h"
#include "gdrift/corpus.h"
#include "gdrift/error.h"
#include "gdrift/model.h"
#include "oracles.h"
#include "test_models.h"

namespace gdrift {
namespace {

using testing::ScalarModel;
using testing::UniformModel;

double Softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// With target 0 the loss is softplus(-w) and dL/dw = sigmoid(w) - 1, so one
// ascent step moves w to w - eta * (1 - sigmoid(w)). Logit and hidden state
// are both w; the one-dimensional probe is +1 or -1.
TEST(GDriftTest, ScalarModelClosedForm) {
  const double w = 0.5;
  const double eta = 0.01;
  ScalarModel model(w);
  const ProbeDirection probe = ProbeDirection::Random(1, 3);
  const double v = probe.v[0];
  ASSERT_EQ(std::abs(v), 1.0);

  const double sigmoid = 1.0 / (1.0 + std::exp(-w));
  const double w_after = w - eta * (1.0 - sigmoid);
  const std::vector<int> prompt = {0, 1};
  const DriftFeatures f = GDriftFeatures(model, prompt, 0, probe, eta);
  EXPECT_NEAR(f.loss_before, Softplus(-w), 1e-15);
  EXPECT_NEAR(f.logit_before, w, 1e-15);
  EXPECT_NEAR(f.proj_before, w * v, 1e-15);
  EXPECT_NEAR(f.loss_after, Softplus(-w_after), 1e-15);
  EXPECT_NEAR(f.logit_after, w_after, 1e-15);
  EXPECT_NEAR(f.proj_after, w_after * v, 1e-15);
  EXPECT_NEAR(f.hidden_drift, eta * (1.0 - sigmoid), 1e-15);
  EXPECT_GT(f.LossDelta(), 0.0);
  EXPECT_EQ(model.w(), w);
}

TEST(GDriftTest, ArrayOrderMatchesNames) {
  DriftFeatures f{1, 2, 3, 4, 5, 6, 7};
  const auto a = f.ToArray();
  for (std::size_t i = 0; i < kNumDriftFeatures; ++i) EXPECT_EQ(a[i], i + 1.0);
  EXPECT_EQ(DriftFeatures::Names()[0], "loss_before");
  EXPECT_EQ(DriftFeatures::Names()[6], "hidden_drift");
  const DriftFeatures back = DriftFeatures::FromArray(a);
  EXPECT_EQ(back.proj_after, 6.0);
}

class TinyTransformerTest : public ::testing::Test {
 protected:
  TinyTransformerTest() : model_(MakeModel()), probe_(ProbeDirection::Random(8, 17)) {}

  static Transformer MakeModel() {
    ModelConfig c;
    c.vocab_size = 16;
    c.model_dim = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ffn_dim = 16;
    c.max_seq_len = 6;
    return InitModel(c, 4);
  }

  Transformer model_;
  ProbeDirection probe_;
  std::vector<int> prompt_ = {1, 5, 9, 2};
};

TEST_F(TinyTransformerTest, TinyEtaApproachesBefore) {
  const DriftFeatures f = GDriftFeatures(model_, prompt_, 7, probe_, 1e-10);
  EXPECT_NEAR(f.loss_after, f.loss_before, 1e-6);
  EXPECT_NEAR(f.logit_after, f.logit_before, 1e-6);
  EXPECT_NEAR(f.proj_after, f.proj_before, 1e-6);
  EXPECT_LT(f.hidden_drift, 1e-6);
}

TEST_F(TinyTransformerTest, ZeroEtaThroughInternalEntryPoint) {
  const DriftFeatures f = internal::ComputeDrift(model_, prompt_, 7, probe_, 0.0, nullptr);
  EXPECT_EQ(f.loss_after, f.loss_before);
  EXPECT_EQ(f.logit_after, f.logit_before);
  EXPECT_EQ(f.proj_after, f.proj_before);
  EXPECT_EQ(f.hidden_drift, 0.0);
}

TEST_F(TinyTransformerTest, RejectsBadArguments) {
  EXPECT_THROW(GDriftFeatures(model_, prompt_, 7, probe_, 0.0), InputError);
  EXPECT_THROW(GDriftFeatures(model_, prompt_, 7, probe_, -1e-2), InputError);
  EXPECT_THROW(GDriftFeatures(model_, prompt_, 7, ProbeDirection::Random(4, 1)), InputError);
  EXPECT_THROW(ProbeDirection::Random(0, 1), InputError);
}

TEST_F(TinyTransformerTest, ParamsUnchangedAfterManyCalls) {
  const std::string before = TensorChecksum(model_.params());
  const TensorMap copy = model_.params();
  for (int i = 0; i < 20; ++i) GDriftFeatures(model_, prompt_, i % 16, probe_);
  EXPECT_EQ(TensorChecksum(model_.params()), before);
  EXPECT_TRUE(BitwiseEquals(model_.params(), copy));
}

TEST_F(TinyTransformerTest, ProjectionIdentityAndLossAgreement) {
  DriftTrace trace;
  const DriftFeatures f = GDriftFeatures(model_, prompt_, 3, probe_, kDefaultEta, &trace);
  double before = 0.0, after = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < probe_.dim(); ++i) {
    before += trace.hidden_before[i] * probe_.v[i];
    after += trace.hidden_after[i] * probe_.v[i];
    const double d = trace.hidden_after[i] - trace.hidden_before[i];
    sq += d * d;
  }
  EXPECT_NEAR(f.proj_before, before, 1e-12);
  EXPECT_NEAR(f.proj_after, after, 1e-12);
  EXPECT_NEAR(f.hidden_drift, std::sqrt(sq), 1e-12);
  EXPECT_NEAR(f.loss_before, model_.LossAndGradient(prompt_, 3).loss, 1e-12);
  EXPECT_NEAR(f.logit_before, model_.Forward(prompt_).logits[3], 1e-12);
  EXPECT_GT(f.loss_after, f.loss_before);
}

TEST(ProbeTest, UnitNormAndDeterministic) {
  const ProbeDirection a = ProbeDirection::Random(64, 5);
  double norm = 0.0;
  for (double x : a.v) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-14);
  EXPECT_EQ(a.v, ProbeDirection::Random(64, 5).v);
  EXPECT_NE(a.v, ProbeDirection::Random(64, 6).v);
}

TEST(MinKTest, HundredPercentIsMean) {
  const std::vector<double> ll = {-0.5, -2.0, -0.1, -3.0};
  EXPECT_DOUBLE_EQ(MinKFromLogLikelihoods(ll, 100.0), (-0.5 - 2.0 - 0.1 - 3.0) / 4.0);
}

TEST(MinKTest, UniformModelGivesMinusLogV) {
  const UniformModel model(8);
  const std::vector<int> tokens = {1, 2, 3, 4, 5};
  for (double k : {10.0, 20.0, 50.0, 100.0}) {
    EXPECT_NEAR(MinKScore(model, tokens, k), -std::log(8.0), 1e-14);
  }
}

TEST(MinKTest, FiveTokensTwentyPercentIsBruteForceMinimum) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-6.0, 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ll(5);
    for (double& x : ll) x = u(rng);
    EXPECT_EQ(MinKFromLogLikelihoods(ll, 20.0), oracle::BruteForceMinK(ll, 20.0));
    EXPECT_EQ(MinKFromLogLikelihoods(ll, 20.0), *std::min_element(ll.begin(), ll.end()));
    EXPECT_DOUBLE_EQ(MinKFromLogLikelihoods(ll, 40.0), oracle::BruteForceMinK(ll, 40.0));
  }
}

TEST(MinKTest, RejectsBadArguments) {
  const UniformModel model(4);
  EXPECT_THROW(MinKScore(model, std::vector<int>{1, 2}, 0.0), InputError);
  EXPECT_THROW(MinKScore(model, std::vector<int>{1, 2}, 101.0), InputError);
  EXPECT_THROW(MinKScore(model, std::vector<int>{1}, 20.0), InputError);
}

TEST(TokenLogLikelihoodTest, ReadsNextTokenProbabilities) {
  const ScalarModel model(1.0);
  const std::vector<int> tokens = {0, 0, 1};
  const auto ll = TokenLogLikelihoods(model, tokens);
  ASSERT_EQ(ll.size(), 2u);
  EXPECT_NEAR(ll[0], -Softplus(-1.0), 1e-15);
  EXPECT_NEAR(ll[1], -Softplus(1.0), 1e-15);
}

TEST(PerplexityTest, UniformModelGivesVocabularySize) {
  const UniformModel model(4);
  EXPECT_NEAR(Perplexity(model, std::vector<int>{0, 1, 2, 3}), 4.0, 1e-12);
  EXPECT_NEAR(PerplexityScore(model, std::vector<int>{0, 1, 2, 3}), -4.0, 1e-12);
}

TEST(PerplexityTest, IdentityWithMinKAtHundred) {
  const ScalarModel model(0.3);
  const std::vector<int> tokens = {0, 1, 1, 0, 1};
  EXPECT_NEAR(Perplexity(model, tokens), std::exp(-MinKScore(model, tokens, 100.0)), 1e-12);
  const std::vector<double> huge = {-5000.0};
  EXPECT_EQ(PerplexityFromLogLikelihoods(huge), std::exp(kMaxMeanNll));
}

TEST(ZlibTest, PinnedSizeOfSixteenAs) {
  // 11 bytes, obtained independently from Python's zlib.compress at level 6.
  EXPECT_EQ(ZlibCompressedSize("aaaaaaaaaaaaaaaa"), 11u);
}

TEST(ZlibTest, DoublingCostsLessThanTwice) {
  for (std::string text : {"Q: What is the capital of Veloria? A: Paris",
                           "aaaaaaaaaaaaaaaa", "the quick brown fox"}) {
    EXPECT_LT(ZlibCompressedSize(text + text), 2 * ZlibCompressedSize(text)) << text;
  }
}

TEST(ZlibTest, ScoreDefinitionAndDeterminism) {
  const UniformModel model(4);
  const std::string text = "abcd abcd";
  const std::vector<int> tokens = {0, 1, 2, 3};
  const double want = -(4.0 / (8.0 * static_cast<double>(ZlibCompressedSize(text))));
  EXPECT_NEAR(ZlibScore(model, text, tokens), want, 1e-15);
  EXPECT_EQ(ZlibScore(model, text, tokens), ZlibScore(model, text, tokens));
}

TEST(NeighbourTest, NullCaseAndDefinition) {
  const std::vector<double> same = {1.25, 1.25, 1.25};
  EXPECT_EQ(internal::NeighbourScoreFromLosses(1.25, same), 0.0);
  const std::vector<double> higher = {2.0, 3.0};
  EXPECT_DOUBLE_EQ(internal::NeighbourScoreFromLosses(1.0, higher), 1.5);
}

// A small trained fixture: a handful of memorised facts.
class MemorisedTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    world_ = new World(GenerateWorld(3, 24));
    tokenizer_ = new Tokenizer(Tokenizer::ForWorld(*world_));
    ModelConfig c;
    c.vocab_size = tokenizer_->size();
    c.model_dim = 32;
    c.n_layers = 2;
    c.n_heads = 2;
    c.ffn_dim = 64;
    c.max_seq_len = 32;
    model_ = new Transformer(InitModel(c, 1));
    std::vector<TrainExample> examples;
    for (int i = 0; i < 8; ++i) {
      const Fact& f = world_->facts[i];
      samples_.push_back(MakeSample(*tokenizer_, f, 0, f.object, Label::kMember,
                                    Origin::kMember));
      examples.push_back({samples_.back().prompt_tokens, samples_.back().target});
    }
    TrainOptions o;
    o.epochs = 200;
    o.lr = 0.02;
    o.seed = 2;
    Train(*model_, examples, o);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete tokenizer_;
    delete world_;
    samples_.clear();
  }
  static World* world_;
  static Tokenizer* tokenizer_;
  static Transformer* model_;
  static std::vector<Sample> samples_;
};

World* MemorisedTest::world_ = nullptr;
Tokenizer* MemorisedTest::tokenizer_ = nullptr;
Transformer* MemorisedTest::model_ = nullptr;
std::vector<Sample> MemorisedTest::samples_;

TEST_F(MemorisedTest, AnswerPerplexityNearOne) {
  for (const Sample& s : samples_) {
    const double ppl = std::exp(model_->LossAndGradient(s.prompt_tokens, s.target).loss);
    EXPECT_LT(ppl, 1.1) << s.prompt_text;
  }
}

TEST_F(MemorisedTest, NeighboursDifferAndScorePositive) {
  NeighbourOptions o;
  o.n_neighbours = 25;
  o.seed = 9;
  for (const Sample& s : samples_) {
    const auto full = s.FullSequence();
    const auto neighbours = GenerateNeighbours(*model_, s, o);
    ASSERT_EQ(neighbours.size(), 25u);
    for (const auto& n : neighbours) {
      ASSERT_EQ(n.size(), full.size());
      int diffs = 0;
      for (std::size_t i = 0; i < n.size(); ++i) diffs += n[i] != full[i];
      EXPECT_EQ(diffs, 1);
      EXPECT_EQ(n[0], full[0]);
      for (std::size_t i = s.prompt_tokens.size(); i < n.size(); ++i) EXPECT_EQ(n[i], full[i]);
    }
    EXPECT_EQ(NeighbourScore(*model_, s, o), NeighbourScore(*model_, s, o));
  }
  // Memorised members lose their answer when the prompt is perturbed.
  for (const Sample& s : samples_) {
    EXPECT_GT(NeighbourScore(*model_, s, o), 0.0) << s.prompt_text;
  }
}

TEST(MinMaxTest, Examples) {
  const std::vector<std::vector<double>> train = {{2, 5}, {4, 5}, {6, 5}};
  const auto out = NormalizeMinMax(train, train);
  EXPECT_EQ(out[0], (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(out[1], (std::vector<double>{0.5, 0.0}));
  EXPECT_EQ(out[2], (std::vector<double>{1.0, 0.0}));
  const MinMaxScaler s = MinMaxScaler::Fit(train);
  EXPECT_EQ(s.Transform(std::vector<double>{8, 5})[0], 1.5);
  EXPECT_EQ(s.Transform(std::vector<double>{0, 7})[0], -0.5);
  const std::vector<std::vector<double>> one = {{1.0}};
  EXPECT_THROW(NormalizeMinMax(one, one), InputError);
}

TEST(FeatureTableTest, HeaderAndRoundTrip) {
  std::vector<FeatureRow> rows = {
      {0, Label::kMember, {0.1, 1.0 / 3.0, -2.5, 1e-300, 7, 8, 0}},
      {5, Label::kNonMember, {1, 2, 3, 4, 5, 6, 0.125}},
  };
  const std::string text = SerializeFeatureTable(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "sample_id,label,loss_before,logit_before,proj_before,loss_after,"
            "logit_after,proj_after,hidden_drift");
  const auto back = ParseFeatureTable(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].features.ToArray(), rows[0].features.ToArray());
  EXPECT_EQ(back[1].sample_id, 5);
  EXPECT_EQ(back[1].label, Label::kNonMember);
  EXPECT_EQ(SerializeFeatureTable(back), text);
}

TEST(ScoreTableTest, RoundTrip) {
  ScoreTable t;
  t.attacks = {"perplexity", "zlib"};
  t.sample_ids = {3, 4};
  t.labels = {Label::kMember, Label::kNonMember};
  t.scores = {{-1.5, 0.25}, {-2.0, 1.0 / 7.0}};
  const auto back = ParseScoreTable(SerializeScoreTable(t));
  EXPECT_EQ(back.attacks, t.attacks);
  EXPECT_EQ(back.scores, t.scores);
  EXPECT_EQ(back.labels, t.labels);
}

}  // namespace
}  // namespace gdrift
