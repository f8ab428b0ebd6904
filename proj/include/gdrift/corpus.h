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

#ifndef GDRIFT_CORPUS_H_
#define GDRIFT_CORPUS_H_

// Deterministic synthetic question-answering world.
//
// Facts are (subject, relation, object) triples over three entity families
// that mirror common membership-inference corpora: countries (capital-style
// facts), landmarks (world facts) and authors (biography facts). Each relation
// has several question templates, so the same fact can be asked in different
// words. Members are facts the target model is fine-tuned on; non-members are
// either held-out "future" facts or member questions paired with a wrong
// answer from the same relation domain ("counterfactual").

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gdrift {

struct Fact {
  int fact_id = 0;
  std::string subject;
  std::string relation;
  std::string object;
};

struct RelationInfo {
  std::string name;
  std::string family;  // "country", "landmark" or "author"
  std::vector<std::string> domain;
  std::vector<std::string> templates;  // "{S}" marks the subject
};

// The static relation catalog, ordered by name.
const std::vector<RelationInfo>& Relations();
const RelationInfo& FindRelation(std::string_view name);

struct World {
  std::uint64_t seed = 0;
  std::vector<Fact> facts;  // facts[i].fact_id == i
};

// Throws InputError when n_facts < 4 or exceeds the catalog capacity.
World GenerateWorld(std::uint64_t seed, int n_facts);

struct QaText {
  std::string prompt;
  std::string answer;
};

// Throws InputError for an unknown template id.
QaText RenderQa(const Fact& fact, int template_id);

// Word-level tokenizer with character fallback. Words are maximal runs of
// ASCII letters and digits; every other printable character is its own token.
// A word missing from the vocabulary is spelled as its first character
// followed by "##c" continuation tokens. Non-ASCII input is rejected.
class Tokenizer {
 public:
  explicit Tokenizer(std::vector<std::string> vocab);

  // Vocabulary covering every word in `world` plus the templates.
  static Tokenizer ForWorld(const World& world);

  std::vector<int> Tokenize(std::string_view text) const;
  std::string Detokenize(std::span<const int> ids) const;
  int FirstSubtoken(std::string_view answer) const;

  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::string& token(int id) const { return vocab_.at(id); }
  // SHA-256 over the vocabulary, used to pair checkpoints with datasets.
  std::string Digest() const;

 private:
  int Lookup(std::string_view word) const;

  std::vector<std::string> vocab_;
  std::map<std::string, int, std::less<>> index_;
};

enum class Label { kNonMember = 0, kMember = 1 };
enum class Origin { kMember, kFutureFact, kCounterfactual };
enum class SplitName { kNone, kTrain, kValidation, kTest };

std::string_view LabelName(Label label);
std::string_view OriginName(Origin origin);
std::string_view SplitNameString(SplitName split);
Label ParseLabel(std::string_view text);
Origin ParseOrigin(std::string_view text);
SplitName ParseSplitName(std::string_view text);

struct Sample {
  int sample_id = 0;
  std::string prompt_text;
  std::string answer_text;
  std::vector<int> prompt_tokens;
  std::vector<int> answer_tokens;
  int target = 0;  // first subtoken of the answer
  Label label = Label::kMember;
  Origin origin = Origin::kMember;
  int fact_id = 0;
  int template_id = 0;
  SplitName split = SplitName::kNone;

  // Prompt tokens followed by answer tokens.
  std::vector<int> FullSequence() const;
  std::string FullText() const { return prompt_text + " " + answer_text; }
};

Sample MakeSample(const Tokenizer& tokenizer, const Fact& fact,
                  int template_id, std::string answer, Label label,
                  Origin origin);

struct DatasetOptions {
  int n_members = 500;
  int n_nonmembers = 500;
  // Fraction of non-members built as counterfactuals; the rest are future
  // facts.
  double counterfactual_fraction = 0.5;
};

// Samples come back shuffled with sample_id equal to their position.
// Throws ConstructionError when the world is too small.
std::vector<Sample> BuildMembershipDataset(const World& world,
                                           const Tokenizer& tokenizer,
                                           std::uint64_t seed,
                                           const DatasetOptions& options);

struct SplitFractions {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

struct SplitSet {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
  SplitFractions fractions;
};

// Class-stratified, fact-disjoint split. Counterfactuals travel with the
// member that shares their fact. Requires equal member and non-member counts
// so every split can be exactly balanced. Empty splits are an InputError
// unless `allow_empty` is set.
SplitSet Split(std::vector<Sample> samples, const SplitFractions& fractions,
               std::uint64_t seed, bool allow_empty = false);

// Largest-remainder apportionment of `total` by `fractions`.
std::array<int, 3> Apportion(int total, const SplitFractions& fractions);

// `k` samples of one fact under templates 0..k-1 with the given answer.
std::vector<Sample> ParaphraseSet(const Tokenizer& tokenizer, const Fact& fact,
                                  int k, const std::string& answer,
                                  Label label = Label::kMember,
                                  Origin origin = Origin::kMember);

// Dataset file: JSON Lines. Line 1 is a header object
//   {"format":"gdrift-dataset","version":1,"world_seed":S,"n_facts":N,
//    "vocab":[...]}
// followed by one object per sample with keys sample_id, prompt, answer,
// label ("member"/"nonmember"), origin ("member"/"future_fact"/
// "counterfactual"), fact_id, template_id and split ("train"/"validation"/
// "test"/"none").
inline constexpr int kDatasetVersion = 1;

struct Dataset {
  std::uint64_t world_seed = 0;
  int n_facts = 0;
  std::vector<std::string> vocab;
  std::vector<Sample> samples;  // ordered by sample_id
};

std::string SerializeDataset(const Dataset& dataset);
// Re-tokenizes every record with the stored vocabulary.
Dataset ParseDataset(std::string_view text);
void SaveDataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset LoadDataset(const std::filesystem::path& path);

}  // namespace gdrift

#endif  // GDRIFT_CORPUS_H_
