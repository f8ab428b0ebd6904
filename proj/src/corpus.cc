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

#include "gdrift/corpus.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "gdrift/checksum.h"
#include "gdrift/error.h"
#include "gdrift/io.h"

namespace gdrift {
namespace {

using json = nlohmann::json;

// Name pools. Subjects are two words; objects are single words so the first
// answer subtoken identifies the object.
const std::vector<std::string> kPlacePrefix = {
    "Upper", "Lower", "North", "South",  "East",   "West",  "New",
    "Old",   "Great", "Little", "High",  "Red",    "Green", "Blue",
    "White", "Black", "Golden", "Silver", "Grand", "Far"};
const std::vector<std::string> kCountryRoot = {
    "Varia", "Ostrand", "Kelmar", "Dovia",  "Tarsk",  "Mirel", "Zanth",
    "Corvia", "Pellon", "Rusk",   "Vendra", "Sorin",  "Halden", "Brisk",
    "Lunor", "Eskar",  "Tamber", "Quell",  "Ardan",  "Noval"};
const std::vector<std::string> kLandmarkNoun = {
    "Tower",   "Bridge",    "Gate",   "Temple",  "Palace",  "Arch",   "Fountain",
    "Cathedral", "Column", "Lighthouse", "Castle", "Market", "Garden", "Harbor",
    "Library", "Museum",    "Obelisk", "Citadel", "Wall",   "Dome"};
const std::vector<std::string> kAuthorFirst = {
    "Alma",  "Bruno", "Celia", "Dorian", "Edith", "Felix", "Greta",
    "Hugo",  "Irene", "Jonas", "Klara",  "Leon",  "Mara",  "Nils",
    "Olga",  "Pavel", "Rosa",  "Stefan", "Tilda", "Viktor"};
const std::vector<std::string> kAuthorLast = {
    "Ambrose", "Bellamy", "Crowther", "Dunmore", "Everly",  "Fairbank",
    "Gorman",  "Hartley", "Ingram",   "Jessup",  "Kestrel", "Lindqvist",
    "Marlowe", "Northam", "Oakes",    "Pemberton", "Quill", "Ravensworth",
    "Sterling", "Thorne"};

const std::vector<std::string> kCities = {
    "Kelmora",  "Varnis",  "Ostheim", "Dunmere",  "Calvora", "Tessin",
    "Brannock", "Lisvane", "Morvath", "Pendrel",  "Quorin",  "Rellis",
    "Saltreth", "Torvane", "Umbria",  "Valcourt", "Wendholm", "Yarrow",
    "Zellin",   "Ashgrove", "Brightmoor", "Coldharbor", "Dravik", "Elmsworth",
    "Fennick",  "Garrowby", "Helmsgard", "Islewick", "Jorvale", "Kingsreach",
    "Larkspur", "Merrowin", "Norhaven", "Oldcastle", "Pyrenth", "Ravelin",
    "Stonebury", "Thistlewood", "Vexmoor", "Wyndham"};
const std::vector<std::string> kLanguages = {
    "Varic",   "Ostrish", "Kelmese", "Dovian",  "Tarskan", "Mirelic",
    "Zanthic", "Corvese", "Pellish", "Ruskan",  "Vendric", "Sorinese",
    "Haldic",  "Lunoran", "Eskari",  "Quellish"};
const std::vector<std::string> kCurrencies = {
    "crown",  "mark",   "florin", "ducat",  "shilling", "thaler",
    "dinar",  "peso",   "rand",   "guilder", "real",    "lira",
    "escudo", "kopek",  "solidus", "talent"};
const std::vector<std::string> kMaterials = {
    "stone", "steel", "glass",  "marble", "bronze", "wood",
    "brick", "granite", "iron", "copper", "sandstone", "limestone"};
const std::vector<std::string> kGenres = {
    "poetry",  "satire",   "romance", "mystery", "fantasy", "horror",
    "history", "memoir",   "drama",   "thriller", "folklore", "essays"};

std::vector<RelationInfo> BuildCatalog() {
  std::vector<RelationInfo> rels = {
      {"birthplace", "author", kCities,
       {"Q: Where was the author {S} born? A:",
        "Q: In which city was the writer {S} born? A:",
        "Q: What is the birthplace of the author {S}? A:"}},
      {"capital", "country", kCities,
       {"Q: What is the capital of {S}? A:",
        "Q: Which city is the capital of {S}? A:",
        "Q: {S} has its capital in which city? A:"}},
      {"currency", "country", kCurrencies,
       {"Q: What is the currency of {S}? A:",
        "Q: Which currency is used in {S}? A:",
        "Q: People in {S} pay with which currency? A:"}},
      {"genre", "author", kGenres,
       {"Q: What genre does the author {S} write? A:",
        "Q: Which genre is the writer {S} known for? A:",
        "Q: The author {S} mostly writes in which genre? A:"}},
      {"language", "country", kLanguages,
       {"Q: What language is spoken in {S}? A:",
        "Q: Which language do people in {S} speak? A:",
        "Q: The main language of {S} is what? A:"}},
      {"location", "landmark", kCities,
       {"Q: Where would you find the {S}? A:",
        "Q: The {S} is located in which city? A:",
        "Q: Which city is home to the {S}? A:"}},
      {"material", "landmark", kMaterials,
       {"Q: What is the {S} made of? A:",
        "Q: Which material was used to build the {S}? A:",
        "Q: The {S} is built from what material? A:"}},
  };
  return rels;
}

std::vector<std::string> SubjectsFor(const std::string& family) {
  const std::vector<std::string>* first = &kPlacePrefix;
  const std::vector<std::string>* second = &kCountryRoot;
  if (family == "landmark") second = &kLandmarkNoun;
  if (family == "author") {
    first = &kAuthorFirst;
    second = &kAuthorLast;
  }
  std::vector<std::string> out;
  for (const auto& a : *first) {
    for (const auto& b : *second) out.push_back(a + " " + b);
  }
  return out;
}

bool IsWordChar(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9');
}

// Splits text into words and single punctuation characters.
std::vector<std::string_view> PreTokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (c < 0x21 || c > 0x7e) {
      throw InputError("tokenize: unsupported character code " +
                       std::to_string(static_cast<int>(c)));
    }
    if (IsWordChar(static_cast<char>(c))) {
      std::size_t j = i;
      while (j < text.size() && IsWordChar(text[j])) ++j;
      out.push_back(text.substr(i, j - i));
      i = j;
    } else {
      out.push_back(text.substr(i, 1));
      ++i;
    }
  }
  return out;
}

void AddWords(std::set<std::string>& words, std::string_view text) {
  for (std::string_view w : PreTokenize(text)) words.emplace(w);
}

template <typename T>
T PickFrom(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
  return items[pick(rng)];
}

std::string OtherObject(const RelationInfo& rel, const std::string& truth,
                        std::mt19937_64& rng) {
  std::vector<std::string> options;
  for (const auto& o : rel.domain) {
    if (o != truth) options.push_back(o);
  }
  if (options.empty()) {
    throw ConstructionError("counterfactual: relation '" + rel.name +
                            "' has no alternative object");
  }
  return PickFrom(options, rng);
}

}  // namespace

const std::vector<RelationInfo>& Relations() {
  static const std::vector<RelationInfo> catalog = BuildCatalog();
  return catalog;
}

const RelationInfo& FindRelation(std::string_view name) {
  for (const auto& r : Relations()) {
    if (r.name == name) return r;
  }
  throw InputError("unknown relation '" + std::string(name) + "'");
}

World GenerateWorld(std::uint64_t seed, int n_facts) {
  if (n_facts < 4) throw InputError("generate_world: n_facts must be >= 4");
  struct Key {
    std::string subject;
    const RelationInfo* relation;
  };
  std::vector<Key> keys;
  for (const auto& rel : Relations()) {
    for (auto& s : SubjectsFor(rel.family)) keys.push_back({s, &rel});
  }
  if (static_cast<std::size_t>(n_facts) > keys.size()) {
    throw InputError("generate_world: n_facts " + std::to_string(n_facts) +
                     " exceeds catalog capacity " + std::to_string(keys.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(keys.begin(), keys.end(), rng);
  World world;
  world.seed = seed;
  world.facts.reserve(n_facts);
  for (int i = 0; i < n_facts; ++i) {
    const Key& k = keys[i];
    world.facts.push_back(
        {i, k.subject, k.relation->name, PickFrom(k.relation->domain, rng)});
  }
  return world;
}

QaText RenderQa(const Fact& fact, int template_id) {
  const RelationInfo& rel = FindRelation(fact.relation);
  if (template_id < 0 || template_id >= static_cast<int>(rel.templates.size())) {
    throw InputError("render_qa: template " + std::to_string(template_id) +
                     " not defined for relation '" + rel.name + "'");
  }
  std::string prompt = rel.templates[template_id];
  const auto pos = prompt.find("{S}");
  prompt.replace(pos, 3, fact.subject);
  if (fact.object.empty()) throw InputError("render_qa: empty answer");
  return {prompt, fact.object};
}

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<int>(i)).second) {
      throw InputError("tokenizer: duplicate vocabulary entry '" + vocab_[i] + "'");
    }
  }
  // Every printable character and continuation must be present so that
  // fallback spelling can never fail.
  for (char c = 0x21; c <= 0x7e; ++c) {
    if (!index_.count(std::string(1, c))) {
      throw InputError(std::string("tokenizer: vocabulary lacks character '") +
                       c + "'");
    }
    if (IsWordChar(c) && !index_.count(std::string("##") + c)) {
      throw InputError(std::string("tokenizer: vocabulary lacks '##") + c + "'");
    }
  }
}

Tokenizer Tokenizer::ForWorld(const World& world) {
  std::vector<std::string> vocab = {"<pad>"};
  for (char c = 0x21; c <= 0x7e; ++c) vocab.emplace_back(1, c);
  for (char c = 0x21; c <= 0x7e; ++c) {
    if (IsWordChar(c)) vocab.push_back(std::string("##") + c);
  }
  std::set<std::string> words;
  for (const auto& rel : Relations()) {
    for (const auto& t : rel.templates) AddWords(words, t);
  }
  for (const auto& f : world.facts) {
    AddWords(words, f.subject);
    AddWords(words, f.object);
  }
  std::set<std::string> have(vocab.begin(), vocab.end());
  for (const auto& w : words) {
    if (w == "{" || w == "}" || w == "S") continue;  // template placeholder
    if (!have.count(w)) vocab.push_back(w);
  }
  return Tokenizer(std::move(vocab));
}

int Tokenizer::Lookup(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> Tokenizer::Tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (std::string_view w : PreTokenize(text)) {
    const int id = Lookup(w);
    if (id >= 0) {
      ids.push_back(id);
      continue;
    }
    ids.push_back(Lookup(w.substr(0, 1)));
    for (std::size_t i = 1; i < w.size(); ++i) {
      ids.push_back(Lookup(std::string("##") + w[i]));
    }
  }
  if (ids.empty()) throw InputError("tokenize: empty text");
  return ids;
}

std::string Tokenizer::Detokenize(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab_.at(static_cast<std::size_t>(id));
    if (tok.size() > 2 && tok.starts_with("##")) {
      out.append(tok, 2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

int Tokenizer::FirstSubtoken(std::string_view answer) const {
  return Tokenize(answer).front();
}

std::string Tokenizer::Digest() const {
  Sha256 h;
  for (const auto& t : vocab_) {
    h.UpdateU64(t.size());
    h.Update(t);
  }
  return h.HexDigest();
}

std::string_view LabelName(Label label) {
  return label == Label::kMember ? "member" : "nonmember";
}

std::string_view OriginName(Origin origin) {
  switch (origin) {
    case Origin::kMember: return "member";
    case Origin::kFutureFact: return "future_fact";
    case Origin::kCounterfactual: return "counterfactual";
  }
  return "member";
}

std::string_view SplitNameString(SplitName split) {
  switch (split) {
    case SplitName::kNone: return "none";
    case SplitName::kTrain: return "train";
    case SplitName::kValidation: return "validation";
    case SplitName::kTest: return "test";
  }
  return "none";
}

Label ParseLabel(std::string_view text) {
  if (text == "member") return Label::kMember;
  if (text == "nonmember") return Label::kNonMember;
  throw InputError("unknown label '" + std::string(text) + "'");
}

Origin ParseOrigin(std::string_view text) {
  if (text == "member") return Origin::kMember;
  if (text == "future_fact") return Origin::kFutureFact;
  if (text == "counterfactual") return Origin::kCounterfactual;
  throw InputError("unknown origin '" + std::string(text) + "'");
}

SplitName ParseSplitName(std::string_view text) {
  if (text == "none") return SplitName::kNone;
  if (text == "train") return SplitName::kTrain;
  if (text == "validation") return SplitName::kValidation;
  if (text == "test") return SplitName::kTest;
  throw InputError("unknown split '" + std::string(text) + "'");
}

std::vector<int> Sample::FullSequence() const {
  std::vector<int> seq = prompt_tokens;
  seq.insert(seq.end(), answer_tokens.begin(), answer_tokens.end());
  return seq;
}

Sample MakeSample(const Tokenizer& tokenizer, const Fact& fact,
                  int template_id, std::string answer, Label label,
                  Origin origin) {
  if ((label == Label::kMember) != (origin == Origin::kMember)) {
    throw ContractError("sample: label must be member iff origin is member");
  }
  Sample s;
  QaText qa = RenderQa(fact, template_id);
  s.prompt_text = std::move(qa.prompt);
  s.answer_text = std::move(answer);
  if (s.answer_text.empty()) throw InputError("sample: empty answer");
  s.prompt_tokens = tokenizer.Tokenize(s.prompt_text);
  s.answer_tokens = tokenizer.Tokenize(s.answer_text);
  s.target = s.answer_tokens.front();
  s.label = label;
  s.origin = origin;
  s.fact_id = fact.fact_id;
  s.template_id = template_id;
  return s;
}

std::vector<Sample> BuildMembershipDataset(const World& world,
                                           const Tokenizer& tokenizer,
                                           std::uint64_t seed,
                                           const DatasetOptions& opt) {
  if (opt.n_members < 1 || opt.n_nonmembers < 0) {
    throw InputError("dataset: need at least one member");
  }
  if (!(opt.counterfactual_fraction >= 0.0 && opt.counterfactual_fraction <= 1.0)) {
    throw InputError("dataset: counterfactual_fraction must lie in [0, 1]");
  }
  const int n_cf = static_cast<int>(
      std::lround(opt.n_nonmembers * opt.counterfactual_fraction));
  const int n_future = opt.n_nonmembers - n_cf;
  if (n_cf > opt.n_members) {
    throw ConstructionError("dataset: " + std::to_string(n_cf) +
                            " counterfactuals need as many members");
  }
  if (static_cast<std::size_t>(opt.n_members + n_future) > world.facts.size()) {
    throw ConstructionError(
        "dataset: world has " + std::to_string(world.facts.size()) +
        " facts, need " + std::to_string(opt.n_members + n_future));
  }

  std::mt19937_64 rng(seed);
  std::vector<int> order(world.facts.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  auto random_template = [&](const Fact& f) {
    const int n = static_cast<int>(FindRelation(f.relation).templates.size());
    return std::uniform_int_distribution<int>(0, n - 1)(rng);
  };

  std::vector<Sample> samples;
  samples.reserve(opt.n_members + opt.n_nonmembers);
  for (int i = 0; i < opt.n_members; ++i) {
    const Fact& f = world.facts[order[i]];
    samples.push_back(MakeSample(tokenizer, f, random_template(f), f.object,
                                 Label::kMember, Origin::kMember));
  }
  for (int i = 0; i < n_future; ++i) {
    const Fact& f = world.facts[order[opt.n_members + i]];
    samples.push_back(MakeSample(tokenizer, f, random_template(f), f.object,
                                 Label::kNonMember, Origin::kFutureFact));
  }
  std::vector<int> member_idx(opt.n_members);
  std::iota(member_idx.begin(), member_idx.end(), 0);
  std::shuffle(member_idx.begin(), member_idx.end(), rng);
  for (int i = 0; i < n_cf; ++i) {
    const Sample& m = samples[member_idx[i]];
    const Fact& f = world.facts[m.fact_id];
    const std::string wrong = OtherObject(FindRelation(f.relation), f.object, rng);
    samples.push_back(MakeSample(tokenizer, f, m.template_id, wrong,
                                 Label::kNonMember, Origin::kCounterfactual));
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].sample_id = static_cast<int>(i);
  }
  return samples;
}

std::array<int, 3> Apportion(int total, const SplitFractions& f) {
  const std::array<double, 3> fr = {f.train, f.validation, f.test};
  std::array<int, 3> out{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = fr[i] * total;
    out[i] = static_cast<int>(std::floor(q + 1e-9));
    rem[i] = q - out[i];
    assigned += out[i];
  }
  while (assigned < total) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best] + 1e-12) best = i;
    }
    ++out[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return out;
}

SplitSet Split(std::vector<Sample> samples, const SplitFractions& fractions,
               std::uint64_t seed, bool allow_empty) {
  const std::array<double, 3> fr = {fractions.train, fractions.validation,
                                    fractions.test};
  double sum = 0.0;
  for (double x : fr) {
    if (!(x >= 0.0)) throw InputError("split: fractions must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InputError("split: fractions sum to " + FormatDouble(sum) + ", not 1");
  }

  // Group samples by fact: a member optionally paired with its counterfactual,
  // or a lone future fact.
  std::map<int, std::vector<std::size_t>> by_fact;
  int n_members = 0, n_nonmembers = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_fact[samples[i].fact_id].push_back(i);
    (samples[i].label == Label::kMember ? n_members : n_nonmembers)++;
  }
  if (n_members != n_nonmembers) {
    throw InputError("split: " + std::to_string(n_members) + " members vs " +
                     std::to_string(n_nonmembers) +
                     " non-members cannot be balanced in every split");
  }
  std::vector<std::vector<std::size_t>> pairs, lone_members, lone_nonmembers;
  for (auto& [fact, idx] : by_fact) {
    int m = 0;
    for (std::size_t i : idx) m += samples[i].label == Label::kMember;
    const int nm = static_cast<int>(idx.size()) - m;
    if (m == 1 && nm == 1) {
      pairs.push_back(idx);
    } else if (m == 1 && nm == 0) {
      lone_members.push_back(idx);
    } else if (m == 0 && nm == 1) {
      lone_nonmembers.push_back(idx);
    } else {
      throw InputError("split: fact " + std::to_string(fact) +
                       " has an unsupported sample mix");
    }
  }

  const std::array<int, 3> per_class = Apportion(n_members, fractions);
  const std::array<int, 3> pair_count =
      Apportion(static_cast<int>(pairs.size()), fractions);
  for (int s = 0; s < 3; ++s) {
    if (per_class[s] == 0 && !allow_empty) {
      throw InputError("split: split " + std::to_string(s) +
                       " would be empty (pass allow_empty to permit)");
    }
    if (pair_count[s] > per_class[s]) {
      throw InputError("split: cannot balance counterfactual pairs");
    }
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::shuffle(lone_members.begin(), lone_members.end(), rng);
  std::shuffle(lone_nonmembers.begin(), lone_nonmembers.end(), rng);

  const std::array<SplitName, 3> names = {SplitName::kTrain, SplitName::kValidation,
                                          SplitName::kTest};
  std::size_t p = 0, lm = 0, ln = 0;
  auto assign = [&](const std::vector<std::size_t>& group, SplitName name) {
    for (std::size_t i : group) samples[i].split = name;
  };
  for (int s = 0; s < 3; ++s) {
    for (int k = 0; k < pair_count[s]; ++k) assign(pairs[p++], names[s]);
    for (int k = 0; k < per_class[s] - pair_count[s]; ++k) {
      if (lm >= lone_members.size() || ln >= lone_nonmembers.size()) {
        throw InputError("split: not enough samples to balance every split");
      }
      assign(lone_members[lm++], names[s]);
      assign(lone_nonmembers[ln++], names[s]);
    }
  }

  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) { return a.sample_id < b.sample_id; });
  SplitSet out;
  out.fractions = fractions;
  for (auto& s : samples) {
    switch (s.split) {
      case SplitName::kTrain: out.train.push_back(std::move(s)); break;
      case SplitName::kValidation: out.validation.push_back(std::move(s)); break;
      case SplitName::kTest: out.test.push_back(std::move(s)); break;
      case SplitName::kNone: break;
    }
  }
  return out;
}

std::vector<Sample> ParaphraseSet(const Tokenizer& tokenizer, const Fact& fact,
                                  int k, const std::string& answer, Label label,
                                  Origin origin) {
  const int n = static_cast<int>(FindRelation(fact.relation).templates.size());
  if (k < 1 || k > n) {
    throw InputError("paraphrase_set: k=" + std::to_string(k) +
                     " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<Sample> out;
  for (int t = 0; t < k; ++t) {
    out.push_back(MakeSample(tokenizer, fact, t, answer, label, origin));
    out.back().sample_id = t;
  }
  return out;
}

std::string SerializeDataset(const Dataset& ds) {
  json header = {{"format", "gdrift-dataset"},
                 {"version", kDatasetVersion},
                 {"world_seed", ds.world_seed},
                 {"n_facts", ds.n_facts},
                 {"vocab", ds.vocab}};
  std::string out = header.dump() + "\n";
  for (const Sample& s : ds.samples) {
    json rec = {{"sample_id", s.sample_id},
                {"prompt", s.prompt_text},
                {"answer", s.answer_text},
                {"label", LabelName(s.label)},
                {"origin", OriginName(s.origin)},
                {"fact_id", s.fact_id},
                {"template_id", s.template_id},
                {"split", SplitNameString(s.split)}};
    out += rec.dump() + "\n";
  }
  return out;
}

Dataset ParseDataset(std::string_view text) {
  Dataset ds;
  std::size_t pos = 0;
  int line_no = 0;
  std::unique_ptr<Tokenizer> tokenizer;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!tokenizer) {
        if (j.value("format", "") != "gdrift-dataset") {
          throw InputError("dataset: missing gdrift-dataset header");
        }
        if (j.at("version").get<int>() != kDatasetVersion) {
          throw InputError("dataset: unsupported version");
        }
        ds.world_seed = j.at("world_seed").get<std::uint64_t>();
        ds.n_facts = j.at("n_facts").get<int>();
        ds.vocab = j.at("vocab").get<std::vector<std::string>>();
        tokenizer = std::make_unique<Tokenizer>(ds.vocab);
        continue;
      }
      Sample s;
      s.sample_id = j.at("sample_id").get<int>();
      s.prompt_text = j.at("prompt").get<std::string>();
      s.answer_text = j.at("answer").get<std::string>();
      s.label = ParseLabel(j.at("label").get<std::string>());
      s.origin = ParseOrigin(j.at("origin").get<std::string>());
      s.fact_id = j.at("fact_id").get<int>();
      s.template_id = j.at("template_id").get<int>();
      s.split = ParseSplitName(j.at("split").get<std::string>());
      s.prompt_tokens = tokenizer->Tokenize(s.prompt_text);
      s.answer_tokens = tokenizer->Tokenize(s.answer_text);
      s.target = s.answer_tokens.front();
      if ((s.label == Label::kMember) != (s.origin == Origin::kMember)) {
        throw InputError("label/origin disagree");
      }
      ds.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw InputError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!tokenizer) throw InputError("dataset: empty file");
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (ds.samples[i].sample_id != static_cast<int>(i)) {
      throw InputError("dataset: sample ids must be 0..n-1 in order");
    }
  }
  return ds;
}

void SaveDataset(const std::filesystem::path& path, const Dataset& dataset) {
  WriteFileAtomic(path, SerializeDataset(dataset));
}

Dataset LoadDataset(const std::filesystem::path& path) {
  return ParseDataset(ReadFile(path));
}

}  // namespace gdrift
