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

#include "gdrift/harness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "gdrift/checkpoint.h"
#include "gdrift/checksum.h"
#include "gdrift/error.h"
#include "gdrift/io.h"

namespace gdrift {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr char kManifest[] = "manifest.json";
constexpr char kDatasetFile[] = "dataset.jsonl";
constexpr char kCheckpointFile[] = "checkpoint.bin";
constexpr char kTrainLogFile[] = "train_log.json";
constexpr char kFeaturesFile[] = "features.csv";
constexpr char kScoresFile[] = "scores.csv";
constexpr char kExtractSummaryFile[] = "extract_summary.json";
constexpr char kGDrift[] = "gdrift";

std::string UtcNow() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string JoinDoubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += FormatDouble(values[i]);
  }
  return out;
}

std::string JoinInts(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> SplitComma(const std::string& text) {
  std::vector<std::string> out;
  if (Trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(Trim(item));
  return out;
}

double ParseDouble(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError("config: '" + key + "' expects a number, got '" + text + "'");
  }
}

long long ParseInt(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError("config: '" + key + "' expects an integer, got '" + text + "'");
  }
}

std::uint64_t ParseU64(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError("config: '" + key + "' expects an unsigned integer, got '" +
                     text + "'");
  }
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InputError("config: '" + key + "' expects true or false, got '" + text + "'");
}

// One entry per config key, in canonical order.
struct Field {
  const char* key;
  std::string (*get)(const ExperimentConfig&);
  void (*set)(ExperimentConfig&, const std::string&, const std::string&);
};

#define GDRIFT_U64(name)                                                     \
  Field {                                                                    \
    #name, [](const ExperimentConfig& c) { return std::to_string(c.name); }, \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
          c.name = ParseU64(k, v);                                           \
        }                                                                    \
  }
#define GDRIFT_INT(name)                                                     \
  Field {                                                                    \
    #name, [](const ExperimentConfig& c) { return std::to_string(c.name); }, \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
          c.name = static_cast<int>(ParseInt(k, v));                         \
        }                                                                    \
  }
#define GDRIFT_DOUBLE(name)                                                  \
  Field {                                                                    \
    #name, [](const ExperimentConfig& c) { return FormatDouble(c.name); },   \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
          c.name = ParseDouble(k, v);                                        \
        }                                                                    \
  }
#define GDRIFT_BOOL(name)                                                    \
  Field {                                                                    \
    #name,                                                                   \
        [](const ExperimentConfig& c) {                                      \
          return std::string(c.name ? "true" : "false");                     \
        },                                                                   \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
          c.name = ParseBool(k, v);                                          \
        }                                                                    \
  }
#define GDRIFT_DOUBLES(name)                                                 \
  Field {                                                                    \
    #name, [](const ExperimentConfig& c) { return JoinDoubles(c.name); },    \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
          c.name.clear();                                                    \
          for (const auto& item : SplitComma(v)) {                           \
            c.name.push_back(ParseDouble(k, item));                          \
          }                                                                  \
        }                                                                    \
  }
#define GDRIFT_INTS(name)                                                    \
  Field {                                                                    \
    #name, [](const ExperimentConfig& c) { return JoinInts(c.name); },       \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { \
          c.name.clear();                                                    \
          for (const auto& item : SplitComma(v)) {                           \
            c.name.push_back(static_cast<int>(ParseInt(k, item)));           \
          }                                                                  \
        }                                                                    \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      GDRIFT_INT(config_version),
      GDRIFT_U64(corpus_seed),
      GDRIFT_INT(n_facts),
      GDRIFT_INT(n_members),
      GDRIFT_INT(n_nonmembers),
      GDRIFT_DOUBLE(counterfactual_fraction),
      GDRIFT_U64(split_seed),
      GDRIFT_DOUBLE(train_fraction),
      GDRIFT_DOUBLE(validation_fraction),
      GDRIFT_DOUBLE(test_fraction),
      GDRIFT_U64(model_seed),
      GDRIFT_INT(model_dim),
      GDRIFT_INT(n_layers),
      GDRIFT_INT(n_heads),
      GDRIFT_INT(ffn_dim),
      GDRIFT_INT(max_seq_len),
      GDRIFT_U64(train_seed),
      GDRIFT_INT(epochs),
      GDRIFT_DOUBLE(lr),
      GDRIFT_DOUBLE(loss_threshold),
      GDRIFT_BOOL(train_split_only),
      GDRIFT_DOUBLE(eta),
      GDRIFT_U64(probe_seed),
      GDRIFT_DOUBLES(k_percents),
      GDRIFT_INT(n_neighbours),
      GDRIFT_U64(neighbour_seed),
      GDRIFT_DOUBLES(lambda_grid),
      GDRIFT_INT(cv_folds),
      GDRIFT_U64(cv_seed),
      GDRIFT_DOUBLES(fpr_grid),
      GDRIFT_BOOL(shuffle_labels),
      GDRIFT_U64(shuffle_seed),
      GDRIFT_INTS(consistency_fact_ids),
      GDRIFT_INT(consistency_n_facts),
      GDRIFT_INT(consistency_k),
  };
  return fields;
}

#undef GDRIFT_U64
#undef GDRIFT_INT
#undef GDRIFT_DOUBLE
#undef GDRIFT_BOOL
#undef GDRIFT_DOUBLES
#undef GDRIFT_INTS

fs::path Out(const ExperimentConfig& config, const std::string& name) {
  return config.out_dir / name;
}

void WriteAndRecord(const ExperimentConfig& config, RunManifest& manifest,
                    const std::string& name, std::string_view bytes,
                    const std::string& stage, const std::string& hash) {
  WriteFileAtomic(Out(config, name), bytes);
  manifest.Record(config.out_dir, name, stage, hash);
}

Dataset LoadVerifiedDataset(const ExperimentConfig& config,
                            const RunManifest& manifest) {
  manifest.Verify(config.out_dir, kDatasetFile);
  return LoadDataset(Out(config, kDatasetFile));
}

Checkpoint LoadVerifiedCheckpoint(const ExperimentConfig& config,
                                  const RunManifest& manifest,
                                  const Dataset& dataset) {
  manifest.Verify(config.out_dir, kCheckpointFile);
  Checkpoint cp = LoadCheckpoint(Out(config, kCheckpointFile));
  const std::string digest = Tokenizer(dataset.vocab).Digest();
  std::string stored;
  try {
    stored = json::parse(cp.metadata).at("vocab_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  if (stored != digest) {
    throw IntegrityError("checkpoint vocabulary does not match the dataset");
  }
  return cp;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population mean and standard deviation.
std::pair<double, double> MeanStd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / v.size())};
}

json MetricsJson(const ThresholdMetrics& m) {
  return {{"tpr", m.tpr}, {"fpr", m.fpr}, {"accuracy", m.accuracy}};
}

std::string CsvQuote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string AttackNameForK(double k) { return "min_k_" + FormatDouble(k); }

// Rows of one attack's inputs, grouped by split.
struct SplitRows {
  std::vector<std::vector<double>> rows[3];
  std::vector<int> labels[3];
  std::vector<double> raw[3];  // first column, for raw-score AUC
};

int SplitIndex(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return 0;
    case SplitName::kValidation: return 1;
    case SplitName::kTest: return 2;
    case SplitName::kNone: break;
  }
  return -1;
}

// Per-sample inputs shared by the evaluation stages.
struct EvalInputs {
  Dataset dataset;
  std::vector<FeatureRow> features;
  ScoreTable scores;
  std::vector<int> split;   // per dataset position, -1 for none
  std::vector<int> labels;  // possibly shuffled
};

EvalInputs LoadEvalInputs(const ExperimentConfig& config,
                          const RunManifest& manifest, bool need_scores,
                          bool shuffle) {
  EvalInputs in;
  in.dataset = LoadVerifiedDataset(config, manifest);
  manifest.Verify(config.out_dir, kFeaturesFile);
  in.features = ParseFeatureTable(ReadFile(Out(config, kFeaturesFile)));
  const std::size_t n = in.dataset.samples.size();
  if (in.features.size() != n) {
    throw IntegrityError("feature table has " + std::to_string(in.features.size()) +
                         " rows for " + std::to_string(n) + " samples");
  }
  if (need_scores) {
    manifest.Verify(config.out_dir, kScoresFile);
    in.scores = ParseScoreTable(ReadFile(Out(config, kScoresFile)));
    if (in.scores.sample_ids.size() != n) {
      throw IntegrityError("score table row count does not match the dataset");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = in.dataset.samples[i];
    if (in.features[i].sample_id != s.sample_id || in.features[i].label != s.label ||
        (need_scores && (in.scores.sample_ids[i] != s.sample_id ||
                         in.scores.labels[i] != s.label))) {
      throw IntegrityError("tables disagree with the dataset at sample " +
                           std::to_string(s.sample_id));
    }
    in.split.push_back(SplitIndex(s.split));
    in.labels.push_back(s.label == Label::kMember ? 1 : 0);
  }
  if (shuffle) {
    std::mt19937_64 rng(config.shuffle_seed);
    for (int part = 0; part < 3; ++part) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i) {
        if (in.split[i] == part) idx.push_back(i);
      }
      std::vector<int> lab;
      for (std::size_t i : idx) lab.push_back(in.labels[i]);
      std::shuffle(lab.begin(), lab.end(), rng);
      for (std::size_t j = 0; j < idx.size(); ++j) in.labels[idx[j]] = lab[j];
    }
  }
  return in;
}

template <typename RowFn>
SplitRows GroupRows(const EvalInputs& in, RowFn row) {
  SplitRows out;
  for (std::size_t i = 0; i < in.labels.size(); ++i) {
    if (in.split[i] < 0) continue;
    std::vector<double> r = row(i);
    out.raw[in.split[i]].push_back(r[0]);
    out.rows[in.split[i]].push_back(std::move(r));
    out.labels[in.split[i]].push_back(in.labels[i]);
  }
  return out;
}

std::vector<double> FeatureVector(const DriftFeatures& f) {
  const auto a = f.ToArray();
  return {a.begin(), a.end()};
}

AttackMetrics EvaluateAttack(const std::string& name, const SplitRows& rows,
                             const ExperimentConfig& config, bool raw_score) {
  AttackMetrics m;
  m.attack = name;
  const LogRegModel model =
      Fit(rows.rows[0], rows.labels[0], {}, config.Classifier());
  m.l2_lambda = model.l2_lambda;
  m.converged = model.converged;

  std::vector<double> val_prob;
  for (const auto& r : rows.rows[1]) val_prob.push_back(PredictProba(model, r));
  m.threshold = SelectThreshold(val_prob, rows.labels[1]);
  m.validation = ComputeThresholdMetrics(val_prob, rows.labels[1], m.threshold);

  std::vector<double> test_score, test_prob;
  for (const auto& r : rows.rows[2]) {
    test_score.push_back(DecisionFunction(model, r));
    test_prob.push_back(PredictProba(model, r));
  }
  m.test = ComputeThresholdMetrics(test_prob, rows.labels[2], m.threshold);
  RocResult roc = RocAuc(test_score, rows.labels[2]);
  m.auc = roc.auc;
  m.roc = std::move(roc.curve);
  for (double f : config.fpr_grid) m.tpr_at_fpr.push_back(TprAtFpr(m.roc, f));
  m.raw_auc = raw_score ? RocAuc(rows.raw[2], rows.labels[2]).auc : m.auc;
  return m;
}

std::string RocCsv(const RocCurve& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (std::size_t i = 0; i < roc.fpr.size(); ++i) {
    out += FormatDouble(roc.fpr[i]) + "," + FormatDouble(roc.tpr[i]) + ",";
    out += i == 0 ? "inf" : FormatDouble(roc.thresholds[i - 1]);
    out += "\n";
  }
  return out;
}

// Counterfactual object for consistency tables: a seeded pick among the
// relation's other objects.
std::string WrongObject(const Fact& fact, std::uint64_t seed) {
  const RelationInfo& rel = FindRelation(fact.relation);
  std::vector<std::string> options;
  for (const auto& o : rel.domain) {
    if (o != fact.object) options.push_back(o);
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fact.fact_id)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
  return options[pick(rng)];
}

}  // namespace

void ExperimentConfig::SetAllSeeds(std::uint64_t seed) {
  corpus_seed = split_seed = model_seed = train_seed = probe_seed =
      neighbour_seed = cv_seed = shuffle_seed = seed;
}

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw InputError("config: " + msg); };
  if (config_version != kConfigVersion) {
    fail("unsupported config_version " + std::to_string(config_version));
  }
  if (n_facts < 4) fail("n_facts must be >= 4");
  if (n_members < 1 || n_nonmembers < 1) fail("n_members and n_nonmembers must be >= 1");
  if (!(counterfactual_fraction >= 0.0 && counterfactual_fraction <= 1.0)) {
    fail("counterfactual_fraction must lie in [0, 1]");
  }
  for (double f : {train_fraction, validation_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) fail("split fractions must lie in [0, 1]");
  }
  if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
    fail("split fractions must sum to 1");
  }
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) fail("eta must be > 0");
  if (k_percents.empty()) fail("k_percents must not be empty");
  for (double k : k_percents) {
    if (!(k > 0.0 && k <= 100.0)) fail("k_percents entries must lie in (0, 100]");
  }
  if (n_neighbours < 1) fail("n_neighbours must be >= 1");
  if (lambda_grid.empty()) fail("lambda_grid must not be empty");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda_grid entries must be >= 0");
  }
  if (cv_folds < 2) fail("cv_folds must be >= 2");
  for (double f : fpr_grid) {
    if (!(f >= 0.0 && f <= 1.0)) fail("fpr_grid entries must lie in [0, 1]");
  }
  if (consistency_n_facts < 1) fail("consistency_n_facts must be >= 1");
  if (consistency_k < 1) fail("consistency_k must be >= 1");
  ModelConfig m = Model(2);
  m.Validate();
}

ModelConfig ExperimentConfig::Model(int vocab_size) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.model_dim = model_dim;
  m.n_layers = n_layers;
  m.n_heads = n_heads;
  m.ffn_dim = ffn_dim;
  m.max_seq_len = max_seq_len;
  m.rng_seed = model_seed;
  return m;
}

SplitFractions ExperimentConfig::Fractions() const {
  return {train_fraction, validation_fraction, test_fraction};
}

FitOptions ExperimentConfig::Classifier() const {
  FitOptions f;
  f.lambda_grid = lambda_grid;
  f.folds = cv_folds;
  f.seed = cv_seed;
  return f;
}

std::string ConfigToText(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : Fields()) {
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += "\n";
  }
  return out;
}

ExperimentConfig ConfigFromText(std::string_view text, ExperimentConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool version_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = Trim(t.substr(0, eq));
    std::string value = Trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const auto it = std::find_if(Fields().begin(), Fields().end(),
                                 [&](const Field& f) { return key == f.key; });
    if (it == Fields().end()) {
      throw InputError("config line " + std::to_string(lineno) + ": unknown key '" +
                       key + "'");
    }
    it->set(base, key, value);
    if (key == "config_version") version_seen = true;
  }
  if (!version_seen) throw InputError("config: missing config_version");
  if (base.config_version != kConfigVersion) {
    throw InputError("config: unsupported config_version " +
                     std::to_string(base.config_version));
  }
  return base;
}

std::string ConfigHash(const ExperimentConfig& config) {
  return Sha256Hex(ConfigToText(config));
}

RunManifest RunManifest::Load(const fs::path& out_dir) {
  RunManifest m;
  const fs::path p = out_dir / kManifest;
  if (!fs::exists(p)) return m;
  try {
    const json j = json::parse(ReadFile(p));
    m.tool_version = j.at("tool_version").get<std::string>();
    for (const auto& [name, a] : j.at("artifacts").items()) {
      m.artifacts[name] = {a.at("path").get<std::string>(),
                           a.at("sha256").get<std::string>(),
                           a.at("stage").get<std::string>(),
                           a.at("config_hash").get<std::string>(),
                           a.at("created").get<std::string>()};
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("manifest unreadable: ") + e.what());
  }
  return m;
}

void RunManifest::Save(const fs::path& out_dir) const {
  json arts = json::object();
  for (const auto& [name, a] : artifacts) {
    arts[name] = {{"path", a.path},
                  {"sha256", a.sha256},
                  {"stage", a.stage},
                  {"config_hash", a.config_hash},
                  {"created", a.created}};
  }
  const json j = {{"tool_version", tool_version}, {"artifacts", arts}};
  WriteFileAtomic(out_dir / kManifest, j.dump(2) + "\n");
}

void RunManifest::Record(const fs::path& out_dir, const std::string& name,
                         const std::string& stage, const std::string& config_hash) {
  artifacts[name] = {name, Sha256File(out_dir / name), stage, config_hash, UtcNow()};
  Save(out_dir);
}

void RunManifest::Verify(const fs::path& out_dir, const std::string& name) const {
  const auto it = artifacts.find(name);
  if (it == artifacts.end()) {
    throw IntegrityError("manifest has no record of " + name +
                         "; run the stage that produces it");
  }
  const fs::path p = out_dir / it->second.path;
  if (!fs::exists(p)) throw IntegrityError("recorded artifact missing: " + p.string());
  if (Sha256File(p) != it->second.sha256) {
    throw IntegrityError("checksum mismatch for " + p.string() +
                         "; it changed after the manifest was written");
  }
}

const AttackMetrics& EvalReport::Find(std::string_view attack) const {
  for (const auto& a : attacks) {
    if (a.attack == attack) return a;
  }
  throw InputError("no metrics for attack '" + std::string(attack) + "'");
}

std::string MetricsFileName(const ExperimentConfig& config) {
  return config.shuffle_labels ? "metrics_shuffled.json" : "metrics.json";
}

GenDataResult GenData(const ExperimentConfig& config) {
  config.Validate();
  fs::create_directories(config.out_dir);
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const World world = GenerateWorld(config.corpus_seed, config.n_facts);
  const Tokenizer tokenizer = Tokenizer::ForWorld(world);
  DatasetOptions opts;
  opts.n_members = config.n_members;
  opts.n_nonmembers = config.n_nonmembers;
  opts.counterfactual_fraction = config.counterfactual_fraction;
  std::vector<Sample> samples =
      BuildMembershipDataset(world, tokenizer, config.corpus_seed, opts);
  SplitSet split = Split(std::move(samples), config.Fractions(), config.split_seed,
                         /*allow_empty=*/true);

  Dataset ds;
  ds.world_seed = config.corpus_seed;
  ds.n_facts = config.n_facts;
  ds.vocab = tokenizer.vocab();
  for (auto* part : {&split.train, &split.validation, &split.test}) {
    for (auto& s : *part) ds.samples.push_back(std::move(s));
  }
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const Sample& a, const Sample& b) { return a.sample_id < b.sample_id; });
  WriteAndRecord(config, manifest, kDatasetFile, SerializeDataset(ds), "gen-data",
                 ConfigHash(config));

  GenDataResult r;
  r.n_samples = static_cast<int>(ds.samples.size());
  r.split_sizes = {static_cast<int>(split.train.size()),
                   static_cast<int>(split.validation.size()),
                   static_cast<int>(split.test.size())};
  r.vocab_size = tokenizer.size();
  return r;
}

TrainResult TrainStage(const ExperimentConfig& config, bool resume) {
  config.Validate();
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const Dataset ds = LoadVerifiedDataset(config, manifest);
  const Tokenizer tokenizer(ds.vocab);
  const std::string hash = ConfigHash(config);

  std::vector<TrainExample> examples;
  TrainResult result;
  for (const Sample& s : ds.samples) {
    if (s.label != Label::kMember) continue;
    if (config.train_split_only && s.split != SplitName::kTrain) continue;
    examples.push_back({s.prompt_tokens, s.target});
  }
  result.n_examples = static_cast<int>(examples.size());
  result.n_nonmember_examples = 0;

  const ModelConfig mc = config.Model(tokenizer.size());
  int start = 0;
  std::vector<double> history;
  Transformer model = [&] {
    if (!resume) return InitModel(mc, config.model_seed);
    Checkpoint cp = LoadVerifiedCheckpoint(config, manifest, ds);
    if (!(cp.config == mc)) {
      throw InputError("resume: checkpoint model config differs from the config");
    }
    const json meta = json::parse(cp.metadata);
    start = meta.at("epochs_completed").get<int>();
    history = meta.at("epoch_loss").get<std::vector<double>>();
    if (meta.at("train_seed").get<std::uint64_t>() != config.train_seed) {
      throw InputError("resume: checkpoint was trained with a different train_seed");
    }
    return Transformer(cp.config, std::move(cp.params));
  }();
  if (start > config.epochs) {
    throw InputError("resume: checkpoint already has " + std::to_string(start) +
                     " epochs, more than the configured " +
                     std::to_string(config.epochs));
  }

  auto write_log = [&](const std::string& error) {
    json log = {{"n_examples", result.n_examples},
                {"n_nonmember_examples", result.n_nonmember_examples},
                {"epochs_completed", static_cast<int>(history.size())},
                {"epoch_loss", history},
                {"lr", config.lr},
                {"train_seed", config.train_seed},
                {"loss_threshold", config.loss_threshold}};
    if (error.empty()) {
      log["final_loss"] = result.final_loss;
      log["success"] = result.success;
    } else {
      log["error"] = error;
      log["success"] = false;
    }
    WriteAndRecord(config, manifest, kTrainLogFile, log.dump(2) + "\n", "train", hash);
  };

  if (start < config.epochs) {
    TrainOptions opts;
    opts.epochs = config.epochs - start;
    opts.lr = config.lr;
    opts.seed = config.train_seed;
    opts.start_epoch = start;
    opts.on_epoch = [&](int, double loss) { history.push_back(loss); };
    try {
      result.final_loss = Train(model, examples, opts).final_loss;
    } catch (const TrainingError& e) {
      write_log(e.what());
      throw;
    }
  } else {
    result.final_loss = MeanLoss(model, examples);
  }
  result.epoch_loss = history;
  result.success = result.final_loss < config.loss_threshold;

  Checkpoint cp;
  cp.config = mc;
  cp.params = model.params();
  cp.metadata = json{{"epochs_completed", static_cast<int>(history.size())},
                     {"epoch_loss", history},
                     {"train_seed", config.train_seed},
                     {"lr", config.lr},
                     {"vocab_digest", tokenizer.Digest()}}
                    .dump();
  WriteAndRecord(config, manifest, kCheckpointFile, SerializeCheckpoint(cp), "train",
                 hash);
  write_log("");
  return result;
}

ExtractResult Extract(const ExperimentConfig& config) {
  config.Validate();
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const Dataset ds = LoadVerifiedDataset(config, manifest);
  Checkpoint cp = LoadVerifiedCheckpoint(config, manifest, ds);
  Transformer model(cp.config, std::move(cp.params));
  const ProbeDirection probe = ProbeDirection::Random(model.hidden_size(), config.probe_seed);
  const std::string hash = ConfigHash(config);

  ExtractResult result;
  result.n_samples = static_cast<int>(ds.samples.size());
  result.checksum_before = TensorChecksum(model.params());
  for (double k : config.k_percents) result.attacks.push_back(AttackNameForK(k));
  for (const char* a : {"perplexity", "zlib", "neighbour"}) result.attacks.push_back(a);

  std::vector<FeatureRow> rows;
  ScoreTable scores;
  scores.attacks = result.attacks;
  NeighbourOptions nopts;
  nopts.n_neighbours = config.n_neighbours;
  nopts.seed = config.neighbour_seed;
  for (const Sample& s : ds.samples) {
    DriftTrace trace;
    DriftFeatures f;
    try {
      f = GDriftFeatures(model, s.prompt_tokens, s.target, probe, config.eta, &trace);
    } catch (const IntegrityError& e) {
      throw IntegrityError("extract: parameter restore failed at sample " +
                           std::to_string(s.sample_id) + ": " + e.what());
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < probe.dim(); ++j) {
      dot += (trace.hidden_after[j] - trace.hidden_before[j]) * probe.v[j];
    }
    result.max_projection_residual =
        std::max(result.max_projection_residual, std::abs(f.ProjDelta() - dot));
    rows.push_back({s.sample_id, s.label, f});

    const std::vector<int> full = s.FullSequence();
    const std::vector<double> ll = TokenLogLikelihoods(model, full);
    std::vector<double> row;
    for (double k : config.k_percents) row.push_back(MinKFromLogLikelihoods(ll, k));
    row.push_back(-PerplexityFromLogLikelihoods(ll));
    row.push_back(ZlibScore(model, s.FullText(), full));
    row.push_back(NeighbourScore(model, s, nopts));
    scores.sample_ids.push_back(s.sample_id);
    scores.labels.push_back(s.label);
    scores.scores.push_back(std::move(row));
  }
  result.checksum_after = TensorChecksum(model.params());
  if (result.checksum_after != result.checksum_before) {
    throw IntegrityError("extract: parameter checksum changed during extraction");
  }

  WriteAndRecord(config, manifest, kFeaturesFile, SerializeFeatureTable(rows),
                 "extract", hash);
  WriteAndRecord(config, manifest, kScoresFile, SerializeScoreTable(scores), "extract",
                 hash);
  const json summary = {{"n_samples", result.n_samples},
                        {"checksum_before", result.checksum_before},
                        {"checksum_after", result.checksum_after},
                        {"max_projection_residual", result.max_projection_residual},
                        {"eta", config.eta},
                        {"probe_seed", config.probe_seed},
                        {"attacks", result.attacks}};
  WriteAndRecord(config, manifest, kExtractSummaryFile, summary.dump(2) + "\n",
                 "extract", hash);
  return result;
}

EvalReport Evaluate(const ExperimentConfig& config) {
  config.Validate();
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const EvalInputs in = LoadEvalInputs(config, manifest, true, config.shuffle_labels);
  const std::string hash = ConfigHash(config);

  EvalReport report;
  report.shuffled_labels = config.shuffle_labels;
  report.attacks.push_back(EvaluateAttack(
      kGDrift,
      GroupRows(in, [&](std::size_t i) { return FeatureVector(in.features[i].features); }),
      config, false));
  for (std::size_t a = 0; a < in.scores.attacks.size(); ++a) {
    report.attacks.push_back(EvaluateAttack(
        in.scores.attacks[a],
        GroupRows(in, [&](std::size_t i) {
          return std::vector<double>{in.scores.scores[i][a]};
        }),
        config, true));
  }

  json attacks = json::array();
  std::string comparison = "attack,auc,raw_auc\n";
  for (const AttackMetrics& m : report.attacks) {
    json tpr = json::object();
    for (std::size_t i = 0; i < config.fpr_grid.size(); ++i) {
      tpr[FormatDouble(config.fpr_grid[i])] = m.tpr_at_fpr[i];
    }
    attacks.push_back({{"attack", m.attack},
                       {"auc", m.auc},
                       {"raw_auc", m.raw_auc},
                       {"threshold", m.threshold},
                       {"validation", MetricsJson(m.validation)},
                       {"test", MetricsJson(m.test)},
                       {"tpr_at_fpr", tpr},
                       {"l2_lambda", m.l2_lambda},
                       {"converged", m.converged}});
    comparison += m.attack + "," + FormatDouble(m.auc) + "," + FormatDouble(m.raw_auc) + "\n";
  }
  const json metrics = {{"config_hash", hash},
                        {"shuffled_labels", config.shuffle_labels},
                        {"threshold_rule", "member iff probability > threshold; "
                                           "threshold maximises validation accuracy"},
                        {"attacks", attacks}};
  WriteAndRecord(config, manifest, MetricsFileName(config), metrics.dump(2) + "\n",
                 "evaluate", hash);
  if (!config.shuffle_labels) {
    WriteAndRecord(config, manifest, "comparison.csv", comparison, "evaluate", hash);
    for (const AttackMetrics& m : report.attacks) {
      WriteAndRecord(config, manifest, "roc_" + m.attack + ".csv", RocCsv(m.roc),
                     "evaluate", hash);
    }
  }
  return report;
}

std::vector<AblationRow> Ablate(const ExperimentConfig& config) {
  config.Validate();
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const EvalInputs in = LoadEvalInputs(config, manifest, false, false);
  const SplitRows rows = GroupRows(
      in, [&](std::size_t i) { return FeatureVector(in.features[i].features); });
  const auto& specs = CanonicalAblations();
  std::vector<AblationRow> table = RunAblation(rows.rows[0], rows.labels[0], rows.rows[2],
                                               rows.labels[2], specs, config.Classifier());
  std::string csv = "feature_set,auc\n";
  json arr = json::array();
  for (std::size_t i = 0; i < table.size(); ++i) {
    csv += table[i].name + "," + FormatDouble(table[i].auc) + "\n";
    json removed = json::array();
    for (std::size_t j = 0; j < kNumDriftFeatures; ++j) {
      if (!specs[i].keep[j]) removed.push_back(DriftFeatures::Names()[j]);
    }
    arr.push_back({{"feature_set", table[i].name}, {"auc", table[i].auc},
                   {"removed", removed}});
  }
  const std::string hash = ConfigHash(config);
  WriteAndRecord(config, manifest, "ablation.csv", csv, "ablate", hash);
  WriteAndRecord(config, manifest, "ablation.json",
                 json{{"config_hash", hash}, {"rows", arr}}.dump(2) + "\n", "ablate",
                 hash);
  return table;
}

std::string FormatDriftReport(const DriftReport& report) {
  json q = json::array();
  auto stats = [](const DriftClassStats& s) {
    return json{{"mean", s.mean}, {"std", s.stddev}, {"median", s.median},
                {"count", s.count}};
  };
  for (const DriftQuantity& d : report.quantities) {
    q.push_back({{"quantity", d.name},
                 {"member", stats(d.member)},
                 {"nonmember", stats(d.nonmember)}});
  }
  const json j = {{"normalization", "min-max, train split statistics"},
                  {"quantities", q}};
  return j.dump(2) + "\n";
}

DriftReport MakeDriftReport(const ExperimentConfig& config) {
  config.Validate();
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const EvalInputs in = LoadEvalInputs(config, manifest, false, false);
  const std::vector<std::string> names = {"loss_delta", "logit_delta", "proj_delta",
                                          "abs_proj_delta", "hidden_drift"};
  std::vector<std::vector<double>> raw, train;
  for (std::size_t i = 0; i < in.features.size(); ++i) {
    const DriftFeatures& f = in.features[i].features;
    std::vector<double> r = {f.LossDelta(), f.LogitDelta(), f.ProjDelta(),
                             std::abs(f.ProjDelta()), f.hidden_drift};
    if (in.split[i] == 0) train.push_back(r);
    raw.push_back(std::move(r));
  }
  const MinMaxScaler scaler = MinMaxScaler::Fit(train);
  const auto norm = scaler.Transform(raw);

  DriftReport report;
  std::string cdf = "quantity,class,value,cdf\n";
  for (std::size_t q = 0; q < names.size(); ++q) {
    DriftQuantity d;
    d.name = names[q];
    for (int cls : {1, 0}) {
      std::vector<double> v;
      for (std::size_t i = 0; i < norm.size(); ++i) {
        if (in.labels[i] == cls) v.push_back(norm[i][q]);
      }
      DriftClassStats s;
      std::tie(s.mean, s.stddev) = MeanStd(v);
      s.median = Median(v);
      s.count = static_cast<int>(v.size());
      (cls == 1 ? d.member : d.nonmember) = s;
      std::sort(v.begin(), v.end());
      const std::string cname = cls == 1 ? "member" : "nonmember";
      if (!v.empty()) cdf += d.name + "," + cname + "," + FormatDouble(v[0]) + ",0\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        cdf += d.name + "," + cname + "," + FormatDouble(v[i]) + "," +
               FormatDouble(static_cast<double>(i + 1) / v.size()) + "\n";
      }
    }
    report.quantities.push_back(d);
  }
  const std::string hash = ConfigHash(config);
  WriteAndRecord(config, manifest, "drift_report.json", FormatDriftReport(report),
                 "drift-report", hash);
  WriteAndRecord(config, manifest, "drift_cdf.csv", cdf, "drift-report", hash);
  return report;
}

std::string FormatConsistencyCsv(const ConsistencyReport& report) {
  std::string out =
      "fact_id,template_id,prompt,answer,class,alpha_before,alpha_after,abs_delta_alpha\n";
  for (const ConsistencyRow& r : report.rows) {
    out += std::to_string(r.fact_id) + "," + std::to_string(r.template_id) + "," +
           CsvQuote(r.prompt) + "," + CsvQuote(r.answer) + "," +
           std::string(LabelName(r.label)) + "," + FormatDouble(r.alpha_before) + "," +
           FormatDouble(r.alpha_after) + "," + FormatDouble(r.abs_delta_alpha) + "\n";
  }
  return out;
}

ConsistencyReport Consistency(const ExperimentConfig& config) {
  config.Validate();
  RunManifest manifest = RunManifest::Load(config.out_dir);
  const Dataset ds = LoadVerifiedDataset(config, manifest);
  Checkpoint cp = LoadVerifiedCheckpoint(config, manifest, ds);
  Transformer model(cp.config, std::move(cp.params));
  const Tokenizer tokenizer(ds.vocab);
  const World world = GenerateWorld(ds.world_seed, ds.n_facts);
  const ProbeDirection probe = ProbeDirection::Random(model.hidden_size(), config.probe_seed);

  std::vector<int> facts = config.consistency_fact_ids;
  if (facts.empty()) {
    std::vector<int> members;
    for (const Sample& s : ds.samples) {
      if (s.origin == Origin::kMember) members.push_back(s.fact_id);
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    members.resize(std::min<std::size_t>(members.size(), config.consistency_n_facts));
    facts = members;
  }

  ConsistencyReport report;
  for (int fid : facts) {
    if (fid < 0 || fid >= static_cast<int>(world.facts.size())) {
      throw InputError("consistency: fact id " + std::to_string(fid) + " out of range");
    }
    const Fact& fact = world.facts[fid];
    std::vector<double> drift[2];
    for (Label label : {Label::kMember, Label::kNonMember}) {
      const bool member = label == Label::kMember;
      const std::string answer =
          member ? fact.object : WrongObject(fact, config.corpus_seed);
      const auto set = ParaphraseSet(tokenizer, fact, config.consistency_k, answer, label,
                                     member ? Origin::kMember : Origin::kCounterfactual);
      for (const Sample& s : set) {
        const DriftFeatures f =
            GDriftFeatures(model, s.prompt_tokens, s.target, probe, config.eta);
        ConsistencyRow row;
        row.fact_id = fid;
        row.template_id = s.template_id;
        row.prompt = s.prompt_text;
        row.answer = s.answer_text;
        row.label = label;
        row.alpha_before = f.proj_before;
        row.alpha_after = f.proj_after;
        row.abs_delta_alpha = std::abs(f.ProjDelta());
        drift[member ? 0 : 1].push_back(row.abs_delta_alpha);
        report.rows.push_back(std::move(row));
      }
    }
    ConsistencyFact cf{fid, MeanStd(drift[0]).second, MeanStd(drift[1]).second};
    report.mean_member_std += cf.member_std;
    report.mean_nonmember_std += cf.nonmember_std;
    if (cf.member_std < cf.nonmember_std) ++report.facts_member_more_stable;
    report.facts.push_back(cf);
  }
  if (!report.facts.empty()) {
    report.mean_member_std /= report.facts.size();
    report.mean_nonmember_std /= report.facts.size();
  }

  json per_fact = json::array();
  for (const ConsistencyFact& f : report.facts) {
    per_fact.push_back({{"fact_id", f.fact_id},
                        {"member_std_abs_delta_alpha", f.member_std},
                        {"nonmember_std_abs_delta_alpha", f.nonmember_std}});
  }
  const json summary = {{"k", config.consistency_k},
                        {"facts", per_fact},
                        {"mean_member_std", report.mean_member_std},
                        {"mean_nonmember_std", report.mean_nonmember_std},
                        {"facts_member_more_stable", report.facts_member_more_stable}};
  const std::string hash = ConfigHash(config);
  WriteAndRecord(config, manifest, "consistency.csv", FormatConsistencyCsv(report),
                 "consistency", hash);
  WriteAndRecord(config, manifest, "consistency.json", summary.dump(2) + "\n",
                 "consistency", hash);
  return report;
}

EvalReport RunAll(const ExperimentConfig& config) {
  GenData(config);
  TrainStage(config, false);
  Extract(config);
  EvalReport report = Evaluate(config);
  Ablate(config);
  MakeDriftReport(config);
  Consistency(config);
  return report;
}

}  // namespace gdrift
