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

// Python bindings for the gdrift pipeline stages and core utilities.

#include <filesystem>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gdrift/attacks.h"
#include "gdrift/checkpoint.h"
#include "gdrift/classifier.h"
#include "gdrift/corpus.h"
#include "gdrift/error.h"
#include "gdrift/harness.h"
#include "gdrift/model.h"

namespace py = pybind11;

namespace gdrift {
namespace {

DriftFeatures FeaturesFromCheckpoint(const std::filesystem::path& checkpoint,
                                     const std::vector<int>& prompt, int target,
                                     std::uint64_t probe_seed, double eta) {
  Checkpoint cp = LoadCheckpoint(checkpoint);
  Transformer model(cp.config, std::move(cp.params));
  const ProbeDirection probe = ProbeDirection::Random(model.hidden_size(), probe_seed);
  return GDriftFeatures(model, prompt, target, probe, eta);
}

}  // namespace
}  // namespace gdrift

PYBIND11_MODULE(_gdrift, m) {
  using namespace gdrift;
  m.doc() = "White-box membership inference with G-Drift";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", error.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", error.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", error.ptr());
  py::register_exception<ConstructionError>(m, "ConstructionError", error.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<IndexError>(m, "IndexError", error.ptr());

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("corpus_seed", &ExperimentConfig::corpus_seed)
      .def_readwrite("n_facts", &ExperimentConfig::n_facts)
      .def_readwrite("n_members", &ExperimentConfig::n_members)
      .def_readwrite("n_nonmembers", &ExperimentConfig::n_nonmembers)
      .def_readwrite("counterfactual_fraction", &ExperimentConfig::counterfactual_fraction)
      .def_readwrite("split_seed", &ExperimentConfig::split_seed)
      .def_readwrite("train_fraction", &ExperimentConfig::train_fraction)
      .def_readwrite("validation_fraction", &ExperimentConfig::validation_fraction)
      .def_readwrite("test_fraction", &ExperimentConfig::test_fraction)
      .def_readwrite("model_seed", &ExperimentConfig::model_seed)
      .def_readwrite("model_dim", &ExperimentConfig::model_dim)
      .def_readwrite("n_layers", &ExperimentConfig::n_layers)
      .def_readwrite("n_heads", &ExperimentConfig::n_heads)
      .def_readwrite("ffn_dim", &ExperimentConfig::ffn_dim)
      .def_readwrite("max_seq_len", &ExperimentConfig::max_seq_len)
      .def_readwrite("train_seed", &ExperimentConfig::train_seed)
      .def_readwrite("epochs", &ExperimentConfig::epochs)
      .def_readwrite("lr", &ExperimentConfig::lr)
      .def_readwrite("loss_threshold", &ExperimentConfig::loss_threshold)
      .def_readwrite("train_split_only", &ExperimentConfig::train_split_only)
      .def_readwrite("eta", &ExperimentConfig::eta)
      .def_readwrite("probe_seed", &ExperimentConfig::probe_seed)
      .def_readwrite("k_percents", &ExperimentConfig::k_percents)
      .def_readwrite("n_neighbours", &ExperimentConfig::n_neighbours)
      .def_readwrite("neighbour_seed", &ExperimentConfig::neighbour_seed)
      .def_readwrite("lambda_grid", &ExperimentConfig::lambda_grid)
      .def_readwrite("cv_folds", &ExperimentConfig::cv_folds)
      .def_readwrite("cv_seed", &ExperimentConfig::cv_seed)
      .def_readwrite("fpr_grid", &ExperimentConfig::fpr_grid)
      .def_readwrite("shuffle_labels", &ExperimentConfig::shuffle_labels)
      .def_readwrite("shuffle_seed", &ExperimentConfig::shuffle_seed)
      .def_readwrite("consistency_fact_ids", &ExperimentConfig::consistency_fact_ids)
      .def_readwrite("consistency_n_facts", &ExperimentConfig::consistency_n_facts)
      .def_readwrite("consistency_k", &ExperimentConfig::consistency_k)
      .def_readwrite("out_dir", &ExperimentConfig::out_dir)
      .def("set_all_seeds", &ExperimentConfig::SetAllSeeds)
      .def("validate", &ExperimentConfig::Validate)
      .def("to_text", [](const ExperimentConfig& c) { return ConfigToText(c); })
      .def("hash", [](const ExperimentConfig& c) { return ConfigHash(c); })
      .def_static(
          "from_text", [](const std::string& text) { return ConfigFromText(text); },
          py::arg("text"));

  py::class_<GenDataResult>(m, "GenDataResult")
      .def_readonly("n_samples", &GenDataResult::n_samples)
      .def_readonly("split_sizes", &GenDataResult::split_sizes)
      .def_readonly("vocab_size", &GenDataResult::vocab_size);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("n_examples", &TrainResult::n_examples)
      .def_readonly("n_nonmember_examples", &TrainResult::n_nonmember_examples)
      .def_readonly("epoch_loss", &TrainResult::epoch_loss)
      .def_readonly("final_loss", &TrainResult::final_loss)
      .def_readonly("success", &TrainResult::success);
  py::class_<ExtractResult>(m, "ExtractResult")
      .def_readonly("n_samples", &ExtractResult::n_samples)
      .def_readonly("checksum_before", &ExtractResult::checksum_before)
      .def_readonly("checksum_after", &ExtractResult::checksum_after)
      .def_readonly("max_projection_residual", &ExtractResult::max_projection_residual)
      .def_readonly("attacks", &ExtractResult::attacks);

  py::class_<ThresholdMetrics>(m, "ThresholdMetrics")
      .def_readonly("tpr", &ThresholdMetrics::tpr)
      .def_readonly("fpr", &ThresholdMetrics::fpr)
      .def_readonly("accuracy", &ThresholdMetrics::accuracy);
  py::class_<RocCurve>(m, "RocCurve")
      .def_readonly("fpr", &RocCurve::fpr)
      .def_readonly("tpr", &RocCurve::tpr)
      .def_readonly("thresholds", &RocCurve::thresholds);
  py::class_<RocResult>(m, "RocResult")
      .def_readonly("curve", &RocResult::curve)
      .def_readonly("auc", &RocResult::auc);
  py::class_<AttackMetrics>(m, "AttackMetrics")
      .def_readonly("attack", &AttackMetrics::attack)
      .def_readonly("auc", &AttackMetrics::auc)
      .def_readonly("raw_auc", &AttackMetrics::raw_auc)
      .def_readonly("threshold", &AttackMetrics::threshold)
      .def_readonly("validation", &AttackMetrics::validation)
      .def_readonly("test", &AttackMetrics::test)
      .def_readonly("tpr_at_fpr", &AttackMetrics::tpr_at_fpr)
      .def_readonly("l2_lambda", &AttackMetrics::l2_lambda)
      .def_readonly("converged", &AttackMetrics::converged)
      .def_readonly("roc", &AttackMetrics::roc);
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("attacks", &EvalReport::attacks)
      .def_readonly("shuffled_labels", &EvalReport::shuffled_labels)
      .def(
          "find", [](const EvalReport& r, const std::string& a) { return r.Find(a); },
          py::arg("attack"));
  py::class_<AblationRow>(m, "AblationRow")
      .def_readonly("name", &AblationRow::name)
      .def_readonly("auc", &AblationRow::auc);
  py::class_<DriftClassStats>(m, "DriftClassStats")
      .def_readonly("mean", &DriftClassStats::mean)
      .def_readonly("stddev", &DriftClassStats::stddev)
      .def_readonly("median", &DriftClassStats::median)
      .def_readonly("count", &DriftClassStats::count);
  py::class_<DriftQuantity>(m, "DriftQuantity")
      .def_readonly("name", &DriftQuantity::name)
      .def_readonly("member", &DriftQuantity::member)
      .def_readonly("nonmember", &DriftQuantity::nonmember);
  py::class_<DriftReport>(m, "DriftReport")
      .def_readonly("quantities", &DriftReport::quantities);
  py::class_<ConsistencyFact>(m, "ConsistencyFact")
      .def_readonly("fact_id", &ConsistencyFact::fact_id)
      .def_readonly("member_std", &ConsistencyFact::member_std)
      .def_readonly("nonmember_std", &ConsistencyFact::nonmember_std);
  py::class_<ConsistencyReport>(m, "ConsistencyReport")
      .def_readonly("facts", &ConsistencyReport::facts)
      .def_readonly("mean_member_std", &ConsistencyReport::mean_member_std)
      .def_readonly("mean_nonmember_std", &ConsistencyReport::mean_nonmember_std)
      .def_readonly("facts_member_more_stable", &ConsistencyReport::facts_member_more_stable)
      .def_property_readonly("csv", [](const ConsistencyReport& r) {
        return FormatConsistencyCsv(r);
      });

  // Long stages release the GIL.
  const auto nogil = py::call_guard<py::gil_scoped_release>();
  m.def("gen_data", &GenData, py::arg("config"), nogil);
  m.def("train", &TrainStage, py::arg("config"), py::arg("resume") = false, nogil);
  m.def("extract", &Extract, py::arg("config"), nogil);
  m.def("evaluate", &Evaluate, py::arg("config"), nogil);
  m.def("ablate", &Ablate, py::arg("config"), nogil);
  m.def("drift_report", &MakeDriftReport, py::arg("config"), nogil);
  m.def("consistency", &Consistency, py::arg("config"), nogil);
  m.def("run_all", &RunAll, py::arg("config"), nogil);

  py::class_<Fact>(m, "Fact")
      .def_readonly("fact_id", &Fact::fact_id)
      .def_readonly("subject", &Fact::subject)
      .def_readonly("relation", &Fact::relation)
      .def_readonly("object", &Fact::object);
  m.def(
      "generate_world",
      [](std::uint64_t seed, int n_facts) { return GenerateWorld(seed, n_facts).facts; },
      py::arg("seed"), py::arg("n_facts"));
  m.def(
      "render_qa",
      [](const Fact& f, int template_id) {
        const QaText qa = RenderQa(f, template_id);
        return py::make_tuple(qa.prompt, qa.answer);
      },
      py::arg("fact"), py::arg("template_id"));

  py::class_<Tokenizer>(m, "Tokenizer")
      .def(py::init<std::vector<std::string>>(), py::arg("vocab"))
      .def_static(
          "for_world",
          [](std::uint64_t seed, int n_facts) {
            return Tokenizer::ForWorld(GenerateWorld(seed, n_facts));
          },
          py::arg("seed"), py::arg("n_facts"))
      .def("tokenize", &Tokenizer::Tokenize, py::arg("text"))
      .def(
          "detokenize",
          [](const Tokenizer& t, const std::vector<int>& ids) { return t.Detokenize(ids); },
          py::arg("ids"))
      .def("first_subtoken", &Tokenizer::FirstSubtoken, py::arg("answer"))
      .def_property_readonly("size", &Tokenizer::size)
      .def_property_readonly("vocab", &Tokenizer::vocab);

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return RocAuc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "gdrift_features",
      [](const std::filesystem::path& checkpoint, const std::vector<int>& prompt, int target,
         std::uint64_t probe_seed, double eta) {
        const DriftFeatures f = FeaturesFromCheckpoint(checkpoint, prompt, target, probe_seed,
                                                       eta);
        py::dict out;
        const auto values = f.ToArray();
        for (std::size_t i = 0; i < kNumDriftFeatures; ++i) {
          out[py::str(std::string(DriftFeatures::Names()[i]))] = values[i];
        }
        return out;
      },
      py::arg("checkpoint"), py::arg("prompt"), py::arg("target"), py::arg("probe_seed"),
      py::arg("eta") = kDefaultEta);
  m.attr("__version__") = std::string(kToolVersion.substr(kToolVersion.find(' ') + 1));
}
