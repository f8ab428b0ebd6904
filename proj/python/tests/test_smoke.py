# Copyright 2026 The gdrift Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests for the Python bindings."""

import json
import math

import pytest

import gdrift


def small_config(out_dir):
    c = gdrift.ExperimentConfig()
    c.set_all_seeds(3)
    c.n_facts = 80
    c.n_members = 30
    c.n_nonmembers = 30
    c.model_dim = 16
    c.n_layers = 1
    c.n_heads = 2
    c.ffn_dim = 32
    c.epochs = 3
    c.n_neighbours = 2
    c.cv_folds = 3
    c.consistency_n_facts = 2
    c.out_dir = str(out_dir)
    return c


def test_config_round_trip():
    c = gdrift.ExperimentConfig()
    c.set_all_seeds(5)
    c.eta = 0.05
    back = gdrift.ExperimentConfig.from_text(c.to_text())
    assert back.hash() == c.hash()
    assert back.eta == 0.05
    with pytest.raises(gdrift.InputError):
        gdrift.ExperimentConfig.from_text("config_version = 1\nbogus = 2\n")


def test_roc_auc_examples():
    assert gdrift.roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]).auc == 1.0
    assert gdrift.roc_auc([0.5] * 4, [1, 0, 1, 0]).auc == 0.5
    with pytest.raises(gdrift.InputError):
        gdrift.roc_auc([0.1, 0.2], [1, 1])


def test_world_and_tokenizer():
    facts = gdrift.generate_world(7, 50)
    assert len(facts) == 50
    assert len({(f.subject, f.relation) for f in facts}) == 50
    capital = next(f for f in facts if f.relation == "capital")
    prompt, answer = gdrift.render_qa(capital, 0)
    assert prompt == f"Q: What is the capital of {capital.subject}? A:"
    assert answer == capital.object
    tok = gdrift.Tokenizer.for_world(7, 50)
    ids = tok.tokenize(prompt + " " + answer)
    assert tok.tokenize(tok.detokenize(ids)) == ids
    assert tok.first_subtoken(answer) == tok.tokenize(answer)[0]


def test_pipeline_stages(tmp_path):
    c = small_config(tmp_path)
    gen = gdrift.gen_data(c)
    assert gen.n_samples == 60
    assert sum(gen.split_sizes) == 60
    train = gdrift.train(c)
    assert train.n_nonmember_examples == 0
    assert len(train.epoch_loss) == 3
    ext = gdrift.extract(c)
    assert ext.checksum_before == ext.checksum_after
    report = gdrift.evaluate(c)
    names = [a.attack for a in report.attacks]
    assert names[0] == "gdrift"
    assert {"min_k_20", "perplexity", "zlib", "neighbour"} <= set(names)
    assert 0.0 <= report.find("gdrift").auc <= 1.0
    rows = gdrift.ablate(c)
    assert len(rows) == 13 and rows[0].name == "all"
    assert rows[0].auc == report.find("gdrift").auc
    drift = gdrift.drift_report(c)
    assert [q.name for q in drift.quantities][0] == "loss_delta"
    cons = gdrift.consistency(c)
    assert len(cons.facts) == 2
    assert cons.csv.startswith("fact_id,template_id,prompt,answer,class")
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["config_hash"] == c.hash()


def test_gdrift_features_from_checkpoint(tmp_path):
    c = small_config(tmp_path)
    gdrift.gen_data(c)
    gdrift.train(c)
    tok_line = json.loads((tmp_path / "dataset.jsonl").read_text().splitlines()[0])
    tok = gdrift.Tokenizer(tok_line["vocab"])
    sample = json.loads((tmp_path / "dataset.jsonl").read_text().splitlines()[1])
    prompt = tok.tokenize(sample["prompt"])
    target = tok.first_subtoken(sample["answer"])
    f = gdrift.gdrift_features(str(tmp_path / "checkpoint.bin"), prompt, target, 3)
    assert list(f) == ["loss_before", "logit_before", "proj_before", "loss_after",
                       "logit_after", "proj_after", "hidden_drift"]
    assert f["loss_after"] > f["loss_before"]
    assert math.isfinite(f["hidden_drift"])
    with pytest.raises(gdrift.InputError):
        gdrift.gdrift_features(str(tmp_path / "checkpoint.bin"), prompt, target, 3, 0.0)


def test_errors_map_to_python(tmp_path):
    c = small_config(tmp_path)
    c.train_fraction = 0.9
    with pytest.raises(gdrift.InputError):
        gdrift.gen_data(c)
    assert issubclass(gdrift.IntegrityError, gdrift.Error)
    assert issubclass(gdrift.Error, RuntimeError)
