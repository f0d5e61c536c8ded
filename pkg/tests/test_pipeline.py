import hashlib
import json

import numpy as np
import pytest
from conftest import two_subject_config

from mibci.classifiers import CLASSIFIER_KINDS
from mibci.dataset import ChannelKind, Trial
from mibci.errors import EmptySection, FeatureMismatch, UnknownSubjectLabel
from mibci.pipeline import (
    DispatchPipeline,
    EvaluationReport,
    GateBundle,
    MiBundle,
    accuracy_pct,
    check_compatible,
    confusion_matrix,
    dispatch_predict,
    evaluate_dispatch,
    held_out,
    section_mode,
    sectioned_predict,
    subject_split,
    train_gate,
    train_mi,
)


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@pytest.fixture(scope="module")
def trained(synth_trials, synth_cfg):
    t1, t2 = synth_trials
    mi1, _ = train_mi(t1, synth_cfg)
    mi2, _ = train_mi(t2, synth_cfg)
    gate, gate_rep = train_gate(t1, t2, synth_cfg)
    pipe = DispatchPipeline(gate, {1: mi1, 2: mi2}, tuple(t1.channel_names), t1.fs)
    return pipe, gate_rep


# --------------------------------------------------------------------------- reports and sections


@pytest.mark.parametrize("preds,expected", [([1, 1, 0, 1, 0], 1), ([0, 1], 0), ([0, 0, 1, 1, 0], 0), ([1], 1)])
def test_section_mode(preds, expected):
    assert section_mode(preds) == expected


def test_section_mode_empty():
    with pytest.raises(EmptySection):
        section_mode([])


def test_confusion_and_accuracy():
    cm = confusion_matrix([0, 0, 1, 1, 1], [0, 1, 1, 1, 0])
    assert cm == [[1, 1], [1, 2]]
    assert accuracy_pct(cm) == pytest.approx(60.0)


def test_report_json_stable():
    rep = EvaluationReport("t", "lda", 0, "abc", {"test": [[3, 1], [0, 4]]}, {"test": 8})
    assert rep.accuracy["test"] == pytest.approx(87.5)
    d = json.loads(rep.to_json())
    assert d["accuracy_pct"]["test"] == pytest.approx(87.5)
    assert d["confusion"]["test"] == [[3, 1], [0, 4]]
    assert rep.to_json() == EvaluationReport("t", "lda", 0, "abc", {"test": [[3, 1], [0, 4]]}, {"test": 8}).to_json()


# --------------------------------------------------------------------------- MI training


@pytest.mark.parametrize("kind", CLASSIFIER_KINDS)
def test_mi_synthetic_accuracy(synth_trials, synth_cfg, kind):
    for ts in synth_trials:
        _, rep = train_mi(ts, synth_cfg, kind=kind)
        assert rep.accuracy["test"] >= 95.0
        assert rep.counts == {"train": 160, "test": 40}


def test_mi_ica_drops_blink_component(synth_trials, synth_cfg):
    bundle, rep = train_mi(synth_trials[0], synth_cfg)
    assert bundle.ica is not None
    assert len(bundle.ica.drop) == 1
    assert max(rep.extra["ica_scores"]) >= 0.8
    bundle2, rep2 = train_mi(synth_trials[1], synth_cfg)
    assert bundle2.ica is None and rep2.extra["ica_drop"] is None


def test_mi_bundle_roundtrip(synth_trials, synth_cfg):
    ts = synth_trials[0]
    bundle, _ = train_mi(ts, synth_cfg)
    again = MiBundle.from_dict(json.loads(json.dumps(bundle.to_dict())))
    assert np.array_equal(again.predict(ts), bundle.predict(ts))


def test_leakage_guard(synth_trials, synth_cfg):
    # replacing held-out trials with garbage must not move any fitted parameter
    t1, t2 = synth_trials
    _, test_idx = subject_split(t1, synth_cfg)
    rng = np.random.default_rng(0)
    trials = list(t1.trials)
    for i in test_idx:
        trials[i] = Trial(rng.normal(scale=50, size=trials[i].data.shape), 1 - trials[i].label, trials[i].subject_id)
    mutated = type(t1)(tuple(trials), t1.label_semantics, t1.channels, t1.fs)

    a, rep_a = train_mi(t1, synth_cfg)
    b, rep_b = train_mi(mutated, synth_cfg)
    assert digest(a.to_dict()) == digest(b.to_dict())
    assert rep_a.confusion["train"] == rep_b.confusion["train"]
    assert rep_a.confusion["test"] != rep_b.confusion["test"]

    ga, _ = train_gate(t1, t2, synth_cfg)
    gb, _ = train_gate(mutated, t2, synth_cfg)
    assert digest(ga.to_dict()) == digest(gb.to_dict())


def test_split_shared_between_mi_and_gate(synth_trials, synth_cfg, trained):
    _, gate_rep = trained
    n_test = sum(len(held_out(ts, synth_cfg)) for ts in synth_trials)
    assert gate_rep.counts["test"] == n_test
    assert gate_rep.counts["train"] == sum(len(ts) for ts in synth_trials) - n_test


# --------------------------------------------------------------------------- gate


def test_gate_sectioned_perfect(trained):
    _, rep = trained
    assert rep.accuracy["test_sectioned"] == 100.0
    assert rep.counts["sections"] == 16
    assert all(s["size"] == 5 for s in rep.sections)


def test_sectioned_predict_matches_mode(trained, synth_trials, synth_cfg):
    pipe, _ = trained
    te = held_out(synth_trials[1], synth_cfg)
    X = pipe.gate.extractor.transform(te).X[:5]
    per_trial = pipe.gate.model.predict(pipe.gate.standardizer.transform(X))
    assert sectioned_predict(pipe.gate, X) == section_mode(per_trial) == 1
    with pytest.raises(EmptySection):
        sectioned_predict(pipe.gate, np.zeros((0, X.shape[1])))


def test_gate_roundtrip(trained):
    pipe, _ = trained
    g = GateBundle.from_dict(json.loads(json.dumps(pipe.gate.to_dict())))
    assert digest(g.to_dict()) == digest(pipe.gate.to_dict())


# --------------------------------------------------------------------------- dispatch


def test_dispatch_subject1_run(trained, synth_trials, synth_cfg):
    pipe, _ = trained
    run = held_out(synth_trials[0], synth_cfg).subset(range(5))
    label, labels = dispatch_predict(pipe, run)
    assert label == 0
    assert labels == pipe.mi[1].predict(run).tolist()


def test_dispatch_identical_bundles(trained, synth_trials, synth_cfg):
    # when both subjects share one MI bundle, routing cannot change the MI output
    pipe, _ = trained
    same = DispatchPipeline(pipe.gate, {1: pipe.mi[1], 2: pipe.mi[1]}, pipe.channel_names, pipe.fs)
    run = held_out(synth_trials[1], synth_cfg).subset(range(5))
    assert dispatch_predict(same, run)[1] == pipe.mi[1].predict(run).tolist()


def test_unknown_subject_label(trained):
    pipe, _ = trained
    with pytest.raises(UnknownSubjectLabel):
        DispatchPipeline(pipe.gate, {1: pipe.mi[1]}, pipe.channel_names, pipe.fs)


def test_evaluate_dispatch(trained, synth_trials, synth_cfg):
    pipe, _ = trained
    t1, t2 = (held_out(ts, synth_cfg) for ts in synth_trials)
    rep = evaluate_dispatch(pipe, t1, t2, seed=3)
    acc = rep.accuracy
    assert acc["gate_routing"] == 100.0
    # a perfect gate routes every run to its own bundle
    assert acc["end_to_end_mi"] == acc["oracle_gate_mi"]
    assert acc["end_to_end_mi"] >= 95.0
    assert rep.counts == {"runs": 16, "trials": 80}
    assert rep.to_json() == evaluate_dispatch(pipe, t1, t2, seed=3).to_json()


def test_check_compatible(trained):
    pipe, _ = trained
    check_compatible(pipe, two_subject_config())
    other = two_subject_config(features={"channels": ["C3", "Cz", "C4"]})
    with pytest.raises(FeatureMismatch):
        check_compatible(pipe, other)


def test_dispatch_wrong_channels(trained, synth_trials, synth_cfg):
    pipe, _ = trained
    ts = held_out(synth_trials[0], synth_cfg).subset(range(5))
    bad = [Trial(t.data[:, :4], t.label, t.subject_id) for t in ts]
    with pytest.raises(FeatureMismatch):
        dispatch_predict(pipe, bad)


def test_trials_have_eog(synth_trials):
    assert len(synth_trials[0].indices_of(ChannelKind.EOG)) == 3
