"""Per-subject MI classifiers, the cross-subject gate and gated dispatch.

Data flow for one subject::

    recordings -> bandpass (continuous) -> epochs -> split
        train -> [ICA fit + EOG component removal] -> features -> standardizer -> classifier
        test  -> same fitted transforms

The gate pools both subjects' training partitions under one extractor and
one standardizer. Its test partition is evaluated in sections whose mode is
the decision for that section.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .classifiers import Classifier, fit_classifier, model_from_dict, model_to_dict
from .config import RunConfig
from .dataset import ChannelKind, LabelSemantics, Recording, Trial, TrialSet, epoch_trials, load_recording, split_indices
from .dsp import BandSpec, design_butterworth_bandpass, filter_zero_phase
from .errors import EmptySection, FeatureMismatch, UnknownSubjectLabel, ValidationError
from .features import CspExtractor, LogSubbandExtractor, Standardizer, extractor_from_dict, fit_standardizer
from .ica import IcaModel, fast_ica, remove_components, score_eog_correlation, select_artifact_components

Extractor = LogSubbandExtractor | CspExtractor


# --------------------------------------------------------------------------- data preparation


def bandpass_recording(rec: Recording, cfg: RunConfig) -> Recording:
    p = cfg.preprocessing
    coeffs = design_butterworth_bandpass(p.filter_order, BandSpec(*p.band), rec.fs)
    return rec.with_samples(filter_zero_phase(rec.samples, coeffs))


def prepare_subject(cfg: RunConfig, subject_id: int, recordings: Sequence[Recording] | None = None) -> TrialSet:
    """Bandpass and epoch every session of a subject and pool the trials.

    ``recordings`` defaults to the files listed for the subject in ``cfg``.
    """
    sub = cfg.subject(subject_id)
    if recordings is None:
        recordings = [load_recording(cfg.data_path / r) for r in sub.recordings]
    start, end = cfg.preprocessing.window_s
    sets = [epoch_trials(bandpass_recording(r, cfg), start, end, subject_id) for r in recordings]
    return TrialSet.concat(sets)


def subject_split(ts: TrialSet, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """The one train/test partition of a subject shared by MI and gate training."""
    return split_indices(len(ts), cfg.train_fraction, cfg.seed)


# --------------------------------------------------------------------------- ICA cleaning


@dataclass(frozen=True)
class IcaCleaning:
    model: IcaModel
    drop: tuple[int, ...]
    eeg_channels: tuple[str, ...]
    scores: tuple[float, ...]

    def apply_array(self, data: np.ndarray, channel_names: Sequence[str]) -> np.ndarray:
        names = list(channel_names)
        cols = [names.index(c) for c in self.eeg_channels]
        out = np.array(data, dtype=float, copy=True)
        n, t, _ = out.shape
        eeg = out[:, :, cols].reshape(n * t, len(cols))
        out[:, :, cols] = remove_components(self.model, eeg, self.drop).reshape(n, t, len(cols))
        return out

    def apply(self, ts: TrialSet) -> TrialSet:
        return ts.with_data(self.apply_array(ts.data, ts.channel_names))

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "drop": list(self.drop),
            "eeg_channels": list(self.eeg_channels),
            "scores": list(self.scores),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IcaCleaning":
        return cls(IcaModel.from_dict(d["model"]), tuple(d["drop"]), tuple(d["eeg_channels"]), tuple(d["scores"]))


def fit_ica_cleaning(train: TrialSet, cfg: RunConfig) -> IcaCleaning:
    """Fit ICA on the pooled training EEG and pick components that track the EOG."""
    ic = cfg.preprocessing.ica
    eeg_idx = train.indices_of(ChannelKind.EEG)
    eog_idx = train.indices_of(ChannelKind.EOG)
    if not eog_idx:
        raise ValidationError("ICA cleaning requires EOG channels")
    data = train.data
    eeg = data[:, :, eeg_idx].reshape(-1, len(eeg_idx))
    eog = data[:, :, eog_idx].reshape(-1, len(eog_idx))
    model = fast_ica(eeg, ic.n_components, seed=cfg.seed, tol=ic.tol, max_iter=ic.max_iter)
    names = train.channel_names
    scores = score_eog_correlation(model, eeg, eog, [names[i] for i in eog_idx])
    drop = select_artifact_components(scores, ic.threshold, ic.max_drop)
    return IcaCleaning(model, drop, tuple(names[i] for i in eeg_idx), tuple(float(s) for s in scores.scores))


# --------------------------------------------------------------------------- reports


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int]) -> list[list[int]]:
    """2x2 counts, rows = true label, columns = predicted label."""
    cm = np.zeros((2, 2), dtype=int)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm.tolist()


def accuracy_pct(cm: list[list[int]]) -> float:
    total = sum(map(sum, cm))
    return 100.0 * (cm[0][0] + cm[1][1]) / total if total else 0.0


@dataclass
class EvaluationReport:
    task: str
    classifier: str
    seed: int
    config_fingerprint: str
    confusion: dict[str, list[list[int]]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    sections: list[dict[str, Any]] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def accuracy(self) -> dict[str, float]:
        """Accuracy in percent for every confusion matrix in the report."""
        return {k: accuracy_pct(cm) for k, cm in self.confusion.items()}

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "classifier": self.classifier,
            "accuracy_pct": self.accuracy,
            "confusion": self.confusion,
            "counts": self.counts,
            "sections": self.sections,
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "version": __version__,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- bundles


@dataclass(frozen=True)
class MiBundle:
    subject_id: int
    extractor: Extractor
    standardizer: Standardizer
    model: Classifier
    ica: IcaCleaning | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def predict_array(self, data: np.ndarray, channel_names: Sequence[str], fs: float) -> np.ndarray:
        if self.ica is not None:
            data = self.ica.apply_array(data, channel_names)
        X = self.extractor.transform_array(data, channel_names, fs)
        return self.model.predict(self.standardizer.transform(X))

    def predict(self, ts: TrialSet) -> np.ndarray:
        return self.predict_array(ts.data, ts.channel_names, ts.fs)

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "extractor": self.extractor.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "classifier": model_to_dict(self.model, self.extractor.feature_names),
            "ica": None if self.ica is None else self.ica.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MiBundle":
        ext = extractor_from_dict(d["extractor"])
        return cls(
            int(d["subject_id"]),
            ext,
            Standardizer.from_dict(d["standardizer"]),
            model_from_dict(d["classifier"], ext.feature_names),
            None if d["ica"] is None else IcaCleaning.from_dict(d["ica"]),
            dict(d["metadata"]),
        )


@dataclass(frozen=True)
class GateBundle:
    extractor: Extractor
    standardizer: Standardizer
    model: Classifier
    subject_ids: tuple[int, int]  # subject for gate label 0 and 1
    section_size: int = 5
    metadata: dict[str, Any] = field(default_factory=dict)

    def predict_array(self, data: np.ndarray, channel_names: Sequence[str], fs: float) -> np.ndarray:
        X = self.extractor.transform_array(data, channel_names, fs)
        return self.model.predict(self.standardizer.transform(X))

    def to_dict(self) -> dict:
        return {
            "extractor": self.extractor.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "classifier": model_to_dict(self.model, self.extractor.feature_names),
            "subject_ids": list(self.subject_ids),
            "section_size": self.section_size,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GateBundle":
        ext = extractor_from_dict(d["extractor"])
        return cls(
            ext,
            Standardizer.from_dict(d["standardizer"]),
            model_from_dict(d["classifier"], ext.feature_names),
            (int(d["subject_ids"][0]), int(d["subject_ids"][1])),
            int(d["section_size"]),
            dict(d["metadata"]),
        )


@dataclass(frozen=True)
class DispatchPipeline:
    gate: GateBundle
    mi: dict[int, MiBundle]
    channel_names: tuple[str, ...]
    fs: float

    def __post_init__(self) -> None:
        missing = [s for s in self.gate.subject_ids if s not in self.mi]
        if missing:
            raise UnknownSubjectLabel(f"gate routes to subjects {missing} without an MI bundle")

    def to_dict(self) -> dict:
        return {
            "gate": self.gate.to_dict(),
            "mi": {str(k): v.to_dict() for k, v in sorted(self.mi.items())},
            "channel_names": list(self.channel_names),
            "fs": self.fs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DispatchPipeline":
        return cls(
            GateBundle.from_dict(d["gate"]),
            {int(k): MiBundle.from_dict(v) for k, v in d["mi"].items()},
            tuple(d["channel_names"]),
            float(d["fs"]),
        )


def extractor_signature(ext: Extractor) -> dict:
    """Configuration part of an extractor, without fitted state."""
    d = ext.to_dict()
    if d["kind"] == "csp":
        return {"kind": "csp", "m": d["m"]}
    return d


def check_compatible(p: DispatchPipeline, cfg: RunConfig) -> None:
    """Raise :class:`FeatureMismatch` if ``p`` was trained with another feature setup than ``cfg``."""
    want = extractor_signature(cfg.make_extractor())
    bundles: list[tuple[str, Extractor]] = [("gate", p.gate.extractor)]
    bundles += [(f"mi[{k}]", b.extractor) for k, b in p.mi.items()]
    for name, ext in bundles:
        have = extractor_signature(ext)
        if have != want:
            raise FeatureMismatch(f"{name} model was trained with features {have}, config specifies {want}")


# --------------------------------------------------------------------------- training


def _fit_features(train: TrialSet, cfg: RunConfig) -> tuple[Extractor, Standardizer, np.ndarray]:
    extractor = cfg.make_extractor().fit(train)
    X = extractor.transform(train).X
    std = fit_standardizer(X)
    return extractor, std, std.transform(X)


def train_mi(
    trials: TrialSet,
    cfg: RunConfig,
    kind: str | None = None,
    use_ica: bool | None = None,
) -> tuple[MiBundle, EvaluationReport]:
    """Train one subject's left/right classifier on its training partition.

    ``kind`` and ``use_ica`` default to the subject's entry in ``cfg``.
    """
    if trials.label_semantics != LabelSemantics.MI:
        raise ValidationError("train_mi expects MI-labelled trials")
    if len(set(trials.labels.tolist())) < 2:
        raise ValidationError("both MI classes must be present")
    sid = trials[0].subject_id
    sub = cfg.subject(sid)
    kind = kind or sub.mi_classifier
    use_ica = sub.ica if use_ica is None else use_ica

    train_idx, test_idx = subject_split(trials, cfg)
    train, test = trials.subset(train_idx), trials.subset(test_idx)
    cleaning = None
    if use_ica:
        cleaning = fit_ica_cleaning(train, cfg)
        train, test = cleaning.apply(train), cleaning.apply(test)

    extractor, std, Xtr = _fit_features(train, cfg)
    model = fit_classifier(kind, Xtr, train.labels, cfg.classifiers.params_for(kind), seed=cfg.seed)
    bundle = MiBundle(
        sid,
        extractor,
        std,
        model,
        cleaning,
        {"seed": cfg.seed, "train_fraction": cfg.train_fraction, "n_train": len(train), "n_test": len(test)},
    )

    Xte = std.transform(extractor.transform(test).X)
    report = EvaluationReport(
        task=f"mi_subject{sid}",
        classifier=kind,
        seed=cfg.seed,
        config_fingerprint=cfg.fingerprint(),
        confusion={
            "train": confusion_matrix(train.labels, model.predict(Xtr)),
            "test": confusion_matrix(test.labels, model.predict(Xte)),
        },
        counts={"train": len(train), "test": len(test)},
        extra={"ica_drop": list(cleaning.drop) if cleaning else None, "ica_scores": list(cleaning.scores) if cleaning else None},
    )
    return bundle, report


def section_mode(predictions: Sequence[int]) -> int:
    """Most frequent label of a section; a tie goes to label 0."""
    preds = np.asarray(predictions, dtype=int)
    if preds.size == 0:
        raise EmptySection("a section needs at least one prediction")
    return int(2 * preds.sum() > preds.size)


def sectioned_predict(gate: GateBundle, section: np.ndarray) -> int:
    """Subject label for a section of (unstandardized) gate feature vectors."""
    X = np.atleast_2d(np.asarray(section, dtype=float))
    if X.shape[0] == 0 or np.asarray(section).size == 0:
        raise EmptySection("cannot classify an empty section")
    if X.shape[0] > gate.section_size:
        raise ValidationError(f"section of {X.shape[0]} exceeds section size {gate.section_size}")
    return section_mode(gate.model.predict(gate.standardizer.transform(X)))


def _chunks(n: int, size: int) -> list[range]:
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def train_gate(
    trials1: TrialSet,
    trials2: TrialSet,
    cfg: RunConfig,
    kind: str | None = None,
) -> tuple[GateBundle, EvaluationReport]:
    """Train the subject-identity classifier on both subjects' training partitions.

    Each subject is split with :func:`subject_split`, so the held-out trials
    are disjoint from every MI and gate training set.
    """
    kind = kind or cfg.classifiers.gate
    sids = (trials1[0].subject_id, trials2[0].subject_id)
    trains, tests = [], []
    for label, ts in enumerate((trials1, trials2)):
        tr, te = subject_split(ts, cfg)
        relabeled = ts.relabel(label, LabelSemantics.SUBJECT)
        trains.append(relabeled.subset(tr))
        tests.append(relabeled.subset(te))
    train = TrialSet.concat(trains)

    extractor, std, Xtr = _fit_features(train, cfg)
    model = fit_classifier(kind, Xtr, train.labels, cfg.classifiers.params_for(kind), seed=cfg.seed)
    gate = GateBundle(
        extractor,
        std,
        model,
        sids,
        cfg.section_size,
        {"seed": cfg.seed, "train_fraction": cfg.train_fraction, "n_train": len(train)},
    )

    y_true, y_pred, sec_true, sec_pred, sections = [], [], [], [], []
    for label, te in enumerate(tests):
        preds = model.predict(std.transform(extractor.transform(te).X))
        y_true += [label] * len(te)
        y_pred += preds.tolist()
        for rng in _chunks(len(te), cfg.section_size):
            decision = section_mode(preds[rng.start : rng.stop])
            sec_true.append(label)
            sec_pred.append(decision)
            sections.append(
                {"true": label, "start": rng.start, "size": len(rng), "predictions": preds[rng.start : rng.stop].tolist(), "decision": decision}
            )

    report = EvaluationReport(
        task="cross_subject",
        classifier=kind,
        seed=cfg.seed,
        config_fingerprint=cfg.fingerprint(),
        confusion={
            "train": confusion_matrix(train.labels, model.predict(Xtr)),
            "test_trial": confusion_matrix(y_true, y_pred),
            "test_sectioned": confusion_matrix(sec_true, sec_pred),
        },
        counts={"train": len(train), "test": len(y_true), "sections": len(sections)},
        sections=sections,
        extra={"subject_ids": list(sids)},
    )
    return gate, report


# --------------------------------------------------------------------------- dispatch


def _run_array(p: DispatchPipeline, run: TrialSet | Sequence[Trial]) -> np.ndarray:
    if isinstance(run, TrialSet):
        if tuple(run.channel_names) != p.channel_names:
            raise FeatureMismatch(f"run channels {run.channel_names} differ from pipeline {list(p.channel_names)}")
        return run.data
    if len(run) == 0:
        raise EmptySection("a run needs at least one trial")
    data = np.stack([t.data for t in run])
    if data.shape[2] != len(p.channel_names):
        raise FeatureMismatch(f"trials have {data.shape[2]} channels, pipeline expects {len(p.channel_names)}")
    return data


def dispatch_predict(p: DispatchPipeline, run: TrialSet | Sequence[Trial]) -> tuple[int, list[int]]:
    """Route a run through the gate's mode, then label each trial with that subject's MI bundle."""
    data = _run_array(p, run)
    names = list(p.channel_names)
    gate_X = p.gate.extractor.transform_array(data, names, p.fs)
    label = sectioned_predict(p.gate, gate_X)
    sid = p.gate.subject_ids[label]
    if sid not in p.mi:
        raise UnknownSubjectLabel(f"gate emitted label {label} (subject {sid}) with no MI bundle")
    return label, p.mi[sid].predict_array(data, names, p.fs).tolist()


def evaluate_dispatch(
    p: DispatchPipeline,
    test1: TrialSet,
    test2: TrialSet,
    seed: int = 0,
    config_fingerprint: str = "",
) -> EvaluationReport:
    """Dispatch runs of ``section_size`` held-out trials from each subject.

    ``test1``/``test2`` belong to the subjects behind gate labels 0 and 1.
    Run membership is a seeded shuffle of each subject's trials. Reports gate
    routing accuracy per run, end-to-end MI accuracy per trial, and the MI
    accuracy obtained when every run is routed to its true subject.
    """
    rng = np.random.default_rng(seed)
    size = p.gate.section_size
    route_true, route_pred, mi_true, mi_e2e, mi_oracle, runs = [], [], [], [], [], []
    for label, ts in enumerate((test1, test2)):
        order = rng.permutation(len(ts))
        oracle_bundle = p.mi[p.gate.subject_ids[label]]
        for chunk in _chunks(len(ts), size):
            run = ts.subset(order[chunk.start : chunk.stop])
            decision, labels = dispatch_predict(p, run)
            oracle = oracle_bundle.predict(run).tolist()
            route_true.append(label)
            route_pred.append(decision)
            mi_true += run.labels.tolist()
            mi_e2e += labels
            mi_oracle += oracle
            runs.append({"true": label, "trials": order[chunk.start : chunk.stop].tolist(), "decision": decision})

    return EvaluationReport(
        task="dispatch",
        classifier=p.gate.model.kind,
        seed=seed,
        config_fingerprint=config_fingerprint,
        confusion={
            "gate_routing": confusion_matrix(route_true, route_pred),
            "end_to_end_mi": confusion_matrix(mi_true, mi_e2e),
            "oracle_gate_mi": confusion_matrix(mi_true, mi_oracle),
        },
        counts={"runs": len(runs), "trials": len(mi_true)},
        sections=runs,
        extra={"subject_ids": list(p.gate.subject_ids)},
    )


def held_out(ts: TrialSet, cfg: RunConfig) -> TrialSet:
    return ts.subset(subject_split(ts, cfg)[1])
