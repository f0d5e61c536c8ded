"""Recordings, trials, the on-disk recording format and synthetic EEG.

A recording on disk is a pair of files::

    <name>.json   header (format_version, fs, channels, n_samples, events, data_file)
    <name>.f32    little-endian float32 samples, row-major [sample][channel]
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateSplit,
    InvalidLabel,
    InvalidSpec,
    MalformedHeader,
    MissingChannel,
    NonFiniteSample,
    SampleSizeMismatch,
    ValidationError,
    WindowOutOfRange,
)

FORMAT_VERSION = 1
DEFAULT_WINDOW_S = (0.5, 3.5)


class ChannelKind(str, enum.Enum):
    EEG = "EEG"
    EOG = "EOG"


class LabelSemantics(str, enum.Enum):
    MI = "MI"  # 0 = left hand, 1 = right hand
    SUBJECT = "SUBJECT"  # 0 = first subject, 1 = second subject


@dataclass(frozen=True)
class ChannelInfo:
    name: str
    kind: ChannelKind
    index: int


class Event(NamedTuple):
    onset: int
    label: int


def _frozen_array(a: Any, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def make_channels(eeg: Sequence[str], eog: Sequence[str] = ()) -> tuple[ChannelInfo, ...]:
    """EEG channels first, then EOG, indexed in that order."""
    names = [*eeg, *eog]
    kinds = [ChannelKind.EEG] * len(eeg) + [ChannelKind.EOG] * len(eog)
    return tuple(ChannelInfo(n, k, i) for i, (n, k) in enumerate(zip(names, kinds)))


def _check_channels(channels: Sequence[ChannelInfo], n_columns: int) -> None:
    names = [c.name for c in channels]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate channel names: {names}")
    if [c.index for c in channels] != list(range(len(channels))):
        raise ValidationError("channel indices must be 0..n_channels-1 in order")
    if len(channels) != n_columns:
        raise ValidationError(f"{len(channels)} channels declared but data has {n_columns} columns")


def _index_of(channels: Sequence[ChannelInfo], name: str) -> int:
    for c in channels:
        if c.name == name:
            return c.index
    raise MissingChannel(f"channel {name!r} not present (have {[c.name for c in channels]})")


@dataclass(frozen=True)
class Recording:
    """Continuous multichannel signal with cue events.

    ``samples`` is ``[n_samples, n_channels]`` in microvolts.
    """

    fs: float
    channels: tuple[ChannelInfo, ...]
    samples: np.ndarray
    events: tuple[Event, ...]
    name: str = ""

    def __post_init__(self) -> None:
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ValidationError(f"fs must be positive, got {self.fs}")
        samples = _frozen_array(self.samples)
        if samples.ndim != 2:
            raise ValidationError("samples must be a 2-D [n_samples, n_channels] array")
        if not np.isfinite(samples).all():
            bad = np.argwhere(~np.isfinite(samples))[0]
            raise NonFiniteSample(f"non-finite sample at (sample={bad[0]}, channel={bad[1]})")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channels", tuple(self.channels))
        _check_channels(self.channels, samples.shape[1])
        events = tuple(Event(int(e[0]), int(e[1])) for e in self.events)
        for ev in events:
            if not 0 <= ev.onset < samples.shape[0]:
                raise ValidationError(f"event onset {ev.onset} outside [0, {samples.shape[0]})")
        object.__setattr__(self, "events", events)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel_index(self, name: str) -> int:
        return _index_of(self.channels, name)

    def indices_of(self, kind: ChannelKind) -> list[int]:
        return [c.index for c in self.channels if c.kind == kind]

    def with_samples(self, samples: np.ndarray) -> "Recording":
        return Recording(self.fs, self.channels, samples, self.events, self.name)


def save_recording(rec: Recording, header_path: str | Path) -> Path:
    """Write ``rec`` as a JSON header plus a sibling ``.f32`` sample file."""
    header_path = Path(header_path)
    data_path = header_path.with_suffix(".f32")
    header = {
        "format_version": FORMAT_VERSION,
        "fs": rec.fs,
        "channels": [{"name": c.name, "kind": c.kind.value} for c in rec.channels],
        "n_samples": rec.n_samples,
        "events": [{"onset": e.onset, "label": e.label} for e in rec.events],
        "data_file": data_path.name,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    rec.samples.astype("<f4").tofile(data_path)
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    return header_path


def _require(header: dict, key: str, types: type | tuple[type, ...]) -> Any:
    if key not in header:
        raise MalformedHeader(f"header missing field {key!r}")
    value = header[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise MalformedHeader(f"header field {key!r} has invalid type {type(value).__name__}")
    return value


def load_recording(header_path: str | Path) -> Recording:
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"{header_path}: not valid JSON ({exc})") from None
    if not isinstance(header, dict):
        raise MalformedHeader(f"{header_path}: header must be a JSON object")

    if _require(header, "format_version", int) != FORMAT_VERSION:
        raise MalformedHeader(f"unsupported format_version {header['format_version']}")
    fs = float(_require(header, "fs", (int, float)))
    n_samples = _require(header, "n_samples", int)
    data_file = _require(header, "data_file", str)
    raw_channels = _require(header, "channels", list)
    raw_events = _require(header, "events", list)
    if fs <= 0 or n_samples < 0:
        raise MalformedHeader("fs must be positive and n_samples nonnegative")

    try:
        channels = tuple(
            ChannelInfo(str(c["name"]), ChannelKind(c["kind"]), i) for i, c in enumerate(raw_channels)
        )
        events = tuple(Event(int(e["onset"]), int(e["label"])) for e in raw_events)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeader(f"bad channel or event entry: {exc}") from None

    data_path = header_path.parent / data_file
    expected = n_samples * len(channels) * 4
    actual = data_path.stat().st_size
    if actual != expected:
        raise SampleSizeMismatch(
            f"{data_path.name}: {actual} bytes, header implies {expected} "
            f"({n_samples} samples x {len(channels)} channels x 4)"
        )
    samples = np.fromfile(data_path, dtype="<f4").reshape(n_samples, len(channels))
    try:
        return Recording(fs, channels, samples.astype(np.float64), events, name=header_path.stem)
    except NonFiniteSample:
        raise
    except ValidationError as exc:
        raise MalformedHeader(str(exc)) from None


# --------------------------------------------------------------------------- trials


@dataclass(frozen=True)
class Trial:
    data: np.ndarray  # [n_window_samples, n_channels]
    label: int
    subject_id: int
    source_session: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _frozen_array(self.data))


@dataclass(frozen=True)
class TrialSet:
    """Equal-length trials sharing one channel layout and sampling rate."""

    trials: tuple[Trial, ...]
    label_semantics: LabelSemantics
    channels: tuple[ChannelInfo, ...]
    fs: float

    def __post_init__(self) -> None:
        trials = tuple(self.trials)
        if not trials:
            raise ValidationError("a TrialSet must contain at least one trial")
        shape = trials[0].data.shape
        for t in trials:
            if t.data.shape != shape:
                raise ValidationError(f"trial shapes differ: {t.data.shape} vs {shape}")
            if t.label not in (0, 1):
                raise InvalidLabel(f"trial label {t.label} not in {{0, 1}}")
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "channels", tuple(self.channels))
        _check_channels(self.channels, shape[1])

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self) -> Iterator[Trial]:
        return iter(self.trials)

    def __getitem__(self, i: int) -> Trial:
        return self.trials[i]

    @cached_property
    def data(self) -> np.ndarray:
        """All trials stacked as ``[n_trials, n_window_samples, n_channels]``."""
        stacked = np.stack([t.data for t in self.trials])
        stacked.setflags(write=False)
        return stacked

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=int)

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel_index(self, name: str) -> int:
        return _index_of(self.channels, name)

    def indices_of(self, kind: ChannelKind) -> list[int]:
        return [c.index for c in self.channels if c.kind == kind]

    def subset(self, indices: Sequence[int]) -> "TrialSet":
        return TrialSet(tuple(self.trials[i] for i in indices), self.label_semantics, self.channels, self.fs)

    def relabel(self, label: int, semantics: LabelSemantics) -> "TrialSet":
        """Give every trial the same ``label`` (used to build subject-identity sets)."""
        trials = tuple(Trial(t.data, label, t.subject_id, t.source_session) for t in self.trials)
        return TrialSet(trials, semantics, self.channels, self.fs)

    def with_data(self, data: np.ndarray) -> "TrialSet":
        """Same trials and labels with replaced ``[n, t, ch]`` data."""
        if data.shape != self.data.shape:
            raise ValidationError(f"data shape {data.shape} does not match {self.data.shape}")
        trials = tuple(
            Trial(d, t.label, t.subject_id, t.source_session) for d, t in zip(data, self.trials)
        )
        return TrialSet(trials, self.label_semantics, self.channels, self.fs)

    @classmethod
    def concat(cls, sets: Sequence["TrialSet"]) -> "TrialSet":
        first = sets[0]
        for s in sets[1:]:
            if s.channel_names != first.channel_names or s.fs != first.fs:
                raise ValidationError("cannot concatenate trial sets with different layouts")
            if s.label_semantics != first.label_semantics:
                raise ValidationError("cannot concatenate trial sets with different label semantics")
        trials = tuple(t for s in sets for t in s.trials)
        return cls(trials, first.label_semantics, first.channels, first.fs)


def epoch_trials(
    rec: Recording,
    window_start_s: float = DEFAULT_WINDOW_S[0],
    window_end_s: float = DEFAULT_WINDOW_S[1],
    subject_id: int = 1,
    semantics: LabelSemantics = LabelSemantics.MI,
) -> TrialSet:
    """Cut one trial per event from ``onset + start`` to ``onset + end`` (end exclusive)."""
    if not window_end_s > window_start_s:
        raise ValidationError(f"window end {window_end_s} must exceed start {window_start_s}")
    if not rec.events:
        raise ValidationError(f"recording {rec.name!r} has no events")
    start = int(round(window_start_s * rec.fs))
    stop = int(round(window_end_s * rec.fs))
    trials = []
    for ev in rec.events:
        a, b = ev.onset + start, ev.onset + stop
        if a < 0 or b > rec.n_samples:
            raise WindowOutOfRange(
                f"event at sample {ev.onset}: window [{a}, {b}) exceeds recording of {rec.n_samples} samples"
            )
        trials.append(Trial(rec.samples[a:b], ev.label, subject_id, rec.name))
    return TrialSet(tuple(trials), semantics, rec.channels, rec.fs)


def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into ``floor(train_fraction * n)`` and the rest."""
    if not 0 < train_fraction < 1:
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    # small slack so that e.g. 0.29 * 100 still yields 29
    n_train = math.floor(train_fraction * n + 1e-9)
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"{n} trials at fraction {train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:]


def train_test_split(ts: TrialSet, train_fraction: float = 0.8, seed: int = 0) -> tuple[TrialSet, TrialSet]:
    train_idx, test_idx = split_indices(len(ts), train_fraction, seed)
    return ts.subset(train_idx), ts.subset(test_idx)


# --------------------------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class ClassProfile:
    frequency_hz: float
    amplitude_uv: float
    channel: str


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic motor-imagery recording.

    Each class ``k`` in ``classes`` produces trials labelled ``k`` whose
    imagery period carries a sinusoidal burst on the class channel. Times
    for the burst are relative to the cue.
    """

    classes: tuple[ClassProfile, ...]
    fs: float = 250.0
    trials_per_class: int = 100
    noise_sigma_uv: float = 1.0
    eeg_channels: tuple[str, ...] = ("C3", "Cz", "C4")
    eog_channels: tuple[str, ...] = ("EOG1", "EOG2", "EOG3")
    trial_period_s: float = 7.0
    cue_offset_s: float = 2.0
    burst_start_s: float = 0.0
    burst_end_s: float = 4.0
    padding_s: float = 2.0
    blink_rate_hz: float = 0.0
    blink_amplitude_uv: float = 80.0
    blink_width_s: float = 0.3
    blink_eog_gain: tuple[float, ...] = (1.0, 0.8, 0.6)
    blink_eeg_gain: tuple[float, ...] = (0.3, 0.35, 0.3)
    name: str = "synth"

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "classes", tuple(c if isinstance(c, ClassProfile) else ClassProfile(**c) for c in self.classes)
        )
        for key in ("eeg_channels", "eog_channels", "blink_eog_gain", "blink_eeg_gain"):
            object.__setattr__(self, key, tuple(getattr(self, key)))
        self.validate()

    def validate(self) -> None:
        if not (self.fs > 0):
            raise InvalidSpec(f"fs must be positive, got {self.fs}")
        if not 1 <= len(self.classes) <= 2:
            raise InvalidSpec("one or two classes are supported")
        if self.trials_per_class <= 0:
            raise InvalidSpec(f"trials_per_class must be positive, got {self.trials_per_class}")
        if self.noise_sigma_uv < 0:
            raise InvalidSpec("noise_sigma_uv must be nonnegative")
        for c in self.classes:
            if not c.amplitude_uv > 0:
                raise InvalidSpec(f"class amplitude must be positive, got {c.amplitude_uv}")
            if not 0 < c.frequency_hz < self.fs / 2:
                raise InvalidSpec(f"class frequency {c.frequency_hz} Hz outside (0, fs/2)")
            if c.channel not in self.eeg_channels:
                raise InvalidSpec(f"class channel {c.channel!r} is not an EEG channel")
        if len(self.blink_eog_gain) != len(self.eog_channels):
            raise InvalidSpec("blink_eog_gain needs one entry per EOG channel")
        if len(self.blink_eeg_gain) != len(self.eeg_channels):
            raise InvalidSpec("blink_eeg_gain needs one entry per EEG channel")
        if self.blink_rate_hz < 0 or self.blink_width_s <= 0:
            raise InvalidSpec("blink_rate_hz must be >= 0 and blink_width_s > 0")
        if not (0 <= self.cue_offset_s + self.burst_start_s < self.cue_offset_s + self.burst_end_s <= self.trial_period_s):
            raise InvalidSpec("burst window must lie inside the trial period")
        if self.padding_s < 0:
            raise InvalidSpec("padding_s must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown synth spec keys: {sorted(unknown)}")
        if "classes" not in d:
            raise InvalidSpec("synth spec requires 'classes'")
        try:
            classes = tuple(ClassProfile(**c) for c in d["classes"])
            return cls(**{**d, "classes": classes})
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise InvalidSpec("synth spec must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "classes":
                v = [{"frequency_hz": c.frequency_hz, "amplitude_uv": c.amplitude_uv, "channel": c.channel} for c in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @property
    def n_trials(self) -> int:
        return self.trials_per_class * len(self.classes)

    @property
    def n_samples(self) -> int:
        return int(round((2 * self.padding_s + self.n_trials * self.trial_period_s) * self.fs))


def _streams(seed: int) -> list[np.random.Generator]:
    # independent streams so that e.g. the blink schedule does not depend on noise draws
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def synth_blink_onsets(spec: SynthSpec, seed: int) -> np.ndarray:
    """Blink onset samples that :func:`synthesize_recording` uses for ``(spec, seed)``."""
    rng = _streams(seed)[3]
    if spec.blink_rate_hz == 0:
        return np.zeros(0, dtype=int)
    duration = spec.n_samples / spec.fs
    count = rng.poisson(spec.blink_rate_hz * duration)
    width = int(round(spec.blink_width_s * spec.fs))
    onsets = np.sort(rng.integers(0, max(spec.n_samples - width, 1), size=count))
    return onsets


def _blink_waveform(width: int) -> np.ndarray:
    return np.sin(np.pi * np.arange(width) / width) ** 2


def synthesize_recording(spec: SynthSpec, seed: int = 0) -> Recording:
    order_rng, phase_rng, noise_rng, _ = _streams(seed)
    fs = spec.fs
    n = spec.n_samples
    n_eeg, n_eog = len(spec.eeg_channels), len(spec.eog_channels)

    samples = noise_rng.normal(0.0, spec.noise_sigma_uv, size=(n, n_eeg + n_eog))

    labels = order_rng.permutation(np.repeat(np.arange(len(spec.classes)), spec.trials_per_class))
    phases = phase_rng.uniform(0, 2 * np.pi, size=len(labels))
    pad = int(round(spec.padding_s * fs))
    period = int(round(spec.trial_period_s * fs))
    cue = int(round(spec.cue_offset_s * fs))
    b0 = int(round(spec.burst_start_s * fs))
    b1 = int(round(spec.burst_end_s * fs))
    t = np.arange(b1 - b0) / fs

    events = []
    for i, (label, phase) in enumerate(zip(labels, phases)):
        profile = spec.classes[label]
        onset = pad + i * period + cue
        col = spec.eeg_channels.index(profile.channel)
        samples[onset + b0 : onset + b1, col] += profile.amplitude_uv * np.sin(
            2 * np.pi * profile.frequency_hz * t + phase
        )
        events.append(Event(onset, int(label)))

    onsets = synth_blink_onsets(spec, seed)
    if len(onsets):
        width = int(round(spec.blink_width_s * fs))
        wave = spec.blink_amplitude_uv * _blink_waveform(width)
        gains = np.array([*spec.blink_eeg_gain, *spec.blink_eog_gain])
        for o in onsets:
            stop = min(o + width, n)
            samples[o:stop] += np.outer(wave[: stop - o], gains)

    channels = make_channels(spec.eeg_channels, spec.eog_channels)
    return Recording(fs, channels, samples, tuple(events), name=spec.name)
