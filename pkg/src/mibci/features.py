"""Feature extraction: log sub-band power, CSP, standardization and PCA."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .dataset import ChannelKind, Trial, TrialSet
from .dsp import BandSpec, band_power, welch_psd
from .errors import (
    MissingChannel,
    RankTooLow,
    SegmentTooLong,
    ShapeMismatch,
    SignalTooShort,
    SingleClass,
    SingularCovariance,
    TooFewRows,
    ValidationError,
)

LOG_FLOOR = 1e-12
STD_FLOOR = 1e-9

ALPHA_SUBBANDS = ((8.0, 9.5), (9.5, 11.0), (11.0, 12.5), (12.5, 14.0))
BETA_SUBBANDS = ((14.0, 18.0), (18.0, 22.0), (22.0, 26.0), (26.0, 30.0))


@dataclass(frozen=True)
class SubbandLayout:
    bands: tuple[BandSpec, ...]
    band_names: tuple[str, ...]
    channels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "band_names", tuple(self.band_names))
        object.__setattr__(self, "channels", tuple(self.channels))
        if len(self.bands) != len(self.band_names):
            raise ValidationError("one name per band is required")
        if not self.bands or not self.channels:
            raise ValidationError("layout needs at least one band and one channel")
        for b in self.bands:
            b.validate()

    @classmethod
    def default(cls, channels: Sequence[str] = ("C3", "C4")) -> "SubbandLayout":
        bands = [BandSpec(*b) for b in (*ALPHA_SUBBANDS, *BETA_SUBBANDS)]
        names = [f"alpha{i}" for i in range(1, 5)] + [f"beta{i}" for i in range(1, 5)]
        return cls(tuple(bands), tuple(names), tuple(channels))

    @property
    def dimension(self) -> int:
        return len(self.bands) * len(self.channels)

    @property
    def feature_names(self) -> list[str]:
        return [f"{ch}.{b}" for ch in self.channels for b in self.band_names]

    def to_dict(self) -> dict:
        return {
            "bands": [[b.low_hz, b.high_hz] for b in self.bands],
            "band_names": list(self.band_names),
            "channels": list(self.channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubbandLayout":
        return cls(tuple(BandSpec(*b) for b in d["bands"]), tuple(d["band_names"]), tuple(d["channels"]))


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ShapeMismatch(f"X shape {X.shape} vs {len(self.feature_names)} feature names")
        if len(self.y) != X.shape[0]:
            raise ShapeMismatch("one label per row is required")
        if not np.isfinite(X).all():
            raise ValidationError("feature matrix contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=int))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))


def _select(channel_names: Sequence[str], wanted: Sequence[str]) -> list[int]:
    names = list(channel_names)
    missing = [w for w in wanted if w not in names]
    if missing:
        raise MissingChannel(f"channels {missing} not present (have {names})")
    return [names.index(w) for w in wanted]


def _log_subband(data: np.ndarray, layout: SubbandLayout, fs: float, segment_s: float, overlap: float) -> np.ndarray:
    # data: [t, ...]; result: [..., n_channels * n_bands] flattened channel-major
    try:
        psd = welch_psd(data, fs, segment_s, overlap)
    except SegmentTooLong as exc:
        raise SignalTooShort(str(exc)) from None
    powers = np.stack([band_power(psd, b) for b in layout.bands], axis=-1)
    logp = np.log(np.maximum(powers, LOG_FLOOR))
    return logp.reshape(logp.shape[:-2] + (-1,))


def log_subband_power(
    trial: Trial | np.ndarray,
    layout: SubbandLayout,
    fs: float,
    channel_names: Sequence[str],
    segment_s: float = 1.0,
    overlap: float = 0.5,
) -> np.ndarray:
    """``ln(max(P, 1e-12))`` for every (channel, sub-band) pair, channels-major."""
    data = trial.data if isinstance(trial, Trial) else np.asarray(trial, dtype=float)
    cols = _select(channel_names, layout.channels)
    return _log_subband(data[:, cols], layout, fs, segment_s, overlap)


@dataclass
class LogSubbandExtractor:
    """Stateless extractor; ``fit`` is a no-op kept for interface symmetry with CSP."""

    layout: SubbandLayout = field(default_factory=SubbandLayout.default)
    segment_s: float = 1.0
    overlap: float = 0.5

    kind = "log_subband"

    def fit(self, ts: TrialSet) -> "LogSubbandExtractor":
        _select(ts.channel_names, self.layout.channels)
        return self

    @property
    def feature_names(self) -> list[str]:
        return self.layout.feature_names

    def transform_array(self, data: np.ndarray, channel_names: Sequence[str], fs: float) -> np.ndarray:
        """``data`` is ``[n_trials, t, n_channels]``."""
        cols = _select(channel_names, self.layout.channels)
        stacked = np.moveaxis(np.asarray(data, dtype=float)[:, :, cols], 1, 0)
        return _log_subband(stacked, self.layout, fs, self.segment_s, self.overlap)

    def transform(self, ts: TrialSet) -> FeatureMatrix:
        X = self.transform_array(ts.data, ts.channel_names, ts.fs)
        return FeatureMatrix(X, ts.labels, tuple(self.feature_names))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "layout": self.layout.to_dict(), "segment_s": self.segment_s, "overlap": self.overlap}

    @classmethod
    def from_dict(cls, d: dict) -> "LogSubbandExtractor":
        return cls(SubbandLayout.from_dict(d["layout"]), d["segment_s"], d["overlap"])


# --------------------------------------------------------------------------- CSP


@dataclass(frozen=True)
class CspModel:
    filters: np.ndarray  # [m, n_ch]
    eigvals: np.ndarray  # [m]
    channels: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"filters": self.filters.tolist(), "eigvals": self.eigvals.tolist(), "channels": list(self.channels)}

    @classmethod
    def from_dict(cls, d: dict) -> "CspModel":
        return cls(np.array(d["filters"]), np.array(d["eigvals"]), tuple(d["channels"]))


def _class_covariance(data: np.ndarray) -> np.ndarray:
    # mean of trace-normalised per-trial covariances; data is [n, t, ch]
    xc = data - data.mean(axis=1, keepdims=True)
    covs = np.einsum("ntc,ntd->ncd", xc, xc)
    covs /= np.trace(covs, axis1=1, axis2=2)[:, None, None]
    return covs.mean(axis=0)


def fit_csp(trials: TrialSet, m: int = 2, channels: Sequence[str] | None = None) -> CspModel:
    """Solve ``S0 w = lambda (S0 + S1) w`` and keep the ``m`` most extreme filters.

    Filters are ordered largest, smallest, second largest, second smallest, ...
    Defaults to all EEG channels of ``trials``.
    """
    if channels is None:
        channels = [trials.channel_names[i] for i in trials.indices_of(ChannelKind.EEG)]
    cols = _select(trials.channel_names, channels)
    n_ch = len(cols)
    if m < 2 or m % 2 or m > 2 * n_ch or m > n_ch:
        raise ValidationError(f"m must be even with 2 <= m <= n_channels ({n_ch}), got {m}")
    y = trials.labels
    if len(set(y.tolist())) < 2:
        raise SingleClass("CSP needs trials from both classes")
    data = trials.data[:, :, cols]
    s0 = _class_covariance(data[y == 0])
    s1 = _class_covariance(data[y == 1])
    composite = s0 + s1
    if np.linalg.eigvalsh(composite)[0] <= 1e-12 * np.trace(composite):
        raise SingularCovariance("composite class covariance is singular")
    vals, vecs = scipy.linalg.eigh(s0, composite)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    picks = [i for j in range(m // 2) for i in (j, n_ch - 1 - j)]
    return CspModel(vecs[:, picks].T.copy(), vals[picks].copy(), tuple(channels))


def apply_csp(model: CspModel, trial: Trial | np.ndarray) -> np.ndarray:
    """Log variance of each spatially filtered signal."""
    data = trial.data if isinstance(trial, Trial) else np.asarray(trial, dtype=float)
    if data.ndim != 2 or data.shape[1] != model.filters.shape[1]:
        raise ShapeMismatch(f"trial has shape {data.shape}, filters expect {model.filters.shape[1]} channels")
    proj = data @ model.filters.T
    return np.log(np.maximum(proj.var(axis=0), LOG_FLOOR))


@dataclass
class CspExtractor:
    m: int = 2
    channels: tuple[str, ...] | None = None
    model: CspModel | None = None

    kind = "csp"

    def fit(self, ts: TrialSet) -> "CspExtractor":
        self.model = fit_csp(ts, self.m, self.channels)
        self.channels = self.model.channels
        return self

    @property
    def feature_names(self) -> list[str]:
        return [f"csp{i}" for i in range(self.m)]

    def transform_array(self, data: np.ndarray, channel_names: Sequence[str], fs: float) -> np.ndarray:
        if self.model is None:
            raise ValidationError("CspExtractor.transform called before fit")
        cols = _select(channel_names, self.model.channels)
        proj = np.einsum("ntc,mc->ntm", np.asarray(data, dtype=float)[:, :, cols], self.model.filters)
        return np.log(np.maximum(proj.var(axis=1), LOG_FLOOR))

    def transform(self, ts: TrialSet) -> FeatureMatrix:
        return FeatureMatrix(self.transform_array(ts.data, ts.channel_names, ts.fs), ts.labels, tuple(self.feature_names))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m, "model": None if self.model is None else self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CspExtractor":
        model = None if d["model"] is None else CspModel.from_dict(d["model"])
        return cls(d["m"], None if model is None else model.channels, model)


def extractor_from_dict(d: dict) -> LogSubbandExtractor | CspExtractor:
    kinds = {"log_subband": LogSubbandExtractor, "csp": CspExtractor}
    if d.get("kind") not in kinds:
        raise ValidationError(f"unknown extractor kind {d.get('kind')!r}")
    return kinds[d["kind"]].from_dict(d)


# --------------------------------------------------------------------------- scaling / PCA


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ShapeMismatch(f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def fit_standardizer(X: np.ndarray) -> Standardizer:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows to fit a standardizer, got shape {X.shape}")
    return Standardizer(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))


def apply_standardizer(s: Standardizer, X: np.ndarray) -> np.ndarray:
    return s.transform(X)


@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray  # [k, d], orthonormal rows
    mean: np.ndarray
    explained_variance: np.ndarray


def fit_pca(X: np.ndarray, k: int) -> PcaModel:
    """Top-``k`` principal axes from the SVD of the centred data.

    Each component's sign is chosen so that its largest-magnitude loading is
    positive. Requesting more components than the data rank is allowed but
    emits :class:`RankTooLow`.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ValidationError(f"k={k} outside 1..min(n, d)={min(n, d)}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(n, d) * np.finfo(float).eps)) if s[0] > 0 else 0
    if k > rank or k > n - 1:
        warnings.warn(f"k={k} exceeds the available rank {min(rank, n - 1)}", RankTooLow, stacklevel=2)
    comps = vt[:k]
    signs = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    var = s[:k] ** 2 / max(n - 1, 1)
    return PcaModel(comps * signs[:, None], mean, var)


def project(model: PcaModel, X: np.ndarray) -> np.ndarray:
    return (np.asarray(X, dtype=float) - model.mean) @ model.components.T


def reconstruct(model: PcaModel, Z: np.ndarray) -> np.ndarray:
    return np.asarray(Z, dtype=float) @ model.components + model.mean
