"""FastICA and EOG-correlation based artifact removal."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import IndexOutOfRange, LengthMismatch, NoConvergence, SingularCovariance, ValidationError

# eigenvalues below this fraction of the largest count as rank deficient
_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class IcaModel:
    """Fitted decomposition ``sources = (x - means) @ whitening.T @ unmixing.T``.

    ``mixing`` maps sources back to channels: ``x ~= sources @ mixing.T + means``.
    """

    whitening: np.ndarray  # [k, n_ch]
    unmixing: np.ndarray  # [k, k], orthogonal
    mixing: np.ndarray  # [n_ch, k]
    means: np.ndarray  # [n_ch]
    n_iter: int
    converged: bool

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    def sources(self, eeg: np.ndarray) -> np.ndarray:
        eeg = np.asarray(eeg, dtype=float)
        if eeg.ndim != 2 or eeg.shape[1] != self.means.shape[0]:
            raise LengthMismatch(f"expected [n, {self.means.shape[0]}] data, got {eeg.shape}")
        return (eeg - self.means) @ (self.unmixing @ self.whitening).T

    def to_dict(self) -> dict:
        return {
            "whitening": self.whitening.tolist(),
            "unmixing": self.unmixing.tolist(),
            "mixing": self.mixing.tolist(),
            "means": self.means.tolist(),
            "n_iter": self.n_iter,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IcaModel":
        return cls(
            np.array(d["whitening"]),
            np.array(d["unmixing"]),
            np.array(d["mixing"]),
            np.array(d["means"]),
            int(d["n_iter"]),
            bool(d["converged"]),
        )


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^{-1/2} W
    s, u = np.linalg.eigh(w @ w.T)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def fast_ica(
    eeg: np.ndarray,
    k: int | None = None,
    seed: int = 0,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> IcaModel:
    """Symmetric FastICA with the ``tanh`` contrast.

    ``eeg`` is ``[n_samples, n_channels]``. Components are returned ordered
    by the variance of their back-projection onto the channels, largest
    first, with the sign fixed so that each mixing column's largest entry
    is positive.
    """
    x = np.asarray(eeg, dtype=float)
    if x.ndim != 2:
        raise ValidationError("eeg must be [n_samples, n_channels]")
    n, n_ch = x.shape
    k = n_ch if k is None else int(k)
    if not 1 <= k <= n_ch <= n:
        raise ValidationError(f"need 1 <= k <= n_channels <= n_samples, got k={k}, shape={x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("eeg contains non-finite values")

    means = x.mean(axis=0)
    xc = x - means
    cov = xc.T @ xc / (n - 1)
    d, e = np.linalg.eigh(cov)
    d, e = d[::-1], e[:, ::-1]
    if d[0] <= 0 or d[k - 1] <= _RANK_RTOL * d[0]:
        raise SingularCovariance(f"covariance rank below k={k} (eigenvalues {d})")
    whitening = (e[:, :k] / np.sqrt(d[:k])).T
    z = xc @ whitening.T

    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = np.tanh(z @ w.T)
        g_prime = 1.0 - g**2
        w_new = _sym_decorrelate(g.T @ z / n - g_prime.mean(axis=0)[:, None] * w)
        lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if lim < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations", NoConvergence, stacklevel=2)

    mixing = np.linalg.pinv(w @ whitening)
    order = np.argsort(-np.sum(mixing**2, axis=0), kind="stable")
    w, mixing = w[order], mixing[:, order]
    signs = np.sign(mixing[np.argmax(np.abs(mixing), axis=0), np.arange(k)])
    signs[signs == 0] = 1.0
    w, mixing = w * signs[:, None], mixing * signs

    return IcaModel(whitening, w, mixing, means, it, converged)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation, defined as 0 when either series has zero variance."""
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0 or not np.isfinite(den):
        return 0.0
    return float(np.clip(np.dot(a, b) / den, -1.0, 1.0))


@dataclass(frozen=True)
class EogScores:
    scores: np.ndarray  # per component, max over EOG channels of |r|
    best_channel: tuple[str, ...]

    def ranked(self) -> list[int]:
        return [int(i) for i in np.argsort(-self.scores, kind="stable")]


def score_eog_correlation(
    model: IcaModel,
    eeg: np.ndarray,
    eog: np.ndarray,
    eog_names: Sequence[str] | None = None,
) -> EogScores:
    eog = np.asarray(eog, dtype=float)
    if eog.ndim == 1:
        eog = eog[:, None]
    if np.shape(eeg)[0] != eog.shape[0]:
        raise LengthMismatch(f"eeg has {np.shape(eeg)[0]} samples, eog has {eog.shape[0]}")
    names = list(eog_names) if eog_names is not None else [f"eog{j}" for j in range(eog.shape[1])]
    src = model.sources(eeg)
    r = np.array([[abs(pearson(src[:, i], eog[:, j])) for j in range(eog.shape[1])] for i in range(src.shape[1])])
    best = np.argmax(r, axis=1)
    return EogScores(r.max(axis=1), tuple(names[j] for j in best))


def select_artifact_components(scores: EogScores, threshold: float = 0.3, max_drop: int = 1) -> tuple[int, ...]:
    """Highest-scoring components at or above ``threshold``, at most ``max_drop`` of them."""
    picked = [i for i in scores.ranked() if scores.scores[i] >= threshold]
    return tuple(sorted(picked[:max_drop]))


def remove_components(model: IcaModel, eeg: np.ndarray, drop: Iterable[int]) -> np.ndarray:
    """Rebuild ``eeg`` from its sources with the ``drop`` components zeroed."""
    drop = sorted(set(int(i) for i in drop))
    k = model.n_components
    for i in drop:
        if not 0 <= i < k:
            raise IndexOutOfRange(f"component {i} not in 0..{k - 1}")
    src = model.sources(eeg)
    src[:, drop] = 0.0
    return src @ model.mixing.T + model.means
