"""Binary classifiers written directly on numpy.

Every model predicts labels in {0, 1}. Scores exactly on a decision
boundary resolve to class 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence, Union

import numpy as np
from scipy.special import expit, logsumexp

from .errors import FeatureMismatch, NonFiniteLoss, SingleClass, SingularCovariance, TooFewRows, ValidationError

CLASSIFIER_KINDS = ("logreg", "lda", "gnb", "knn", "svm", "ensemble")

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "logreg": {"lr": 0.1, "epochs": 1000, "l2": 1e-4},
    "lda": {"ridge": None},  # None -> 1e-6 * trace(cov) / d, or 1e-6 if the trace is 0
    "gnb": {"var_floor": 1e-9},
    "knn": {"k": 5},
    "svm": {"lam": 1e-2, "epochs": 2000, "batch_size": 32},
    "ensemble": {},
}


def _check_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValidationError(f"X must be [n, d] with one label per row, got {X.shape} and {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")
    return X, y.astype(int)


def _two_classes(y: np.ndarray) -> None:
    if len(np.unique(y)) < 2:
        raise SingleClass("both classes must be present in the training data")


def _rows(x: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


# --------------------------------------------------------------------------- logistic regression


@dataclass(frozen=True)
class LogisticRegressionModel:
    theta0: float
    theta: np.ndarray

    kind = "logreg"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.theta0 + _rows(X) @ self.theta

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """``[n, 2]`` class probabilities from the logistic of the linear score."""
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)

    def params(self) -> dict:
        return {"theta0": self.theta0, "theta": self.theta.tolist()}

    @classmethod
    def from_params(cls, p: dict) -> "LogisticRegressionModel":
        return cls(float(p["theta0"]), np.array(p["theta"], dtype=float))


def logreg_loss_grad(
    theta0: float, theta: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, float, np.ndarray]:
    """Mean cross-entropy plus ``l2 / 2 * |theta|^2`` and its gradient (bias unpenalised)."""
    a = theta0 + X @ theta
    # log(1 + e^a) - y a, stable for large |a|
    loss = np.mean(np.logaddexp(0.0, a) - y * a) + 0.5 * l2 * float(theta @ theta)
    r = expit(a) - y
    return float(loss), float(r.mean()), X.T @ r / len(y) + l2 * theta


def fit_logreg(
    X: np.ndarray,
    y: np.ndarray,
    lr: float = 0.1,
    epochs: int = 1000,
    l2: float = 1e-4,
    seed: int = 0,
    callback: Callable[[int, float], None] | None = None,
) -> LogisticRegressionModel:
    """Full-batch gradient descent from zero weights.

    ``seed`` is accepted for interface uniformity; the procedure has no
    randomness. ``callback(epoch, loss)`` sees the loss before each update.
    """
    X, y = _check_xy(X, y)
    theta0, theta = 0.0, np.zeros(X.shape[1])
    for epoch in range(epochs):
        loss, g0, g = logreg_loss_grad(theta0, theta, X, y, l2)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"logistic loss became non-finite at epoch {epoch}; lower lr={lr}")
        if callback is not None:
            callback(epoch, loss)
        theta0 -= lr * g0
        theta = theta - lr * g
    if not (np.isfinite(theta0) and np.isfinite(theta).all()):
        raise NonFiniteLoss("logistic regression parameters diverged")
    return LogisticRegressionModel(float(theta0), theta)


# --------------------------------------------------------------------------- LDA


@dataclass(frozen=True)
class LdaModel:
    means: np.ndarray  # [2, d]
    covariance: np.ndarray  # pooled, ridge included
    w: np.ndarray
    b: float

    kind = "lda"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return _rows(X) @ self.w - self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)

    def params(self) -> dict:
        return {"means": self.means.tolist(), "covariance": self.covariance.tolist(), "w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_params(cls, p: dict) -> "LdaModel":
        return cls(np.array(p["means"]), np.array(p["covariance"]), np.array(p["w"]), float(p["b"]))


def fit_lda(X: np.ndarray, y: np.ndarray, ridge: float | None = None) -> LdaModel:
    """Two-class Fisher LDA with a shared covariance.

    Predicts 1 iff ``w.x > b`` where ``w = S^-1 (mu1 - mu0)`` and ``b`` sits
    midway between the projected means, shifted by ``ln(p0 / p1)``.
    """
    X, y = _check_xy(X, y)
    _two_classes(y)
    n, d = X.shape
    counts = np.bincount(y, minlength=2)
    if counts.min() < 2:
        raise TooFewRows("LDA needs at least two samples per class")
    means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
    centered = X - means[y]
    cov = centered.T @ centered / (n - 2)
    if ridge is None:
        # zero within-class scatter (e.g. duplicated points) still needs a positive ridge
        ridge = 1e-6 * np.trace(cov) / d if np.trace(cov) > 0 else 1e-6
    cov = cov + ridge * np.eye(d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("pooled covariance is not positive definite; use ridge > 0") from None
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, means[1] - means[0]))
    priors = counts / n
    b = float(w @ (means[0] + means[1]) / 2 + np.log(priors[0] / priors[1]))
    return LdaModel(means, cov, w, b)


# --------------------------------------------------------------------------- Gaussian naive Bayes


@dataclass(frozen=True)
class GaussianNbModel:
    priors: np.ndarray  # [2]
    means: np.ndarray  # [2, d]
    variances: np.ndarray  # [2, d]

    kind = "gnb"

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        X = _rows(X)
        ll = -0.5 * np.sum(
            np.log(2 * np.pi * self.variances)[None] + (X[:, None, :] - self.means[None]) ** 2 / self.variances[None],
            axis=2,
        )
        return ll + np.log(self.priors)[None]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Posterior ``P(y | x) = P(y) P(x | y) / P(x)`` computed in log space."""
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict(self, X: np.ndarray) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return (jll[:, 1] > jll[:, 0]).astype(int)

    def params(self) -> dict:
        return {"priors": self.priors.tolist(), "means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_params(cls, p: dict) -> "GaussianNbModel":
        return cls(np.array(p["priors"]), np.array(p["means"]), np.array(p["variances"]))


def fit_gnb(X: np.ndarray, y: np.ndarray, var_floor: float = 1e-9) -> GaussianNbModel:
    X, y = _check_xy(X, y)
    _two_classes(y)
    priors = np.bincount(y, minlength=2) / len(y)
    means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.maximum(np.stack([X[y == c].var(axis=0) for c in (0, 1)]), var_floor)
    return GaussianNbModel(priors, means, variances)


# --------------------------------------------------------------------------- kNN


@dataclass(frozen=True)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int

    kind = "knn"

    def neighbors(self, x: np.ndarray) -> np.ndarray:
        """Indices of the ``k`` nearest training rows; equal distances favour the lower index."""
        d2 = np.sum((self.X - np.asarray(x, dtype=float)) ** 2, axis=1)
        return np.argsort(d2, kind="stable")[: self.k]

    def predict(self, X: np.ndarray) -> np.ndarray:
        Q = _rows(X)
        out = np.empty(len(Q), dtype=int)
        # direct differences rather than the |q|^2 - 2qx + |x|^2 expansion keep exact ties exact
        for start in range(0, len(Q), 256):
            block = Q[start : start + 256]
            d2 = np.sum((block[:, None, :] - self.X[None]) ** 2, axis=2)
            nearest = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            out[start : start + 256] = 2 * self.y[nearest].sum(axis=1) > self.k
        return out

    def params(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "k": self.k}

    @classmethod
    def from_params(cls, p: dict) -> "KnnModel":
        return cls(np.array(p["X"], dtype=float), np.array(p["y"], dtype=int), int(p["k"]))


def fit_knn(X: np.ndarray, y: np.ndarray, k: int = 5) -> KnnModel:
    X, y = _check_xy(X, y)
    if k < 1 or k % 2 == 0:
        raise ValidationError(f"k must be a positive odd integer, got {k}")
    if k > len(y):
        raise TooFewRows(f"k={k} exceeds the {len(y)} training points")
    return KnnModel(X.copy(), y.copy(), int(k))


def predict_knn(model: KnnModel, x: np.ndarray) -> int:
    return int(model.predict(x)[0])


# --------------------------------------------------------------------------- linear SVM


@dataclass(frozen=True)
class LinearSvmModel:
    w: np.ndarray
    bias: float
    lam: float

    kind = "svm"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return _rows(X) @ self.w + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)

    def params(self) -> dict:
        return {"w": self.w.tolist(), "bias": self.bias, "lam": self.lam}

    @classmethod
    def from_params(cls, p: dict) -> "LinearSvmModel":
        return cls(np.array(p["w"], dtype=float), float(p["bias"]), float(p["lam"]))


def svm_objective(w: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """``lam / 2 * (|w|^2 + bias^2) + mean hinge`` with ``y`` in {0, 1}."""
    s = 2 * np.asarray(y) - 1
    margins = s * (X @ w + bias)
    return float(0.5 * lam * (w @ w + bias * bias) + np.mean(np.maximum(0.0, 1.0 - margins)))


def fit_svm(
    X: np.ndarray,
    y: np.ndarray,
    lam: float = 1e-2,
    epochs: int = 2000,
    seed: int = 0,
    batch_size: int = 32,
) -> LinearSvmModel:
    """Pegasos-style mini-batch sub-gradient descent with step ``1 / (lam t)``.

    The bias is handled as a weight on a constant feature and is therefore
    regularised too. The iterate with the lowest full-data objective seen at
    epoch boundaries is returned, which is never worse than ``w = 0``.
    """
    X, y = _check_xy(X, y)
    if lam <= 0:
        raise ValidationError("lam must be positive")
    classes = np.unique(y)
    if len(classes) == 1:
        # degenerate: constant prediction of the only label seen
        return LinearSvmModel(np.zeros(X.shape[1]), 1.0 if classes[0] == 1 else -1.0, lam)

    n, d = X.shape
    Xa = np.column_stack([X, np.ones(n)])
    s = 2 * y - 1
    rng = np.random.default_rng(seed)
    w = np.zeros(d + 1)
    best_w, best_obj = w.copy(), svm_objective(w[:d], w[d], X, y, lam)
    t = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            t += 1
            eta = 1.0 / (lam * t)
            active = s[idx] * (Xa[idx] @ w) < 1
            grad = lam * w - (s[idx][active, None] * Xa[idx][active]).sum(axis=0) / len(idx)
            w = w - eta * grad
        obj = svm_objective(w[:d], w[d], X, y, lam)
        if not np.isfinite(obj):
            raise NonFiniteLoss(f"SVM objective became non-finite at epoch {epoch}")
        if obj < best_obj:
            best_w, best_obj = w.copy(), obj
    return LinearSvmModel(best_w[:d], float(best_w[d]), lam)


# --------------------------------------------------------------------------- ensemble


@dataclass(frozen=True)
class EnsembleModel:
    members: tuple[Any, ...]

    kind = "ensemble"

    def __post_init__(self) -> None:
        if len(self.members) % 2 == 0:
            raise ValidationError("an ensemble needs an odd number of members")

    def member_votes(self, X: np.ndarray) -> np.ndarray:
        return np.stack([m.predict(X) for m in self.members])

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = self.member_votes(X)
        return (2 * votes.sum(axis=0) > len(self.members)).astype(int)

    def params(self) -> dict:
        return {"members": [{"kind": m.kind, "params": m.params()} for m in self.members]}

    @classmethod
    def from_params(cls, p: dict) -> "EnsembleModel":
        return cls(tuple(_MODEL_TYPES[m["kind"]].from_params(m["params"]) for m in p["members"]))


def fit_ensemble(X: np.ndarray, y: np.ndarray, seed: int = 0, params: dict | None = None) -> EnsembleModel:
    """kNN, LDA and linear SVM fitted on the same data, combined by majority vote."""
    params = params or {}
    knn = fit_knn(X, y, **{**DEFAULT_PARAMS["knn"], **params.get("knn", {})})
    lda = fit_lda(X, y, **{**DEFAULT_PARAMS["lda"], **params.get("lda", {})})
    svm = fit_svm(X, y, seed=seed, **{**DEFAULT_PARAMS["svm"], **params.get("svm", {})})
    return EnsembleModel((knn, lda, svm))


def predict_ensemble(model: EnsembleModel, x: np.ndarray) -> int:
    return int(model.predict(x)[0])


Classifier = Union[LogisticRegressionModel, LdaModel, GaussianNbModel, KnnModel, LinearSvmModel, EnsembleModel]

_MODEL_TYPES: dict[str, Any] = {
    "logreg": LogisticRegressionModel,
    "lda": LdaModel,
    "gnb": GaussianNbModel,
    "knn": KnnModel,
    "svm": LinearSvmModel,
    "ensemble": EnsembleModel,
}


def fit_classifier(kind: str, X: np.ndarray, y: np.ndarray, params: dict | None = None, seed: int = 0) -> Classifier:
    """Fit ``kind`` with :data:`DEFAULT_PARAMS` overridden by ``params``.

    For ``ensemble``, ``params`` may hold ``knn``/``lda``/``svm`` sub-dicts.
    """
    if kind not in CLASSIFIER_KINDS:
        raise ValidationError(f"unknown classifier kind {kind!r}; choose from {CLASSIFIER_KINDS}")
    p = {**DEFAULT_PARAMS[kind], **(params or {})}
    if kind == "logreg":
        return fit_logreg(X, y, seed=seed, **p)
    if kind == "lda":
        return fit_lda(X, y, **p)
    if kind == "gnb":
        return fit_gnb(X, y, **p)
    if kind == "knn":
        return fit_knn(X, y, **p)
    if kind == "svm":
        return fit_svm(X, y, seed=seed, **p)
    return fit_ensemble(X, y, seed=seed, params=p)


def model_to_dict(model: Classifier, feature_names: Sequence[str]) -> dict:
    return {"kind": model.kind, "feature_names": list(feature_names), "params": model.params()}


def model_from_dict(d: dict, expected_features: Sequence[str] | None = None) -> Classifier:
    """Inverse of :func:`model_to_dict`; refuses models trained on other features."""
    kind = d.get("kind")
    if kind not in _MODEL_TYPES:
        raise ValidationError(f"unknown model kind {kind!r}")
    if expected_features is not None and list(d["feature_names"]) != list(expected_features):
        raise FeatureMismatch(
            f"model trained on features {d['feature_names'][:4]}... but {list(expected_features)[:4]}... expected"
        )
    return _MODEL_TYPES[kind].from_params(d["params"])
