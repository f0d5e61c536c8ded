"""Run configuration: JSON file -> validated, immutable settings."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from .classifiers import DEFAULT_PARAMS
from .dsp import SUPPORTED_ORDERS, BandSpec
from .errors import ConfigError
from .features import ALPHA_SUBBANDS, BETA_SUBBANDS, CspExtractor, LogSubbandExtractor, SubbandLayout

ClassifierKind = Literal["logreg", "lda", "gnb", "knn", "svm", "ensemble"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SubjectConfig(_Strict):
    id: int
    name: str = ""
    recordings: list[str] = Field(min_length=1)
    ica: bool = False
    mi_classifier: ClassifierKind = "lda"


class IcaConfig(_Strict):
    threshold: float = Field(0.3, ge=0.0, le=1.0)
    max_drop: int = Field(1, ge=0)
    n_components: Optional[int] = Field(None, ge=1)
    tol: float = Field(1e-4, gt=0)
    max_iter: int = Field(200, ge=1)


class PreprocessingConfig(_Strict):
    filter_order: int = 4
    band: tuple[float, float] = (2.0, 60.0)
    window_s: tuple[float, float] = (0.5, 3.5)
    ica: IcaConfig = IcaConfig()

    @field_validator("filter_order")
    @classmethod
    def _order(cls, v: int) -> int:
        if v not in SUPPORTED_ORDERS:
            raise ValueError(f"filter_order must be one of {SUPPORTED_ORDERS}")
        return v

    @model_validator(mode="after")
    def _ranges(self) -> "PreprocessingConfig":
        if not 0 < self.band[0] < self.band[1]:
            raise ValueError("band must satisfy 0 < low < high")
        if not self.window_s[1] > self.window_s[0]:
            raise ValueError("window_s end must exceed start")
        return self


class FeatureConfig(_Strict):
    kind: Literal["log_subband", "csp"] = "log_subband"
    channels: list[str] = ["C3", "C4"]
    bands: list[tuple[float, float]] = [*ALPHA_SUBBANDS, *BETA_SUBBANDS]
    band_names: list[str] = [f"alpha{i}" for i in range(1, 5)] + [f"beta{i}" for i in range(1, 5)]
    welch_segment_s: float = Field(1.0, gt=0)
    welch_overlap: float = Field(0.5, ge=0, lt=1)
    csp_m: int = Field(2, ge=2)

    @model_validator(mode="after")
    def _consistent(self) -> "FeatureConfig":
        if len(self.bands) != len(self.band_names):
            raise ValueError("bands and band_names must have equal length")
        if self.csp_m % 2:
            raise ValueError("csp_m must be even")
        for lo, hi in self.bands:
            if not 0 < lo < hi:
                raise ValueError(f"invalid band ({lo}, {hi})")
        return self


_PARAM_NAMES = {
    "logreg": {"lr", "epochs", "l2"},
    "lda": {"ridge"},
    "gnb": {"var_floor"},
    "knn": {"k"},
    "svm": {"lam", "epochs", "batch_size"},
}


class ClassifierConfig(_Strict):
    evaluate: list[ClassifierKind] = ["logreg", "lda", "gnb", "ensemble"]
    gate: ClassifierKind = "ensemble"
    params: dict[str, dict[str, Any]] = {}

    @field_validator("params")
    @classmethod
    def _params(cls, v: dict[str, dict[str, Any]]) -> dict[str, dict[str, Any]]:
        for kind, p in v.items():
            if kind not in _PARAM_NAMES:
                raise ValueError(f"no tunable parameters for classifier {kind!r}")
            unknown = set(p) - _PARAM_NAMES[kind]
            if unknown:
                raise ValueError(f"unknown {kind} parameters {sorted(unknown)}")
        return v

    def params_for(self, kind: str) -> dict[str, Any]:
        if kind == "ensemble":
            return {k: dict(self.params.get(k, {})) for k in ("knn", "lda", "svm")}
        return {**DEFAULT_PARAMS[kind], **self.params.get(kind, {})}


class RunConfig(_Strict):
    data_dir: str = "."
    output_dir: str = "out"
    seed: int = 0
    train_fraction: float = Field(0.8, gt=0, lt=1)
    section_size: int = Field(5, ge=1)
    subjects: list[SubjectConfig] = Field(min_length=2, max_length=2)
    preprocessing: PreprocessingConfig = PreprocessingConfig()
    features: FeatureConfig = FeatureConfig()
    classifiers: ClassifierConfig = ClassifierConfig()

    # directory of the config file; data_dir is resolved against it
    _base_dir: Optional[str] = PrivateAttr(None)

    @model_validator(mode="after")
    def _unique_ids(self) -> "RunConfig":
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValueError("subject ids must be unique")
        return self

    @property
    def data_path(self) -> Path:
        base = Path(self._base_dir) if self._base_dir else Path.cwd()
        return (base / self.data_dir).resolve()

    def subject(self, sid: int) -> SubjectConfig:
        for s in self.subjects:
            if s.id == sid:
                return s
        raise ConfigError(f"no subject with id {sid}")

    def layout(self) -> SubbandLayout:
        f = self.features
        return SubbandLayout(tuple(BandSpec(*b) for b in f.bands), tuple(f.band_names), tuple(f.channels))

    def make_extractor(self) -> LogSubbandExtractor | CspExtractor:
        f = self.features
        if f.kind == "csp":
            return CspExtractor(m=f.csp_m, channels=tuple(f.channels) if f.channels else None)
        return LogSubbandExtractor(self.layout(), f.welch_segment_s, f.welch_overlap)

    def normalized(self) -> dict[str, Any]:
        """Config content that determines results (output location excluded)."""
        d = self.model_dump(mode="json")
        d.pop("output_dir", None)
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_config(d: dict[str, Any], base_dir: str | Path | None = None) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = RunConfig.model_validate(d)
    except pydantic.ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from None
    if base_dir is not None:
        cfg._base_dir = str(base_dir)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(d, base_dir=path.parent)
