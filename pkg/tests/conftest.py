from __future__ import annotations

import numpy as np
import pytest

from mibci.config import parse_config
from mibci.dataset import (
    ClassProfile,
    LabelSemantics,
    SynthSpec,
    Trial,
    TrialSet,
    make_channels,
    synthesize_recording,
)
from mibci.pipeline import prepare_subject


def subject_specs(trials_per_class: int = 100) -> tuple[SynthSpec, SynthSpec]:
    """Two synthetic subjects: 10 Hz lateralised bursts with blinks, and 22 Hz bursts without."""
    s1 = SynthSpec(
        classes=(ClassProfile(10.0, 2.0, "C3"), ClassProfile(10.0, 2.0, "C4")),
        trials_per_class=trials_per_class,
        blink_rate_hz=0.2,
        name="s1",
    )
    s2 = SynthSpec(
        classes=(ClassProfile(22.0, 2.0, "C3"), ClassProfile(22.0, 2.0, "C4")),
        trials_per_class=trials_per_class,
        name="s2",
    )
    return s1, s2


def make_trialset(data, labels, eeg=("C3", "Cz", "C4"), eog=(), fs=250.0, subject_id=1):
    """TrialSet from a ``[n, t, ch]`` array."""
    trials = tuple(Trial(d, int(y), subject_id) for d, y in zip(np.asarray(data, dtype=float), labels))
    return TrialSet(trials, LabelSemantics.MI, make_channels(eeg, eog), fs)


def two_subject_config(**overrides):
    d = {
        "subjects": [
            {"id": 1, "recordings": ["s1.json"], "ica": True, "mi_classifier": "lda"},
            {"id": 2, "recordings": ["s2.json"], "ica": False, "mi_classifier": "logreg"},
        ]
    }
    d.update(overrides)
    return parse_config(d)


@pytest.fixture(scope="session")
def synth_recordings():
    s1, s2 = subject_specs()
    return synthesize_recording(s1, 1), synthesize_recording(s2, 2)


@pytest.fixture(scope="session")
def synth_cfg():
    return two_subject_config()


@pytest.fixture(scope="session")
def synth_trials(synth_recordings, synth_cfg):
    r1, r2 = synth_recordings
    return prepare_subject(synth_cfg, 1, [r1]), prepare_subject(synth_cfg, 2, [r2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------- acceptance reporting

ACCEPTANCE: dict[str, tuple[str, str]] = {}


class criterion:
    """Context manager recording PASS / FAIL / SKIP for one acceptance criterion."""

    def __init__(self, key: str, title: str):
        self.key, self.title = key, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            status = "PASS"
        elif issubclass(exc_type, pytest.skip.Exception):
            status = "SKIP"
            self.detail = self.detail or str(exc)
        else:
            status = "FAIL"
            self.detail = self.detail or f"{exc_type.__name__}: {exc}".splitlines()[0]
        ACCEPTANCE[self.key] = (status, f"{self.title}" + (f" ({self.detail})" if self.detail else ""))
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        status, text = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {text}")
