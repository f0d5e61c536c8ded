import json

import numpy as np
import pytest

from mibci.dataset import (
    ChannelKind,
    ClassProfile,
    Event,
    LabelSemantics,
    Recording,
    SynthSpec,
    epoch_trials,
    load_recording,
    make_channels,
    save_recording,
    synth_blink_onsets,
    synthesize_recording,
    train_test_split,
)
from mibci.errors import (
    DegenerateSplit,
    InvalidSpec,
    MalformedHeader,
    NonFiniteSample,
    SampleSizeMismatch,
    WindowOutOfRange,
)
from mibci.ica import pearson


def _recording(n=1000, events=((100, 0), (400, 1)), fs=250.0):
    rng = np.random.default_rng(0)
    chans = make_channels(["C3", "Cz", "C4"], ["EOG1", "EOG2", "EOG3"])
    return Recording(fs, chans, rng.normal(size=(n, 6)).astype(np.float32), events, name="r")


def test_load_recording_shape(tmp_path):
    rec = _recording()
    header = save_recording(rec, tmp_path / "r.json")
    assert (tmp_path / "r.f32").stat().st_size == 24000
    loaded = load_recording(header)
    assert loaded.samples.shape == (1000, 6)
    assert loaded.fs == 250
    assert [c.kind for c in loaded.channels] == [ChannelKind.EEG] * 3 + [ChannelKind.EOG] * 3


def test_roundtrip_is_identity(tmp_path):
    rec = _recording()
    loaded = load_recording(save_recording(rec, tmp_path / "r.json"))
    assert loaded.fs == rec.fs
    assert loaded.channels == rec.channels
    assert loaded.events == rec.events
    # float32 on disk; the source samples were float32 so this is bit identity
    assert np.array_equal(loaded.samples, rec.samples)


def test_sample_size_mismatch(tmp_path):
    header = save_recording(_recording(), tmp_path / "r.json")
    data = tmp_path / "r.f32"
    data.write_bytes(data.read_bytes()[:-4])
    with pytest.raises(SampleSizeMismatch):
        load_recording(header)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda h: h.pop("fs"),
        lambda h: h.update(fs="fast"),
        lambda h: h.update(format_version=2),
        lambda h: h.update(channels=[{"name": "C3"}] * 6),
        lambda h: h.update(events=[{"onset": 5000, "label": 0}]),
    ],
)
def test_malformed_header(tmp_path, mutate):
    header = save_recording(_recording(), tmp_path / "r.json")
    h = json.loads(header.read_text())
    mutate(h)
    header.write_text(json.dumps(h))
    with pytest.raises(MalformedHeader):
        load_recording(header)


def test_non_finite_sample_rejected(tmp_path):
    header = save_recording(_recording(), tmp_path / "r.json")
    raw = np.fromfile(tmp_path / "r.f32", dtype="<f4")
    raw[17] = np.nan
    raw.tofile(tmp_path / "r.f32")
    with pytest.raises(NonFiniteSample):
        load_recording(header)


def test_epoch_window_length():
    ts = epoch_trials(_recording(n=2000), 0.5, 3.5, subject_id=3)
    assert len(ts) == 2
    assert ts[0].data.shape == (750, 6)
    assert ts.labels.tolist() == [0, 1]
    assert ts[0].subject_id == 3
    rec = _recording(n=2000)
    assert np.array_equal(ts[1].data, rec.samples[400 + 125 : 400 + 875])


def test_epoch_out_of_range():
    rec = _recording(events=((100, 0), (990, 1)))
    with pytest.raises(WindowOutOfRange):
        epoch_trials(rec, 0.5, 3.5)


def test_split_sizes_and_partition():
    ts = epoch_trials(_recording(n=30000, events=tuple((i * 250, i % 2) for i in range(100))))
    train, test = train_test_split(ts, 0.8, seed=7)
    assert (len(train), len(test)) == (80, 20)
    ids = lambda s: {id(t) for t in s}  # noqa: E731
    assert ids(train).isdisjoint(ids(test))
    assert ids(train) | ids(test) == ids(ts)
    again = train_test_split(ts, 0.8, seed=7)
    assert [id(t) for t in again[0]] == [id(t) for t in train]


def test_degenerate_split():
    ts = epoch_trials(_recording(n=30000, events=tuple((i * 1000, 0) for i in range(5))))
    with pytest.raises(DegenerateSplit):
        train_test_split(ts, 0.1, seed=0)


def test_epoching_preserves_event_count():
    rec = synthesize_recording(SynthSpec(classes=(ClassProfile(10, 2, "C3"),), trials_per_class=7), seed=3)
    assert len(epoch_trials(rec)) == len(rec.events) == 7


# --------------------------------------------------------------------------- synthetic data


def _small_spec(**kw):
    base = dict(classes=(ClassProfile(10, 2, "C3"), ClassProfile(10, 2, "C4")), trials_per_class=10)
    base.update(kw)
    return SynthSpec(**base)


def test_synth_deterministic():
    spec = _small_spec(blink_rate_hz=0.3)
    a, b = synthesize_recording(spec, 5), synthesize_recording(spec, 5)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert a.events == b.events
    assert synthesize_recording(spec, 6).samples.tobytes() != a.samples.tobytes()


@pytest.mark.parametrize(
    "kw",
    [dict(fs=-1.0), dict(fs=0.0), dict(trials_per_class=0), dict(classes=(ClassProfile(10, 0.0, "C3"),))],
)
def test_synth_invalid_spec(kw):
    with pytest.raises(InvalidSpec):
        _small_spec(**kw)


def test_synth_spec_json_roundtrip(tmp_path):
    spec = _small_spec(blink_rate_hz=0.1)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert SynthSpec.from_json(path) == spec
    d = spec.to_dict()
    d["bogus"] = 1
    with pytest.raises(InvalidSpec):
        SynthSpec.from_dict(d)


def test_synth_labels_and_bursts():
    spec = _small_spec(noise_sigma_uv=0.0)
    rec = synthesize_recording(spec, 0)
    assert sorted(e.label for e in rec.events) == [0] * 10 + [1] * 10
    ts = epoch_trials(rec)
    c3, c4 = ts.channel_index("C3"), ts.channel_index("C4")
    for t in ts:
        on, off = (c3, c4) if t.label == 0 else (c4, c3)
        assert np.std(t.data[:, on]) == pytest.approx(2 / np.sqrt(2), rel=0.02)
        assert np.all(t.data[:, off] == 0)


def test_synth_blinks_hit_eog_and_attenuated_eeg():
    spec = _small_spec(noise_sigma_uv=0.0, blink_rate_hz=0.5)
    rec = synthesize_recording(spec, 1)
    onsets = synth_blink_onsets(spec, 1)
    assert len(onsets) > 0
    o = onsets[0] + int(0.15 * spec.fs)  # blink peak
    eog = rec.samples[o, rec.indices_of(ChannelKind.EOG)]
    cz = rec.samples[o, rec.channel_index("Cz")]
    assert eog[0] > 50
    assert 0 < cz < eog[0]


def test_no_blinks_means_uncorrelated_eog():
    # Monte Carlo over 100 seeds: max |r| between any EEG and EOG channel < 0.2 in >= 95% of seeds
    spec = _small_spec(blink_rate_hz=0.0, trials_per_class=5)
    passes = 0
    for seed in range(100):
        rec = synthesize_recording(spec, seed)
        eeg = rec.samples[:, rec.indices_of(ChannelKind.EEG)]
        eog = rec.samples[:, rec.indices_of(ChannelKind.EOG)]
        r = max(abs(pearson(eeg[:, i], eog[:, j])) for i in range(3) for j in range(3))
        passes += r < 0.2
    assert passes >= 95


def test_trialset_requires_binary_labels():
    rec = _recording(n=2000, events=((100, 0), (400, 3)))
    with pytest.raises(Exception):
        epoch_trials(rec)


def test_relabel_subject_semantics():
    ts = epoch_trials(_recording(n=2000))
    rel = ts.relabel(1, LabelSemantics.SUBJECT)
    assert rel.labels.tolist() == [1, 1]
    assert rel.label_semantics is LabelSemantics.SUBJECT


def test_recording_is_immutable():
    rec = _recording()
    with pytest.raises(ValueError):
        rec.samples[0, 0] = 1.0
    assert rec.events[0] == Event(100, 0)
