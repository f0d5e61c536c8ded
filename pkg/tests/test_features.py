import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from conftest import make_trialset

from mibci.dsp import BandSpec, band_power, welch_psd
from mibci.errors import MissingChannel, RankTooLow, ShapeMismatch, SignalTooShort, SingleClass, TooFewRows
from mibci.features import (
    CspExtractor,
    CspModel,
    LogSubbandExtractor,
    SubbandLayout,
    apply_csp,
    apply_standardizer,
    extractor_from_dict,
    fit_csp,
    fit_pca,
    fit_standardizer,
    log_subband_power,
    project,
    reconstruct,
)

FS = 250.0
NAMES = ("C3", "C4")


def test_default_layout():
    lay = SubbandLayout.default()
    assert lay.dimension == 16
    assert lay.feature_names[:2] == ["C3.alpha1", "C3.alpha2"]
    assert lay.feature_names[-1] == "C4.beta4"
    assert SubbandLayout.from_dict(lay.to_dict()) == lay


def test_length_16():
    x = np.random.default_rng(0).normal(size=(750, 2))
    assert log_subband_power(x, SubbandLayout.default(), FS, NAMES).shape == (16,)


def test_zero_signal_floor():
    v = log_subband_power(np.zeros((750, 2)), SubbandLayout.default(), FS, NAMES)
    assert np.all(v == math.log(1e-12))


def test_burst_on_c3():
    rng = np.random.default_rng(1)
    t = np.arange(750) / FS
    x = 0.1 * rng.normal(size=(750, 2))
    x[:, 0] += np.sin(2 * np.pi * 10 * t)
    v = log_subband_power(x, SubbandLayout.default(), FS, NAMES)
    c3, c4 = v[:8], v[8:]
    assert int(np.argmax(c3)) == 1  # alpha2 = [9.5, 11)
    assert c3[1] > c4[1]


def test_feature_oracle():
    # entry-by-entry against a direct welch + band_power computation
    x = np.random.default_rng(2).normal(size=(750, 2))
    lay = SubbandLayout.default()
    v = log_subband_power(x, lay, FS, NAMES)
    expected = [np.log(band_power(welch_psd(x[:, c], FS), b)) for c in range(2) for b in lay.bands]
    np.testing.assert_allclose(v, expected, rtol=1e-12)


def test_missing_channel_and_too_short():
    with pytest.raises(MissingChannel):
        log_subband_power(np.zeros((750, 2)), SubbandLayout.default(), FS, ("C3", "Cz"))
    with pytest.raises(SignalTooShort):
        log_subband_power(np.zeros((100, 2)), SubbandLayout.default(), FS, NAMES)


@given(seed=st.integers(0, 10_000), dc=st.floats(-100, 100), c=st.floats(0.01, 100))
@settings(max_examples=40, deadline=None)
def test_shift_and_scale(seed, dc, c):
    x = np.random.default_rng(seed).normal(size=(750, 2))
    lay = SubbandLayout.default()
    base = log_subband_power(x, lay, FS, NAMES)
    np.testing.assert_allclose(log_subband_power(x + dc, lay, FS, NAMES), base, atol=1e-6)
    np.testing.assert_allclose(log_subband_power(c * x, lay, FS, NAMES), base + 2 * math.log(c), atol=1e-6)


def test_extractor_matches_per_trial():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(6, 750, 3))
    ts = make_trialset(data, [0, 1, 0, 1, 0, 1])
    ex = LogSubbandExtractor().fit(ts)
    fm = ex.transform(ts)
    assert fm.X.shape == (6, 16)
    assert list(fm.feature_names) == SubbandLayout.default().feature_names
    for i in range(6):
        np.testing.assert_allclose(
            fm.X[i], log_subband_power(data[i], SubbandLayout.default(), FS, ts.channel_names), rtol=1e-12
        )
    assert extractor_from_dict(ex.to_dict()) == ex


# --------------------------------------------------------------------------- CSP


def _csp_trials(n=40, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, 500, 2))
    y = np.arange(n) % 2
    data[y == 0, :, 0] *= 3.0
    data[y == 1, :, 1] *= 3.0
    return make_trialset(data, y, eeg=NAMES), data, y


def test_csp_variance_ratio():
    ts, data, y = _csp_trials()
    m = fit_csp(ts, 2)
    w = m.filters[0]
    v0 = np.mean([np.var(d @ w) for d in data[y == 0]])
    v1 = np.mean([np.var(d @ w) for d in data[y == 1]])
    assert v0 / v1 >= 4
    assert m.filters.shape == (2, 2)
    assert np.all((m.eigvals > 0) & (m.eigvals < 1))
    assert m.eigvals[0] > m.eigvals[1]


def test_csp_joint_diagonalization():
    rng = np.random.default_rng(4)
    data = rng.normal(size=(30, 400, 3)) @ rng.normal(size=(3, 3))
    y = np.arange(30) % 2
    data[y == 1, :, 0] *= 2.5
    ts = make_trialset(data, y)
    m = fit_csp(ts, 2)

    def cov(d):
        xc = d - d.mean(axis=0)
        c = xc.T @ xc
        return c / np.trace(c)

    s0 = np.mean([cov(d) for d in data[y == 0]], axis=0)
    s1 = np.mean([cov(d) for d in data[y == 1]], axis=0)
    W = m.filters.T
    np.testing.assert_allclose(W.T @ (s0 + s1) @ W, np.eye(2), atol=1e-6)
    np.testing.assert_allclose(np.diag(W.T @ s0 @ W), m.eigvals, atol=1e-6)


def test_csp_single_class():
    ts, _, _ = _csp_trials()
    one = ts.subset([i for i, t in enumerate(ts) if t.label == 0])
    with pytest.raises(SingleClass):
        fit_csp(one, 2)


def test_csp_identity_filters_white_noise():
    model = CspModel(np.eye(2), np.array([0.5, 0.5]), NAMES)
    x = np.random.default_rng(5).normal(size=(750, 2))
    assert np.all(np.abs(apply_csp(model, x)) < 0.2)


def test_csp_scaling():
    ts, data, _ = _csp_trials()
    m = fit_csp(ts, 2)
    np.testing.assert_allclose(apply_csp(m, 2 * data[0]), apply_csp(m, data[0]) + math.log(4), atol=1e-9)


def test_csp_shape_mismatch():
    ts, _, _ = _csp_trials()
    m = fit_csp(ts, 2)
    with pytest.raises(ShapeMismatch):
        apply_csp(m, np.zeros((500, 3)))


def test_csp_extractor_roundtrip():
    ts, data, _ = _csp_trials()
    ex = CspExtractor(m=2).fit(ts)
    fm = ex.transform(ts)
    np.testing.assert_allclose(fm.X[3], apply_csp(ex.model, data[3]), rtol=1e-12)
    ex2 = extractor_from_dict(ex.to_dict())
    np.testing.assert_array_equal(ex2.transform(ts).X, fm.X)


# --------------------------------------------------------------------------- standardizer


def test_standardizer_self():
    X = np.random.default_rng(6).normal(3, 5, size=(50, 4))
    Z = apply_standardizer(fit_standardizer(X), X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(Z.std(axis=0), 1, atol=1e-9)


def test_standardizer_constant_column():
    X = np.column_stack([np.full(10, 7.0), np.arange(10.0)])
    Z = apply_standardizer(fit_standardizer(X), X)
    assert np.all(Z[:, 0] == 0)


def test_standardizer_uses_train_stats():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 3))
    s = fit_standardizer(X)
    Z = apply_standardizer(s, X + 4.0)
    np.testing.assert_allclose(Z.mean(axis=0), (X.mean(axis=0) + 4 - s.mean) / s.std, atol=1e-12)
    assert np.all(Z.mean(axis=0) > 1)


def test_standardizer_too_few_rows():
    with pytest.raises(TooFewRows):
        fit_standardizer(np.zeros((1, 3)))


# --------------------------------------------------------------------------- PCA


def test_pca_axis_aligned():
    rng = np.random.default_rng(8)
    X = np.zeros((100, 4))
    X[:, 0] = rng.normal(size=100)
    m = fit_pca(X, 1)
    np.testing.assert_allclose(np.abs(m.components[0]), [1, 0, 0, 0], atol=1e-8)


@given(seed=st.integers(0, 10_000), n=st.integers(6, 40), d=st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_pca_properties(seed, n, d):
    X = np.random.default_rng(seed).normal(size=(n, d)) @ np.diag(np.arange(1, d + 1, dtype=float))
    m = fit_pca(X, d)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(d), atol=1e-8)
    Z = project(m, X)
    np.testing.assert_allclose(reconstruct(m, Z), X, atol=1e-8)
    assert np.all(np.diff(m.explained_variance) <= 1e-12)
    cov = np.cov(Z.T).reshape(d, d)
    np.testing.assert_allclose(cov - np.diag(np.diag(cov)), 0, atol=1e-8)
    np.testing.assert_allclose(m.explained_variance.sum(), np.var(X, axis=0, ddof=1).sum(), rtol=1e-9)


def test_pca_rank_warning():
    X = np.outer(np.arange(10.0), [1.0, 2.0, 3.0])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fit_pca(X, 2)
    assert any(issubclass(x.category, RankTooLow) for x in w)


def test_pca_matches_covariance_eigs():
    X = np.random.default_rng(9).normal(size=(60, 3)) @ np.array([[2, 0.5, 0], [0, 1, 0.2], [0, 0, 0.3]])
    m = fit_pca(X, 3)
    np.testing.assert_allclose(m.explained_variance, np.sort(np.linalg.eigvalsh(np.cov(X.T)))[::-1], rtol=1e-9)


def test_band_spec_guard():
    with pytest.raises(Exception):
        SubbandLayout((BandSpec(10, 8),), ("x",), ("C3",))
