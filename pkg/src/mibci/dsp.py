"""Butterworth bandpass design, zero-phase filtering and Welch spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as _sig

from .errors import EmptyBand, InvalidBand, SegmentTooLong, SignalTooShort, UnsupportedOrder, ValidationError

SUPPORTED_ORDERS = (2, 4, 6, 8)


@dataclass(frozen=True)
class BandSpec:
    low_hz: float
    high_hz: float

    def validate(self, fs: float | None = None) -> None:
        if not (0 < self.low_hz < self.high_hz):
            raise InvalidBand(f"need 0 < low < high, got ({self.low_hz}, {self.high_hz})")
        if fs is not None and not self.high_hz < fs / 2:
            raise InvalidBand(f"high edge {self.high_hz} Hz not below Nyquist {fs / 2} Hz")


@dataclass(frozen=True)
class FilterCoefficients:
    """Cascade of second-order sections.

    ``sections[i] = (b0, b1, b2, a1, a2)`` realises
    ``(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)``; the overall
    transfer function is ``gain`` times the product of the sections.
    """

    sections: np.ndarray
    gain: float

    def __post_init__(self) -> None:
        s = np.array(self.sections, dtype=float).reshape(-1, 5)
        s.setflags(write=False)
        object.__setattr__(self, "sections", s)

    @property
    def order(self) -> int:
        return 2 * len(self.sections)

    def as_sos(self) -> np.ndarray:
        """``[n_sections, 6]`` array in the ``(b0, b1, b2, 1, a1, a2)`` layout, gain folded into section 0."""
        sos = np.column_stack([self.sections[:, :3], np.ones(len(self.sections)), self.sections[:, 3:]])
        sos[0, :3] *= self.gain
        return sos

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, a1, a2]) for a1, a2 in self.sections[:, 3:]])

    def response(self, freqs_hz: np.ndarray, fs: float) -> np.ndarray:
        """Complex frequency response evaluated at ``freqs_hz``."""
        z = np.exp(-1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / fs)
        h = np.full(z.shape, self.gain, dtype=complex)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * z + b2 * z * z) / (1 + a1 * z + a2 * z * z)
        return h


def design_butterworth_bandpass(order: int, band: BandSpec, fs: float) -> FilterCoefficients:
    """Digital Butterworth bandpass of total ``order`` (``order / 2`` prototype poles).

    The analog lowpass prototype is shifted to a bandpass around the
    pre-warped edges and mapped through the bilinear transform; each
    conjugate pole pair becomes one section with zeros at z = +1 and z = -1.
    """
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedOrder(f"order must be one of {SUPPORTED_ORDERS}, got {order}")
    band.validate(fs)
    n = order // 2

    # pre-warped edges for s = (z - 1) / (z + 1)
    w_lo = math.tan(math.pi * band.low_hz / fs)
    w_hi = math.tan(math.pi * band.high_hz / fs)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    proto = np.exp(1j * np.pi * (2 * np.arange(1, n + 1) + n - 1) / (2 * n))

    def to_bandpass(p: complex) -> tuple[complex, complex]:
        root = np.sqrt((p * bw) ** 2 - 4 * w0_sq + 0j)
        return (p * bw + root) / 2, (p * bw - root) / 2

    analog_pairs: list[tuple[complex, complex]] = []
    for p in proto:
        if abs(p.imag) < 1e-12:
            analog_pairs.append(to_bandpass(complex(p.real, 0.0)))
        elif p.imag > 0:
            s1, s2 = to_bandpass(p)
            analog_pairs.append((s1, np.conj(s1)))
            analog_pairs.append((s2, np.conj(s2)))

    sections = []
    denom = 1.0 + 0j
    for s1, s2 in analog_pairs:
        z1, z2 = (1 + s1) / (1 - s1), (1 + s2) / (1 - s2)
        sections.append((1.0, 0.0, -1.0, -(z1 + z2).real, (z1 * z2).real))
        denom *= (1 - s1) * (1 - s2)
    # n analog zeros at s = 0 map to z = 1, n zeros at infinity to z = -1
    gain = (bw**n / denom).real
    return FilterCoefficients(np.array(sections), gain)


def _odd_extend(x: np.ndarray, pad: int) -> np.ndarray:
    left = 2 * x[:1] - x[pad:0:-1]
    right = 2 * x[-1:] - x[-2 : -pad - 2 : -1]
    return np.concatenate([left, x, right])


def filter_zero_phase(x: np.ndarray, c: FilterCoefficients) -> np.ndarray:
    """Forward-backward filtering along axis 0.

    The signal is odd-reflected by ``3 * order`` samples at each end and both
    passes start from the steady-state section state scaled by the first
    sample, so the net phase is zero and the magnitude response is squared.
    """
    x = np.asarray(x, dtype=float)
    pad = 3 * c.order
    if x.shape[0] <= pad:
        raise SignalTooShort(f"signal of {x.shape[0]} samples needs more than {pad} for edge padding")
    sos = c.as_sos()
    zi = _sig.sosfilt_zi(sos)
    zi = zi.reshape(zi.shape[:2] + (1,) * (x.ndim - 1))

    ext = _odd_extend(x, pad)
    y = _sig.sosfilt(sos, ext, axis=0, zi=zi * ext[:1])[0]
    y = y[::-1]
    y = _sig.sosfilt(sos, y, axis=0, zi=zi * y[:1])[0]
    return np.ascontiguousarray(y[::-1][pad:-pad])


@dataclass(frozen=True)
class Psd:
    """One-sided power spectral density; ``power`` has frequency on axis 0."""

    freqs_hz: np.ndarray
    power: np.ndarray

    @property
    def df(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0])


def welch_psd(x: np.ndarray, fs: float, segment_s: float = 1.0, overlap_fraction: float = 0.5) -> Psd:
    """Welch estimate along axis 0 with periodic Hann segments and mean detrending.

    Scaled as a density (units^2 / Hz) so that ``power.sum() * df``
    approximates the variance of a zero-mean input.
    """
    x = np.asarray(x, dtype=float)
    if not 0 <= overlap_fraction < 1:
        raise ValidationError(f"overlap_fraction must lie in [0, 1), got {overlap_fraction}")
    nperseg = int(round(segment_s * fs))
    if nperseg < 2:
        raise ValidationError(f"segment of {segment_s} s at {fs} Hz is shorter than 2 samples")
    if nperseg > x.shape[0]:
        raise SegmentTooLong(f"segment of {nperseg} samples exceeds signal length {x.shape[0]}")
    step = nperseg - int(round(overlap_fraction * nperseg))
    n_seg = (x.shape[0] - nperseg) // step + 1

    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(nperseg) / nperseg)
    window = window.reshape((-1,) + (1,) * (x.ndim - 1))
    acc = 0.0
    for i in range(n_seg):
        seg = x[i * step : i * step + nperseg]
        seg = seg - seg.mean(axis=0)
        acc = acc + np.abs(np.fft.rfft(seg * window, axis=0)) ** 2
    power = acc / (n_seg * fs * float(np.sum(window**2)))
    # fold negative frequencies, except DC and (for even lengths) Nyquist
    if nperseg % 2 == 0:
        power[1:-1] *= 2
    else:
        power[1:] *= 2
    freqs = np.fft.rfftfreq(nperseg, d=1.0 / fs)
    return Psd(freqs, power)


def band_power(p: Psd, band: BandSpec) -> np.ndarray | float:
    """Trapezoidal integral of ``p.power`` over ``[low_hz, high_hz]``.

    Band edges that fall between grid points are linearly interpolated;
    at least one grid frequency must lie inside the band.
    """
    if not band.low_hz < band.high_hz:
        raise InvalidBand(f"need low < high, got ({band.low_hz}, {band.high_hz})")
    f = p.freqs_hz
    inside = (f >= band.low_hz) & (f <= band.high_hz)
    if not inside.any():
        raise EmptyBand(f"no PSD grid point within [{band.low_hz}, {band.high_hz}] Hz")
    lo = max(band.low_hz, f[0])
    hi = min(band.high_hz, f[-1])
    idx = np.flatnonzero(inside)
    grid = f[idx]
    vals = p.power[idx]
    if grid[0] > lo:
        grid = np.concatenate([[lo], grid])
        vals = np.concatenate([_interp(p, lo)[None], vals])
    if grid[-1] < hi:
        grid = np.concatenate([grid, [hi]])
        vals = np.concatenate([vals, _interp(p, hi)[None]])
    dx = np.diff(grid).reshape((-1,) + (1,) * (vals.ndim - 1))
    total = np.sum(dx * (vals[1:] + vals[:-1]) / 2, axis=0)
    return float(total) if np.ndim(total) == 0 else total


def _interp(p: Psd, freq: float) -> np.ndarray:
    f = p.freqs_hz
    j = int(np.clip(np.searchsorted(f, freq) - 1, 0, len(f) - 2))
    w = (freq - f[j]) / (f[j + 1] - f[j])
    return (1 - w) * p.power[j] + w * p.power[j + 1]
