"""Objective envelope and periodicity metrics.

Distances take the reference first.  None of them normalize gain except
``log_mel_envelope_distance``; callers that want gain-free comparisons
RMS-normalize beforehand (see ``prepare_pair``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import solve_toeplitz
from scipy.signal import correlate, get_window

from .acoustics import AudioSignal
from .errors import DomainError, EstimationError, SampleRateError, SilenceError, UnvoicedError

MAG_FLOOR = 1e-7
SILENCE_RMS = 1e-9
DEFAULT_RESOLUTIONS = ((512, 128), (1024, 256), (2048, 512))


@dataclass(frozen=True)
class StftResolution:
    fft_size: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.fft_size:
            raise DomainError(f"need 0 < hop <= fft_size, got hop={self.hop}, fft_size={self.fft_size}")


@dataclass(frozen=True)
class FormantSet:
    f1: float
    f2: float
    f3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3])


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, AudioSignal) else np.asarray(x, dtype=float)


def _check_rates(a, b):
    if isinstance(a, AudioSignal) and isinstance(b, AudioSignal) and a.fs != b.fs:
        raise SampleRateError(f"sample rates differ: {a.fs} vs {b.fs}")


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x**2))) if x.size else 0.0


def _require_sound(*xs):
    for x in xs:
        if _rms(x) < SILENCE_RMS:
            raise SilenceError("signal is silent (RMS < 1e-9)")


def stft_mag(x: np.ndarray, fft_size: int, hop: int, window: str = "hann") -> np.ndarray:
    """Magnitude STFT, frames fully inside the signal (short signals are zero-padded to one frame)."""
    x = np.asarray(x, dtype=float)
    if x.size < fft_size:
        x = np.pad(x, (0, fft_size - x.size))
    frames = sliding_window_view(x, fft_size)[::hop]
    w = get_window(window, fft_size, fftbins=True)
    return np.abs(np.fft.rfft(frames * w, axis=-1))


# ---------------------------------------------------------------- alignment

def align_xcorr(a, b, max_lag: int | None = None) -> int:
    """Lag L maximizing sum_n a[n] b[n+L] / (|a||b|); b delayed by d gives L = d.

    Signed correlation.  Ties (within 1e-12) go to the smallest |L|, then to positive L.
    """
    _check_rates(a, b)
    xa, xb = _samples(a), _samples(b)
    _require_sound(xa, xb)
    if max_lag is None:
        fs = a.fs if isinstance(a, AudioSignal) else 16000.0
        max_lag = int(round(0.05 * fs))
    corr = correlate(xb, xa, mode="full", method="fft") / (np.linalg.norm(xa) * np.linalg.norm(xb))
    lags = np.arange(-(xa.size - 1), xb.size)
    keep = np.abs(lags) <= max_lag
    corr, lags = corr[keep], lags[keep]
    best = corr.max()
    tied = lags[corr >= best - 1e-12 * max(1.0, abs(best))]
    order = np.lexsort((-tied, np.abs(tied)))
    return int(tied[order[0]])


def apply_lag(a: np.ndarray, b: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Trim both signals to their overlap after shifting ``b`` back by ``lag``."""
    if lag >= 0:
        b = b[lag:]
    else:
        a = a[-lag:]
    n = min(a.size, b.size)
    return a[:n], b[:n]


def rms_normalize(x: np.ndarray) -> np.ndarray:
    r = _rms(x)
    if r < SILENCE_RMS:
        raise SilenceError("cannot normalize a silent signal")
    return x / r


def prepare_pair(ref: AudioSignal, cand: AudioSignal, max_lag: int | None = None):
    """Align ``cand`` to ``ref``, trim to the overlap and RMS-normalize both."""
    _check_rates(ref, cand)
    lag = align_xcorr(ref, cand, max_lag)
    a, b = apply_lag(ref.samples, cand.samples, lag)
    return AudioSignal(rms_normalize(a), ref.fs), AudioSignal(rms_normalize(b), ref.fs), lag


# ---------------------------------------------------------------- spectral distances

def multires_stft_error(a, b, res=DEFAULT_RESOLUTIONS) -> float:
    """Mean over resolutions of spectral convergence plus mean |log|A| - log|B||."""
    _check_rates(a, b)
    xa, xb = _samples(a), _samples(b)
    n = min(xa.size, xb.size)
    xa, xb = xa[:n], xb[:n]
    _require_sound(xa)
    total = 0.0
    for r in res:
        r = r if isinstance(r, StftResolution) else StftResolution(*r)
        ma = np.maximum(stft_mag(xa, r.fft_size, r.hop, r.window), MAG_FLOOR)
        mb = np.maximum(stft_mag(xb, r.fft_size, r.hop, r.window), MAG_FLOOR)
        sc = np.linalg.norm(ma - mb) / np.linalg.norm(ma)
        logmag = np.mean(np.abs(np.log(ma) - np.log(mb)))
        total += sc + logmag
    return float(total / len(res))


def lsd(a, b, fft_size: int = 1024, hop: int = 256) -> float:
    """Log-spectral distance in dB, averaged over frames."""
    _check_rates(a, b)
    xa, xb = _samples(a), _samples(b)
    n = min(xa.size, xb.size)
    xa, xb = xa[:n], xb[:n]
    _require_sound(xa)
    ma = np.maximum(stft_mag(xa, fft_size, hop), MAG_FLOOR)
    mb = np.maximum(stft_mag(xb, fft_size, hop), MAG_FLOOR)
    d = 20.0 * np.log10(ma / mb)
    return float(np.mean(np.sqrt(np.mean(d**2, axis=1))))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, fs: float, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (n_mels, n_fft//2 + 1)."""
    fmax = fs / 2 if fmax is None else fmax
    if not 0 <= fmin < fmax <= fs / 2:
        raise DomainError(f"need 0 <= fmin < fmax <= fs/2, got {fmin}, {fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, 1.0 / fs)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins - lo) / (mid - lo)
    down = (hi - bins) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def log_mel_envelope_distance(a: AudioSignal, b: AudioSignal, n_mels: int = 64, fmin: float = 0.0,
                              fmax: float | None = None, fft_size: int = 1024, hop: int = 256) -> float:
    """Mean absolute difference of time-averaged log-mel spectra after RMS normalization."""
    _check_rates(a, b)
    xa, xb = _samples(a), _samples(b)
    n = min(xa.size, xb.size)
    xa, xb = rms_normalize(xa[:n]), rms_normalize(xb[:n])
    fb = mel_filterbank(n_mels, fft_size, a.fs, fmin, fmax)
    env_a = np.log(fb @ np.mean(stft_mag(xa, fft_size, hop) ** 2, axis=0) + 1e-10)
    env_b = np.log(fb @ np.mean(stft_mag(xb, fft_size, hop) ** 2, axis=0) + 1e-10)
    return float(np.mean(np.abs(env_a - env_b)))


# ---------------------------------------------------------------- formants

def lpc(x: np.ndarray, order: int) -> np.ndarray:
    """Autocorrelation-method LPC polynomial [1, a1, ..., a_order]."""
    r = correlate(x, x, mode="full", method="fft")[x.size - 1 : x.size + order]
    if r[0] <= 0:
        raise EstimationError("zero-energy analysis segment")
    r = r.copy()
    r[0] *= 1.0 + 1e-9
    a = solve_toeplitz(r[:-1], -r[1:])
    return np.concatenate(([1.0], a))


def formants_lpc(a: AudioSignal, order: int | None = None, n: int = 3, segment: float = 0.05,
                 preemph: float = 0.97, max_bandwidth: float = 400.0, fmin: float = 90.0) -> FormantSet:
    """Formants from the roots of an LPC fit to a mid-utterance window."""
    if a.duration < 0.1:
        raise EstimationError(f"need at least 0.1 s of audio, got {a.duration:.3f} s")
    fs = a.fs
    order = int(2 + fs // 1000) if order is None else order
    seglen = min(a.samples.size, int(round(segment * fs)))
    start = (a.samples.size - seglen) // 2
    x = a.samples[start : start + seglen]
    x = np.append(x[0], x[1:] - preemph * x[:-1]) * get_window("hann", seglen, fftbins=False)
    roots = np.roots(lpc(x, order))
    roots = roots[np.imag(roots) > 0]
    freqs = np.angle(roots) * fs / (2 * np.pi)
    bws = -np.log(np.abs(roots)) * fs / np.pi
    ok = (bws < max_bandwidth) & (freqs > fmin) & (freqs < fs / 2 - 50)
    found = np.sort(freqs[ok])
    if found.size < n:
        raise EstimationError(f"found {found.size} resonances, need {n}")
    if n == 3:
        return FormantSet(*found[:3])
    return found[:n]


def formant_mae(x: FormantSet, y: FormantSet) -> float:
    return float(np.mean(np.abs(x.as_array() - y.as_array())))


# ---------------------------------------------------------------- periodicity

def _window_autocorr(w: np.ndarray, nfft: int) -> np.ndarray:
    r = np.fft.irfft(np.abs(np.fft.rfft(w, nfft)) ** 2, nfft)[: w.size]
    return r / r[0]


def frame_periodicity(frames: np.ndarray, fs: float, f0_range: tuple[float, float]) -> np.ndarray:
    """Peak of the window-corrected normalized autocorrelation per frame (Boersma-style).

    The peak is refined by parabolic interpolation over integer lags.
    """
    nwin = frames.shape[1]
    w = get_window("hann", nwin, fftbins=False)
    nfft = int(2 ** np.ceil(np.log2(2 * nwin)))
    rw = _window_autocorr(w, nfft)
    lo = max(2, int(np.floor(fs / f0_range[1])))
    hi = min(nwin // 2, int(np.ceil(fs / f0_range[0])))
    if hi <= lo + 1:
        raise DomainError("f0 range does not fit inside the analysis frame")
    x = (frames - frames.mean(axis=1, keepdims=True)) * w
    spec = np.abs(np.fft.rfft(x, nfft, axis=1)) ** 2
    ra = np.fft.irfft(spec, nfft, axis=1)[:, : nwin]
    energy = ra[:, 0].copy()
    out = np.zeros(frames.shape[0])
    live = energy > 0
    r = ra[live] / energy[live, None] / rw[None, :]
    seg = r[:, lo - 1 : hi + 2]
    k = np.argmax(seg[:, 1:-1], axis=1) + 1
    idx = np.arange(seg.shape[0])
    y0, y1, y2 = seg[idx, k - 1], seg[idx, k], seg[idx, k + 1]
    denom = y0 - 2 * y1 + y2
    shift = np.where(denom < 0, 0.5 * (y0 - y2) / np.where(denom < 0, denom, 1.0), 0.0)
    out[live] = y1 - 0.25 * (y0 - y2) * shift
    return out


def hnr_framewise(a: AudioSignal, f0_hint: tuple[float, float] = (60.0, 600.0), frame: float = 0.04,
                  hop: float = 0.01, voicing: float = 0.3, return_frames: bool = False):
    """Median frame HNR in dB over voiced frames (peak autocorrelation > ``voicing``)."""
    if a.duration < 0.2:
        raise DomainError(f"need at least 0.2 s of audio, got {a.duration:.3f} s")
    nwin, nhop = int(round(frame * a.fs)), int(round(hop * a.fs))
    frames = sliding_window_view(a.samples, nwin)[::nhop]
    r = frame_periodicity(frames, a.fs, f0_hint)
    voiced = r > voicing
    if not np.any(voiced):
        raise UnvoicedError("no voiced frames")
    rc = np.clip(r[voiced], 1e-6, 1 - 1e-6)
    db = 10.0 * np.log10(rc / (1.0 - rc))
    value = float(np.median(db))
    return (value, db) if return_frames else value
