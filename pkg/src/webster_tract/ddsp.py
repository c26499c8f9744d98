"""Compact harmonic additive synthesizer driven by f0 and frame loudness.

Used only as a non-physics baseline: harmonic amplitudes are read off the
reference spectrum frame by frame and rescaled to the reference frame RMS.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .acoustics import AudioSignal
from .errors import DomainError, SilenceError
from .glottal import PitchTrajectory

FRAME_HOP = 0.02
SILENT_FRAME_RMS = 1e-9
# harmonics this far below the frame's strongest one are window leakage, not signal
GATE = 10 ** (-80 / 20)


@dataclass(frozen=True)
class HarmonicFrameEnvelope:
    frames: np.ndarray  # (n_frames, n_harmonics), frame j centered at j*hop
    hop: float
    n_harmonics: int
    noise: np.ndarray | None = None  # (n_frames, nwin//2 + 1) noise magnitude densities

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 2 or f.shape[1] != self.n_harmonics:
            raise DomainError(f"frames must have shape (n_frames, {self.n_harmonics}), got {f.shape}")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise DomainError("harmonic amplitudes must be finite and non-negative")
        if not self.hop > 0:
            raise DomainError("hop must be positive")
        object.__setattr__(self, "frames", f)
        if self.noise is not None:
            nz = np.asarray(self.noise, dtype=float)
            if nz.ndim != 2 or nz.shape[0] != f.shape[0] or np.any(nz < 0):
                raise DomainError("noise densities must be non-negative with one row per frame")
            object.__setattr__(self, "noise", nz)

    @property
    def duration(self) -> float:
        return (self.frames.shape[0] - 1) * self.hop


def _noise_density(seg: np.ndarray, f0: float, fs: float, n_harmonics: int) -> np.ndarray:
    """Noise magnitude density of one frame, on the rfft grid of the frame length.

    A weighted least-squares harmonic fit (plus DC) is removed; the residual
    periodogram is corrected for the fitted degrees of freedom and smoothed over
    one-f0-wide bands.  Values are per-sample RMS densities.
    """
    n = seg.size
    w = get_window("hann", n, fftbins=False)
    t = np.arange(n) / fs
    k = np.arange(1, n_harmonics + 1)
    freqs = k[k * f0 < fs / 2] * f0
    basis = np.hstack([np.cos(2 * np.pi * np.outer(t, freqs)), np.sin(2 * np.pi * np.outer(t, freqs)), np.ones((n, 1))])
    coef, *_ = np.linalg.lstsq(basis * w[:, None], seg * w, rcond=None)
    resid = seg - basis @ coef
    dof = max(n - basis.shape[1], 1)
    power = np.abs(np.fft.rfft(resid * w)) ** 2 / np.sum(w**2) * n / dof
    width = max(1, int(round(f0 * n / fs)))
    smooth = np.convolve(power, np.ones(width) / width, mode="same")
    return np.sqrt(smooth)


def fit_harmonic_amplitudes(reference: AudioSignal, pitch: PitchTrajectory, n_harmonics: int = 40,
                            hop: float = FRAME_HOP, nfft: int = 4096, noise: bool = True) -> HarmonicFrameEnvelope:
    """Sample the reference spectrum at the harmonics of f0, frame by frame.

    Harmonic amplitudes are rescaled so that each frame's total power
    (harmonics plus the fitted noise, if any) equals the reference frame power.
    With ``noise`` the envelope also carries a filtered-noise branch estimated
    from the residual of a per-frame harmonic fit.
    """
    x = reference.samples
    if reference.rms() < 1e-9:
        raise SilenceError("reference is silent")
    fs = reference.fs
    nhop = int(round(hop * fs))
    nwin = 2 * nhop
    w = get_window("blackmanharris", nwin, fftbins=False)
    if x.size < nwin:
        x = np.pad(x, (0, nwin - x.size))
    n_frames = int(np.ceil(reference.samples.size / nhop)) + 1
    k = np.arange(1, n_harmonics + 1)
    frames = np.zeros((n_frames, n_harmonics))
    noise_frames = np.zeros((n_frames, nwin // 2 + 1)) if noise else None
    for j in range(n_frames):
        # edge frames are analysed on the nearest window lying fully inside the signal
        start = min(max(j * nhop - nwin // 2, 0), x.size - nwin)
        seg = x[start : start + nwin]
        frame_power = np.mean(seg**2)
        if np.sqrt(frame_power) < SILENT_FRAME_RMS:
            continue
        f0 = float(pitch.at(j * hop))
        freqs = k * f0
        spec = np.abs(np.fft.rfft(seg * w, nfft))
        bins = np.clip(np.rint(freqs * nfft / fs).astype(int), 0, nfft // 2)
        amp = 2.0 * spec[bins] / w.sum()
        amp[freqs >= fs / 2] = 0.0
        amp[amp < amp.max() * GATE] = 0.0
        harmonic_power = frame_power
        if noise:
            dens = _noise_density(seg, f0, fs, n_harmonics)
            dens[np.fft.rfftfreq(nwin, 1.0 / fs) > n_harmonics * f0 + f0] = 0.0
            noise_power = _band_power(dens)
            if noise_power >= frame_power:
                dens *= np.sqrt(frame_power / noise_power)
                noise_power = frame_power
            noise_frames[j] = dens
            harmonic_power = frame_power - noise_power
        power = 0.5 * np.sum(amp**2)
        if power > 0:
            frames[j] = amp * np.sqrt(harmonic_power / power)
    return HarmonicFrameEnvelope(frames, hop, n_harmonics, noise_frames)


def _band_power(dens: np.ndarray) -> float:
    """Mean power of white noise shaped by the rfft-grid magnitude ``dens``."""
    n = 2 * (dens.size - 1)
    weights = np.full(dens.size, 2.0)
    weights[0] = weights[-1] = 1.0
    return float(np.sum(weights * dens**2) / n)


def render_noise(env: HarmonicFrameEnvelope, n: int, fs: float, seed: int = 0) -> np.ndarray:
    """Overlap-add of spectrally shaped white-noise frames (sqrt-hann, 50% overlap)."""
    if env.noise is None or n == 0:
        return np.zeros(n)
    nwin = 2 * (env.noise.shape[1] - 1)
    nhop = nwin // 2
    rng = np.random.default_rng(seed)
    w = np.sqrt(get_window("hann", nwin, fftbins=True))
    out = np.zeros(n + 2 * nwin)
    for j, dens in enumerate(env.noise):
        white = rng.standard_normal(nwin)
        if not np.any(dens):
            continue
        shaped = np.fft.irfft(np.fft.rfft(white) * dens, nwin)
        # frame j is centered at j*hop; offset by nwin keeps indices non-negative
        pos = nwin + j * nhop - nwin // 2
        out[pos : pos + nwin] += shaped * w
    return out[nwin : nwin + n]


def render_additive(pitch: PitchTrajectory, env: HarmonicFrameEnvelope, fs: float = 16000.0,
                    duration: float | None = None, seed: int = 0) -> AudioSignal:
    """Sum of harmonics with per-sample accumulated phase and linearly interpolated amplitudes.

    The filtered-noise branch is added when the envelope carries noise densities.
    """
    duration = env.duration if duration is None else duration
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    f0 = pitch.at(t)
    phase = np.concatenate(([0.0], np.cumsum(f0[:-1]) / fs)) if n else np.zeros(0)
    frame_t = np.arange(env.frames.shape[0]) * env.hop
    y = np.zeros(n)
    for k in range(1, env.n_harmonics + 1):
        col = env.frames[:, k - 1]
        if not np.any(col):
            continue
        amp = np.interp(t, frame_t, col)
        amp[k * f0 >= fs / 2] = 0.0
        # wrap before scaling by 2*pi to keep the argument small
        y += amp * np.sin(2.0 * np.pi * np.mod(k * phase, 1.0))
    return AudioSignal(y + render_noise(env, n, fs, seed), fs)


def _noise_path(path: Path) -> Path:
    return path.with_name(path.stem + "_noise" + path.suffix)


def save_envelope(path: str | Path, env: HarmonicFrameEnvelope) -> None:
    """Harmonic matrix as CSV; noise densities, if any, go to a sibling ``*_noise`` CSV."""
    path = Path(path)
    header = f"hop={env.hop!r},n_harmonics={env.n_harmonics}"
    np.savetxt(path, env.frames, delimiter=",", fmt="%.10g", header=header)
    if env.noise is not None:
        np.savetxt(_noise_path(path), env.noise, delimiter=",", fmt="%.10g")


def load_envelope(path: str | Path) -> HarmonicFrameEnvelope:
    path = Path(path)
    with open(path) as fh:
        head = fh.readline().lstrip("#").strip()
    meta = dict(item.split("=") for item in head.split(","))
    frames = np.loadtxt(path, delimiter=",", ndmin=2)
    npath = _noise_path(path)
    noise = np.loadtxt(npath, delimiter=",", ndmin=2) if npath.is_file() else None
    return HarmonicFrameEnvelope(frames, float(meta["hop"]), int(meta["n_harmonics"]), noise)
