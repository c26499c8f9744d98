"""Rosenberg glottal-flow excitation driven by a pitch trajectory."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .errors import DomainError

VOWEL_F0 = {"a": 200.0, "i": 240.0, "u": 180.0}


@dataclass(frozen=True)
class PitchTrajectory:
    """f0 samples (Hz) on a uniform time grid at ``rate`` samples/s."""

    f0: np.ndarray
    rate: float

    def __post_init__(self):
        f0 = np.atleast_1d(np.asarray(self.f0, dtype=float))
        if f0.size == 0 or not np.all(np.isfinite(f0)) or np.any(f0 <= 0):
            raise DomainError("f0 samples must be finite and positive")
        if not self.rate > 0:
            raise DomainError(f"trajectory rate must be positive, got {self.rate}")
        object.__setattr__(self, "f0", f0)

    @classmethod
    def constant(cls, f0: float, duration: float, rate: float = 100.0) -> "PitchTrajectory":
        n = max(2, int(round(duration * rate)) + 1)
        return cls(np.full(n, float(f0)), rate)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.f0.size) / self.rate

    def at(self, t: np.ndarray) -> np.ndarray:
        """f0 at arbitrary times; linear interpolation, held constant past the ends."""
        return np.interp(t, self.times, self.f0)

    @property
    def f0_range(self) -> tuple[float, float]:
        return float(self.f0.min()), float(self.f0.max())


@dataclass(frozen=True)
class RosenbergParams:
    oq: float = 0.6
    cq: float = 0.4
    amplitude: float = 1.0
    aspiration: float = 0.02

    def __post_init__(self):
        if not 0 < self.oq < 1:
            raise DomainError(f"open quotient must be in (0, 1), got {self.oq}")
        if not 0 < self.cq < 1:
            raise DomainError(f"closing quotient must be in (0, 1), got {self.cq}")
        if not self.amplitude > 0:
            raise DomainError("amplitude must be positive")
        if not self.aspiration >= 0:
            raise DomainError("aspiration must be >= 0")


def _pulse(phase: np.ndarray, p: RosenbergParams) -> np.ndarray:
    rise = p.oq * (1.0 - p.cq)
    fall = p.oq * p.cq
    out = np.zeros_like(phase)
    up = phase < rise
    down = (phase >= rise) & (phase < p.oq)
    out[up] = 0.5 * (1.0 - np.cos(np.pi * phase[up] / rise))
    out[down] = np.cos(np.pi * (phase[down] - rise) / (2.0 * fall))
    return p.amplitude * out


def rosenberg_pulse(phase, p: RosenbergParams):
    """Flow at normalized phase(s) in [0, 1): cosine rise, quarter-cosine fall, then closed."""
    ph = np.asarray(phase, dtype=float)
    if np.any(ph < 0) or np.any(ph >= 1) or not np.all(np.isfinite(ph)):
        raise DomainError("phase must lie in [0, 1)")
    out = _pulse(np.atleast_1d(ph), p)
    return float(out[0]) if ph.ndim == 0 else out


def accumulate_phase(f0: np.ndarray, rate: float) -> np.ndarray:
    """Phase at each sample, starting from 0: phi[n+1] = frac(phi[n] + f0[n]/rate)."""
    inc = np.asarray(f0, dtype=float) / rate
    phase = np.empty_like(inc)
    acc = 0.0
    # sequential wrap keeps phase exact over long signals
    for n in range(inc.size):
        phase[n] = acc
        acc += inc[n]
        acc -= np.floor(acc)
    return phase


def synthesize_glottal_flow(
    pitch: PitchTrajectory,
    p: RosenbergParams,
    rate: float,
    duration: float,
    seed: int = 0,
) -> np.ndarray:
    """Rosenberg pulse train plus uniform aspiration noise (RMS = aspiration * pulse RMS)."""
    if not duration > 0:
        raise DomainError(f"duration must be positive, got {duration}")
    n = int(round(duration * rate))
    f0 = pitch.at(np.arange(n) / rate)
    flow = _pulse(accumulate_phase(f0, rate), p)
    if p.aspiration > 0:
        rng = np.random.default_rng(seed)
        noise = rng.uniform(-1.0, 1.0, n)
        pulse_rms = np.sqrt(np.mean(flow**2))
        noise *= p.aspiration * pulse_rms / np.sqrt(np.mean(noise**2))
        flow = flow + noise
    return flow


def upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Band-limited interpolation onto a grid ``factor`` times finer.

    A polyphase FIR keeps images of the audio-rate signal out of the solver,
    so nothing above the output Nyquist frequency is excited.
    """
    x = np.asarray(x, dtype=float)
    if factor == 1:
        return x.copy()
    return resample_poly(x, factor, 1)


def pitch_shift(pitch: PitchTrajectory, ratio: float) -> PitchTrajectory:
    if not ratio > 0:
        raise DomainError(f"pitch ratio must be positive, got {ratio}")
    return PitchTrajectory(pitch.f0 * ratio, pitch.rate)
