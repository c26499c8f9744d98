"""Source -> tract -> lips rendering shared by the harness and the inverse solver."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .acoustics import AreaFunction, AudioSignal, BoundaryParams, GridSpec, PhysicalConstants, simulate
from .errors import ConfigError
from .glottal import VOWEL_F0, PitchTrajectory, RosenbergParams, synthesize_glottal_flow, upsample

DC_POLE = 0.995


def load_area_table(path: str | Path, length: float | None = None) -> AreaFunction:
    """Two-column (x, A) text; x must be uniformly spaced from 0."""
    try:
        data = np.loadtxt(path, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read area table {path}: {exc}") from exc
    if data.shape[1] < 2 or data.shape[0] < 2:
        raise ConfigError(f"area table {path} needs two columns and at least two rows")
    x, a = data[:, 0], data[:, 1]
    if not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-4, atol=1e-9) or abs(x[0]) > 1e-12:
        raise ConfigError(f"area table {path}: x must start at 0 and be uniformly spaced")
    return AreaFunction(a, float(x[-1]) if length is None else length)


def save_area_table(path: str | Path, area: AreaFunction, header: str = "") -> None:
    lines = [f"# {h}" for h in header.splitlines()] + ["# x_m area"]
    lines += [f"{x:.6f} {a:.10g}" for x, a in zip(area.x, area.samples)]
    Path(path).write_text("\n".join(lines) + "\n")


def vowel_area(vowel: str, length: float = 0.17) -> AreaFunction:
    if vowel not in VOWEL_F0:
        raise ConfigError(f"no preset for vowel {vowel!r}; choose from {sorted(VOWEL_F0)}")
    ref = resources.files("webster_tract") / "data" / f"vowel_{vowel}.txt"
    with resources.as_file(ref) as p:
        return load_area_table(p, length=length)


@dataclass(frozen=True)
class VowelPreset:
    name: str
    f0_anchor: float
    area: AreaFunction
    duration: float = 0.8

    @classmethod
    def load(cls, name: str, length: float = 0.17, duration: float = 0.8) -> "VowelPreset":
        area = vowel_area(name, length)
        return cls(name, VOWEL_F0[name], area, duration)

    def pitch(self) -> PitchTrajectory:
        return PitchTrajectory.constant(self.f0_anchor, self.duration)


def glottal_for_grid(pitch: PitchTrajectory, source: RosenbergParams, grid: GridSpec,
                     duration: float, seed: int) -> np.ndarray:
    """Glottal flow synthesized at the audio rate, then band-limited upsampled to the solver rate.

    Synthesizing at the audio rate keeps the pulse train and the noise
    realization identical across grid resolutions.
    """
    flow = synthesize_glottal_flow(pitch, source, grid.fs, duration, seed)
    return upsample(flow, grid.decimation)


def dc_block(x: np.ndarray, pole: float = DC_POLE) -> np.ndarray:
    """First-order DC blocker y[n] = x[n] - x[n-1] + pole*y[n-1]."""
    return lfilter([1.0, -1.0], [1.0, -pole], x)


def render(area: AreaFunction, bc: BoundaryParams, consts: PhysicalConstants, grid: GridSpec,
           pitch: PitchTrajectory, source: RosenbergParams, duration: float, seed: int = 0,
           smooth: bool = True, ug: np.ndarray | None = None) -> AudioSignal:
    """Render a sustained voiced sound: lip pressure with its DC component removed."""
    if ug is None:
        ug = glottal_for_grid(pitch, source, grid, duration, seed)
    out = simulate(area, bc, consts, grid, ug, smooth=smooth)
    return AudioSignal(dc_block(out.samples), out.fs)


def render_config(cfg, area: AreaFunction | None = None, zeta: float | None = None,
                  pitch: PitchTrajectory | None = None) -> AudioSignal:
    """Render using every physical setting in a :class:`RunConfig`."""
    if area is None:
        area = preset_or_file_area(cfg)
    if pitch is None:
        pitch = PitchTrajectory.constant(cfg.f0, cfg.voice.duration)
    return render(area, cfg.boundary_params(zeta), cfg.constants(), cfg.grid_spec(), pitch,
                  cfg.rosenberg(), cfg.voice.duration, cfg.seed, smooth=cfg.grid.smooth)


def preset_or_file_area(cfg) -> AreaFunction:
    if cfg.voice.area_file:
        return load_area_table(cfg.voice.area_file, length=cfg.physics.length)
    return vowel_area(cfg.voice.vowel, cfg.physics.length)
