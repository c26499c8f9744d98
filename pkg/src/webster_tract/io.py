"""File formats: 16-bit WAV, two-column pitch text, parameter files, long-format CSV."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .acoustics import AreaFunction, AudioSignal
from .errors import ConfigError, SampleRateError
from .glottal import PitchTrajectory

PCM_SCALE = 32767.0
PEAK_DBFS = -1.0
CSV_FIELDS = ("vowel", "axis", "condition", "metric", "value")


def write_wav(path: str | Path, audio: AudioSignal, normalize: bool = True) -> np.ndarray:
    """Write 16-bit PCM; with ``normalize`` the peak sits at -1 dBFS.  Returns the written integers."""
    x = audio.samples
    if normalize:
        peak = np.max(np.abs(x)) if x.size else 0.0
        if peak > 0:
            x = x * (10 ** (PEAK_DBFS / 20) / peak)
    pcm = np.clip(np.rint(x * PCM_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), int(round(audio.fs)), pcm)
    return pcm


def read_wav(path: str | Path, expect_fs: float | None = None) -> AudioSignal:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"audio file not found: {path}")
    fs, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        x = data.astype(float) / PCM_SCALE
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483647.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 127.0
    else:
        x = data.astype(float)
    if expect_fs is not None and fs != expect_fs:
        raise SampleRateError(f"{path} has sample rate {fs} Hz, expected {expect_fs:g} Hz (no implicit resampling)")
    return AudioSignal(x, float(fs))


def write_pitch(path: str | Path, pitch: PitchTrajectory) -> None:
    lines = ["# t_s f0_hz"] + [f"{t:.6f} {f:.6f}" for t, f in zip(pitch.times, pitch.f0)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pitch(path: str | Path) -> PitchTrajectory:
    """Two-column (t, f0) text.  Non-uniform or offset times are resampled onto a uniform grid from t=0."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"pitch file not found: {path}")
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] < 2 or data.shape[0] < 1:
        raise ConfigError(f"pitch file {path} needs two columns (t, f0)")
    t, f0 = data[:, 0], data[:, 1]
    if t.size == 1:
        return PitchTrajectory(np.repeat(f0, 2), 100.0)
    dt = float(np.median(np.diff(t)))
    if dt <= 0:
        raise ConfigError(f"pitch file {path}: times must increase")
    uniform = np.allclose(np.diff(t), dt, rtol=1e-6, atol=1e-9) and abs(t[0]) < 1e-9
    if uniform:
        return PitchTrajectory(f0, 1.0 / dt)
    grid = np.arange(0.0, t[-1] + dt / 2, dt)
    return PitchTrajectory(np.interp(grid, t, f0), 1.0 / dt)


@dataclass
class TractEstimate:
    """Exported controls: area table, radiation coefficient and provenance."""

    area: AreaFunction
    zeta: float
    meta: dict = field(default_factory=dict)


def write_params(path: str | Path, est: TractEstimate) -> None:
    head = ["webster-tract parameters", f"zeta = {float(est.zeta)!r}", f"length = {float(est.area.length)!r}"]
    head += [f"{k} = {v}" for k, v in est.meta.items() if k not in ("zeta", "length")]
    lines = [f"# {h}" for h in head] + ["# x_m area"]
    lines += [f"{x:.8f} {float(a)!r}" for x, a in zip(est.area.x, est.area.samples)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_params(path: str | Path) -> TractEstimate:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"parameter file not found: {path}")
    meta = {}
    for line in path.read_text().splitlines():
        if line.startswith("#") and "=" in line:
            k, v = line[1:].split("=", 1)
            meta[k.strip()] = v.strip()
    if "zeta" not in meta:
        raise ConfigError(f"{path}: missing '# zeta = ...' header")
    data = np.loadtxt(path, ndmin=2)
    length = float(meta.pop("length", data[-1, 0]))
    zeta = float(meta.pop("zeta"))
    return TractEstimate(AreaFunction(data[:, 1], length), zeta, meta)


def write_rows(path: str | Path, rows, fields=CSV_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in fields})


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else "nan"
    return v


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
