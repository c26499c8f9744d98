"""Experiment harness: inversion, post-rendering, evaluation and robustness sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .acoustics import AudioSignal
from .config import RunConfig
from .ddsp import fit_harmonic_amplitudes, render_additive
from .errors import ConfigError, EstimationError, SilenceError, UnvoicedError
from .glottal import PitchTrajectory, pitch_shift
from .inverse import FitResult, InverseProblem, PriorConfig, Weights, estimate
from .io import TractEstimate
from .metrics import formant_mae, formants_lpc, hnr_framewise, lsd, multires_stft_error, prepare_pair
from .render import render_config

AXES = ("grid_cfl", "source", "pitch", "zeta")


def f0_search_range(pitch: PitchTrajectory) -> tuple[float, float]:
    lo, hi = pitch.f0_range
    return 0.8 * lo, 1.25 * hi


def safe_hnr(audio: AudioSignal, f0_range) -> float:
    try:
        return hnr_framewise(audio, f0_range)
    except UnvoicedError:
        return math.nan


def evaluate_pair(ref: AudioSignal, cand: AudioSignal, f0_range=(60.0, 600.0),
                  cand_f0_range=None) -> dict:
    """Align, RMS-normalize and compute mSTFT, LSD, formant MAE and HNR for both signals."""
    a, b, lag = prepare_pair(ref, cand)
    out = {"lag": float(lag), "mstft": multires_stft_error(a, b), "lsd": lsd(a, b)}
    try:
        out["formant_mae"] = formant_mae(formants_lpc(a), formants_lpc(b))
    except EstimationError:
        out["formant_mae"] = math.nan
    out["hnr_ref"] = safe_hnr(ref, f0_range)
    out["hnr_cand"] = safe_hnr(cand, f0_range if cand_f0_range is None else cand_f0_range)
    out["delta_hnr"] = out["hnr_cand"] - out["hnr_ref"]
    return out


# ---------------------------------------------------------------- inversion

def build_problem(reference: AudioSignal, pitch: PitchTrajectory, cfg: RunConfig) -> InverseProblem:
    inv = cfg.inverse
    prior = PriorConfig(a_min=inv.a_min, a_max=inv.a_max, curvature_weight=inv.w_curvature,
                        bounds_weight=inv.w_bounds, zeta_range=(inv.zeta_min, inv.zeta_max))
    weights = Weights(mstft=inv.w_mstft, logmel=inv.w_logmel, probe=inv.w_probe)
    return InverseProblem(reference, pitch, cfg.rosenberg(), consts=cfg.constants(), grid=cfg.grid_spec(),
                          bc_template=cfg.boundary_params(), duration=reference.duration, seed=cfg.seed,
                          n_control=inv.n_control, prior=prior, weights=weights, smooth=cfg.grid.smooth)


def fit(reference: AudioSignal, pitch: PitchTrajectory, cfg: RunConfig) -> FitResult:
    inv = cfg.inverse
    problem = build_problem(reference, pitch, cfg)
    return estimate(problem, max_evals=inv.max_evals, method=inv.method, restarts=inv.restarts,
                    init_step=inv.init_step, seed=cfg.seed)


def to_estimate(result: FitResult, cfg: RunConfig, vowel: str = "") -> TractEstimate:
    meta = {"vowel": vowel or cfg.voice.vowel, "config_hash": cfg.digest(), "seed": cfg.seed,
            "loss": repr(float(result.loss_trace[-1])) if result.loss_trace.size else "nan",
            "n_evals": result.n_evals, "converged": result.converged}
    return TractEstimate(result.area, result.zeta, meta)


# ---------------------------------------------------------------- post-render

def postrender(est: TractEstimate, cfg: RunConfig, pitch: PitchTrajectory | None = None,
               pitch_ratio: float = 1.0, zeta_scale: float = 1.0) -> AudioSignal:
    """Re-render exported controls under the (possibly modified) settings in ``cfg``."""
    if pitch is None:
        pitch = PitchTrajectory.constant(cfg.f0, cfg.voice.duration)
    if pitch_ratio != 1.0:
        pitch = pitch_shift(pitch, pitch_ratio)
    area = type(est.area)(est.area.samples, cfg.physics.length)
    return render_config(cfg, area=area, zeta=est.zeta * zeta_scale, pitch=pitch)


def ddsp_baseline(reference: AudioSignal, pitch: PitchTrajectory, n_harmonics: int = 40, seed: int = 0):
    env = fit_harmonic_amplitudes(reference, pitch, n_harmonics)
    return render_additive(pitch, env, reference.fs, reference.duration, seed=seed), env


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepSpec:
    axis: str
    values: list
    baseline_index: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not 0 <= self.baseline_index < len(self.values):
            raise ConfigError(f"baseline_index {self.baseline_index} out of range for {len(self.values)} values")
        self.values = [str(v).strip() for v in self.values]

    @classmethod
    def parse(cls, axis: str, values: str, baseline_index: int = 0) -> "SweepSpec":
        sep = "|" if "|" in values else ","
        return cls(axis, [v for v in values.split(sep) if v.strip() or sep == "|"], baseline_index)


def default_sweep(axis: str, cfg: RunConfig) -> SweepSpec:
    nx = cfg.grid.nx
    table = {
        "grid_cfl": [str(nx), str(2 * nx - 1), f"{nx}:0.8"],
        "source": ["base", "beta=20", "oq=0.5;cq=0.3", "oq=0.7;cq=0.5"],
        "pitch": ["1.0", "0.9", "1.1"],
        "zeta": ["1.0", "0.9", "1.1"],
    }
    if axis not in table:
        raise ConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
    return SweepSpec(axis, table[axis], 0)


def hold_courant(cfg: RunConfig, nx: int) -> RunConfig:
    """Regrid to ``nx`` with the time step rescaled so the Courant number is unchanged.

    Exact when (nx - 1) / (nx0 - 1) times the current decimation is an integer
    (e.g. nx0 -> 2*nx0 - 1); otherwise the next larger decimation keeps CFL.
    """
    m0 = cfg.grid_spec().decimation
    m = m0 * (nx - 1) / (cfg.grid.nx - 1)
    m = int(round(m)) if abs(m - round(m)) < 1e-9 else math.ceil(m)
    return cfg.replace(grid={"nx": nx, "decimation": max(m, 1)})


def apply_condition(cfg: RunConfig, axis: str, value: str) -> tuple[RunConfig, float, float]:
    """Return (config, pitch_ratio, zeta_scale) for one sweep condition."""
    try:
        if axis == "grid_cfl":
            nx, _, cfl = value.partition(":")
            if cfl:
                return cfg.replace(grid={"nx": int(nx), "courant_max": float(cfl), "decimation": 0}), 1.0, 1.0
            return hold_courant(cfg, int(nx)), 1.0, 1.0
        if axis == "pitch":
            return cfg, float(value), 1.0
        if axis == "zeta":
            return cfg, 1.0, float(value)
        if axis == "source":
            out = cfg.replace()
            if value in ("", "base"):
                return out, 1.0, 1.0
            for item in value.replace("+", ";").split(";"):
                key, _, raw = item.partition("=")
                key = key.strip()
                if key == "beta":
                    out.boundary.beta = float(raw)
                elif key in ("oq", "cq", "aspiration", "amplitude"):
                    setattr(out.source, key, float(raw))
                else:
                    raise ConfigError(f"unknown source sweep key {key!r}")
            return out.validate(), 1.0, 1.0
    except ValueError as exc:
        raise ConfigError(f"bad {axis} sweep value {value!r}: {exc}") from exc
    raise ConfigError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepItem:
    vowel: str
    estimate: TractEstimate
    pitch: PitchTrajectory
    reference: AudioSignal | None = None


def _condition_metrics(args):
    item, cfg, axis, value = args
    c, ratio, zscale = apply_condition(cfg, axis, value)
    audio = postrender(item.estimate, c, item.pitch, ratio, zscale)
    f0r = f0_search_range(pitch_shift(item.pitch, ratio))
    return audio, safe_hnr(audio, f0r)


def run_sweep(items: list[SweepItem], spec: SweepSpec, cfg: RunConfig, jobs: int = 1):
    """Post-render every condition; deltas are against the baseline condition.

    LSD is measured against the item's reference when given, otherwise against
    the baseline render.  Returns (long-format rows, summary rows).
    """
    tasks = [(item, cfg, spec.axis, v) for item in items for v in spec.values]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_condition_metrics, tasks))
    else:
        results = [_condition_metrics(t) for t in tasks]

    rows, d_lsd, d_hnr = [], [], []
    nv = len(spec.values)
    for k, item in enumerate(items):
        block = results[k * nv : (k + 1) * nv]
        base_audio, base_hnr = block[spec.baseline_index]
        ref = item.reference if item.reference is not None else base_audio
        lsds = [_lsd_or_nan(ref, audio) for audio, _ in block]
        for j, (cond, (_, hnr)) in enumerate(zip(spec.values, block)):
            dl = abs(lsds[j] - lsds[spec.baseline_index])
            dh = abs(hnr - base_hnr)
            for metric, value in (("lsd", lsds[j]), ("hnr", hnr), ("abs_delta_lsd", dl), ("abs_delta_hnr", dh)):
                rows.append({"vowel": item.vowel, "axis": spec.axis, "condition": cond, "metric": metric, "value": value})
            if j != spec.baseline_index:
                d_lsd.append(dl)
                d_hnr.append(dh)
    summary = [
        {"vowel": "all", "axis": spec.axis, "condition": "median", "metric": "abs_delta_lsd", "value": _median(d_lsd)},
        {"vowel": "all", "axis": spec.axis, "condition": "median", "metric": "abs_delta_hnr", "value": _median(d_hnr)},
    ]
    return rows, summary


def _lsd_or_nan(ref: AudioSignal, audio: AudioSignal) -> float:
    try:
        a, b, _ = prepare_pair(ref, audio)
    except SilenceError:
        return math.nan
    return lsd(a, b)


def _median(v) -> float:
    """Median of the deltas, or 0 when the sweep has no non-baseline condition."""
    v = [x for x in v if not math.isnan(x)]
    return float(np.median(v)) if v else 0.0
