"""Analysis-by-synthesis recovery of the area function and radiation coefficient.

Candidates are rendered with the forward FDTD solver and scored against the
reference with envelope losses, a formant probe and geometric priors.  The
search is derivative-free (CMA-ES, or Nelder-Mead with restarts); positivity
of A and the zeta range hold by parameterization, never by rejection.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .acoustics import AreaFunction, AudioSignal, NumericalBlowup, StabilityError, check_cfl, simulate
from .errors import ConvergenceWarning, EstimationError, SilenceError
from .glottal import PitchTrajectory, RosenbergParams
from .metrics import (align_xcorr, apply_lag, formant_mae, formants_lpc, log_mel_envelope_distance,
                      lsd, multires_stft_error, rms_normalize)
from .render import dc_block, glottal_for_grid

log = logging.getLogger(__name__)

PENALTY = 1e6
_SOFTPLUS_SHIFT = math.log(math.e - 1.0)  # softplus(shift) == 1


@dataclass(frozen=True)
class PriorConfig:
    a_min: float = 0.1
    a_max: float = 4.0
    anchor_weight: float = 0.0  # endpoints are hard-anchored by decode_area
    curvature_weight: float = 1e-5
    bounds_weight: float = 1.0
    zeta_range: tuple[float, float] = (0.01, 0.25)

    def __post_init__(self):
        if not 0 < self.a_min < self.a_max:
            raise ValueError("need 0 < a_min < a_max")
        if min(self.anchor_weight, self.curvature_weight, self.bounds_weight) < 0:
            raise ValueError("prior weights must be >= 0")
        lo, hi = self.zeta_range
        if not 0 <= lo < hi:
            raise ValueError("need 0 <= zeta_min < zeta_max")


@dataclass
class TractParams:
    theta: np.ndarray
    zeta_raw: float = 0.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.size < 4:
            raise ValueError("need at least 4 control points")

    @classmethod
    def initial(cls, n_control: int = 8) -> "TractParams":
        return cls(np.zeros(n_control), 0.0)

    def to_vector(self) -> np.ndarray:
        """Free coordinates: interior control points and zeta_raw (endpoints are anchored)."""
        return np.append(self.theta[1:-1], self.zeta_raw)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "TractParams":
        v = np.asarray(v, dtype=float)
        return cls(np.concatenate(([0.0], v[:-1], [0.0])), float(v[-1]))


@dataclass
class Weights:
    mstft: float = 1.0
    logmel: float = 1.0
    probe: float = 0.01  # applied to formant MAE in kHz
    prior: float = 1.0


@dataclass
class FitResult:
    area: AreaFunction  # control-point table, endpoints at 1
    zeta: float
    loss_trace: np.ndarray  # best loss so far, one entry per evaluation
    final_metrics: dict = field(default_factory=dict)
    params: TractParams | None = None
    n_evals: int = 0
    converged: bool = True


def _softplus(z):
    return np.logaddexp(0.0, z)


def control_areas(theta: np.ndarray) -> np.ndarray:
    """Control-point areas: theta = 0 maps to 1, endpoints pinned to exactly 1."""
    a = _softplus(np.asarray(theta, dtype=float) + _SOFTPLUS_SHIFT)
    # softplus underflows to 0 for theta below about -745; keep strictly positive
    a = np.maximum(a, np.finfo(float).tiny)
    a[0] = a[-1] = 1.0
    return a


def decode_area(theta: np.ndarray, n_control: int, nx: int, prior: PriorConfig | None = None,
                length: float = 0.17) -> AreaFunction:
    theta = np.asarray(theta, dtype=float)
    if theta.size != n_control:
        raise ValueError(f"expected {n_control} control values, got {theta.size}")
    ctrl = control_areas(theta)
    grid = np.interp(np.linspace(0, 1, nx), np.linspace(0, 1, n_control), ctrl)
    grid[0] = grid[-1] = 1.0
    return AreaFunction(grid, length)


def decode_zeta(zeta_raw: float, zeta_range: tuple[float, float] = (0.01, 0.25)) -> float:
    lo, hi = zeta_range
    # numerically stable logistic
    if zeta_raw >= 0:
        s = 1.0 / (1.0 + math.exp(-zeta_raw))
    else:
        e = math.exp(zeta_raw)
        s = e / (1.0 + e)
    return lo + (hi - lo) * s


def prior_loss(area: AreaFunction, prior: PriorConfig) -> float:
    """Curvature penalty mean((d2A/dx2)^2) plus quadratic hinge outside [a_min, a_max].

    Derivatives are taken in the coordinate of ``area.x``; pass an area with
    ``length=1`` for normalized-coordinate curvature.
    """
    a = area.samples
    dx = area.length / (a.size - 1)
    curv = 0.0
    if a.size >= 3:
        curv = float(np.mean((np.diff(a, 2) / dx**2) ** 2))
    below = np.maximum(prior.a_min - a, 0.0)
    above = np.maximum(a - prior.a_max, 0.0)
    bounds = float(np.mean(below**2 + above**2))
    anchor = 0.5 * ((a[0] - 1.0) ** 2 + (a[-1] - 1.0) ** 2)
    return prior.curvature_weight * curv + prior.bounds_weight * bounds + prior.anchor_weight * anchor


class InverseProblem:
    """Fixed context for scoring candidates against one reference.

    The glottal excitation is synthesized once (source settings are not
    estimated) and shared by every candidate.
    """

    def __init__(self, reference: AudioSignal, pitch: PitchTrajectory, source: RosenbergParams, *,
                 consts, grid, bc_template, duration: float | None = None, seed: int = 0,
                 n_control: int = 8, prior: PriorConfig = PriorConfig(), weights: Weights = Weights(),
                 smooth: bool = True, max_lag: int | None = None):
        self.reference = AudioSignal(rms_normalize(reference.samples), reference.fs)
        self.pitch, self.source = pitch, source
        self.consts, self.grid, self.bc_template = consts, grid, bc_template
        self.duration = reference.duration if duration is None else duration
        self.seed, self.n_control = seed, n_control
        self.prior, self.weights, self.smooth = prior, weights, smooth
        self.max_lag = int(round(0.05 * reference.fs)) if max_lag is None else max_lag
        self.ug = glottal_for_grid(pitch, source, grid, self.duration, seed)
        try:
            self.ref_formants = formants_lpc(self.reference)
        except EstimationError:
            self.ref_formants = None
        self.n_evals = 0

    def decode(self, params: TractParams) -> tuple[AreaFunction, float]:
        area = decode_area(params.theta, self.n_control, self.grid.nx, self.prior, self.grid.length)
        return area, decode_zeta(params.zeta_raw, self.prior.zeta_range)

    def render(self, params: TractParams) -> AudioSignal:
        area, zeta = self.decode(params)
        bc = type(self.bc_template)(zeta=zeta, alpha=self.bc_template.alpha, beta=self.bc_template.beta)
        out = simulate(area, bc, self.consts, self.grid, self.ug, smooth=self.smooth)
        return AudioSignal(dc_block(out.samples), out.fs)

    def terms(self, params: TractParams) -> dict:
        """Individual loss terms for a candidate (raises on unstable or silent renders)."""
        w = self.weights
        cand = self.render(params)
        lag = align_xcorr(self.reference, cand, self.max_lag)
        a, b = apply_lag(self.reference.samples, cand.samples, lag)
        ref, est = AudioSignal(a, cand.fs), AudioSignal(rms_normalize(b), cand.fs)
        out = {"lag": lag}
        out["mstft"] = multires_stft_error(ref, est) if w.mstft else 0.0
        out["logmel"] = log_mel_envelope_distance(ref, est) if w.logmel else 0.0
        out["probe"] = 0.0
        if w.probe and self.ref_formants is not None:
            try:
                out["probe"] = formant_mae(self.ref_formants, formants_lpc(est)) / 1000.0
            except EstimationError:
                out["probe"] = 1.0
        ctrl = AreaFunction(control_areas(params.theta), 1.0)
        out["prior"] = prior_loss(ctrl, self.prior) if w.prior else 0.0
        out["total"] = w.mstft * out["mstft"] + w.logmel * out["logmel"] + w.probe * out["probe"] + w.prior * out["prior"]
        return out

    def __call__(self, params: TractParams) -> float:
        self.n_evals += 1
        try:
            value = self.terms(params)["total"]
        except (StabilityError, NumericalBlowup, SilenceError, FloatingPointError, ValueError):
            return PENALTY
        return float(value) if math.isfinite(value) else PENALTY


def objective(params: TractParams, reference: AudioSignal, pitch: PitchTrajectory, source: RosenbergParams,
              weights: Weights, **context) -> float:
    """Weighted loss for one candidate; unstable candidates score exactly ``PENALTY``."""
    try:
        check_cfl(context["grid"], context["consts"])
    except StabilityError:
        return PENALTY
    return InverseProblem(reference, pitch, source, weights=weights, **context)(params)


class _Budget(Exception):
    pass


def estimate(problem: InverseProblem, max_evals: int = 2000, method: str = "cma", restarts: int = 6,
             init_step: float = 0.8, seed: int = 0, x0: TractParams | None = None) -> FitResult:
    """Minimize the objective over (interior control points, zeta_raw).

    ``method`` is ``"cma"`` (CMA-ES) or ``"nelder-mead"`` (restarts with
    shrinking simplices).  The start point is evaluated first; the number of
    forward simulations never exceeds ``max_evals``.
    """
    start = x0 if x0 is not None else TractParams.initial(problem.n_control)
    trace: list[float] = []
    best = {"f": math.inf, "x": start.to_vector()}
    budget_hit = False

    def f(v):
        if len(trace) >= max_evals:
            raise _Budget
        val = problem(TractParams.from_vector(v))
        if val < best["f"]:
            best["f"], best["x"] = val, np.array(v, dtype=float)
        trace.append(best["f"])
        return val

    try:
        f(best["x"])
        if method == "cma":
            budget_hit = _run_cma(f, best["x"], init_step, max_evals, seed, trace)
        elif method in ("nelder-mead", "nm"):
            _run_nelder_mead(f, best, init_step, restarts, max_evals)
        else:
            raise ValueError(f"unknown optimizer {method!r}")
    except _Budget:
        budget_hit = True

    params = TractParams.from_vector(best["x"])
    area = AreaFunction(control_areas(params.theta), problem.grid.length)
    zeta = decode_zeta(params.zeta_raw, problem.prior.zeta_range)
    trace_arr = np.asarray(trace)
    converged = not (budget_hit or len(trace) >= max_evals) or _converged(trace_arr)
    if trace_arr.size < 5:
        converged = False
    if not converged:
        warnings.warn(f"loss improved < 1e-4 relative over the last 20% of {len(trace)} evaluations "
                      "or the budget was too small to judge", ConvergenceWarning, stacklevel=2)
    result = FitResult(area=area, zeta=zeta, loss_trace=trace_arr, params=params, n_evals=len(trace),
                       converged=converged)
    result.final_metrics = final_metrics(problem, params)
    return result


def _run_cma(f, x0, sigma0, max_evals, seed, trace) -> bool:
    """CMA-ES generations while a whole population still fits in the budget."""
    import cma

    es = cma.CMAEvolutionStrategy(x0, sigma0, {"seed": seed + 1, "verbose": -9, "tolfun": 1e-8,
                                               "tolx": 1e-6, "maxfevals": max_evals})
    while not es.stop():
        if len(trace) + es.popsize > max_evals:
            return True
        xs = es.ask()
        es.tell(xs, [f(x) for x in xs])
        log.debug("cma: %d evals, best %.6g", len(trace), trace[-1])
    return False


def _run_nelder_mead(f, best, init_step, restarts, max_evals):
    dim = best["x"].size
    step = init_step
    for r in range(max(1, restarts)):
        before = best["f"]
        x = best["x"]
        simplex = np.vstack([x, x + step * np.eye(dim)])
        minimize(f, x, method="Nelder-Mead",
                 options={"initial_simplex": simplex, "maxfev": max_evals, "xatol": 1e-4,
                          "fatol": 1e-6, "adaptive": True})
        log.debug("restart %d: best %.6g", r, best["f"])
        if r > 0 and before - best["f"] < 1e-4 * abs(before):
            break
        step *= 0.5


def _converged(trace: np.ndarray) -> bool:
    """False when the last 20% of the budget improved the best loss by less than 1e-4 relative.

    Traces shorter than 5 evaluations cannot be judged and count as unconverged.
    """
    n = trace.size
    if n < 5:
        return False
    window = max(1, int(math.ceil(0.2 * n)))
    before, after = trace[n - 1 - window], trace[-1]
    if before <= 0:
        return True
    improved = (before - after) / abs(before)
    # a tiny final loss means the fit is already exact
    return improved >= 1e-4 or after < 1e-6


def final_metrics(problem: InverseProblem, params: TractParams) -> dict:
    try:
        terms = problem.terms(params)
    except (StabilityError, NumericalBlowup, SilenceError, ValueError):
        return {"total": PENALTY}
    cand = problem.render(params)
    lag = align_xcorr(problem.reference, cand, problem.max_lag)
    a, b = apply_lag(problem.reference.samples, cand.samples, lag)
    terms["lsd"] = lsd(AudioSignal(a, cand.fs), AudioSignal(rms_normalize(b), cand.fs))
    return {k: float(v) for k, v in terms.items()}
