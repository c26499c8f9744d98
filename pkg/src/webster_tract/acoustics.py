"""Explicit FDTD solver for the time-domain Webster equation.

The field is the velocity potential psi on a uniform grid of ``nx`` nodes from
the glottis (node 0) to the lips (node ``nx-1``).  Pressure is ``-rho*dpsi/dt``
and volume velocity ``A*dpsi/dx``.  The glottis imposes a volume flow, the lips
a Robin radiation condition ``dpsi/dx + zeta*dpsi/dt = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.signal import lfilter

from .errors import DomainError, NumericalBlowup, StabilityError

BLOWUP_GUARD = 1e12


@dataclass(frozen=True)
class PhysicalConstants:
    rho: float = 1.2
    c: float = 343.0

    def __post_init__(self):
        if not (self.rho > 0 and self.c > 0):
            raise DomainError(f"rho and c must be positive, got rho={self.rho}, c={self.c}")


@dataclass(frozen=True)
class AreaFunction:
    """Cross-sectional area samples, uniformly spaced on [0, length]."""

    samples: np.ndarray
    length: float = 0.17

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise DomainError("area function needs at least two samples")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise DomainError("area samples must be finite and strictly positive")
        if not self.length > 0:
            raise DomainError(f"tract length must be positive, got {self.length}")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.samples.size)

    @classmethod
    def uniform(cls, n: int = 8, length: float = 0.17, value: float = 1.0) -> "AreaFunction":
        return cls(np.full(n, float(value)), length)


@dataclass(frozen=True)
class GridSpec:
    """Spatial/temporal grid.  ``dt`` must be an integer fraction of ``1/fs``."""

    nx: int
    dt: float
    fs: float = 16000.0
    length: float = 0.17

    def __post_init__(self):
        if self.nx < 3:
            raise DomainError(f"nx must be >= 3, got {self.nx}")
        if not (self.dt > 0 and self.fs > 0 and self.length > 0):
            raise DomainError("dt, fs and length must be positive")
        ratio = 1.0 / (self.fs * self.dt)
        if abs(ratio - round(ratio)) > 1e-6 * ratio or round(ratio) < 1:
            raise DomainError(
                f"solver rate 1/dt={1 / self.dt:.6g} Hz is not an integer multiple of fs={self.fs}"
            )

    @property
    def dx(self) -> float:
        return self.length / (self.nx - 1)

    @property
    def decimation(self) -> int:
        return int(round(1.0 / (self.fs * self.dt)))

    @classmethod
    def from_courant(
        cls,
        nx: int,
        fs: float = 16000.0,
        length: float = 0.17,
        c: float = 343.0,
        courant_max: float = 0.99,
    ) -> "GridSpec":
        """Smallest integer oversampling of ``fs`` whose Courant number is <= ``courant_max``."""
        if nx < 3:
            raise DomainError(f"nx must be >= 3, got {nx}")
        dx = length / (nx - 1)
        m = max(1, math.ceil(c / (fs * dx * courant_max) - 1e-12))
        return cls(nx=nx, dt=1.0 / (fs * m), fs=fs, length=length)


@dataclass(frozen=True)
class BoundaryParams:
    zeta: float = 0.06
    alpha: float = 343.0 * 1e-3
    beta: float = 0.0

    def __post_init__(self):
        if not self.zeta >= 0:
            raise DomainError(f"zeta must be >= 0, got {self.zeta}")
        if not math.isfinite(self.alpha):
            raise DomainError("alpha must be finite")
        if not self.beta >= 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")

    @classmethod
    def from_u_scale(cls, zeta: float, u_scale: float, beta: float = 0.0, c: float = 343.0):
        return cls(zeta=zeta, alpha=c * u_scale, beta=beta)


@dataclass
class FieldState:
    psi_prev: np.ndarray
    psi_curr: np.ndarray
    step: int = field(default=0)

    @classmethod
    def zeros(cls, nx: int) -> "FieldState":
        return cls(np.zeros(nx), np.zeros(nx))


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise DomainError("audio must be one-dimensional")
        if not self.fs > 0:
            raise DomainError(f"sample rate must be positive, got {self.fs}")
        if not np.all(np.isfinite(s)):
            raise DomainError("audio contains non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2))) if self.samples.size else 0.0


def check_cfl(grid: GridSpec, consts: PhysicalConstants) -> float:
    """Return the Courant number c*dt/dx; raise StabilityError above 1."""
    courant = consts.c * grid.dt / grid.dx
    # tolerance absorbs rounding when dt is set to exactly dx/c
    if courant > 1.0 + 1e-12:
        raise StabilityError(f"Courant number {courant:.4f} > 1 (nx={grid.nx}, dt={grid.dt:.3e})")
    return courant


def resample_area(a: AreaFunction, nx: int) -> np.ndarray:
    if nx < 3:
        raise DomainError(f"nx must be >= 3, got {nx}")
    src = np.linspace(0.0, 1.0, a.samples.size)
    out = np.interp(np.linspace(0.0, 1.0, nx), src, a.samples)
    out[0], out[-1] = a.samples[0], a.samples[-1]
    return out


def face_and_node_areas(area: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Face areas (arithmetic means of neighbours) and node areas (means of adjacent faces).

    Dividing by the face-averaged node area keeps every row of the discrete
    operator bounded by 4, so the scheme is stable for Courant <= 1 whatever
    the area profile.
    """
    faces = 0.5 * (area[1:] + area[:-1])
    nodes = np.empty_like(area)
    nodes[1:-1] = 0.5 * (faces[1:] + faces[:-1])
    nodes[0], nodes[-1] = area[0], area[-1]
    return faces, nodes


def webster_step(
    state: FieldState,
    area: np.ndarray,
    grid: GridSpec,
    bc: BoundaryParams,
    ug_now: float,
    consts: PhysicalConstants = PhysicalConstants(),
    guard: float = BLOWUP_GUARD,
) -> FieldState:
    """Advance the field by one time step (reference implementation, one step at a time)."""
    area = np.asarray(area, dtype=float)
    if np.any(area <= 0):
        raise DomainError("area must be strictly positive")
    lam2 = check_cfl(grid, consts) ** 2
    dt, dx = grid.dt, grid.dx
    faces, nodes = face_and_node_areas(area)
    p, q = state.psi_curr, state.psi_prev
    damp = 0.5 * bc.beta * dt

    new = np.empty_like(p)
    flux = faces * np.diff(p)
    new[1:-1] = (2.0 * p[1:-1] - (1.0 - damp) * q[1:-1] + lam2 * np.diff(flux) / nodes[1:-1]) / (1.0 + damp)
    new[0] = new[1] - dx * bc.alpha * ug_now / area[0]
    r = bc.zeta * dx / dt
    new[-1] = (new[-2] + r * p[-1]) / (1.0 + r)

    if not np.all(np.abs(new) <= guard):
        raise NumericalBlowup(f"|psi| exceeded {guard:g} at step {state.step + 1}")
    return FieldState(psi_prev=p.copy(), psi_curr=new, step=state.step + 1)


@numba.njit(cache=True)
def _run_kernel(faces, nodes, a0, lam2, damp, dx, alpha, r, ug, guard, psi_prev, psi_curr, out):
    nx = faces.size + 1
    inv = 1.0 / (1.0 + damp)
    keep = 1.0 - damp
    # per-node stencil weights, pre-divided by the node area and the damping factor
    cl = np.empty(nx)
    cr = np.empty(nx)
    cc = np.empty(nx)
    for i in range(1, nx - 1):
        cl[i] = lam2 * faces[i - 1] / nodes[i] * inv
        cr[i] = lam2 * faces[i] / nodes[i] * inv
        cc[i] = 2.0 * inv - cl[i] - cr[i]
    src = dx * alpha / a0
    rr = r / (1.0 + r)
    r1 = 1.0 / (1.0 + r)
    q = psi_prev.copy()
    p = psi_curr.copy()
    new = np.empty(nx)
    for n in range(ug.size):
        big = 0.0
        for i in range(1, nx - 1):
            v = cc[i] * p[i] + cl[i] * p[i - 1] + cr[i] * p[i + 1] - keep * inv * q[i]
            new[i] = v
            big = max(big, abs(v))
        new[0] = new[1] - src * ug[n]
        new[nx - 1] = r1 * new[nx - 2] + rr * p[nx - 1]
        big = max(big, abs(new[0]), abs(new[nx - 1]))
        if not big <= guard:
            return n
        out[n] = new[nx - 1] - p[nx - 1]
        q, p, new = p, new, q
    psi_prev[:] = q
    psi_curr[:] = p
    return -1


def simulate(
    area: AreaFunction | np.ndarray,
    bc: BoundaryParams,
    consts: PhysicalConstants,
    grid: GridSpec,
    ug: np.ndarray,
    smooth: bool = True,
    guard: float = BLOWUP_GUARD,
    state: FieldState | None = None,
    decimate: bool = True,
) -> AudioSignal:
    """Run the solver over the excitation ``ug`` (one sample per time step) and return lip pressure.

    Output is decimated to ``grid.fs`` by sample picking, optionally after a
    single-pole smoother with its corner at the output Nyquist frequency.
    ``state`` (if given) is advanced in place.
    """
    check_cfl(grid, consts)
    if isinstance(area, AreaFunction):
        a = resample_area(area, grid.nx)
    else:
        a = np.asarray(area, dtype=float)
        if a.size != grid.nx:
            raise DomainError(f"area has {a.size} samples, grid has nx={grid.nx}")
        if np.any(a <= 0):
            raise DomainError("area must be strictly positive")
    ug = np.ascontiguousarray(ug, dtype=float)
    if state is None:
        state = FieldState.zeros(grid.nx)
    faces, nodes = face_and_node_areas(a)
    lam2 = (consts.c * grid.dt / grid.dx) ** 2
    diffs = np.zeros(ug.size)
    bad = _run_kernel(
        faces, nodes, a[0], lam2, 0.5 * bc.beta * grid.dt, grid.dx, bc.alpha,
        bc.zeta * grid.dx / grid.dt, ug, guard, state.psi_prev, state.psi_curr, diffs,
    )
    if bad >= 0:
        raise NumericalBlowup(f"|psi| exceeded {guard:g} at step {bad + 1}")
    state.step += ug.size

    p = -consts.rho * diffs / grid.dt
    if not decimate:
        return AudioSignal(p, 1.0 / grid.dt)
    if smooth and grid.decimation > 1:
        pole = math.exp(-math.pi * grid.fs * grid.dt)
        p = lfilter([1.0 - pole], [1.0, -pole], p)
    return AudioSignal(p[:: grid.decimation], grid.fs)


def discrete_energy(prev: np.ndarray, curr: np.ndarray, area: np.ndarray, grid: GridSpec,
                    consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Energy conserved by the interior leapfrog update (with reflecting ends).

    Kinetic part at the half step plus the staggered-in-time potential part.
    """
    faces, nodes = face_and_node_areas(np.asarray(area, dtype=float))
    vel = (curr - prev) / grid.dt
    kinetic = 0.5 * np.sum(nodes[1:-1] * vel[1:-1] ** 2)
    potential = 0.5 * consts.c**2 / grid.dx**2 * np.sum(faces * np.diff(curr) * np.diff(prev))
    return float(kinetic + potential)


def radiation_impedance_estimate(area_at_lips: float, zeta: float, rho: float = 1.2) -> float:
    """Low-frequency radiation impedance rho/(A*zeta) implied by the Robin boundary."""
    if not area_at_lips > 0:
        raise DomainError("lip area must be positive")
    if zeta == 0:
        raise DomainError("zeta = 0 is a rigid termination; impedance is unbounded")
    if zeta < 0:
        raise DomainError("zeta must be positive")
    return rho / (area_at_lips * zeta)


def quarter_wave_resonances(length: float, c: float = 343.0, n: int = 3) -> np.ndarray:
    """Resonances (2k-1)c/(4L) of a uniform tube closed at one end and open at the other."""
    k = np.arange(1, n + 1)
    return (2 * k - 1) * c / (4.0 * length)
