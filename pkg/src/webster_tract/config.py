"""Run configuration: INI-style sections, one dataclass per section.

A single file fully determines a run.  Unknown keys are errors so that typos
do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import copy
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .acoustics import BoundaryParams, GridSpec, PhysicalConstants, check_cfl
from .errors import ConfigError
from .glottal import VOWEL_F0, RosenbergParams

DEFAULTS_VERSION = "1"


@dataclass
class PhysicsConfig:
    rho: float = 1.2
    c: float = 343.0
    length: float = 0.17


@dataclass
class GridConfig:
    nx: int = 158
    courant_max: float = 0.99
    decimation: int = 0  # solver steps per output sample; 0 picks the smallest one meeting courant_max
    fs: float = 16000.0
    smooth: bool = True


@dataclass
class BoundaryConfig:
    zeta: float = 0.06
    u_scale: float = 1e-3
    beta: float = 0.0


@dataclass
class VoiceConfig:
    vowel: str = "a"
    f0: float = 0.0  # 0 selects the vowel's pitch anchor
    duration: float = 0.8
    area_file: str = ""


@dataclass
class SourceConfig:
    oq: float = 0.6
    cq: float = 0.4
    amplitude: float = 1.0
    aspiration: float = 0.02


@dataclass
class InverseConfig:
    n_control: int = 8
    max_evals: int = 2000
    restarts: int = 6
    init_step: float = 0.8
    a_min: float = 0.1
    a_max: float = 4.0
    zeta_min: float = 0.01
    zeta_max: float = 0.25
    w_mstft: float = 1.0
    w_logmel: float = 1.0
    w_probe: float = 0.01
    w_curvature: float = 1e-5
    w_bounds: float = 1.0
    method: str = "cma"


@dataclass
class RunConfig:
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    voice: VoiceConfig = field(default_factory=VoiceConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    inverse: InverseConfig = field(default_factory=InverseConfig)
    seed: int = 0

    # -- derived objects
    def validate(self) -> "RunConfig":
        if self.voice.duration <= 0:
            raise ConfigError(f"[voice] duration must be positive, got {self.voice.duration}")
        if not self.voice.area_file and self.voice.vowel not in VOWEL_F0:
            raise ConfigError(f"[voice] vowel must be one of {sorted(VOWEL_F0)}, got {self.voice.vowel!r}")
        if self.voice.f0 < 0:
            raise ConfigError("[voice] f0 must be >= 0")
        if self.inverse.method not in ("cma", "nelder-mead"):
            raise ConfigError(f"[inverse] method must be 'cma' or 'nelder-mead', got {self.inverse.method!r}")
        if self.grid.decimation < 0:
            raise ConfigError("[grid] decimation must be >= 0 (0 = derive from courant_max)")
        if self.grid.fs != 16000.0:
            raise ConfigError("[grid] fs is fixed at 16000 Hz")
        try:
            self.constants()
            self.grid_spec()
            self.boundary_params()
            self.rosenberg()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(rho=self.physics.rho, c=self.physics.c)

    def grid_spec(self) -> GridSpec:
        g = self.grid
        if g.decimation > 0:
            spec = GridSpec(g.nx, 1.0 / (g.fs * g.decimation), fs=g.fs, length=self.physics.length)
            check_cfl(spec, self.constants())
            return spec
        return GridSpec.from_courant(g.nx, fs=g.fs, length=self.physics.length,
                                     c=self.physics.c, courant_max=g.courant_max)

    def boundary_params(self, zeta: float | None = None) -> BoundaryParams:
        b = self.boundary
        return BoundaryParams.from_u_scale(b.zeta if zeta is None else zeta, b.u_scale, b.beta, c=self.physics.c)

    def rosenberg(self) -> RosenbergParams:
        s = self.source
        return RosenbergParams(oq=s.oq, cq=s.cq, amplitude=s.amplitude, aspiration=s.aspiration)

    @property
    def f0(self) -> float:
        return self.voice.f0 if self.voice.f0 > 0 else VOWEL_F0.get(self.voice.vowel, 200.0)

    # -- serialization
    def to_ini(self) -> str:
        lines = [f"# webster-tract run configuration (defaults v{DEFAULTS_VERSION})", "[run]", f"seed = {self.seed}"]
        for name in _SECTIONS:
            lines.append(f"\n[{name}]")
            for f in dataclasses.fields(getattr(self, name)):
                lines.append(f"{f.name} = {getattr(getattr(self, name), f.name)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]

    def replace(self, **sections) -> "RunConfig":
        """Copy with whole sections or section fields replaced: ``replace(grid={'nx': 63})``."""
        out = copy.deepcopy(self)
        for name, value in sections.items():
            if name == "seed":
                out.seed = int(value)
            elif isinstance(value, dict):
                setattr(out, name, dataclasses.replace(getattr(self, name), **value))
            else:
                setattr(out, name, value)
        return out


_SECTIONS = ("physics", "grid", "boundary", "voice", "source", "inverse")


def _coerce(section: str, key: str, raw: str, typ):
    try:
        if typ in (bool, "bool"):
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None


def _set(cfg: RunConfig, section: str, key: str, raw: str):
    if section == "run":
        if key != "seed":
            raise ConfigError(f"unknown key [run] {key}")
        cfg.seed = _coerce(section, key, raw, int)
        return
    if section not in _SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    obj = getattr(cfg, section)
    types = {f.name: f.type for f in dataclasses.fields(obj)}
    if key not in types:
        raise ConfigError(f"unknown key [{section}] {key}")
    setattr(obj, key, _coerce(section, key, raw, types[key]))


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = RunConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            _set(cfg, section, key, raw)
    return cfg


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg = parse_config(p.read_text())
    apply_overrides(cfg, overrides)
    return cfg.validate()


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply ``section.key=value`` strings in order."""
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        _set(cfg, section, key, raw)
    return cfg
