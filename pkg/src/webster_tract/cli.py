"""Command-line entry point: ``webster-tract <command> [options]``."""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .config import DEFAULTS_VERSION, RunConfig, load_config
from .ddsp import save_envelope
from .errors import ConfigError, ConvergenceWarning, NumericalBlowup, SampleRateError, StabilityError, WebsterError
from .glottal import VOWEL_F0, PitchTrajectory
from .io import (read_params, read_pitch, read_wav, write_json, write_params, write_pitch, write_rows,
                 write_wav)
from .pipeline import (AXES, SweepItem, SweepSpec, apply_condition, ddsp_baseline, default_sweep, evaluate_pair,
                       f0_search_range, fit, postrender, run_sweep, to_estimate)
from .render import render_config

log = logging.getLogger("webster_tract")

EXIT_USAGE = 2
EXIT_UNSTABLE = 3


def provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.digest(), "seed": cfg.seed, "defaults_version": DEFAULTS_VERSION,
            "package_version": __version__}


def physical_record(cfg: RunConfig) -> dict:
    grid = cfg.grid_spec()
    bc = cfg.boundary_params()
    return {
        "rho": cfg.physics.rho, "c": cfg.physics.c, "length": cfg.physics.length,
        "nx": grid.nx, "dt": grid.dt, "dx": grid.dx, "decimation": grid.decimation, "fs": grid.fs,
        "courant": cfg.physics.c * grid.dt / grid.dx, "zeta": bc.zeta, "alpha": bc.alpha, "beta": bc.beta,
        "oq": cfg.source.oq, "cq": cfg.source.cq, "amplitude": cfg.source.amplitude,
        "aspiration": cfg.source.aspiration, "smooth": cfg.grid.smooth,
    }


def _config(args) -> RunConfig:
    cfg = load_config(args.config, args.override)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pitch(path, cfg: RunConfig, vowel: str | None = None) -> PitchTrajectory:
    if path:
        return read_pitch(path)
    f0 = VOWEL_F0.get(vowel, cfg.f0) if vowel else cfg.f0
    return PitchTrajectory.constant(f0, cfg.voice.duration)


def _tag(cfg: RunConfig) -> str:
    return Path(cfg.voice.area_file).stem if cfg.voice.area_file else cfg.voice.vowel


# ---------------------------------------------------------------- commands

def cmd_render(args) -> int:
    cfg = _config(args)
    out = _out(args)
    pitch = _pitch(args.pitch, cfg)
    audio = render_config(cfg, pitch=pitch)
    stem = args.name or f"render_{_tag(cfg)}"
    write_wav(out / f"{stem}.wav", audio)
    write_pitch(out / f"{stem}_pitch.txt", pitch)
    meta = {"command": "render", "vowel": cfg.voice.vowel, "area_file": cfg.voice.area_file,
            "f0": cfg.f0, "duration": cfg.voice.duration, "samples": len(audio),
            "physics": physical_record(cfg), "config": cfg.to_ini(), **provenance(cfg)}
    write_json(out / f"{stem}.json", meta)
    print(out / f"{stem}.wav")
    return 0


def cmd_invert(args) -> int:
    cfg = _config(args)
    out = _out(args)
    reference = read_wav(args.reference, expect_fs=cfg.grid.fs)
    pitch = read_pitch(args.pitch)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        result = fit(reference, pitch, cfg)
    conv = [str(w.message) for w in caught if issubclass(w.category, ConvergenceWarning)]
    for msg in conv:
        log.warning("ConvergenceWarning: %s", msg)
    stem = args.name or f"fit_{_tag(cfg)}"
    est = to_estimate(result, cfg)
    write_params(out / f"{stem}_params.txt", est)
    write_rows(out / f"{stem}_loss.csv",
               [{"eval": i + 1, "best_loss": float(v)} for i, v in enumerate(result.loss_trace)],
               fields=("eval", "best_loss"))
    report = {"command": "invert", "reference": Path(args.reference).name, "zeta": result.zeta,
              "area": result.area.samples, "n_evals": result.n_evals, "converged": result.converged,
              "convergence_warning": conv[0] if conv else "", "final_metrics": result.final_metrics,
              "method": cfg.inverse.method, "max_evals": cfg.inverse.max_evals, **provenance(cfg)}
    write_json(out / f"{stem}_report.json", report)
    print(out / f"{stem}_params.txt")
    return 0


def cmd_postrender(args) -> int:
    cfg = _config(args)
    out = _out(args)
    est = read_params(args.params)
    pitch = _pitch(args.pitch, cfg, est.meta.get("vowel"))
    audio = postrender(est, cfg, pitch, args.pitch_ratio, args.zeta_scale)
    stem = args.name or f"post_{Path(args.params).stem}"
    write_wav(out / f"{stem}.wav", audio)
    meta = {"command": "postrender", "params": Path(args.params).name, "overrides": list(args.override),
            "pitch_ratio": args.pitch_ratio, "zeta_scale": args.zeta_scale, "zeta": est.zeta * args.zeta_scale,
            "physics": physical_record(cfg), "estimate_meta": est.meta, **provenance(cfg)}
    write_json(out / f"{stem}.json", meta)
    print(out / f"{stem}.wav")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(args)
    ref = read_wav(args.reference, expect_fs=cfg.grid.fs)
    cand = read_wav(args.candidate, expect_fs=cfg.grid.fs)
    f0_range = f0_search_range(read_pitch(args.pitch)) if args.pitch else (60.0, 600.0)
    metrics = evaluate_pair(ref, cand, f0_range)
    condition = Path(args.candidate).stem
    rows = [{"vowel": args.vowel or cfg.voice.vowel, "axis": "evaluate", "condition": condition,
             "metric": m, "value": float(metrics[m])}
            for m in ("mstft", "lsd", "formant_mae", "hnr_ref", "hnr_cand", "delta_hnr")]
    stem = args.name or f"metrics_{condition}"
    write_rows(out / f"{stem}.csv", rows)
    write_json(out / f"{stem}.json", {"command": "evaluate", "reference": Path(args.reference).name,
                                      "candidate": Path(args.candidate).name, "lag": metrics["lag"],
                                      **provenance(cfg)})
    for r in rows:
        print(f"{r['metric']},{r['value']:.6g}")
    return 0


def _sweep_spec(args, cfg: RunConfig) -> SweepSpec:
    if args.spec:
        parser = configparser.ConfigParser()
        try:
            parser.read_string(Path(args.spec).read_text())
            sec = parser["sweep"]
            return SweepSpec.parse(sec["axis"], sec["values"], sec.getint("baseline_index", 0))
        except (OSError, KeyError, configparser.Error, ValueError) as exc:
            raise ConfigError(f"bad sweep spec {args.spec}: {exc}") from exc
    if not args.axis:
        raise ConfigError("sweep needs --axis or --spec")
    if args.values:
        return SweepSpec.parse(args.axis, args.values, args.baseline_index)
    return default_sweep(args.axis, cfg)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out(args)
    spec = _sweep_spec(args, cfg)
    for value in spec.values:
        apply_condition(cfg, spec.axis, value)  # fail fast on malformed values
    refs = list(args.reference or [])
    if refs and len(refs) != len(args.params):
        raise ConfigError("give one --reference per --params file (or none)")
    pitches = list(args.pitch or [])
    if pitches and len(pitches) != len(args.params):
        raise ConfigError("give one --pitch per --params file (or none)")
    items = []
    for k, path in enumerate(args.params):
        est = read_params(path)
        vowel = est.meta.get("vowel", Path(path).stem)
        pitch = read_pitch(pitches[k]) if pitches else _pitch(None, cfg, vowel)
        ref = read_wav(refs[k], expect_fs=cfg.grid.fs) if refs else None
        items.append(SweepItem(vowel, est, pitch, ref))
    rows, summary = run_sweep(items, spec, cfg, jobs=args.jobs)
    stem = args.name or f"sweep_{spec.axis}"
    write_rows(out / f"{stem}.csv", rows)
    write_rows(out / f"{stem}_summary.csv", summary)
    write_json(out / f"{stem}.json", {"command": "sweep", "axis": spec.axis, "values": spec.values,
                                      "baseline_index": spec.baseline_index,
                                      "params": [Path(p).name for p in args.params], **provenance(cfg)})
    for r in summary:
        print(f"{r['axis']},{r['metric']},{r['value']:.6g}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _config(args)
    out = _out(args)
    ref = read_wav(args.reference, expect_fs=cfg.grid.fs)
    pitch = read_pitch(args.pitch)
    audio, env = ddsp_baseline(ref, pitch, args.harmonics, seed=cfg.seed)
    stem = args.name or f"baseline_{Path(args.reference).stem}"
    write_wav(out / f"{stem}.wav", audio)
    save_envelope(out / f"{stem}_envelope.csv", env)
    write_json(out / f"{stem}.json", {"command": "baseline", "reference": Path(args.reference).name,
                                      "n_harmonics": args.harmonics, "hop": env.hop, **provenance(cfg)})
    print(out / f"{stem}.wav")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (INI sections)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out-dir", default=".", help="directory for outputs (created if missing)")
    common.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("--name", help="output file stem")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="webster-tract", description="1D vocal-tract FDTD rendering and inversion.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render", parents=[common], help="render a vowel to WAV")
    s.add_argument("--pitch", help="two-column (t, f0) file; default is the vowel's constant anchor")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("invert", parents=[common], help="estimate area function and zeta from a WAV")
    s.add_argument("--reference", required=True)
    s.add_argument("--pitch", required=True)
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("postrender", parents=[common], help="re-render an exported parameter file")
    s.add_argument("--params", required=True)
    s.add_argument("--pitch")
    s.add_argument("--pitch-ratio", type=float, default=1.0)
    s.add_argument("--zeta-scale", type=float, default=1.0)
    s.set_defaults(func=cmd_postrender)

    s = sub.add_parser("evaluate", parents=[common], help="compare a candidate WAV against a reference")
    s.add_argument("--reference", required=True)
    s.add_argument("--candidate", required=True)
    s.add_argument("--pitch", help="pitch file used to bound the HNR lag search")
    s.add_argument("--vowel")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="robustness sweep over exported parameters")
    s.add_argument("--params", required=True, nargs="+")
    s.add_argument("--reference", nargs="+")
    s.add_argument("--pitch", nargs="+")
    s.add_argument("--axis", choices=AXES)
    s.add_argument("--values", help="comma- or '|'-separated condition values")
    s.add_argument("--baseline-index", type=int, default=0)
    s.add_argument("--spec", help="file with a [sweep] section: axis, values, baseline_index")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("baseline", parents=[common], help="fit and render the harmonic-plus-noise baseline")
    s.add_argument("--reference", required=True)
    s.add_argument("--pitch", required=True)
    s.add_argument("--harmonics", type=int, default=40)
    s.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StabilityError, NumericalBlowup) as exc:
        print(f"error: unstable simulation: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ConfigError, SampleRateError, FileNotFoundError, WebsterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
