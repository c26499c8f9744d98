"""Reference renders, inversion, baseline comparison and robustness sweeps for the three vowel presets.

Writes into --out-dir:
  fit_<v>_params.txt            estimated controls and zeta
  recon.csv                     reconstruction metrics (physics vs additive baseline)
  hnr.csv                       HNR of reference, physics re-render and baseline
  sweep_<axis>.csv / _summary   robustness sweeps over grid, source, pitch and zeta

Usage: python scripts/run_tables.py --out-dir results [--max-evals 2000] [--nx 158]
"""
import argparse
import time
import warnings
from pathlib import Path

from webster_tract.config import RunConfig
from webster_tract.errors import ConvergenceWarning
from webster_tract.glottal import PitchTrajectory
from webster_tract.io import write_params, write_rows
from webster_tract.pipeline import (AXES, SweepItem, ddsp_baseline, default_sweep, evaluate_pair,
                                    f0_search_range, fit, postrender, run_sweep, safe_hnr, to_estimate)
from webster_tract.render import render_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--max-evals", type=int, default=2000)
    ap.add_argument("--nx", type=int, default=RunConfig().grid.nx)
    ap.add_argument("--vowels", default="aiu")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = RunConfig().replace(grid={"nx": args.nx}, inverse={"max_evals": args.max_evals})

    recon, hnr, items = [], [], []
    for v in args.vowels:
        cfg = base.replace(voice={"vowel": v})
        pitch = PitchTrajectory.constant(cfg.f0, cfg.voice.duration)
        f0_range = f0_search_range(pitch)
        ref = render_config(cfg)
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            result = fit(ref, pitch, cfg)
        est = to_estimate(result, cfg, v)
        write_params(out / f"fit_{v}_params.txt", est)
        print(f"/{v}/ fitted in {time.perf_counter() - start:.0f} s, {result.n_evals} evals, "
              f"zeta {result.zeta:.4f}, warnings {len(caught)}")
        physics = postrender(est, cfg, pitch)
        baseline, _ = ddsp_baseline(ref, pitch, seed=cfg.seed)
        for system, audio in (("physics", physics), ("baseline", baseline)):
            m = evaluate_pair(ref, audio, f0_range)
            for metric in ("mstft", "lsd", "formant_mae"):
                recon.append({"vowel": v, "axis": "recon", "condition": system, "metric": metric,
                              "value": m[metric]})
        for system, audio in (("reference", ref), ("physics", physics), ("baseline", baseline)):
            hnr.append({"vowel": v, "axis": "hnr", "condition": system, "metric": "hnr",
                        "value": safe_hnr(audio, f0_range)})
        items.append(SweepItem(v, est, pitch, ref))
    write_rows(out / "recon.csv", recon)
    write_rows(out / "hnr.csv", hnr)

    for axis in AXES:
        rows, summary = run_sweep(items, default_sweep(axis, base), base, jobs=args.jobs)
        write_rows(out / f"sweep_{axis}.csv", rows)
        write_rows(out / f"sweep_{axis}_summary.csv", summary)
        medians = ", ".join(f"{r['metric']} {r['value']:.3f}" for r in summary)
        print(f"{axis}: {medians}")


if __name__ == "__main__":
    main()
