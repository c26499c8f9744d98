"""Spectral change of the vowel presets as the grid is refined at fixed Courant number.

Prints LSD of each render against the finest one, plus uniform-tube resonances per grid.
Usage: python scripts/grid_convergence.py [--nx 32 63 125 158 249]
"""
import argparse

import numpy as np
from scipy.signal import find_peaks

from webster_tract.acoustics import AreaFunction, quarter_wave_resonances, simulate
from webster_tract.config import RunConfig
from webster_tract.glottal import upsample
from webster_tract.metrics import lsd, prepare_pair
from webster_tract.pipeline import hold_courant
from webster_tract.render import render_config


def tube_peaks(cfg):
    grid = cfg.grid_spec()
    pulse = np.zeros(int(cfg.grid.fs))
    pulse[100] = 1.0
    out = simulate(AreaFunction.uniform(), cfg.boundary_params(), cfg.constants(), grid,
                   upsample(pulse, grid.decimation))
    spec = 20 * np.log10(np.abs(np.fft.rfft(out.samples)) + 1e-300)
    f = np.fft.rfftfreq(out.samples.size, 1 / cfg.grid.fs)
    band = (f > 100) & (f < 3200)
    idx, _ = find_peaks(spec[band], prominence=6)
    return f[band][idx][:3]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, nargs="+", default=[32, 63, 125, 158, 249])
    args = ap.parse_args()
    sizes = sorted(args.nx)
    print("quarter-wave", np.round(quarter_wave_resonances(0.17)).tolist())
    for v in "aiu":
        base = RunConfig().replace(voice={"vowel": v}, grid={"nx": sizes[0]})
        cfgs = [hold_courant(base, n) for n in sizes]
        finest = render_config(cfgs[-1])
        for n, cfg in zip(sizes, cfgs):
            a, b = prepare_pair(finest, render_config(cfg))[:2]
            print(f"/{v}/ nx {n:4d} decimation {cfg.grid_spec().decimation:3d} LSD vs nx {sizes[-1]}: "
                  f"{lsd(a, b):6.3f} dB  tube peaks {np.round(tube_peaks(cfg)).tolist()}")


if __name__ == "__main__":
    main()
