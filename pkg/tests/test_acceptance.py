"""Acceptance checks, one test per criterion.

Each test records a single ``criterion n: PASS/FAIL`` line that is repeated in
the terminal summary.  Run on its own with ``python tests/test_acceptance.py``.
"""
import json
import time
import warnings

import numpy as np
import pytest
from scipy.signal import find_peaks

from webster_tract.acoustics import (AreaFunction, AudioSignal, BoundaryParams, FieldState, GridSpec,
                                     PhysicalConstants, discrete_energy, quarter_wave_resonances, simulate, webster_step)
from webster_tract.cli import main
from webster_tract.config import RunConfig
from webster_tract.ddsp import fit_harmonic_amplitudes, render_additive
from webster_tract.errors import ConvergenceWarning, NumericalBlowup, StabilityError, UnvoicedError
from webster_tract.glottal import PitchTrajectory, upsample
from webster_tract.metrics import (formant_mae, formants_lpc, hnr_framewise, log_mel_envelope_distance, lsd,
                                   multires_stft_error, prepare_pair)
from webster_tract.pipeline import (SweepItem, SweepSpec, ddsp_baseline, f0_search_range, fit, postrender,
                                    run_sweep, to_estimate)
from webster_tract.render import render_config

FS = 16000.0
C = PhysicalConstants()
VOWELS = ("a", "i", "u")


def vowel_cfg(vowel: str) -> RunConfig:
    return RunConfig().replace(voice={"vowel": vowel}, boundary={"zeta": 0.06})


def vowel_pitch(cfg: RunConfig) -> PitchTrajectory:
    return PitchTrajectory.constant(cfg.f0, cfg.voice.duration)


def test_criterion_1_uniform_tube_formants(acceptance_log):
    start = time.perf_counter()
    grid = GridSpec.from_courant(RunConfig().grid.nx)
    pulse = np.zeros(int(FS))
    pulse[100] = 1.0
    out = simulate(AreaFunction.uniform(), BoundaryParams(zeta=0.06), C, grid, upsample(pulse, grid.decimation))
    spec = 20 * np.log10(np.abs(np.fft.rfft(out.samples)) + 1e-300)
    f = np.fft.rfftfreq(out.samples.size, 1 / FS)
    band = (f > 100) & (f < 3200)
    idx, _ = find_peaks(spec[band], prominence=6)
    peaks = f[band][idx][:3]
    elapsed = time.perf_counter() - start
    expected = quarter_wave_resonances(0.17)
    rel = np.abs(peaks - expected) / expected if peaks.size == 3 else np.array([np.inf])
    ok = peaks.size == 3 and np.all(rel <= 0.05) and elapsed < 5.0
    acceptance_log(1, ok, f"peaks {np.round(peaks).tolist()} Hz vs {np.round(expected).tolist()}, "
                          f"max rel err {rel.max():.3%}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_stability_gate(acceptance_log):
    state = FieldState.zeros(32)
    try:
        simulate(AreaFunction.uniform(), BoundaryParams(), C, GridSpec(32, 1.0 / FS), np.ones(16), state=state)
        gated = False
    except StabilityError:
        gated = state.step == 0
    finite = {}
    for v in VOWELS:
        cfg = vowel_cfg(v)
        try:
            audio = render_config(cfg)
            finite[v] = len(audio) == int(0.8 * FS) and bool(np.all(np.isfinite(audio.samples)))
        except NumericalBlowup:
            finite[v] = False
    courant = C.c * RunConfig().grid_spec().dt / RunConfig().grid_spec().dx
    ok = gated and all(finite.values())
    acceptance_log(2, ok, f"Courant>1 rejected before stepping: {gated}; 0.8 s renders at Courant {courant:.4f} "
                          f"finite: {finite}")
    assert ok


def test_criterion_3_energy_and_linearity(acceptance_log):
    nx = 48
    g = GridSpec.from_courant(nx)
    area = 1.0 + 0.8 * np.sin(np.linspace(0, 3, nx)) ** 2
    x = np.linspace(0, 1, nx)
    bump = np.exp(-(((x - 0.4) / 0.08) ** 2))
    bc = BoundaryParams(zeta=0.0, alpha=0.0, beta=0.0)
    state = webster_step(FieldState(bump.copy(), bump.copy()), area, g, bc, 0.0)
    e0 = discrete_energy(state.psi_prev, state.psi_curr, area, g)
    simulate(area, bc, C, g, np.zeros(1000), state=state, decimate=False)
    drift = abs(discrete_energy(state.psi_prev, state.psi_curr, area, g) - e0) / e0

    ug = np.random.default_rng(0).standard_normal(8000)
    shaped = AreaFunction([1.0, 0.6, 0.4, 1.5, 3.0, 2.0, 1.0])
    base = simulate(shaped, BoundaryParams(beta=5.0), C, g, ug).samples
    lin_err = max(np.max(np.abs(simulate(shaped, BoundaryParams(beta=5.0), C, g, k * ug).samples - k * base))
                  / np.max(np.abs(k * base)) for k in (-3.0, 0.5, 7.0))
    ok = drift < 1e-6 and lin_err < 1e-9
    acceptance_log(3, ok, f"energy drift {drift:.2e} over 1000 steps, linearity error {lin_err:.2e}")
    assert ok


def test_criterion_4_metric_identities(acceptance_log):
    x = render_config(vowel_cfg("a").replace(grid={"nx": 32}))
    a, b, _ = prepare_pair(x, x)
    zeros = {"mstft": multires_stft_error(a, b), "lsd": lsd(a, b),
             "logmel": log_mel_envelope_distance(x, x),
             "formant_mae": formant_mae(formants_lpc(x), formants_lpc(x))}
    gain_lsd = lsd(x.samples, 10.0 * x.samples)
    hnr_gap = abs(hnr_framewise(x, (150, 260)) - hnr_framewise(AudioSignal(1e3 * x.samples, x.fs), (150, 260)))
    ok = all(v == 0.0 for v in zeros.values()) and abs(gain_lsd - 20.0) < 1e-9 and hnr_gap < 1e-9
    acceptance_log(4, ok, f"self distances {zeros}, LSD(10x gain) {gain_lsd:.12f} dB, HNR gain gap {hnr_gap:.1e}")
    assert ok


@pytest.fixture(scope="module")
def inversions():
    """Reference render, fit result and wall time for each vowel preset at the default configuration."""
    out = {}
    for v in VOWELS:
        cfg = vowel_cfg(v)
        ref = render_config(cfg)
        pitch = vowel_pitch(cfg)
        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            result = fit(ref, pitch, cfg)
        out[v] = (cfg, ref, pitch, result, time.perf_counter() - start)
    return out


@pytest.mark.slow
def test_criterion_5_inverse_round_trip(inversions, acceptance_log):
    parts, ok = [], True
    for v, (cfg, ref, pitch, result, elapsed) in inversions.items():
        a, b, _ = prepare_pair(ref, postrender(to_estimate(result, cfg, v), cfg, pitch))
        d = lsd(a, b)
        good = (cfg.inverse.n_control == 8 and result.n_evals <= 2000 and d <= 3.0
                and 0.01 < result.zeta < 0.25 and elapsed <= 600)
        ok &= good
        parts.append(f"/{v}/ LSD {d:.3f} dB zeta {result.zeta:.4f} evals {result.n_evals} {elapsed:.0f} s")
    acceptance_log(5, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_6_solver_transfer(inversions, acceptance_log):
    items = [SweepItem(v, to_estimate(r, cfg, v), pitch, ref) for v, (cfg, ref, pitch, r, _) in inversions.items()]
    cfg = RunConfig()
    nx = cfg.grid.nx
    _, grid = run_sweep(items, SweepSpec("grid_cfl", [str(nx), str(2 * nx - 1)]), cfg)
    _, pitch = run_sweep(items, SweepSpec("pitch", ["1.0", "0.9", "1.1"]), cfg)
    g = {r["metric"]: r["value"] for r in grid}
    p = {r["metric"]: r["value"] for r in pitch}
    ok = g["abs_delta_lsd"] <= 1.0 and g["abs_delta_hnr"] <= 0.1 and p["abs_delta_lsd"] > g["abs_delta_lsd"]
    acceptance_log(6, ok, f"nx {nx}->{2 * nx - 1}: median |dLSD| {g['abs_delta_lsd']:.3f} dB, "
                          f"|dHNR| {g['abs_delta_hnr']:.3f} dB; pitch +-10%: median |dLSD| {p['abs_delta_lsd']:.3f} dB")
    assert ok


def test_criterion_7_aspiration_monotonicity(acceptance_log):
    levels = (0.0, 0.05, 0.1, 0.2)
    hnrs, monotone = {}, True
    for v in VOWELS:
        cfg = vowel_cfg(v)
        rng = f0_search_range(vowel_pitch(cfg))
        hnrs[v] = [hnr_framewise(render_config(cfg.replace(source={"aspiration": s})), rng) for s in levels]
        monotone &= all(a > b for a, b in zip(hnrs[v], hnrs[v][1:]))
    t = np.arange(int(FS)) / FS
    sine = hnr_framewise(AudioSignal(np.sin(2 * np.pi * 200 * t), FS))
    try:
        noise = hnr_framewise(AudioSignal(np.random.default_rng(0).standard_normal(int(FS)), FS))
        noise_ok = noise <= 0.0
    except UnvoicedError:
        noise, noise_ok = "unvoiced", True
    ok = monotone and sine >= 30.0 and noise_ok
    table = {v: [round(h, 2) for h in hs] for v, hs in hnrs.items()}
    acceptance_log(7, ok, f"HNR vs aspiration {list(levels)}: {table}; sine {sine:.1f} dB; noise {noise}")
    assert ok


def test_criterion_8_ddsp_baseline(acceptance_log):
    t = np.arange(int(0.8 * FS)) / FS
    tones = sum(a * np.sin(2 * np.pi * (k + 1) * 200 * t) for k, a in enumerate((1, .6, .4, .25, .1)))
    harmonic = AudioSignal(tones, FS)
    pitch = PitchTrajectory.constant(200, 0.8)
    env = fit_harmonic_amplitudes(harmonic, pitch, n_harmonics=10)
    a, b, _ = prepare_pair(harmonic, render_additive(pitch, env, FS, 0.8))
    round_trip = lsd(a, b)
    gaps = {}
    for v in VOWELS:
        cfg = vowel_cfg(v)
        ref = render_config(cfg)
        p = vowel_pitch(cfg)
        audio, _ = ddsp_baseline(ref, p, seed=cfg.seed)
        rng = f0_search_range(p)
        gaps[v] = round(hnr_framewise(audio, rng) - hnr_framewise(ref, rng), 3)
    ok = round_trip <= 3.0 and all(abs(g) <= 2.0 for g in gaps.values())
    acceptance_log(8, ok, f"5-harmonic round-trip LSD {round_trip:.3f} dB; baseline minus reference HNR {gaps}")
    assert ok


def test_criterion_9_determinism(tmp_path, acceptance_log):
    def run_all(out):
        code = main(["render", "--out-dir", str(out)])
        wav, pitch = out / "render_a.wav", out / "render_a_pitch.txt"
        code |= main(["invert", "--out-dir", str(out), "--reference", str(wav), "--pitch", str(pitch),
                      "--override", "inverse.max_evals=15"])
        params = out / "fit_a_params.txt"
        code |= main(["postrender", "--out-dir", str(out), "--params", str(params)])
        code |= main(["evaluate", "--out-dir", str(out), "--reference", str(wav),
                      "--candidate", str(out / "post_fit_a_params.wav")])
        code |= main(["sweep", "--out-dir", str(out), "--params", str(params), "--axis", "zeta",
                      "--values", "1.0,1.1"])
        code |= main(["baseline", "--out-dir", str(out), "--reference", str(wav), "--pitch", str(pitch)])
        return code

    codes = [run_all(tmp_path / "one"), run_all(tmp_path / "two")]
    files = sorted(p.name for p in (tmp_path / "one").iterdir() if p.suffix in (".wav", ".csv", ".txt"))
    differing = [n for n in files if (tmp_path / "one" / n).read_bytes() != (tmp_path / "two" / n).read_bytes()]
    # json reports carry the same content too
    reports = [n for n in sorted(p.name for p in (tmp_path / "one").glob("*.json"))
               if json.loads((tmp_path / "one" / n).read_text()) != json.loads((tmp_path / "two" / n).read_text())]
    ok = codes == [0, 0] and len(files) >= 8 and not differing and not reports
    acceptance_log(9, ok, f"{len(files)} WAV/CSV/TXT outputs from 6 commands compared, differing: {differing + reports}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
