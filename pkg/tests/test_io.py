import numpy as np
import pytest
from scipy.io import wavfile

from webster_tract.acoustics import AreaFunction, AudioSignal
from webster_tract.errors import ConfigError, SampleRateError
from webster_tract.glottal import PitchTrajectory
from webster_tract.io import (TractEstimate, read_params, read_pitch, read_rows, read_wav, write_json,
                              write_params, write_pitch, write_rows, write_wav)
from webster_tract.render import load_area_table, save_area_table, vowel_area


def test_wav_round_trip_exact_to_quantization(tmp_path, rng):
    x = AudioSignal(rng.uniform(-0.9, 0.9, 1000), 16000.0)
    pcm = write_wav(tmp_path / "x.wav", x, normalize=False)
    back = read_wav(tmp_path / "x.wav", expect_fs=16000)
    np.testing.assert_array_equal(back.samples, pcm / 32767.0)
    assert np.max(np.abs(back.samples - x.samples)) <= 0.5 / 32767 + 1e-12


def test_wav_peak_at_minus_one_dbfs(tmp_path, rng):
    pcm = write_wav(tmp_path / "x.wav", AudioSignal(rng.standard_normal(500) * 7, 16000.0))
    assert np.max(np.abs(pcm)) == round(32767 * 10 ** (-1 / 20))
    assert pcm.dtype == np.int16


def test_wav_rate_mismatch(tmp_path):
    wavfile.write(tmp_path / "x.wav", 8000, np.zeros(100, np.int16))
    with pytest.raises(SampleRateError):
        read_wav(tmp_path / "x.wav", expect_fs=16000)


def test_wav_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "nope.wav")


def test_pitch_round_trip(tmp_path):
    p = PitchTrajectory(np.linspace(180, 220, 81), 100.0)
    write_pitch(tmp_path / "p.txt", p)
    back = read_pitch(tmp_path / "p.txt")
    assert back.rate == pytest.approx(100.0)
    np.testing.assert_allclose(back.f0, p.f0, atol=1e-6)


def test_pitch_nonuniform_is_resampled(tmp_path):
    (tmp_path / "p.txt").write_text("0.0 100\n0.01 110\n0.03 130\n0.04 140\n")
    back = read_pitch(tmp_path / "p.txt")
    np.testing.assert_allclose(back.at(np.array([0.02])), [120.0])


def test_pitch_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_pitch(tmp_path / "missing.txt")
    (tmp_path / "bad.txt").write_text("0.0\n0.1\n")
    with pytest.raises(ConfigError):
        read_pitch(tmp_path / "bad.txt")


def test_params_round_trip(tmp_path):
    est = TractEstimate(AreaFunction([1.0, 0.5, 2.25, 1.0]), 0.0612345678901, {"seed": 3, "config_hash": "abc"})
    write_params(tmp_path / "p.txt", est)
    back = read_params(tmp_path / "p.txt")
    assert back.zeta == est.zeta and back.area.length == 0.17
    np.testing.assert_array_equal(back.area.samples, est.area.samples)
    assert back.meta["seed"] == "3" and back.meta["config_hash"] == "abc"


def test_params_without_zeta(tmp_path):
    (tmp_path / "p.txt").write_text("0 1\n0.17 1\n")
    with pytest.raises(ConfigError):
        read_params(tmp_path / "p.txt")


def test_rows_round_trip(tmp_path):
    rows = [{"vowel": "a", "axis": "pitch", "condition": "1.1", "metric": "lsd", "value": 1.25},
            {"vowel": "a", "axis": "pitch", "condition": "1.1", "metric": "hnr", "value": float("nan")}]
    write_rows(tmp_path / "r.csv", rows)
    back = read_rows(tmp_path / "r.csv")
    assert back[0] == {"vowel": "a", "axis": "pitch", "condition": "1.1", "metric": "lsd", "value": "1.25"}
    assert back[1]["value"] == "nan"


def test_json_is_sorted_and_handles_numpy(tmp_path):
    write_json(tmp_path / "m.json", {"b": np.float64(1.5), "a": np.arange(2)})
    assert (tmp_path / "m.json").read_text() == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": 1.5\n}\n'


def test_area_table_round_trip(tmp_path):
    a = vowel_area("i")
    save_area_table(tmp_path / "a.txt", a, header="front vowel")
    back = load_area_table(tmp_path / "a.txt")
    np.testing.assert_allclose(back.samples, a.samples)
    assert back.length == pytest.approx(0.17)


def test_area_table_needs_uniform_x(tmp_path):
    (tmp_path / "a.txt").write_text("0 1\n0.1 2\n0.17 1\n")
    with pytest.raises(ConfigError):
        load_area_table(tmp_path / "a.txt")


@pytest.mark.parametrize("vowel", ["a", "i", "u"])
def test_presets_anchor_endpoints(vowel):
    a = vowel_area(vowel).samples
    assert a[0] == a[-1] == 1.0 and np.all(a > 0)


def test_preset_shapes():
    i, u = vowel_area("i").samples, vowel_area("u").samples
    # anterior constriction for /i/, narrowed lip end for /u/
    assert np.argmin(i[1:-1]) + 1 >= len(i) // 2
    assert u[-2] == u[1:-1].min()
