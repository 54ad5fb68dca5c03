import json
import math
import subprocess
import sys

import numpy as np
import pytest

import wext.symbol as symbol
from wext.cli import main
from wext.extension import extend
from wext.fields import HalfSpaceField, TraceField, read_grid, read_trace, write_grid
from wext.synthetic import layer_trace
from wext.weights import power_weight


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return lines[0].split(","), [[float(v) for v in ln.split(",")] for ln in lines[1:]]


@pytest.fixture
def cos_file(tmp_path):
    path = tmp_path / "cos.bin"
    write_grid(path, TraceField.from_function(np.cos, (64,), (2 * math.pi,)))
    return path


def test_symbol_rows(capsys):
    code, out, _ = run(capsys, "symbol", "--weight", "power:s=0.5", "--lmin", "1", "--lmax", "4",
                       "--num", "2")
    assert code == 0
    head, rows = csv_rows(out)
    assert head == ["lambda", "m", "est_error"]
    np.testing.assert_allclose([r[:2] for r in rows], [[1.0, 1.0], [4.0, 2.0]], rtol=1e-7)


def test_symbol_scaling_postprocessed(capsys, tmp_path):
    out = tmp_path / "m.csv"
    code, _, _ = run(capsys, "symbol", "--weight", "power:s=0.3", "--lmin", "0.1", "--lmax", "10",
                     "--num", "12", "--log", "--out", str(out))
    assert code == 0
    _, rows = csv_rows(out.read_text())
    lam, m = np.array(rows)[:, 0], np.array(rows)[:, 1]
    ratio = m / lam**0.3
    assert (ratio.max() - ratio.min()) / ratio.mean() <= 1e-4


def test_seventeen_digits(capsys):
    _, out, _ = run(capsys, "symbol", "--weight", "power:s=0.3", "--lmin", "2", "--num", "1")
    value = out.splitlines()[1].split(",")[1]
    assert float(value) == float(format(float(value), ".17g"))
    assert len(value.replace(".", "").lstrip("0")) >= 16


def test_malformed_spec_exit_code(capsys):
    code, _, err = run(capsys, "symbol", "--weight", "expr:(1+t", "--lmin", "1", "--num", "2")
    assert code == 2
    assert "position 9" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["symbol", "--weight", "power:s=0.5", "--lmin", "-1", "--num", "2"],
        ["symbol", "--weight", "power:s=0.5"],
        ["extend", "--weight", "power:s=0.5", "--trace", "missing.bin", "--out", "x.bin"],
        ["nonsense"],
    ],
)
def test_usage_errors(capsys, argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(capsys, *argv)[0] == 2


def test_partial_flag(capsys, monkeypatch):
    real = symbol.solve_profile

    def flaky(w, lam, tol=1e-7):
        if lam > 3:
            raise symbol.ProfileConvergenceError("forced")
        return real(w, lam, tol)

    monkeypatch.setattr(symbol, "solve_profile", flaky)
    argv = ["symbol", "--weight", "power:s=0.5", "--lmin", "1", "--lmax", "4", "--num", "2"]
    code, out, err = run(capsys, *argv)
    assert code == 1 and "forced" in err and "nan" in out
    assert run(capsys, *argv, "--partial")[0] == 0


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"weight": "power:s=0.5", "lmin": 1.0, "lmax": 4.0, "num": 3}))
    _, out, _ = run(capsys, "symbol", "--config", str(cfg))
    assert len(csv_rows(out)[1]) == 3
    _, out, _ = run(capsys, "symbol", "--config", str(cfg), "--num", "2")
    assert len(csv_rows(out)[1]) == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "symbol", "--config", str(cfg))[0] == 2


def test_profile_command(capsys):
    code, out, _ = run(capsys, "profile", "--weight", "power:s=0.5", "--lambda", "4")
    assert code == 0
    head, rows = csv_rows(out)
    assert head == ["t", "g", "a_dg"]
    rows = np.array(rows)
    sel = rows[:, 0] <= 5
    np.testing.assert_allclose(rows[sel, 1], np.exp(-2 * rows[sel, 0]), atol=1e-6)


def test_extend_cos_mode(capsys, cos_file, tmp_path):
    out = tmp_path / "U.bin"
    code, _, _ = run(capsys, "extend", "--weight", "power:s=0.5", "--trace", str(cos_file),
                     "--tlevels", "0,1", "--out", str(out))
    assert code == 0
    U = read_grid(out)
    x = U.coords()[0]
    np.testing.assert_allclose(U.values[1], math.exp(-1) * np.cos(x), atol=1e-7)
    assert U.provenance == "fourier_formula"


def test_extend_constant_trace_and_auto_levels(capsys, tmp_path):
    src, out = tmp_path / "c.bin", tmp_path / "U.bin"
    write_grid(src, TraceField(np.full(16, 2.5), (1.0,)))
    assert run(capsys, "extend", "--weight", "power:s=0.3", "--trace", str(src), "--out", str(out))[0] == 0
    U = read_grid(out)
    assert U.t_levels.size == 33 and U.t_levels[0] == 0.0
    np.testing.assert_allclose(U.values, 2.5, atol=1e-14)


def test_extend_poisson_method(capsys, cos_file, tmp_path):
    out = tmp_path / "P.bin"
    code, _, _ = run(capsys, "extend", "--weight", "power:s=0.5", "--trace", str(cos_file),
                     "--tlevels", "0,1", "--method", "poisson", "--out", str(out))
    assert code == 0
    U = read_grid(out)
    np.testing.assert_allclose(U.values[1], math.exp(-1) * np.cos(U.coords()[0]), atol=1e-10)
    assert U.provenance == "poisson_convolution"
    assert run(capsys, "extend", "--weight", "expr:1+t", "--trace", str(cos_file), "--tlevels", "0,1",
               "--method", "poisson", "--out", str(out))[0] == 2


def test_trace_op(capsys, cos_file, tmp_path):
    out = tmp_path / "f.bin"
    code, text, _ = run(capsys, "trace-op", "--weight", "power:s=0.5", "--trace", str(cos_file),
                        "--out", str(out))
    assert code == 0
    summary = json.loads(text)
    np.testing.assert_allclose(summary["m_one"], 1.0, rtol=1e-7)
    f = read_trace(out)
    np.testing.assert_allclose(f.values, np.cos(f.coords()[0]), atol=1e-7)


@pytest.mark.parametrize(
    "argv, key",
    [
        (["scaling", "--weight", "power:s=0.5"], "spread"),
        (["poisson", "--s", "0.5"], "max_deviation_closed_form"),
        (["energy", "--weight", "power:s=0.5", "--modes", "1"], "rel_gap"),
        (["weak", "--weight", "power:s=0.5"], "residual"),
    ],
)
def test_verify(capsys, argv, key):
    code, out, _ = run(capsys, "verify", *argv)
    verdict = json.loads(out)
    assert code == 0 and verdict["pass"] and key in verdict


def test_verify_failure_exit_code(capsys):
    code, out, _ = run(capsys, "verify", "scaling", "--weight", "power:s=0.5", "--threshold", "1e-30")
    assert code == 1 and not json.loads(out)["pass"]


def test_rigidity_command(capsys, tmp_path):
    w = power_weight(0.5)
    U = extend(layer_trace(0.3, period=32.0, width=2.0, n=64), w, [0.0, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0])
    good, bad = tmp_path / "U.bin", tmp_path / "neg.bin"
    write_grid(good, U)
    write_grid(bad, HalfSpaceField(-U.values, U.periods, U.t_levels, slope=[-c for c in U.slope]))
    code, out, _ = run(capsys, "rigidity", "--field", str(good), "--weight", "power:s=0.5",
                       "--radii", "1,2")
    rep = json.loads(out)
    assert code == 0 and rep["is_one_dimensional"]
    np.testing.assert_allclose(math.atan2(rep["omega_global"][1], rep["omega_global"][0]), 0.3, atol=1e-6)
    code, out, err = run(capsys, "rigidity", "--field", str(bad), "--weight", "power:s=0.5")
    assert code == 1 and json.loads(out)["error"] == "NON_MONOTONE_X2"


def test_deterministic_output(capsys):
    argv = ["symbol", "--weight", "expr:(1+t)^0.5", "--lmin", "0.5", "--lmax", "5", "--num", "4"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "wext.cli", "symbol", "--weight", "power:s=0.5",
                           "--lmin", "1", "--num", "1"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("lambda,m,est_error")
