import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from ruelle import cli, io


# -- writers -------------------------------------------------------------------------------
def test_fmt():
    assert io.fmt(0.1) == "0.10000000000000001"
    assert io.fmt(-0.0) == "0"
    assert io.fmt(3) == "3"
    assert io.fmt(np.int64(-2)) == "-2"
    assert io.fmt(True) == "true"
    assert io.fmt(None) == ""
    assert float(io.fmt(1 / 3)) == 1 / 3


def test_matrix_roundtrip(tmp_path, rng):
    a = rng.standard_normal((7, 7)) + 1j * rng.standard_normal((7, 7))
    p = tmp_path / "m.bin"
    io.write_matrix(p, a)
    raw = p.read_bytes()
    assert raw[:4] == b"KOOP"
    assert struct.unpack("<II", raw[4:12]) == (7, 0)
    assert raw[12:16] == b"\0" * 4
    assert len(raw) == 16 + 7 * 7 * 16
    assert struct.unpack("<dd", raw[16:32]) == (a[0, 0].real, a[0, 0].imag)
    np.testing.assert_array_equal(io.read_matrix(p), a)
    with pytest.raises(ValueError):
        io.write_matrix(p, np.zeros((2, 3)))


def test_json_sorted_and_safe():
    text = io.dumps({"b": np.float64(1.5), "a": [1 + 2j, np.nan], "c": np.arange(2)})
    assert list(json.loads(text)) == ["a", "b", "c"]
    assert json.loads(text)["a"] == [[1.0, 2.0], None]


# -- command line ---------------------------------------------------------------------------
def write_cfg(tmp_path, **cfg):
    cfg.setdefault("matrix", [3, 1, 2, 1])
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    err = capsys.readouterr().err
    records = [json.loads(line) for line in err.splitlines() if line.startswith("{")]
    return code, records


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [list(map(float, l.split(","))) for l in lines[1:]]


def test_spectrum_linear(tmp_path, capsys):
    cfg = write_cfg(tmp_path, N=8)
    out = tmp_path / "o"
    code, _ = run(capsys, "spectrum", cfg, "--out", out, "--k", 5, "--dump-matrix")
    assert code == 0
    header, rows = read_csv(out / "eigenvalues.csv")
    assert header == ["re", "im", "modulus"]
    assert rows[0] == [1.0, 0.0, 1.0] and len(rows) == 5
    assert all(abs(r[2]) < 1e-10 for r in rows[1:])
    rep = json.loads((out / "report.json").read_text())
    assert rep["N"] == 8
    K = io.read_matrix(out / "koopman.bin")
    assert K.shape == (rep["dim"], rep["dim"])


def test_spectrum_idempotent(tmp_path, capsys):
    cfg = write_cfg(tmp_path, N=8, epsilon=0.01, psi={"kind": "generic", "j": 1, "profile": "auto"})
    blobs = []
    for name in ("a", "b"):
        assert run(capsys, "spectrum", cfg, "--out", tmp_path / name)[0] == 0
        blobs.append(((tmp_path / name / "eigenvalues.csv").read_bytes(),
                      (tmp_path / name / "report.json").read_bytes()))
    assert blobs[0] == blobs[1]


def test_threads_env_does_not_change_output(tmp_path, capsys, monkeypatch):
    cfg = write_cfg(tmp_path, N=8, epsilon=0.01, psi={"kind": "generic", "j": 1, "profile": "auto"})
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("RUELLE_THREADS", threads)
        assert run(capsys, "spectrum", cfg, "--out", tmp_path / threads)[0] == 0
        outs.append((tmp_path / threads / "eigenvalues.csv").read_bytes())
    assert outs[0] == outs[1]


def test_c_not_below_r(tmp_path, capsys):
    code, rec = run(capsys, "spectrum", write_cfg(tmp_path, c=0.1, r=0.1), "--out", tmp_path)
    assert code == 2 and rec[-1]["error"] == "ConfigError" and "c must be < r" in rec[-1]["message"]


def test_schema_error(tmp_path, capsys):
    code, rec = run(capsys, "spectrum", write_cfg(tmp_path, matrix=[1, 2, 3]), "--out", tmp_path)
    assert code == 2
    code, _ = run(capsys, "spectrum", write_cfg(tmp_path, bogus=1), "--out", tmp_path)
    assert code == 2


def test_not_hyperbolic(tmp_path, capsys):
    code, rec = run(capsys, "spectrum", write_cfg(tmp_path, matrix=[1, 1, 0, 1]), "--out", tmp_path)
    assert code == 3 and rec[-1]["error"] == "NotHyperbolic"


def test_trace_check(tmp_path, capsys):
    cfg = write_cfg(tmp_path, N=10, psi={"kind": "generic", "j": 1, "profile": "auto"})
    code, rec = run(capsys, "trace-check", cfg, "--out", tmp_path, "--eps-list", "0.01,0.005")
    assert code == 0 and not rec
    header, rows = read_csv(tmp_path / "trace_check.csv")
    col = {h: i for i, h in enumerate(header)}
    assert len(rows) == 2
    for r in rows:
        assert r[col["matrix_minus_orbit"]] < 1e-8


def test_trace_check_warns_when_not_generic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, N=6, psi=[{"k": [0, 0], "re": [0.2, 0.0]}])
    code, rec = run(capsys, "trace-check", cfg, "--out", tmp_path, "--eps-list", "0.01")
    assert code == 0
    assert rec[0]["warning"] == "B_M = 0"


def test_fixed_points(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert run(capsys, "fixed-points", cfg, "--out", tmp_path, "--period", 2)[0] == 0
    header, rows = read_csv(tmp_path / "fixed_points.csv")
    assert header == ["x1", "x2", "weight"] and len(rows) == 12
    assert sum(r[2] for r in rows) == pytest.approx(1.0)
    code, rec = run(capsys, "fixed-points", cfg, "--out", tmp_path, "--period", 20)
    assert code == 3 and rec[-1]["error"] == "OverflowRisk"


def test_detpoly(tmp_path, capsys):
    cfg = write_cfg(tmp_path, N=8)
    assert run(capsys, "detpoly", cfg, "--out", tmp_path, "--order", 3)[0] == 0
    header, rows = read_csv(tmp_path / "detpoly.csv")
    assert len(rows) == 4
    code, rec = run(capsys, "detpoly", cfg, "--out", tmp_path, "--order", 6)
    assert code == 3 and rec[-1]["error"] == "PeriodTooDeep"


@pytest.mark.parametrize("psi, kind", [
    ({"kind": "generic", "j": 1, "profile": "auto"}, "generic"),
    ({"kind": "volume_preserving", "j": 2, "profile": {"q": 1}}, "volume_preserving"),
    ({"kind": "volume_breaking", "j": 1, "profile": {"q": 1}, "delta": 0.5}, "volume_breaking"),
])
def test_perturb_kinds(tmp_path, capsys, psi, kind):
    assert run(capsys, "perturb", write_cfg(tmp_path, psi=psi), "--out", tmp_path)[0] == 0
    rec = json.loads((tmp_path / "perturbation.json").read_text())
    assert rec["kind"] == kind and rec["matrix"] == [3, 1, 2, 1]


def test_perturb_errors(tmp_path, capsys):
    cfg = write_cfg(tmp_path, psi={"kind": "generic", "j": 1, "profile": {"q": 1, "phase": 0}})
    code, rec = run(capsys, "perturb", cfg, "--out", tmp_path)
    assert code == 3 and rec[-1]["error"] == "NotInGenericSet"
    cfg = write_cfg(tmp_path, matrix=[2, 0, 0, 1], require_unimodular=False,
                    psi={"kind": "volume_preserving", "j": 1})
    code, rec = run(capsys, "perturb", cfg, "--out", tmp_path)
    assert code == 3 and rec[-1]["error"] == "DiagonalMatrix"
    code, rec = run(capsys, "perturb", write_cfg(tmp_path), "--out", tmp_path)
    assert code == 2


def test_srb_small(tmp_path, capsys):
    cfg = write_cfg(tmp_path, N=10, epsilon=0.05,
                    psi={"kind": "volume_breaking", "j": 1, "profile": {"q": 1}, "delta": 0.5},
                    birkhoff={"n_points": 50, "n_steps": 200})
    assert run(capsys, "srb", cfg, "--out", tmp_path)[0] == 0
    rec = json.loads((tmp_path / "birkhoff.json").read_text())
    assert rec["residual"] < 1e-8 and len(rec["observables"]) == 3
    header, rows = read_csv(tmp_path / "srb.csv")
    assert header == ["n1", "n2", "re", "im"] and rows[0] == [0, 0, 1, 0]


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, N=4)
    proc = subprocess.run([sys.executable, "-m", "ruelle", "spectrum", cfg, "--out", str(tmp_path / "x")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "x" / "eigenvalues.csv").exists()
