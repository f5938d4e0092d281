import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from curvetomo import io as tio
from curvetomo.cli import build_parser, main
from curvetomo.config import load_config
from curvetomo.errors import EXIT_CODES
from curvetomo.recon import make_phantom

CONFIG = {
    "n": 3, "m": 1, "seed": 3,
    "curve": {"kind": "union_of_lines", "directions": [[1, 0, 0], [0, 1, 0]],
              "points": [[0, 0, 2.5], [0, 0, -2.5]], "t_range": [-3, 3]},
    "grid": {"N": 24},
    "geometry": {"N_t": 128, "N_dir": 4096},
    "phantom": {"kind": "bump_tensor", "params": {"widths": 0.5}},
    "probes": [{"x": [1, 0, 0.5], "xi": [1, 0, 0]}, {"x": [0.2, 0.1, 0], "xi": [1, 1, 0]},
               {"x": [0, 0, 0], "xi": [0, 0, 1]}],
    "recon": {"blocks": 1, "pad": 2},
}

KT_CONFIG = dict(CONFIG, curve={"kind": "union_of_lines", "directions": [[1, 0, 0], [0, 1, 0]],
                                "t_range": [-1e4, 1e4]}, kt={"radius": 1.0, "n_planes": 100, "n_points": 10})

TANGENT_CONFIG = dict(CONFIG, curve={"kind": "union", "parts": [
    {"kind": "circle", "center": [0, 0, 0], "radius": 1.0},
    {"kind": "union_of_lines", "directions": [[1, 0, 0]], "points": [[0, 0, 3]], "t_range": [-4, 4]}]},
    probes=[{"x": [1, 0.5, 1], "xi": [1, 0, 0]}])


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(CONFIG))
    return p


def run(*args) -> int:
    return main([str(a) for a in args])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def read_kv(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_phantom_round_trip_and_determinism(cfg_path, tmp_path):
    a, b = tmp_path / "a.tfld", tmp_path / "b.tfld"
    assert run("phantom", "--config", cfg_path, "--out", a) == 0
    assert run("phantom", "--config", cfg_path, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    cfg = load_config(cfg_path)
    ref = make_phantom("bump_tensor", {"widths": 0.5, "seed": 3}, cfg.template())
    assert tio.read_field(a).values.tobytes() == ref.values.tobytes()


def test_forward_adjoint_pairing(cfg_path, tmp_path):
    s, r, kv = tmp_path / "s.sgrm", tmp_path / "r.tfld", tmp_path / "p.txt"
    assert run("forward", "--config", cfg_path, "--out", s) == 0
    assert run("adjoint", "--config", cfg_path, "--sino", s, "--out", r) == 0
    sino = tio.read_sino(s)
    noise = tmp_path / "g.sgrm"
    tio.write_sino(noise, sino.with_values(np.random.default_rng(0).normal(size=sino.values.shape)))
    assert run("pairing", "--config", cfg_path, "--sino", noise, "--out", kv) == 0
    d = read_kv(kv)
    assert float(d["normalized_discrepancy"]) <= 1e-2
    # determinism of the whole chain
    s2 = tmp_path / "s2.sgrm"
    run("forward", "--config", cfg_path, "--out", s2)
    assert s.read_bytes() == s2.read_bytes()


def test_normal_and_decompose(cfg_path, tmp_path):
    out, fs, v = tmp_path / "n.tfld", tmp_path / "fs.tfld", tmp_path / "v.tfld"
    assert run("normal", "--config", cfg_path, "--out", out) == 0
    assert tio.read_field(out).values.shape == (24, 24, 24, 3)
    assert run("decompose", "--config", cfg_path, "--out-solenoidal", fs, "--out-potential", v) == 0
    assert tio.read_field(v).m == 0


def test_kt_check_lines(tmp_path):
    p = tmp_path / "kt.json"
    p.write_text(json.dumps(KT_CONFIG))
    out = tmp_path / "kt.txt"
    assert run("kt-check", "--config", p, "--out", out) == 0
    d = read_kv(out)
    assert float(d["fraction_pass"]) >= 0.99 and int(d["n_samples"]) == 1000


def test_symbol_csv(cfg_path, tmp_path):
    out = tmp_path / "sym.csv"
    code = run("symbol", "--config", cfg_path, "--out", out)
    rows = read_csv(out)
    assert len(rows) == 3
    assert {"A0_00", "B0_22", "b0_12", "sigma_distance", "status"} <= set(rows[0])
    # probe 0 meets one line only (rank 1 < L = 2), probe 2's plane z = 0 misses both lines;
    # every row is written and the exit code is that of the first failure
    assert [r["status"] for r in rows] == ["RankDeficient", "ok", "NoIntersections"]
    assert code == EXIT_CODES["RankDeficient"]
    A = np.array([float(rows[1][f"A0_{i}{j}"]) for i in range(3) for j in range(3)]).reshape(3, 3)
    assert np.allclose(A, A.T)


def test_classify_and_flowout(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps(TANGENT_CONFIG))
    c, f = tmp_path / "c.csv", tmp_path / "f.csv"
    assert run("classify", "--config", p, "--out", c) == 0
    assert read_csv(c)[0]["class"] == "in_Xi_Lambda"
    assert run("flowout", "--config", p, "--out", f) == 0
    rows = read_csv(f)
    assert len(rows) == 16 and {"y0", "eta2"} <= set(rows[0])


def test_reconstruct_report(tmp_path):
    d = dict(CONFIG, grid={"N": 20}, phantom={"kind": "solenoidal_bump", "params": {"widths": 0.5}})
    p = tmp_path / "r.json"
    p.write_text(json.dumps(d))
    out, rep, tab = tmp_path / "u.tfld", tmp_path / "rep.txt", tmp_path / "rep.csv"
    assert run("reconstruct", "--config", p, "--out", out, "--report", rep, "--csv", tab) == 0
    kv = read_kv(rep)
    for key in ("rel_l2_error_solenoidal", "artifact_energy_fraction_on_Lambda", "sigma_cutoff_stats.kept"):
        assert np.isfinite(float(kv[key]))
    assert 0 <= float(kv["artifact_energy_fraction_on_Lambda"]) <= 1
    assert read_csv(tab)[0]["metric"] == "rel_l2_error_solenoidal"


def test_exit_codes(cfg_path, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(CONFIG, bogus=1)))
    assert run("phantom", "--config", bad, "--out", tmp_path / "x") == EXIT_CODES["ConfigParse"]
    f = tmp_path / "f.tfld"
    run("phantom", "--config", cfg_path, "--out", f)
    f.write_bytes(f.read_bytes()[:-1])
    assert run("normal", "--config", cfg_path, "--field", f, "--out", tmp_path / "y") == EXIT_CODES["FileFormat"]
    assert run("adjoint", "--config", cfg_path, "--sino", tmp_path / "nope", "--out", tmp_path / "z") == 3
    assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)


def test_help_lists_exit_codes():
    text = build_parser().format_help()
    for name, code in EXIT_CODES.items():
        assert name in text and str(code) in text
    res = subprocess.run([sys.executable, "-m", "curvetomo.cli", "reconstruct", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "RankDeficient" in res.stdout and "--threads" not in res.stdout
