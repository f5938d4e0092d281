"""Command-line runner: one subcommand per pipeline stage, JSON config, binary field/sinogram files."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io as tio
from . import symtensor as st
from .config import ExperimentConfig, load_config
from .errors import EXIT_CODES, CurveTomoError, FileFormat
from .geometry import artifact_flowout, classify_covector, kirillov_tuy_check
from .microlocal import (cutoff_b0, oscillatory_probe, parametrix_symbol_B0, symbol_A0)
from .recon import make_phantom, reconstruct, solenoidal_decompose
from .xray import adjoint, forward, normal

SUBCOMMANDS = ("phantom", "forward", "adjoint", "normal", "symbol", "kt-check", "classify", "flowout",
               "decompose", "reconstruct", "probe", "pairing")


def _exit_code_table() -> str:
    rows = [f"  {code:>3}  {name}" for name, code in sorted(EXIT_CODES.items(), key=lambda kv: kv[1])]
    return "exit codes:\n    0  success\n" + "\n".join(rows)


def _write_kv(path, items: dict) -> None:
    text = "".join(f"{k}={v}\n" for k, v in items.items())
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _open_csv(path):
    return open(path, "w", newline="") if path else sys.stdout


def _phantom(cfg: ExperimentConfig):
    params = dict(cfg.phantom.params)
    params.setdefault("seed", cfg.seed)
    return make_phantom(cfg.phantom.kind, params, cfg.template())


def _input_field(cfg: ExperimentConfig, path):
    if path is None:
        return _phantom(cfg)
    f = tio.read_field(path)
    if (f.n, f.m) != (cfg.n, cfg.m):
        raise FileFormat(f"{path}: field has (n, m) = ({f.n}, {f.m}), config has ({cfg.n}, {cfg.m})")
    return f


def cmd_phantom(cfg, a):
    tio.write_field(a.out, _phantom(cfg))


def cmd_forward(cfg, a):
    tio.write_sino(a.out, forward(_input_field(cfg, a.field), cfg.curve, cfg.geometry))


def cmd_adjoint(cfg, a):
    tio.write_field(a.out, adjoint(tio.read_sino(a.sino), cfg.curve, cfg.template()))


def cmd_normal(cfg, a):
    tio.write_field(a.out, normal(_input_field(cfg, a.field), cfg.curve, cfg.geometry, route=a.route))


def cmd_pairing(cfg, a):
    f = _input_field(cfg, a.field)
    g = tio.read_sino(a.sino)
    Rf = forward(f, cfg.curve, cfg.geometry, layout=g.layout)
    Rg = adjoint(g, cfg.curve, f)
    lhs, rhs = Rf.inner(g), f.inner(Rg)
    denom = Rf.norm() * g.norm()
    _write_kv(a.out, {"lhs": lhs, "rhs": rhs, "normalized_discrepancy": abs(lhs - rhs) / denom if denom else 0.0})


def _require_probes(cfg):
    if not cfg.probes:
        raise CurveTomoError("config has no probes")
    return cfg.probes


def cmd_symbol(cfg, a):
    n, m = cfg.n, cfg.m
    D = st.dim(n, m)
    mat = [f"{i}{j}" for i in range(D) for j in range(D)]
    header = (["probe"] + [f"x{k}" for k in range(n)] + [f"xi{k}" for k in range(n)] + ["status", "sigma_distance"]
              + [f"A0_{ij}" for ij in mat] + [f"B0_{ij}" for ij in mat] + [f"b0_{ij}" for ij in mat])
    first_error = None
    fh = _open_csv(a.out)
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for p, (x, xi) in enumerate(_require_probes(cfg)):
            wf = classify_covector(cfg.curve, x, xi, m)
            row = [p, *x, *xi]
            try:
                A0 = symbol_A0(cfg.curve, x, xi, m)
                B0 = parametrix_symbol_B0(A0, rank_tol=cfg.cutoff.rank_tol, gap=cfg.cutoff.gap)
                b0 = cutoff_b0(B0, wf, cfg.cutoff)
                row += ["ok", wf.sigma_distance, *A0.entries.ravel(), *B0.entries.ravel(), *b0.entries.ravel()]
            except CurveTomoError as e:
                first_error = first_error or e
                row += [type(e).__name__, wf.sigma_distance] + [""] * (3 * D * D)
            w.writerow(row)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if first_error is not None:
        raise first_error


def cmd_kt_check(cfg, a):
    k = cfg.kt
    center = cfg.template().center if k.center is None else np.asarray(k.center)
    rep = kirillov_tuy_check(cfg.curve, center, k.radius, cfg.m, k.n_planes, k.n_points, seed=cfg.seed)
    _write_kv(a.out, {"fraction_pass": rep.fraction_pass, "n_samples": rep.n_samples, "n_failures": len(rep.failures)})


def cmd_classify(cfg, a):
    n = cfg.n
    fh = _open_csv(a.out)
    try:
        w = csv.writer(fh)
        w.writerow(["probe"] + [f"x{k}" for k in range(n)] + [f"xi{k}" for k in range(n)]
                   + ["class", "sigma_distance", "n_intersections", "generic", "any_n1_independent"])
        for p, (x, xi) in enumerate(_require_probes(cfg)):
            wf = classify_covector(cfg.curve, x, xi, cfg.m)
            w.writerow([p, *x, *xi, wf.cls, wf.sigma_distance, len(wf.intersections), int(wf.generic),
                        int(wf.any_n1_independent)])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_flowout(cfg, a):
    n = cfg.n
    fh = _open_csv(a.out)
    try:
        w = csv.writer(fh)
        w.writerow(["probe"] + [f"y{k}" for k in range(n)] + [f"eta{k}" for k in range(n)])
        for p, (x, xi) in enumerate(_require_probes(cfg)):
            for y, eta in artifact_flowout(cfg.curve, x, xi):
                w.writerow([p, *y, *eta])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_decompose(cfg, a):
    fs, v = solenoidal_decompose(_input_field(cfg, a.field))
    tio.write_field(a.out_solenoidal, fs)
    if a.out_potential:
        tio.write_field(a.out_potential, v)


def cmd_reconstruct(cfg, a):
    r = cfg.recon
    f = _input_field(cfg, a.field)
    u, rep = reconstruct(f, cfg.curve, cfg.geometry, cfg.cutoff, blocks=r.blocks, pad=r.pad,
                         core_radius=r.core_radius, tube_radius_voxels=r.tube_radius_voxels,
                         apron=r.apron, truth_pad=r.truth_pad)
    tio.write_field(a.out, u)
    text = rep.to_text()
    if a.report:
        Path(a.report).write_text(text)
    else:
        sys.stdout.write(text)
    if a.csv:
        Path(a.csv).write_text(rep.to_csv())


def cmd_probe(cfg, a):
    p = cfg.probe
    if p.x is None or p.xi is None:
        raise CurveTomoError("probe section needs x and xi")
    res = oscillatory_probe(cfg.curve, p.x, p.xi, p.lambdas, p.phantom_width, m=cfg.m, grid_size=p.grid_size,
                            n_t=p.n_t)
    A0 = symbol_A0(cfg.curve, res.x0, p.xi, cfg.m).entries
    err = float(np.linalg.norm(res.estimate - A0) / np.linalg.norm(A0))
    raw_err = float(np.linalg.norm(res.raw_estimate - A0) / np.linalg.norm(A0))
    fh = _open_csv(a.out)
    try:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for k, v in [("slope", res.slope), ("raw_slope", res.raw_slope), ("frobenius_rel_error", err),
                     ("raw_frobenius_rel_error", raw_err), ("fit_residual", res.residual)]:
            w.writerow([k, v])
        D = A0.shape[0]
        for i in range(D):
            for j in range(D):
                w.writerow([f"A0_{i}{j}", A0[i, j]])
                w.writerow([f"probe_{i}{j}", res.estimate[i, j]])
    finally:
        if fh is not sys.stdout:
            fh.close()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvetomo", description=__doc__,
                                 epilog=_exit_code_table(), formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--threads", type=int, default=None, help="parallel width (default: all available cores)")
    sub = ap.add_subparsers(dest="cmd", required=True, metavar="SUBCOMMAND")

    def add(name, fn, helptext):
        p = sub.add_parser(name, help=helptext, epilog=_exit_code_table(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.set_defaults(func=fn)
        return p

    p = add("phantom", cmd_phantom, "write the configured phantom as a field file")
    p.add_argument("--out", required=True)
    p = add("forward", cmd_forward, "ray transform of a field (default: the configured phantom)")
    p.add_argument("--field")
    p.add_argument("--out", required=True)
    p = add("adjoint", cmd_adjoint, "backproject a sinogram onto the configured grid")
    p.add_argument("--sino", required=True)
    p.add_argument("--out", required=True)
    p = add("normal", cmd_normal, "normal operator R*R of a field")
    p.add_argument("--field")
    p.add_argument("--route", choices=("composed", "direct"), default="composed")
    p.add_argument("--out", required=True)
    p = add("pairing", cmd_pairing, "adjointness check <Rf, g> against <f, R*g>")
    p.add_argument("--field")
    p.add_argument("--sino", required=True)
    p.add_argument("--out")
    p = add("symbol", cmd_symbol, "A0, B0 and cut-off b0 at the configured probes (CSV)")
    p.add_argument("--out")
    p = add("kt-check", cmd_kt_check, "Monte Carlo Kirillov-Tuy fraction (key=value)")
    p.add_argument("--out")
    p = add("classify", cmd_classify, "classify the configured probe covectors (CSV)")
    p.add_argument("--out")
    p = add("flowout", cmd_flowout, "sample the artifact flowout over the probes (CSV)")
    p.add_argument("--out")
    p = add("decompose", cmd_decompose, "solenoidal/potential decomposition of a field")
    p.add_argument("--field")
    p.add_argument("--out-solenoidal", required=True)
    p.add_argument("--out-potential")
    p = add("reconstruct", cmd_reconstruct, "parametrix reconstruction with error report")
    p.add_argument("--field")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--csv")
    p = add("probe", cmd_probe, "oscillatory probe of the normal operator vs. A0 (CSV)")
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        if a.threads is not None:
            import numba

            if a.threads < 1:
                raise CurveTomoError("--threads must be positive")
            numba.set_num_threads(min(a.threads, numba.config.NUMBA_NUM_THREADS))
        cfg = load_config(a.config)
        a.func(cfg, a)
    except CurveTomoError as e:
        print(f"curvetomo {a.cmd}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"curvetomo {a.cmd}: FileFormat: {e}", file=sys.stderr)
        return FileFormat.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
