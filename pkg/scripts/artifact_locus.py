"""Sweep the engineered-tangency experiment: residual energy on the predicted Lambda tube.

Usage: python3 scripts/artifact_locus.py [--grid 64] [--k 60 45] [--width 0.1]
"""

import argparse

import numpy as np

from curvetomo.geometry import Curve
from curvetomo.recon import make_phantom, predicted_lambda_lines, reconstruct
from curvetomo.xray import LineGeometry, TensorField

# the plane through the origin with normal (1.9, 0, 3.1) touches this circle at (3.1, 0, -1.9)
CIRCLE = Curve.circle([-0.4, 0, -1.9], 3.5)
TANGENT = np.array([1.9, 0.0, 3.1]) / np.linalg.norm([1.9, 0.0, 3.1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--k", type=float, nargs="+", default=[60.0])
    ap.add_argument("--width", type=float, default=0.1)
    ap.add_argument("--core", type=float, nargs="+", default=[1.5], help="core radius in phantom widths")
    ap.add_argument("--n-dir", type=int, default=16384)
    a = ap.parse_args()

    G = TensorField.centered(3, 1, a.grid)
    lines = predicted_lambda_lines(CIRCLE, G.center, TANGENT[None], 0.5)
    theta = lines[0][1]
    print("k,core,phantom,rel_l2_error_solenoidal,fraction_on_Lambda")
    for k in a.k:
        for name, xi, amp in [("tangent", k * TANGENT, theta), ("transversal", k * np.array([1.0, 0, 0]), [0, 0, 1])]:
            f = make_phantom("plane_wave_windowed", {"width": a.width, "xi": list(xi), "amplitude": list(amp)}, G)
            for c in a.core:
                _, rep = reconstruct(f, CIRCLE, LineGeometry(n_dir=a.n_dir), apron=a.grid // 2, truth_pad=3,
                                     core_radius=c * a.width, lambda_lines=lines)
                print(f"{k},{c},{name},{rep.rel_l2_error_solenoidal:.4f},{rep.artifact_energy_fraction_on_Lambda:.4f}",
                      flush=True)


if __name__ == "__main__":
    main()
