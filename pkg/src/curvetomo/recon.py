"""Solenoidal/potential splitting, parametrix application and end-to-end reconstruction."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import symtensor as st
from .errors import SupportViolation
from .geometry import Curve, hyperplane_intersections, IntersectionOptions
from .microlocal import SymbolCutoffConfig, _solenoidal_ortho, _sqrt_w, batch_symbols
from .xray import LineGeometry, TensorField, normal, symmetrized_derivative

__all__ = [
    "Phantom",
    "make_phantom",
    "bump",
    "solenoidal_decompose",
    "apply_parametrix",
    "ReconReport",
    "reconstruct",
    "lambda_tube_mask",
    "predicted_lambda_lines",
]

PHANTOM_KINDS = ("bump_tensor", "solenoidal_bump", "potential_only", "plane_wave_windowed")


class BlockTooCoarse(UserWarning):
    pass


def bump(coords: np.ndarray, center, radius: float) -> np.ndarray:
    """Smooth compactly supported window ``exp(1 - 1/(1 - r^2/R^2))``; equals 1 at the center."""
    r2 = np.sum((coords - np.asarray(center, dtype=float)) ** 2, axis=-1) / radius ** 2
    return np.where(r2 < 1, np.exp(1 - 1 / np.maximum(1 - r2, 1e-300)), 0.0)


@dataclass
class Phantom:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0


def _check_margin(grid: TensorField, center, radius: float, margin: int = 4):
    c = np.asarray(center, dtype=float)
    if np.any(c - radius < grid.lo + margin * grid.spacing) or np.any(c + radius > grid.hi - margin * grid.spacing):
        raise SupportViolation(f"support ball (center {c.tolist()}, radius {radius}) is within {margin} voxels of the boundary")


def _amplitude(params: dict, key: str, n: int, m: int, rng) -> np.ndarray:
    a = params.get(key)
    if a is None:
        return rng.normal(size=st.dim(n, m))
    return np.asarray(a, dtype=float).reshape(st.dim(n, m))


def make_phantom(kind: str | Phantom, params: dict | None, grid: TensorField) -> TensorField:
    """Deterministic test field on ``grid`` (its ``n``, ``m`` and geometry are used).

    Parameters by kind (all optional except where noted)::

        bump_tensor          centers, widths, amplitudes (random from seed when absent)
        solenoidal_bump      same, then the solenoidal part is kept
        potential_only       centers, widths, amplitudes of the order m-1 potential, fd_order
        plane_wave_windowed  center, width, xi (required), amplitude, phase
    """
    if isinstance(kind, Phantom):
        params, seed, kind = kind.params, kind.seed, kind.kind
    else:
        params = dict(params or {})
        seed = params.get("seed", 0)
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}")
    n, m = grid.n, grid.m
    rng = np.random.default_rng(seed)
    X = grid.coords()
    centers = np.atleast_2d(np.asarray(params.get("centers", [grid.center]), dtype=float))
    widths = np.broadcast_to(np.asarray(params.get("widths", 0.4), dtype=float), (len(centers),))

    if kind in ("bump_tensor", "solenoidal_bump"):
        amps = params.get("amplitudes")
        vals = np.zeros(grid.values.shape)
        for i, (c, w) in enumerate(zip(centers, widths)):
            _check_margin(grid, c, w)
            a = rng.normal(size=st.dim(n, m)) if amps is None else np.asarray(amps[i], dtype=float)
            vals += bump(X, c, w)[..., None] * a
        out = grid.with_values(vals)
        return solenoidal_decompose(out)[0] if kind == "solenoidal_bump" else out

    if kind == "potential_only":
        if m < 1:
            raise ValueError("potential fields need m >= 1")
        amps = params.get("amplitudes")
        D1 = st.dim(n, m - 1)
        vals = np.zeros(grid.dims + (D1,))
        for i, (c, w) in enumerate(zip(centers, widths)):
            _check_margin(grid, c, w)
            a = rng.normal(size=D1) if amps is None else np.asarray(amps[i], dtype=float)
            vals += bump(X, c, w)[..., None] * a
        v = TensorField(n, m - 1, grid.origin, grid.spacing, vals)
        return symmetrized_derivative(v, order=int(params.get("fd_order", 2)))

    # plane_wave_windowed
    c = np.asarray(params.get("center", grid.center), dtype=float)
    w = float(params.get("width", 0.4))
    _check_margin(grid, c, w)
    xi = np.asarray(params["xi"], dtype=float)
    a = _amplitude(params, "amplitude", n, m, rng)
    wave = bump(X, c, w) * np.cos((X - c) @ xi + float(params.get("phase", 0.0)))
    return grid.with_values(wave[..., None] * a)


# --------------------------------------------------------------------------
# Fourier helpers


def _wavenumbers(dims, spacing, kind: str, real: bool = False) -> list[np.ndarray]:
    ks = []
    for k, (N, h) in enumerate(zip(dims, spacing)):
        if real and k == len(dims) - 1:
            j = np.fft.rfftfreq(N) * N
        else:
            j = np.fft.fftfreq(N) * N
        theta = 2 * np.pi * j / N
        if kind == "spectral":
            ks.append(theta / h)
        elif kind == "central":
            ks.append(np.sin(theta) / h)
        elif kind == "central4":
            ks.append((8 * np.sin(theta) - np.sin(2 * theta)) / (6 * h))
        else:
            raise ValueError(f"unknown wavenumber kind {kind!r}")
    return ks


def _xi_grid(dims, spacing, kind: str, real: bool = False) -> np.ndarray:
    ks = _wavenumbers(dims, spacing, kind, real)
    return np.stack(np.meshgrid(*ks, indexing="ij"), axis=-1)


def solenoidal_decompose(field: TensorField, wavenumber: str = "spectral", pad: int = 1):
    """Split ``f = f_s + dv`` frequency by frequency.

    ``f_s`` is ``sigma(S)(xi) f^(xi)``; ``v^`` is the weighted least-squares
    solution of ``i xi (.) v^ = f^ - f_s^``.  Frequencies with ``xi = 0`` pass
    into ``f_s``.  ``wavenumber`` picks the discrete derivative the split is
    exact for: ``spectral``, ``central`` (2nd order differences) or ``central4``.
    With ``pad > 1`` the field is zero-extended to ``pad`` times its size
    first, so the split approximates that of the field extended by zero to
    all of R^n (the field the ray transform sees); the result is cropped
    back and is then orthogonal only up to the truncated tails.
    Returns ``(f_s, v)``.
    """
    n, m = field.n, field.m
    axes = tuple(range(n))
    pdims = tuple(int(pad) * d for d in field.dims)
    F = np.fft.fftn(field.values, s=pdims, axes=axes)
    xi = _xi_grid(pdims, field.spacing, wavenumber)
    flat_xi = xi.reshape(-1, n)
    Ff = F.reshape(-1, F.shape[-1])
    knorm = np.linalg.norm(flat_xi, axis=1)
    nz = knorm > 1e-12 * np.max(knorm)
    Fs = Ff.copy()
    if m == 0:
        v = None
        return field, v
    D1 = st.dim(n, m - 1)
    V = np.zeros((Ff.shape[0], D1), dtype=complex)
    sw = _sqrt_w(n, m)
    sl = _sqrt_w(n, m - 1)
    idx = np.nonzero(nz)[0]
    for chunk in np.array_split(idx, max(1, len(idx) // 200_000)):
        xih = flat_xi[chunk] / knorm[chunk, None]
        S = _solenoidal_ortho(xih, m)
        fo = Ff[chunk] * sw
        Fs[chunk] = np.einsum("kij,kj->ki", S, fo) / sw
        # v^ in orthonormal coords: (P^T P)^-1 P^T (f - f_s), P = product with i xi
        P = np.zeros((len(chunk), st.dim(n, m), D1))
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            P += flat_xi[chunk, k, None, None] * ((sw[:, None] * st.product_matrix(e, m)) / sl[None, :])
        rhs = np.einsum("kji,kj->ki", P, fo - Fs[chunk] * sw)
        G = np.swapaxes(P, 1, 2) @ P
        vo = np.linalg.solve(G, rhs[..., None])[..., 0] / 1j
        V[chunk] = vo / sl
    crop = tuple(slice(0, d) for d in field.dims)
    fs = np.real(np.fft.ifftn(Fs.reshape(F.shape), axes=axes))[crop]
    vv = np.real(np.fft.ifftn(V.reshape(pdims + (D1,)), axes=axes))[crop]
    return field.with_values(fs), TensorField(n, m - 1, field.origin, field.spacing, vv)


# --------------------------------------------------------------------------
# parametrix


def _partition(dims, blocks: int, apron: int = 0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-axis smooth partition-of-unity weights and block centers in index units.

    Blocks tile the core ``[apron, N - apron)``; the outermost weights stay
    at one across the apron.
    """
    weights, centers = [], []
    for N in dims:
        core = N - 2 * apron
        u = (np.arange(N) - apron) / (core - 1) * blocks - 0.5
        ws = []
        cs = []
        for b in range(blocks):
            # raised-cosine hat centered at block b, width two blocks; sums to one
            d = np.clip(np.abs(u - b), 0, 1)
            w = 0.5 * (1 + np.cos(np.pi * d))
            if b == 0:
                w = np.where(u < 0, 1.0, w)
            if b == blocks - 1:
                w = np.where(u > blocks - 1, 1.0, w)
            ws.append(w)
            cs.append(apron + (b + 0.5) / blocks * (core - 1))
        weights.append(np.array(ws))
        centers.append(np.array(cs))
    return weights, centers


@dataclass
class ParametrixStats:
    kept: int = 0
    rank_deficient: int = 0
    too_few_intersections: int = 0
    near_sigma: int = 0
    partial: int = 0  # kept with cutoff factor strictly between 0 and 1
    block_warnings: int = 0

    def add(self, status: np.ndarray, factor: np.ndarray):
        self.kept += int(np.count_nonzero((status == 0) & (factor > 0)))
        self.rank_deficient += int(np.count_nonzero(status == 1))
        self.too_few_intersections += int(np.count_nonzero(status == 2))
        self.near_sigma += int(np.count_nonzero((status == 3) | ((status == 0) & (factor == 0))))
        self.partial += int(np.count_nonzero((factor > 0) & (factor < 1)))


def apply_parametrix(g: TensorField, curve: Curve, cfg: SymbolCutoffConfig | None = None, blocks: int = 1,
                     pad: int = 2, stats: ParametrixStats | None = None, check_blocks: bool = True,
                     chunk: int = 65536, apron: int = 0) -> TensorField:
    """Frozen-coefficient application of the cut-off parametrix symbol ``b0``.

    The grid is split into ``blocks^n`` blocks; for each block center ``x_c``
    the multiplier ``b0(x_c, xi)`` is applied to the zero-padded FFT of ``g``
    and the results are blended with a smooth partition of unity.
    """
    cfg = cfg or SymbolCutoffConfig()
    stats = stats if stats is not None else ParametrixStats()
    n, m = g.n, g.m
    D = st.dim(n, m)
    pdims = tuple(int(pad * d) for d in g.dims)
    axes = tuple(range(n))
    G = np.fft.rfftn(g.values, s=pdims, axes=axes)
    xi = _xi_grid(pdims, g.spacing, "spectral", real=True).reshape(-1, n)
    Gf = G.reshape(-1, D)
    weights, centers = _partition(g.dims, blocks, apron)
    out = np.zeros(g.values.shape)
    for bidx in np.ndindex(*(blocks,) * n):
        xc = g.origin + np.array([centers[k][b] for k, b in enumerate(bidx)]) * g.spacing
        U = np.empty_like(Gf)
        for lo in range(0, len(xi), chunk):
            sym = batch_symbols(curve, xc, xi[lo:lo + chunk], m, cfg)
            stats.add(sym.status, sym.factor)
            U[lo:lo + chunk] = np.einsum("kij,kj->ki", sym.b0, Gf[lo:lo + chunk])
        if check_blocks and blocks > 1:
            stats.block_warnings += _check_block(curve, xc, g, blocks, m, cfg, apron)
        U = U.reshape(G.shape)
        u = np.fft.irfftn(U, s=pdims, axes=axes)[tuple(slice(0, d) for d in g.dims)]
        w = np.ones(g.dims)
        for k, b in enumerate(bidx):
            shape = [1] * n
            shape[k] = g.dims[k]
            w = w * weights[k][b].reshape(shape)
        out += w[..., None] * u
    return g.with_values(out)


def _check_block(curve: Curve, xc, g: TensorField, blocks: int, m: int, cfg: SymbolCutoffConfig, apron: int = 0,
                 n_probe: int = 16, threshold: float = 0.2) -> int:
    rng = np.random.default_rng(0)
    xis = rng.normal(size=(n_probe, g.n))
    half = 0.5 * (g.hi - g.lo - 2 * apron * g.spacing) / blocks
    corner = np.asarray(xc) + half * np.sign(rng.normal(size=g.n))
    a = batch_symbols(curve, xc, xis, m, cfg).b0
    b = batch_symbols(curve, corner, xis, m, cfg).b0
    na = np.linalg.norm(a.reshape(n_probe, -1), axis=1)
    nb = np.linalg.norm((a - b).reshape(n_probe, -1), axis=1)
    ok = na > 0
    if np.any(nb[ok] > threshold * na[ok]):
        warnings.warn(f"symbol varies by more than {threshold:.0%} across the block at {np.round(xc, 3).tolist()}",
                      BlockTooCoarse, stacklevel=3)
        return 1
    return 0


# --------------------------------------------------------------------------
# artifact prediction


def predicted_lambda_lines(curve: Curve, x, xis: np.ndarray, sigma_max: float,
                           opts: IntersectionOptions | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flowout lines ``gamma(t) + s theta`` for intersections with ``|gamma'(t) . xi^| < sigma_max``."""
    x = np.asarray(x, dtype=float)
    lines = []
    for xi in np.atleast_2d(xis):
        for h in hyperplane_intersections(curve, x, xi, opts):
            if abs(h.transversality) >= sigma_max:
                continue
            d = x - h.point
            r = np.linalg.norm(d)
            if r == 0:
                continue
            theta = d / r
            if any(np.linalg.norm(np.cross(theta, t0)) < 1e-3 and np.linalg.norm(np.cross(h.point - p0, t0)) < 1e-3
                   for p0, t0 in lines):
                continue
            lines.append((h.point, theta))
    return lines


def lambda_tube_mask(grid: TensorField, lines, radius: float) -> np.ndarray:
    """Voxels within ``radius`` of any of the given lines."""
    X = grid.coords()
    mask = np.zeros(grid.dims, dtype=bool)
    for p, theta in lines:
        d = X - p
        along = d @ theta
        perp = np.linalg.norm(d - along[..., None] * theta, axis=-1)
        mask |= perp <= radius
    return mask


# --------------------------------------------------------------------------
# reconstruction


@dataclass
class ReconReport:
    rel_l2_error_solenoidal: float
    artifact_energy_fraction_on_Lambda: float
    sigma_cutoff_stats: dict
    estimate_norm: float = 0.0
    solenoidal_norm: float = 0.0
    fraction_outside_Xi_Delta: float = 0.0
    tube_voxels: int = 0

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    lines.append(f"{k}.{kk}={vv}")
            else:
                lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["metric", "value"])
        for k, v in asdict(self).items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    w.writerow([f"{k}.{kk}", vv])
            else:
                w.writerow([k, v])
        return buf.getvalue()


def _demeaned(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=tuple(range(a.ndim - 1)), keepdims=True)


def _weighted_energy(f: TensorField, mask=None) -> float:
    w = st.multiplicities(f.n, f.m)
    e = np.sum(f.values ** 2 * w, axis=-1)
    return float(np.sum(e if mask is None else e[mask]))


def _dominant_covectors(f: TensorField, energy: float = 0.99, max_count: int = 64) -> tuple[np.ndarray, np.ndarray]:
    F = np.fft.rfftn(f.values, axes=tuple(range(f.n)))
    xi = _xi_grid(f.dims, f.spacing, "spectral", real=True).reshape(-1, f.n)
    p = np.sum(np.abs(F.reshape(-1, F.shape[-1])) ** 2, axis=1)
    p[np.linalg.norm(xi, axis=1) == 0] = 0
    order = np.argsort(p)[::-1]
    c = np.cumsum(p[order]) / max(p.sum(), 1e-300)
    k = int(np.searchsorted(c, energy)) + 1
    top = order[:k]
    if len(top) > max_count:
        top = top[np.linspace(0, len(top) - 1, max_count).astype(int)]
    return xi[top], p[top]


def reconstruct(f: TensorField, curve: Curve, geom: LineGeometry | None = None, cfg: SymbolCutoffConfig | None = None,
                blocks: int = 1, pad: int = 2, phantom_center=None, core_radius: float = 0.0,
                tube_radius_voxels: float = 3.0, lambda_lines=None, apron: int = 0, truth_pad: int = 1):
    """Estimate ``f_s`` from ``R f`` as ``b0(R* R f)`` and report errors.

    The Lambda tube is built from ``lambda_lines`` when given, otherwise from
    the flowout of the dominant spectral covectors of ``f`` at
    ``phantom_center`` that lie within ``delta_sigma`` of Sigma.  Voxels
    within ``core_radius`` of ``phantom_center`` are excluded from the
    artifact fraction.  With ``apron > 0`` the normal operator is evaluated
    on a grid grown by that many nodes so the FFT sees the tails of
    ``R* R f`` outside the box; the estimate is cropped back afterwards.
    ``truth_pad`` zero-pads the reference split of ``f``.  Returns
    ``(estimate, report)``.
    """
    from .geometry import classify_covector

    cfg = cfg or SymbolCutoffConfig()
    geom = geom or LineGeometry()
    g = normal(f, curve, geom, apron=apron)
    stats = ParametrixStats()
    u = apply_parametrix(g, curve, cfg, blocks=blocks, pad=pad, stats=stats, apron=apron)
    if apron:
        u = f.with_values(u.values[(slice(apron, -apron),) * f.n])
    fs, _ = solenoidal_decompose(f, pad=truth_pad)

    w = st.multiplicities(f.n, f.m)
    du, dfs = _demeaned(u.values), _demeaned(fs.values)
    fs_norm = math.sqrt(float(np.sum(dfs ** 2 * w)))
    err = math.sqrt(float(np.sum((du - dfs) ** 2 * w)))
    rel = err / fs_norm if fs_norm > 0 else (0.0 if err == 0 else math.inf)

    center = f.center if phantom_center is None else np.asarray(phantom_center, dtype=float)
    xis, power = _dominant_covectors(f)
    outside = 0.0
    for xi_k, p_k in zip(xis, power):
        if classify_covector(curve, center, xi_k, f.m).cls != "in_Xi_Delta":
            outside += p_k
    frac_out = outside / power.sum() if power.sum() > 0 else 0.0

    if lambda_lines is None:
        lambda_lines = predicted_lambda_lines(curve, center, xis, cfg.delta_sigma)
    resid = u.with_values(du - dfs)
    core = np.linalg.norm(f.coords() - center, axis=-1) < core_radius
    tube = lambda_tube_mask(f, lambda_lines, tube_radius_voxels * float(np.min(f.spacing))) & ~core
    e_all = _weighted_energy(resid, ~core)
    frac = _weighted_energy(resid, tube) / e_all if e_all > 0 else 0.0

    report = ReconReport(
        rel_l2_error_solenoidal=rel,
        artifact_energy_fraction_on_Lambda=frac,
        sigma_cutoff_stats=asdict(stats),
        estimate_norm=math.sqrt(float(np.sum(du ** 2 * w))) * math.sqrt(f.voxel_volume),
        solenoidal_norm=fs_norm * math.sqrt(f.voxel_volume),
        fraction_outside_Xi_Delta=float(frac_out),
        tube_voxels=int(tube.sum()),
    )
    return u, report
