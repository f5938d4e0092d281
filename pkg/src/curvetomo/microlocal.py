"""Principal symbol of the normal operator, its parametrix and the cutoff.

Symbol matrices act on coefficient vectors of :mod:`symtensor`.  They are
self-adjoint for the weighted fiber product ``<u, v> = u^T W v``, so
``W^(1/2) E W^(-1/2)`` is an ordinary symmetric matrix; spectral work is done in
those orthonormal coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import symtensor as st
from .errors import InsufficientDecay, NoIntersections, NotInXiDelta, RankDeficient
from .geometry import (
    Curve,
    IntersectionOptions,
    WavefrontElement,
    batch_intersections,
    hyperplane_intersections,
)

__all__ = [
    "SymbolMatrix",
    "SymbolCutoffConfig",
    "symbol_A0",
    "solenoidal_symbol",
    "parametrix_symbol_B0",
    "cutoff_b0",
    "cutoff_factor",
    "smoothstep",
    "batch_symbols",
    "ProbeResult",
    "interpolation_transfer",
    "oscillatory_probe",
]


def _sqrt_w(n: int, m: int) -> np.ndarray:
    return np.sqrt(st.multiplicities(n, m))


@dataclass(frozen=True)
class SymbolMatrix:
    n: int
    m: int
    entries: np.ndarray
    x: np.ndarray | None = None
    xi: np.ndarray | None = None
    kind: str = ""

    def symmetric_form(self) -> np.ndarray:
        s = _sqrt_w(self.n, self.m)
        return (s[:, None] * self.entries) / s[None, :]

    @classmethod
    def from_symmetric(cls, n: int, m: int, sym: np.ndarray, **kw) -> "SymbolMatrix":
        s = _sqrt_w(n, m)
        return cls(n, m, (sym / s[:, None]) * s[None, :], **kw)

    def apply(self, u: st.SymTensor) -> st.SymTensor:
        return st.SymTensor(self.n, self.m, self.entries @ u.coeffs)

    def __matmul__(self, other: "SymbolMatrix") -> "SymbolMatrix":
        return SymbolMatrix(self.n, self.m, self.entries @ other.entries, self.x, self.xi)


@dataclass(frozen=True)
class SymbolCutoffConfig:
    delta_sigma: float = 0.1
    transition_width: float = 0.1
    xi_min: float = 0.0
    xi_max: float = math.inf
    band_rolloff: float = 0.1
    rank_tol: float = 1e-10
    gap: float = 1e3

    def __post_init__(self):
        if not (0 < self.transition_width <= self.delta_sigma):
            raise ValueError("need 0 < transition_width <= delta_sigma")
        if self.xi_min < 0 or self.xi_max <= self.xi_min:
            raise ValueError("need 0 <= xi_min < xi_max")


def smoothstep(u):
    """Quintic ``6u^5 - 15u^4 + 10u^3`` clamped to [0, 1] (C^2 at both seams)."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6 * u - 15) + 10)


def cutoff_factor(sigma, xi_norm, cfg: SymbolCutoffConfig):
    """Scalar window: 1 deep inside the admissible set, smooth roll-off to 0."""
    s = smoothstep((np.asarray(sigma, dtype=float) - (cfg.delta_sigma - cfg.transition_width)) / cfg.transition_width)
    k = np.asarray(xi_norm, dtype=float)
    if cfg.xi_min > 0:
        s = s * smoothstep((k - cfg.xi_min) / (cfg.band_rolloff * cfg.xi_min))
    if math.isfinite(cfg.xi_max):
        s = s * smoothstep((cfg.xi_max - k) / (cfg.band_rolloff * cfg.xi_max))
    return s


# --------------------------------------------------------------------------
# pointwise symbols


def symbol_A0(curve: Curve, x, xi, m: int, opts: IntersectionOptions | None = None) -> SymbolMatrix:
    """``sum_q 2 pi w_q w_q^T W / (|xi| |gamma'(t_q) . xi^| |gamma(t_q) - x|^(n-2))``, ``w_q = omega_q^m``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = x.size
    hits = hyperplane_intersections(curve, x, xi, opts)
    if not hits:
        raise NoIntersections(f"x + xi^perp misses the curve at x={x}, xi={xi}")
    if any(h.tangential for h in hits):
        raise NotInXiDelta("tangential intersection present")
    k = float(np.linalg.norm(xi))
    W = st.multiplicities(n, m)
    E = np.zeros((st.dim(n, m),) * 2)
    for h in hits:
        d = x - h.point
        r = float(np.linalg.norm(d))
        if r == 0:
            raise NotInXiDelta("x lies on the curve")
        w = st.sym_powers(d / r, m)
        c = 2 * math.pi / (k * abs(h.transversality) * r ** (n - 2))
        E += c * np.outer(w, w * W)
    return SymbolMatrix(n, m, E, x, xi, "A0")


def _solenoidal_ortho(xih: np.ndarray, m: int) -> np.ndarray:
    """Projector onto ker(i_xi) in orthonormal coordinates, batched over ``xih`` (..., n)."""
    n = xih.shape[-1]
    D = st.dim(n, m)
    if m == 0:
        return np.broadcast_to(np.eye(1), xih.shape[:-1] + (1, 1)).copy()
    sw = _sqrt_w(n, m)
    sl = _sqrt_w(n, m - 1)
    # range of v -> xi (.) v, written in orthonormal coordinates
    P = np.zeros(xih.shape[:-1] + (D, st.dim(n, m - 1)))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        Pk = (sw[:, None] * st.product_matrix(e, m)) / sl[None, :]
        P += xih[..., k, None, None] * Pk
    G = np.swapaxes(P, -1, -2) @ P
    Q = P @ np.linalg.solve(G, np.swapaxes(P, -1, -2))
    return np.eye(D) - Q


def solenoidal_symbol(xi, n: int, m: int) -> SymbolMatrix:
    """Orthogonal projector onto ``{u : i_xi u = 0}`` acting on coefficients."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise ValueError("xi must be nonzero")
    S = _solenoidal_ortho(xi / np.linalg.norm(xi), m)
    return SymbolMatrix.from_symmetric(n, m, S, xi=xi, kind="sigma_S")


def _truncated_pinv(S: np.ndarray, L: int, rank_tol: float, gap: float) -> np.ndarray:
    lam, V = np.linalg.eigh(S)
    lam, V = lam[::-1], V[:, ::-1]
    if lam[0] <= 0 or lam[L - 1] <= rank_tol * lam[0]:
        raise RankDeficient(f"lambda_L/lambda_1 = {lam[L - 1] / lam[0] if lam[0] > 0 else 0:.3g}")
    if L < len(lam) and lam[L] > 0 and lam[L - 1] / lam[L] < gap:
        raise RankDeficient(f"eigenvalue gap {lam[L - 1] / lam[L]:.3g} below {gap:g}")
    VL = V[:, :L]
    return (VL / lam[:L]) @ VL.T


def parametrix_symbol_B0(A0: SymbolMatrix, xi=None, rank_tol: float = 1e-10, gap: float = 1e3) -> SymbolMatrix:
    """``sigma(S) P D^- P^T`` with ``D^-`` inverting the top ``L(n, m)`` eigenvalues."""
    xi = A0.xi if xi is None else np.asarray(xi, dtype=float)
    n, m = A0.n, A0.m
    L = st.generic_count(n, m)
    pinv = _truncated_pinv(A0.symmetric_form(), L, rank_tol, gap)
    S = _solenoidal_ortho(xi / np.linalg.norm(xi), m)
    return SymbolMatrix.from_symmetric(n, m, S @ pinv, x=A0.x, xi=xi, kind="B0")


def cutoff_b0(B0: SymbolMatrix, wf: WavefrontElement, cfg: SymbolCutoffConfig) -> SymbolMatrix:
    if wf.cls != "in_Xi_Delta":
        return SymbolMatrix(B0.n, B0.m, np.zeros_like(B0.entries), B0.x, B0.xi, "b0")
    f = float(cutoff_factor(wf.sigma_distance, np.linalg.norm(wf.xi), cfg))
    return SymbolMatrix(B0.n, B0.m, f * B0.entries, B0.x, B0.xi, "b0")


# --------------------------------------------------------------------------
# batched evaluation on frequency grids


@dataclass
class BatchSymbols:
    """Cut-off parametrix symbols for many covectors at one base point.

    ``b0`` holds coefficient-space matrices (N, D, D); ``status`` is 0 for
    kept, 1 rank deficient, 2 too few intersections, 3 tangential/near Sigma.
    """

    b0: np.ndarray
    factor: np.ndarray
    sigma: np.ndarray
    status: np.ndarray


def batch_symbols(curve: Curve, x, xis: np.ndarray, m: int, cfg: SymbolCutoffConfig,
                  tol_tangent: float = 1e-6, n_samples: int = 4096) -> BatchSymbols:
    x = np.asarray(x, dtype=float)
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    N, n = xis.shape
    D = st.dim(n, m)
    L = st.generic_count(n, m)
    knorm = np.linalg.norm(xis, axis=1)
    ok = knorm > 0
    xih = np.zeros_like(xis)
    xih[ok] = xis[ok] / knorm[ok, None]
    sel = np.nonzero(ok)[0]
    hits = batch_intersections(curve, x, xih[sel], n_samples)
    idx = sel[hits.index]
    d = x - hits.point
    r = np.linalg.norm(d, axis=1)
    good = r > 0
    idx, d, r, dg = idx[good], d[good], r[good], hits.dgamma[good]
    tr = np.abs(np.einsum("ij,ij->i", dg, xih[idx]))
    sigma = np.full(N, np.inf)
    np.minimum.at(sigma, idx, tr)
    count = np.bincount(idx, minlength=N)
    u = st.sym_powers(d / r[:, None], m) * _sqrt_w(n, m)
    with np.errstate(divide="ignore"):
        c = 2 * np.pi / (knorm[idx] * tr * r ** (n - 2))
    c[~np.isfinite(c)] = 0.0
    A = np.zeros((N, D, D))
    for a in range(D):
        for b in range(a, D):
            A[:, a, b] = np.bincount(idx, weights=c * u[:, a] * u[:, b], minlength=N)
            A[:, b, a] = A[:, a, b]

    factor = cutoff_factor(sigma, knorm, cfg)
    status = np.zeros(N, dtype=np.int8)
    status[count < L] = 2
    status[(status == 0) & (sigma < tol_tangent)] = 3
    factor = np.where(status == 0, factor, 0.0)
    live = np.nonzero(factor > 0)[0]
    b0 = np.zeros((N, D, D))
    if live.size:
        lam, V = np.linalg.eigh(A[live])
        lam, V = lam[:, ::-1], V[:, :, ::-1]
        deficient = (lam[:, 0] <= 0) | (lam[:, L - 1] <= cfg.rank_tol * lam[:, 0])
        if L < D:
            with np.errstate(divide="ignore", invalid="ignore"):
                deficient |= (lam[:, L] > 0) & (lam[:, L - 1] / lam[:, L] < cfg.gap)
        lam_inv = np.where(deficient[:, None], 0.0, 1.0 / np.where(lam[:, :L] > 0, lam[:, :L], 1.0))
        VL = V[:, :, :L]
        pinv = (VL * lam_inv[:, None, :]) @ np.swapaxes(VL, 1, 2)
        S = _solenoidal_ortho(xih[live], m)
        B = S @ pinv
        sw = _sqrt_w(n, m)
        B = (B / sw[None, :, None]) * sw[None, None, :]
        b0[live] = B * factor[live, None, None]
        st_live = status[live]
        st_live[deficient] = 1
        status[live] = st_live
        factor[live[deficient]] = 0.0
    return BatchSymbols(b0, factor, sigma, status)


# --------------------------------------------------------------------------
# oscillatory probe


@dataclass
class ProbeResult:
    lambdas: np.ndarray
    responses: np.ndarray  # (n_lambda, D, D): column j is the response to basis tensor j
    transfer: np.ndarray  # interpolation transfer factor per lambda (1 when uncorrected)
    slope: float  # fitted power of lambda after transfer correction
    raw_slope: float
    estimate: np.ndarray  # fitted coefficient of lambda^-1 (coefficient space)
    raw_estimate: np.ndarray
    residual: float
    x0: np.ndarray = field(default_factory=lambda: np.zeros(0))


def interpolation_transfer(lam: float, h: float, terms: int = 200) -> float:
    """Response ratio of a sampled, linearly interpolated ``cos(lam y)`` under an order -1 multiplier.

    The interpolant of node samples is ``sum_j sinc^2((lam + 2 pi j / h) h / 2)
    cos((lam + 2 pi j / h) y)``; each alias is weighted by ``lam / |lam_j|``.
    """
    j = np.arange(-terms, terms + 1)
    lj = lam + 2 * np.pi * j / h
    return float(np.sum(np.sinc(lj * h / (2 * np.pi)) ** 2 * lam / np.abs(lj)))


def _fit(lambdas, resp):
    y = resp.reshape(len(lambdas), -1)
    A = np.einsum("l,lk->k", 1 / lambdas, y) / np.sum(1 / lambdas ** 2)
    norms = np.linalg.norm(y, axis=1)
    slope = float(np.polyfit(np.log(lambdas), np.log(norms), 1)[0])
    res = float(np.linalg.norm(np.outer(1 / lambdas, A) - y) / np.linalg.norm(y))
    return A, slope, res


def oscillatory_probe(curve: Curve, x0, xi0, lambdas: Sequence[float], phantom_width: float, m: int = 1,
                      grid_size: int = 64, half_width: float = 1.0, n_t: int = 4096,
                      max_residual: float = 0.2, correct_interpolation: bool = True) -> ProbeResult:
    """Measure the normal operator on windowed plane waves at ``x0``.

    For every basis tensor ``u`` the field ``chi(x) cos(lam (x - x0) . xi0) u``
    (``chi`` a compact smooth bump of radius ``phantom_width``) is sampled on a
    ``grid_size^n`` grid and the direct kernel route is evaluated at ``x0``,
    which is snapped to the nearest node.  The responses are fitted by
    ``A / lam`` in least squares; ``A`` estimates the principal symbol.

    With ``correct_interpolation`` the responses are divided by
    :func:`interpolation_transfer` first.  That needs ``xi0`` along a grid axis,
    where the multilinear interpolant of the wave is exactly one-dimensional.
    """
    from .xray import LineGeometry, TensorField, normal_at

    xi0 = np.asarray(xi0, dtype=float)
    xi0 = xi0 / np.linalg.norm(xi0)
    n = xi0.size
    D = st.dim(n, m)
    grid = TensorField.centered(n, m, grid_size, half_width)
    h = float(grid.spacing[0])
    x0 = grid.origin + np.round((np.asarray(x0, dtype=float) - grid.origin) / h) * h
    lambdas = np.asarray(lambdas, dtype=float)
    if correct_interpolation and np.count_nonzero(np.abs(xi0) > 1e-12) != 1:
        raise ValueError("interpolation correction needs xi0 along a grid axis")
    if np.max(lambdas) * h >= np.pi:
        raise InsufficientDecay(f"lambda h = {np.max(lambdas) * h:.3g} is beyond the grid Nyquist limit")
    X = grid.coords()
    rho2 = np.sum((X - x0) ** 2, axis=-1) / phantom_width ** 2
    chi = np.where(rho2 < 1, np.exp(1 - 1 / np.maximum(1 - rho2, 1e-300)), 0.0)
    phase = (X - x0) @ xi0
    geom = LineGeometry(n_t=n_t)
    resp = np.zeros((len(lambdas), D, D))
    for i, lam in enumerate(lambdas):
        wave = chi * np.cos(lam * phase)
        for j in range(D):
            vals = np.zeros(grid.values.shape)
            vals[..., j] = wave
            resp[i, :, j] = normal_at(grid.with_values(vals), curve, x0[None], geom)[0]
    if not np.any(resp):
        z = np.zeros((D, D))
        return ProbeResult(lambdas, resp, np.ones(len(lambdas)), math.nan, math.nan, z, z, 0.0, x0)
    transfer = np.array([interpolation_transfer(l, h) for l in lambdas]) if correct_interpolation else np.ones(len(lambdas))
    raw, raw_slope, _ = _fit(lambdas, resp)
    est, slope, residual = _fit(lambdas, resp / transfer[:, None, None])
    if residual > max_residual:
        raise InsufficientDecay(f"lambda-sweep fit residual {residual:.3g} exceeds {max_residual}")
    return ProbeResult(lambdas, resp, transfer, slope, raw_slope, est.reshape(D, D), raw.reshape(D, D), residual, x0)
