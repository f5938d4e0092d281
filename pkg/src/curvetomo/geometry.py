"""Source curves, hyperplane/curve intersections and covector classification.

A :class:`Curve` is a union of smooth components (line segments, circles,
helices, sampled splines).  Components share one global parameter: the
component ``k`` occupies ``[offset_k, offset_k + length_k]`` with a unit gap
before the next component, so a single ``t`` identifies a curve point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from . import symtensor as st
from .errors import IntersectionOverflow, RootRefinementFailure

__all__ = [
    "LineSegment",
    "Circle",
    "Helix",
    "SampledSpline",
    "Curve",
    "IntersectionOptions",
    "IntersectionPoint",
    "WavefrontElement",
    "GenericityResult",
    "KTReport",
    "hyperplane_intersections",
    "batch_intersections",
    "genericity_rank",
    "power_singular_values",
    "kirillov_tuy_check",
    "classify_covector",
    "artifact_flowout",
    "flowout_lines",
]

_GAP = 1.0


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero vector")
    return v / nv


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal vectors spanning the plane orthogonal to ``normal`` (R^3)."""
    nrm = _unit(normal)
    helper = np.eye(3)[np.argmin(np.abs(nrm))]
    a = _unit(np.cross(nrm, helper))
    b = np.cross(nrm, a)
    return a, b


# --------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class LineSegment:
    point: np.ndarray
    direction: np.ndarray
    t0: float = -1.0
    t1: float = 1.0
    kind = "line"
    closed = False

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))

    @property
    def interval(self) -> tuple[float, float]:
        return (float(self.t0), float(self.t1))

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        return self.point + t[..., None] * self.direction

    def dgamma(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.direction, t.shape + self.direction.shape).copy()

    def ddgamma(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + self.direction.shape)

    def batch_roots(self, x, xih, n_samples):
        den = xih @ self.direction
        num = xih @ (x - self.point)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / den
        ok = (den != 0) & (t >= self.t0) & (t <= self.t1)
        idx = np.nonzero(ok)[0]
        return idx, t[idx]

    def to_dict(self) -> dict:
        return {"kind": "line", "point": self.point.tolist(), "direction": self.direction.tolist(),
                "t0": self.t0, "t1": self.t1}


@dataclass(frozen=True)
class Circle:
    center: np.ndarray
    radius: float
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    kind = "circle"
    closed = True

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        if self.center.size == 2:
            object.__setattr__(self, "_a", np.array([1.0, 0.0]))
            object.__setattr__(self, "_b", np.array([0.0, 1.0]))
        else:
            a, b = _plane_basis(self.normal)
            object.__setattr__(self, "_a", a)
            object.__setattr__(self, "_b", b)

    @property
    def interval(self) -> tuple[float, float]:
        return (0.0, 2 * math.pi)

    def gamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.center + self.radius * (np.cos(t) * self._a + np.sin(t) * self._b)

    def dgamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.radius * (-np.sin(t) * self._a + np.cos(t) * self._b)

    def ddgamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return -self.radius * (np.cos(t) * self._a + np.sin(t) * self._b)

    def batch_roots(self, x, xih, n_samples):
        # g(t) = A cos t + B sin t + C
        A = self.radius * (xih @ self._a)
        B = self.radius * (xih @ self._b)
        C = xih @ (self.center - x)
        R = np.hypot(A, B)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = -C / R
        ok = R > 0
        ok &= np.abs(c) <= 1
        idx = np.nonzero(ok)[0]
        phi = np.arctan2(B[idx], A[idx])
        d = np.arccos(c[idx])
        t = np.concatenate([phi + d, phi - d]) % (2 * math.pi)
        ii = np.concatenate([idx, idx])
        # a tangency yields the same root twice
        keep = np.concatenate([np.ones(idx.size, bool), d > 0])
        return ii[keep], t[keep]

    def to_dict(self) -> dict:
        return {"kind": "circle", "center": self.center.tolist(), "radius": self.radius,
                "normal": self.normal.tolist()}


@dataclass(frozen=True)
class Helix:
    center: np.ndarray
    radius: float
    pitch: float
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    t0: float = 0.0
    t1: float = 4 * math.pi
    kind = "helix"
    closed = False

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "axis", _unit(self.axis))
        a, b = _plane_basis(self.axis)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_b", b)

    @property
    def interval(self) -> tuple[float, float]:
        return (float(self.t0), float(self.t1))

    def gamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.center + self.radius * (np.cos(t) * self._a + np.sin(t) * self._b) + self.pitch * t * self.axis

    def dgamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.radius * (-np.sin(t) * self._a + np.cos(t) * self._b) + self.pitch * self.axis

    def ddgamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return -self.radius * (np.cos(t) * self._a + np.sin(t) * self._b)

    def batch_roots(self, x, xih, n_samples):
        return _dense_batch_roots(self, x, xih, n_samples)

    def to_dict(self) -> dict:
        return {"kind": "helix", "center": self.center.tolist(), "radius": self.radius, "pitch": self.pitch,
                "axis": self.axis.tolist(), "t0": self.t0, "t1": self.t1}


@dataclass(frozen=True)
class SampledSpline:
    knots: np.ndarray
    closed: bool = False
    kind = "sampled_spline"

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", k)
        if self.closed:
            pts = np.vstack([k, k[:1]])
            spl = CubicSpline(np.arange(len(pts)), pts, bc_type="periodic")
        else:
            spl = CubicSpline(np.arange(len(k)), k, bc_type="natural")
        object.__setattr__(self, "_spl", spl)

    @property
    def interval(self) -> tuple[float, float]:
        n = len(self.knots)
        return (0.0, float(n if self.closed else n - 1))

    def gamma(self, t):
        return self._spl(np.asarray(t, dtype=float))

    def dgamma(self, t):
        return self._spl(np.asarray(t, dtype=float), 1)

    def ddgamma(self, t):
        return self._spl(np.asarray(t, dtype=float), 2)

    def batch_roots(self, x, xih, n_samples):
        return _dense_batch_roots(self, x, xih, n_samples)

    def to_dict(self) -> dict:
        return {"kind": "sampled_spline", "knots": self.knots.tolist(), "closed": self.closed}


def component_from_dict(d: dict):
    kind = d["kind"]
    if kind == "line":
        return LineSegment(d["point"], d["direction"], d.get("t0", -1.0), d.get("t1", 1.0))
    if kind == "circle":
        return Circle(d["center"], d["radius"], d.get("normal", [0.0, 0.0, 1.0]))
    if kind == "helix":
        return Helix(d["center"], d["radius"], d["pitch"], d.get("axis", [0.0, 0.0, 1.0]),
                     d.get("t0", 0.0), d.get("t1", 4 * math.pi))
    if kind == "sampled_spline":
        return SampledSpline(d["knots"], d.get("closed", False))
    raise ValueError(f"unknown curve component kind {kind!r}")


def _dense_batch_roots(comp, x, xih, n_samples):
    """Sign-change roots for many covectors at once, refined by bisection."""
    a, b = comp.interval
    ts = np.linspace(a, b, n_samples + 1)
    pts = comp.gamma(ts) - x
    idx_all, t_all = [], []
    chunk = max(1, 4_000_000 // len(ts))
    for start in range(0, len(xih), chunk):
        xc = xih[start:start + chunk]
        g = xc @ pts.T
        s = np.sign(g)
        cross = s[:, :-1] * s[:, 1:] < 0
        zero = s[:, :-1] == 0
        bi, si = np.nonzero(cross | zero)
        lo = ts[si].copy()
        hi = ts[si + 1].copy()
        glo = g[bi, si]
        dirs = xc[bi]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm = np.einsum("ij,ij->i", comp.gamma(mid) - x, dirs)
            left = np.sign(gm) == np.sign(glo)
            lo = np.where(left, mid, lo)
            glo = np.where(left, gm, glo)
            hi = np.where(left, hi, mid)
        t = np.where(zero[bi, si], ts[si], 0.5 * (lo + hi))
        idx_all.append(bi + start)
        t_all.append(t)
    if not idx_all:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(idx_all), np.concatenate(t_all)


# --------------------------------------------------------------------------
# curve


@dataclass(frozen=True)
class Curve:
    """Union of parametrized components sharing one global parameter."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("curve needs at least one component")
        object.__setattr__(self, "components", comps)
        offsets, o = [], 0.0
        for c in comps:
            a, b = c.interval
            offsets.append(o)
            o += (b - a) + _GAP
        object.__setattr__(self, "_offsets", np.array(offsets))

    # constructors ---------------------------------------------------------
    @classmethod
    def union_of_lines(cls, directions, points=None, t_range=(-1.0, 1.0)) -> "Curve":
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        if points is None:
            points = np.zeros_like(directions)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(tuple(LineSegment(p, d, *t_range) for p, d in zip(points, directions)))

    @classmethod
    def circle(cls, center, radius, normal=(0.0, 0.0, 1.0)) -> "Curve":
        return cls((Circle(center, radius, normal),))

    @classmethod
    def helix(cls, center, radius, pitch, axis=(0.0, 0.0, 1.0), t_range=(0.0, 4 * math.pi)) -> "Curve":
        return cls((Helix(center, radius, pitch, axis, *t_range),))

    @classmethod
    def spline(cls, knots, closed=False) -> "Curve":
        return cls((SampledSpline(knots, closed),))

    @classmethod
    def union(cls, *curves: "Curve") -> "Curve":
        return cls(tuple(c for cv in curves for c in cv.components))

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        return cls(tuple(component_from_dict(c) for c in d["components"]))

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components]}

    # geometry -------------------------------------------------------------
    @property
    def n(self) -> int:
        return int(np.asarray(self.components[0].gamma(0.0)).size)

    @property
    def kind(self) -> str:
        kinds = {c.kind for c in self.components}
        if kinds == {"line"}:
            return "union_of_lines"
        if len(self.components) == 1:
            return self.components[0].kind
        return "composite"

    @property
    def domain(self) -> list[tuple[float, float]]:
        out = []
        for o, c in zip(self._offsets, self.components):
            a, b = c.interval
            out.append((float(o), float(o + b - a)))
        return out

    def to_global(self, k: int, t_local):
        return np.asarray(t_local, dtype=float) - self.components[k].interval[0] + self._offsets[k]

    def locate(self, t):
        """Component index and local parameter for global parameter(s) ``t``."""
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self._offsets, t, side="right") - 1, 0, len(self.components) - 1)
        starts = np.array([c.interval[0] for c in self.components])
        return k, t - self._offsets[k] + starts[k]

    def _eval(self, t, which: str):
        t = np.asarray(t, dtype=float)
        k, tl = self.locate(t)
        out = np.empty(t.shape + (self.n,))
        for j, c in enumerate(self.components):
            sel = k == j
            if np.any(sel):
                out[sel] = getattr(c, which)(tl[sel])
        return out

    def gamma(self, t):
        return self._eval(t, "gamma")

    def dgamma(self, t):
        return self._eval(t, "dgamma")

    def ddgamma(self, t):
        return self._eval(t, "ddgamma")

    def quadrature(self, n_t: int) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint nodes and weights in the global parameter, ``n_t`` total.

        Nodes are allotted to components in proportion to parameter length.
        """
        lengths = np.array([c.interval[1] - c.interval[0] for c in self.components])
        counts = np.maximum(1, np.round(n_t * lengths / lengths.sum()).astype(int))
        ts, ws = [], []
        for k, (c, cnt) in enumerate(zip(self.components, counts)):
            a, b = c.interval
            h = (b - a) / cnt
            tl = a + (np.arange(cnt) + 0.5) * h
            ts.append(self.to_global(k, tl))
            ws.append(np.full(cnt, h))
        return np.concatenate(ts), np.concatenate(ws)

    def validate(self, n_check: int = 2048, tol: float = 1e-9) -> list[str]:
        """Regularity and self-intersection diagnostics on a sample grid.

        Crossings between distinct straight components are reported separately
        from genuine self-intersections of one component.
        """
        problems = []
        for k, c in enumerate(self.components):
            a, b = c.interval
            ts = np.linspace(a, b, n_check, endpoint=not c.closed)
            speed = np.linalg.norm(c.dgamma(ts), axis=-1)
            if np.min(speed) <= tol:
                problems.append(f"component {k} ({c.kind}) is not regular")
            pts = c.gamma(ts)
            step = np.max(np.linalg.norm(np.diff(pts, axis=0), axis=-1))
            d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
            gap = np.abs(np.arange(len(ts))[:, None] - np.arange(len(ts))[None, :])
            if c.closed:
                gap = np.minimum(gap, len(ts) - gap)
            far = gap > 4
            if np.any(d[far] < 0.5 * step):
                problems.append(f"component {k} ({c.kind}) self-intersects")
        return problems


# --------------------------------------------------------------------------
# intersections


@dataclass(frozen=True)
class IntersectionOptions:
    n_samples: int = 4096
    tol_plane: float = 1e-10
    tol_tangent: float = 1e-6
    tol_curvature: float = 1e-9
    max_intersections: int = 64
    max_iter: int = 200


@dataclass(frozen=True)
class IntersectionPoint:
    t: float
    point: np.ndarray
    transversality: float
    tangential: bool
    curvature_pairing: float
    component: int = 0


def _bisect(fun, lo: float, hi: float, flo: float, max_iter: int) -> float:
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-12 * max(1.0, abs(mid)):
            break
        fm = fun(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _component_roots(comp, x, xih, opts: IntersectionOptions, scale: float) -> list[float]:
    a, b = comp.interval
    ts = np.linspace(a, b, opts.n_samples + 1)
    g = (comp.gamma(ts) - x) @ xih
    gp = comp.dgamma(ts) @ xih
    tol = opts.tol_plane * scale

    def gfun(t):
        return float((comp.gamma(t) - x) @ xih)

    def gpfun(t):
        return float(comp.dgamma(t) @ xih)

    if np.max(np.abs(g)) <= tol:
        # component lies inside the hyperplane: report one (tangential) representative
        return [0.5 * (a + b)]
    roots: list[float] = []
    covered = np.zeros(len(ts) - 1, dtype=bool)
    for i in np.nonzero(g == 0)[0]:
        roots.append(ts[i])
        covered[max(i - 1, 0):i + 1] = True
    for i in np.nonzero(g[:-1] * g[1:] < 0)[0]:
        roots.append(_bisect(gfun, ts[i], ts[i + 1], g[i], opts.max_iter))
        covered[i] = True

    # extrema of g: candidate tangencies or root pairs hidden between samples
    ext = list(np.nonzero(gp[:-1] * gp[1:] < 0)[0])
    ext_at = [i for i in np.nonzero(gp == 0)[0]]
    cands = [(_bisect(gpfun, ts[i], ts[i + 1], gp[i], opts.max_iter), i) for i in ext]
    cands += [(ts[i], min(i, len(ts) - 2)) for i in ext_at]
    for tstar, i in cands:
        if covered[i]:
            continue
        gs = gfun(tstar)
        if abs(gs) <= tol:
            roots.append(tstar)
            covered[i] = True
        elif np.sign(gs) != np.sign(g[i]) and np.sign(g[i]) == np.sign(g[i + 1]):
            lo_t, hi_t = sorted((ts[i], tstar))
            roots.append(_bisect(gfun, lo_t, hi_t, gfun(lo_t), opts.max_iter))
            lo_t, hi_t = sorted((tstar, ts[i + 1]))
            roots.append(_bisect(gfun, lo_t, hi_t, gfun(lo_t), opts.max_iter))
            covered[i] = True

    roots.sort()
    out: list[float] = []
    period = b - a
    for r in roots:
        if out and abs(r - out[-1]) <= 1e-9 * max(1.0, abs(r)):
            continue
        if comp.closed and out and abs((r - a) - period) <= 1e-9 * period and abs(out[0] - a) <= 1e-9 * period:
            continue
        out.append(r)
    for r in out:
        # a root that is neither tangential nor a sign change means bisection lost the bracket
        if abs(gfun(r)) > max(tol, 1e-9 * scale) and abs(gpfun(r)) > 0:
            raise RootRefinementFailure(f"root near t={r:.6g} not refined: |g|={abs(gfun(r)):.3g}")
    return out


def hyperplane_intersections(curve: Curve, x, xi, opts: IntersectionOptions | None = None) -> list[IntersectionPoint]:
    """All points where the hyperplane ``x + xi^perp`` meets ``curve``, sorted by ``t``."""
    opts = opts or IntersectionOptions()
    x = np.asarray(x, dtype=float)
    xih = _unit(xi)
    pts: list[IntersectionPoint] = []
    for k, comp in enumerate(curve.components):
        a, b = comp.interval
        sample = comp.gamma(np.linspace(a, b, 33))
        scale = max(1.0, float(np.max(np.linalg.norm(sample - x, axis=-1))))
        for r in _component_roots(comp, x, xih, opts, scale):
            d1 = float(comp.dgamma(r) @ xih)
            d2 = float(comp.ddgamma(r) @ xih)
            pts.append(IntersectionPoint(
                t=float(curve.to_global(k, r)),
                point=comp.gamma(r),
                transversality=d1,
                tangential=abs(d1) < opts.tol_tangent,
                curvature_pairing=d2,
                component=k,
            ))
    if len(pts) > opts.max_intersections:
        raise IntersectionOverflow(f"{len(pts)} intersections exceed the cap of {opts.max_intersections}")
    pts.sort(key=lambda p: p.t)
    return pts


class BatchIntersections(NamedTuple):
    index: np.ndarray  # which covector of the batch
    t: np.ndarray  # global curve parameter
    point: np.ndarray  # gamma(t)
    dgamma: np.ndarray


def batch_intersections(curve: Curve, x, xis, n_samples: int = 4096) -> BatchIntersections:
    """Intersections of ``x + xi^perp`` with the curve for a stack of covectors.

    Lines and circles use closed-form roots; other components use dense
    sign-change bracketing with bisection.  Tangencies of measure zero are not
    singled out here.
    """
    x = np.asarray(x, dtype=float)
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    xih = xis / np.linalg.norm(xis, axis=-1, keepdims=True)
    idx, ts, pts, dg = [], [], [], []
    for k, comp in enumerate(curve.components):
        i, tl = comp.batch_roots(x, xih, n_samples)
        if i.size == 0:
            continue
        idx.append(i)
        ts.append(curve.to_global(k, tl))
        pts.append(comp.gamma(tl))
        dg.append(comp.dgamma(tl))
    n = curve.n
    if not idx:
        return BatchIntersections(np.zeros(0, np.int64), np.zeros(0), np.zeros((0, n)), np.zeros((0, n)))
    return BatchIntersections(np.concatenate(idx), np.concatenate(ts), np.concatenate(pts), np.concatenate(dg))


# --------------------------------------------------------------------------
# genericity


class GenericityResult(NamedTuple):
    rank: int
    is_generic: bool


def _power_matrix(vectors, m: int) -> np.ndarray:
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = v.shape[1]
    cols = st.sym_powers(v, m) * np.sqrt(st.multiplicities(n, m))
    norms = np.linalg.norm(cols, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return (cols / norms).T


def power_singular_values(vectors, m: int) -> np.ndarray:
    """Singular values of the (column-normalized) matrix of symmetric powers.

    Columns are ``v_i^{(.)m}`` in orthonormal coordinates of the weighted
    inner product; normalizing columns does not change the rank.
    """
    return np.linalg.svd(_power_matrix(vectors, m), compute_uv=False)


def genericity_rank(vectors, m: int, tol: float = 1e-10) -> GenericityResult:
    """Numerical rank of ``{v_i^{(.)m}}`` and whether the collection is generic.

    When the vectors span at most a hyperplane the target rank is ``L(n, m)``,
    otherwise ``min(k, D(n, m))``.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    k, n = v.shape
    sv = power_singular_values(v, m)
    rank = int(np.sum(sv > tol * sv[0])) if sv.size and sv[0] > 0 else 0
    vs = np.linalg.svd(v, compute_uv=False)
    span = int(np.sum(vs > tol * vs[0])) if vs[0] > 0 else 0
    if span <= n - 1:
        target = st.generic_count(n, m)
    else:
        target = min(k, st.dim(n, m))
    return GenericityResult(rank, rank == target)


def _any_subset_independent(vectors: np.ndarray, size: int, tol: float = 1e-10) -> bool:
    if len(vectors) < size:
        return False
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    for combo in itertools.combinations(range(len(unit)), size):
        sv = np.linalg.svd(unit[list(combo)], compute_uv=False)
        if sv[-1] <= tol:
            return False
    return True


# --------------------------------------------------------------------------
# Kirillov-Tuy sampling


@dataclass
class KTReport:
    fraction_pass: float
    n_samples: int
    failures: list = field(default_factory=list)


def _sphere_from_unit_cube(u: np.ndarray, n: int) -> np.ndarray:
    from scipy.special import ndtri

    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def kirillov_tuy_check(curve: Curve, center, radius: float, m: int, n_planes: int = 100,
                       n_points: int = 10, seed: int = 0,
                       opts: IntersectionOptions | None = None) -> KTReport:
    """Estimate the fraction of (hyperplane, point) pairs meeting the order-m condition.

    Hyperplanes meeting the ball and points inside ``H`` and the ball come from
    a scrambled Sobol sequence.  A pair passes when the directions from the
    point to the curve intersections span ``Sym^m`` of the hyperplane, i.e.
    some ``L(n, m)`` of them are generic.
    """
    opts = opts or IntersectionOptions(n_samples=1024)
    center = np.asarray(center, dtype=float)
    n = center.size
    need = st.generic_count(n, m)
    sob = qmc.Sobol(d=2 * n + 1, scramble=True, seed=seed)
    total_draws = n_planes * n_points
    u = sob.random_base2(max(0, math.ceil(math.log2(total_draws))))[:total_draws]
    passes = 0
    failures = []
    total = 0
    for p in range(n_planes):
        up = u[p * n_points]
        xi = _sphere_from_unit_cube(up[:n], n)
        offset = (2 * up[n] - 1) * radius
        base = center + offset * xi
        rho = math.sqrt(max(radius ** 2 - offset ** 2, 0.0))
        # orthonormal basis of xi^perp
        q, _ = np.linalg.qr(np.column_stack([xi, np.eye(n)]))
        tangent = q[:, 1:n]
        for j in range(n_points):
            uj = u[p * n_points + j]
            d = _sphere_from_unit_cube(uj[n + 1:2 * n], n - 1) if n > 2 else np.array([np.sign(uj[n + 1] - 0.5) or 1.0])
            r = rho * uj[2 * n] ** (1.0 / (n - 1))
            x = base + tangent @ (r * d)
            total += 1
            try:
                hits = hyperplane_intersections(curve, x, xi, opts)
            except IntersectionOverflow as exc:
                failures.append({"xi": xi.tolist(), "x": x.tolist(), "reason": str(exc)})
                continue
            dirs = np.array([x - h.point for h in hits]).reshape(-1, n)
            dirs = dirs[np.linalg.norm(dirs, axis=1) > 1e-12]
            ok = False
            if len(dirs) >= need:
                ok = genericity_rank(dirs, m).rank >= need
            if ok:
                passes += 1
            else:
                failures.append({"xi": xi.tolist(), "x": x.tolist(), "n_intersections": len(hits)})
    return KTReport(passes / max(total, 1), total, failures)


# --------------------------------------------------------------------------
# covector classification


@dataclass(frozen=True)
class WavefrontElement:
    x: np.ndarray
    xi: np.ndarray
    cls: str  # in_Xi_Delta | in_Xi_Lambda | in_Xi_only | outside
    sigma_distance: float
    intersections: tuple = ()
    generic: bool = False
    any_n1_independent: bool = False


def classify_covector(curve: Curve, x, xi, m: int, opts: IntersectionOptions | None = None) -> WavefrontElement:
    """Place ``(x, xi)`` in Xi_Delta, Xi_Lambda, Xi only, or outside Xi.

    Membership in Xi needs ``L(n, m)`` directions from ``x`` to the
    intersection points that are generic of order ``m``; the weaker
    "any n-1 independent" predicate is recorded alongside but not required.
    """
    opts = opts or IntersectionOptions()
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = x.size
    hits = hyperplane_intersections(curve, x, xi, opts)
    sigma = min((abs(h.transversality) for h in hits), default=math.inf)
    if not hits:
        return WavefrontElement(x, xi, "outside", sigma)
    dirs = np.array([x - h.point for h in hits])
    dirs = dirs[np.linalg.norm(dirs, axis=1) > 1e-12]
    need = st.generic_count(n, m)
    generic = len(dirs) >= need and genericity_rank(dirs, m).rank >= need
    n1 = _any_subset_independent(dirs, n - 1) if len(dirs) <= 24 else False
    if not generic:
        cls = "outside"
    else:
        tangential = [h for h in hits if h.tangential]
        if not tangential:
            cls = "in_Xi_Delta"
        elif all(abs(h.curvature_pairing) > opts.tol_curvature for h in tangential):
            cls = "in_Xi_Lambda"
        else:
            cls = "in_Xi_only"
    return WavefrontElement(x, xi, cls, sigma, tuple(hits), generic, n1)


# --------------------------------------------------------------------------
# flowout


def flowout_lines(curve: Curve, x, xi, opts: IntersectionOptions | None = None) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """``(gamma(t), theta, tau)`` for every tangential intersection of ``x + xi^perp``."""
    x = np.asarray(x, dtype=float)
    out = []
    for h in hyperplane_intersections(curve, x, xi, opts):
        if not h.tangential:
            continue
        d = x - h.point
        tau = float(np.linalg.norm(d))
        if tau == 0:
            continue
        out.append((h.point, d / tau, tau))
    return out


def artifact_flowout(curve: Curve, x, xi, tau_ratios: Sequence[float] | None = None,
                     opts: IntersectionOptions | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sample the artifact Lagrangian over ``(x, xi)``.

    For each tangency ``gamma(t)`` of the hyperplane, returns points
    ``y = gamma(t) + tau~ theta`` with covector ``(tau / tau~) xi`` where
    ``tau~ = r * tau`` for each ``r`` in ``tau_ratios`` (zero ratios skipped).
    """
    xi = np.asarray(xi, dtype=float)
    if tau_ratios is None:
        tau_ratios = np.concatenate([-np.linspace(2.0, 0.25, 8), np.linspace(0.25, 2.0, 8)])
    out = []
    for base, theta, tau in flowout_lines(curve, x, xi, opts):
        for r in tau_ratios:
            if r == 0:
                continue
            tt = r * tau
            out.append((base + tt * theta, (tau / tt) * xi))
    return out
