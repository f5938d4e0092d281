"""Restricted ray transform, its adjoint and the normal operator.

Lines are parametrized by a curve parameter ``t`` and a unit direction
``w``; the measure on lines is ``dt dw`` and each line meeting the box is
counted once.  For every ``t`` the directions live on a chart grid centered on
the direction from ``gamma(t)`` to the box center: the Lambert azimuthal
equal-area chart for ``n = 3`` (so chart area equals solid angle) and the
angle for ``n = 2``.  This needs the curve to stay outside the grid box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from . import symtensor as st
from .errors import GeometryMismatch, SupportTooClose
from .geometry import Curve

__all__ = [
    "TensorField",
    "DirectionLayout",
    "Sinogram",
    "LineGeometry",
    "build_layout",
    "forward",
    "adjoint",
    "normal",
    "normal_at",
    "extended",
    "symmetrized_derivative",
]


@dataclass(frozen=True)
class TensorField:
    """Symmetric m-tensor field on a uniform node grid; ``values`` has shape ``dims + (D,)``."""

    n: int
    m: int
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(self.n))
        object.__setattr__(self, "spacing", np.asarray(self.spacing, dtype=float).reshape(self.n))
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != self.n + 1 or v.shape[-1] != st.dim(self.n, self.m):
            raise ValueError(f"values shape {v.shape} does not fit n={self.n}, m={self.m}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, n: int, m: int, dims, origin, spacing) -> "TensorField":
        dims = tuple(int(d) for d in dims)
        return cls(n, m, origin, spacing, np.zeros(dims + (st.dim(n, m),)))

    @classmethod
    def centered(cls, n: int, m: int, N: int, half_width: float = 1.0) -> "TensorField":
        """Zero field on ``N^n`` nodes spanning ``[-half_width, half_width]^n``."""
        h = 2 * half_width / (N - 1)
        return cls.zeros(n, m, (N,) * n, np.full(n, -half_width), np.full(n, h))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape[:-1]

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lo(self) -> np.ndarray:
        return self.origin

    @property
    def hi(self) -> np.ndarray:
        return self.origin + (np.array(self.dims) - 1) * self.spacing

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[k] + self.spacing[k] * np.arange(d) for k, d in enumerate(self.dims)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``dims + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def with_values(self, values, m: int | None = None) -> "TensorField":
        return TensorField(self.n, self.m if m is None else m, self.origin, self.spacing, values)

    def inner(self, other: "TensorField") -> float:
        w = st.multiplicities(self.n, self.m)
        return float(np.sum(self.values * other.values * w) * self.voxel_volume)

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DirectionLayout:
    """Per-t chart grids; ``frames[t]`` has the chart axis in its last column."""

    frames: np.ndarray  # (N_t, n, n)
    r_max: np.ndarray  # (N_t,)
    n_side: int

    @property
    def n(self) -> int:
        return self.frames.shape[1]

    @property
    def n_dir(self) -> int:
        return self.n_side ** (self.n - 1)

    def chart_nodes(self, it: int) -> np.ndarray:
        u = np.linspace(-self.r_max[it], self.r_max[it], self.n_side)
        if self.n == 3:
            X, Y = np.meshgrid(u, u, indexing="ij")
            return np.stack([X.ravel(), Y.ravel()], axis=-1)
        return u[:, None]

    def cell_area(self) -> np.ndarray:
        step = 2 * self.r_max / (self.n_side - 1)
        return step ** (self.n - 1)

    def directions(self) -> np.ndarray:
        """Unit directions for every node, shape ``(N_t, N_dir, n)``."""
        out = np.empty((len(self.r_max), self.n_dir, self.n))
        for it in range(len(self.r_max)):
            c = self.chart_nodes(it)
            if self.n == 3:
                rho2 = np.sum(c ** 2, axis=1)
                s = np.sqrt(np.clip(1 - rho2 / 4, 0, None))
                loc = np.column_stack([s * c[:, 0], s * c[:, 1], 1 - rho2 / 2])
            else:
                loc = np.column_stack([np.sin(c[:, 0]), np.cos(c[:, 0])])
            out[it] = loc @ self.frames[it].T
        return out


@dataclass(frozen=True)
class Sinogram:
    n: int
    m: int
    t: np.ndarray
    weights: np.ndarray  # curve-parameter quadrature weights
    layout: DirectionLayout
    values: np.ndarray = field(repr=False)  # (N_t, N_dir)

    @property
    def directions(self) -> np.ndarray:
        return self.layout.directions()

    def inner(self, other: "Sinogram") -> float:
        w = self.weights * self.layout.cell_area()
        return float(np.sum(w[:, None] * self.values * other.values))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def with_values(self, values) -> "Sinogram":
        return replace(self, values=np.ascontiguousarray(values, dtype=float))


@dataclass(frozen=True)
class LineGeometry:
    """Quadrature settings.  ``s_step=None`` means half the smallest voxel spacing."""

    s_step: float | None = None
    n_t: int = 256
    n_dir: int = 2048
    s_range: tuple[float, float] | None = None
    interpolation: str = "multilinear"

    def step_for(self, field: TensorField) -> float:
        s = 0.5 * float(np.min(field.spacing)) if self.s_step is None else float(self.s_step)
        if s <= 0:
            raise ValueError("s_step must be positive")
        return s


def _frame(axis: np.ndarray) -> np.ndarray:
    n = axis.size
    q, _ = np.linalg.qr(np.column_stack([axis, np.eye(n)]))
    q = q[:, :n]
    if q[:, 0] @ axis < 0:
        q[:, 0] = -q[:, 0]
    f = np.column_stack([q[:, 1:], q[:, 0]])
    if np.linalg.det(f) < 0:
        f[:, 0] = -f[:, 0]
    return f


def build_layout(src: np.ndarray, field: TensorField, n_dir: int, margin: float = 1.02) -> DirectionLayout:
    """Chart grids whose caps cover every line from ``src[t]`` through the box."""
    n = field.n
    if n not in (2, 3):
        raise ValueError("transform kernels support n = 2 and n = 3")
    lo, hi = field.lo, field.hi
    if np.any(np.all((src >= lo - 1e-12) & (src <= hi + 1e-12), axis=1)):
        raise GeometryMismatch("curve passes through the grid box; sources must lie outside it")
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(n, -1).T
    center = field.center
    n_side = max(3, int(round(n_dir ** (1.0 / (n - 1)))))
    frames = np.empty((len(src), n, n))
    r_max = np.empty(len(src))
    for it, p in enumerate(src):
        axis = (center - p) / np.linalg.norm(center - p)
        cd = corners - p
        cosang = np.clip((cd @ axis) / np.linalg.norm(cd, axis=1), -1, 1)
        theta = float(np.max(np.arccos(cosang))) * margin
        if theta >= 0.45 * math.pi:
            raise GeometryMismatch(f"box subtends {math.degrees(theta):.1f} deg from the curve at t index {it}; move the curve away")
        frames[it] = _frame(axis)
        r_max[it] = 2 * math.sin(theta / 2) if n == 3 else theta
    return DirectionLayout(frames, r_max, n_side)


def _check_range(geom: LineGeometry, field: TensorField, src: np.ndarray):
    if geom.s_range is None:
        return
    lo, hi = field.lo, field.hi
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(field.n, -1).T
    far = np.max(np.linalg.norm(corners[None] - src[:, None], axis=-1))
    near = np.min(np.linalg.norm(src - np.clip(src, lo, hi), axis=-1))
    if geom.s_range[0] > near or geom.s_range[1] < far:
        raise GeometryMismatch(f"s_range {geom.s_range} does not cover the grid box (need [{near:.3g}, {far:.3g}])")


def _kernel_args(field: TensorField):
    E = np.ascontiguousarray(st.exponents(field.n, field.m), dtype=np.int64)
    mult = np.ascontiguousarray(st.multiplicities(field.n, field.m), dtype=float)
    return E, mult


def forward(field: TensorField, curve: Curve, geom: LineGeometry | None = None,
            layout: DirectionLayout | None = None) -> Sinogram:
    """``R f(t, w) = int <f(gamma(t) + s w), w^m> ds`` on the chart grids."""
    geom = geom or LineGeometry()
    if curve.n != field.n:
        raise GeometryMismatch(f"curve lives in R^{curve.n}, field in R^{field.n}")
    t, wt = curve.quadrature(geom.n_t)
    src = np.ascontiguousarray(curve.gamma(t))
    _check_range(geom, field, src)
    layout = layout or build_layout(src, field, geom.n_dir)
    dirs = np.ascontiguousarray(layout.directions())
    E, mult = _kernel_args(field)
    fn = K.forward3 if field.n == 3 else K.forward2
    vals = fn(field.values, field.origin, field.spacing, src, dirs, E, mult, geom.step_for(field))
    return Sinogram(field.n, field.m, t, wt, layout, vals)


@dataclass
class AdjointDiagnostics:
    skipped_pairs: int = 0
    singular_voxels: int = 0


def adjoint(sino: Sinogram, curve: Curve, template: TensorField,
            diagnostics: AdjointDiagnostics | None = None) -> TensorField:
    """Backprojection ``sum_t g(t, w_x) w_x^m |x - gamma(t)|^(1-n) dt``.

    Pairs with ``|x - gamma(t)|`` below one voxel are skipped and tallied in
    ``diagnostics``.
    """
    if curve.n != template.n or sino.n != template.n:
        raise GeometryMismatch("dimension mismatch between sinogram, curve and template")
    src = np.ascontiguousarray(curve.gamma(sino.t))
    coords = np.ascontiguousarray(template.coords().reshape(-1, template.n))
    E, _ = _kernel_args(template.with_values(np.zeros(template.dims + (st.dim(template.n, sino.m),)), m=sino.m))
    L = sino.layout
    out, skipped = K.backproject(np.ascontiguousarray(sino.values), np.ascontiguousarray(L.frames),
                                 np.ascontiguousarray(L.r_max), L.n_side, src,
                                 np.ascontiguousarray(sino.weights), coords, E, float(np.min(template.spacing)))
    if diagnostics is not None:
        diagnostics.skipped_pairs += int(skipped.sum())
        diagnostics.singular_voxels += int(np.count_nonzero(skipped))
    return TensorField(template.n, sino.m, template.origin, template.spacing,
                       out.reshape(template.dims + (E.shape[0],)))


def normal_at(field: TensorField, curve: Curve, points, geom: LineGeometry | None = None) -> np.ndarray:
    """Direct kernel route of the normal operator at arbitrary points, shape ``(P, D)``."""
    geom = geom or LineGeometry()
    t, wt = curve.quadrature(geom.n_t)
    src = np.ascontiguousarray(curve.gamma(t))
    E, mult = _kernel_args(field)
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    fn = K.direct3 if field.n == 3 else K.direct2
    out, _ = fn(field.values, field.origin, field.spacing, src, np.ascontiguousarray(wt), pts, E, mult,
                geom.step_for(field), float(np.min(field.spacing)))
    return out


def extended(field: TensorField, apron: int) -> TensorField:
    """Zero field on the same lattice, grown by ``apron`` nodes on every side."""
    dims = tuple(d + 2 * apron for d in field.dims)
    return TensorField.zeros(field.n, field.m, dims, field.origin - apron * field.spacing, field.spacing)


def normal(field: TensorField, curve: Curve, geom: LineGeometry | None = None, route: str = "composed",
           apron: int = 0) -> TensorField:
    """``R* R f`` by composing the discrete operators or by the direct kernel formula.

    With ``apron > 0`` the result is evaluated on the grid grown by that many
    nodes per side (``f`` itself stays supported in its own box).
    """
    target = extended(field, apron) if apron else field
    if route == "composed":
        return adjoint(forward(field, curve, geom), curve, target)
    if route == "direct":
        vals = normal_at(field, curve, target.coords().reshape(-1, field.n), geom)
        return target.with_values(vals.reshape(target.values.shape))
    raise ValueError(f"unknown route {route!r}")


# --------------------------------------------------------------------------
# symmetrized derivative

_STENCILS = {
    2: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    4: (np.array([-2, -1, 1, 2]), np.array([1 / 12, -2 / 3, 2 / 3, -1 / 12])),
}


def _central_diff(a: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    offs, coef = _STENCILS[order]
    out = np.zeros_like(a)
    r = int(np.max(np.abs(offs)))
    core = [slice(None)] * a.ndim
    core[axis] = slice(r, a.shape[axis] - r)
    for o, c in zip(offs, coef):
        src = [slice(None)] * a.ndim
        src[axis] = slice(r + o, a.shape[axis] - r + o)
        out[tuple(core)] += c * a[tuple(src)]
    return out / h


def symmetrized_derivative(v: TensorField, order: int = 2, margin: int = 2, tol: float = 1e-12) -> TensorField:
    """``dv = sum_k e_k (.) d_k v`` by central differences of the given order."""
    if order not in _STENCILS:
        raise ValueError("order must be 2 or 4")
    vals = v.values
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    for k in range(v.n if margin > 0 else 0):
        edge = np.concatenate([np.take(vals, range(margin), axis=k).ravel(),
                               np.take(vals, range(vals.shape[k] - margin, vals.shape[k]), axis=k).ravel()])
        if scale > 0 and np.max(np.abs(edge)) > tol * scale:
            raise SupportTooClose(f"field is nonzero within {margin} voxels of the boundary along axis {k}")
    m = v.m + 1
    out = np.zeros(v.dims + (st.dim(v.n, m),))
    for k in range(v.n):
        e = np.zeros(v.n)
        e[k] = 1.0
        P = st.product_matrix(e, m)
        dk = _central_diff(vals, k, float(v.spacing[k]), order)
        out += dk @ P.T
    return v.with_values(out, m=m)
