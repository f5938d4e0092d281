"""Symmetric m-tensors on R^n stored by their distinct components.

A symmetric tensor of order ``m`` has ``C(n+m-1, m)`` distinct components,
one per exponent vector ``alpha`` (``alpha_k`` counts how often index ``k``
occurs in the index tuple).  Exponent vectors are ordered lexicographically
descending, so for ``n=2, m=2`` the basis is ``(2,0), (1,1), (0,2)``.

The fiber inner product is the full-tensor contraction, which in distinct
components reads ``<f, g> = sum_alpha m!/alpha! f_alpha g_alpha``.  With this
weight the symmetric product with a vector and the contraction with that
vector are exact adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial
from typing import Sequence

import numpy as np

__all__ = [
    "SymTensor",
    "basis_enumeration",
    "basis_index",
    "dim",
    "generic_count",
    "multiplicities",
    "exponents",
    "sym_power",
    "sym_powers",
    "sym_product",
    "evaluate",
    "contract",
    "inner",
    "from_vector",
    "zeros",
    "product_matrix",
    "contraction_matrix",
]


def dim(n: int, m: int) -> int:
    """Number of distinct components, ``C(n+m-1, m)``."""
    return comb(n + m - 1, m)


def generic_count(n: int, m: int) -> int:
    """``L(n, m) = C(n+m-2, m)``: dimension of Sym^m of a hyperplane in R^n."""
    return comb(n + m - 2, m)


@lru_cache(maxsize=None)
def basis_enumeration(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """All exponent vectors of length ``n`` summing to ``m``, lex descending."""
    if n < 1 or m < 0:
        raise ValueError(f"need n >= 1 and m >= 0, got n={n}, m={m}")

    def rec(k: int, rest: int):
        if k == n - 1:
            yield (rest,)
            return
        for a in range(rest, -1, -1):
            for tail in rec(k + 1, rest - a):
                yield (a,) + tail

    return tuple(rec(0, m))


@lru_cache(maxsize=None)
def _index_map(n: int, m: int) -> dict[tuple[int, ...], int]:
    return {alpha: i for i, alpha in enumerate(basis_enumeration(n, m))}


def basis_index(alpha: Sequence[int]) -> int:
    """Flat position of exponent vector ``alpha`` in the basis ordering."""
    alpha = tuple(int(a) for a in alpha)
    return _index_map(len(alpha), sum(alpha))[alpha]


@lru_cache(maxsize=None)
def _exponents(n: int, m: int) -> np.ndarray:
    out = np.array(basis_enumeration(n, m), dtype=np.int64).reshape(-1, n)
    out.setflags(write=False)
    return out


def exponents(n: int, m: int) -> np.ndarray:
    """``(D, n)`` integer array of exponent vectors (read-only)."""
    return _exponents(n, m)


@lru_cache(maxsize=None)
def _multiplicities(n: int, m: int) -> np.ndarray:
    out = np.array(
        [factorial(m) // int(np.prod([factorial(a) for a in alpha])) for alpha in basis_enumeration(n, m)],
        dtype=float,
    )
    out.setflags(write=False)
    return out


def multiplicities(n: int, m: int) -> np.ndarray:
    """Weights ``m!/alpha!`` of the fiber inner product (read-only)."""
    return _multiplicities(n, m)


@dataclass(frozen=True)
class SymTensor:
    n: int
    m: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != dim(self.n, self.m):
            raise ValueError(f"expected {dim(self.n, self.m)} coefficients for n={self.n}, m={self.m}, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, alpha: Sequence[int]) -> float:
        return float(self.coeffs[basis_index(alpha)])

    def __add__(self, other: "SymTensor") -> "SymTensor":
        _check_same(self, other)
        return SymTensor(self.n, self.m, self.coeffs + other.coeffs)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        _check_same(self, other)
        return SymTensor(self.n, self.m, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "SymTensor":
        return SymTensor(self.n, self.m, self.coeffs * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor":
        return SymTensor(self.n, self.m, -self.coeffs)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))


def _check_same(f: SymTensor, g: SymTensor) -> None:
    if f.n != g.n or f.m != g.m:
        raise ValueError(f"tensor shapes differ: (n={f.n}, m={f.m}) vs (n={g.n}, m={g.m})")


def zeros(n: int, m: int) -> SymTensor:
    return SymTensor(n, m, np.zeros(dim(n, m)))


def from_vector(v) -> SymTensor:
    v = np.asarray(v, dtype=float)
    return SymTensor(v.size, 1, v)


def sym_powers(vectors, m: int) -> np.ndarray:
    """Coefficients of ``v^{(.)m}`` for a stack of vectors, shape ``(..., D)``."""
    v = np.asarray(vectors, dtype=float)
    n = v.shape[-1]
    e = exponents(n, m)
    return np.prod(v[..., None, :] ** e, axis=-1)


def sym_power(v, m: int) -> SymTensor:
    """The symmetric power ``v (.) ... (.) v``; component at alpha is ``prod v_k^alpha_k``."""
    v = np.asarray(v, dtype=float)
    return SymTensor(v.size, m, sym_powers(v, m))


@lru_cache(maxsize=None)
def _product_table(n: int, a: int, b: int):
    # rows: (out index, f index, g index, weight) with weight prod C(alpha_k, beta_k) / C(a+b, a)
    m = a + b
    rows = []
    norm = comb(m, a)
    for i, alpha in enumerate(basis_enumeration(n, m)):
        for j, beta in enumerate(basis_enumeration(n, a)):
            if any(bk > ak for bk, ak in zip(beta, alpha)):
                continue
            rest = tuple(ak - bk for ak, bk in zip(alpha, beta))
            w = float(np.prod([comb(ak, bk) for ak, bk in zip(alpha, beta)])) / norm
            rows.append((i, j, basis_index(rest), w))
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2].astype(np.int64), arr[:, 3]


def sym_product(f: SymTensor, g: SymTensor) -> SymTensor:
    """Symmetrized tensor product (average over all index permutations)."""
    if f.n != g.n:
        raise ValueError("dimension mismatch")
    out_i, fi, gi, w = _product_table(f.n, f.m, g.m)
    out = np.zeros(dim(f.n, f.m + g.m))
    np.add.at(out, out_i, w * f.coeffs[fi] * g.coeffs[gi])
    return SymTensor(f.n, f.m + g.m, out)


def evaluate(f: SymTensor, v) -> float:
    """``f(v) = f_{i1..im} v^{i1}...v^{im}``."""
    v = np.asarray(v, dtype=float)
    if v.size != f.n:
        raise ValueError("dimension mismatch")
    return float(np.dot(multiplicities(f.n, f.m) * f.coeffs, sym_powers(v, f.m)))


@lru_cache(maxsize=None)
def _shift_table(n: int, m: int) -> np.ndarray:
    # (D(m-1), n): index of beta + e_k in the order-m basis
    lower = basis_enumeration(n, m - 1)
    table = np.empty((len(lower), n), dtype=np.int64)
    for i, beta in enumerate(lower):
        for k in range(n):
            up = list(beta)
            up[k] += 1
            table[i, k] = basis_index(up)
    table.setflags(write=False)
    return table


def contraction_matrix(xi, m: int) -> np.ndarray:
    """Matrix of ``u -> i_xi u`` from order ``m`` to ``m-1`` coefficients."""
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    if m < 1:
        raise ValueError("contraction needs m >= 1")
    table = _shift_table(n, m)
    mat = np.zeros((dim(n, m - 1), dim(n, m)))
    rows = np.repeat(np.arange(table.shape[0]), n)
    np.add.at(mat, (rows, table.reshape(-1)), np.tile(xi, table.shape[0]))
    return mat


def product_matrix(xi, m: int) -> np.ndarray:
    """Matrix of ``v -> xi (.) v`` from order ``m-1`` to order ``m`` coefficients.

    This is the adjoint of :func:`contraction_matrix` in the weighted inner
    product: ``W_m P = C^T W_{m-1}``.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    c = contraction_matrix(xi, m)
    wm = multiplicities(n, m)
    wl = multiplicities(n, m - 1)
    return (c.T * wl[None, :]) / wm[:, None]


def contract(f: SymTensor, xi) -> SymTensor:
    """``(i_xi f)_{i1..i(m-1)} = sum_k xi_k f_{i1..i(m-1) k}``."""
    xi = np.asarray(xi, dtype=float)
    if xi.size != f.n:
        raise ValueError("dimension mismatch")
    return SymTensor(f.n, f.m - 1, contraction_matrix(xi, f.m) @ f.coeffs)


def inner(f: SymTensor, g: SymTensor) -> float:
    _check_same(f, g)
    return float(np.dot(multiplicities(f.n, f.m) * f.coeffs, g.coeffs))
