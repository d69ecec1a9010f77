"""Truncated multivariate formal power series and Lagrangian inversion.

First-passage transforms of the modulated surplus process solve a matrix
fixed-point equation whose shape is a system of Lagrangian transformations
in the N^2 entries of the unknown matrix.  Inverting that system expands the
transform as a sum over exponent vectors: each term extracts one monomial
coefficient from the product of three series in the N^2 symbols ``G_ij``:

* an entry of a symbolic matrix power ``(G^a)_{mn}``;
* the claim generating series of every symbol raised to its exponent; and
* the determinant ``det(I - Gamma)``, where ``Gamma`` has the entries
  ``G_ij * (d/dG_kl) lam_ij / lam_ij``.

Repeated derivatives at zero are replaced throughout by coefficient
extraction with factorial weights (the same numbers by Taylor's theorem),
and the logarithmic derivative is computed as an exact series quotient, so
no transcendental expansions appear.

Series are truncated at a fixed total degree; arithmetic never changes the
truncation.  Coefficients live in a dense vector over a per-degree monomial
basis with precomputed index tables, which keeps products and determinants
vectorized; the ``terms`` mapping view is the stable public surface.
"""

from __future__ import annotations

import itertools
import math
import weakref
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .model import ModelSpec

__all__ = [
    "MultiSeries",
    "SeriesMatrix",
    "symbolic_pgf",
    "gamma_matrix",
    "det_series",
    "lagrange_b",
    "lagrange_Q",
    "lagrange_V",
    "compositions",
]

# Refuse exponent-vector enumerations larger than this; the inversion route
# exists to validate the closed forms, not to be the fast path.
MAX_COMPOSITIONS = 10**6

_INVERTIBLE_TOL = 1e-14


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All vectors of `parts` non-negative integers summing to `total`.

    Yielded in colexicographic order (last coordinate varies slowest); the
    inversion sums are reduced in exactly this order so results are bitwise
    reproducible across runs.
    """
    if parts == 1:
        yield (total,)
        return
    for last in range(total + 1):
        for rest in compositions(total - last, parts - 1):
            yield rest + (last,)


class _MonomialBasis:
    """Dense coefficient layout for one (n_vars, max_degree) truncation.

    Monomials are ordered by total degree, then colexicographically; index 0
    is the constant.  Index tables for products, shifts and derivatives are
    built lazily and shared by every series over the basis.
    """

    def __init__(self, n_vars: int, max_degree: int):
        self.n_vars = n_vars
        self.max_degree = max_degree
        monos: list[tuple[int, ...]] = []
        self.by_degree: list[list[int]] = []
        for d in range(max_degree + 1):
            start = len(monos)
            monos.extend(compositions(d, n_vars))
            self.by_degree.append(list(range(start, len(monos))))
        self.monomials = monos
        self.index = {m: i for i, m in enumerate(monos)}
        self.size = len(monos)
        self.degrees = np.array([sum(m) for m in monos], dtype=np.int64)
        self._pair_table: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        self._shift_tables: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}
        self._derive_tables: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    # -- raw coefficient-vector operations ------------------------------

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def one(self) -> np.ndarray:
        out = self.zeros()
        out[0] = 1.0
        return out

    def pair_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._pair_table is None:
            ia: list[int] = []
            ib: list[int] = []
            ic: list[int] = []
            index = self.index
            monos = self.monomials
            for da in range(self.max_degree + 1):
                for db in range(self.max_degree + 1 - da):
                    for i in self.by_degree[da]:
                        ma = monos[i]
                        for j in self.by_degree[db]:
                            mb = monos[j]
                            ia.append(i)
                            ib.append(j)
                            ic.append(index[tuple(map(sum, zip(ma, mb)))])
            self._pair_table = (
                np.array(ia, dtype=np.int64),
                np.array(ib, dtype=np.int64),
                np.array(ic, dtype=np.int64),
            )
        return self._pair_table

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ia, ib, ic = self.pair_table()
        return np.bincount(ic, weights=a[ia] * b[ib], minlength=self.size)

    def shift_table(self, w: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        """Index map realizing multiplication by the monomial ``w``."""
        tab = self._shift_tables.get(w)
        if tab is None:
            room = self.max_degree - sum(w)
            src: list[int] = []
            dst: list[int] = []
            if room >= 0:
                index = self.index
                for d in range(room + 1):
                    for i in self.by_degree[d]:
                        src.append(i)
                        dst.append(index[tuple(map(sum, zip(self.monomials[i], w)))])
            tab = (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64))
            self._shift_tables[w] = tab
        return tab

    def mul_monomial(self, a: np.ndarray, w: tuple[int, ...], coeff: float = 1.0) -> np.ndarray:
        src, dst = self.shift_table(w)
        out = self.zeros()
        out[dst] = coeff * a[src]
        return out

    def compile_terms(self, terms: Mapping[tuple[int, ...], float]) -> "_CompiledFactor":
        """Fuse a sparse series into one gather/scatter op for repeated products."""
        srcs: list[np.ndarray] = []
        dsts: list[np.ndarray] = []
        coefs: list[np.ndarray] = []
        for w in sorted(terms):
            c = terms[w]
            if c == 0.0:
                continue
            src, dst = self.shift_table(w)
            srcs.append(src)
            dsts.append(dst)
            coefs.append(np.full(src.shape, c))
        if srcs:
            return _CompiledFactor(
                np.concatenate(srcs), np.concatenate(dsts), np.concatenate(coefs)
            )
        empty = np.array([], dtype=np.int64)
        return _CompiledFactor(empty, empty, np.array([]))

    def mul_compiled(self, a: np.ndarray, factor: "_CompiledFactor") -> np.ndarray:
        return np.bincount(
            factor.dst, weights=factor.coef * a[factor.src], minlength=self.size
        )

    def derive_table(self, var: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        tab = self._derive_tables.get(var)
        if tab is None:
            src: list[int] = []
            dst: list[int] = []
            fac: list[float] = []
            for i, mono in enumerate(self.monomials):
                e = mono[var]
                if e > 0:
                    lower = list(mono)
                    lower[var] = e - 1
                    src.append(i)
                    dst.append(self.index[tuple(lower)])
                    fac.append(float(e))
            tab = (
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.array(fac),
            )
            self._derive_tables[var] = tab
        return tab

    def derive(self, a: np.ndarray, var: int) -> np.ndarray:
        src, dst, fac = self.derive_table(var)
        out = self.zeros()
        out[dst] = fac * a[src]
        return out

    def inverse(self, a: np.ndarray) -> np.ndarray:
        """Multiplicative inverse of a series with non-zero constant term."""
        c = a[0]
        if abs(c) <= _INVERTIBLE_TOL:
            raise ValueError("series not invertible: zero constant term")
        h = -a / c
        h[0] += 1.0  # h = 1 - a/c is nilpotent under truncation
        acc = self.one()
        power = self.one()
        for _ in range(self.max_degree):
            power = self.mul(power, h)
            if not np.any(power):
                break
            acc = acc + power
        return acc / c


class _CompiledFactor:
    __slots__ = ("src", "dst", "coef")

    def __init__(self, src: np.ndarray, dst: np.ndarray, coef: np.ndarray):
        self.src = src
        self.dst = dst
        self.coef = coef


_BASES: dict[tuple[int, int], _MonomialBasis] = {}


def _basis(n_vars: int, max_degree: int) -> _MonomialBasis:
    key = (n_vars, max_degree)
    basis = _BASES.get(key)
    if basis is None:
        basis = _MonomialBasis(n_vars, max_degree)
        _BASES[key] = basis
    return basis


def _flat_var(var, n_vars: int) -> int:
    """Accept a flat symbol index or an (i, j) matrix position."""
    if isinstance(var, tuple):
        n = math.isqrt(n_vars)
        if n * n != n_vars:
            raise ValueError("matrix-position variables need a square symbol count")
        i, j = var
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"variable position {var} out of range for {n}x{n} symbols")
        return i * n + j
    v = int(var)
    if not 0 <= v < n_vars:
        raise ValueError(f"variable index {v} out of range")
    return v


class MultiSeries:
    """Polynomial in ``n_vars`` symbols truncated at a fixed total degree.

    Arithmetic is exact on the retained coefficients and drops any term
    whose total degree exceeds the truncation; operands must share both the
    symbol count and the truncation degree.
    """

    __slots__ = ("basis", "coeffs")

    def __init__(self, basis: _MonomialBasis, coeffs: np.ndarray):
        self.basis = basis
        self.coeffs = coeffs

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, n_vars: int, max_degree: int) -> "MultiSeries":
        basis = _basis(n_vars, max_degree)
        return cls(basis, basis.zeros())

    @classmethod
    def constant(cls, n_vars: int, max_degree: int, value: float) -> "MultiSeries":
        basis = _basis(n_vars, max_degree)
        out = basis.zeros()
        out[0] = value
        return cls(basis, out)

    @classmethod
    def variable(cls, n_vars: int, max_degree: int, var) -> "MultiSeries":
        basis = _basis(n_vars, max_degree)
        v = _flat_var(var, n_vars)
        if max_degree < 1:
            raise ValueError("degree-0 truncation cannot hold a variable")
        exps = [0] * n_vars
        exps[v] = 1
        out = basis.zeros()
        out[basis.index[tuple(exps)]] = 1.0
        return cls(basis, out)

    @classmethod
    def from_terms(
        cls, n_vars: int, max_degree: int, terms: Mapping[Sequence[int], float]
    ) -> "MultiSeries":
        basis = _basis(n_vars, max_degree)
        out = basis.zeros()
        for exps, coeff in terms.items():
            key = tuple(int(e) for e in exps)
            if len(key) != n_vars or any(e < 0 for e in key):
                raise ValueError(f"bad exponent vector {exps}")
            if sum(key) > max_degree:
                raise ValueError(f"term {exps} exceeds truncation degree {max_degree}")
            out[basis.index[key]] += float(coeff)
        return cls(basis, out)

    # -- views -----------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return self.basis.n_vars

    @property
    def max_degree(self) -> int:
        return self.basis.max_degree

    @property
    def terms(self) -> dict[tuple[int, ...], float]:
        """Exponent vector -> coefficient for every stored non-zero term."""
        monos = self.basis.monomials
        return {monos[i]: float(c) for i, c in enumerate(self.coeffs) if c != 0.0}

    def coefficient(self, exps: Sequence[int]) -> float:
        key = tuple(int(e) for e in exps)
        idx = self.basis.index.get(key)
        return float(self.coeffs[idx]) if idx is not None else 0.0

    @property
    def constant_term(self) -> float:
        return float(self.coeffs[0])

    def allclose(self, other: "MultiSeries", tol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.all(np.abs(self.coeffs - other.coeffs) <= tol))

    def __repr__(self) -> str:
        shown = sorted(self.terms.items())[:6]
        body = " + ".join(f"{c:g}*G^{e}" for e, c in shown) or "0"
        return f"MultiSeries(deg<={self.max_degree}, {body}{' + ...' if len(self.terms) > 6 else ''})"

    # -- ring operations ---------------------------------------------------

    def _check(self, other: "MultiSeries") -> None:
        if self.basis is not other.basis:
            raise ValueError(
                "operands must share symbol count and truncation degree: "
                f"({self.n_vars}, {self.max_degree}) vs ({other.n_vars}, {other.max_degree})"
            )

    def __add__(self, other):
        if isinstance(other, (int, float)):
            out = self.coeffs.copy()
            out[0] += other
            return MultiSeries(self.basis, out)
        self._check(other)
        return MultiSeries(self.basis, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return MultiSeries(self.basis, -self.coeffs)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        self._check(other)
        return MultiSeries(self.basis, self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return MultiSeries(self.basis, self.coeffs * other)
        self._check(other)
        return MultiSeries(self.basis, self.basis.mul(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def scale(self, factor: float) -> "MultiSeries":
        return MultiSeries(self.basis, self.coeffs * factor)

    def derive(self, var) -> "MultiSeries":
        """Partial derivative with respect to one symbol."""
        v = _flat_var(var, self.n_vars)
        return MultiSeries(self.basis, self.basis.derive(self.coeffs, v))

    def inverse(self) -> "MultiSeries":
        return MultiSeries(self.basis, self.basis.inverse(self.coeffs))

    def div(self, den: "MultiSeries") -> "MultiSeries":
        """Quotient by a series with non-zero constant term (exact under truncation)."""
        self._check(den)
        return MultiSeries(self.basis, self.basis.mul(self.coeffs, self.basis.inverse(den.coeffs)))


class SeriesMatrix:
    """Rectangular array of series sharing one truncation."""

    __slots__ = ("entries",)

    def __init__(self, entries: Sequence[Sequence[MultiSeries]]):
        rows = [list(r) for r in entries]
        if not rows or not rows[0]:
            raise ValueError("series matrix cannot be empty")
        basis = rows[0][0].basis
        for r in rows:
            if len(r) != len(rows[0]):
                raise ValueError("ragged series matrix")
            for s in r:
                if s.basis is not basis:
                    raise ValueError("series matrix entries must share truncation degree")
        self.entries = rows

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.entries), len(self.entries[0]))

    @property
    def n_vars(self) -> int:
        return self.entries[0][0].n_vars

    @property
    def max_degree(self) -> int:
        return self.entries[0][0].max_degree

    def __getitem__(self, key: tuple[int, int]) -> MultiSeries:
        i, j = key
        return self.entries[i][j]

    @classmethod
    def identity(cls, n: int, n_vars: int, max_degree: int) -> "SeriesMatrix":
        return cls(
            [
                [MultiSeries.constant(n_vars, max_degree, 1.0 if i == j else 0.0) for j in range(n)]
                for i in range(n)
            ]
        )

    def __sub__(self, other: "SeriesMatrix") -> "SeriesMatrix":
        if self.shape != other.shape:
            raise ValueError("shape mismatch")
        return SeriesMatrix(
            [
                [self.entries[i][j] - other.entries[i][j] for j in range(self.shape[1])]
                for i in range(self.shape[0])
            ]
        )


# ---------------------------------------------------------------------------
# Symbolic generating series of the claim kernel
# ---------------------------------------------------------------------------


def _symbol_powers(n_states: int, basis: _MonomialBasis, max_power: int) -> list[list[list[np.ndarray]]]:
    """Coefficient arrays of the symbolic matrix powers ``G^0 .. G^max_power``.

    ``G`` is the matrix whose (i, j) entry is the symbol ``G_ij``; powers are
    built by repeated symbolic matrix multiplication, so ``(G^m)_{ij}`` sums
    one monomial per length-m path from i to j.  Powers beyond the truncation
    degree vanish identically and are returned as zero arrays.
    """
    n = n_states
    powers: list[list[list[np.ndarray]]] = []
    ident = [[basis.one() if i == j else basis.zeros() for j in range(n)] for i in range(n)]
    powers.append(ident)
    var_monos = {}
    for k in range(n):
        for l in range(n):
            exps = [0] * (n * n)
            exps[k * n + l] = 1
            var_monos[(k, l)] = tuple(exps)
    for m in range(1, max_power + 1):
        prev = powers[m - 1]
        cur = [[basis.zeros() for _ in range(n)] for _ in range(n)]
        if m <= basis.max_degree:
            for i in range(n):
                for j in range(n):
                    acc = basis.zeros()
                    for l in range(n):
                        if np.any(prev[i][l]):
                            acc += basis.mul_monomial(prev[i][l], var_monos[(l, j)])
                    cur[i][j] = acc
        powers.append(cur)
    return powers


def symbolic_pgf(spec: ModelSpec, order: str = "right", max_degree: int | None = None) -> SeriesMatrix:
    """Claim generating series evaluated at the symbolic matrix argument.

    Entry (i, j) is the series of ``sum_m L(m) G^m`` for ``order="right"``
    (matrix argument multiplying from the right) or ``sum_m G^m L(m)`` for
    ``order="left"``.  The constant term of every entry is the corresponding
    zero-claim probability.
    """
    if order not in ("right", "left"):
        raise ValueError(f"order must be 'right' or 'left', got {order!r}")
    if max_degree is None:
        raise ValueError("a truncation degree is required")
    n = spec.n_states
    basis = _basis(n * n, max_degree)
    top = min(spec.claims.max_claim, max_degree)
    powers = _symbol_powers(n, basis, top)
    entries = [[basis.zeros() for _ in range(n)] for _ in range(n)]
    for m, lam in spec.claims.items():
        if m > max_degree:
            continue  # the symbolic power has no term within the truncation
        gp = powers[m]
        for i in range(n):
            for j in range(n):
                if order == "right":
                    for k in range(n):
                        if lam[i, k] != 0.0:
                            entries[i][j] = entries[i][j] + lam[i, k] * gp[k][j]
                else:
                    for k in range(n):
                        if lam[k, j] != 0.0:
                            entries[i][j] = entries[i][j] + gp[i][k] * lam[k, j]
    return SeriesMatrix([[MultiSeries(basis, entries[i][j]) for j in range(n)] for i in range(n)])


def gamma_matrix(pgf: SeriesMatrix) -> SeriesMatrix:
    """Logarithmic-derivative matrix of a generating-series matrix.

    The (row, column) pair indices flatten row-major: entry ((i,j),(k,l)) is
    ``G_ij * (d/dG_kl) lam_ij / lam_ij``, computed as an exact series
    quotient.  Every entry carries the ``G_ij`` factor, so the whole matrix
    vanishes at the origin.
    """
    n = pgf.shape[0]
    basis = pgf.entries[0][0].basis
    rows: list[list[MultiSeries]] = []
    for i in range(n):
        for j in range(n):
            lam = pgf[i, j]
            inv_lam = basis.inverse(lam.coeffs)
            exps = [0] * (n * n)
            exps[i * n + j] = 1
            w = tuple(exps)
            row: list[MultiSeries] = []
            for k in range(n):
                for l in range(n):
                    d = basis.derive(lam.coeffs, k * n + l)
                    quot = basis.mul(d, inv_lam)
                    row.append(MultiSeries(basis, basis.mul_monomial(quot, w)))
            rows.append(row)
    return SeriesMatrix(rows)


def det_series(mat: SeriesMatrix) -> MultiSeries:
    """Determinant of a square series matrix as a truncated series.

    Gaussian elimination with series division; pivots are inverted exactly,
    which always succeeds when the constant-term matrix is the identity.  A
    pivot without constant term triggers cofactor expansion along a row
    holding an invertible entry.
    """
    rows, cols = mat.shape
    if rows != cols:
        raise ValueError("determinant requires a square matrix")
    basis = mat.entries[0][0].basis
    work = [[mat.entries[i][j].coeffs.copy() for j in range(cols)] for i in range(rows)]
    return MultiSeries(basis, _det_eliminate(basis, work))


def _det_eliminate(basis: _MonomialBasis, work: list[list[np.ndarray]]) -> np.ndarray:
    n = len(work)
    det = basis.one()
    for k in range(n):
        if abs(work[k][k][0]) <= _INVERTIBLE_TOL:
            minor = [[work[i][j] for j in range(k, n)] for i in range(k, n)]
            return basis.mul(det, _det_cofactor(basis, minor))
        inv_pivot = basis.inverse(work[k][k])
        for i in range(k + 1, n):
            if not np.any(work[i][k]):
                continue
            factor = basis.mul(work[i][k], inv_pivot)
            for j in range(k + 1, n):
                if np.any(work[k][j]):
                    work[i][j] = work[i][j] - basis.mul(factor, work[k][j])
        det = basis.mul(det, work[k][k])
    return det


def _det_cofactor(basis: _MonomialBasis, work: list[list[np.ndarray]]) -> np.ndarray:
    n = len(work)
    if n == 1:
        return work[0][0].copy()
    pivot_row = next(
        (r for r in range(n) if any(abs(work[r][j][0]) > _INVERTIBLE_TOL for j in range(n))),
        None,
    )
    if pivot_row is None:
        raise ValueError("determinant requires invertible leading minor")
    out = basis.zeros()
    for j in range(n):
        if not np.any(work[pivot_row][j]):
            continue
        minor = [
            [work[r][c] for c in range(n) if c != j] for r in range(n) if r != pivot_row
        ]
        term = basis.mul(work[pivot_row][j], _det_eliminate(basis, minor))
        if (pivot_row + j) % 2:
            out = out - term
        else:
            out = out + term
    return out


# ---------------------------------------------------------------------------
# Lagrangian inversion of the first-passage fixed point
# ---------------------------------------------------------------------------


class _InversionContext:
    """Per-(order, degree) symbolic artifacts reused across extractions."""

    def __init__(self, spec: ModelSpec, order: str, degree: int):
        n = spec.n_states
        self.n_states = n
        self.degree = degree
        self.basis = _basis(n * n, degree)
        self.pgf = symbolic_pgf(spec, order, degree)
        gamma = gamma_matrix(self.pgf)
        ident = SeriesMatrix.identity(n * n, n * n, degree)
        self.det = det_series(ident - gamma).coeffs
        self.factors = [
            self.basis.compile_terms(self.pgf[v // n, v % n].terms) for v in range(n * n)
        ]
        self._powers = _symbol_powers(n, self.basis, 0)

    def power_entry(self, a: int, row: int, col: int) -> np.ndarray:
        while len(self._powers) <= a:
            self._powers = _symbol_powers(self.n_states, self.basis, a)
        return self._powers[a][row][col]

    def f_stack(self, a_max: int) -> np.ndarray:
        """Rows: (a, row, col) of ``(G^a)_{row,col} * det(I - Gamma)``, a = 1..a_max."""
        n = self.n_states
        rows = []
        for a in range(1, a_max + 1):
            for i in range(n):
                for j in range(n):
                    rows.append(self.basis.mul(self.power_entry(a, i, j), self.det))
        return np.array(rows)


class _LagrangeEngine:
    """Per-model cache of inversion contexts and extracted hitting tables."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.contexts: dict[tuple[str, int], _InversionContext] = {}
        self.tables: dict[tuple[str, int], dict[int, np.ndarray]] = {}

    def context(self, order: str, degree: int) -> _InversionContext:
        key = (order, degree)
        ctx = self.contexts.get(key)
        if ctx is None:
            ctx = _InversionContext(self.spec, order, degree)
            self.contexts[key] = ctx
        return ctx

    def hitting_table(self, order: str, n: int) -> dict[int, np.ndarray]:
        """Passage matrices at time n for every level 1..n, by inversion."""
        key = (order, n)
        table = self.tables.get(key)
        if table is None:
            ctx = self.context(order, n)
            acc = _sum_over_compositions(ctx, n)
            nst = ctx.n_states
            table = {
                a: acc[(a - 1) * nst * nst : a * nst * nst].reshape(nst, nst).copy()
                for a in range(1, n + 1)
            }
            self.tables[key] = table
        return table


def _sum_over_compositions(ctx: _InversionContext, n: int) -> np.ndarray:
    """Accumulate the inversion sum over all exponent vectors of total degree n.

    Walks the composition tree symbol by symbol so sibling exponent vectors
    share their partial products; each leaf extracts the coefficient of its
    own monomial from the product series by a divisor sum.  Leaves are
    visited, and the accumulator reduced, in colexicographic order.
    """
    basis = ctx.basis
    fstack = ctx.f_stack(n)
    nv = basis.n_vars
    index = basis.index
    acc = np.zeros(fstack.shape[0])
    x = [0] * nv

    def leaf(product: np.ndarray) -> None:
        xt = tuple(x)
        f_idx: list[int] = []
        l_idx: list[int] = []
        for z in itertools.product(*(range(e + 1) for e in xt)):
            f_idx.append(index[z])
            l_idx.append(index[tuple(e - ze for e, ze in zip(xt, z))])
        nonlocal acc
        acc += fstack[:, f_idx] @ product[l_idx]

    def walk(var: int, rem: int, product: np.ndarray) -> None:
        if var == 0:
            cur = product
            for _ in range(rem):
                cur = basis.mul_compiled(cur, ctx.factors[0])
            x[0] = rem
            leaf(cur)
            return
        cur = product
        for k in range(rem + 1):
            x[var] = k
            walk(var - 1, rem - k, cur)
            if k < rem:
                cur = basis.mul_compiled(cur, ctx.factors[var])

    walk(nv - 1, n, basis.one())
    return acc


_ENGINES: "weakref.WeakKeyDictionary[ModelSpec, _LagrangeEngine]" = weakref.WeakKeyDictionary()


def _engine(spec: ModelSpec) -> _LagrangeEngine:
    engine = _ENGINES.get(spec)
    if engine is None:
        engine = _LagrangeEngine(spec)
        _ENGINES[spec] = engine
    return engine


def _guard_composition_count(n: int, n_vars: int) -> None:
    count = math.comb(n + n_vars - 1, n_vars - 1)
    if count > MAX_COMPOSITIONS:
        raise ValueError(
            f"inversion at time {n} with {n_vars} symbols needs {count} exponent vectors "
            f"(limit {MAX_COMPOSITIONS}); use the dynamic-programming hitting route instead"
        )


def lagrange_b(
    spec: ModelSpec,
    f_power: tuple[int, int, int],
    x: Sequence[int],
    order: str = "right",
) -> float:
    """One raw inversion term: factorially weighted coefficient extraction.

    ``f_power = (a, row, col)`` selects the entry of the symbolic matrix
    power serving as the target function.  Returns the product of the
    exponent factorials with the coefficient of the monomial ``G^x`` in
    ``(G^a)_{row,col} * prod_ij lam_ij^{x_ij} * det(I - Gamma)`` truncated at
    the total degree of ``x``; this equals the repeated derivative of that
    product at the origin.
    """
    a, row, col = f_power
    if a < 0:
        raise ValueError("matrix power must be non-negative")
    xt = tuple(int(e) for e in x)
    n = spec.n_states
    if len(xt) != n * n or any(e < 0 for e in xt):
        raise ValueError(f"exponent vector must hold {n * n} non-negative integers")
    degree = sum(xt)
    ctx = _engine(spec).context(order, degree)
    basis = ctx.basis
    product = basis.mul(ctx.power_entry(a, row, col), ctx.det)
    for v, e in enumerate(xt):
        for _ in range(e):
            product = basis.mul_compiled(product, ctx.factors[v])
    coeff = product[basis.index[xt]]
    weight = 1.0
    for e in xt:
        weight *= math.factorial(e)
    return float(weight * coeff)


def _hitting_by_inversion(spec: ModelSpec, n: int, a: int, order: str) -> np.ndarray:
    if a < 1:
        raise ValueError(f"target level must be >= 1, got {a}")
    if n < 0:
        raise ValueError(f"time must be >= 0, got {n}")
    nst = spec.n_states
    if n < a:
        return np.zeros((nst, nst))
    _guard_composition_count(n, nst * nst)
    return _engine(spec).hitting_table(order, n)[a].copy()


def lagrange_Q(spec: ModelSpec, n: int, a: int) -> np.ndarray:
    """Joint law of the first passage to level ``a`` happening at time ``n``.

    Entry (i, j) is the probability, starting the background chain in state
    i, that the surplus first reaches ``a`` exactly at time ``n`` with the
    chain then in state j.  Computed by multivariate Lagrangian inversion of
    the first-passage fixed point; zero whenever ``n < a`` because the
    surplus moves up at most one level per step.

    All levels ``1..n`` are extracted and cached in a single sweep, so
    tabulating a whole grid costs one enumeration per time point.
    """
    return _hitting_by_inversion(spec, n, a, "right")


def lagrange_V(spec: ModelSpec, n: int, a: int) -> np.ndarray:
    """Inversion coefficients of the left Lundberg solution's matrix powers.

    Same extraction as :func:`lagrange_Q` but from the generating series with
    the matrix argument acting from the left; the result is the stationary
    conjugate transpose of the time-reversed model's first-passage law.
    """
    return _hitting_by_inversion(spec, n, a, "left")
