"""First-passage distributions by dynamic programming, and Lundberg fixed points.

The surplus process gains one unit per period and loses the claim, so it is
skip-free upward: upper levels are hit exactly, and the law of the first
passage to a level follows from a forward recursion over the (surplus,
background-state) pairs that have stayed strictly below it.  This route is
independent of the Lagrangian-inversion machinery in :mod:`.series` and the
two cross-validate each other.

The discounted first-passage transforms are the minimal non-negative
solutions of the matrix Lundberg equation, obtained here by monotone
fixed-point iteration from zero.  The right solution generates the forward
passage law; the left solution is tied to the time-reversed model by a
stationary conjugation, and both routes are computed so each can check the
other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, reverse, stationary_distribution

__all__ = [
    "HittingTable",
    "LundbergSolution",
    "dp_Q",
    "dp_V",
    "lundberg_G",
    "lundberg_R",
    "r_from_reversal",
]

LUNDBERG_TOL = 1e-13
LUNDBERG_MAX_ITER = 10**6


@dataclass(frozen=True)
class HittingTable:
    """First-passage matrices ``Q[n]`` for one target level.

    ``Q[n][i, j]`` is the probability that the passage happens exactly at
    time n with the background chain moving from initial state i to state j.
    Entries below the level index are zero (skip-free upward), and the mass
    summed over all times and end states never exceeds one.
    """

    level: int
    n_max: int
    Q: dict[int, np.ndarray]

    def matrix(self, n: int) -> np.ndarray:
        """Passage matrix at time n (zero outside the tabulated range)."""
        mat = self.Q.get(n)
        if mat is None:
            n_states = next(iter(self.Q.values())).shape[0]
            return np.zeros((n_states, n_states))
        return mat

    def weighted(self, pi: np.ndarray, n: int) -> float:
        """Scalar passage probability at time n under an initial state law."""
        mat = self.matrix(n)
        return float(pi @ mat @ np.ones(mat.shape[0]))


def dp_Q(spec: ModelSpec, n_max: int, a: int, x0: int = 0) -> HittingTable:
    """First-passage law to level ``a`` by forward dynamic programming.

    Propagates the sub-probability matrices of paths that start at surplus
    ``x0`` and have stayed strictly below ``a``; because increments are at
    most +1 the passage happens from level ``a - 1`` on a zero claim, which
    closes each time slice exactly.  The level window is the reachable range
    only, so the recursion is exact, not truncated.
    """
    if a < x0 + 1:
        raise ValueError(f"target level {a} must exceed the starting level {x0}")
    if n_max < 1:
        raise ValueError(f"horizon must be >= 1, got {n_max}")
    n = spec.n_states
    lam0 = spec.claims(0)
    claims = list(spec.claims.items())
    alive: dict[int, np.ndarray] = {x0: np.eye(n)}
    out: dict[int, np.ndarray] = {}
    for step in range(1, n_max + 1):
        at_boundary = alive.get(a - 1)
        out[step] = at_boundary @ lam0 if at_boundary is not None else np.zeros((n, n))
        nxt: dict[int, np.ndarray] = {}
        for y, mat in alive.items():
            for m, lam in claims:
                y2 = y + 1 - m
                if y2 > a - 1:
                    continue  # passage handled at the boundary slice
                acc = nxt.get(y2)
                if acc is None:
                    nxt[y2] = mat @ lam
                else:
                    acc += mat @ lam
        alive = nxt
    return HittingTable(level=a, n_max=n_max, Q=out)


def dp_V(spec: ModelSpec, n_max: int, a: int) -> HittingTable:
    """Stationary conjugate transpose of the reversed model's passage law.

    Computes the passage matrices of the time-reversed model by the same
    dynamic programming and conjugates them with the stationary distribution;
    the result matches the inversion coefficients of the left Lundberg
    solution's matrix powers.
    """
    pi = stationary_distribution(spec).probs
    rev_table = dp_Q(reverse(spec), n_max, a)
    scale = pi[None, :] / pi[:, None]
    out = {n: scale * mat.T for n, mat in rev_table.Q.items()}
    return HittingTable(level=a, n_max=n_max, Q=out)


@dataclass(frozen=True)
class LundbergSolution:
    """Minimal non-negative solution(s) of the matrix Lundberg equation.

    ``G`` solves the right equation (powers of the unknown on the right of
    the kernel), ``R`` the left one; either may be absent when only one side
    was computed.  Both are sub-stochastic for discounts up to one.
    """

    v: float
    G: np.ndarray | None = None
    R: np.ndarray | None = None
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: dict[str, int] = field(default_factory=dict)


def _kernel_map(spec: ModelSpec, v: float, side: str):
    claims = list(spec.claims.items())
    top = claims[-1][0] if claims else 0

    def apply(g: np.ndarray) -> np.ndarray:
        # Horner evaluation keeping the argument's powers on the proper side.
        acc = spec.claims(top).copy() if side == "right" else spec.claims(top).copy()
        for m in range(top - 1, -1, -1):
            if side == "right":
                acc = acc @ g + spec.claims(m)
            else:
                acc = g @ acc + spec.claims(m)
        return v * acc

    return apply


def _iterate_lundberg(spec: ModelSpec, v: float, side: str) -> tuple[np.ndarray, float, int]:
    if not 0.0 < v <= 1.0:
        raise ValueError(f"discount must lie in (0, 1], got {v}")
    step = _kernel_map(spec, v, side)
    g = np.zeros((spec.n_states, spec.n_states))
    for it in range(1, LUNDBERG_MAX_ITER + 1):
        nxt = step(g)
        if np.max(np.abs(nxt - g)) < LUNDBERG_TOL:
            residual = float(np.max(np.abs(nxt - step(nxt))))
            return nxt, residual, it
        g = nxt
    raise RuntimeError(
        f"no convergence of the Lundberg iteration after {LUNDBERG_MAX_ITER} steps at v={v}"
    )


def lundberg_G(spec: ModelSpec, v: float) -> LundbergSolution:
    """Right Lundberg solution: the discounted upward first-passage transform.

    Monotone fixed-point iteration from the zero matrix, stopped when
    successive iterates agree to within ``1e-13`` in max norm; the limit is
    the minimal non-negative solution.  Near-critical models (discount one
    with zero net drift) converge slowly but are not special-cased.
    """
    g, residual, iters = _iterate_lundberg(spec, v, "right")
    return LundbergSolution(v=v, G=g, residuals={"G": residual}, iterations={"G": iters})


def lundberg_R(spec: ModelSpec, v: float) -> LundbergSolution:
    """Left Lundberg solution (argument powers acting from the left)."""
    r, residual, iters = _iterate_lundberg(spec, v, "left")
    return LundbergSolution(v=v, R=r, residuals={"R": residual}, iterations={"R": iters})


def r_from_reversal(spec: ModelSpec, v: float) -> np.ndarray:
    """Left Lundberg solution computed through the time-reversed model.

    Solves the right equation on the reversed model and conjugates with the
    stationary distribution.  Agreement with :func:`lundberg_R` is asserted
    by the test suite rather than one route being preferred.
    """
    pi = stationary_distribution(spec).probs
    g_rev = lundberg_G(reverse(spec), v).G
    scale = pi[None, :] / pi[:, None]
    return scale * g_rev.T
