"""Finite-time ruin and survival probabilities.

Three exact routes to the same quantities, kept deliberately redundant so
they can cross-check each other:

* a ballot-style closed form for zero initial surplus, weighting the n-fold
  claim convolutions by how far the aggregate claims stay below the premium
  income;
* the exact law of the ruin time (initial surplus zero or one), assembled
  from the reversed-model passage matrices; and
* a Seal-type double sum valid for every initial surplus, expressing
  survival through reversed-process passage times.

Every formula here assumes the background chain starts from its stationary
distribution; that requirement is enforced at the operation boundary rather
than silently substituting a non-stationary vector, because the closed forms
are simply not valid otherwise.  A constrained dynamic-programming survival
computation is provided as an always-available independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import conv_cache
from .hitting import dp_V, lundberg_R
from .model import ModelSpec, stationary_distribution, transition_matrix

__all__ = [
    "RuinReport",
    "takacs_survival",
    "ruin_time_dist",
    "seal_survival",
    "phi_transform",
    "dp_survival",
    "survival_report",
]


@dataclass(frozen=True)
class RuinReport:
    """Survival probabilities per horizon with method provenance."""

    x: int
    horizons: list[int]
    survival: dict[int, float]
    method: str
    stderr: dict[int, float] | None = None
    ruin_time_matrices: dict[int, np.ndarray] | None = None

    @property
    def ruin(self) -> dict[int, float]:
        return {n: 1.0 - s for n, s in self.survival.items()}


def _require_stationary(spec: ModelSpec, what: str) -> np.ndarray:
    if not spec.stationary_initial:
        raise ValueError(f"{what} requires the stationary initial distribution")
    return stationary_distribution(spec).probs


def takacs_survival(spec: ModelSpec, n: int) -> float:
    """Probability of surviving ``n`` periods from zero initial surplus.

    Ballot-style closed form: each aggregate-claim level m < n contributes
    its probability weighted by (n - m)/n.
    """
    pi = _require_stationary(spec, "the zero-surplus survival formula")
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    conv = conv_cache(spec).nfold(n)
    e = np.ones(spec.n_states)
    total = 0.0
    for m in range(n):
        total += (n - m) * float(pi @ conv(m) @ e)
    return total / n


def _v_matrices(spec: ModelSpec, n_max: int) -> dict[int, dict[int, np.ndarray]]:
    """Reversed-passage matrices V[level][time] for all levels 1..n_max."""
    return {a: dp_V(spec, n_max, a).Q for a in range(1, n_max + 1)}


def ruin_time_dist(spec: ModelSpec, n_max: int, x: int = 0) -> dict[int, np.ndarray]:
    """Exact law of the ruin time as joint matrices with the background state.

    Entry (i, j) of the matrix at time n is the probability that ruin happens
    exactly at n with the chain moving i -> j.  Supported for initial surplus
    0 and 1; survival for larger surplus goes through the Seal-type formula.
    The matrices condition on the initial state; the suite validates their
    stationary-weighted scalars against the independent oracles.
    """
    _require_stationary(spec, "the ruin-time distribution")
    if x not in (0, 1):
        raise ValueError(f"ruin-time distribution is available for surplus 0 or 1, got {x}")
    if n_max < 1:
        raise ValueError(f"horizon must be >= 1, got {n_max}")
    n_states = spec.n_states
    p = transition_matrix(spec)
    lam0 = spec.claims(0)
    top = n_max if x == 0 else n_max + 1
    v = _v_matrices(spec, top)

    def v_sum(k: int) -> np.ndarray:
        out = np.zeros((n_states, n_states))
        for a in range(1, k + 1):
            out += v[a][k]
        return out

    out: dict[int, np.ndarray] = {}
    if x == 0:
        out[1] = p - lam0
        for n in range(2, n_max + 1):
            out[n] = v_sum(n - 1) @ p - v_sum(n)
    else:
        lam0_inv = np.linalg.inv(lam0)
        for n in range(1, n_max + 1):
            out[n] = lam0_inv @ (v_sum(n) @ p - v_sum(n + 1))
    return out


def seal_survival(spec: ModelSpec, x: int, n: int) -> float:
    """Probability of surviving ``n`` periods from initial surplus ``x``.

    Seal-type formula: the aggregate-claim mass compatible with survival,
    corrected by a double sum pairing claim convolutions with the reversed
    passage matrices.  At a one-period horizon the correction is empty and
    the value reduces to the probability that the first claim is at most x.
    """
    pi = _require_stationary(spec, "the survival formula")
    if x < 0:
        raise ValueError(f"initial surplus must be >= 0, got {x}")
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    cache = conv_cache(spec)
    n_states = spec.n_states
    e = np.ones(n_states)
    conv_n = cache.nfold(n)
    body = np.zeros((n_states, n_states))
    for i in range(x + n):
        body += conv_n(i)
    if n > 1:
        v = _v_matrices(spec, n - 1)
        for j in range(x + 1, x + n):
            conv_j = cache.nfold(j - x)(j)
            for nu in range(j, x + n):
                body -= conv_j @ v[n + x - nu][n + x - j]
    return float(pi @ body @ e)


def phi_transform(spec: ModelSpec, v: float, x: int = 1) -> np.ndarray:
    """Discounted ruin-time transform matrix for initial surplus 0 or 1.

    Closed form built from the left Lundberg solution; the surplus-0 value
    follows by conditioning on the first period.  Requires a discount
    strictly below one so the geometric part of the closed form converges.
    """
    _require_stationary(spec, "the discounted ruin transform")
    if not 0.0 < v < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {v}")
    if x not in (0, 1):
        raise ValueError(f"transform is available for surplus 0 or 1, got {x}")
    n = spec.n_states
    r = lundberg_R(spec, v).R
    if np.max(np.abs(np.linalg.eigvals(r))) >= 1.0:
        raise ValueError("left Lundberg solution has spectral radius >= 1")
    lam0 = spec.claims(0)
    p = transition_matrix(spec)
    eye = np.eye(n)
    core = np.linalg.solve(eye - r, r @ (eye / v - p))
    phi1 = eye - np.linalg.solve(lam0, core)
    if x == 1:
        return phi1
    return v * (p - lam0) + v * lam0 @ phi1


def dp_survival(spec: ModelSpec, x: int, n: int) -> float:
    """Survival probability by direct path recursion (independent oracle).

    Propagates the joint law of (surplus, background state) over paths whose
    surplus has stayed strictly positive; exact because claims are bounded.
    Used to defend the closed-form index ranges, not as the fast path.
    """
    pi = _require_stationary(spec, "the survival recursion")
    if x < 0 or n < 1:
        raise ValueError("need surplus >= 0 and horizon >= 1")
    claims = list(spec.claims.items())
    alive: dict[int, np.ndarray] = {x: pi.copy()}
    for _ in range(n):
        nxt: dict[int, np.ndarray] = {}
        for y, vec in alive.items():
            for m, lam in claims:
                y2 = y + 1 - m
                if y2 < 1:
                    continue  # ruined
                acc = nxt.get(y2)
                if acc is None:
                    nxt[y2] = vec @ lam
                else:
                    acc += vec @ lam
        alive = nxt
    return float(sum(vec.sum() for vec in alive.values()))


def survival_report(
    spec: ModelSpec,
    x: int,
    n_max: int,
    method: str = "seal",
    mc_config=None,
) -> RuinReport:
    """Survival table over horizons 1..n_max by the requested method."""
    horizons = list(range(1, n_max + 1))
    stderr: dict[int, float] | None = None
    matrices: dict[int, np.ndarray] | None = None
    if method == "takacs":
        if x != 0:
            raise ValueError("the zero-surplus survival formula requires x = 0")
        survival = {n: takacs_survival(spec, n) for n in horizons}
    elif method == "seal":
        survival = {n: seal_survival(spec, x, n) for n in horizons}
    elif method == "distribution":
        pi = _require_stationary(spec, "the ruin-time distribution")
        e = np.ones(spec.n_states)
        matrices = ruin_time_dist(spec, n_max, x)
        survival = {}
        cum = 0.0
        for n in horizons:
            cum += float(pi @ matrices[n] @ e)
            survival[n] = 1.0 - cum
    elif method == "mc":
        from .montecarlo import SimConfig, estimate_survival_curve

        cfg = mc_config if mc_config is not None else SimConfig(paths=100_000, horizon=n_max, x0=x)
        if cfg.x0 != x or cfg.horizon < n_max:
            raise ValueError("simulation config must match the requested surplus and horizon")
        curve = estimate_survival_curve(spec, cfg)
        survival = {n: curve[n].value for n in horizons}
        stderr = {n: curve[n].stderr for n in horizons}
    else:
        raise ValueError(f"unknown method {method!r}")
    return RuinReport(
        x=x,
        horizons=horizons,
        survival=survival,
        method=method,
        stderr=stderr,
        ruin_time_matrices=matrices,
    )
