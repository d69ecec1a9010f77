"""Ballot identity and stationarity checks for the claim sequence.

Under the stationary law of the background chain the claims form a
stationary sequence, and the aggregate-claim path obeys a ballot identity:
conditionally on the total after n periods, the chance that the running
total stayed strictly below the elapsed time at every step equals one minus
the total over n (zero once the total reaches n).  Both sides are computable
exactly at integer claim sizes: the left by a constrained recursion over
(partial sum, state), the right in closed form; this module exposes the
machinery that makes the comparison testable.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .algebra import conv_cache
from .model import ModelSpec, stationary_distribution, transition_matrix

__all__ = ["ballot_conditional", "joint_claim_prob"]


def ballot_conditional(spec: ModelSpec, n: int, m: int) -> float:
    """Probability the claim path stayed below the clock, given its endpoint.

    Computes ``P(S_k < k for all 0 < k <= n | S_n = m)`` exactly: the joint
    numerator by a recursion over partial sums constrained to stay below the
    step index, the denominator from the n-fold convolution.  The ballot
    identity says this equals ``1 - m/n`` for m < n and zero otherwise.
    """
    pi = stationary_distribution(spec).probs if spec.stationary_initial else None
    if pi is None:
        raise ValueError("the ballot identity requires the stationary initial distribution")
    if n < 1 or m < 0:
        raise ValueError("need horizon >= 1 and total >= 0")
    e = np.ones(spec.n_states)
    denom = float(pi @ conv_cache(spec).nfold(n)(m) @ e)
    if denom <= 1e-300:
        raise ValueError(f"conditioning event has zero probability (S_{n} = {m})")

    claims = list(spec.claims.items())
    # alive[s] = row vector over states with the path constrained to S_k <= k-1
    alive: dict[int, np.ndarray] = {0: pi.copy()}
    for k in range(1, n + 1):
        nxt: dict[int, np.ndarray] = {}
        for s, vec in alive.items():
            for c, lam in claims:
                s2 = s + c
                if s2 > k - 1 or s2 > m:
                    continue
                acc = nxt.get(s2)
                if acc is None:
                    nxt[s2] = vec @ lam
                else:
                    acc += vec @ lam
        alive = nxt
    joint = float(alive.get(m, np.zeros(spec.n_states)).sum())
    return joint / denom


def joint_claim_prob(
    spec: ModelSpec,
    offsets: Sequence[int],
    values: Sequence[int],
    start: int = 1,
) -> float:
    """Joint probability of claim values at the given time offsets.

    ``P(C_{start+offsets[0]} = values[0], ..., C_{start+offsets[r]} = values[r])``
    under the stationary initial distribution, evaluated as the matrix chain
    of claim matrices separated by transition-matrix powers spanning the
    gaps.  The chain has no dependence on ``start``: the claim sequence is
    stationary, so any shift yields the identical product.
    """
    if not spec.stationary_initial:
        raise ValueError("joint claim probabilities require the stationary initial distribution")
    offs = [int(o) for o in offsets]
    vals = [int(v) for v in values]
    if len(offs) != len(vals) or not offs:
        raise ValueError("offsets and values must be non-empty and of equal length")
    if any(b <= a for a, b in zip(offs, offs[1:])):
        raise ValueError("offsets must be strictly increasing")
    if start < 1:
        raise ValueError(f"start period must be >= 1, got {start}")
    pi = stationary_distribution(spec).probs
    p = transition_matrix(spec)
    vec = pi @ spec.claims(vals[0])
    for prev, cur, val in zip(offs, offs[1:], vals[1:]):
        gap = cur - prev - 1
        vec = vec @ np.linalg.matrix_power(p, gap) @ spec.claims(val)
    return float(vec.sum())
