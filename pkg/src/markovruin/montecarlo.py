"""Seeded path simulation: the statistical oracle for every closed form.

Paths of the (surplus, background-state) process are generated from a
counter-based generator keyed by the seed, with a fixed per-path block of
uniforms: path i consumes draws ``[i * block, (i + 1) * block)`` of the raw
stream regardless of chunking, so results are reproducible and independent
of scheduling.  Per step, the claim size and next state are sampled jointly
from the kernel row of the current state.

Estimators are plain indicator means with standard errors; the ballot
estimator conditions by rejection (the exact conditional exists through the
constrained recursion, so simulation is a sanity layer only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .model import ModelSpec, stationary_distribution

__all__ = [
    "SimConfig",
    "Estimate",
    "simulate_paths",
    "estimate_survival",
    "estimate_survival_curve",
    "estimate_hitting",
    "estimate_ballot",
]

_CHUNK = 200_000


@dataclass(frozen=True)
class SimConfig:
    """Simulation run parameters.

    ``initial`` is either ``"stationary"`` (sample the starting state from
    the stationary distribution, matching every stationary-case formula) or
    a fixed state index.
    """

    paths: int
    horizon: int
    seed: int = 0
    x0: int = 0
    initial: Union[str, int] = "stationary"

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError(f"need at least one path, got {self.paths}")
        if self.horizon < 1:
            raise ValueError(f"need horizon >= 1, got {self.horizon}")


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its standard error."""

    value: float
    stderr: float
    paths: int


def _outcome_tables(spec: ModelSpec):
    """Per-state cumulative law over joint (claim, next-state) outcomes."""
    support = [m for m, _ in spec.claims.items()]
    n = spec.n_states
    probs = np.stack(
        [np.concatenate([spec.claims(m)[i, :] for m in support]) for i in range(n)]
    )
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    claim_of = np.repeat(np.array(support), n)
    state_of = np.tile(np.arange(n), len(support))
    return cdf, claim_of, state_of


def _iter_chunks(spec: ModelSpec, cfg: SimConfig) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (states, claims, surplus) arrays per chunk of paths.

    states: (paths, horizon + 1) including the initial state;
    claims: (paths, horizon); surplus: (paths, horizon + 1) with column 0
    equal to the initial surplus.
    """
    cdf, claim_of, state_of = _outcome_tables(spec)
    n = spec.n_states
    draws_per_path = cfg.horizon + 1
    # Counter-based chunking: the generator advances in 4-draw blocks, so the
    # per-path block is padded up to a multiple of four.
    block = -(-draws_per_path // 4) * 4
    pi_cdf = np.cumsum(stationary_distribution(spec).probs)
    pi_cdf[-1] = 1.0

    start = 0
    while start < cfg.paths:
        count = min(_CHUNK, cfg.paths - start)
        bitgen = np.random.Philox(key=cfg.seed)
        bitgen.advance(start * block // 4)
        u = np.random.Generator(bitgen).random((count, block))

        states = np.empty((count, cfg.horizon + 1), dtype=np.int64)
        if isinstance(cfg.initial, str):
            states[:, 0] = np.searchsorted(pi_cdf, u[:, 0], side="right")
        else:
            states[:, 0] = int(cfg.initial)
        claims = np.empty((count, cfg.horizon), dtype=np.int64)
        for k in range(1, cfg.horizon + 1):
            uk = u[:, k]
            prev = states[:, k - 1]
            outcome = np.empty(count, dtype=np.int64)
            for s in range(n):
                mask = prev == s
                if mask.any():
                    outcome[mask] = np.searchsorted(cdf[s], uk[mask], side="right")
            claims[:, k - 1] = claim_of[outcome]
            states[:, k] = state_of[outcome]
        surplus = np.empty((count, cfg.horizon + 1), dtype=np.int64)
        surplus[:, 0] = cfg.x0
        surplus[:, 1:] = cfg.x0 + np.arange(1, cfg.horizon + 1) - np.cumsum(claims, axis=1)
        yield states, claims, surplus
        start += count


def simulate_paths(spec: ModelSpec, cfg: SimConfig) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Stream of per-path (state path, claim path, surplus path) arrays."""
    for states, claims, surplus in _iter_chunks(spec, cfg):
        for row in range(states.shape[0]):
            yield states[row], claims[row], surplus[row]


def _indicator_estimate(hits: int, total: int) -> Estimate:
    p = hits / total
    sd = np.sqrt(p * (1.0 - p) * total / (total - 1)) if total > 1 else 0.0
    return Estimate(value=p, stderr=float(sd / np.sqrt(total)), paths=total)


def estimate_survival(spec: ModelSpec, cfg: SimConfig, n: int) -> Estimate:
    """Fraction of paths whose surplus stayed positive through n periods."""
    return estimate_survival_curve(spec, cfg, n_max=n)[n]


def estimate_survival_curve(spec: ModelSpec, cfg: SimConfig, n_max: int | None = None) -> dict[int, Estimate]:
    """Survival estimates for every horizon up to ``n_max`` from one run."""
    top = cfg.horizon if n_max is None else n_max
    run = cfg if cfg.horizon >= top else SimConfig(cfg.paths, top, cfg.seed, cfg.x0, cfg.initial)
    hits = np.zeros(top, dtype=np.int64)
    for _, _, surplus in _iter_chunks(spec, run):
        running_min = np.minimum.accumulate(surplus[:, 1 : top + 1], axis=1)
        hits += (running_min >= 1).sum(axis=0)
    return {k + 1: _indicator_estimate(int(hits[k]), cfg.paths) for k in range(top)}


def estimate_hitting(spec: ModelSpec, cfg: SimConfig, a: int) -> dict[int, Estimate]:
    """Empirical law of the first passage time to level ``a`` per horizon."""
    if a < cfg.x0 + 1:
        raise ValueError(f"target level {a} must exceed the starting surplus {cfg.x0}")
    counts = np.zeros(cfg.horizon + 1, dtype=np.int64)
    for _, _, surplus in _iter_chunks(spec, cfg):
        reached = surplus >= a
        hit_any = reached.any(axis=1)
        first = np.argmax(reached, axis=1)
        np.add.at(counts, first[hit_any], 1)
    return {n: _indicator_estimate(int(counts[n]), cfg.paths) for n in range(1, cfg.horizon + 1)}


def estimate_ballot(spec: ModelSpec, cfg: SimConfig, n: int, m: int) -> Estimate:
    """Rejection estimate of the ballot conditional probability.

    Conditions on the aggregate claims after n periods equalling m and
    reports the fraction of accepted paths whose running total stayed below
    the clock at every step.
    """
    run = cfg if cfg.horizon >= n else SimConfig(cfg.paths, n, cfg.seed, cfg.x0, cfg.initial)
    accepted = 0
    below = 0
    for _, claims, _ in _iter_chunks(spec, run):
        totals = np.cumsum(claims[:, :n], axis=1)
        keep = totals[:, -1] == m
        accepted += int(keep.sum())
        if keep.any():
            clock = np.arange(1, n + 1)
            below += int((totals[keep] < clock).all(axis=1).sum())
    if accepted == 0:
        raise ValueError(f"insufficient conditioning mass: no path reached S_{n} = {m}")
    return _indicator_estimate(below, accepted)
