"""Model definition for the Markov-modulated binomial risk process.

The surplus process is ``X_n = x + n - S_n`` where the aggregate claims
``S_n = C_1 + ... + C_n`` are driven by an ergodic background Markov chain
with states ``{0, ..., N-1}``.  The model is fully described by the claim
kernel: a finitely supported family of non-negative matrices ``L(m)`` whose
entry ``(i, j)`` is the joint probability of a claim of size ``m`` together
with a background transition from state ``i`` to state ``j``.  Summing the
kernel over all claim sizes yields the transition matrix ``P`` of the
background chain.

This module owns validation of the standing assumptions (zero-claim matrix
strictly positive and invertible, ``P`` ergodic and row-stochastic), the
stationary distribution, and the time-reversed model whose kernel is the
stationary conjugate transpose of the original one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

STOCHASTIC_TOL = 1e-12

__all__ = [
    "MatrixSeq",
    "ModelSpec",
    "StateDist",
    "ModelValidationError",
    "make_model",
    "validate",
    "transition_matrix",
    "stationary_distribution",
    "reverse",
]


class ModelValidationError(ValueError):
    """Raised when an operation is handed a model violating its preconditions."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class MatrixSeq:
    """Finitely supported sequence of square matrices indexed by claim size.

    Holds the claim kernel ``m -> L(m)`` as well as its n-fold convolutions.
    Absent claim sizes are implicitly the zero matrix.
    """

    mats: Mapping[int, np.ndarray]

    def __post_init__(self):
        clean = {}
        n = None
        for m, mat in self.mats.items():
            arr = np.asarray(mat, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ValueError(f"matrix for claim size {m} is not square: shape {arr.shape}")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValueError("matrices in a sequence must share dimensions")
            arr.flags.writeable = False
            clean[int(m)] = arr
        if not clean:
            raise ValueError("matrix sequence needs at least one entry")
        object.__setattr__(self, "mats", clean)

    @property
    def n_states(self) -> int:
        return next(iter(self.mats.values())).shape[0]

    @property
    def support(self) -> list[int]:
        """Claim sizes carrying a non-zero matrix, ascending."""
        return sorted(m for m, mat in self.mats.items() if np.any(mat != 0.0))

    @property
    def max_claim(self) -> int:
        sup = self.support
        return sup[-1] if sup else 0

    def __call__(self, m: int) -> np.ndarray:
        mat = self.mats.get(m)
        if mat is None:
            return np.zeros((self.n_states, self.n_states))
        return mat

    def items(self) -> Iterator[tuple[int, np.ndarray]]:
        for m in sorted(self.mats):
            yield m, self.mats[m]

    def total(self) -> np.ndarray:
        """Sum over the whole support (the transition matrix for a claim kernel)."""
        out = np.zeros((self.n_states, self.n_states))
        for _, mat in self.items():
            out += mat
        return out


@dataclass(frozen=True, eq=False)
class StateDist:
    """Probability distribution over background states."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def diag(self) -> np.ndarray:
        """Diagonal matrix carrying the distribution (used for time reversal)."""
        return np.diag(self.probs)

    @property
    def ones(self) -> np.ndarray:
        """Column vector of units matching the state count."""
        return np.ones(self.n_states)


InitialPolicy = Union[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A Markov-modulated claim model: state count, claim kernel, initial law.

    ``initial`` is either the literal token ``"stationary"`` or an explicit
    probability vector over the background states.  Instances are immutable;
    every operation in this package is a pure function of its inputs.
    """

    n_states: int
    claims: MatrixSeq
    initial: InitialPolicy = "stationary"

    def __post_init__(self):
        if isinstance(self.initial, str):
            return
        arr = np.asarray(self.initial, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "initial", arr)

    @property
    def stationary_initial(self) -> bool:
        return isinstance(self.initial, str) and self.initial == "stationary"


def make_model(claims: Mapping[int, np.ndarray], initial: InitialPolicy = "stationary") -> ModelSpec:
    """Build and validate a model from a claim-size -> matrix mapping.

    Raises:
        ModelValidationError: listing every violated invariant.
    """
    seq = MatrixSeq(dict(claims))
    spec = ModelSpec(n_states=seq.n_states, claims=seq, initial=initial)
    violations = validate(spec)
    if violations:
        raise ModelValidationError(violations)
    return spec


def _is_primitive(p: np.ndarray) -> bool:
    """Ergodicity of a stochastic matrix == primitivity of its support pattern.

    Uses Wielandt's bound: a non-negative N x N matrix is primitive iff the
    boolean power to (N-1)^2 + 1 is everywhere positive.  Squaring in the
    boolean semiring avoids integer overflow.
    """
    n = p.shape[0]
    target = (n - 1) ** 2 + 1
    b = p > 0.0
    acc = np.eye(n, dtype=bool)
    sq = b
    k = target
    while k:
        if k & 1:
            acc = (acc.astype(int) @ sq.astype(int)) > 0
        sq = (sq.astype(int) @ sq.astype(int)) > 0
        k >>= 1
    return bool(acc.all())


def validate(spec: ModelSpec) -> list[str]:
    """Check every model invariant; return human-readable violations.

    An empty list means the model is valid.  Violations are data rather than
    exceptions so callers (e.g. the CLI) can report all of them at once.
    """
    violations: list[str] = []
    n = spec.n_states
    if n < 1:
        return [f"state count must be >= 1, got {n}"]
    if spec.claims.n_states != n:
        violations.append(
            f"claim matrices are {spec.claims.n_states}x{spec.claims.n_states} "
            f"but the model declares {n} states"
        )
        return violations

    for m, mat in spec.claims.items():
        if m < 0:
            violations.append(f"claim size {m} is negative")
        if np.any(mat < 0.0):
            i, j = np.argwhere(mat < 0.0)[0]
            violations.append(f"claim matrix for size {m} has negative entry at ({i},{j})")

    p = spec.claims.total()
    row_sums = p.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > STOCHASTIC_TOL):
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        violations.append(
            "row sums of the summed claim kernel must equal 1 "
            f"(row {worst} sums to {row_sums[worst]:.15g}, "
            f"missing mass {1.0 - row_sums[worst]:.3e})"
        )

    lam0 = spec.claims(0)
    if np.any(lam0 <= 0.0):
        i, j = np.argwhere(lam0 <= 0.0)[0]
        violations.append(
            f"zero-claim matrix must be strictly positive (entry ({i},{j}) is {lam0[i, j]:g})"
        )
    elif np.linalg.matrix_rank(lam0) < n:
        violations.append("zero-claim matrix must be invertible")

    if not violations and not _is_primitive(p):
        violations.append("transition matrix is not ergodic (irreducible and aperiodic)")

    if not spec.stationary_initial:
        init = np.asarray(spec.initial, dtype=float)
        if init.shape != (n,):
            violations.append(f"initial distribution has length {init.shape}, expected {n}")
        else:
            if np.any(init < 0.0):
                violations.append("initial distribution has negative entries")
            if abs(init.sum() - 1.0) > STOCHASTIC_TOL:
                violations.append(f"initial distribution sums to {init.sum():.15g}, not 1")

    return violations


def transition_matrix(spec: ModelSpec) -> np.ndarray:
    """Transition matrix of the background chain: the claim kernel summed over sizes."""
    return spec.claims.total()


def stationary_distribution(spec: ModelSpec) -> StateDist:
    """Stationary distribution of the background chain.

    Solved directly: the balance equations with the normalization row
    appended, via least squares.  Exact to machine precision at the small
    state counts this package targets.

    Raises:
        ModelValidationError: if the chain has no unique stationary law.
    """
    p = transition_matrix(spec)
    n = spec.n_states
    a = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = np.max(np.abs(pi @ p - pi))
    if residual > STOCHASTIC_TOL or np.any(pi < -STOCHASTIC_TOL):
        raise ModelValidationError(
            [f"no unique stationary distribution (balance residual {residual:.3e})"]
        )
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return StateDist(pi)


def reverse(spec: ModelSpec) -> ModelSpec:
    """Time-reversed model: kernel conjugated by the stationary distribution.

    The reversed kernel is ``diag(pi)^-1 L(m)^T diag(pi)`` for every claim
    size ``m``; run under stationarity it has the law of the original model
    read backwards.  Reversal is an involution and preserves the stationary
    distribution.
    """
    pi = stationary_distribution(spec).probs
    scale = pi[None, :] / pi[:, None]
    reversed_mats = {m: scale * mat.T for m, mat in spec.claims.items()}
    return ModelSpec(
        n_states=spec.n_states,
        claims=MatrixSeq(reversed_mats),
        initial=spec.initial,
    )
