"""Matrix-sequence convolution engine.

Every closed-form ruin or first-passage formula in this package is built
from n-fold convolutions of the claim kernel: the sequence whose value at
``m`` sums, over all splits ``m = k + (m - k)``, the matrix product of the
two operands.  Matrix order follows path order (earlier steps multiply from
the left), so summing a convolution over its support reproduces the matching
power of the transition matrix.

Supports are finite and grow linearly, matrices stay tiny, so everything is
dense and exact; the cache exists because aggregate formulas at horizon n
touch every convolution order up to n.
"""

from __future__ import annotations

import weakref

import numpy as np

from .model import MatrixSeq, ModelSpec

__all__ = ["ConvCache", "convolve", "nfold", "conv_cache"]


def convolve(a: MatrixSeq, b: MatrixSeq) -> MatrixSeq:
    """Convolution of two matrix sequences, ``a`` acting first.

    result(m) = sum over k of a(k) @ b(m - k).
    """
    if a.n_states != b.n_states:
        raise ValueError(f"dimension mismatch: {a.n_states} vs {b.n_states} states")
    n = a.n_states
    out: dict[int, np.ndarray] = {}
    for ka, mat_a in a.items():
        for kb, mat_b in b.items():
            m = ka + kb
            acc = out.get(m)
            if acc is None:
                acc = np.zeros((n, n))
                out[m] = acc
            acc += mat_a @ mat_b
    return MatrixSeq(out)


def identity_seq(n_states: int) -> MatrixSeq:
    """Convolution identity: the identity matrix concentrated at claim size 0."""
    return MatrixSeq({0: np.eye(n_states)})


class ConvCache:
    """Memo table of n-fold convolutions of one claim kernel.

    Idempotent inserts; the zeroth fold is the identity sequence.  Safe to
    share across read-only computations on the same model.
    """

    def __init__(self, claims: MatrixSeq):
        self.claims = claims
        self._folds: dict[int, MatrixSeq] = {
            0: identity_seq(claims.n_states),
            1: claims,
        }

    def nfold(self, n: int) -> MatrixSeq:
        if n < 0:
            raise ValueError(f"convolution order must be >= 0, got {n}")
        highest = max(self._folds)
        while highest < n:
            self._folds[highest + 1] = convolve(self._folds[highest], self.claims)
            highest += 1
        return self._folds[n]


def nfold(cache: ConvCache, n: int) -> MatrixSeq:
    """Exact n-fold convolution of the cached kernel (memoized)."""
    return cache.nfold(n)


_CACHES: "weakref.WeakKeyDictionary[ModelSpec, ConvCache]" = weakref.WeakKeyDictionary()


def conv_cache(spec: ModelSpec) -> ConvCache:
    """Per-model convolution cache, shared across the formula modules."""
    cache = _CACHES.get(spec)
    if cache is None:
        cache = ConvCache(spec.claims)
        _CACHES[spec] = cache
    return cache
