"""Input validation helpers.

Small checkers in the spirit of ``sklearn.utils.validation``: they accept
array-likes, coerce to float arrays, and raise :class:`StructuralModelError`
with a named offender when an invariant is broken.
"""

from __future__ import annotations

import numpy as np

from .errors import StructuralModelError

STOCHASTIC_ATOL = 1e-9


def as_rng(seed_or_rng) -> np.random.Generator:
    """Coerce an int seed, ``SeedSequence`` or ``Generator`` to a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def check_probability_vector(v, name="vector", atol=STOCHASTIC_ATOL) -> np.ndarray:
    """Validate and return ``v`` as a 1-D probability vector.

    Entries must be nonnegative and sum to one within ``atol``.  The
    returned array is normalized exactly so downstream code can rely on
    tight (1e-12) sums.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise StructuralModelError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise StructuralModelError(f"{name} contains non-finite entries")
    if np.any(v < -atol):
        raise StructuralModelError(f"{name} has negative entries: min {v.min():.3e}")
    total = v.sum()
    if abs(total - 1.0) > atol:
        raise StructuralModelError(f"{name} sums to {total:.12f}, expected 1")
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


def check_stochastic_matrix(m, name="matrix", atol=STOCHASTIC_ATOL) -> np.ndarray:
    """Validate and return ``m`` as a column-stochastic matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise StructuralModelError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise StructuralModelError(f"{name} contains non-finite entries")
    if np.any(m < -atol):
        raise StructuralModelError(f"{name} has negative entries: min {m.min():.3e}")
    sums = m.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size:
        raise StructuralModelError(
            f"column {bad[0]} of {name} sums to {sums[bad[0]]:.12f}, expected 1"
        )
    m = np.clip(m, 0.0, None)
    return m / m.sum(axis=0, keepdims=True)


def check_index(i, bound, name="index") -> int:
    i = int(i)
    if not 0 <= i < bound:
        raise ValueError(f"{name} {i} out of range [0, {bound})")
    return i


def check_exploration_mixture(mixture, num_actions, atol=STOCHASTIC_ATOL) -> np.ndarray:
    """Return a mixture over actions; ``None`` means uniform."""
    if mixture is None:
        return np.full(num_actions, 1.0 / num_actions)
    mixture = check_probability_vector(mixture, "exploration mixture", atol)
    if mixture.shape != (num_actions,):
        raise StructuralModelError(
            f"exploration mixture has length {mixture.size}, expected {num_actions}"
        )
    return mixture
