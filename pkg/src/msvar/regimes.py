"""Regime-path combinatorics.

Deduplicated regime sets for a split path, occurrence indexes, transition
counts, and the Dirichlet-marginal path densities.  Regimes are 1-based
externally (values in ``1..N``); count and prior matrices carry the initial
distribution as row 0, so they have shape ``(N+1, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

__all__ = [
    "RegimeVector",
    "RegimePartition",
    "OccurrenceIndex",
    "TransitionCounts",
    "DirichletPriorSet",
    "dedup_order",
    "dedup_partition",
    "occurrence_index",
    "transition_counts",
    "regime_path_logdensity",
    "next_regime_probs",
]


@dataclass(frozen=True)
class RegimeVector:
    """A realized regime path ``(s_1, ..., s_T)`` over ``n_regimes`` states."""

    states: tuple[int, ...]
    n_regimes: int

    def __post_init__(self):
        if len(self.states) == 0:
            raise ValueError("regime path must be nonempty")
        if self.n_regimes < 1:
            raise ValueError("n_regimes must be positive")
        for s in self.states:
            if not 1 <= s <= self.n_regimes:
                raise ValueError(f"state {s} outside 1..{self.n_regimes}")

    def __len__(self) -> int:
        return len(self.states)

    def prefix(self, t: int) -> "RegimeVector":
        return RegimeVector(self.states[:t], self.n_regimes)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.states, dtype=np.int64)


def _as_states(path: RegimeVector | NDArray) -> tuple[int, ...]:
    if isinstance(path, RegimeVector):
        return path.states
    return tuple(int(s) for s in np.asarray(path).ravel())


@dataclass(frozen=True)
class RegimePartition:
    """Deduplicated regime sets for a path split after position ``split``.

    ``alpha`` holds the distinct regimes of the first segment in order of
    first appearance, ``beta`` those of the second segment, ``gamma`` their
    intersection, ``delta`` the regimes new to the second segment and
    ``epsilon`` those that never recur.  Set identities: ``alpha`` is the
    disjoint union of ``epsilon`` and ``gamma``; ``beta`` of ``gamma`` and
    ``delta``; and ``alpha + delta`` covers the whole path.
    """

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    gamma: tuple[int, ...]
    delta: tuple[int, ...]
    epsilon: tuple[int, ...]
    split: int


@dataclass(frozen=True)
class OccurrenceIndex:
    """Per-regime occurrence bookkeeping for a path prefix of length ``t``.

    ``regimes`` lists the distinct regimes in first-appearance order;
    ``times[k]`` holds the (1-based, sorted) occurrence times of
    ``regimes[k]``; ``counts[k]`` their number; and ``positions[u-1]`` is the
    1-based position of ``s_u`` within ``regimes``.
    """

    regimes: tuple[int, ...]
    times: tuple[tuple[int, ...], ...]
    counts: tuple[int, ...]
    positions: tuple[int, ...]

    def times_for(self, regime: int) -> tuple[int, ...]:
        return self.times[self.regimes.index(regime)]

    def count_for(self, regime: int) -> int:
        k = self.regimes.index(regime) if regime in self.regimes else -1
        return self.counts[k] if k >= 0 else 0

    def reconstruct(self) -> tuple[int, ...]:
        """Rebuild the original path from the position map."""
        return tuple(self.regimes[o - 1] for o in self.positions)


@dataclass(frozen=True)
class TransitionCounts:
    """Adjacent-pair counts ``n_ij`` with the initial state as row 0."""

    matrix: np.ndarray  # (N+1, N) integer

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] + 1:
            raise ValueError(f"counts must be (N+1, N), got {m.shape}")
        if np.any(m < 0):
            raise ValueError("counts must be nonnegative")
        if m[0].sum() != 1:
            raise ValueError("initial row must contain exactly one unit entry")


@dataclass(frozen=True)
class DirichletPriorSet:
    """Row-wise Dirichlet hyperparameters for the transition matrix, row 0 initial."""

    alpha: np.ndarray  # (N+1, N) positive

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] + 1:
            raise ValueError(f"Dirichlet prior matrix must be (N+1, N), got {a.shape}")
        if np.any(a <= 0.0) or not np.all(np.isfinite(a)):
            raise ValueError("Dirichlet parameters must be positive and finite")
        object.__setattr__(self, "alpha", a)

    @property
    def n_regimes(self) -> int:
        return self.alpha.shape[1]


def dedup_order(states) -> tuple[int, ...]:
    """Distinct regimes of a path in order of first appearance."""
    seen: dict[int, None] = {}
    for s in _as_states(states):
        seen.setdefault(int(s), None)
    return tuple(seen)


def dedup_partition(path: RegimeVector | NDArray, t: int) -> RegimePartition:
    """Split a path after position ``t`` and build the deduplicated sets.

    All five sets keep first-appearance order within their source segment,
    which makes the partition deterministic and reconstruction unambiguous.
    """
    states = _as_states(path)
    if not 1 <= t <= len(states):
        raise ValueError(f"split index {t} outside 1..{len(states)}")
    alpha = dedup_order(states[:t])
    beta = dedup_order(states[t:])
    gamma = tuple(s for s in alpha if s in beta)
    delta = tuple(s for s in beta if s not in alpha)
    epsilon = tuple(s for s in alpha if s not in beta)
    return RegimePartition(alpha, beta, gamma, delta, epsilon, t)


def occurrence_index(path: RegimeVector | NDArray, t: int) -> OccurrenceIndex:
    """Occurrence times, counts and the position map for the length-``t`` prefix."""
    states = _as_states(path)
    if not 1 <= t <= len(states):
        raise ValueError(f"index {t} outside 1..{len(states)}")
    regimes = dedup_order(states[:t])
    pos = {r: k + 1 for k, r in enumerate(regimes)}
    times: dict[int, list[int]] = {r: [] for r in regimes}
    positions = []
    for u, s in enumerate(states[:t], start=1):
        times[s].append(u)
        positions.append(pos[s])
    return OccurrenceIndex(
        regimes=regimes,
        times=tuple(tuple(v) for v in times.values()),
        counts=tuple(len(v) for v in times.values()),
        positions=tuple(positions),
    )


def transition_counts(path: RegimeVector | NDArray, n_regimes: int | None = None) -> TransitionCounts:
    """Count adjacent regime pairs, recording the initial state in row 0."""
    states = _as_states(path)
    if n_regimes is None:
        if not isinstance(path, RegimeVector):
            raise ValueError("n_regimes is required for a bare state sequence")
        n_regimes = path.n_regimes
    m = np.zeros((n_regimes + 1, n_regimes), dtype=np.int64)
    m[0, states[0] - 1] = 1
    prev = np.asarray(states[:-1], dtype=np.int64)
    nxt = np.asarray(states[1:], dtype=np.int64)
    np.add.at(m, (prev, nxt - 1), 1)
    return TransitionCounts(m)


def regime_path_logdensity(path: RegimeVector | NDArray, priors: DirichletPriorSet) -> float:
    """Log marginal density of a regime path with the transition matrix integrated out.

    Product over rows of Dirichlet-multinomial normalizing ratios evaluated at
    the path's transition counts.
    """
    n = priors.n_regimes
    counts = transition_counts(path, n).matrix
    a = priors.alpha
    row_tot = a.sum(axis=1)
    post_tot = row_tot + counts.sum(axis=1)
    val = (
        np.sum(gammaln(row_tot) - gammaln(post_tot))
        + np.sum(gammaln(a + counts) - gammaln(a))
    )
    return float(val)


def next_regime_probs(path: RegimeVector | NDArray, priors: DirichletPriorSet) -> np.ndarray:
    """Predictive distribution of the next regime given the path so far.

    ``(alpha_{s_t, j} + n_{s_t, j}(path)) / sum_j (...)`` - the posterior-mean
    transition row for the current state.  Because the counts enter, the
    regime process is not itself a Markov chain given only the priors.
    """
    n = priors.n_regimes
    states = _as_states(path)
    counts = transition_counts(states, n).matrix
    row = priors.alpha[states[-1]] + counts[states[-1]]
    return row / row.sum()
