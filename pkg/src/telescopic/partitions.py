"""Canonical partitions of [n]: representation, comparison metrics, algebra.

A partition of n subjects is stored as a vector of 0-based cluster labels in
order-of-appearance form: subject 0 always has label 0, and each subsequent
subject either reuses an existing label or introduces the smallest unused
integer.  In this form partition equality is plain sequence equality, which
is what every other module relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Partition",
    "CrossTab",
    "canonicalize",
    "as_partition",
    "crosstab",
    "rand_index",
    "binder_count",
    "variation_of_information",
    "tari",
    "common_refinement",
    "enumerate_partitions",
    "bell_number",
]

DEFAULT_ENUMERATION_CAP = 10


@dataclass(frozen=True)
class Partition:
    """A partition of n subjects in canonical order-of-appearance labels."""

    labels: tuple[int, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("partition needs at least one subject")
        top = -1
        for lab in self.labels:
            if lab > top + 1 or lab < 0:
                raise ValueError(f"labels {self.labels} are not canonical")
            top = max(top, lab)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return max(self.labels) + 1

    @property
    def sizes(self) -> tuple[int, ...]:
        counts = [0] * self.k
        for lab in self.labels:
            counts[lab] += 1
        return tuple(counts)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def __iter__(self):
        return iter(self.labels)

    def __len__(self):
        return len(self.labels)


def canonicalize(raw_labels: Sequence) -> Partition:
    """Relabel an arbitrary label sequence into canonical form.

    Labels may be any hashable values; the result maps the first distinct
    value to 0, the second to 1, and so on.  Idempotent on canonical input.
    """
    if raw_labels is None or len(raw_labels) == 0:
        raise ValueError("cannot canonicalize an empty label sequence")
    seen: dict = {}
    out = []
    for lab in raw_labels:
        lab = lab.item() if isinstance(lab, np.generic) else lab
        if lab not in seen:
            seen[lab] = len(seen)
        out.append(seen[lab])
    return Partition(tuple(out))


def as_partition(p) -> Partition:
    """Coerce a Partition or raw label sequence to a canonical Partition."""
    if isinstance(p, Partition):
        return p
    return canonicalize(p)


def canonicalize_array(labels: np.ndarray) -> np.ndarray:
    """Vectorized order-of-appearance relabeling for integer label arrays."""
    labels = np.asarray(labels)
    _, first_pos, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first_pos))
    return order[inverse]


@dataclass(frozen=True)
class CrossTab:
    """Co-occurrence counts between two partitions of the same subjects."""

    counts: np.ndarray  # shape (k1, k2)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def crosstab(p1, p2) -> CrossTab:
    """Count matrix n_ms = #{i : subject i is in cluster m at 1 and s at 2}."""
    p1, p2 = as_partition(p1), as_partition(p2)
    if p1.n != p2.n:
        raise ValueError(f"partition lengths differ: {p1.n} vs {p2.n}")
    a1, a2 = p1.to_array(), p2.to_array()
    k1, k2 = p1.k, p2.k
    counts = np.bincount(a1 * k2 + a2, minlength=k1 * k2).reshape(k1, k2)
    return CrossTab(counts)


def _pair_counts(ct: CrossTab) -> tuple[int, int, int]:
    """Return (a, same1, same2): co-clustered pair counts from a crosstab."""
    c = ct.counts
    a = int((c * (c - 1) // 2).sum())
    r = ct.row_sums
    s = ct.col_sums
    same1 = int((r * (r - 1) // 2).sum())
    same2 = int((s * (s - 1) // 2).sum())
    return a, same1, same2


def rand_index(p1, p2) -> float:
    """Fraction of subject pairs on which the two partitions agree."""
    p1, p2 = as_partition(p1), as_partition(p2)
    if p1.n < 2:
        raise ValueError("rand index needs at least two subjects")
    ct = crosstab(p1, p2)
    total = math.comb(p1.n, 2)
    a, same1, same2 = _pair_counts(ct)
    b = total - same1 - same2 + a
    return (a + b) / total


def binder_count(p1, p2) -> int:
    """Number of disagreeing pairs: together at one layer but not the other."""
    p1, p2 = as_partition(p1), as_partition(p2)
    if p1.n != p2.n:
        raise ValueError(f"partition lengths differ: {p1.n} vs {p2.n}")
    ct = crosstab(p1, p2)
    a, same1, same2 = _pair_counts(ct)
    return same1 + same2 - 2 * a


def variation_of_information(p1, p2) -> float:
    """Meila's variation of information between two partitions (natural log).

    VI = H(p1) + H(p2) - 2 I(p1, p2), computed per crosstab cell so that
    identical partitions give exactly 0.0.
    """
    p1, p2 = as_partition(p1), as_partition(p2)
    ct = crosstab(p1, p2)
    n = float(p1.n)
    c = ct.counts
    nz = c > 0
    p = c[nz] / n
    r = (ct.row_sums / n)[np.nonzero(nz)[0]]
    s = (ct.col_sums / n)[np.nonzero(nz)[1]]
    # per-cell: p * log(r * s / p^2); vanishes cellwise when p == r == s
    vi = float(np.sum(p * (np.log(r) + np.log(s) - 2.0 * np.log(p))))
    return max(vi, 0.0)


def tari(p1, p2, er_indep: float) -> float:
    """Rand index recentered by its expected value under independence.

    ``er_indep`` is the expected Rand index of two independent partitions
    drawn from the model priors; the normalized index is 1 for identical
    partitions and has prior mean 0 under independence.
    """
    if not 0.0 <= er_indep < 1.0:
        raise ValueError(f"er_indep must lie in [0, 1), got {er_indep}")
    return (rand_index(p1, p2) - er_indep) / (1.0 - er_indep)


def common_refinement(ps: Iterable) -> Partition:
    """Finest-common partition: co-clustered iff co-clustered at every input."""
    parts = [as_partition(p) for p in ps]
    if not parts:
        raise ValueError("common_refinement needs at least one partition")
    n = parts[0].n
    for p in parts[1:]:
        if p.n != n:
            raise ValueError("all partitions must have the same length")
    return canonicalize(list(zip(*[p.labels for p in parts])))


def enumerate_partitions(n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Partition]:
    """Yield every partition of [n] exactly once, in canonical form.

    Enumerates restricted-growth strings; the count is the Bell number B(n).
    Guarded by ``cap`` since the count grows super-exponentially.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > cap:
        raise ValueError(f"n={n} exceeds enumeration cap {cap}")
    labels = [0] * n

    def rec(i: int, top: int):
        if i == n:
            yield Partition(tuple(labels))
            return
        for lab in range(top + 2):
            labels[i] = lab
            yield from rec(i + 1, max(top, lab))

    yield from rec(1, 0)


def bell_number(n: int) -> int:
    """Bell number B(n) via the Bell-triangle recurrence."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]
