"""Posterior summarization: similarity matrices, point partitions, dependence.

Point estimates minimize the exact average loss (variation of information or
Binder) against all retained draws, searching over the set of partitions the
chain visited.  Ties break toward fewer clusters, then the earliest visit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .partitions import Partition, as_partition, canonicalize
from .samplers import Trace

__all__ = [
    "similarity",
    "min_vi",
    "min_binder",
    "expected_vi_loss",
    "expected_binder_loss",
    "posterior_dependence",
    "pairwise_rand_means",
    "misallocation_count",
    "DependenceSummary",
]


def similarity(trace: Trace, layer: int) -> np.ndarray:
    """Posterior co-clustering frequencies: an n-by-n symmetric matrix."""
    draws = trace.allocations[layer]
    n = draws.shape[1]
    sim = np.zeros((n, n))
    for row in draws:
        sim += row[:, None] == row[None, :]
    return sim / draws.shape[0]


def _unique_draws(draws: np.ndarray):
    uniq, first, counts = np.unique(draws, axis=0, return_index=True, return_counts=True)
    return uniq, first, counts


def _vi_from_labels(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    k1 = int(a.max()) + 1
    k2 = int(b.max()) + 1
    ct = np.bincount(a * k2 + b, minlength=k1 * k2).reshape(k1, k2)
    nz = ct > 0
    p = ct[nz] / n
    r = (ct.sum(axis=1) / n)[np.nonzero(nz)[0]]
    s = (ct.sum(axis=0) / n)[np.nonzero(nz)[1]]
    return max(float(np.sum(p * (np.log(r) + np.log(s) - 2.0 * np.log(p)))), 0.0)


def _row_entropies(codes: np.ndarray, n_bins: int) -> np.ndarray:
    """Entropy of the empirical label distribution of each row."""
    u, n = codes.shape
    offsets = (np.arange(u, dtype=np.int64) * n_bins)[:, None]
    counts = np.bincount((codes + offsets).ravel(), minlength=u * n_bins)
    counts = counts.reshape(u, n_bins)
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=1)


def _vi_matrix(uniq: np.ndarray) -> np.ndarray:
    """All pairwise VI values between unique draws, vectorized per row.

    VI(a, b) = 2 H(a, b) - H(a) - H(b); the joint entropy of row pairs is
    computed from shared label codes, one candidate row at a time.
    """
    u, n = uniq.shape
    kmax = int(uniq.max()) + 1
    ent = _row_entropies(uniq.astype(np.int64), kmax)
    vi = np.zeros((u, u))
    for i in range(u):
        cand = uniq[i].astype(np.int64)
        k_i = int(cand.max()) + 1
        codes = uniq[i:].astype(np.int64) * k_i + cand[None, :]
        h12 = _row_entropies(codes, k_i * kmax)
        row = 2.0 * h12 - ent[i:] - ent[i]
        vi[i, i:] = vi[i:, i] = np.maximum(row, 0.0)
    return vi


def _rand_from_labels(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    k1 = int(a.max()) + 1
    k2 = int(b.max()) + 1
    ct = np.bincount(a * k2 + b, minlength=k1 * k2).reshape(k1, k2)
    pairs = lambda x: (x * (x - 1) // 2).sum()
    total = math.comb(n, 2)
    agree = total - pairs(ct.sum(axis=1)) - pairs(ct.sum(axis=0)) + 2 * pairs(ct)
    return agree / total


def _select(losses: np.ndarray, uniq: np.ndarray, first: np.ndarray) -> int:
    ks = uniq.max(axis=1) + 1
    order = np.lexsort((first, ks, losses))
    return int(order[0])


def _greedy_refine(labels: np.ndarray, loss_fn, max_passes: int = 2) -> np.ndarray:
    """Single-subject reassignment hill climbing on an exact expected loss."""
    current = labels.copy()
    best = loss_fn(current)
    n = current.shape[0]
    for _ in range(max_passes):
        improved = False
        for i in range(n):
            k = int(current.max()) + 1
            for target in range(k + 1):  # existing clusters plus a fresh one
                if target == current[i]:
                    continue
                trial = current.copy()
                trial[i] = target
                trial = np.asarray(canonicalize(trial.tolist()).labels)
                val = loss_fn(trial)
                if val < best - 1e-12:
                    current, best, improved = trial, val, True
        if not improved:
            break
    return current


def min_vi(trace: Trace, layer: int, refine: bool = False) -> Partition:
    """Visited partition minimizing the exact average VI to all draws.

    With ``refine=True`` a greedy single-subject reassignment pass runs
    from the best visited partition (the result may then leave the visited
    set); off by default.
    """
    draws = trace.allocations[layer]
    if draws.shape[0] == 0:
        raise ValueError("empty trace")
    uniq, first, counts = _unique_draws(draws)
    avg = _vi_matrix(uniq) @ counts / draws.shape[0]
    best = uniq[_select(avg, uniq, first)]
    if refine:
        best = _greedy_refine(
            np.asarray(best, dtype=np.int64),
            lambda labs: expected_vi_loss(trace, layer, labs.tolist()),
        )
    return canonicalize(best)


def min_binder(trace: Trace, layer: int, refine: bool = False) -> Partition:
    """Visited partition minimizing the expected Binder loss.

    ``refine`` behaves as in :func:`min_vi`.
    """
    draws = trace.allocations[layer]
    if draws.shape[0] == 0:
        raise ValueError("empty trace")
    sim = similarity(trace, layer)
    uniq, first, _ = _unique_draws(draws)
    penal = 1.0 - 2.0 * sim
    base = float(np.triu(sim, 1).sum())
    losses = np.empty(uniq.shape[0])
    for i, cand in enumerate(uniq):
        same = cand[:, None] == cand[None, :]
        losses[i] = base + float(np.triu(penal * same, 1).sum())
    best = uniq[_select(losses, uniq, first)]
    if refine:
        best = _greedy_refine(
            np.asarray(best, dtype=np.int64),
            lambda labs: expected_binder_loss(trace, layer, labs.tolist()),
        )
    return canonicalize(best)


def expected_vi_loss(trace: Trace, layer: int, estimate) -> float:
    """Exact average VI between a candidate partition and all retained draws."""
    cand = as_partition(estimate).to_array()
    draws = trace.allocations[layer]
    uniq, _, counts = _unique_draws(draws)
    tot = sum(c * _vi_from_labels(cand, row) for row, c in zip(uniq, counts))
    return tot / draws.shape[0]


def expected_binder_loss(trace: Trace, layer: int, estimate) -> float:
    """Exact expected Binder loss of a candidate partition under the trace."""
    cand = as_partition(estimate).to_array()
    sim = similarity(trace, layer)
    same = cand[:, None] == cand[None, :]
    return float(np.triu(sim, 1).sum() + np.triu((1.0 - 2.0 * sim) * same, 1).sum())


@dataclass(frozen=True)
class DependenceSummary:
    """Per-draw Rand/TARI summary between two layers of a trace."""

    rand: np.ndarray
    tari: np.ndarray
    rand_mean: float
    rand_interval: tuple
    tari_mean: float
    tari_interval: tuple
    er_indep: float


def _mean_tie_prob(draws: np.ndarray) -> float:
    """Average within-draw probability that a random subject pair is tied."""
    n = draws.shape[1]
    total = math.comb(n, 2)
    vals = []
    for row in draws:
        counts = np.bincount(row)
        vals.append((counts * (counts - 1) // 2).sum() / total)
    return float(np.mean(vals))


def posterior_dependence(trace: Trace, edge: tuple, er_indep: float | None = None) -> DependenceSummary:
    """Rand and TARI draws between two layers, with a 95% central interval.

    When ``er_indep`` is not supplied it is estimated from the per-layer
    cluster-count frequencies on subject pairs, matching the independent-
    partitions expectation of the Rand index.
    """
    a, b = edge
    da, db = trace.allocations[a], trace.allocations[b]
    if er_indep is None:
        pa = _mean_tie_prob(da)
        pb = _mean_tie_prob(db)
        er_indep = pa * pb + (1.0 - pa) * (1.0 - pb)
    if not 0.0 <= er_indep < 1.0:
        raise ValueError(f"er_indep must lie in [0, 1), got {er_indep}")
    rand = np.array([_rand_from_labels(da[i], db[i]) for i in range(trace.n_draws)])
    tari = (rand - er_indep) / (1.0 - er_indep)
    qs = lambda x: (float(np.quantile(x, 0.025)), float(np.quantile(x, 0.975)))
    return DependenceSummary(
        rand=rand,
        tari=tari,
        rand_mean=float(rand.mean()),
        rand_interval=qs(rand),
        tari_mean=float(tari.mean()),
        tari_interval=qs(tari),
        er_indep=float(er_indep),
    )


def pairwise_rand_means(trace: Trace) -> np.ndarray:
    """L-by-L matrix of posterior-mean Rand indexes between layer pairs."""
    L = trace.n_layers
    out = np.eye(L)
    for a in range(L):
        for b in range(a + 1, L):
            da, db = trace.allocations[a], trace.allocations[b]
            vals = [_rand_from_labels(da[i], db[i]) for i in range(trace.n_draws)]
            out[a, b] = out[b, a] = float(np.mean(vals))
    return out


def misallocation_count(estimate, truth) -> int:
    """Minimal number of subjects assigned to the wrong cluster.

    Clusters are matched by maximizing the confusion-matrix diagonal over
    label bijections (rectangular assignment).
    """
    est = as_partition(estimate).to_array()
    tru = as_partition(truth).to_array()
    if est.shape != tru.shape:
        raise ValueError("partition lengths differ")
    k1 = int(est.max()) + 1
    k2 = int(tru.max()) + 1
    conf = np.bincount(est * k2 + tru, minlength=k1 * k2).reshape(k1, k2)
    rows, cols = linear_sum_assignment(-conf)
    return int(est.shape[0] - conf[rows, cols].sum())
