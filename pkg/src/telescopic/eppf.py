"""Exact log-domain partition probability laws and prior dependence measures.

Two families of dependent random-partition priors are evaluated exactly:

* hierarchical-Dirichlet-process mixtures (``hdp_*`` / ``thdp_*``): the
  marginal partition law at the first layer, the conditional law of a child
  layer given its parent, and their product (the joint two-layer law);
* finite mixtures with a random number of components coupled through a
  sticky copy indicator (``mfm_*`` / ``ua_*``).

Both marginal laws couple clusters only through a one-dimensional total
(the number of latent tables, or the component count), so the inner sums
over per-cluster allocations reduce to convolutions of short coefficient
vectors.  All evaluation is log-domain with per-step rescaling; signless
first-kind Stirling numbers are kept as exact integers.

The closed-form dependence summaries (``tau_*``, ``er_*``) are exact values
of the n=2 tie probabilities; ``dependence_from_teppf`` recovers the same
quantities from any joint law by exhaustive enumeration and is used as the
arbiter in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson as _poisson

from .partitions import Partition, as_partition, crosstab, enumerate_partitions

__all__ = [
    "StirlingTable",
    "stirling_signless",
    "log_rising_factorial",
    "HdpParams",
    "MfmParams",
    "CountPrior",
    "DependenceReport",
    "hdp_log_eppf",
    "hdp_log_cond_eppf",
    "thdp_log_teppf",
    "tau_thdp",
    "er_thdp",
    "mfm_log_V",
    "mfm_log_eppf",
    "ua_log_cond_eppf",
    "ua_log_teppf",
    "tau_ua",
    "er_ua",
    "er_independent",
    "dependence_from_teppf",
    "dependence_thdp",
    "dependence_ua",
]

EXACT_EVAL_CAP = 25  # largest n for exact EPPF evaluation
_V_SERIES_RTOL = 1e-14
_V_SERIES_HARD_CAP = 100_000
_NORMALIZATION_TOL = 1e-8


# ----------------------------------------------------------------------
# Stirling numbers and rising factorials
# ----------------------------------------------------------------------

class StirlingTable:
    """Signless first-kind Stirling numbers |s(n, k)|, exact up to ``max_n``.

    Built once from the recurrence |s(n,k)| = |s(n-1,k-1)| + (n-1)|s(n-1,k)|
    with arbitrary-precision integers; a parallel float table of logarithms
    is derived from the exact values.  Immutable after construction.
    """

    def __init__(self, max_n: int):
        if max_n < 0:
            raise ValueError("max_n must be nonnegative")
        self.max_n = max_n
        rows: list[list[int]] = [[1]]
        for n in range(1, max_n + 1):
            prev = rows[n - 1]
            row = [0] * (n + 1)
            for k in range(1, n + 1):
                row[k] = prev[k - 1] + (n - 1) * (prev[k] if k <= n - 1 else 0)
            rows.append(row)
        self._rows = rows
        self._log_rows = [
            [math.log(v) if v > 0 else -math.inf for v in row] for row in rows
        ]

    def value(self, n: int, k: int) -> int:
        if n < 0 or n > self.max_n:
            raise ValueError(f"n={n} outside table range 0..{self.max_n}")
        if k < 0 or k > n:
            raise ValueError(f"k={k} outside 0..{n}")
        return self._rows[n][k]

    def log(self, n: int, k: int) -> float:
        if n < 0 or n > self.max_n:
            raise ValueError(f"n={n} outside table range 0..{self.max_n}")
        if k < 0 or k > n:
            return -math.inf
        return self._log_rows[n][k]

    def row(self, n: int) -> list[int]:
        return list(self._rows[n])


_SHARED_TABLE = StirlingTable(EXACT_EVAL_CAP)


def _table_for(n: int) -> StirlingTable:
    global _SHARED_TABLE
    if n > _SHARED_TABLE.max_n:
        _SHARED_TABLE = StirlingTable(n)
    return _SHARED_TABLE


def stirling_signless(n: int, k: int, max_n: int = 1000) -> int:
    """Exact |s(n, k)| for 0 <= k <= n <= max_n."""
    if not 0 <= n <= max_n:
        raise ValueError(f"n={n} outside 0..{max_n}")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    return _table_for(n).value(n, k)


def log_rising_factorial(x: float, n: int) -> float:
    """log of the rising factorial x(x+1)...(x+n-1) = Gamma(x+n)/Gamma(x)."""
    if x <= 0:
        raise ValueError(f"rising factorial needs x > 0, got {x}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0.0
    return float(gammaln(x + n) - gammaln(x))


# ----------------------------------------------------------------------
# Parameter containers
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class HdpParams:
    """Concentrations of the two-layer hierarchical-DP telescopic model.

    ``gamma0``/``gamma`` drive the first-layer marginal law (base and group
    level); ``alpha0``/``alpha`` drive the conditional law of a child layer.
    """

    gamma0: float = 1.0
    gamma: float = 1.0
    alpha0: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("gamma0", "gamma", "alpha0", "alpha"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


class CountPrior:
    """Discrete prior on the number of mixture components, support {1, 2, ...}.

    Supported kinds: ``point`` (mass at m), ``shifted_poisson`` (1 + Poisson),
    ``geometric`` (on {1,2,...}), and ``table`` (explicit finite pmf).
    """

    def __init__(self, kind: str, **params):
        self.kind = kind
        self.params = dict(params)
        if kind == "point":
            m = int(params["m"])
            if m < 1:
                raise ValueError("point mass must sit on {1,2,...}")
            self._m = m
        elif kind == "shifted_poisson":
            rate = float(params["rate"])
            if rate <= 0:
                raise ValueError("rate must be positive")
            self._rate = rate
        elif kind == "geometric":
            p = float(params["p"])
            if not 0 < p <= 1:
                raise ValueError("geometric p must lie in (0, 1]")
            self._p = p
        elif kind == "table":
            probs = np.asarray(params["probs"], dtype=float)
            if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
                raise ValueError("table probs must be a nonnegative vector")
            tot = probs.sum()
            if tot <= 0:
                raise ValueError("table probs must have positive mass")
            self._probs = probs / tot
        else:
            raise ValueError(f"unknown count prior kind {kind!r}")

    # -- queries ---------------------------------------------------------

    def pmf(self, m: int) -> float:
        if m < 1:
            return 0.0
        if self.kind == "point":
            return 1.0 if m == self._m else 0.0
        if self.kind == "shifted_poisson":
            return float(_poisson.pmf(m - 1, self._rate))
        if self.kind == "geometric":
            return self._p * (1.0 - self._p) ** (m - 1)
        return float(self._probs[m - 1]) if m <= self._probs.size else 0.0

    def log_pmf(self, m: int) -> float:
        p = self.pmf(m)
        return math.log(p) if p > 0 else -math.inf

    def sf(self, m: int) -> float:
        """P(M > m)."""
        if m < 1:
            return 1.0
        if self.kind == "point":
            return 1.0 if m < self._m else 0.0
        if self.kind == "shifted_poisson":
            return float(_poisson.sf(m - 1, self._rate))
        if self.kind == "geometric":
            return (1.0 - self._p) ** m
        return float(self._probs[m:].sum()) if m < self._probs.size else 0.0

    def mean(self) -> float:
        if self.kind == "point":
            return float(self._m)
        if self.kind == "shifted_poisson":
            return 1.0 + self._rate
        if self.kind == "geometric":
            return 1.0 / self._p
        return float(np.dot(np.arange(1, self._probs.size + 1), self._probs))

    def support_max(self) -> int | None:
        if self.kind == "point":
            return self._m
        if self.kind == "table":
            return int(self._probs.size)
        return None

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "point":
            return self._m
        if self.kind == "shifted_poisson":
            return 1 + int(rng.poisson(self._rate))
        if self.kind == "geometric":
            return int(rng.geometric(self._p))
        return 1 + int(rng.choice(self._probs.size, p=self._probs))

    def expect_decreasing(self, f: Callable[[int], float], rtol: float = 1e-13) -> float:
        """E[f(M)] for f positive and nonincreasing on {1,2,...}."""
        total = 0.0
        m = 1
        while True:
            total += self.pmf(m) * f(m)
            tail = self.sf(m) * f(m + 1)
            if tail <= rtol * max(total, 1e-300):
                return total
            m += 1
            if m > _V_SERIES_HARD_CAP:
                raise RuntimeError("count-prior expectation failed to converge")

    # -- (de)serialization -------------------------------------------------

    def to_spec(self) -> dict:
        out = {"name": self.kind}
        if self.kind == "point":
            out["m"] = self._m
        elif self.kind == "shifted_poisson":
            out["rate"] = self._rate
        elif self.kind == "geometric":
            out["p"] = self._p
        else:
            out["probs"] = [float(p) for p in self._probs]
        return out

    @classmethod
    def from_spec(cls, spec: dict) -> "CountPrior":
        spec = dict(spec)
        kind = spec.pop("name", None)
        if kind is None:
            raise ValueError("count prior spec needs a 'name' field")
        return cls(kind, **spec)

    def __repr__(self):
        inner = ", ".join(f"{k}={v}" for k, v in self.to_spec().items() if k != "name")
        return f"CountPrior({self.kind!r}, {inner})"

    def __eq__(self, other):
        return isinstance(other, CountPrior) and self.to_spec() == other.to_spec()


@dataclass(frozen=True)
class MfmParams:
    """Parameters of the sticky random-component-count telescopic model.

    ``gamma``/``m_prior`` define the first-layer finite mixture; ``omega`` is
    the probability that a child layer redraws its partition independently
    (1 - omega is the probability of copying the parent partition exactly);
    ``alpha``/``s_prior`` define the redrawn child mixture.
    """

    gamma: float = 1.0
    alpha: float = 1.0
    omega: float = 0.5
    m_prior: CountPrior = field(default_factory=lambda: CountPrior("shifted_poisson", rate=1.0))
    s_prior: CountPrior = field(default_factory=lambda: CountPrior("shifted_poisson", rate=1.0))

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")


@dataclass(frozen=True)
class DependenceReport:
    """Prior dependence summary between two layers' partitions."""

    tau: float
    er: float
    eb: float
    er_indep: float


# ----------------------------------------------------------------------
# Scaled-convolution helpers
# ----------------------------------------------------------------------

class _ScaledVec:
    """Nonnegative coefficient vector c[min_idx..] stored as floats with a
    tracked log-scale, so repeated convolutions never overflow."""

    __slots__ = ("coeffs", "min_idx", "log_scale")

    def __init__(self, coeffs: np.ndarray, min_idx: int, log_scale: float = 0.0):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.min_idx = min_idx
        self.log_scale = log_scale
        self._rescale()

    def _rescale(self):
        m = self.coeffs.max() if self.coeffs.size else 0.0
        if m > 0:
            self.coeffs = self.coeffs / m
            self.log_scale += math.log(m)

    def convolve(self, other: "_ScaledVec") -> "_ScaledVec":
        return _ScaledVec(
            np.convolve(self.coeffs, other.coeffs),
            self.min_idx + other.min_idx,
            self.log_scale + other.log_scale,
        )

    def log_dot_weights(self, log_w: Callable[[int], float]) -> float:
        """log of sum_j coeffs[j] * exp(log_w(min_idx + j))."""
        idx = np.arange(self.coeffs.size)
        with np.errstate(divide="ignore"):
            logs = np.log(self.coeffs)
        lw = np.array([log_w(self.min_idx + int(j)) for j in idx])
        vals = logs + lw
        finite = vals[np.isfinite(vals)]
        if finite.size == 0:
            return -math.inf
        return float(logsumexp(finite)) + self.log_scale


def _cluster_coeff_vec(size: int, table: StirlingTable) -> _ScaledVec:
    """Coefficients (l-1)! |s(size, l)| for l = 1..size."""
    coeffs = np.array(
        [math.factorial(l - 1) * table.value(size, l) for l in range(1, size + 1)],
        dtype=float,
    )
    return _ScaledVec(coeffs, min_idx=1)


# ----------------------------------------------------------------------
# Hierarchical-DP laws
# ----------------------------------------------------------------------

def _check_cap(n: int, cap: int):
    if n > cap:
        raise ValueError(f"n={n} exceeds exact-evaluation cap {cap}")


def hdp_log_eppf(p, params: HdpParams, cap: int = EXACT_EVAL_CAP) -> float:
    """Log marginal probability of a partition under the first-layer HDP.

    The law couples clusters only through the total number of latent tables
    L: each cluster of size n_m contributes coefficients (l-1)! |s(n_m, l)|,
    the per-cluster vectors are convolved over L, and the result is folded
    against gamma^L / (gamma0)^(L).  Cost O(n^2 K).
    """
    p = as_partition(p)
    _check_cap(p.n, cap)
    table = _table_for(p.n)
    conv: _ScaledVec | None = None
    for size in p.sizes:
        vec = _cluster_coeff_vec(size, table)
        conv = vec if conv is None else conv.convolve(vec)
    g0, g = params.gamma0, params.gamma
    inner = conv.log_dot_weights(
        lambda L: L * math.log(g) - log_rising_factorial(g0, L)
    )
    return p.k * math.log(g0) - log_rising_factorial(g, p.n) + inner


def hdp_log_cond_eppf(p2, p1, params: HdpParams, cap: int = EXACT_EVAL_CAP) -> float:
    """Log conditional probability of a child partition given its parent.

    The double sum over per-cell table counts t_ms separates per column of
    the crosstab (convolve |s(n_ms, .)| over rows, weight by (t_col - 1)!)
    and then couples columns only through the grand total |t|.  Cells with
    n_ms = 0 contribute nothing.
    """
    p1, p2 = as_partition(p1), as_partition(p2)
    if p1.n != p2.n:
        raise ValueError(f"partition lengths differ: {p1.n} vs {p2.n}")
    _check_cap(p1.n, cap)
    table = _table_for(p1.n)
    counts = crosstab(p1, p2).counts
    a0, a = params.alpha0, params.alpha

    col_vecs = []
    for s in range(p2.k):
        col: _ScaledVec | None = None
        for m in range(p1.k):
            if counts[m, s] == 0:
                continue
            vec = _ScaledVec(
                np.array(table.row(int(counts[m, s]))[1:], dtype=float), min_idx=1
            )
            col = vec if col is None else col.convolve(vec)
        # weight by (t_col - 1)! over the column total
        tvals = np.arange(col.min_idx, col.min_idx + col.coeffs.size)
        fact = np.exp(gammaln(tvals))  # (t-1)!
        col_vecs.append(_ScaledVec(col.coeffs * fact, col.min_idx, col.log_scale))

    conv = col_vecs[0]
    for vec in col_vecs[1:]:
        conv = conv.convolve(vec)
    inner = conv.log_dot_weights(
        lambda T: T * math.log(a) - log_rising_factorial(a0, T)
    )
    prefix = p2.k * math.log(a0) - sum(
        log_rising_factorial(a, nm) for nm in p1.sizes
    )
    return prefix + inner


def thdp_log_teppf(p1, p2, params: HdpParams, cap: int = EXACT_EVAL_CAP) -> float:
    """Log joint probability of a parent/child partition pair (HDP model)."""
    return hdp_log_eppf(p1, params, cap) + hdp_log_cond_eppf(p2, p1, params, cap)


def tau_thdp(params: HdpParams) -> float:
    """Telescopic dependence of the HDP model: alpha0 / (alpha0 + alpha + 1)."""
    return params.alpha0 / (params.alpha0 + params.alpha + 1.0)


def er_thdp(params: HdpParams) -> float:
    """Expected Rand index between the two layers of the HDP model.

    Exact value assembled from the four n=2 tie probabilities:
    P(tie at 1) = (1+g0+g)/((1+g0)(1+g)), P(tie at 2 | tie) =
    (1+a0+a)/((1+a0)(1+a)), P(tie at 2 | split) = 1/(1+a0).
    """
    g0, g, a0, a = params.gamma0, params.gamma, params.alpha0, params.alpha
    p_tie1 = (1.0 + g0 + g) / ((1.0 + g0) * (1.0 + g))
    p_tie2_tie = (1.0 + a0 + a) / ((1.0 + a0) * (1.0 + a))
    p_tie2_split = 1.0 / (1.0 + a0)
    return p_tie1 * p_tie2_tie + (1.0 - p_tie1) * (1.0 - p_tie2_split)


# ----------------------------------------------------------------------
# Finite mixtures with random component counts
# ----------------------------------------------------------------------

def mfm_log_V(n: int, K: int, gamma: float, m_prior: CountPrior) -> float:
    """Log of V(n, K) = sum_M M_(K) / (gamma M)^(n) * P(M).

    The series is truncated once the tail bound gamma^{-n} P(M > m) drops
    below 1e-14 of the partial sum; it returns -inf when the prior puts no
    mass on M >= K (e.g. bounded support below K).
    """
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    log_terms: list[float] = []
    running = -math.inf
    log_tail_factor = -n * math.log(gamma)
    m = K
    sup = m_prior.support_max()
    while True:
        lp = m_prior.log_pmf(m)
        if lp > -math.inf:
            lterm = (
                float(gammaln(m + 1) - gammaln(m - K + 1))
                - log_rising_factorial(gamma * m, n)
                + lp
            )
            log_terms.append(lterm)
            running = np.logaddexp(running, lterm)
        sf = m_prior.sf(m)
        if sup is not None and m >= sup:
            break
        if sf == 0.0:
            break
        if running > -math.inf:
            log_tail = log_tail_factor + math.log(sf)
            if log_tail < running + math.log(_V_SERIES_RTOL):
                break
        m += 1
        if m > _V_SERIES_HARD_CAP:
            raise RuntimeError("V(n, K) series failed to converge within the cap")
    if not log_terms:
        return -math.inf
    return float(logsumexp(log_terms))


def _mfm_log_eppf(p: Partition, gamma: float, prior: CountPrior) -> float:
    logv = mfm_log_V(p.n, p.k, gamma, prior)
    if logv == -math.inf:
        return -math.inf
    return logv + sum(log_rising_factorial(gamma, nm) for nm in p.sizes)


def mfm_log_eppf(p, params: MfmParams) -> float:
    """Log marginal partition probability of the first-layer finite mixture."""
    return _mfm_log_eppf(as_partition(p), params.gamma, params.m_prior)


def ua_log_cond_eppf(p2, p1, params: MfmParams) -> float:
    """Log conditional law of the child layer in the sticky model:
    (1 - omega) on an exact copy of the parent, omega times an independent
    finite-mixture law with parameters (alpha, s_prior)."""
    p1, p2 = as_partition(p1), as_partition(p2)
    if p1.n != p2.n:
        raise ValueError(f"partition lengths differ: {p1.n} vs {p2.n}")
    same = p1.labels == p2.labels
    parts = []
    if params.omega < 1.0 and same:
        parts.append(math.log1p(-params.omega))
    if params.omega > 0.0:
        free = _mfm_log_eppf(p2, params.alpha, params.s_prior)
        if free > -math.inf:
            parts.append(math.log(params.omega) + free)
    if not parts:
        return -math.inf
    return float(logsumexp(parts))


def ua_log_teppf(p1, p2, params: MfmParams) -> float:
    """Log joint probability of a partition pair under the sticky model."""
    marg = mfm_log_eppf(p1, params)
    if marg == -math.inf:
        return -math.inf
    return marg + ua_log_cond_eppf(p2, p1, params)


def _mfm_pair_tie_prob(gamma: float, prior: CountPrior) -> float:
    """P(two subjects co-clustered) = (gamma+1) E[1 / (gamma M + 1)]."""
    return (1.0 + gamma) * prior.expect_decreasing(lambda m: 1.0 / (gamma * m + 1.0))


def tau_ua(params: MfmParams) -> float:
    """Telescopic dependence of the sticky model.

    With p2 the pair-tie probability of the redrawn child mixture,
    tau = (1 - omega) / (1 - omega + omega * p2); equals 1 at omega = 0
    and 0 at omega = 1.
    """
    p2 = _mfm_pair_tie_prob(params.alpha, params.s_prior)
    keep = 1.0 - params.omega
    return keep / (keep + params.omega * p2)


def er_ua(params: MfmParams) -> float:
    """Expected Rand index between the two layers of the sticky model.

    An exact copy agrees on every pair; otherwise the layers are independent
    mixtures with pair-tie probabilities p1 and p2, so
    ER = (1 - omega) + omega * (p1 p2 + (1 - p1)(1 - p2)).
    """
    p1 = _mfm_pair_tie_prob(params.gamma, params.m_prior)
    p2 = _mfm_pair_tie_prob(params.alpha, params.s_prior)
    indep = p1 * p2 + (1.0 - p1) * (1.0 - p2)
    return (1.0 - params.omega) + params.omega * indep


def er_independent(k1_dist: Sequence[float], k2_dist: Sequence[float]) -> float:
    """Expected Rand index of two independent partitions at n = 2.

    Arguments are the distributions of the number of clusters among two
    subjects, each a pair (P(K=1), P(K=2))."""
    k1 = np.asarray(k1_dist, dtype=float)
    k2 = np.asarray(k2_dist, dtype=float)
    for name, dist in (("k1_dist", k1), ("k2_dist", k2)):
        if dist.shape != (2,) or np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} must be a probability vector over {{1, 2}}")
    return float(np.dot(k1, k2))


def dependence_thdp(params: HdpParams) -> DependenceReport:
    """Closed-form dependence report for the hierarchical-DP model (n = 2)."""
    g0, g, a0, a = params.gamma0, params.gamma, params.alpha0, params.alpha
    m1 = (1.0 + g0 + g) / ((1.0 + g0) * (1.0 + g))
    tie2_tie = (1.0 + a0 + a) / ((1.0 + a0) * (1.0 + a))
    tie2_split = 1.0 / (1.0 + a0)
    m2 = m1 * tie2_tie + (1.0 - m1) * tie2_split
    er = er_thdp(params)
    return DependenceReport(
        tau=tau_thdp(params),
        er=er,
        eb=1.0 - er,
        er_indep=m1 * m2 + (1.0 - m1) * (1.0 - m2),
    )


def dependence_ua(params: MfmParams) -> DependenceReport:
    """Closed-form dependence report for the sticky model (n = 2)."""
    p1 = _mfm_pair_tie_prob(params.gamma, params.m_prior)
    p2 = _mfm_pair_tie_prob(params.alpha, params.s_prior)
    m2 = (1.0 - params.omega) * p1 + params.omega * p2
    er = er_ua(params)
    return DependenceReport(
        tau=tau_ua(params),
        er=er,
        eb=1.0 - er,
        er_indep=p1 * m2 + (1.0 - p1) * (1.0 - m2),
    )


def dependence_from_teppf(teppf: Callable, n: int = 2) -> DependenceReport:
    """Dependence summary by exhaustive evaluation of a joint partition law.

    ``teppf(p1, p2)`` must return the log joint probability.  Tie events are
    read off the first two subjects; at n=2 this realizes the definitions of
    tau, ER and EB exactly, and for small n > 2 it is a consistency
    diagnostic (a coherent law gives the same values for every n).
    """
    parts = list(enumerate_partitions(n))
    logp = np.array([[teppf(p1, p2) for p2 in parts] for p1 in parts])
    prob = np.exp(logp)
    total = prob.sum()
    if abs(total - 1.0) > _NORMALIZATION_TOL:
        raise ValueError(f"joint law is not normalized: sums to {total!r}")
    tie = np.array([p.labels[0] == p.labels[1] for p in parts])

    p_tie1 = prob[tie, :].sum()
    p_tie2_given_tie1 = prob[np.ix_(tie, tie)].sum() / p_tie1
    p_split1 = prob[~tie, :].sum()
    p_tie2_given_split1 = prob[np.ix_(~tie, tie)].sum() / p_split1
    if p_tie2_given_tie1 <= 0:
        raise ValueError("degenerate law: zero within-cluster tie probability")
    tau = (p_tie2_given_tie1 - p_tie2_given_split1) / p_tie2_given_tie1

    agree = tie[:, None] == tie[None, :]
    er = float(prob[agree].sum())
    eb = math.comb(n, 2) * (1.0 - er)

    m1 = float(p_tie1)
    m2 = float(prob[:, tie].sum())
    er_ind = m1 * m2 + (1.0 - m1) * (1.0 - m2)
    return DependenceReport(tau=float(tau), er=er, eb=float(eb), er_indep=er_ind)
