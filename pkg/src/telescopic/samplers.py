"""Truncated blocked Gibbs samplers for telescopic clustering models.

Two conditional samplers over an arbitrary layer polytree:

* ``fit_thdp`` — hierarchical-DP mixtures.  Base weights per layer are a
  truncated stick-breaking vector; the group weights attached to each parent
  component are finite Dirichlet projections of the second-level DP.  One
  sweep updates allocations (with the child layers' weight terms entering
  each parent's conditional exactly), stick/group weights (with auxiliary
  table counts for the base sticks), atoms, and concentration parameters by
  adaptive random-walk Metropolis on the log scale under Gamma(1, 1) priors.

* ``fit_ua`` — finite mixtures with a random number of components, coupled
  by per-edge copy indicators Z.  Component counts move by +-1 Metropolis
  steps on their collapsed conditionals; Z is drawn from its exact Bernoulli
  conditional when the edge has no sticky descendants, and otherwise by a
  blocked flip move in which descendant cluster atoms are integrated out
  analytically and re-instantiated from their conjugate posteriors.

Passing ``data=None`` runs the prior (likelihood identically one), which is
how the samplers are validated against the exact partition laws.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .config import ModelSpec
from .eppf import CountPrior, log_rising_factorial
from .kernels import ClusterStats, NixParams, gaussian_loglik_matrix, log_marginal
from .layers import LayerStack, Polytree
from .partitions import canonicalize_array

__all__ = ["Trace", "fit_thdp", "fit_ua", "run_chains", "split_rhat"]

_W_FLOOR = 1e-300
_MH_TARGET_ACCEPT = 0.44
DEBUG = bool(os.environ.get("TELESCOPIC_DEBUG"))


# ----------------------------------------------------------------------
# Trace container
# ----------------------------------------------------------------------

@dataclass
class Trace:
    """Retained posterior draws of one chain.

    ``allocations[l]`` is an (n_draws, n) array of canonical labels for
    layer l; ``hyperparams`` maps names to per-draw value arrays.
    """

    allocations: list
    hyperparams: dict
    iterations: int
    burnin: int
    thinning: int
    seed: object
    model: str
    extras: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.allocations[0].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.allocations)

    @property
    def n_subjects(self) -> int:
        return self.allocations[0].shape[1]

    @classmethod
    def merge(cls, traces: list) -> "Trace":
        """Concatenate retained draws of several chains."""
        if not traces:
            raise ValueError("no traces to merge")
        first = traces[0]
        alloc = [
            np.concatenate([t.allocations[l] for t in traces], axis=0)
            for l in range(first.n_layers)
        ]
        hyper = {
            k: np.concatenate([t.hyperparams[k] for t in traces])
            for k in first.hyperparams
        }
        return cls(
            allocations=alloc,
            hyperparams=hyper,
            iterations=first.iterations,
            burnin=first.burnin,
            thinning=first.thinning,
            seed=[t.seed for t in traces],
            model=first.model,
            extras={"n_chains": len(traces)},
        )


# ----------------------------------------------------------------------
# Shared helpers
# ----------------------------------------------------------------------

def _safe_log(w: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(w, _W_FLOOR))


def _categorical_rows(rng: np.random.Generator, logits: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a matrix of unnormalized log masses."""
    mx = logits.max(axis=1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    p = np.exp(logits - mx)
    cum = np.cumsum(p, axis=1)
    u = rng.random(logits.shape[0]) * cum[:, -1]
    idx = (cum < u[:, None]).sum(axis=1)
    return np.minimum(idx, logits.shape[1] - 1)


def _dirichlet_rows(rng: np.random.Generator, shapes: np.ndarray) -> np.ndarray:
    """Row-wise Dirichlet draws; degenerate all-zero rows fall back to uniform."""
    g = rng.standard_gamma(shapes)
    tot = g.sum(axis=-1, keepdims=True)
    bad = (tot <= 0).ravel()
    if np.any(bad):
        g = g.copy()
        g[bad] = 1.0
        tot = g.sum(axis=-1, keepdims=True)
    return g / tot


def _log_dirichlet_rows(rng: np.random.Generator, shapes: np.ndarray) -> np.ndarray:
    """Row-wise Dirichlet draws returned as exact log weights.

    Tiny shape parameters make linear gamma draws underflow, which would
    clamp the log weights and bias the concentration-parameter conditionals.
    Using Gamma(a) = Gamma(a + 1) * U^(1/a) keeps the logs exact however
    small the shapes are.
    """
    boost = rng.standard_gamma(shapes + 1.0)
    u = 1.0 - rng.random(size=shapes.shape)  # in (0, 1]
    with np.errstate(divide="ignore"):
        logg = np.log(np.maximum(boost, _W_FLOOR)) + np.log(u) / shapes
    return logg - logsumexp(logg, axis=-1, keepdims=True)


def _sticks_to_weights(v: np.ndarray) -> np.ndarray:
    """Stick-breaking map; the last weight absorbs the remainder.

    Floored away from zero so downstream Dirichlet shapes and their log
    densities stay finite; the floor is far below any attainable prior mass.
    """
    one_minus = np.concatenate([[1.0], np.cumprod(1.0 - v)])
    return np.maximum(np.concatenate([v * one_minus[:-1], one_minus[-1:]]), 1e-250)


def _grouped_moments(x: np.ndarray, labels: np.ndarray, n_groups: int):
    """Per-group counts, sums and sums of squares for an (n, d) matrix."""
    counts = np.bincount(labels, minlength=n_groups).astype(float)
    d = x.shape[1]
    sums = np.empty((n_groups, d))
    sumsqs = np.empty((n_groups, d))
    for j in range(d):
        sums[:, j] = np.bincount(labels, weights=x[:, j], minlength=n_groups)
        sumsqs[:, j] = np.bincount(labels, weights=x[:, j] ** 2, minlength=n_groups)
    return counts, sums, sumsqs


def _batch_conjugate_draw(rng, prior: NixParams, counts, sums, sumsqs):
    """Sample (means, variances) for all components at once.

    Components with zero count reduce exactly to prior draws.
    """
    d = sums.shape[1]
    p = prior.broadcast(d)
    n = counts[:, None]
    kn = p.kappa0 + n
    nun = p.nu0 + n
    mean = np.divide(sums, n, out=np.zeros_like(sums), where=n > 0)
    ss = sumsqs - n * mean * mean
    scale = p.nu0 * p.sigma0sq + ss + (p.kappa0 * n / kn) * (mean - p.mu0) ** 2
    mun = (p.kappa0 * p.mu0 + sums) / kn
    var = scale / rng.chisquare(nun)
    mu = rng.normal(mun, np.sqrt(var / kn))
    return mu, var


def _check_likelihood(values: np.ndarray, it: int, layer: int):
    """Likelihood terms may be -inf (zero mass) but never NaN or +inf."""
    if np.isnan(values).any() or np.isposinf(values).any():
        raise FloatingPointError(
            f"non-finite likelihood at iteration {it}, layer {layer}"
        )


def _grouped_log_marginal(x: np.ndarray, labels: np.ndarray, prior: NixParams) -> float:
    """Sum of conjugate marginal likelihoods over the clusters of ``labels``."""
    total = 0.0
    for g in np.unique(labels):
        rows = x[labels == g]
        total += log_marginal(ClusterStats.from_data(rows), prior)
    return total


class _AdaptiveStep:
    """Log-scale random-walk step size adapted toward a target acceptance."""

    def __init__(self, init: float = 0.5):
        self.log_step = math.log(init)
        self.t = 0

    def step(self) -> float:
        return math.exp(self.log_step)

    def update(self, accept_prob: float):
        self.t += 1
        self.log_step += (accept_prob - _MH_TARGET_ACCEPT) / self.t ** 0.6


def _resolve_kernels(spec: ModelSpec, data: LayerStack | None) -> list:
    priors = []
    for l in range(spec.tree.n_layers):
        kp = spec.kernel_params.get(l, "empirical")
        if kp == "empirical":
            if data is None:
                priors.append(NixParams(0.0, 0.1, 2.0, 1.0))
            else:
                priors.append(NixParams.from_data(data.layers[l]))
        else:
            priors.append(kp)
    return priors


# ----------------------------------------------------------------------
# Hierarchical-DP sampler
# ----------------------------------------------------------------------

class _ThdpSampler:
    def __init__(self, data: LayerStack | None, tree: Polytree, spec: ModelSpec,
                 rng: np.random.Generator):
        self.rng = rng
        self.tree = tree
        self.order = tree.topo_order()
        self.root = tree.root
        self.children = {l: tree.children(l) for l in range(tree.n_layers)}
        self.prior_only = data is None
        if self.prior_only:
            if spec.n_subjects is None:
                raise ValueError("prior-only runs need n_subjects in the model spec")
            self.n = spec.n_subjects
            self.X = None
        else:
            self.n = data.n
            self.X = data.layers
        self.H = spec.truncation
        self.spec = spec
        self.L = tree.n_layers
        self.kernel_priors = _resolve_kernels(spec, data)
        self._it = 0

        # concentrations: base (gamma0 / alpha0_l) and group (gamma / alpha_l)
        self.conc_base = np.empty(self.L)
        self.conc_group = np.empty(self.L)
        self.conc_base[self.root] = spec.root_params["gamma0"]
        self.conc_group[self.root] = spec.root_params["gamma"]
        for l, pars in spec.edge_params.items():
            self.conc_base[l] = pars["alpha0"]
            self.conc_group[l] = pars["alpha"]
        self._steps = [
            (_AdaptiveStep(), _AdaptiveStep()) for _ in range(self.L)
        ]

        self._init_state()

    # -- state ------------------------------------------------------------

    def _n_groups(self, l: int) -> int:
        return 1 if l == self.root else self.H

    def _init_state(self):
        rng, H = self.rng, self.H
        self.sticks = []
        self.beta = []
        self.weights = []
        self.log_weights = []
        self.alloc = []
        self.means = [None] * self.L
        self.variances = [None] * self.L
        for l in range(self.L):
            v = rng.beta(1.0, self.conc_base[l], size=H - 1)
            beta = _sticks_to_weights(v)
            logW = _log_dirichlet_rows(
                rng, np.tile(self.conc_group[l] * beta, (self._n_groups(l), 1))
            )
            self.sticks.append(v)
            self.beta.append(beta)
            self.weights.append(np.exp(logW))
            self.log_weights.append(logW)
            self.alloc.append(rng.integers(0, min(10, H), size=self.n))
            if not self.prior_only:
                d = self.X[l].shape[1]
                prior = self.kernel_priors[l].broadcast(d)
                zero = np.zeros((H, d))
                mu, var = _batch_conjugate_draw(rng, prior, np.zeros(H), zero, zero)
                self.means[l] = mu
                self.variances[l] = var

    # -- sweep pieces -------------------------------------------------------

    def _update_allocations(self):
        for l in self.order:
            if l == self.root:
                logits = np.broadcast_to(self.log_weights[l][0], (self.n, self.H)).copy()
            else:
                parent = self.tree.parents[l]
                logits = self.log_weights[l][self.alloc[parent]].copy()
            if not self.prior_only:
                lik = gaussian_loglik_matrix(self.X[l], self.means[l], self.variances[l])
                _check_likelihood(lik, self._it, l)
                logits += lik
            for ch in self.children[l]:
                logits += self.log_weights[ch][:, self.alloc[ch]].T
            self.alloc[l] = _categorical_rows(self.rng, logits)

    def _transition_counts(self, l: int) -> np.ndarray:
        if l == self.root:
            return np.bincount(self.alloc[l], minlength=self.H)[None, :]
        parent = self.tree.parents[l]
        flat = self.alloc[parent] * self.H + self.alloc[l]
        return np.bincount(flat, minlength=self.H * self.H).reshape(self.H, self.H)

    def _crt_table_counts(self, counts: np.ndarray, conc: float, beta: np.ndarray) -> np.ndarray:
        """Auxiliary per-cell table counts m ~ CRT(n_cell, conc * beta_h)."""
        g_idx, h_idx = np.nonzero(counts)
        if g_idx.size == 0:
            return np.zeros(self.H)
        cell = counts[g_idx, h_idx]
        a = np.maximum(conc * beta[h_idx], _W_FLOOR)
        rep_a = np.repeat(a, cell)
        starts = np.concatenate([[0], np.cumsum(cell)[:-1]])
        offs = np.arange(cell.sum()) - np.repeat(starts, cell)
        hits = self.rng.random(rep_a.size) < rep_a / (rep_a + offs)
        m_cell = np.add.reduceat(hits, starts)
        m = np.zeros(self.H)
        np.add.at(m, h_idx, m_cell)
        return m

    def _update_weights(self):
        rng = self.rng
        for l in range(self.L):
            counts = self._transition_counts(l)
            m = self._crt_table_counts(counts, self.conc_group[l], self.beta[l])
            tail = np.concatenate([np.cumsum(m[::-1])[::-1][1:], [0.0]])
            v = rng.beta(1.0 + m[:-1], self.conc_base[l] + tail[:-1])
            v = np.clip(v, 1e-15, 1.0 - 1e-15)
            self.sticks[l] = v
            self.beta[l] = _sticks_to_weights(v)
            shapes = self.conc_group[l] * self.beta[l][None, :] + counts
            logW = _log_dirichlet_rows(rng, shapes)
            self.weights[l] = np.exp(logW)
            self.log_weights[l] = logW

    def _update_atoms(self):
        for l in range(self.L):
            counts, sums, sumsqs = _grouped_moments(self.X[l], self.alloc[l], self.H)
            self.means[l], self.variances[l] = _batch_conjugate_draw(
                self.rng, self.kernel_priors[l], counts, sums, sumsqs
            )

    # concentration full conditionals --------------------------------------

    def _base_loglik(self, l: int, b: float) -> float:
        log1mv = np.log1p(-self.sticks[l])
        return (self.H - 1) * math.log(b) + (b - 1.0) * float(log1mv.sum())

    def _group_loglik(self, l: int, a: float) -> float:
        beta = np.maximum(self.beta[l], _W_FLOOR)
        logW = self.log_weights[l]
        G = logW.shape[0]
        return float(
            G * (gammaln(a) - gammaln(a * beta).sum())
            + ((a * beta)[None, :] * logW).sum()
        )

    def _mh_positive(self, value: float, loglik, stepper: _AdaptiveStep, adapt: bool) -> float:
        """One log-scale random-walk step under a Gamma(1, 1) prior."""
        prop = value * math.exp(stepper.step() * self.rng.normal())
        log_acc = (
            loglik(prop) - prop + math.log(prop)
            - (loglik(value) - value + math.log(value))
        )
        acc_prob = min(1.0, math.exp(min(log_acc, 0.0)))
        accept = self.rng.random() < acc_prob
        if adapt:
            stepper.update(acc_prob)
        return prop if accept else value

    def _update_concentrations(self, adapt: bool):
        for l in range(self.L):
            st_base, st_group = self._steps[l]
            self.conc_base[l] = self._mh_positive(
                self.conc_base[l], lambda b, l=l: self._base_loglik(l, b), st_base, adapt
            )
            self.conc_group[l] = self._mh_positive(
                self.conc_group[l], lambda a, l=l: self._group_loglik(l, a), st_group, adapt
            )

    # -- driver -------------------------------------------------------------

    def sweep(self, it: int):
        self._it = it
        self._update_allocations()
        self._update_weights()
        if not self.prior_only:
            self._update_atoms()
        if self.spec.update_concentrations:
            self._update_concentrations(adapt=it < self.spec.mcmc.burnin)
        if DEBUG:
            self._check_invariants()

    def _check_invariants(self):
        for l in range(self.L):
            assert np.all((self.alloc[l] >= 0) & (self.alloc[l] < self.H))
            assert np.allclose(self.weights[l].sum(axis=1), 1.0, atol=1e-8)
            assert abs(self.beta[l].sum() - 1.0) < 1e-8

    def hyper_names(self) -> list:
        names = ["gamma0", "gamma"]
        for l in sorted(self.spec.edge_params):
            names += [f"alpha0_{l}", f"alpha_{l}"]
        return names

    def hyper_values(self) -> list:
        vals = [self.conc_base[self.root], self.conc_group[self.root]]
        for l in sorted(self.spec.edge_params):
            vals += [self.conc_base[l], self.conc_group[l]]
        return vals

    def layer_allocation(self, l: int) -> np.ndarray:
        return self.alloc[l]


# ----------------------------------------------------------------------
# Unique-atom sampler
# ----------------------------------------------------------------------

class _UaSampler:
    def __init__(self, data: LayerStack | None, tree: Polytree, spec: ModelSpec,
                 rng: np.random.Generator):
        self.rng = rng
        self.tree = tree
        self.order = tree.topo_order()
        self.root = tree.root
        self.children = {l: tree.children(l) for l in range(tree.n_layers)}
        self.prior_only = data is None
        if self.prior_only:
            if spec.n_subjects is None:
                raise ValueError("prior-only runs need n_subjects in the model spec")
            self.n = spec.n_subjects
            self.X = None
        else:
            self.n = data.n
            self.X = data.layers
        self.L = tree.n_layers
        self.spec = spec
        self.gamma = spec.root_params["gamma"]
        self.m_prior: CountPrior = spec.root_params["m_prior"]
        self.edge = spec.edge_params  # layer -> {alpha, omega, s_prior}
        self.kernel_priors = _resolve_kernels(spec, data)
        self._it = 0
        self._init_state()

    # -- effective quantities ----------------------------------------------

    def _eff_alloc(self, l: int) -> np.ndarray:
        while l != self.root and self.Z[l] == 0:
            l = self.tree.parents[l]
        return self.alloc[l] if l == self.root or self.Z[l] == 1 else self.alloc[self.root]

    def _eff_ncomp(self, l: int) -> int:
        while l != self.root and self.Z[l] == 0:
            l = self.tree.parents[l]
        return self.M if l == self.root else self.S[l]

    def _anchored_edges(self, l: int) -> list:
        """Edges whose sticky atoms are indexed by layer l's component space."""
        out = []
        for ch in self.children[l]:
            out.append(ch)
            if self.Z[ch] == 0:
                out += self._anchored_edges(ch)
        return out

    def _z0_subtree(self, l: int) -> list:
        """Maximal chain of copy edges hanging below layer l."""
        out = []
        for ch in self.children[l]:
            if self.Z[ch] == 0:
                out.append(ch)
                out += self._z0_subtree(ch)
        return out

    # -- state initialization ------------------------------------------------

    def _prior_atoms(self, l: int, count: int):
        if self.prior_only:
            return None, None
        d = self.X[l].shape[1]
        prior = self.kernel_priors[l].broadcast(d)
        zero = np.zeros((count, d))
        return _batch_conjugate_draw(self.rng, prior, np.zeros(count), zero, zero)

    def _init_state(self):
        rng = self.rng
        self.Z = {}
        self.S = {}
        self.alloc = {}
        self.q = {}
        self.logq = {}
        self.free_mean = {}
        self.free_var = {}
        self.sticky_mean = {}
        self.sticky_var = {}

        self.M = max(2, self.m_prior.sample(rng))
        self.alloc[self.root] = canonicalize_array(rng.integers(0, self.M, size=self.n))
        self.w = _dirichlet_rows(
            rng, (self.gamma + np.bincount(self.alloc[self.root], minlength=self.M))[None, :]
        )[0]
        self.logw = _safe_log(self.w)
        self.root_mean, self.root_var = self._prior_atoms(self.root, self.M)

        for l in self.order:
            if l == self.root:
                continue
            pars = self.edge[l]
            self.Z[l] = int(rng.random() < pars["omega"])
            S = max(2, pars["s_prior"].sample(rng))
            self.S[l] = S
            self.alloc[l] = canonicalize_array(rng.integers(0, S, size=self.n))
            self.q[l] = _dirichlet_rows(rng, np.full((1, S), pars["alpha"]))[0]
            self.logq[l] = _safe_log(self.q[l])
            self.free_mean[l], self.free_var[l] = self._prior_atoms(l, S)
            C = self._eff_ncomp(self.tree.parents[l])
            self.sticky_mean[l], self.sticky_var[l] = self._prior_atoms(l, C)

    # -- structural resizing ---------------------------------------------

    def _resize_sticky(self, l: int, new_c: int):
        """Re-instantiate edge l's sticky atoms in a component space of size new_c."""
        if self.prior_only:
            return
        if self.Z[l] == 0:
            labels = self._eff_alloc(self.tree.parents[l])
            counts, sums, sumsqs = _grouped_moments(self.X[l], labels, new_c)
            self.sticky_mean[l], self.sticky_var[l] = _batch_conjugate_draw(
                self.rng, self.kernel_priors[l], counts, sums, sumsqs
            )
        else:
            self.sticky_mean[l], self.sticky_var[l] = self._prior_atoms(l, new_c)

    def _refresh_anchored(self, l: int):
        c = self._eff_ncomp(l)
        for e in self._anchored_edges(l):
            self._resize_sticky(e, c)

    # -- root updates -------------------------------------------------------

    def _sticky_children_ll(self, l: int, C: int) -> np.ndarray | None:
        """Data terms of copy-edges below l, per subject and candidate component."""
        out = None
        for ch in self.children[l]:
            if self.Z[ch] != 0:
                continue
            term = None
            if not self.prior_only:
                term = gaussian_loglik_matrix(
                    self.X[ch], self.sticky_mean[ch], self.sticky_var[ch]
                )
            deeper = self._sticky_children_ll(ch, C)
            for part in (term, deeper):
                if part is not None:
                    out = part if out is None else out + part
        return out

    def _canonicalize_layer(self, l: int):
        """Relabel layer l's own components so occupied ones come first."""
        alloc = self.alloc[l]
        ncomp = self.M if l == self.root else self.S[l]
        order_seen = []
        seen = set()
        for lab in alloc:
            if lab not in seen:
                seen.add(lab)
                order_seen.append(int(lab))
        perm = order_seen + [m for m in range(ncomp) if m not in seen]
        perm = np.asarray(perm)  # new index -> old index
        inv = np.empty(ncomp, dtype=int)
        inv[perm] = np.arange(ncomp)
        self.alloc[l] = inv[alloc]
        if l == self.root:
            self.w = self.w[perm]
            self.logw = _safe_log(self.w)
            if self.root_mean is not None:
                self.root_mean = self.root_mean[perm]
                self.root_var = self.root_var[perm]
        else:
            self.q[l] = self.q[l][perm]
            self.logq[l] = _safe_log(self.q[l])
            if self.free_mean[l] is not None:
                self.free_mean[l] = self.free_mean[l][perm]
                self.free_var[l] = self.free_var[l][perm]
        if l == self.root or self.Z[l] == 1:
            for e in self._anchored_edges(l):
                if self.sticky_mean[e] is not None:
                    self.sticky_mean[e] = self.sticky_mean[e][perm]
                    self.sticky_var[e] = self.sticky_var[e][perm]

    def _count_move(self, current: int, k_occupied: int, n: int, conc: float,
                    prior: CountPrior) -> int:
        """+-1 Metropolis step on a component count, weights integrated out."""

        def log_target(m: int) -> float:
            lp = prior.log_pmf(m)
            if lp == -math.inf:
                return -math.inf
            return (
                lp
                + float(gammaln(m + 1) - gammaln(m - k_occupied + 1))
                - log_rising_factorial(conc * m, n)
            )

        prop = current + (1 if self.rng.random() < 0.5 else -1)
        if prop < max(k_occupied, 1):
            return current
        log_acc = log_target(prop) - log_target(current)
        if math.log(self.rng.random() + 1e-300) < log_acc:
            return prop
        return current

    def _update_root(self):
        rng = self.rng
        logits = np.broadcast_to(self.logw, (self.n, self.M)).copy()
        if not self.prior_only:
            lik = gaussian_loglik_matrix(self.X[self.root], self.root_mean, self.root_var)
            _check_likelihood(lik, self._it, self.root)
            logits += lik
        extra = self._sticky_children_ll(self.root, self.M)
        if extra is not None:
            logits += extra
        self.alloc[self.root] = _categorical_rows(rng, logits)
        self._canonicalize_layer(self.root)

        k = int(self.alloc[self.root].max()) + 1
        new_m = self._count_move(self.M, k, self.n, self.gamma, self.m_prior)
        if new_m != self.M:
            self._resize_root(new_m)
        counts = np.bincount(self.alloc[self.root], minlength=self.M)
        self.w = _dirichlet_rows(rng, (self.gamma + counts)[None, :])[0]
        self.logw = _safe_log(self.w)
        if not self.prior_only:
            counts_f, sums, sumsqs = _grouped_moments(
                self.X[self.root], self.alloc[self.root], self.M
            )
            self.root_mean, self.root_var = _batch_conjugate_draw(
                rng, self.kernel_priors[self.root], counts_f, sums, sumsqs
            )

    def _resize_root(self, new_m: int):
        old_m = self.M
        self.M = new_m
        if self.root_mean is not None:
            if new_m > old_m:
                extra_mean, extra_var = self._prior_atoms(self.root, new_m - old_m)
                self.root_mean = np.vstack([self.root_mean, extra_mean])
                self.root_var = np.vstack([self.root_var, extra_var])
            else:
                self.root_mean = self.root_mean[:new_m]
                self.root_var = self.root_var[:new_m]
        self._refresh_anchored(self.root)

    # -- edge updates ---------------------------------------------------------

    def _free_logits(self, l: int) -> np.ndarray:
        logits = np.broadcast_to(self.logq[l], (self.n, self.S[l])).copy()
        if not self.prior_only:
            lik = gaussian_loglik_matrix(self.X[l], self.free_mean[l], self.free_var[l])
            _check_likelihood(lik, self._it, l)
            logits += lik
        return logits

    def _update_edge_z(self, l: int):
        rng = self.rng
        pars = self.edge[l]
        omega = pars["omega"]
        parent = self.tree.parents[l]
        e_pa = self._eff_alloc(parent)
        subtree = self._z0_subtree(l)
        free_logits = self._free_logits(l)
        ll_free_marg = float(logsumexp(free_logits, axis=1).sum())
        if self.prior_only:
            ll_sticky = 0.0
        else:
            ll_sticky = float(
                gaussian_loglik_matrix(self.X[l], self.sticky_mean[l], self.sticky_var[l])[
                    np.arange(self.n), e_pa
                ].sum()
            )

        if omega <= 0.0:
            new_z = 0
        elif omega >= 1.0:
            new_z = 1
        elif not subtree:
            # exact Bernoulli conditional
            log_p1 = math.log(omega) + ll_free_marg
            log_p0 = math.log1p(-omega) + ll_sticky
            p1 = 1.0 / (1.0 + math.exp(min(log_p0 - log_p1, 700.0)))
            new_z = int(rng.random() < p1)
        else:
            # blocked flip move; descendant sticky atoms integrated out
            def subtree_marg(labels):
                return sum(
                    _grouped_log_marginal(self.X[d], labels, self.kernel_priors[d])
                    for d in subtree
                ) if not self.prior_only else 0.0

            if self.Z[l] == 0:
                c_prop = _categorical_rows(rng, free_logits)
                log_acc = (
                    math.log(omega) + ll_free_marg + subtree_marg(c_prop)
                    - math.log1p(-omega) - ll_sticky - subtree_marg(e_pa)
                )
                if math.log(rng.random() + 1e-300) < log_acc:
                    self.Z[l] = 1
                    self.alloc[l] = c_prop
                    self._canonicalize_layer(l)
                    self._refresh_anchored(l)
                return
            log_acc = (
                math.log1p(-omega) + ll_sticky + subtree_marg(e_pa)
                - math.log(omega) - ll_free_marg - subtree_marg(self.alloc[l])
            )
            if math.log(rng.random() + 1e-300) < log_acc:
                self.Z[l] = 0
                self._refresh_anchored(l)
            return

        flipped = new_z != self.Z[l]
        self.Z[l] = new_z
        if new_z == 1:
            self.alloc[l] = _categorical_rows(rng, free_logits)
            self._canonicalize_layer(l)
        if flipped:
            self._refresh_anchored(l)

    def _update_edge_rest(self, l: int):
        rng = self.rng
        pars = self.edge[l]
        alpha, s_prior = pars["alpha"], pars["s_prior"]
        if self.Z[l] == 1:
            k = int(self.alloc[l].max()) + 1
            new_s = self._count_move(self.S[l], k, self.n, alpha, s_prior)
            if new_s != self.S[l]:
                self._resize_edge(l, new_s)
            counts = np.bincount(self.alloc[l], minlength=self.S[l])
            self.q[l] = _dirichlet_rows(rng, (alpha + counts)[None, :])[0]
            self.logq[l] = _safe_log(self.q[l])
            if not self.prior_only:
                counts_f, sums, sumsqs = _grouped_moments(self.X[l], self.alloc[l], self.S[l])
                self.free_mean[l], self.free_var[l] = _batch_conjugate_draw(
                    rng, self.kernel_priors[l], counts_f, sums, sumsqs
                )
        else:
            # free branch carries no likelihood: refresh from the prior
            new_s = s_prior.sample(rng)
            if new_s != self.S[l]:
                self._resize_edge(l, new_s)
            self.q[l] = _dirichlet_rows(rng, np.full((1, self.S[l]), alpha))[0]
            self.logq[l] = _safe_log(self.q[l])
            self.alloc[l] = canonicalize_array(
                _categorical_rows(rng, np.broadcast_to(self.logq[l], (self.n, self.S[l])).copy())
            )
            if not self.prior_only:
                self.free_mean[l], self.free_var[l] = self._prior_atoms(l, self.S[l])
        # own sticky atoms, indexed by the parent's component space
        self._resize_sticky(l, self._eff_ncomp(self.tree.parents[l]))

    def _resize_edge(self, l: int, new_s: int):
        old_s = self.S[l]
        self.S[l] = new_s
        if self.free_mean[l] is not None:
            if new_s > old_s:
                extra_mean, extra_var = self._prior_atoms(l, new_s - old_s)
                self.free_mean[l] = np.vstack([self.free_mean[l], extra_mean])
                self.free_var[l] = np.vstack([self.free_var[l], extra_var])
            else:
                self.free_mean[l] = self.free_mean[l][:new_s]
                self.free_var[l] = self.free_var[l][:new_s]
        if self.Z[l] == 1:
            self._refresh_anchored(l)

    # -- driver ---------------------------------------------------------------

    def sweep(self, it: int):
        self._it = it
        self._update_root()
        for l in self.order:
            if l == self.root:
                continue
            self._update_edge_z(l)
            self._update_edge_rest(l)
        if DEBUG:
            self._check_invariants()

    def _check_invariants(self):
        assert abs(self.w.sum() - 1.0) < 1e-8
        assert np.all(self.alloc[self.root] < self.M)
        for l in self.Z:
            assert abs(self.q[l].sum() - 1.0) < 1e-8
            if self.Z[l] == 1:
                assert np.all(self.alloc[l] < self.S[l])
            else:
                assert np.array_equal(self._eff_alloc(l), self._eff_alloc(self.tree.parents[l]))

    def hyper_names(self) -> list:
        names = ["M"]
        for l in sorted(self.edge):
            names += [f"Z_{l}", f"S_{l}"]
        return names

    def hyper_values(self) -> list:
        vals = [float(self.M)]
        for l in sorted(self.edge):
            vals += [float(self.Z[l]), float(self.S[l])]
        return vals

    def layer_allocation(self, l: int) -> np.ndarray:
        return self._eff_alloc(l)


# ----------------------------------------------------------------------
# Fit drivers
# ----------------------------------------------------------------------

def _run(sampler, spec: ModelSpec, model: str, seed) -> Trace:
    mcmc = spec.mcmc
    n_ret = mcmc.n_retained
    n = sampler.n
    L = sampler.L
    alloc_store = [np.empty((n_ret, n), dtype=np.int32) for _ in range(L)]
    names = sampler.hyper_names()
    hyper_store = np.empty((n_ret, len(names)))
    keep = 0
    for it in range(mcmc.iterations):
        sampler.sweep(it)
        if it >= mcmc.burnin and (it - mcmc.burnin) % mcmc.thinning == 0:
            for l in range(L):
                alloc_store[l][keep] = canonicalize_array(sampler.layer_allocation(l))
            hyper_store[keep] = sampler.hyper_values()
            keep += 1
    hyper = {name: hyper_store[:, j].copy() for j, name in enumerate(names)}
    return Trace(
        allocations=alloc_store,
        hyperparams=hyper,
        iterations=mcmc.iterations,
        burnin=mcmc.burnin,
        thinning=mcmc.thinning,
        seed=seed,
        model=model,
    )


def _check_inputs(data, tree, spec):
    if tree is None:
        tree = spec.tree
    if tree.parents != spec.tree.parents:
        raise ValueError("polytree does not match the model spec's layer structure")
    if data is not None and data.n_layers != tree.n_layers:
        raise ValueError("data and polytree disagree on the number of layers")
    if spec.truncation < 2:
        raise ValueError("truncation must be at least 2")
    return tree


def fit_thdp(data: LayerStack | None, tree: Polytree | None, spec: ModelSpec,
             rng: np.random.Generator) -> Trace:
    """Run the hierarchical-DP telescopic sampler and return its trace."""
    tree = _check_inputs(data, tree, spec)
    sampler = _ThdpSampler(data, tree, spec, rng)
    return _run(sampler, spec, "thdp", spec.seed)


def fit_ua(data: LayerStack | None, tree: Polytree | None, spec: ModelSpec,
           rng: np.random.Generator) -> Trace:
    """Run the unique-atom telescopic sampler and return its trace."""
    tree = _check_inputs(data, tree, spec)
    sampler = _UaSampler(data, tree, spec, rng)
    return _run(sampler, spec, "unique_atom", spec.seed)


def run_chains(spec: ModelSpec, data: LayerStack | None, n_chains: int = 1) -> list:
    """Run independent chains with decorrelated seed streams.

    The number of worker threads is taken from TELESCOPIC_THREADS (default:
    sequential); per-chain results do not depend on scheduling.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    seeds = np.random.SeedSequence(spec.seed).spawn(n_chains)
    fit = fit_thdp if spec.model == "thdp" else fit_ua

    def one(idx: int) -> Trace:
        trace = fit(data, None, spec, np.random.default_rng(seeds[idx]))
        trace.seed = (spec.seed, idx)
        return trace

    workers = int(os.environ.get("TELESCOPIC_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(n_chains)))
    return [one(i) for i in range(n_chains)]


def split_rhat(chains: list) -> float:
    """Split potential-scale-reduction factor for scalar chain summaries."""
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        mid = c.size // 2
        if mid < 2:
            raise ValueError("chains too short for split R-hat")
        halves += [c[:mid], c[mid:2 * mid]]
    arr = np.stack(halves)
    m, n = arr.shape
    means = arr.mean(axis=1)
    w = arr.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w == 0:
        return 1.0
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))
