"""Seeded generators for the simulation scenarios and the toy example.

All scenarios carry their ground-truth partitions for evaluation.  Label
flips between consecutive layers are drawn without replacement and a flip
set that would empty a cluster is rejected and redrawn, so every layer keeps
two nonempty clusters and the true pairwise Rand structure stays defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import LayerStack, Polytree
from .partitions import canonicalize_array

__all__ = ["ScenarioOutput", "scenario1", "scenario2", "toy_example", "true_rand_matrix"]


@dataclass
class ScenarioOutput:
    """Generated observations plus ground truth and generator settings."""

    data: LayerStack
    truth: list  # per-layer canonical label arrays
    seed: int
    name: str
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def n_layers(self) -> int:
        return self.data.n_layers


def _flip_labels(rng: np.random.Generator, labels: np.ndarray, n_flips: int) -> np.ndarray:
    """Move n_flips random subjects to the other cluster, keeping both alive."""
    n = labels.shape[0]
    for _ in range(1000):
        idx = rng.choice(n, size=n_flips, replace=False)
        out = labels.copy()
        out[idx] = 1 - out[idx]
        counts = np.bincount(out, minlength=2)
        if counts.min() > 0:
            return out
    raise RuntimeError("could not draw a flip set keeping both clusters nonempty")


def _two_cluster_chain(rng, n: int, n_layers: int, n_flips: int, means: tuple):
    labels = np.repeat([0, 1], [n - n // 2, n // 2])
    truth = []
    layers = []
    mean_arr = np.asarray(means, dtype=float)
    for t in range(n_layers):
        if t > 0:
            labels = _flip_labels(rng, labels, n_flips)
        truth.append(canonicalize_array(labels))
        layers.append(rng.normal(mean_arr[labels], 1.0).reshape(-1, 1))
    return layers, truth


def scenario1(seed: int, n: int = 200, n_layers: int = 10) -> ScenarioOutput:
    """Ten univariate layers, two clusters at means 0 and 4, 5% moved per step."""
    rng = np.random.default_rng(seed)
    n_flips = max(1, round(0.05 * n))
    layers, truth = _two_cluster_chain(rng, n, n_layers, n_flips, (0.0, 4.0))
    return ScenarioOutput(
        data=LayerStack(layers, Polytree.chain(n_layers)),
        truth=truth,
        seed=seed,
        name="s1",
        params={"n": n, "n_layers": n_layers, "n_flips": n_flips,
                "means": [0.0, 4.0], "initial_split": "balanced"},
    )


def scenario2(seed: int, n: int = 200, n_layers: int = 100) -> ScenarioOutput:
    """Long chain of univariate layers, means 0 and 3, 2% moved per step."""
    rng = np.random.default_rng(seed)
    n_flips = max(1, round(0.02 * n))
    layers, truth = _two_cluster_chain(rng, n, n_layers, n_flips, (0.0, 3.0))
    return ScenarioOutput(
        data=LayerStack(layers, Polytree.chain(n_layers)),
        truth=truth,
        seed=seed,
        name="s2",
        params={"n": n, "n_layers": n_layers, "n_flips": n_flips,
                "means": [0.0, 3.0], "initial_split": "balanced"},
    )


def toy_example(seed: int, n: int = 200) -> ScenarioOutput:
    """Two views sharing one true partition: a univariate feature at means
    -1/+1 and a trivariate feature at means (-1,-1,-1)/(1,1,1)."""
    rng = np.random.default_rng(seed)
    labels = canonicalize_array(np.repeat([0, 1], [n - n // 2, n // 2]))
    signs = np.where(labels == 0, -1.0, 1.0)
    x1 = rng.normal(signs, 1.0).reshape(-1, 1)
    x2 = rng.normal(signs[:, None] * np.ones(3), 1.0)
    return ScenarioOutput(
        data=LayerStack([x1, x2], Polytree.chain(2)),
        truth=[labels, labels.copy()],
        seed=seed,
        name="toy",
        params={"n": n, "dims": [1, 3], "initial_split": "balanced"},
    )


def true_rand_matrix(truth: list) -> np.ndarray:
    """Pairwise Rand indexes between the true partitions of all layers."""
    from .partitions import rand_index

    L = len(truth)
    out = np.eye(L)
    for a in range(L):
        for b in range(a + 1, L):
            out[a, b] = out[b, a] = rand_index(truth[a], truth[b])
    return out
