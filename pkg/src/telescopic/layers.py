"""Layer containers: the dependence polytree and per-layer data matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Polytree", "LayerStack"]


@dataclass(frozen=True)
class Polytree:
    """Directed layer-dependence structure: each layer has at most one parent.

    ``parents[i]`` is the parent index of layer i, or None for the unique
    root.  ``layer_dims`` optionally records the observation dimension per
    layer for validation against data.
    """

    parents: tuple
    layer_dims: tuple | None = None

    def __post_init__(self):
        parents = tuple(None if p is None else int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        L = len(parents)
        if L == 0:
            raise ValueError("polytree needs at least one layer")
        roots = [i for i, p in enumerate(parents) if p is None]
        if len(roots) != 1:
            raise ValueError(f"polytree must have exactly one root, found {len(roots)}")
        for i, p in enumerate(parents):
            if p is not None and not 0 <= p < L:
                raise ValueError(f"layer {i} has out-of-range parent {p}")
            if p == i:
                raise ValueError(f"layer {i} is its own parent")
        # acyclicity: every layer must reach the root
        for i in range(L):
            seen = set()
            j = i
            while parents[j] is not None:
                if j in seen:
                    raise ValueError("polytree contains a cycle")
                seen.add(j)
                j = parents[j]
        if self.layer_dims is not None:
            dims = tuple(int(d) for d in self.layer_dims)
            if len(dims) != L or any(d < 1 for d in dims):
                raise ValueError("layer_dims must give a positive dimension per layer")
            object.__setattr__(self, "layer_dims", dims)

    @property
    def n_layers(self) -> int:
        return len(self.parents)

    @property
    def root(self) -> int:
        return self.parents.index(None)

    def children(self, layer: int) -> list[int]:
        return [i for i, p in enumerate(self.parents) if p == layer]

    def topo_order(self) -> list[int]:
        """Layers ordered root first, every parent before its children."""
        order = [self.root]
        frontier = [self.root]
        while frontier:
            nxt = []
            for layer in frontier:
                for ch in self.children(layer):
                    order.append(ch)
                    nxt.append(ch)
            frontier = nxt
        return order

    @classmethod
    def chain(cls, n_layers: int, layer_dims=None) -> "Polytree":
        """Markov chain: layer t depends on layer t-1."""
        parents = (None,) + tuple(range(n_layers - 1))
        return cls(parents, tuple(layer_dims) if layer_dims is not None else None)


@dataclass
class LayerStack:
    """Aligned observations for n subjects across L layers of varying dim."""

    layers: list = field(default_factory=list)
    tree: Polytree | None = None

    def __post_init__(self):
        self.layers = [np.atleast_2d(np.asarray(x, dtype=float)) for x in self.layers]
        if not self.layers:
            raise ValueError("layer stack needs at least one layer")
        n = self.layers[0].shape[0]
        for i, x in enumerate(self.layers):
            if x.shape[0] != n:
                raise ValueError(
                    f"layer {i} has {x.shape[0]} rows, expected {n} (misaligned subjects)"
                )
        if self.tree is None:
            self.tree = Polytree.chain(len(self.layers))
        if self.tree.n_layers != len(self.layers):
            raise ValueError("polytree layer count does not match data")
        if self.tree.layer_dims is not None:
            for i, (x, d) in enumerate(zip(self.layers, self.tree.layer_dims)):
                if x.shape[1] != d:
                    raise ValueError(f"layer {i} has dim {x.shape[1]}, tree says {d}")

    @property
    def n(self) -> int:
        return self.layers[0].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def dims(self) -> tuple:
        return tuple(x.shape[1] for x in self.layers)
