"""Model configuration: validated container for a full fitting run.

A ModelSpec is the single JSON document driving the CLI: model family,
layer polytree, per-edge prior parameters, kernel hyperparameters, MCMC
settings and seed.  Validation is strict; unknown fields are rejected with
the offending field named.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .eppf import CountPrior
from .kernels import NixParams
from .layers import Polytree

__all__ = ["ConfigError", "McmcSettings", "ModelSpec"]

MODELS = ("thdp", "unique_atom")


class ConfigError(ValueError):
    """A model configuration failed validation."""


@dataclass(frozen=True)
class McmcSettings:
    iterations: int = 100_000
    burnin: int | None = None  # default: half of iterations
    thinning: int = 5

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("mcmc.iterations must be positive")
        burnin = self.iterations // 2 if self.burnin is None else self.burnin
        if not 0 <= burnin < self.iterations:
            raise ConfigError("mcmc.burnin must lie in [0, iterations)")
        if self.thinning < 1:
            raise ConfigError("mcmc.thinning must be positive")
        object.__setattr__(self, "burnin", burnin)

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burnin + self.thinning - 1) // self.thinning


def _require_keys(d: dict, allowed: set, where: str):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown field {key!r} in {where}")


def _positive(value, where: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number") from None
    if not (np.isfinite(v) and v > 0):
        raise ConfigError(f"{where} must be positive and finite, got {value}")
    return v


def _count_prior(spec, where: str) -> CountPrior:
    if isinstance(spec, CountPrior):
        return spec
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be a count-prior object")
    try:
        return CountPrior.from_spec(spec)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


@dataclass
class ModelSpec:
    """Everything needed to reproduce one fit, minus the data."""

    model: str
    tree: Polytree
    root_params: dict
    edge_params: dict  # layer index -> dict of per-edge parameters
    kernel_params: dict = field(default_factory=dict)  # layer -> NixParams | "empirical"
    truncation: int = 40
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    seed: int = 0
    update_concentrations: bool = True
    n_subjects: int | None = None  # required only for prior-only runs

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.truncation < 2:
            raise ConfigError("truncation must be at least 2")
        non_root = [i for i in range(self.tree.n_layers) if self.tree.parents[i] is not None]
        missing = [i for i in non_root if i not in self.edge_params]
        if missing:
            raise ConfigError(f"missing edge parameters for layers {missing}")
        extra = [i for i in self.edge_params if i not in non_root]
        if extra:
            raise ConfigError(f"edge parameters given for non-child layers {extra}")
        if self.model == "thdp":
            _require_keys(self.root_params, {"gamma0", "gamma"}, "root")
            self.root_params = {
                "gamma0": _positive(self.root_params.get("gamma0", 1.0), "root.gamma0"),
                "gamma": _positive(self.root_params.get("gamma", 1.0), "root.gamma"),
            }
            for layer, pars in self.edge_params.items():
                _require_keys(pars, {"alpha0", "alpha"}, f"edges.{layer}")
                self.edge_params[layer] = {
                    "alpha0": _positive(pars.get("alpha0", 1.0), f"edges.{layer}.alpha0"),
                    "alpha": _positive(pars.get("alpha", 1.0), f"edges.{layer}.alpha"),
                }
        else:
            _require_keys(self.root_params, {"gamma", "m_prior"}, "root")
            self.root_params = {
                "gamma": _positive(self.root_params.get("gamma", 1.0), "root.gamma"),
                "m_prior": _count_prior(
                    self.root_params.get("m_prior", {"name": "shifted_poisson", "rate": 1.0}),
                    "root.m_prior",
                ),
            }
            for layer, pars in self.edge_params.items():
                _require_keys(pars, {"alpha", "omega", "s_prior"}, f"edges.{layer}")
                omega = pars.get("omega", 0.5)
                try:
                    omega = float(omega)
                except (TypeError, ValueError):
                    raise ConfigError(f"edges.{layer}.omega must be a number") from None
                if not 0.0 <= omega <= 1.0:
                    raise ConfigError(f"edges.{layer}.omega must lie in [0, 1]")
                self.edge_params[layer] = {
                    "alpha": _positive(pars.get("alpha", 1.0), f"edges.{layer}.alpha"),
                    "omega": omega,
                    "s_prior": _count_prior(
                        pars.get("s_prior", {"name": "shifted_poisson", "rate": 1.0}),
                        f"edges.{layer}.s_prior",
                    ),
                }
        for layer, kp in self.kernel_params.items():
            if not 0 <= layer < self.tree.n_layers:
                raise ConfigError(f"kernel parameters for unknown layer {layer}")
            if not (kp == "empirical" or isinstance(kp, NixParams)):
                raise ConfigError(f"kernels.{layer} must be 'empirical' or NIX parameters")

    # -- JSON round trip -------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {
            "model", "parents", "layer_dims", "root", "edges", "kernels",
            "truncation", "mcmc", "seed", "update_concentrations", "n_subjects",
        }
        _require_keys(doc, allowed, "config")
        if "model" not in doc:
            raise ConfigError("missing required field 'model'")
        if "parents" not in doc:
            raise ConfigError("missing required field 'parents'")
        try:
            tree = Polytree(tuple(doc["parents"]), doc.get("layer_dims"))
        except ValueError as exc:
            raise ConfigError(f"invalid 'parents': {exc}") from None

        def _int_keys(d: dict, where: str) -> dict:
            out = {}
            for key, val in d.items():
                try:
                    out[int(key)] = val
                except (TypeError, ValueError):
                    raise ConfigError(f"{where} keys must be layer indices, got {key!r}") from None
            return out

        edges = _int_keys(doc.get("edges", {}), "edges")
        kernels_doc = _int_keys(doc.get("kernels", {}), "kernels")
        kernels = {}
        for layer, kp in kernels_doc.items():
            if kp == "empirical":
                kernels[layer] = "empirical"
            elif isinstance(kp, dict):
                _require_keys(kp, {"mu0", "kappa0", "nu0", "sigma0sq"}, f"kernels.{layer}")
                try:
                    kernels[layer] = NixParams(
                        kp.get("mu0", 0.0), kp.get("kappa0", 0.1),
                        kp.get("nu0", 2.0), kp.get("sigma0sq", 1.0),
                    )
                except ValueError as exc:
                    raise ConfigError(f"invalid kernels.{layer}: {exc}") from None
            else:
                raise ConfigError(f"kernels.{layer} must be 'empirical' or an object")

        mcmc_doc = doc.get("mcmc", {})
        _require_keys(mcmc_doc, {"iterations", "burnin", "thinning"}, "mcmc")
        mcmc = McmcSettings(
            iterations=int(mcmc_doc.get("iterations", 100_000)),
            burnin=None if mcmc_doc.get("burnin") is None else int(mcmc_doc["burnin"]),
            thinning=int(mcmc_doc.get("thinning", 5)),
        )
        return cls(
            model=doc["model"],
            tree=tree,
            root_params=dict(doc.get("root", {})),
            edge_params={k: dict(v) for k, v in edges.items()},
            kernel_params=kernels,
            truncation=int(doc.get("truncation", 40)),
            mcmc=mcmc,
            seed=int(doc.get("seed", 0)),
            update_concentrations=bool(doc.get("update_concentrations", True)),
            n_subjects=None if doc.get("n_subjects") is None else int(doc["n_subjects"]),
        )

    def to_dict(self) -> dict:
        root = dict(self.root_params)
        if "m_prior" in root:
            root["m_prior"] = root["m_prior"].to_spec()
        edges = {}
        for layer, pars in self.edge_params.items():
            pars = dict(pars)
            if "s_prior" in pars:
                pars["s_prior"] = pars["s_prior"].to_spec()
            edges[str(layer)] = pars
        kernels = {}
        for layer, kp in self.kernel_params.items():
            if kp == "empirical":
                kernels[str(layer)] = "empirical"
            else:
                kernels[str(layer)] = {
                    "mu0": kp.mu0.tolist(), "kappa0": kp.kappa0.tolist(),
                    "nu0": kp.nu0.tolist(), "sigma0sq": kp.sigma0sq.tolist(),
                }
        out = {
            "model": self.model,
            "parents": list(self.tree.parents),
            "root": root,
            "edges": edges,
            "kernels": kernels,
            "truncation": self.truncation,
            "mcmc": {
                "iterations": self.mcmc.iterations,
                "burnin": self.mcmc.burnin,
                "thinning": self.mcmc.thinning,
            },
            "seed": self.seed,
            "update_concentrations": self.update_concentrations,
        }
        if self.tree.layer_dims is not None:
            out["layer_dims"] = list(self.tree.layer_dims)
        if self.n_subjects is not None:
            out["n_subjects"] = self.n_subjects
        return out

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
