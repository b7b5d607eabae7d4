"""Batch command-line front end: simulate, fit, summarize, measures.

Exit codes: 0 on success, 2 on validation errors (bad flags, malformed
config or data), 3 on runtime numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ModelSpec
from .eppf import (CountPrior, HdpParams, MfmParams,
                   dependence_from_teppf, dependence_thdp, dependence_ua,
                   thdp_log_teppf, ua_log_teppf)
from .point_estimation import (expected_binder_loss, expected_vi_loss, min_binder,
                               min_vi, misallocation_count, pairwise_rand_means,
                               posterior_dependence, similarity)
from .partitions import rand_index
from .samplers import Trace, run_chains
from . import simgen, storage

_SCENARIOS = {"s1": simgen.scenario1, "s2": simgen.scenario2, "toy": simgen.toy_example}


def _parse_count_prior(text: str) -> CountPrior:
    kind, _, rest = text.partition(":")
    try:
        if kind == "point":
            return CountPrior("point", m=int(rest))
        if kind == "shifted_poisson":
            return CountPrior("shifted_poisson", rate=float(rest))
        if kind == "geometric":
            return CountPrior("geometric", p=float(rest))
        if kind == "table":
            return CountPrior("table", probs=[float(v) for v in rest.split(",")])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad count prior {text!r}: {exc}") from None
    raise ConfigError(
        f"unknown count prior kind {kind!r} "
        "(expected point:M, shifted_poisson:RATE, geometric:P or table:P1,P2,...)"
    )


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.scenario not in _SCENARIOS:
        raise ConfigError(
            f"unknown scenario {args.scenario!r}; choose from {sorted(_SCENARIOS)}"
        )
    kwargs = {}
    if args.n is not None:
        kwargs["n"] = args.n
    if args.layers is not None:
        if args.scenario == "toy":
            raise ConfigError("the toy scenario has a fixed two-layer structure")
        kwargs["n_layers"] = args.layers
    out = _SCENARIOS[args.scenario](args.seed, **kwargs)
    manifest = storage.write_scenario(
        args.out, out.data, truth=out.truth, name=out.name,
        seed=args.seed, params=out.params,
    )
    print(f"wrote scenario {out.name}: n={out.n}, layers={out.n_layers} -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise ConfigError(f"config file not found: {cfg_path}")
    spec = ModelSpec.from_json(cfg_path.read_text())
    data, manifest = storage.read_layerstack(args.data)
    if data.n_layers != spec.tree.n_layers:
        raise ConfigError(
            f"config declares {spec.tree.n_layers} layers but data has {data.n_layers}"
        )
    traces = run_chains(spec, data, n_chains=args.chains)
    out_dir = Path(args.out)
    files = {}
    for i, trace in enumerate(traces):
        trace.extras["parents"] = list(spec.tree.parents)
        csv_path, json_path = storage.write_trace(out_dir, trace, chain=i)
        files[f"chain{i}"] = {
            "csv": csv_path.name,
            "sha256": storage.sha256_digest(csv_path),
        }
    storage.write_json(out_dir / "run_manifest.json", {
        "version": __version__,
        "config": spec.to_dict(),
        "config_sha256": storage.sha256_digest(cfg_path),
        "data_sha256": manifest.get("digests", {}).get("data.csv"),
        "n_chains": args.chains,
        "traces": files,
    })
    print(f"fit {spec.model}: {args.chains} chain(s), "
          f"{traces[0].n_draws} retained draws each -> {args.out}")
    return 0


def _load_traces(trace_dir: Path) -> Trace:
    paths = sorted(trace_dir.glob("trace_chain*.csv"))
    if not paths:
        raise ConfigError(f"no trace_chain*.csv files under {trace_dir}")
    traces = [storage.read_trace(p) for p in paths]
    return traces[0] if len(traces) == 1 else Trace.merge(traces)


def _trace_parents(trace_dir: Path) -> list | None:
    paths = sorted(trace_dir.glob("trace_chain*.json"))
    for p in paths:
        meta = json.loads(p.read_text())
        if "parents" in meta:
            return meta["parents"]
    return None


def cmd_summarize(args) -> int:
    trace_dir = Path(args.trace)
    out_dir = Path(args.out)
    trace = _load_traces(trace_dir)
    parents = _trace_parents(trace_dir)
    L = trace.n_layers

    vi_est = {}
    binder_est = {}
    summary = {"model": trace.model, "n_draws": trace.n_draws, "layers": {}}
    for l in range(L):
        pv = min_vi(trace, l)
        pb = min_binder(trace, l)
        vi_est[l] = pv.labels
        binder_est[l] = pb.labels
        summary["layers"][str(l)] = {
            "min_vi_clusters": pv.k,
            "min_vi_expected_loss": expected_vi_loss(trace, l, pv),
            "min_binder_clusters": pb.k,
            "min_binder_expected_loss": expected_binder_loss(trace, l, pb),
        }
        storage.write_matrix_csv(out_dir / f"similarity_layer{l}.csv", similarity(trace, l))
    storage.write_labels_csv(out_dir / "minvi.csv", vi_est)
    storage.write_labels_csv(out_dir / "minbinder.csv", binder_est)

    storage.write_matrix_csv(out_dir / "rand_matrix_mean.csv", pairwise_rand_means(trace))
    point_matrix = np.eye(L)
    for a in range(L):
        for b in range(a + 1, L):
            point_matrix[a, b] = point_matrix[b, a] = rand_index(vi_est[a], vi_est[b])
    storage.write_matrix_csv(out_dir / "rand_matrix_minvi.csv", point_matrix)

    edges = (
        [(p, l) for l, p in enumerate(parents) if p is not None]
        if parents is not None
        else [(l, l + 1) for l in range(L - 1)]
    )
    rows = []
    for a, b in edges:
        dep = posterior_dependence(trace, (a, b))
        rows.append([
            a, b,
            f"{dep.rand_mean:.6f}", f"{dep.rand_interval[0]:.6f}", f"{dep.rand_interval[1]:.6f}",
            f"{dep.tari_mean:.6f}", f"{dep.tari_interval[0]:.6f}", f"{dep.tari_interval[1]:.6f}",
            f"{dep.er_indep:.6f}",
        ])
    header = ["layer_a", "layer_b", "rand_mean", "rand_lo", "rand_hi",
              "tari_mean", "tari_lo", "tari_hi", "er_indep"]
    storage.atomic_write(out_dir / "dependence.csv", storage.csv_text(header, rows))

    if args.truth:
        truth = storage.read_truth(args.truth)
        if len(truth) != L:
            raise ConfigError("truth file has a different number of layers than the trace")
        rows = []
        for l in range(L):
            r = rand_index(vi_est[l], truth[l])
            mistakes = misallocation_count(vi_est[l], truth[l])
            rows.append([l, f"{r:.6f}", mistakes, int(max(vi_est[l])) + 1])
        storage.atomic_write(
            out_dir / "rand_vs_truth.csv",
            storage.csv_text(["layer", "rand_minvi", "mistakes", "clusters"], rows),
        )
        summary["rand_vs_truth_mean"] = float(
            np.mean([float(r[1]) for r in rows])
        )
    storage.write_json(out_dir / "summary.json", summary)
    print(f"summarized {trace.n_draws} draws over {L} layers -> {out_dir}")
    return 0


def cmd_measures(args) -> int:
    if args.model == "thdp":
        params = HdpParams(args.gamma0, args.gamma, args.alpha0, args.alpha)
        report = dependence_thdp(params)
        teppf = lambda p1, p2: thdp_log_teppf(p1, p2, params)
    else:
        params = MfmParams(
            gamma=args.gamma, alpha=args.alpha, omega=args.omega,
            m_prior=_parse_count_prior(args.m_prior),
            s_prior=_parse_count_prior(args.s_prior),
        )
        report = dependence_ua(params)
        teppf = lambda p1, p2: ua_log_teppf(p1, p2, params)
    doc = {
        "model": args.model,
        "tau": report.tau,
        "er": report.er,
        "eb": report.eb,
        "er_indep": report.er_indep,
    }
    if args.enumerate:
        enum = dependence_from_teppf(teppf, n=args.n)
        doc["enumeration"] = {
            "n": args.n, "tau": enum.tau, "er": enum.er,
            "eb": enum.eb, "er_indep": enum.er_indep,
        }
        doc["max_abs_diff"] = max(
            abs(enum.tau - report.tau),
            abs(enum.er - report.er),
            abs(enum.er_indep - report.er_indep),
        )
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        storage.atomic_write(args.out, text + "\n")
    else:
        print(text)
    return 0


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telescopic",
        description="Telescopic clustering: simulate, fit, summarize, measure.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulation scenario")
    p.add_argument("--scenario", required=True, help="s1, s2 or toy")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="override subject count")
    p.add_argument("--layers", type=int, default=None, help="override layer count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the sampler on a data directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chains", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="point estimates and dependence tables")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("measures", help="closed-form prior dependence measures")
    p.add_argument("--model", choices=["thdp", "unique_atom"], required=True)
    p.add_argument("--gamma0", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--alpha0", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=0.5)
    p.add_argument("--m-prior", default="shifted_poisson:1.0")
    p.add_argument("--s-prior", default="shifted_poisson:1.0")
    p.add_argument("--enumerate", action="store_true",
                   help="cross-check closed forms against exhaustive enumeration")
    p.add_argument("--n", type=int, default=2, help="enumeration sample size")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_measures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
