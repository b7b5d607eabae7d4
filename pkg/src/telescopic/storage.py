"""File formats and persistence: data CSVs, manifests, trace files.

All writes are atomic (write to a temporary file in the target directory,
then rename).  Outputs carry no timestamps, so a rerun with the same seed
and inputs is byte-identical.

Formats
-------
data.csv        header ``layer{l}_d{j}`` per observation column, one row per
                subject.
manifest.json   maps columns to layers and records the polytree, generator
                settings and digests.
truth.csv       header ``layer{l}``, one row per subject, integer labels.
trace CSV       header ``iteration,layer,c0..c{n-1}``; one row per retained
                draw per layer, canonical labels.
trace JSON      run metadata and per-draw hyperparameter values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .layers import LayerStack, Polytree
from .samplers import Trace

__all__ = [
    "atomic_write",
    "sha256_digest",
    "write_scenario",
    "read_layerstack",
    "read_truth",
    "write_trace",
    "read_trace",
    "write_labels_csv",
    "read_labels_csv",
    "write_matrix_csv",
    "write_json",
    "csv_text",
]

FORMAT_VERSION = 1


def atomic_write(path, content):
    """Write text or bytes to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(content, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(content)
    os.replace(tmp, path)


def sha256_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, doc: dict):
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- layer data --------------------------------------------------------

def write_scenario(out_dir, data: LayerStack, truth=None, name: str = "",
                   seed=None, params: dict | None = None) -> dict:
    """Write data.csv, manifest.json and (when given) truth.csv."""
    out_dir = Path(out_dir)
    columns = []
    layer_meta = []
    for l, x in enumerate(data.layers):
        names = [f"layer{l}_d{j}" for j in range(x.shape[1])]
        columns += names
        layer_meta.append({
            "index": l,
            "parent": data.tree.parents[l],
            "dim": x.shape[1],
            "columns": names,
        })
    wide = np.concatenate(data.layers, axis=1)
    rows = [[format(v, ".17g") for v in row] for row in wide]
    atomic_write(out_dir / "data.csv", csv_text(columns, rows))

    if truth is not None:
        header = [f"layer{l}" for l in range(data.n_layers)]
        tr = np.stack([np.asarray(t, dtype=int) for t in truth], axis=1)
        atomic_write(out_dir / "truth.csv", csv_text(header, tr.tolist()))

    manifest = {
        "format_version": FORMAT_VERSION,
        "n": data.n,
        "layers": layer_meta,
        "scenario": name,
        "seed": seed,
        "params": params or {},
        "digests": {"data.csv": sha256_digest(out_dir / "data.csv")},
    }
    if truth is not None:
        manifest["digests"]["truth.csv"] = sha256_digest(out_dir / "truth.csv")
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def read_layerstack(data_dir) -> tuple:
    """Load (LayerStack, manifest) from a directory written by write_scenario."""
    data_dir = Path(data_dir)
    with open(data_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    table = np.atleast_1d(np.genfromtxt(data_dir / "data.csv", delimiter=",", names=True))
    colnames = list(table.dtype.names)
    flat = np.stack([table[c] for c in colnames], axis=1)
    name_to_idx = {c: i for i, c in enumerate(colnames)}
    layers = []
    parents = []
    for meta in manifest["layers"]:
        # header sanitation by genfromtxt keeps our simple names intact
        idx = [name_to_idx[c] for c in meta["columns"]]
        layers.append(flat[:, idx])
        parents.append(meta["parent"])
    stack = LayerStack(layers, Polytree(tuple(parents)))
    return stack, manifest


def read_truth(path) -> list:
    """Load per-layer true label arrays from truth.csv."""
    table = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True, dtype=int))
    return [np.asarray(table[c], dtype=int) for c in table.dtype.names]


# -- traces ------------------------------------------------------------

def write_trace(out_dir, trace: Trace, chain: int = 0) -> tuple:
    """Write trace_chain{chain}.csv and its JSON sidecar; returns the paths."""
    out_dir = Path(out_dir)
    n = trace.n_subjects
    header = ["iteration", "layer"] + [f"c{i}" for i in range(n)]
    rows = []
    for draw in range(trace.n_draws):
        iteration = trace.burnin + draw * trace.thinning
        for l in range(trace.n_layers):
            rows.append([iteration, l] + trace.allocations[l][draw].tolist())
    csv_path = out_dir / f"trace_chain{chain}.csv"
    atomic_write(csv_path, csv_text(header, rows))
    sidecar = {
        "format_version": FORMAT_VERSION,
        "model": trace.model,
        "iterations": trace.iterations,
        "burnin": trace.burnin,
        "thinning": trace.thinning,
        "seed": trace.seed,
        "n_layers": trace.n_layers,
        "n_subjects": n,
        "n_draws": trace.n_draws,
        "hyperparams": {k: np.asarray(v).tolist() for k, v in trace.hyperparams.items()},
    }
    if "parents" in trace.extras:
        sidecar["parents"] = trace.extras["parents"]
    json_path = out_dir / f"trace_chain{chain}.json"
    write_json(json_path, sidecar)
    return csv_path, json_path


def read_trace(csv_path, json_path=None) -> Trace:
    csv_path = Path(csv_path)
    if json_path is None:
        json_path = csv_path.with_suffix(".json")
    with open(json_path) as fh:
        meta = json.load(fh)
    raw = np.loadtxt(csv_path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    L = meta["n_layers"]
    n_draws = meta["n_draws"]
    alloc = [np.empty((n_draws, meta["n_subjects"]), dtype=np.int32) for _ in range(L)]
    for row in raw:
        draw = (int(row[0]) - meta["burnin"]) // meta["thinning"]
        alloc[int(row[1])][draw] = row[2:]
    return Trace(
        allocations=alloc,
        hyperparams={k: np.asarray(v) for k, v in meta["hyperparams"].items()},
        iterations=meta["iterations"],
        burnin=meta["burnin"],
        thinning=meta["thinning"],
        seed=meta["seed"],
        model=meta["model"],
    )


# -- small tabular outputs ----------------------------------------------

def write_labels_csv(path, labels_by_layer: dict):
    """One row per layer: ``layer`` column then the integer labels."""
    n = len(next(iter(labels_by_layer.values())))
    header = ["layer"] + [f"c{i}" for i in range(n)]
    rows = [[l] + list(map(int, labs)) for l, labs in sorted(labels_by_layer.items())]
    atomic_write(path, csv_text(header, rows))


def read_labels_csv(path) -> dict:
    out = {}
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            out[int(row[0])] = np.asarray([int(v) for v in row[1:]], dtype=int)
    return out


def write_matrix_csv(path, matrix: np.ndarray):
    rows = [[format(v, ".12g") for v in row] for row in np.atleast_2d(matrix)]
    atomic_write(path, csv_text([f"col{j}" for j in range(np.atleast_2d(matrix).shape[1])], rows))
