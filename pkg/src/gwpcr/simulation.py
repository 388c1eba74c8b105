"""Synthetic data generation and replicated method comparisons.

Each design couples an adjacency graph with a ground-truth partition and one
coefficient vector per cluster. Replicate ``k`` of a design draws from
``default_rng([design.seed, k])`` so results never depend on execution order
or on how replicates are spread over workers.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .admm import SolverConfig
from .clustering import (
    ClusterLabels,
    canonical_labels,
    clustering_accuracy,
    coefficient_bias,
    coefficient_mse,
    coefficient_mse_full,
    extract_clusters,
    rand_index,
    relative_cluster_count,
)
from .compositional import build_design, helmert_projection, log_transform
from .graph import SpatialGraph, all_pairs_distance, lattice_graph, read_edge_csv, spatial_weights
from .selection import PathError, solution_path

__all__ = [
    "METHODS",
    "SimulationDesign",
    "SimulatedDataset",
    "ReplicateOutcome",
    "generate",
    "builtin_designs",
    "get_design",
    "load_design",
    "lattice_design",
    "method_weights",
    "run_replicate",
    "run_comparison",
    "sensitivity_sweep",
    "METRIC_COLUMNS",
    "write_metrics_csv",
]

log = logging.getLogger(__name__)

#: Method name -> weight scheme.
METHODS = {
    "constant": "constant",
    "pure-adjacency": "adjacency",
    "spatial-pairwise": "exponential",
    "spatial-adjacency": "adjusted",
}

METRIC_COLUMNS = ("design", "method", "r", "R", "n_ok", "n_failed", "status", "RI", "CA", "RCC",
                  "bias_beta", "mse_beta", "bias_eta", "mse_eta", "mse_full_beta",
                  "mse_full_eta", "mean_K")


@dataclass
class SimulationDesign:
    """Graph, true partition and coefficients defining a simulation setting."""

    name: str
    graph: SpatialGraph
    partition: ClusterLabels
    beta_by_cluster: np.ndarray
    eta_true: np.ndarray
    noise_sd: float
    p: int = 3
    q: int = 2
    seed: int = 0
    reference_r: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta_by_cluster = np.atleast_2d(np.asarray(self.beta_by_cluster, dtype=float))
        self.eta_true = np.asarray(self.eta_true, dtype=float).reshape(-1)
        if self.partition.n != self.graph.n:
            raise ValueError("partition and graph sizes differ")
        if self.beta_by_cluster.shape != (self.partition.K, self.p - 1):
            raise ValueError(f"beta table must be {self.partition.K} x {self.p - 1}, "
                             f"got {self.beta_by_cluster.shape}")
        if self.eta_true.shape != (self.q,):
            raise ValueError(f"eta must have length q={self.q}")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be nonnegative")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def beta_true(self) -> np.ndarray:
        return self.beta_by_cluster[self.partition.labels]


@dataclass
class SimulatedDataset:
    x: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    design: str
    replicate: int


def generate(design, replicate):
    """Draw one replicate: uniform compositions and covariates, Gaussian noise."""
    rng = np.random.default_rng([int(design.seed), int(replicate)])
    n, p, q = design.n, design.p, design.q
    u = rng.uniform(size=(n, p))
    x = u / u.sum(axis=1, keepdims=True)
    x2 = rng.uniform(size=(n, q))
    eps = rng.normal(scale=design.noise_sd, size=n) if design.noise_sd > 0 else np.zeros(n)
    X1 = log_transform(x) @ helmert_projection(p).M1
    y = np.einsum("ij,ij->i", X1, design.beta_true) + x2 @ design.eta_true + eps
    return SimulatedDataset(x=x, x2=x2, y=y, design=design.name, replicate=int(replicate))


def _data_dir():
    return resources.files("gwpcr") / "data"


def _read_partition(path, column, graph):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or column not in rows[0]:
        raise ValueError(f"{path}: no column {column!r}")
    by_id = {r["id"].strip(): r[column].strip() for r in rows}
    missing = [u for u in graph.labels if u not in by_id]
    if missing:
        raise ValueError(f"{path}: no label for unit {missing[0]!r}")
    return canonical_labels([by_id[u] for u in graph.labels])


def _read_ids(path):
    with open(path, newline="") as fh:
        return [r["id"].strip() for r in csv.DictReader(fh)]


def quadrant_partition(rows, cols):
    r = np.arange(rows)[:, None] >= rows // 2
    c = np.arange(cols)[None, :] >= cols // 2
    return canonical_labels((2 * r + c).ravel())


def load_design(path):
    """Read a design JSON; file references resolve relative to the JSON."""
    path = Path(path)
    with open(path) as fh:
        cfg = json.load(fh)
    base = path.parent
    g = cfg["graph"]
    if "lattice" in g:
        rows, cols = g["lattice"]
        graph = lattice_graph(rows, cols)
    else:
        part_file = cfg["partition"].get("file")
        ids = _read_ids(base / part_file) if part_file else None
        graph = read_edge_csv(base / g["edges"], ids=ids)
    part = cfg["partition"]
    if part.get("quadrants"):
        rows, cols = cfg["graph"]["lattice"]
        partition = quadrant_partition(rows, cols)
    else:
        partition = _read_partition(base / part["file"], part["column"], graph)
    if "noise_sd" in cfg:
        sd = float(cfg["noise_sd"])
    else:
        sd = float(np.sqrt(cfg["sigma2"]))
    return SimulationDesign(name=cfg.get("name", path.stem), graph=graph, partition=partition,
                            beta_by_cluster=cfg["beta"], eta_true=cfg.get("eta", [1.0, 1.0]),
                            noise_sd=sd, p=int(cfg.get("p", 3)), q=int(cfg.get("q", 2)),
                            seed=int(cfg.get("seed", 0)),
                            reference_r=dict(cfg.get("reference_r", {})))


def lattice_design(rows=10, cols=10, seed=3001, noise_sd=np.sqrt(0.1)):
    """Quadrant partition of a rook lattice with four well-separated clusters."""
    beta = [[2, 2], [-2, 2], [-2, -2], [2, -2]]
    part = quadrant_partition(rows, cols)
    if part.K != 4:
        raise ValueError("lattice needs at least 2 rows and 2 columns")
    return SimulationDesign(name=f"lattice-{rows}x{cols}", graph=lattice_graph(rows, cols),
                            partition=part, beta_by_cluster=beta, eta_true=[1.0, 1.0],
                            noise_sd=float(noise_sd), seed=seed,
                            reference_r={"spatial-pairwise": 1.5, "spatial-adjacency": 1.5})


def builtin_designs():
    """Names of the bundled designs."""
    with resources.as_file(_data_dir() / "designs") as d:
        return sorted(p.stem for p in Path(d).glob("*.json"))


def get_design(name):
    """Bundled design by name, a ``lattice-RxC`` name, or a JSON path."""
    m = re.fullmatch(r"lattice-(\d+)x(\d+)", name)
    if m:
        return lattice_design(int(m.group(1)), int(m.group(2)))
    if name.endswith(".json") or Path(name).is_file():
        return load_design(name)
    if name not in builtin_designs():
        raise KeyError(f"unknown design {name!r}; available: {', '.join(builtin_designs())}")
    with resources.as_file(_data_dir() / "designs" / f"{name}.json") as p:
        return load_design(p)


def method_weights(graph, method, r=None, distances=None):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {list(METHODS)}")
    if distances is None:
        distances = all_pairs_distance(graph)
    scheme = METHODS[method]
    return spatial_weights(distances, scheme, r if scheme in ("exponential", "adjusted") else None)


@dataclass
class ReplicateOutcome:
    replicate: int
    ok: bool
    labels: np.ndarray | None = None
    K: int | None = None
    beta: np.ndarray | None = None
    eta: np.ndarray | None = None
    lam: float | None = None
    message: str = ""


def run_replicate(design, weights, replicate, config=None, grid_size=50):
    """Fit one replicate along a BIC-selected path; failures are returned, not raised."""
    data = generate(design, replicate)
    td = build_design(data.x, data.x2, data.y)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            path = solution_path(td, weights, config=config, grid_size=grid_size)
    except (PathError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        return ReplicateOutcome(replicate, False, message=str(exc))
    f = path.selected_fit
    labels = extract_clusters(f)
    return ReplicateOutcome(replicate, True, labels=labels.labels, K=labels.K,
                            beta=f.beta, eta=f.eta, lam=path.selected_lambda)


def summarize(design, method, r, outcomes):
    """Aggregate replicate outcomes into one metrics row."""
    ok = [o for o in outcomes if o.ok]
    row = {"design": design.name, "method": method, "r": "" if r is None else float(r),
           "R": len(outcomes), "n_ok": len(ok), "n_failed": len(outcomes) - len(ok)}
    if not ok:
        row["status"] = "failed"
        for c in METRIC_COLUMNS[7:]:
            row[c] = float("nan")
        return row
    row["status"] = "ok" if len(ok) == len(outcomes) else "partial"
    truth = design.partition
    beta = np.stack([o.beta for o in ok])
    eta = np.stack([o.eta for o in ok])
    row.update({
        "RI": float(np.mean([rand_index(truth, o.labels) for o in ok])),
        "CA": float(np.mean([clustering_accuracy(truth, o.labels) for o in ok])),
        "RCC": relative_cluster_count([o.K for o in ok], truth.K),
        "bias_beta": coefficient_bias(beta, design.beta_true),
        "mse_beta": coefficient_mse(beta, design.beta_true),
        "bias_eta": coefficient_bias(eta, design.eta_true),
        "mse_eta": coefficient_mse(eta, design.eta_true),
        "mse_full_beta": coefficient_mse_full(beta, design.beta_true),
        "mse_full_eta": coefficient_mse_full(eta, design.eta_true),
        "mean_K": float(np.mean([o.K for o in ok])),
    })
    return row


def _run_many(design, weights, replicates, config, grid_size, n_jobs):
    if n_jobs == 1:
        return [run_replicate(design, weights, k, config, grid_size) for k in replicates]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(
        delayed(run_replicate)(design, weights, k, config, grid_size) for k in replicates)


def run_comparison(design, methods, config=None, R=100, grid_size=50, n_jobs=1,
                   return_outcomes=False):
    """Replicated comparison of weighting methods on one design.

    Parameters
    ----------
    design : SimulationDesign
    methods : list of (method, r)
        Method names are keys of :data:`METHODS`; ``r`` is ignored by the
        constant and pure-adjacency methods.
    R : int
        Replicates, numbered ``0..R-1``; every method sees the same data.

    Returns
    -------
    list of dict
        One metrics row per method, plus per-replicate outcomes when
        ``return_outcomes`` is set.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    config = config or SolverConfig()
    dist = all_pairs_distance(design.graph)
    rows, outcomes = [], {}
    for method, r in methods:
        w = method_weights(design.graph, method, r, dist)
        r_used = r if METHODS[method] in ("exponential", "adjusted") else None
        out = _run_many(design, w, range(R), config, grid_size, n_jobs)
        rows.append(summarize(design, method, r_used, out))
        outcomes[(method, r_used)] = out
        log.info("%s %s r=%s: %d/%d replicates ok", design.name, method, r_used,
                 rows[-1]["n_ok"], R)
    return (rows, outcomes) if return_outcomes else rows


def sensitivity_sweep(design, rs, method="spatial-adjacency", config=None, R=100,
                      grid_size=50, n_jobs=1):
    """Selected cluster counts over a range of decay scales.

    Returns an (R, len(rs)) array; failed fits are marked with -1.
    """
    config = config or SolverConfig()
    dist = all_pairs_distance(design.graph)
    counts = np.full((R, len(rs)), -1, dtype=np.int64)
    for j, r in enumerate(rs):
        w = method_weights(design.graph, method, r, dist)
        for o in _run_many(design, w, range(R), config, grid_size, n_jobs):
            if o.ok:
                counts[o.replicate, j] = o.K
    return counts


def write_metrics_csv(rows, path):
    """Write metrics rows with fixed columns and round-trip float formatting."""
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([fmt(row[c]) for c in METRIC_COLUMNS])
