"""Areal adjacency graphs, hop distances and pairwise fusion weights."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UNREACHABLE",
    "SCHEMES",
    "SpatialGraph",
    "WeightMatrix",
    "graph_from_edge_list",
    "graph_from_centroids",
    "lattice_graph",
    "all_pairs_distance",
    "spatial_weights",
    "read_edge_csv",
    "read_centroid_csv",
]

#: Sentinel stored in distance matrices for pairs with no connecting path.
UNREACHABLE = -1

SCHEMES = ("constant", "adjacency", "exponential", "adjusted")


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected simple graph over ``n`` areal units.

    ``edges`` is an (m, 2) integer array of pairs with ``i < j``, sorted
    lexicographically and free of duplicates.
    """

    n: int
    edges: np.ndarray
    labels: tuple

    def __post_init__(self):
        if len(self.labels) != self.n:
            raise ValueError("need one label per vertex")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self):
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(int(j))
            adj[j].append(int(i))
        return adj

    def degree(self):
        return np.bincount(self.edges.ravel(), minlength=self.n)


@dataclass(frozen=True)
class WeightMatrix:
    w: np.ndarray
    scheme: str
    r: float | None = None

    def pair_weights(self, i, j):
        return self.w[i, j]


def graph_from_edge_list(n, pairs, labels=None):
    """Build a graph from index pairs; duplicates collapse, loops are rejected."""
    n = int(n)
    if n < 1:
        raise ValueError("graph needs at least one vertex")
    seen = set()
    for a, b in pairs:
        a, b = int(a), int(b)
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"edge ({a}, {b}) has an index outside [0, {n})")
        if a == b:
            raise ValueError(f"self-loop at vertex {a}")
        seen.add((min(a, b), max(a, b)))
    edges = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)
    if labels is None:
        labels = tuple(str(k) for k in range(n))
    return SpatialGraph(n=n, edges=edges, labels=tuple(str(s) for s in labels))


def graph_from_centroids(points, threshold, labels=None):
    """Connect units whose centroids lie within ``threshold`` (Euclidean)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two centroids")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    i, j = np.nonzero(np.triu(dist <= threshold, k=1))
    return graph_from_edge_list(len(pts), zip(i, j), labels)


def lattice_graph(rows, cols):
    """Rook-adjacency grid; vertex ``r * cols + c`` sits at row r, column c."""
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1:
        raise ValueError("lattice dimensions must be positive")
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    labels = [f"r{r}c{c}" for r in range(rows) for c in range(cols)]
    return graph_from_edge_list(rows * cols, np.vstack([horiz, vert]), labels)


def all_pairs_distance(g):
    """Hop counts between all vertex pairs by breadth-first search.

    Unreachable pairs hold :data:`UNREACHABLE`.
    """
    adj = g.neighbors()
    d = np.full((g.n, g.n), UNREACHABLE, dtype=np.int64)
    for s in range(g.n):
        row = d[s]
        row[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            du = row[u] + 1
            for v in adj[u]:
                if row[v] == UNREACHABLE:
                    row[v] = du
                    queue.append(v)
    return d


def spatial_weights(d, scheme="adjusted", r=None, floor=None):
    """Pairwise fusion weights from a hop-distance matrix.

    Parameters
    ----------
    d : ndarray, shape (n, n)
        Hop distances with :data:`UNREACHABLE` for disconnected pairs.
    scheme : {"constant", "adjacency", "exponential", "adjusted"}
        ``constant`` puts weight one on every pair; ``adjacency`` keeps only
        graph neighbours; ``exponential`` uses ``exp(-d / r)``; ``adjusted``
        is the exponential scheme with neighbours raised to weight one.
    r : float
        Decay scale, required for the two decaying schemes.
    floor : float, optional
        Zero out weights strictly below this value.

    Returns
    -------
    WeightMatrix
    """
    d = np.asarray(d)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    reach = d != UNREACHABLE
    if scheme == "constant":
        w = np.ones(d.shape)
    elif scheme == "adjacency":
        w = (d == 1).astype(float)
    else:
        if r is None or not np.isfinite(r) or r <= 0:
            raise ValueError(f"scheme {scheme!r} needs a positive finite r")
        w = np.where(reach, np.exp(-np.where(reach, d, 0) / float(r)), 0.0)
        if scheme == "adjusted":
            w[d == 1] = 1.0
    np.fill_diagonal(w, 0.0)
    if floor is not None:
        w[w < floor] = 0.0
    return WeightMatrix(w=w, scheme=scheme, r=None if scheme in ("constant", "adjacency") else float(r))


def _index_ids(ids):
    order = {}
    for s in ids:
        order.setdefault(s, len(order))
    return order


def read_edge_csv(path, ids=None):
    """Read a two-column edge list of unit identifiers.

    A header row is skipped when its first field is not a known identifier.
    If ``ids`` is given it fixes the vertex order (e.g. the data file's row
    order) and unknown identifiers are an error; otherwise identifiers are
    indexed in order of first appearance.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) < 2:
                raise ValueError(f"{path}:{lineno}: expected two identifiers")
            rows.append((lineno, rec[0].strip(), rec[1].strip()))
    if rows and rows[0][1].lower() in {"from", "source", "id1", "a", "i", "u"}:
        rows = rows[1:]
    if ids is None:
        index = _index_ids([s for _, a, b in rows for s in (a, b)])
    else:
        index = _index_ids([str(s) for s in ids])
    pairs = []
    for lineno, a, b in rows:
        for s in (a, b):
            if s not in index:
                raise ValueError(f"{path}:{lineno}: unknown unit {s!r}")
        pairs.append((index[a], index[b]))
    labels = list(index)
    return graph_from_edge_list(len(labels), pairs, labels)


def read_centroid_csv(path):
    """Read ``id, x, y`` rows; returns (labels, points)."""
    labels, pts = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec:
                continue
            try:
                xy = (float(rec[1]), float(rec[2]))
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: expected id, x, y")
            labels.append(rec[0].strip())
            pts.append(xy)
    if len(set(labels)) != len(labels):
        raise ValueError(f"{path}: duplicate unit identifiers")
    return labels, np.array(pts)
