import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from gwpcr.graph import (
    UNREACHABLE,
    all_pairs_distance,
    graph_from_centroids,
    graph_from_edge_list,
    lattice_graph,
    read_centroid_csv,
    read_edge_csv,
    spatial_weights,
)
from gwpcr.simulation import _data_dir


def edge_set(g):
    return {tuple(sorted(map(int, e))) for e in g.edges}


def test_edge_list_path_and_dedup():
    g = graph_from_edge_list(3, [(0, 1), (1, 2), (1, 0)])
    assert edge_set(g) == {(0, 1), (1, 2)}
    assert g.n_edges == 2


@pytest.mark.parametrize("pairs", [[(2, 2)], [(0, 3)], [(-1, 0)]])
def test_edge_list_rejects(pairs):
    with pytest.raises(ValueError):
        graph_from_edge_list(3, pairs)


def test_centroid_thresholds():
    pts = [(0, 0), (1, 0), (3, 0)]
    assert edge_set(graph_from_centroids(pts, 1.5)) == {(0, 1)}
    assert edge_set(graph_from_centroids(pts, 10)) == {(0, 1), (0, 2), (1, 2)}
    assert graph_from_centroids(pts, 0.5).n_edges == 0
    with pytest.raises(ValueError):
        graph_from_centroids([(0, 0)], 1.0)
    with pytest.raises(ValueError):
        graph_from_centroids(pts, 0.0)


def test_distance_examples():
    d = all_pairs_distance(graph_from_edge_list(3, [(0, 1), (1, 2)]))
    assert d[0, 2] == 2 and np.all(np.diag(d) == 0)
    cyc = all_pairs_distance(graph_from_edge_list(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))
    assert cyc[0, 2] == 2 and cyc[1, 3] == 2


def test_distance_unreachable_sentinel():
    d = all_pairs_distance(graph_from_edge_list(4, [(0, 1), (2, 3)]))
    assert d[0, 2] == UNREACHABLE and d[1, 0] == 1


@pytest.mark.parametrize("seed", range(5))
def test_bfs_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n = 40
    pairs = [tuple(rng.choice(n, 2, replace=False)) for _ in range(45)]
    g = graph_from_edge_list(n, pairs)
    d = all_pairs_distance(g)
    e = np.array(list(edge_set(g)))
    ref = shortest_path(coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)),
                        directed=False, unweighted=True)
    ref = np.where(np.isinf(ref), UNREACHABLE, ref).astype(int)
    np.testing.assert_array_equal(d, ref)
    assert np.array_equal(d == 1, np.isin(np.arange(n * n).reshape(n, n),
                                          [a * n + b for a, b in e] + [b * n + a for a, b in e]))


def test_weight_examples():
    d = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    w = spatial_weights(d, "exponential", 8).w
    assert w[0, 1] == pytest.approx(np.exp(-1 / 8)) and w[0, 1] == pytest.approx(0.8825, abs=1e-4)
    a = spatial_weights(d, "adjusted", 8).w
    assert a[0, 1] == 1.0 and a[0, 2] == pytest.approx(0.7788, abs=1e-4)
    np.testing.assert_array_equal(spatial_weights(d, "constant").w, 1 - np.eye(3))
    np.testing.assert_array_equal(spatial_weights(d, "adjacency").w, d == 1)
    big = spatial_weights(d, "exponential", 1e9).w
    np.testing.assert_allclose(big[~np.eye(3, dtype=bool)], 1, atol=1e-8)


def test_weights_unreachable():
    d = all_pairs_distance(graph_from_edge_list(3, [(0, 1)]))
    for scheme in ("adjacency", "exponential", "adjusted"):
        assert spatial_weights(d, scheme, 2.0).w[0, 2] == 0
    assert spatial_weights(d, "constant").w[0, 2] == 1


@pytest.mark.parametrize("r", [0, -1, np.nan])
def test_weights_reject_bad_r(r):
    with pytest.raises(ValueError):
        spatial_weights(np.array([[0, 1], [1, 0]]), "exponential", r)


def test_weight_properties():
    g = lattice_graph(5, 6)
    d = all_pairs_distance(g)
    rng = np.random.default_rng(0)
    perm = rng.permutation(g.n)
    gp = graph_from_edge_list(g.n, [(np.flatnonzero(perm == a)[0], np.flatnonzero(perm == b)[0])
                                    for a, b in g.edges])
    dp = all_pairs_distance(gp)
    np.testing.assert_array_equal(dp, d[np.ix_(perm, perm)])
    off = ~np.eye(g.n, dtype=bool)
    for scheme in ("constant", "adjacency", "exponential", "adjusted"):
        w = spatial_weights(d, scheme, 1.5).w
        assert np.allclose(w, w.T) and np.all(np.diag(w) == 0)
        assert w.min() >= 0 and w.max() <= 1
        order = np.argsort(d[off], kind="stable")
        assert np.all(np.diff(w[off][order]) <= 0)  # nonincreasing in d
        np.testing.assert_array_equal(spatial_weights(dp, scheme, 1.5).w, w[np.ix_(perm, perm)])
    e, a = spatial_weights(d, "exponential", 1.5).w, spatial_weights(d, "adjusted", 1.5).w
    assert np.all(a[d == 1] >= e[d == 1])
    np.testing.assert_array_equal(a[d > 1], e[d > 1])
    np.testing.assert_array_equal(a == 1, d == 1)


def test_lattice():
    assert lattice_graph(2, 2).n_edges == 4
    assert edge_set(lattice_graph(1, 3)) == {(0, 1), (1, 2)}
    assert lattice_graph(3, 3).degree()[4] == 4
    with pytest.raises(ValueError):
        lattice_graph(0, 3)


def test_edge_csv_reader(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("from,to\nA,B\nB,C\nC,B\n")
    g = read_edge_csv(p)
    assert g.labels == ("A", "B", "C") and g.n_edges == 2
    g2 = read_edge_csv(p, ids=["C", "B", "A", "D"])
    assert g2.labels == ("C", "B", "A", "D") and edge_set(g2) == {(0, 1), (1, 2)}
    with pytest.raises(ValueError):
        read_edge_csv(p, ids=["A", "B"])


def test_centroid_csv_reader(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("id,x,y\nu1,0,0\nu2,1,0\n")
    labels, pts = read_centroid_csv(p)
    assert labels == ["u1", "u2"] or tuple(labels) == ("u1", "u2")
    np.testing.assert_array_equal(pts, [[0, 0], [1, 0]])


def test_bundled_state_graph():
    g = read_edge_csv(_data_dir() / "state_edges.csv")
    assert g.n == 51
    idx = {u: k for k, u in enumerate(g.labels)}
    edges = edge_set(g)
    assert tuple(sorted((idx["HI"], idx["CA"]))) in edges
    assert tuple(sorted((idx["AK"], idx["WA"]))) in edges
    assert np.all(all_pairs_distance(g) >= 0)  # connected


def test_bundled_county_graph():
    g = read_edge_csv(_data_dir() / "county_edges.csv")
    assert g.n == 254
    assert np.all(all_pairs_distance(g) >= 0)
