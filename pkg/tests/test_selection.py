import types
import warnings

import numpy as np
import pytest

from gwpcr.admm import FusionProblem, SolverConfig, fit
from gwpcr.clustering import canonical_labels, extract_clusters
from gwpcr.compositional import TransformedDesign, build_design
from gwpcr.graph import all_pairs_distance, lattice_graph, spatial_weights
from gwpcr.selection import (
    PathError,
    auto_lambda_max,
    bic_value,
    lambda_grid,
    modified_bic,
    r_sweep,
    solution_path,
)
from gwpcr.simulation import SimulationDesign, generate, get_design, method_weights

from conftest import separated_design

LATTICE_W = spatial_weights(all_pairs_distance(lattice_graph(2, 6)), "adjusted", 0.5)


# ------------------------------------------------------------------- grid

def test_lambda_grid_example():
    g = lambda_grid(0.01, 1.0, 3)
    np.testing.assert_allclose(g, [0.01, 0.1, 1.0], rtol=1e-12)
    assert g[0] == 0.01 and g[-1] == 1.0


@pytest.mark.parametrize("lo,hi,count", [(1.0, 1.0, 3), (0.0, 1.0, 3), (2.0, 1.0, 3),
                                         (0.1, 1.0, 1), (0.1, np.inf, 3)])
def test_lambda_grid_rejects_bad_ranges(lo, hi, count):
    with pytest.raises(ValueError):
        lambda_grid(lo, hi, count)


def test_lambda_grid_endpoints_exact():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lo = 10 ** rng.uniform(-5, 0)
        hi = lo * 10 ** rng.uniform(0.1, 5)
        g = lambda_grid(lo, hi, int(rng.integers(2, 80)))
        assert g[0] == lo and g[-1] == hi and np.all(np.diff(g) > 0)


# -------------------------------------------------------------------- BIC

def test_bic_example():
    # msr 1, n 4, p_eff 2, q 1, K 2: ln 9 * (ln 4 / 4) * 5
    assert bic_value(1.0, 4, 2, 1, 2) == pytest.approx(np.log(9) * np.log(4) / 4 * 5, rel=1e-14)
    assert bic_value(1.0, 4, 2, 1, 2) == pytest.approx(3.807, abs=1e-3)  # 3.8075...


def test_bic_doubling_residuals_adds_log4():
    rng = np.random.default_rng(1)
    for _ in range(20):
        msr = rng.uniform(0.01, 10)
        a, b = bic_value(msr, 30, 2, 2, 3), bic_value(4 * msr, 30, 2, 2, 3)
        assert b - a == pytest.approx(np.log(4), abs=1e-12)


def test_bic_zero_residual_is_minus_inf():
    with pytest.warns(UserWarning):
        assert bic_value(0.0, 10, 2, 1, 1) == -np.inf


def _classical_bic(resid, n_params):
    # plain BIC per observation, coded from scratch
    n = len(resid)
    rss = 0.0
    for e in resid:
        rss += e * e
    return np.log(rss / n) + n_params * np.log(n) / n


def test_bic_cn_one_matches_classical():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n, d, q, K = int(rng.integers(5, 40)), int(rng.integers(1, 4)), int(rng.integers(0, 3)), 0
        X1, X2 = rng.normal(size=(n, d)), rng.normal(size=(n, q))
        beta, eta = rng.normal(size=(n, d)), rng.normal(size=q)
        y = rng.normal(size=n)
        K = int(rng.integers(1, n + 1))
        fake = types.SimpleNamespace(beta=beta, eta=eta)
        got = modified_bic(fake, TransformedDesign(X1, X2, y), cluster_count=K, cn=1.0)
        resid = [y[i] - X1[i] @ beta[i] - X2[i] @ eta for i in range(n)]
        assert got == pytest.approx(_classical_bic(resid, K * d + q), abs=1e-12)


def test_bic_raw_p_switch_counts_one_more_per_cluster():
    rng = np.random.default_rng(3)
    n, d, q = 20, 2, 1
    des = TransformedDesign(rng.normal(size=(n, d)), rng.normal(size=(n, q)), rng.normal(size=n))
    fake = types.SimpleNamespace(beta=np.zeros((n, d)), eta=np.zeros(q))
    a = modified_bic(fake, des, cluster_count=3)
    b = modified_bic(fake, des, cluster_count=3, count_raw_p=True)
    msr = np.mean(des.y ** 2)
    assert a == pytest.approx(np.log(msr) + np.log(n * d + q) * np.log(n) / n * (3 * d + q))
    assert b == pytest.approx(np.log(msr) + np.log(n * (d + 1) + q) * np.log(n) / n
                              * (3 * (d + 1) + q))


def test_bic_invariant_to_unit_reordering():
    d, _ = separated_design(seed=0)
    res = fit(d, LATTICE_W, SolverConfig(lam=0.3))
    perm = np.random.default_rng(4).permutation(d.n)
    dp = TransformedDesign(d.X1[perm], d.X2[perm], d.y[perm])
    fp = types.SimpleNamespace(beta=res.beta[perm], eta=res.eta)
    K = extract_clusters(res).K
    assert modified_bic(fp, dp, K) == pytest.approx(modified_bic(res, d, K), abs=1e-12)


def test_path_bic_invariant_to_unit_reordering():
    d, _ = separated_design(seed=0)
    perm = np.random.default_rng(4).permutation(d.n)
    dp = TransformedDesign(d.X1[perm], d.X2[perm], d.y[perm])
    wp = LATTICE_W.w[np.ix_(perm, perm)]
    grid = lambda_grid(0.01, 5.0, 12)
    a = solution_path(d, LATTICE_W, grid)
    b = solution_path(dp, wp, grid)
    np.testing.assert_allclose(a.bic, b.bic, atol=1e-6)
    assert a.selected == b.selected


# ----------------------------------------------------------- lambda_max

def test_auto_lambda_max_identical_coefficients():
    rng = np.random.default_rng(5)
    n = 12
    X1, X2 = rng.normal(size=(n, 2)), rng.normal(size=(n, 1))
    y = X1 @ np.array([1.0, -0.5]) + X2[:, 0] + 1e-3 * rng.normal(size=n)
    des = TransformedDesign(X1 - X1.mean(0), X2 - X2.mean(0), y - y.mean())
    assert auto_lambda_max(des, None) == 0.1


@pytest.mark.parametrize("weights", [LATTICE_W, None], ids=["lattice", "constant"])
def test_auto_lambda_max_refit_contract(weights):
    # refitting at the returned value fuses; one doubling step lower does not
    for seed in range(10):
        d, _ = separated_design(seed=seed)
        lm = auto_lambda_max(d, weights)
        assert extract_clusters(fit(d, weights, SolverConfig(lam=lm))).K == 1
        assert lm > 0.1
        assert extract_clusters(fit(d, weights, SolverConfig(lam=lm / 2))).K > 1


def test_auto_lambda_max_cap_warns():
    d, _ = separated_design(seed=0)
    with pytest.warns(UserWarning):
        assert auto_lambda_max(d, LATTICE_W, doublings=1, start=1e-4) == pytest.approx(2e-4)


# ------------------------------------------------------------------- path

def test_single_value_grid_selects_it(two_cluster_design):
    d, _ = two_cluster_design
    p = solution_path(d, LATTICE_W, [0.5])
    assert p.selected == 0 and p.selected_lambda == 0.5


def test_ties_go_to_smaller_lambda(two_cluster_design):
    # far past full fusion every level returns the same pooled fit
    d, _ = two_cluster_design
    p = solution_path(d, LATTICE_W, [1e3, 1e4, 1e5])
    assert np.all(p.K == 1)
    assert p.bic[0] == p.bic[1] == p.bic[2]
    assert p.selected == 0


def test_selected_attains_minimum_and_beats_full_fusion(two_cluster_design):
    d, _ = two_cluster_design
    p = solution_path(d, LATTICE_W)
    assert p.bic[p.selected] == np.min(p.bic)
    assert p.K[-1] == 1 and p.bic[-1] >= p.bic[p.selected]
    assert np.all(np.diff(p.grid) > 0) and len(p.grid) == 50
    assert p.grid[0] == pytest.approx(p.grid[-1] / 1000)


def test_nonconverged_fits_are_excluded(two_cluster_design):
    d, _ = two_cluster_design
    p = solution_path(d, LATTICE_W, [0.001, 0.01, 0.5, 5.0, 50.0],
                      config=SolverConfig(max_iter=50))
    assert not all(f.converged for f in p.fits)
    for f, b in zip(p.fits, p.bic):
        assert np.isinf(b) == (not f.converged)
    assert p.fits[p.selected].converged


def test_all_nonconverged_raises(two_cluster_design):
    d, _ = two_cluster_design
    with pytest.raises(PathError):
        solution_path(d, LATTICE_W, [0.1, 1.0], config=SolverConfig(max_iter=1))


@pytest.mark.parametrize("grid", [[1.0, 0.5], [0.5, 0.5], [], [-1.0, 1.0]])
def test_bad_grid_rejected(two_cluster_design, grid):
    d, _ = two_cluster_design
    with pytest.raises(ValueError):
        solution_path(d, LATTICE_W, grid)


def test_path_table(tmp_path, two_cluster_design):
    d, _ = two_cluster_design
    p = solution_path(d, LATTICE_W, [0.1, 1.0, 10.0])
    rows = list(p.rows())
    assert [set(r) for r in rows] == [{"lambda", "bic", "K", "converged", "iterations",
                                       "objective"}] * 3
    p.write_csv(tmp_path / "path.csv")
    lines = (tmp_path / "path.csv").read_text().splitlines()
    assert lines[0] == "lambda,bic,K,converged,iterations,objective,selected"
    assert len(lines) == 4
    assert sum(int(line.rsplit(",", 1)[1]) for line in lines[1:]) == 1


def test_r_sweep_reports_each_scale(two_cluster_design):
    d, _ = two_cluster_design
    dist = all_pairs_distance(lattice_graph(2, 6))
    out = r_sweep(d, dist, [0.5, 1.5], grid_size=10)
    assert [o["r"] for o in out] == [0.5, 1.5]
    for o in out:
        assert o["bic"] == o["path"].bic[o["path"].selected] and o["K"] >= 1


def test_two_cluster_data_selects_two_in_majority():
    # left and right halves of a 6 x 10 lattice carry opposite coefficients
    g = lattice_graph(6, 10)
    part = canonical_labels((np.arange(60) % 10 >= 5).astype(int))
    des = SimulationDesign("halves", g, part, [[2, 2], [-2, -2]], [1, 1], np.sqrt(0.1), seed=11)
    w = spatial_weights(all_pairs_distance(g), "adjusted", 1.0)
    hits = 0
    for rep in range(100):
        dat = generate(des, rep)
        p = solution_path(build_design(dat.x, dat.x2, dat.y), w)
        hits += int(p.K[p.selected] == 2)
    assert hits > 50


def test_parallel_mode_matches_sequential_bic():
    # acceptance instance: state design 1, spatial-adjacency, r = 0.8
    design = get_design("state-1")
    w = method_weights(design.graph, "spatial-adjacency", 0.8)
    dat = generate(design, 0)
    td = build_design(dat.x, dat.x2, dat.y)
    seq = solution_path(td, w)
    par = solution_path(td, w, grid=seq.grid, warm_start=False)
    both = np.isfinite(seq.bic) & np.isfinite(par.bic)
    assert both.any()
    np.testing.assert_allclose(par.bic[both], seq.bic[both], rtol=0, atol=1e-3)
