"""Penalty-level selection along a warm-started lambda path."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .admm import FusionProblem, SolverConfig, fit
from .clustering import extract_clusters

__all__ = [
    "PathError",
    "PathResult",
    "lambda_grid",
    "auto_lambda_max",
    "bic_value",
    "modified_bic",
    "solution_path",
    "r_sweep",
]

log = logging.getLogger(__name__)

PATH_COLUMNS = ("lambda", "bic", "K", "converged", "iterations", "objective")


class PathError(RuntimeError):
    """Raised when no fit on a path converged."""


def lambda_grid(lambda_min, lambda_max, count):
    """``count`` log-spaced values from ``lambda_min`` to ``lambda_max`` inclusive."""
    if not (0 < lambda_min < lambda_max) or not np.isfinite(lambda_max):
        raise ValueError("need 0 < lambda_min < lambda_max")
    if int(count) < 2:
        raise ValueError("count must be at least 2")
    grid = np.geomspace(lambda_min, lambda_max, int(count))
    grid[0], grid[-1] = lambda_min, lambda_max
    return grid


def auto_lambda_max(design, weights, config=None, start=0.1, factor=2.0, doublings=15,
                    problem=None):
    """Smallest value on a doubling search whose fit is a single cluster.

    The search runs ``start * factor**k`` for ``k = 0..doublings``. A warm
    started chain locates the first fused value cheaply; independent (cold)
    fits then confirm it, doubling further if the cold fit still splits and
    stepping back while the cold fit one step lower also fuses. Refitting
    at the returned value therefore gives one cluster and refitting one
    step below does not, unless the returned value is ``start``. If no value
    fuses every unit the cap is returned with a warning.
    """
    config = config or SolverConfig()
    prob = problem if problem is not None else FusionProblem(design, weights)

    def fused(lam, init=None):
        return extract_clusters(fit(design, weights, config.with_lambda(lam), init=init,
                                    problem=prob)).K == 1

    prev = None
    lam = start
    for k in range(int(doublings) + 1):
        res = fit(design, weights, config.with_lambda(lam), init=prev, problem=prob)
        if extract_clusters(res).K == 1 and (prev is None or fused(lam)):
            while k > 0 and fused(lam / factor):
                lam /= factor
                k -= 1
            return float(start * factor ** k)
        prev = res
        lam *= factor
    cap = start * factor ** int(doublings)
    warnings.warn(f"no penalty up to {cap:g} fused all units; using the cap")
    return float(cap)


def bic_value(msr, n, p_eff, q, K, cn=None):
    """Modified BIC from the mean squared residual.

    ``cn`` defaults to ``log(n * p_eff + q)``; ``cn = 1`` gives the classical
    form.
    """
    if cn is None:
        cn = np.log(n * p_eff + q)
    if msr <= 0:
        warnings.warn("zero residual sum of squares; BIC is -inf")
        return -np.inf
    return float(np.log(msr) + cn * np.log(n) / n * (K * p_eff + q))


def modified_bic(fit_result, design, cluster_count=None, cn=None, count_raw_p=False):
    """BIC of a fit; ``cluster_count`` defaults to the fused-pair clusters.

    Each cluster contributes the dimension of its coefficient vector,
    ``p - 1`` by default or ``p`` with ``count_raw_p``.
    """
    n, d, q = design.n, design.d, design.q
    K = extract_clusters(fit_result).K if cluster_count is None else int(cluster_count)
    r = design.y - np.einsum("ij,ij->i", design.X1, fit_result.beta) - design.X2 @ fit_result.eta
    w = np.ones(n) if design.obs_weights is None else design.obs_weights / design.obs_weights.mean()
    msr = float(np.sum(w * r * r) / n)
    return bic_value(msr, n, d + 1 if count_raw_p else d, q, K, cn)


@dataclass
class PathResult:
    grid: np.ndarray
    fits: list
    bic: np.ndarray
    K: np.ndarray
    selected: int

    @property
    def selected_fit(self):
        return self.fits[self.selected]

    @property
    def selected_lambda(self) -> float:
        return float(self.grid[self.selected])

    def rows(self):
        for lam, f, b, k in zip(self.grid, self.fits, self.bic, self.K):
            yield {"lambda": float(lam), "bic": float(b), "K": int(k),
                   "converged": bool(f.converged), "iterations": int(f.iterations),
                   "objective": float(f.objective)}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PATH_COLUMNS + ("selected",))
            for k, row in enumerate(self.rows()):
                writer.writerow([repr(row["lambda"]), repr(row["bic"]), row["K"],
                                 int(row["converged"]), row["iterations"],
                                 repr(row["objective"]), int(k == self.selected)])


def _cold_fit(design, weights, config, lam):
    return fit(design, weights, config.with_lambda(lam))


def solution_path(design, weights, grid=None, config=None, warm_start=True, n_jobs=1,
                  cn=None, count_raw_p=False, grid_size=50, problem=None):
    """Fit every penalty level and pick the BIC minimiser.

    Parameters
    ----------
    grid : array_like, optional
        Strictly increasing penalty levels. By default ``grid_size`` log-spaced
        values from ``lambda_max / 1000`` to an automatically searched
        ``lambda_max``.
    warm_start : bool
        Fit in increasing order, each level starting from the previous
        solution. With ``False`` every level is an independent cold fit
        (see :func:`gwpcr.admm.fit`) and the fits run through joblib with
        ``n_jobs`` workers. The objective is nonconvex, so the two modes can
        stop in different local minima and report different BIC values.

    Non-converged fits get ``bic = +inf`` and are never selected; ties go to
    the smaller penalty.
    """
    config = config or SolverConfig()
    prob = problem if problem is not None else FusionProblem(design, weights)
    if grid is None:
        lmax = auto_lambda_max(design, weights, config, problem=prob)
        grid = lambda_grid(lmax / 1000.0, lmax, grid_size)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty, nonnegative and strictly increasing")

    if warm_start:
        fits, prev = [], None
        for lam in grid:
            prev = fit(design, weights, config.with_lambda(lam), init=prev, problem=prob)
            fits.append(prev)
    else:
        from joblib import Parallel, delayed

        fits = Parallel(n_jobs=n_jobs)(
            delayed(_cold_fit)(design, weights, config, lam) for lam in grid)

    K = np.array([extract_clusters(f).K for f in fits])
    bic = np.array([modified_bic(f, design, k, cn=cn, count_raw_p=count_raw_p) if f.converged
                    else np.inf for f, k in zip(fits, K)])
    if not any(f.converged for f in fits):
        raise PathError(f"none of the {len(grid)} fits converged")
    selected = int(np.argmin(bic))
    log.debug("path: selected lambda=%g K=%d bic=%g", grid[selected], K[selected], bic[selected])
    return PathResult(grid=grid, fits=fits, bic=bic, K=K, selected=selected)


def r_sweep(design, distances, rs, scheme="adjusted", config=None, **path_kw):
    """Minimum BIC over the lambda path for each decay scale in ``rs``."""
    from .graph import spatial_weights

    out = []
    for r in rs:
        w = spatial_weights(distances, scheme, r)
        path = solution_path(design, w, config=config, **path_kw)
        out.append({"r": float(r), "bic": float(path.bic[path.selected]),
                    "lambda": path.selected_lambda, "K": int(path.K[path.selected]),
                    "path": path})
    return out
