"""Log-contrast preprocessing for compositional predictors.

Compositions are mapped to log space, projected to an unconstrained
(p - 1)-dimensional space with a Helmert sub-matrix, and centered. Estimated
coefficients are mapped back to sum-to-zero compositional coefficients with
the inverse map ``M1``.

Helmert convention used throughout: row ``k`` (1-based) of ``H`` is
``(1, ..., 1, -k, 0, ..., 0) / sqrt(k (k + 1))`` with ``k`` leading ones.
Individual entries of the projected coefficients depend on this choice;
recovered compositional coefficients and fitted values do not.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HelmertProjection",
    "TransformedDesign",
    "check_composition",
    "log_transform",
    "helmert_projection",
    "build_design",
    "recover_compositional_coefficients",
]


@dataclass(frozen=True)
class HelmertProjection:
    """Projection ``H`` ((p-1) x p) and inverse map ``M1`` (p x (p-1))."""

    H: np.ndarray
    M1: np.ndarray

    @property
    def p(self) -> int:
        return self.H.shape[1]


@dataclass
class TransformedDesign:
    """Centered regression inputs for the fusion model.

    Parameters
    ----------
    X1 : ndarray, shape (n, d)
        Transformed compositional design, ``d = p - 1``.
    X2 : ndarray, shape (n, q)
        Non-compositional covariates; ``q`` may be zero.
    y : ndarray, shape (n,)
        Response.
    centering : dict
        Column means removed from ``Z @ M1``, ``X2`` and ``y``.
    proj : HelmertProjection or None
        Projection used to build ``X1``; needed to recover compositional
        coefficients.
    obs_weights : ndarray or None
        Optional per-unit multipliers on the squared-error loss.
    """

    X1: np.ndarray
    X2: np.ndarray
    y: np.ndarray
    centering: dict = field(default_factory=dict)
    proj: HelmertProjection | None = None
    obs_weights: np.ndarray | None = None

    def __post_init__(self):
        self.X1 = np.atleast_2d(np.asarray(self.X1, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        n = self.y.shape[0]
        if self.X1.shape[0] != n:
            raise ValueError(f"X1 has {self.X1.shape[0]} rows but y has {n} entries")
        if self.X2 is None:
            self.X2 = np.zeros((n, 0))
        self.X2 = np.asarray(self.X2, dtype=float).reshape(n, -1)
        if self.obs_weights is not None:
            w = np.asarray(self.obs_weights, dtype=float).reshape(-1)
            if w.shape[0] != n:
                raise ValueError("obs_weights length does not match n")
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError("obs_weights must be finite and strictly positive")
            self.obs_weights = w

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X1.shape[1]

    @property
    def q(self) -> int:
        return self.X2.shape[1]

    def permuted(self, perm) -> "TransformedDesign":
        perm = np.asarray(perm)
        w = None if self.obs_weights is None else self.obs_weights[perm]
        return TransformedDesign(self.X1[perm], self.X2[perm], self.y[perm],
                                 dict(self.centering), self.proj, w)


def check_composition(x, atol=1e-9):
    """Validate a compositional matrix and return it as a float array."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("compositions need at least two components")
    if not np.all(np.isfinite(x)):
        raise ValueError("compositions must be finite")
    if np.any(x < 0):
        raise ValueError("compositions must be nonnegative")
    sums = x.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size:
        raise ValueError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    return x


def log_transform(x):
    """Elementwise log of a composition with zero replacement.

    Zero cells are replaced by half the smallest strictly positive entry of
    the whole matrix before taking logs; positive cells are untouched.
    """
    x = check_composition(x)
    empty = np.flatnonzero(~np.any(x > 0, axis=1))
    if empty.size:
        raise ValueError(f"row {empty[0]} has no positive entry")
    z = x.copy()
    zero = z == 0
    if zero.any():
        z[zero] = z[~zero].min() / 2.0
    return np.log(z)


def helmert_projection(p):
    """Helmert sub-matrix without its first row, and its inverse map.

    >>> proj = helmert_projection(3)
    >>> np.round(proj.H * np.sqrt(6), 6)
    array([[ 1.732051, -1.732051,  0.      ],
           [ 1.      ,  1.      , -2.      ]])
    """
    p = int(p)
    if p < 2:
        raise ValueError("p must be at least 2")
    H = np.zeros((p - 1, p))
    for k in range(1, p):
        H[k - 1, :k] = 1.0
        H[k - 1, k] = -float(k)
        H[k - 1] /= np.sqrt(k * (k + 1.0))
    # rows are orthonormal and orthogonal to 1, so H = I @ H is already a
    # full-rank decomposition and the inverse map reduces to H^T
    return HelmertProjection(H=H, M1=H.T.copy())


def _center(a):
    mean = a.mean(axis=0)
    return a - mean, mean


def build_design(x, x2, y, obs_weights=None, drop_degenerate=False):
    """Log-transform, project and center the regression inputs.

    Parameters
    ----------
    x : array_like, shape (n, p)
        Compositional predictors.
    x2 : array_like, shape (n, q) or None
        Non-compositional predictors.
    y : array_like, shape (n,)
        Response.
    obs_weights : array_like, optional
        Per-unit loss multipliers.
    drop_degenerate : bool
        Non-compositional columns that are constant are an error by default.
        When True they are dropped with a warning and their indices recorded
        in ``centering["dropped_x2"]``.

    Returns
    -------
    TransformedDesign
    """
    x = check_composition(x)
    n, p = x.shape
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries, compositions have {n} rows")
    if x2 is None:
        x2 = np.zeros((n, 0))
    x2 = np.asarray(x2, dtype=float)
    if x2.ndim == 1:
        x2 = x2[:, None]
    if x2.shape[0] != n:
        raise ValueError(f"x2 has {x2.shape[0]} rows, compositions have {n} rows")

    proj = helmert_projection(p)
    X1, x1_mean = _center(log_transform(x) @ proj.M1)
    X2, x2_mean = _center(x2)
    yc, y_mean = _center(y)

    scale = np.maximum(np.abs(x2).max(axis=0, initial=0.0), 1.0) if x2.size else np.ones(0)
    degenerate = np.flatnonzero(np.all(np.abs(X2) <= 1e-12 * scale, axis=0)) if x2.size else []
    dropped = []
    if len(degenerate):
        if not drop_degenerate:
            raise ValueError(f"covariate column(s) {list(degenerate)} are constant after centering")
        warnings.warn(f"dropping constant covariate column(s) {list(degenerate)}")
        dropped = [int(j) for j in degenerate]
        keep = np.setdiff1d(np.arange(X2.shape[1]), degenerate)
        X2, x2_mean = X2[:, keep], x2_mean[keep]
    if np.any(np.all(X1 == 0, axis=0)):
        warnings.warn("compositional design has a zero column after centering")

    centering = {"x1": x1_mean, "x2": x2_mean, "y": float(y_mean), "dropped_x2": dropped}
    return TransformedDesign(X1, X2, yc, centering, proj, obs_weights)


def recover_compositional_coefficients(beta, proj):
    """Map projected coefficients back to sum-to-zero compositional ones.

    Accepts a single (p-1)-vector or an (n, p-1) matrix of per-unit rows.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != proj.M1.shape[1]:
        raise ValueError(f"expected trailing dimension {proj.M1.shape[1]}, got {beta.shape[-1]}")
    return beta @ proj.M1.T
