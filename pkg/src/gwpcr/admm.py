"""ADMM for pairwise-fusion regression with a weighted MCP penalty.

The objective for per-unit coefficients ``beta`` (n x d) and shared
coefficients ``eta`` (q) is::

    1/2 sum_i w_i (y_i - x1_i . beta_i - x2_i . eta)^2
        + sum_{i<j} mcp(||beta_i - beta_j||; lam_ij, gamma)

where by default each pair carries its own level ``lam_ij = lam * omega_ij``
(``penalty_form="pair"``), so the threshold, the shrinkage and the plateau
all scale with the spatial weight. ``penalty_form="display"`` instead keeps a
common plateau at ``gamma * lam`` and multiplies the whole penalty by
``omega_ij``. The two agree when all weights are one.

Pair differences are split off as ``delta_ij = beta_i - beta_j`` and the
scaled augmented Lagrangian is minimised block-wise. ``eta`` is profiled out
of the ``beta`` step through the projection ``Q`` onto the orthogonal
complement of the covariates, so the ``beta`` step solves one fixed linear
system per fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import linalg, sparse
from scipy.sparse.csgraph import connected_components

from .graph import WeightMatrix

__all__ = [
    "PENALTY_FORMS",
    "SolverConfig",
    "SolverState",
    "FitResult",
    "FusionProblem",
    "mcp_penalty",
    "mcp_prox",
    "objective_value",
    "ridge_initialize",
    "update_beta",
    "update_eta",
    "update_delta",
    "update_dual",
    "fit",
]

PENALTY_FORMS = ("pair", "display")
#: Cold fits run the partition search only when ADMM ends with at most this
#: many clusters; each round refits every candidate partition.
LOCAL_SEARCH_MAX_K = 30
# swaps cost O(n^2) candidates per round, so they are tried on small problems only
SWAP_MAX_N = 40
# uphill steps followed by a descent when the plain descent stalls (small n)
LOOKAHEAD = 8
DUAL_SCALES = ("pairs", "plain")


@dataclass(frozen=True)
class SolverConfig:
    """Penalty level and ADMM controls.

    Parameters
    ----------
    lam, gamma : float
        MCP level and concavity. ``gamma * vartheta`` must exceed one so that
        the ``delta`` subproblem stays strongly convex.
    vartheta : float
        Augmented Lagrangian coefficient.
    tol_primal, tol_dual : float
        Stop once ``||A beta - delta|| <= tol_primal * sqrt(P d)`` and the
        dual residual ``vartheta ||A'(delta_new - delta)||`` is at most
        ``tol_dual * sqrt(n d)``, times ``n`` under ``dual_scale="pairs"``.
    dual_scale : {"pairs", "plain"}
        ``A'A`` has spectral norm ``n`` on the full pair set, so a per-unit
        step of size ``e`` in ``beta`` shows up as a dual residual of about
        ``vartheta * n * e``. ``"pairs"`` divides that factor out; ``"plain"``
        uses the unscaled bound.
    polish : bool
        Replace the ADMM coefficients by the cluster-wise least-squares refit
        when that is a local minimiser on the detected partition and does not
        raise the objective.
    local_search : bool
        After ADMM (and polishing), try merging pairs of linked clusters and
        moving single units to a linked cluster or a new singleton, scored
        by cluster-wise refits, and take the best change while any lowers
        the objective. Fits started without ``init`` additionally run ADMM
        from the pooled all-fused solution and keep the better of the two.
        Skipped when more than ``LOCAL_SEARCH_MAX_K`` clusters remain.
    """

    lam: float = 0.0
    gamma: float = 3.0
    vartheta: float = 1.0
    ridge_lambda0: float = 1e-3
    tol_primal: float = 1e-4
    tol_dual: float = 1e-4
    max_iter: int = 2000
    penalty_form: str = "pair"
    dual_scale: str = "pairs"
    polish: bool = True
    local_search: bool = True

    def __post_init__(self):
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError("lam must be finite and nonnegative")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.vartheta > 0:
            raise ValueError("vartheta must be positive")
        if not self.gamma * self.vartheta > 1:
            raise ValueError("gamma * vartheta must exceed 1")
        if self.ridge_lambda0 < 0:
            raise ValueError("ridge_lambda0 must be nonnegative")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        if self.penalty_form not in PENALTY_FORMS:
            raise ValueError(f"penalty_form must be one of {PENALTY_FORMS}")
        if self.dual_scale not in DUAL_SCALES:
            raise ValueError(f"dual_scale must be one of {DUAL_SCALES}")

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))


@dataclass
class SolverState:
    """ADMM iterate. Pair arrays follow ``np.triu_indices(n, 1)`` order."""

    beta: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    iteration: int = 0
    primal_history: list = field(default_factory=list)
    dual_history: list = field(default_factory=list)

    def copy(self):
        return SolverState(self.beta.copy(), self.eta.copy(), self.delta.copy(),
                           self.alpha.copy(), self.iteration,
                           list(self.primal_history), list(self.dual_history))


@dataclass
class FitResult:
    beta: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    pairs: np.ndarray
    fused: np.ndarray
    objective: float
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    lam: float
    config: SolverConfig | None = None
    polished: bool = False
    local_moves: int = 0

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def fused_pairs(self) -> np.ndarray:
        """(k, 2) array of unit pairs whose split difference is exactly zero."""
        return self.pairs[self.fused]

    def state(self) -> SolverState:
        return SolverState(self.beta.copy(), self.eta.copy(), self.delta.copy(),
                           self.alpha.copy(), self.iterations)


def mcp_penalty(t, lam, gamma, omega=1.0, form="display"):
    """Weighted minimax concave penalty, vectorised over ``t`` and ``omega``.

    With ``form="display"`` this is ``omega * (lam * t - t**2 / (2 * gamma))``
    up to ``t = gamma * lam`` and ``omega * gamma * lam**2 / 2`` beyond. With
    ``form="pair"`` the level is ``lam * omega`` throughout, giving
    ``lam_ij * t - t**2 / (2 * gamma)`` up to ``gamma * lam_ij``.

    >>> mcp_penalty(5.0, 1.0, 3.0)
    1.5
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("mcp_penalty is defined for nonnegative t")
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    omega = np.asarray(omega, dtype=float)
    if form == "display":
        inner = lam * t - t * t / (2.0 * gamma)
        out = omega * np.where(t <= gamma * lam, inner, 0.5 * gamma * lam * lam)
    elif form == "pair":
        lij = lam * omega
        out = np.where(t <= gamma * lij, lij * t - t * t / (2.0 * gamma), 0.5 * gamma * lij * lij)
    else:
        raise ValueError(f"form must be one of {PENALTY_FORMS}")
    return float(out) if out.ndim == 0 else out


def mcp_prox(zeta, lam, gamma, vartheta, omega, form="pair"):
    """Row-wise minimiser of ``vartheta/2 ||zeta - delta||^2 + mcp(||delta||)``.

    Rows with ``||zeta|| <= omega * lam / vartheta`` come back as exact zeros
    and rows on the flat part of the penalty are returned untouched.
    """
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    omega = np.broadcast_to(np.asarray(omega, dtype=float), zeta.shape[:1])
    norms = np.sqrt(np.einsum("ij,ij->i", zeta, zeta))
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.maximum(1.0 - (omega * lam / vartheta) / norms, 0.0)
    if form == "pair":
        shrink /= 1.0 - 1.0 / (gamma * vartheta)
        flat = norms > gamma * lam * omega
    else:
        shrink /= 1.0 - omega / (gamma * vartheta)
        flat = norms > gamma * lam
    scale = np.where(flat, 1.0, shrink)
    scale[norms == 0] = 0.0
    return zeta * scale[:, None]


def _pair_weights(weights, n):
    i, j = np.triu_indices(n, 1)
    if weights is None:
        return np.ones(len(i))
    w = weights.w if isinstance(weights, WeightMatrix) else np.asarray(weights, dtype=float)
    if w.shape != (n, n):
        raise ValueError(f"weight matrix has shape {w.shape}, expected {(n, n)}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    return w[i, j]


class FusionProblem:
    """Precomputed, iteration-invariant pieces of one design/weight pair.

    The ``beta`` system ``X1' Q X1 + c A'A`` is assembled from the identity
    ``D'D = n I - 11'`` (the pair operator ``A = D kron I`` is never formed)
    and factored once per coefficient ``c``; factors are cached so a whole
    lambda path reuses a single Cholesky factorisation.
    """

    def __init__(self, design, weights=None):
        X1, X2, y = design.X1, design.X2, design.y
        n, d = X1.shape
        q = X2.shape[1]
        if n < 2:
            raise ValueError("need at least two units")
        self.n, self.d, self.q = n, d, q
        self.design = design
        self.I, self.J = np.triu_indices(n, 1)
        self.omega = np.ascontiguousarray(_pair_weights(weights, n), dtype=float)

        ow = np.ones(n) if design.obs_weights is None else design.obs_weights
        self.obs_w = ow
        if q:
            wX2 = X2 * ow[:, None]
            gram = X2.T @ wX2
            if np.linalg.cond(gram) > 1e12:
                raise ValueError("covariate Gram matrix is singular (collinear covariates)")
            self._eta_factor = linalg.cho_factor(gram)
            self._wX2 = wX2
            Q = np.diag(ow) - wX2 @ linalg.cho_solve(self._eta_factor, wX2.T)
        else:
            self._eta_factor = None
            Q = np.diag(ow)
        xf = X1.ravel()
        self.XQX = np.kron(Q, np.ones((d, d))) * np.outer(xf, xf)
        self.XQy = ((Q @ y)[:, None] * X1).ravel()
        self.AtA = np.kron(n * np.eye(n) - np.ones((n, n)), np.eye(d))
        self._factors = {}
        self._inverses = {}

    @property
    def pairs(self):
        return np.column_stack([self.I, self.J])

    def factor(self, c):
        c = float(c)
        if c not in self._factors:
            try:
                self._factors[c] = linalg.cho_factor(self.XQX + c * self.AtA)
            except linalg.LinAlgError as exc:
                raise ValueError(f"beta system is singular at coefficient {c}") from exc
        return self._factors[c]

    def inverse(self, c):
        c = float(c)
        if c not in self._inverses:
            self._inverses[c] = linalg.cho_solve(self.factor(c), np.eye(self.n * self.d))
        return self._inverses[c]

    def diff(self, beta):
        return beta[self.I] - beta[self.J]

    def adjoint(self, v):
        """``A' v`` for pair-indexed rows ``v``; returns an (n, d) array."""
        out = np.empty((self.n, v.shape[1]))
        for k in range(v.shape[1]):
            out[:, k] = (np.bincount(self.I, v[:, k], self.n)
                         - np.bincount(self.J, v[:, k], self.n))
        return out

    def solve_beta(self, c, extra=None):
        rhs = self.XQy if extra is None else self.XQy + extra.ravel()
        return linalg.cho_solve(self.factor(c), rhs).reshape(self.n, self.d)

    def eta(self, beta):
        if not self.q:
            return np.zeros(0)
        resid = self.design.y - np.einsum("ij,ij->i", self.design.X1, beta)
        return linalg.cho_solve(self._eta_factor, self._wX2.T @ resid)

    def residuals(self, beta, eta):
        dz = self.design
        return dz.y - np.einsum("ij,ij->i", dz.X1, beta) - dz.X2 @ eta

    def refit(self, labels, K):
        """Least squares with one coefficient vector per cluster.

        Returns ``(beta, eta)`` or None when the restricted design is rank
        deficient (e.g. a singleton cluster with ``d > 1``).
        """
        dz = self.design
        n, d = self.n, self.d
        Z = np.zeros((n, K * d + self.q))
        for c in range(d):
            Z[np.arange(n), labels * d + c] = dz.X1[:, c]
        Z[:, K * d:] = dz.X2
        sw = np.sqrt(self.obs_w)
        coef, _, rank, sv = np.linalg.lstsq(Z * sw[:, None], dz.y * sw, rcond=None)
        if rank < Z.shape[1] or sv[-1] < 1e-10 * sv[0]:
            return None
        return coef[:K * d].reshape(K, d)[labels], coef[K * d:]

    def objective(self, beta, eta, lam, gamma, form="pair"):
        r = self.residuals(beta, eta)
        loss = 0.5 * float(np.sum(self.obs_w * r * r))
        if lam == 0:
            return loss
        t = np.linalg.norm(self.diff(beta), axis=1)
        return loss + float(np.sum(mcp_penalty(t, lam, gamma, self.omega, form)))


def objective_value(beta, eta, design, weights, config):
    """Penalised least-squares objective at ``(beta, eta)``."""
    beta = np.asarray(beta, dtype=float).reshape(design.n, design.d)
    eta = np.asarray(eta, dtype=float).reshape(design.q)
    r = design.y - np.einsum("ij,ij->i", design.X1, beta) - design.X2 @ eta
    ow = np.ones(design.n) if design.obs_weights is None else design.obs_weights
    i, j = np.triu_indices(design.n, 1)
    t = np.linalg.norm(beta[i] - beta[j], axis=1)
    pen = mcp_penalty(t, config.lam, config.gamma, _pair_weights(weights, design.n),
                      config.penalty_form)
    return 0.5 * float(np.sum(ow * r * r)) + float(np.sum(pen))


def ridge_initialize(design, lambda0=1e-3, problem=None):
    """Starting point from the ridge-fusion criterion.

    ``beta`` solves ``(X1'QX1 + lambda0 A'A) beta = X1'Qy``, ``eta`` is the
    least-squares fit of the remaining residual, ``delta`` the implied pair
    differences and the multipliers start at zero.
    """
    prob = problem if problem is not None else FusionProblem(design)
    beta = prob.solve_beta(lambda0)
    delta = prob.diff(beta)
    return SolverState(beta=beta, eta=prob.eta(beta), delta=delta, alpha=np.zeros_like(delta))


# Reference implementations of the four block updates. ``fit`` runs the same
# sweep inside a compiled loop; these exist for testing and step-by-step use.

def update_beta(state, design, config, problem=None):
    """Exact minimiser of the augmented Lagrangian in ``beta`` (eta profiled)."""
    prob = problem if problem is not None else FusionProblem(design)
    th = config.vartheta
    return prob.solve_beta(th, prob.adjoint(th * state.delta - state.alpha))


def update_eta(state, design, problem=None):
    """Least-squares covariate coefficients for the residual ``y - X1 beta``."""
    prob = problem if problem is not None else FusionProblem(design)
    return prob.eta(state.beta)


def update_delta(state, weights, config):
    """Group MCP thresholding of ``zeta = beta_i - beta_j + alpha_ij / vartheta``."""
    n = state.beta.shape[0]
    i, j = np.triu_indices(n, 1)
    zeta = state.beta[i] - state.beta[j] + state.alpha / config.vartheta
    return mcp_prox(zeta, config.lam, config.gamma, config.vartheta, _pair_weights(weights, n),
                    config.penalty_form)


def update_dual(state, config):
    """``alpha + vartheta * (beta_i - beta_j - delta_ij)`` for every pair."""
    n = state.beta.shape[0]
    i, j = np.triu_indices(n, 1)
    return state.alpha + config.vartheta * (state.beta[i] - state.beta[j] - state.delta)


@njit(cache=True)
def _admm_loop(minv, xqy, I, J, omega, beta, delta, u, lam, gamma, th,
               eps_pri, eps_dual, max_iter, pair_form):
    # in-place ADMM on (beta, delta, u = alpha / vartheta); returns diagnostics
    n, d = beta.shape
    npairs = I.shape[0]
    acc = np.zeros((n, d))
    dacc = np.zeros((n, d))
    rhs = np.empty(n * d)
    zeta = np.empty(d)
    inv_gt = 1.0 / (gamma * th)
    primal = np.inf
    dual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        acc[:, :] = 0.0
        for k in range(npairs):
            i = I[k]
            j = J[k]
            for c in range(d):
                t = delta[k, c] - u[k, c]
                acc[i, c] += t
                acc[j, c] -= t
        for a in range(n):
            for c in range(d):
                rhs[a * d + c] = xqy[a * d + c] + th * acc[a, c]
        b = minv @ rhs
        for a in range(n):
            for c in range(d):
                beta[a, c] = b[a * d + c]

        dacc[:, :] = 0.0
        p2 = 0.0
        for k in range(npairs):
            i = I[k]
            j = J[k]
            w = omega[k]
            zn2 = 0.0
            for c in range(d):
                zeta[c] = beta[i, c] - beta[j, c] + u[k, c]
                zn2 += zeta[c] * zeta[c]
            zn = np.sqrt(zn2)
            if pair_form:
                flat = gamma * lam * w
                denom = 1.0 - inv_gt
            else:
                flat = gamma * lam
                denom = 1.0 - w * inv_gt
            if zn > flat:
                scale = 1.0
            elif zn == 0.0:
                scale = 0.0
            else:
                scale = max(1.0 - (w * lam / th) / zn, 0.0) / denom
            for c in range(d):
                nd = zeta[c] * scale
                r = beta[i, c] - beta[j, c] - nd
                u[k, c] += r
                p2 += r * r
                dd = nd - delta[k, c]
                dacc[i, c] += dd
                dacc[j, c] -= dd
                delta[k, c] = nd
        primal = np.sqrt(p2)
        dual = th * np.sqrt(np.sum(dacc * dacc))
        if primal <= eps_pri and dual <= eps_dual:
            converged = True
            break
    return it, converged, primal, dual


def fit(design, weights, config, init=None, problem=None):
    """Run ADMM at a single penalty level.

    Parameters
    ----------
    design : TransformedDesign
    weights : WeightMatrix or ndarray or None
        Pair weights; None means constant weights.
    config : SolverConfig
    init : SolverState or FitResult, optional
        Warm start. Defaults to the ridge-fusion initial value.
    problem : FusionProblem, optional
        Reuse precomputed matrices (and cached factorisations) across fits.

    Returns
    -------
    FitResult
        Non-convergence is reported through ``converged`` rather than raised.
    """
    prob = problem if problem is not None else FusionProblem(design, weights)
    if init is None:
        state = ridge_initialize(design, config.ridge_lambda0, problem=prob)
    elif isinstance(init, FitResult):
        state = init.state()
    else:
        state = init.copy()
    search = config.local_search and prob.n > 2
    res = _run(prob, state, config, search)
    if search and init is None:
        # the ridge start nearly interpolates, which can leave units stranded
        # on the flat part of the penalty; the pooled start comes from the
        # other side and the lower objective wins
        pooled = prob.refit(np.zeros(prob.n, dtype=np.int64), 1)
        if pooled is not None:
            b0, e0 = pooled
            d0 = prob.diff(b0)
            alt = _run(prob, SolverState(b0, e0, d0, np.zeros_like(d0)), config, True)
            if alt.converged and (not res.converged or alt.objective < res.objective):
                res = alt
    return res


def _run(prob, state, config, search=False):
    th, lam, gamma = config.vartheta, config.lam, config.gamma
    n, d = prob.n, prob.d
    eps_pri = config.tol_primal * np.sqrt(len(prob.I) * d)
    eps_dual = config.tol_dual * np.sqrt(n * d) * (n if config.dual_scale == "pairs" else 1)
    beta = np.array(state.beta, dtype=float, order="C")
    delta = np.array(state.delta, dtype=float, order="C")
    u = np.array(state.alpha, dtype=float, order="C") / th
    form = config.penalty_form
    # eta is profiled out of the beta step, so it is recovered once at the end
    it, converged, primal, dual = _admm_loop(
        prob.inverse(th), prob.XQy, prob.I, prob.J, prob.omega, beta, delta, u,
        float(lam), float(gamma), float(th), float(eps_pri), float(eps_dual),
        int(config.max_iter), form == "pair")
    alpha = th * u

    eta = prob.eta(beta)
    fused = ~np.any(delta != 0, axis=1)
    obj = prob.objective(beta, eta, lam, gamma, form)
    polished = False
    moves = 0
    if config.polish and converged:
        out = _polish(prob, fused, lam, gamma, obj, form)
        if out is not None:
            beta, eta, obj = out
            polished = True
    if search and converged and lam > 0:
        out = _local_search(prob, fused, beta, eta, obj, lam, gamma, form)
        if out is not None:
            beta, eta, obj, moves = out
            delta = prob.diff(beta)
            fused = ~np.any(delta != 0, axis=1)
            delta[fused] = 0.0
            alpha = np.zeros_like(delta)
            polished = True
    return FitResult(
        beta=beta, eta=eta, delta=delta, alpha=alpha, pairs=prob.pairs, fused=fused,
        objective=obj, converged=bool(converged), iterations=it,
        primal_residual=float(primal), dual_residual=float(dual), lam=lam, config=config,
        polished=polished, local_moves=moves,
    )


def _polish(prob, fused, lam, gamma, obj, form):
    # exact cluster-wise refit; kept only when every weighted cross-cluster
    # difference stays on the flat part of the penalty (so the refit is a
    # local minimiser restricted to the partition) and the objective drops
    g = sparse.coo_matrix((np.ones(fused.sum()), (prob.I[fused], prob.J[fused])),
                          shape=(prob.n, prob.n))
    K, labels = connected_components(g, directed=False)
    out = prob.refit(labels, K)
    if out is None:
        return None
    beta, eta = out
    cross = (labels[prob.I] != labels[prob.J]) & (prob.omega > 0)
    dist = np.linalg.norm(prob.diff(beta)[cross], axis=1)
    flat = gamma * lam * (prob.omega[cross] if form == "pair" else 1.0)
    if np.any(dist <= flat):
        return None
    new = prob.objective(beta, eta, lam, gamma, form)
    if new > obj:
        return None
    return beta, eta, new


@njit(cache=True)
def _partition_fit(labels, slots, X1, X2, y, wobs, cur, s2, S0, r0, I, J, omega, lam, gamma,
                   pair_form, beta_out, eta_out):
    # Cluster-wise least squares for ``labels`` (values < slots, empty slots
    # ignored) with a ridge of size s2 pulling each cluster toward the mean of
    # its members' current coefficients ``cur``; eta is eliminated through
    # the Schur complement. Fills beta_out / eta_out, returns the objective.
    n, d = X1.shape
    q = X2.shape[1]
    G = np.zeros((slots, d, d))
    h = np.zeros((slots, d))
    C = np.zeros((slots, d, q))
    cnt = np.zeros(slots)
    for i in range(n):
        k = labels[i]
        wi = wobs[i]
        cnt[k] += 1.0
        for a in range(d):
            h[k, a] += wi * X1[i, a] * y[i] + s2 * cur[i, a]
            for b in range(d):
                G[k, a, b] += wi * X1[i, a] * X1[i, b]
            for b in range(q):
                C[k, a, b] += wi * X1[i, a] * X2[i, b]
    S = S0.copy()
    r = r0.copy()
    Ginv = np.zeros((slots, d, d))
    for k in range(slots):
        if cnt[k] == 0:
            continue
        for a in range(d):
            G[k, a, a] += s2 * cnt[k]
        Ginv[k] = np.linalg.inv(G[k])
        if q:
            GC = Ginv[k] @ C[k]
            S -= C[k].T @ GC
            r -= GC.T @ h[k]
    if q:
        eta = np.linalg.solve(S, r)
    else:
        eta = np.zeros(0)
    for b in range(q):
        eta_out[b] = eta[b]
    for k in range(slots):
        if cnt[k] == 0:
            continue
        rhs = h[k].copy()
        if q:
            rhs -= C[k] @ eta
        bk = Ginv[k] @ rhs
        for a in range(d):
            beta_out[k, a] = bk[a]
    loss = 0.0
    for i in range(n):
        e = y[i]
        k = labels[i]
        for a in range(d):
            e -= X1[i, a] * beta_out[k, a]
        for b in range(q):
            e -= X2[i, b] * eta[b]
        loss += wobs[i] * e * e
    pen = 0.0
    for m in range(I.shape[0]):
        ka = labels[I[m]]
        kb = labels[J[m]]
        w = omega[m]
        if ka == kb or w == 0.0:
            continue
        t2 = 0.0
        for a in range(d):
            dd = beta_out[ka, a] - beta_out[kb, a]
            t2 += dd * dd
        t = np.sqrt(t2)
        lij = lam * w if pair_form else lam
        if t <= gamma * lij:
            v = lij * t - t * t / (2.0 * gamma)
        else:
            v = 0.5 * gamma * lij * lij
        pen += v if pair_form else w * v
    return 0.5 * loss + pen


@njit(cache=True)
def _chol(A, L):
    # in-place Cholesky of a small SPD matrix; False when a pivot is not positive
    m = A.shape[0]
    for j in range(m):
        acc = A[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if acc <= 0.0:
            return False
        L[j, j] = np.sqrt(acc)
        for i in range(j + 1, m):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    return True


@njit(cache=True)
def _chol_solve(L, b, x):
    m = L.shape[0]
    for i in range(m):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * x[k]
        x[i] = acc / L[i, i]
    for i in range(m - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, m):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]


@njit(cache=True)
def _cluster_quad(G, hy, hr, C, cnt, s2, b0, M, T, u, c1, c2):
    # For one cluster with ridge-anchored normal equations (G + s2 cnt) beta =
    # hr - C eta, write beta = b0 - M eta and its residual contribution
    # beta'G beta - 2 beta'hy + 2 beta'C eta as c0 + 2 c1'eta + eta'c2 eta.
    # T = C'M and u = C'b0 are its Schur pieces. Returns (ok, c0).
    d = G.shape[0]
    q = C.shape[1]
    b0[:] = 0.0
    M[:] = 0.0
    T[:] = 0.0
    u[:] = 0.0
    c1[:] = 0.0
    c2[:] = 0.0
    if cnt == 0:
        return True, 0.0
    A = G.copy()
    for a in range(d):
        A[a, a] += s2 * cnt
    L = np.zeros((d, d))
    if not _chol(A, L):
        return False, 0.0
    _chol_solve(L, hr, b0)
    col = np.empty(d)
    x = np.empty(d)
    for j in range(q):
        for a in range(d):
            col[a] = C[a, j]
        _chol_solve(L, col, x)
        for a in range(d):
            M[a, j] = x[a]
    Gb0 = np.zeros(d)
    for a in range(d):
        for b in range(d):
            Gb0[a] += G[a, b] * b0[b]
    c0 = 0.0
    for a in range(d):
        c0 += b0[a] * (Gb0[a] - 2.0 * hy[a])
    for i in range(q):
        acc_u = 0.0
        acc_c = 0.0
        for a in range(d):
            acc_u += C[a, i] * b0[a]
            acc_c += M[a, i] * (hy[a] - Gb0[a])
        u[i] = acc_u
        c1[i] = acc_c + acc_u
        for j in range(q):
            tij = 0.0
            mgm = 0.0
            for a in range(d):
                tij += C[a, i] * M[a, j]
                ga = 0.0
                for b in range(d):
                    ga += G[a, b] * M[b, j]
                mgm += M[a, i] * ga
            T[i, j] = tij
            c2[i, j] = mgm
    for i in range(q):
        for j in range(q):
            c2[i, j] -= T[i, j] + T[j, i]
    return True, c0


@njit(cache=True)
def _mcp_pair(t, w, lam, gamma, pair_form):
    lij = lam * w if pair_form else lam
    if t <= gamma * lij:
        v = lij * t - t * t / (2.0 * gamma)
    else:
        v = 0.5 * gamma * lij * lij
    return v if pair_form else w * v


@njit(cache=True)
def _group_penalty(t, lo, hi, ws, cw, cw2, lam, gamma, pair_form):
    # summed penalty of all pairs in one cluster pair at common distance t;
    # ws is sorted within [lo, hi) and cw, cw2 are prefix sums of w and w^2
    if lo == hi or t == 0.0:
        return 0.0
    if not pair_form:
        if t <= gamma * lam:
            v = lam * t - t * t / (2.0 * gamma)
        else:
            v = 0.5 * gamma * lam * lam
        return v * (cw[hi] - cw[lo])
    # pairs with w >= t / (gamma lam) are still on the concave part
    tau = t / (gamma * lam)
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if ws[mid] < tau:
            a = mid + 1
        else:
            b = mid
    return (lam * t * (cw[hi] - cw[a]) - t * t / (2.0 * gamma) * (hi - a)
            + 0.5 * gamma * lam * lam * (cw2[a] - cw2[lo]))


@njit(cache=True)
def _dist(beta, k, l):
    t2 = 0.0
    for a in range(beta.shape[1]):
        dd = beta[k, a] - beta[l, a]
        t2 += dd * dd
    return np.sqrt(t2)


@njit(cache=True)
def _partition_penalty(beta, K, glist, offs, ws, cw, cw2, lam, gamma, pair_form, labels, I, J,
                       omega, direct):
    # penalty of the cached partition at coefficients ``beta``; pair by pair
    # when that is cheaper than one lookup per linked cluster pair
    pen = 0.0
    if direct:
        for m in range(I.shape[0]):
            ka, kb = labels[I[m]], labels[J[m]]
            if ka != kb:
                pen += _mcp_pair(_dist(beta, ka, kb), omega[m], lam, gamma, pair_form)
        return pen
    for g in glist:
        k, l = g // K, g % K
        pen += _group_penalty(_dist(beta, k, l), offs[g], offs[g + 1], ws, cw, cw2, lam,
                              gamma, pair_form)
    return pen


@njit(cache=True)
def _search_round(labels, K, Gu, hu, Cu, cur, s2, yy, S0, r0, I, J, omega, nptr, nbr, nw,
                  lam, gamma, pair_form, target, swaps, collect, cv, ck, ca, cb):
    # scores every merge of two linked clusters and every move of one unit
    # to a linked cluster or a fresh singleton (or, with ``swaps``, only every
    # exchange of two units between linked clusters); returns the best
    # candidate below ``target`` as (value, kind, a, b) with kind 0 merge,
    # 1 move, 2 swap, -1 none. With ``collect`` nothing is pruned and every
    # candidate is also written to (cv, ck, ca, cb); the fifth return value
    # is how many were written.
    # ``I, J, omega`` hold the positive-weight pairs and ``nptr, nbr, nw`` the
    # same pairs as per-unit neighbour lists. Each candidate only refits the
    # two clusters it changes; the rest enter through cached quadratic forms.
    n, d = cur.shape
    q = Cu.shape[2]
    slots = K + 1
    ul = np.zeros((n, K), dtype=np.bool_)
    for i in range(n):
        for m in range(nptr[i], nptr[i + 1]):
            ul[i, labels[nbr[m]]] = True
    cl = np.zeros((K, K), dtype=np.bool_)
    size = np.zeros(K, dtype=np.int64)
    for i in range(n):
        size[labels[i]] += 1
        for c in range(K):
            if ul[i, c]:
                cl[labels[i], c] = True
    # cluster statistics and their quadratic forms; slot K stays empty
    Graw = np.zeros((slots, d, d))
    hy = np.zeros((slots, d))
    hr = np.zeros((slots, d))
    C = np.zeros((slots, d, q))
    cnt = np.zeros(slots)
    for i in range(n):
        k = labels[i]
        Graw[k] += Gu[i]
        hy[k] += hu[i]
        hr[k] += hu[i] + s2 * cur[i]
        C[k] += Cu[i]
        cnt[k] += 1.0
    b0 = np.zeros((slots, d))
    M = np.zeros((slots, d, q))
    T = np.zeros((slots, q, q))
    u = np.zeros((slots, q))
    c0 = np.zeros(slots)
    c1 = np.zeros((slots, q))
    c2 = np.zeros((slots, q, q))
    for k in range(K):
        ok, c0[k] = _cluster_quad(Graw[k], hy[k], hr[k], C[k], cnt[k], s2, b0[k], M[k], T[k],
                                  u[k], c1[k], c2[k])
        if not ok:
            return target, -1, -1, -1, 0
    Tsum, usum = T.sum(axis=0), u.sum(axis=0)
    c0sum, c1sum, c2sum = c0.sum(), c1.sum(axis=0), c2.sum(axis=0)
    # positive pairs grouped by the (unordered) cluster pair they join,
    # weights sorted within each group, with prefix sums for the penalty
    P = I.shape[0]
    key = np.empty(P, dtype=np.int64)
    for m in range(P):
        ka, kb = labels[I[m]], labels[J[m]]
        if ka > kb:
            ka, kb = kb, ka
        key[m] = ka * K + kb if ka != kb else K * K
    wmax = np.max(omega) if P > 0 else 0.0
    order = np.argsort(key * (wmax + 1.0) + omega)
    offs = np.zeros(K * K + 1, dtype=np.int64)
    for m in range(P):
        if key[m] < K * K:
            offs[key[m]] += 1
    ng = 0
    for g in range(K * K):
        if offs[g] > 0:
            ng += 1
    glist = np.empty(ng, dtype=np.int64)
    tot = 0
    ng = 0
    for g in range(K * K):
        c_ = offs[g]
        if c_ > 0:
            glist[ng] = g
            ng += 1
        offs[g] = tot
        tot += c_
    offs[K * K] = tot
    ws = np.empty(tot)
    for m in range(tot):
        ws[m] = omega[order[m]]
    cw = np.zeros(tot + 1)
    cw2 = np.zeros(tot + 1)
    for m in range(tot):
        cw[m + 1] = cw[m] + ws[m]
        cw2[m + 1] = cw2[m] + ws[m] * ws[m]
    direct = P <= 4 * ng
    # scratch for the two refitted slots
    aG = np.zeros((2, d, d))
    ahy = np.zeros((2, d))
    ahr = np.zeros((2, d))
    aC = np.zeros((2, d, q))
    acnt = np.zeros(2)
    nb0 = np.zeros((2, d))
    nM = np.zeros((2, d, q))
    nT = np.zeros((2, q, q))
    nu = np.zeros((2, q))
    nc0 = np.zeros(2)
    nc1 = np.zeros((2, q))
    nc2 = np.zeros((2, q, q))
    aff = np.zeros(2, dtype=np.int64)
    S = np.zeros((q, q))
    r = np.zeros(q)
    Ls = np.zeros((q, q))
    eta = np.zeros(q)
    beta = np.zeros((slots, d))
    best, kind, ba, bb = target, -1, -1, -1
    nc = 0
    if swaps:
        for i in range(n):
            A_ = labels[i]
            for j in range(i + 1, n):
                B_ = labels[j]
                if B_ == A_ or not ul[i, B_] or not ul[j, A_]:
                    continue
                aff[0], aff[1] = A_, B_
                aG[0] = Graw[A_] - Gu[i] + Gu[j]
                ahy[0] = hy[A_] - hu[i] + hu[j]
                ahr[0] = hr[A_] - hu[i] + hu[j] + s2 * (cur[j] - cur[i])
                aC[0] = C[A_] - Cu[i] + Cu[j]
                acnt[0] = cnt[A_]
                aG[1] = Graw[B_] - Gu[j] + Gu[i]
                ahy[1] = hy[B_] - hu[j] + hu[i]
                ahr[1] = hr[B_] - hu[j] + hu[i] + s2 * (cur[i] - cur[j])
                aC[1] = C[B_] - Cu[j] + Cu[i]
                acnt[1] = cnt[B_]
                v = _candidate_loss(aff, aG, ahy, ahr, aC, acnt, s2, b0, M, T, u, c0, c1, c2,
                                    Tsum, usum, c0sum, c1sum, c2sum, nb0, nM, nT, nu, nc0, nc1,
                                    nc2, yy, S0, r0, S, r, Ls, eta, beta, cnt)
                if v >= best and not collect:
                    continue
                v += _partition_penalty(beta, K, glist, offs, ws, cw, cw2, lam, gamma, pair_form,
                                        labels, I, J, omega, direct)
                # move the pairs of i and j to their new clusters; (i, j)
                # itself is handled from i's side
                for m in range(nptr[i], nptr[i + 1]):
                    o = nbr[m]
                    lo_new = A_ if o == j else labels[o]
                    v += (_mcp_pair(_dist(beta, B_, lo_new), nw[m], lam, gamma, pair_form)
                          - _mcp_pair(_dist(beta, A_, labels[o]), nw[m], lam, gamma, pair_form))
                for m in range(nptr[j], nptr[j + 1]):
                    o = nbr[m]
                    if o == i:
                        continue
                    v += (_mcp_pair(_dist(beta, A_, labels[o]), nw[m], lam, gamma, pair_form)
                          - _mcp_pair(_dist(beta, B_, labels[o]), nw[m], lam, gamma, pair_form))
                if collect:
                    cv[nc], ck[nc], ca[nc], cb[nc] = v, 2, i, j
                    nc += 1
                if v < best:
                    best, kind, ba, bb = v, 2, i, j
        return best, kind, ba, bb, nc
    for a in range(K):
        for b in range(a + 1, K):
            if not cl[a, b]:
                continue
            aff[0], aff[1] = a, b
            aG[0] = Graw[a] + Graw[b]
            ahy[0] = hy[a] + hy[b]
            ahr[0] = hr[a] + hr[b]
            aC[0] = C[a] + C[b]
            acnt[0] = cnt[a] + cnt[b]
            aG[1] = 0.0
            ahy[1] = 0.0
            ahr[1] = 0.0
            aC[1] = 0.0
            acnt[1] = 0.0
            v = _candidate_loss(aff, aG, ahy, ahr, aC, acnt, s2, b0, M, T, u, c0, c1, c2, Tsum,
                                usum, c0sum, c1sum, c2sum, nb0, nM, nT, nu, nc0, nc1, nc2, yy,
                                S0, r0, S, r, Ls, eta, beta, cnt)
            if v >= best and not collect:
                continue
            beta[b] = beta[a]
            v += _partition_penalty(beta, K, glist, offs, ws, cw, cw2, lam, gamma, pair_form,
                                    labels, I, J, omega, direct)
            if collect:
                cv[nc], ck[nc], ca[nc], cb[nc] = v, 0, a, b
                nc += 1
            if v < best:
                best, kind, ba, bb = v, 0, a, b
    for i in range(n):
        own = labels[i]
        for c in range(K + 1):
            if c == own:
                continue
            if c < K and not ul[i, c]:
                continue
            if c == K and size[own] == 1:
                continue
            aff[0], aff[1] = own, c
            aG[0] = Graw[own] - Gu[i]
            ahy[0] = hy[own] - hu[i]
            ahr[0] = hr[own] - hu[i] - s2 * cur[i]
            aC[0] = C[own] - Cu[i]
            acnt[0] = cnt[own] - 1.0
            aG[1] = Graw[c] + Gu[i]
            ahy[1] = hy[c] + hu[i]
            ahr[1] = hr[c] + hu[i] + s2 * cur[i]
            aC[1] = C[c] + Cu[i]
            acnt[1] = cnt[c] + 1.0
            v = _candidate_loss(aff, aG, ahy, ahr, aC, acnt, s2, b0, M, T, u, c0, c1, c2, Tsum,
                                usum, c0sum, c1sum, c2sum, nb0, nM, nT, nu, nc0, nc1, nc2, yy,
                                S0, r0, S, r, Ls, eta, beta, cnt)
            if v >= best and not collect:
                continue
            v += _partition_penalty(beta, K, glist, offs, ws, cw, cw2, lam, gamma, pair_form,
                                    labels, I, J, omega, direct)
            # the groups still count unit i under its old cluster; swap its
            # own pairs over (the penalty vanishes at distance zero)
            for m in range(nptr[i], nptr[i + 1]):
                lj = labels[nbr[m]]
                v += (_mcp_pair(_dist(beta, c, lj), nw[m], lam, gamma, pair_form)
                      - _mcp_pair(_dist(beta, own, lj), nw[m], lam, gamma, pair_form))
            if collect:
                cv[nc], ck[nc], ca[nc], cb[nc] = v, 1, i, c
                nc += 1
            if v < best:
                best, kind, ba, bb = v, 1, i, c
    return best, kind, ba, bb, nc


@njit(cache=True)
def _candidate_loss(aff, aG, ahy, ahr, aC, acnt, s2, b0, M, T, u, c0, c1, c2, Tsum, usum,
                    c0sum, c1sum, c2sum, nb0, nM, nT, nu, nc0, nc1, nc2, yy, S0, r0, S, r, Ls,
                    eta, beta, cnt):
    # half the weighted residual sum of squares after refitting the slots in
    # ``aff``; fills ``beta`` for every slot. Returns inf when degenerate.
    q = S.shape[0]
    slots, d = beta.shape
    for t in range(2):
        ok, nc0[t] = _cluster_quad(aG[t], ahy[t], ahr[t], aC[t], acnt[t], s2, nb0[t], nM[t],
                                   nT[t], nu[t], nc1[t], nc2[t])
        if not ok:
            return np.inf
    k0, k1 = aff[0], aff[1]
    for i in range(q):
        r[i] = r0[i] - usum[i] + u[k0, i] + u[k1, i] - nu[0, i] - nu[1, i]
        for j in range(q):
            S[i, j] = (S0[i, j] - Tsum[i, j] + T[k0, i, j] + T[k1, i, j]
                       - nT[0, i, j] - nT[1, i, j])
    if q:
        Ls[:] = 0.0
        if not _chol(S, Ls):
            return np.inf
        _chol_solve(Ls, r, eta)
    loss = yy + c0sum - c0[k0] - c0[k1] + nc0[0] + nc0[1]
    for i in range(q):
        lin = -r0[i] + c1sum[i] - c1[k0, i] - c1[k1, i] + nc1[0, i] + nc1[1, i]
        quad = 0.0
        for j in range(q):
            quad += (S0[i, j] + c2sum[i, j] - c2[k0, i, j] - c2[k1, i, j] + nc2[0, i, j]
                     + nc2[1, i, j]) * eta[j]
        loss += eta[i] * (2.0 * lin + quad)
    for k in range(slots):
        if k == k0 or k == k1:
            t = 0 if k == k0 else 1
            for a in range(d):
                acc = nb0[t, a]
                for j in range(q):
                    acc -= nM[t, a, j] * eta[j]
                beta[k, a] = acc
        else:
            for a in range(d):
                acc = b0[k, a]
                for j in range(q):
                    acc -= M[k, a, j] * eta[j]
                beta[k, a] = acc
    return 0.5 * loss


class _PartitionSearch:
    """Objective-driven moves between partitions of one problem at one lambda.

    Candidates are scored by their exact objective at a cluster-wise refit
    whose tiny ridge pulls each cluster toward its members' current
    coefficients, which anchors clusters with too few units to be
    identified. Only clusters joined by a positive weight are candidates,
    since without one the penalty cannot favour joining them.
    """

    def __init__(self, prob, lam, gamma, form):
        self.prob, self.lam, self.gamma, self.form = prob, float(lam), float(gamma), form
        n, d = prob.n, prob.d
        dz = prob.design
        wobs = np.ascontiguousarray(prob.obs_w, dtype=float)
        self.wobs = wobs
        self.X1 = np.ascontiguousarray(dz.X1)
        self.X2 = np.ascontiguousarray(dz.X2)
        self.y = dz.y
        self.s2 = 1e-8 * max(1.0, float(np.sum(wobs[:, None] * self.X1 * self.X1)) / max(d, 1))
        self.S0 = (self.X2 * wobs[:, None]).T @ self.X2
        self.r0 = (self.X2 * wobs[:, None]).T @ dz.y
        self.pair_form = form == "pair"
        # per-unit sufficient statistics shared by every candidate
        self.Gu = np.einsum("i,ia,ib->iab", wobs, self.X1, self.X1)
        self.hu = self.X1 * (wobs * dz.y)[:, None]
        self.Cu = np.einsum("i,ia,ib->iab", wobs, self.X1, self.X2)
        self.yy = float(np.sum(wobs * dz.y ** 2))
        pos = prob.omega > 0
        self.Ip, self.Jp = prob.I[pos], prob.J[pos]
        self.wp = np.ascontiguousarray(prob.omega[pos])
        adj = sparse.csr_matrix((np.r_[self.wp, self.wp],
                                 (np.r_[self.Ip, self.Jp], np.r_[self.Jp, self.Ip])),
                                shape=(n, n))
        self.nptr = adj.indptr.astype(np.int64)
        self.nbr = adj.indices.astype(np.int64)
        self.nw = adj.data
        self.swaps = n <= SWAP_MAX_N
        self._empty = np.zeros(0), np.zeros(0, dtype=np.int64)

    def _round(self, labels, K, cur, target, swaps, collect=False):
        if collect:
            n = self.prob.n
            size = K * (K - 1) // 2 + n * (K + 1) + (n * (n - 1) // 2 if swaps else 0)
            bufs = np.zeros(size), *(np.zeros(size, dtype=np.int64) for _ in range(3))
        else:
            bufs = self._empty[0], self._empty[1], self._empty[1], self._empty[1]
        out = _search_round(labels, K, self.Gu, self.hu, self.Cu, cur, self.s2, self.yy,
                            self.S0, self.r0, self.Ip, self.Jp, self.wp, self.nptr, self.nbr,
                            self.nw, self.lam, self.gamma, self.pair_form, target, swaps,
                            collect, *bufs)
        if collect:
            m = out[4]
            return tuple(b[:m] for b in bufs)
        return out[:4]

    def candidates(self, labels, K, cur):
        """All single steps as arrays (value, kind, a, b)."""
        parts = [self._round(labels, K, cur, np.inf, False, True)]
        if self.swaps:
            parts.append(self._round(labels, K, cur, np.inf, True, True))
        return tuple(np.concatenate(c) for c in zip(*parts))

    def apply(self, labels, K, cur, kind, a, b):
        lab = labels.copy()
        if kind == 0:
            lab[lab == b] = a
        elif kind == 1:
            lab[a] = b
        else:
            lab[a], lab[b] = labels[b], labels[a]
        p = self.prob
        bo, eo = np.zeros((K + 1, p.d)), np.zeros(p.q)
        _partition_fit(lab, K + 1, self.X1, self.X2, self.y, self.wobs, cur, self.s2, self.S0,
                       self.r0, p.I, p.J, p.omega, self.lam, self.gamma, self.pair_form, bo, eo)
        cur = np.ascontiguousarray(bo[lab])
        _, labels = np.unique(lab, return_inverse=True)
        labels = labels.astype(np.int64)
        return labels, int(labels.max()) + 1, cur, eo

    def descend(self, labels, K, cur, eta, obj, max_rounds):
        """Best-improvement descent; swaps are tried once the rest run dry."""
        moves = 0
        for _ in range(max_rounds):
            target = obj - 1e-10 * max(1.0, abs(obj))
            val, kind, a, b = self._round(labels, K, cur, target, False)
            if kind < 0 and self.swaps:
                val, kind, a, b = self._round(labels, K, cur, target, True)
            if kind < 0:
                break
            labels, K, cur, eta = self.apply(labels, K, cur, kind, a, b)
            obj = val
            moves += 1
        return labels, K, cur, eta, obj, moves


def _local_search(prob, fused, beta, eta, obj, lam, gamma, form, max_k=LOCAL_SEARCH_MAX_K,
                  max_rounds=None):
    # best-improvement descent over partitions: merge two clusters, or move
    # one unit to another cluster or to a new singleton. On small problems
    # unit exchanges are added, and once the descent stalls the most
    # promising uphill steps are each followed by a descent of their own.
    n = prob.n
    g = sparse.coo_matrix((np.ones(fused.sum()), (prob.I[fused], prob.J[fused])), shape=(n, n))
    K, labels = connected_components(g, directed=False)
    if K > max_k:
        return None
    search = _PartitionSearch(prob, lam, gamma, form)
    max_rounds = n if max_rounds is None else max_rounds
    labels = labels.astype(np.int64)
    cur = np.ascontiguousarray(beta, dtype=float)
    labels, K, cur, eta, obj, moves = search.descend(labels, K, cur, eta, obj, max_rounds)
    # anchors of clusters too small to be identified drift with each refit,
    # which can keep producing tiny genuine decreases; bound the restarts
    for _ in range(max_rounds if search.swaps else 0):
        vals, kinds, As, Bs = search.candidates(labels, K, cur)
        improved = False
        for c in np.argsort(vals, kind="stable")[:LOOKAHEAD]:
            l2, K2, c2, e2 = search.apply(labels, K, cur, kinds[c], As[c], Bs[c])
            l2, K2, c2, e2, o2, m2 = search.descend(l2, K2, c2, e2, vals[c], max_rounds)
            if m2 and o2 < obj - 1e-10 * max(1.0, abs(obj)):
                labels, K, cur, eta, obj = l2, K2, c2, e2, o2
                moves += 1 + m2
                improved = True
                break
        if not improved:
            break
    if moves == 0:
        return None
    return cur, eta, prob.objective(cur, eta, lam, gamma, form), moves
