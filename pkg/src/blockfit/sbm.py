"""Profile-pseudo-likelihood fitting of the stochastic block model.

Rows of the adjacency are treated as i.i.d. draws from a K-component
mixture whose component densities depend on fixed column labels ``e``.
The outer loop alternates an EM fit of ``(pi, P)`` at fixed ``e`` with a
node-wise column-label update; both steps never decrease the log pseudo
likelihood.

All kernels accept rectangular ``n_rows x n_cols`` graphs with ``K_row``
latent row classes and ``K_col`` column classes so the bipartite fitter
shares them unchanged. Per-row work is one integer count matrix
``B[i, k] = #{j in N(i) : e_j = k}`` per outer iteration, after which
every E and M step is O(n K^2); the label update is O(|E| K + n K^2).

The sums over ``j`` include ``j = i``: it contributes the ``(1 - P)``
factor because diagonal entries are zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .graph import SparseGraph

__all__ = [
    "EPS_P",
    "BlockParams",
    "FitConfig",
    "FitResult",
    "log_pseudo_likelihood",
    "init_params_from_labels",
    "e_step",
    "m_step",
    "run_inner_em",
    "update_column_labels",
    "fit",
    "refine_once",
]

EPS_P = 1e-10


@dataclass
class BlockParams:
    """Class proportions ``pi`` (length K_row) and ``P`` (K_row x K_col)."""

    pi: np.ndarray
    P: np.ndarray

    def copy(self) -> "BlockParams":
        return BlockParams(self.pi.copy(), self.P.copy())

    def to_dict(self):
        return {"pi": self.pi.tolist(), "P": self.P.tolist()}


@dataclass(frozen=True)
class FitConfig:
    inner_tol: float = 1e-8
    inner_max_iter: int = 100
    outer_tol: float = 1e-6
    outer_max_iter: int = 60
    eps_p: float = EPS_P
    seed: int = 0
    revive_empty: bool = False
    # only read by the degree-corrected fitter
    theta_sweeps: int = 1
    theta_update: str = "symmetric"

    def __post_init__(self):
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.inner_max_iter < 1 or self.outer_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.eps_p < 0.5:
            raise ValueError("eps_p must lie in (0, 0.5)")
        if self.theta_sweeps < 1:
            raise ValueError("theta_sweeps must be >= 1")
        if self.theta_update not in ("symmetric", "row"):
            raise ValueError("theta_update must be 'symmetric' or 'row'")


@dataclass
class FitResult:
    labels: np.ndarray
    params: object
    objective_trace: List[float]
    inner_iteration_counts: List[int]
    converged: bool
    runtime_ms: float
    tau: Optional[np.ndarray] = None
    inner_traces: List[List[float]] = field(default_factory=list)
    model: str = "sbm"

    @property
    def outer_iters(self) -> int:
        return len(self.inner_iteration_counts)

    def to_dict(self):
        out = {"model": self.model, "labels": [int(x) for x in self.labels]}
        out.update(self.params.to_dict())
        out.update({
            "objective_trace": [float(x) for x in self.objective_trace],
            "converged": bool(self.converged),
            "outer_iters": self.outer_iters,
            "inner_iteration_counts": [int(x) for x in self.inner_iteration_counts],
            "runtime_ms": float(self.runtime_ms),
        })
        return out


# ---------------------------------------------------------------------------
# kernels shared with the bipartite and degree-corrected fitters


def _row_index(g: SparseGraph) -> np.ndarray:
    return np.repeat(np.arange(g.n_rows, dtype=np.int64), np.diff(g.row_offsets))


def neighbor_class_counts(g: SparseGraph, e: np.ndarray, K: int,
                          rows: Optional[np.ndarray] = None) -> np.ndarray:
    """``B[i, k]`` = number of neighbours ``j`` of row ``i`` with ``e_j = k``."""
    if rows is None:
        rows = _row_index(g)
    flat = rows * K + e[g.col_indices]
    return np.bincount(flat, minlength=g.n_rows * K).reshape(g.n_rows, K).astype(np.float64)


def _log_terms(P):
    return np.log(P), np.log1p(-P)


def _row_scores(B, ncol, pi, P):
    """``s[i, l] = log pi_l + sum_k B_ik logit(P_lk) + sum_k n_k log(1 - P_lk)``."""
    logP, log1m = _log_terms(P)
    W = logP - log1m
    const = log1m @ ncol
    with np.errstate(divide="ignore"):
        logpi = np.log(pi)
    s = np.empty((B.shape[0], P.shape[0]))
    # one column at a time keeps each entry's arithmetic independent of K
    for l in range(P.shape[0]):
        s[:, l] = B @ W[l] + (const[l] + logpi[l])
    return s


def _softmax_rows(s):
    lse = logsumexp(s, axis=1)
    tau = np.exp(s - lse[:, None])
    tau /= tau.sum(axis=1, keepdims=True)
    return tau, float(lse.sum())


def _m_step_counts(B, tau, ncol, prev_P, eps_p):
    T = tau.sum(axis=0)
    pi = T / tau.shape[0]
    pi = pi / pi.sum()
    num = tau.T @ B
    den = T[:, None] * ncol[None, :]
    ok = (T[:, None] >= 1e-12) & (ncol[None, :] > 0)
    P = np.where(ok, num / np.where(ok, den, 1.0), prev_P)
    return BlockParams(pi, np.clip(P, eps_p, 1.0 - eps_p))


def _column_scores(M, T, P):
    """``score[j, k] = sum_l M_jl logit(P_lk) + sum_l T_l log(1 - P_lk)``."""
    logP, log1m = _log_terms(P)
    W = logP - log1m
    const = T @ log1m
    out = np.empty((M.shape[0], P.shape[1]))
    for k in range(P.shape[1]):
        out[:, k] = M @ W[:, k] + const[k]
    return out


def _col_class_sizes(e, K):
    return np.bincount(e, minlength=K).astype(np.float64)


def _check_labels(e, n, K, name="labels"):
    e = np.asarray(e)
    if e.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {e.shape}")
    if e.size and (e.min() < 0 or e.max() >= K):
        raise ValueError(f"{name} must lie in 0..{K - 1}")
    return e.astype(np.int64)


# ---------------------------------------------------------------------------
# public operations


def log_pseudo_likelihood(g: SparseGraph, params: BlockParams, e) -> float:
    """Mixture log pseudo likelihood at column labels ``e``, in log domain."""
    K_col = params.P.shape[1]
    e = _check_labels(e, g.n_cols, K_col)
    B = neighbor_class_counts(g, e, K_col)
    s = _row_scores(B, _col_class_sizes(e, K_col), params.pi, params.P)
    return float(logsumexp(s, axis=1).sum())


def init_params_from_labels(g: SparseGraph, e, K: Optional[int] = None,
                            row_labels=None, K_row: Optional[int] = None,
                            eps_p: float = EPS_P) -> BlockParams:
    """Block proportions and densities of a hard labeling.

    ``P_kl`` is the edge count between row class ``k`` and column class
    ``l`` over ``n_k n_l``. Pairs touching an empty class fall back to the
    overall density. ``row_labels`` defaults to ``e`` (square graphs).
    """
    e = np.asarray(e, dtype=np.int64)
    K_col = int(e.max()) + 1 if K is None else K
    e = _check_labels(e, g.n_cols, K_col)
    if row_labels is None:
        if g.n_rows != g.n_cols:
            raise ValueError("row_labels required for rectangular graphs")
        row_labels, K_row = e, K_col
    row_labels = np.asarray(row_labels, dtype=np.int64)
    K_row = int(row_labels.max()) + 1 if K_row is None else K_row
    row_labels = _check_labels(row_labels, g.n_rows, K_row, "row_labels")
    B = neighbor_class_counts(g, e, K_col)
    E = np.zeros((K_row, K_col))
    np.add.at(E, row_labels, B)
    nr = np.bincount(row_labels, minlength=K_row).astype(np.float64)
    nc = _col_class_sizes(e, K_col)
    den = nr[:, None] * nc[None, :]
    density = g.edge_count / float(g.n_rows * g.n_cols)
    P = np.where(den > 0, E / np.where(den > 0, den, 1.0), density)
    return BlockParams(nr / g.n_rows, np.clip(P, eps_p, 1.0 - eps_p))


def e_step(g: SparseGraph, params: BlockParams, e) -> np.ndarray:
    """Posterior row-class probabilities ``tau`` (rows sum to one)."""
    K_col = params.P.shape[1]
    e = _check_labels(e, g.n_cols, K_col)
    B = neighbor_class_counts(g, e, K_col)
    s = _row_scores(B, _col_class_sizes(e, K_col), params.pi, params.P)
    return _softmax_rows(s)[0]


def m_step(g: SparseGraph, tau, e, n_col_classes: Optional[int] = None,
           prev: Optional[BlockParams] = None, eps_p: float = EPS_P) -> BlockParams:
    """Closed-form maximizer of the EM surrogate, clamped to ``[eps, 1-eps]``.

    Entries whose row-class mass or column-class size vanishes keep the
    value from ``prev`` (or the overall density when ``prev`` is None).
    """
    tau = np.asarray(tau, dtype=np.float64)
    K_col = tau.shape[1] if n_col_classes is None else n_col_classes
    e = _check_labels(e, g.n_cols, K_col)
    B = neighbor_class_counts(g, e, K_col)
    if prev is None:
        density = g.edge_count / float(g.n_rows * g.n_cols)
        prev_P = np.full((tau.shape[1], K_col), density)
    else:
        prev_P = prev.P
    return _m_step_counts(B, tau, _col_class_sizes(e, K_col), prev_P, eps_p)


def _inner_em(B, ncol, params, cfg):
    s = _row_scores(B, ncol, params.pi, params.P)
    tau, ll = _softmax_rows(s)
    trace = [ll]
    iters = 0
    for _ in range(cfg.inner_max_iter):
        params = _m_step_counts(B, tau, ncol, params.P, cfg.eps_p)
        s = _row_scores(B, ncol, params.pi, params.P)
        tau, ll_new = _softmax_rows(s)
        trace.append(ll_new)
        iters += 1
        if abs(ll_new - ll) <= cfg.inner_tol * abs(ll):
            break
        ll = ll_new
    return params, tau, iters, trace


def run_inner_em(g: SparseGraph, params_init: BlockParams, e,
                 cfg: FitConfig = FitConfig()):
    """EM over ``(pi, P)`` at fixed column labels.

    Stops once the relative change of the mixture log-likelihood drops to
    ``cfg.inner_tol`` or after ``cfg.inner_max_iter`` M-steps. The returned
    ``tau`` is the posterior at the returned parameters, which is what the
    ascent argument for the label update needs.

    Returns ``(params, tau, iterations, loglik_trace)``.
    """
    K_col = params_init.P.shape[1]
    e = _check_labels(e, g.n_cols, K_col)
    B = neighbor_class_counts(g, e, K_col)
    return _inner_em(B, _col_class_sizes(e, K_col), params_init, cfg)


def _column_neighbor_mass(g: SparseGraph, tau):
    """``M[j, l] = sum_{i in N(j)} tau_il`` (column sums of A times tau)."""
    return g.to_csr().T @ tau


def update_column_labels(g: SparseGraph, params: BlockParams, tau) -> np.ndarray:
    """Node-wise argmax of the expected complete-data log-likelihood.

    Ties go to the smallest class index.
    """
    tau = np.asarray(tau, dtype=np.float64)
    M = _column_neighbor_mass(g, tau)
    scores = _column_scores(M, tau.sum(axis=0), params.P)
    return np.argmax(scores, axis=1).astype(np.int64)


def _revive(e, tau, K):
    counts = np.bincount(e, minlength=K)
    if not np.any(counts == 0) or tau.shape[0] != e.size:
        return e
    e = e.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.nansum(tau * np.log(tau), axis=1)
    for k in np.flatnonzero(counts == 0):
        donors = np.flatnonzero(np.bincount(e, minlength=K)[e] > 1)
        if donors.size == 0:
            break
        j = donors[np.argmax(ent[donors])]
        e[j] = k
        ent[j] = -np.inf
    return e


def _fit_core(g, K_row, K_col, e, row_init, cfg: FitConfig, model="sbm"):
    t0 = time.perf_counter()
    params = init_params_from_labels(g, e, K_col, row_labels=row_init,
                                     K_row=K_row, eps_p=cfg.eps_p)
    rows = _row_index(g)
    B = neighbor_class_counts(g, e, K_col, rows)
    ncol = _col_class_sizes(e, K_col)
    trace = [float(logsumexp(_row_scores(B, ncol, params.pi, params.P), axis=1).sum())]
    inner_counts, inner_traces = [], []
    converged = False
    tau = None
    for _ in range(cfg.outer_max_iter):
        params, tau, iters, itrace = _inner_em(B, ncol, params, cfg)
        inner_counts.append(iters)
        inner_traces.append(itrace)
        e = update_column_labels(g, params, tau)
        if cfg.revive_empty:
            e = _revive(e, tau, K_col)
        B = neighbor_class_counts(g, e, K_col, rows)
        ncol = _col_class_sizes(e, K_col)
        obj = float(logsumexp(_row_scores(B, ncol, params.pi, params.P), axis=1).sum())
        prev = trace[-1]
        trace.append(obj)
        if abs(obj - prev) < cfg.outer_tol * abs(prev):
            converged = True
            break
    runtime_ms = (time.perf_counter() - t0) * 1e3
    return FitResult(labels=e, params=params, objective_trace=trace,
                     inner_iteration_counts=inner_counts, converged=converged,
                     runtime_ms=runtime_ms, tau=tau, inner_traces=inner_traces,
                     model=model)


def fit(g: SparseGraph, K: int, init_labels, cfg: FitConfig = FitConfig()) -> FitResult:
    """Alternate inner EM and column-label updates until the objective settles.

    ``converged`` is set when the relative change of the log pseudo
    likelihood between outer iterations falls below ``cfg.outer_tol``
    within ``cfg.outer_max_iter`` iterations. ``objective_trace[0]`` is
    the objective at the initial labels and their block estimates.
    """
    if g.bipartite:
        raise ValueError("fit expects an undirected graph; see fit_bisbm")
    if K < 1 or K > g.n_rows:
        raise ValueError(f"K must lie in 1..n ({g.n_rows}), got {K}")
    e = _check_labels(init_labels, g.n_rows, K, "init_labels")
    return _fit_core(g, K, K, e, None, cfg)


def refine_once(g: SparseGraph, e0, params_hint: Optional[BlockParams] = None,
                K: Optional[int] = None, cfg: FitConfig = FitConfig()) -> np.ndarray:
    """One outer iteration: block estimates, full inner EM, one label update."""
    e0 = np.asarray(e0, dtype=np.int64)
    if K is None:
        K = params_hint.P.shape[1] if params_hint is not None else int(e0.max()) + 1
    if K > g.n_rows:
        raise ValueError("K exceeds the number of nodes")
    e0 = _check_labels(e0, g.n_cols, K, "e0")
    if params_hint is None:
        params_hint = init_params_from_labels(g, e0, K, eps_p=cfg.eps_p)
    params, tau, _, _ = run_inner_em(g, params_hint, e0, cfg)
    return update_column_labels(g, params, tau)
