"""Profile-pseudo-likelihood fitting of the degree-corrected block model.

The inner loop is an ECM: an E-step for the row-class posteriors, then
closed-form updates of ``pi`` and ``Lambda`` at the previous ``theta``,
then a single Gauss-Seidel sweep over ``theta`` in ascending node order
where each coordinate is the positive root of ``2 g θ² + h θ - d = 0``
(see :func:`theta_sweep` for the two choices of ``h``).
After the sweep ``theta`` is rescaled to mean one and ``Lambda`` absorbs
the squared scale, which leaves every rate ``θ_i θ_j λ`` unchanged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numba
import numpy as np
from scipy.special import logsumexp

from .graph import SparseGraph, degrees
from .sbm import (FitConfig, FitResult, _check_labels, _col_class_sizes,
                  _column_neighbor_mass, _row_index, _softmax_rows,
                  neighbor_class_counts)

__all__ = [
    "EPS_LAMBDA",
    "EPS_THETA",
    "DCParams",
    "dc_log_pseudo_likelihood",
    "init_dc_params",
    "dc_e_step",
    "dc_cm_step",
    "theta_sweep",
    "dc_update_labels",
    "fit_dcsbm",
]

EPS_LAMBDA = 1e-10
EPS_THETA = 1e-10
_G_FLOOR = 1e-12


@dataclass
class DCParams:
    pi: np.ndarray
    Lambda: np.ndarray
    theta: np.ndarray

    def copy(self) -> "DCParams":
        return DCParams(self.pi.copy(), self.Lambda.copy(), self.theta.copy())

    def to_dict(self):
        return {"pi": self.pi.tolist(), "Lambda": self.Lambda.tolist(),
                "theta": self.theta.tolist()}


def _theta_log_terms(g: SparseGraph, theta):
    """Class-independent part of each row score: ``d_i log θ_i + Σ_N(i) log θ_j``."""
    logt = np.log(theta)
    d = degrees(g).astype(np.float64)
    # bincount rather than reduceat: reduceat misreads empty trailing rows
    nb = np.bincount(_row_index(g), weights=logt[g.col_indices], minlength=g.n_rows)
    return d * logt + nb


def _dc_row_scores(B, theta, S, params, const=None):
    """``s_il = log π_l - θ_i Σ_k λ_lk S_k + Σ_k B_ik log λ_lk (+ const_i)``."""
    logL = np.log(params.Lambda)
    rate = params.Lambda @ S
    with np.errstate(divide="ignore"):
        logpi = np.log(params.pi)
    s = np.empty((B.shape[0], params.Lambda.shape[0]))
    for l in range(params.Lambda.shape[0]):
        s[:, l] = B @ logL[l] - theta * rate[l] + logpi[l]
    if const is not None:
        s += const[:, None]
    return s


def _theta_class_sums(theta, e, K):
    return np.bincount(e, weights=theta, minlength=K)


def dc_log_pseudo_likelihood(g: SparseGraph, params: DCParams, e) -> float:
    """Poisson mixture log pseudo likelihood, including the θ-only terms."""
    K = params.Lambda.shape[1]
    e = _check_labels(e, g.n_cols, K)
    B = neighbor_class_counts(g, e, K)
    S = _theta_class_sums(params.theta, e, K)
    s = _dc_row_scores(B, params.theta, S, params, _theta_log_terms(g, params.theta))
    return float(logsumexp(s, axis=1).sum())


def init_dc_params(g: SparseGraph, e, K: Optional[int] = None) -> DCParams:
    """Start from ``θ_i ∝ d_i`` (mean one) and the matching block rates."""
    if g.edge_count == 0:
        raise ValueError("degree-corrected initialization needs at least one edge")
    e = np.asarray(e, dtype=np.int64)
    K = int(e.max()) + 1 if K is None else K
    e = _check_labels(e, g.n_rows, K)
    n = g.n_rows
    d = degrees(g).astype(np.float64)
    theta = np.maximum(d * n / d.sum(), EPS_THETA)
    theta /= theta.mean()
    B = neighbor_class_counts(g, e, K)
    E = np.zeros((K, K))
    np.add.at(E, e, B)
    S = _theta_class_sums(theta, e, K)
    den = S[:, None] * S[None, :]
    overall = d.sum() / theta.sum() ** 2
    Lam = np.where(den > 0, E / np.where(den > 0, den, 1.0), overall)
    pi = np.bincount(e, minlength=K) / n
    return DCParams(pi, np.maximum(Lam, EPS_LAMBDA), theta)


def dc_e_step(g: SparseGraph, params: DCParams, e) -> np.ndarray:
    """Row-class posteriors; the θ-only terms cancel and are skipped."""
    K = params.Lambda.shape[1]
    e = _check_labels(e, g.n_rows, K)
    B = neighbor_class_counts(g, e, K)
    S = _theta_class_sums(params.theta, e, K)
    return _softmax_rows(_dc_row_scores(B, params.theta, S, params))[0]


@numba.njit(cache=True)
def _sweep_kernel(G, e, d, theta, S, R, symmetric):
    n = theta.size
    K = G.shape[1]
    h_out = np.empty(n)
    g_out = np.empty(n)
    for i in range(n):
        ei = e[i]
        gi = G[i, ei]
        old = theta[i]
        h = 0.0
        for k in range(K):
            h += G[i, k] * S[k]
        h -= gi * old
        if symmetric:
            # add the column role sum_j theta_j g_ji and halve; the self pair
            # enters once, so g_ii is halved too
            h = 0.5 * (h + R[ei] - gi * old)
            gi = 0.5 * gi
        if h < 0.0:
            h = 0.0
        di = d[i]
        if gi <= 1e-12:
            new = di / max(h, 1e-300)
        else:
            # (-h + sqrt(h^2 + 8 d g)) / (4 g), written without cancellation
            new = 2.0 * di / (h + np.sqrt(h * h + 8.0 * di * gi))
        if new < 1e-10:
            new = 1e-10
        theta[i] = new
        S[ei] += new - old
        if symmetric:
            for k in range(K):
                R[k] += (new - old) * G[i, k]
        h_out[i] = h
        g_out[i] = gi
    return h_out, g_out


THETA_UPDATES = ("symmetric", "row")


def theta_sweep(G, e, d, theta_prev, update: str = "symmetric"
                ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One ascending-order Gauss-Seidel pass over the degree parameters.

    ``G[i, l] = Σ_k τ_ik λ_kl`` so that ``g_ij = G[i, e_j]``. Each θ_i is
    the positive root of ``2 g_ii θ² + h_i θ - d_i = 0``.

    With ``update="row"``, ``h_i = Σ_{j≠i} θ_j g_ij`` counts only the pairs
    where ``i`` is the row node. With ``"symmetric"`` (default), ``h_i``
    is the average of that sum and ``Σ_{j≠i} θ_j g_ji``, and the quadratic
    coefficient uses ``g_ii / 2`` because the self pair appears once. The
    root is then the exact coordinate maximizer of the expected
    complete-data log likelihood, so a sweep cannot decrease it. The
    returned ``g`` holds the coefficient actually used.

    Running class sums keep every ``h_i`` an O(K) update. Returns the new
    θ (before mean rescaling) and the ``h_i``, ``g_ii`` used for each root.
    """
    if update not in THETA_UPDATES:
        raise ValueError(f"update must be one of {THETA_UPDATES}, got {update!r}")
    e = np.ascontiguousarray(e, dtype=np.int64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    theta = np.array(theta_prev, dtype=np.float64, copy=True)
    S = np.bincount(e, weights=theta, minlength=G.shape[1]).astype(np.float64)
    R = np.ascontiguousarray(G.T @ theta)
    h, gdiag = _sweep_kernel(G, e, np.asarray(d, dtype=np.float64), theta, S, R,
                             update == "symmetric")
    return theta, h, gdiag


def _cm_step_counts(B, tau, e, d, params_prev, sweeps=1, diagnostics=False,
                    update="symmetric"):
    K = params_prev.Lambda.shape[1]
    theta_prev = params_prev.theta
    T = tau.sum(axis=0)
    pi = T / tau.shape[0]
    pi = pi / pi.sum()
    U = tau.T @ theta_prev
    S = _theta_class_sums(theta_prev, e, K)
    num = tau.T @ B
    den = U[:, None] * S[None, :]
    ok = (U[:, None] >= 1e-12) & (S[None, :] > 0)
    Lam = np.where(ok, num / np.where(ok, den, 1.0), params_prev.Lambda)
    Lam = np.maximum(Lam, EPS_LAMBDA)
    G = tau @ Lam
    theta = theta_prev
    for _ in range(sweeps):
        theta, h, gdiag = theta_sweep(G, e, d, theta, update)
    scale = theta.mean()
    out = DCParams(pi, Lam * scale * scale, np.maximum(theta / scale, EPS_THETA))
    if diagnostics:
        return out, {"theta_raw": theta, "h": h, "g": gdiag}
    return out


def dc_cm_step(g: SparseGraph, tau, e, theta_prev, Lambda_prev=None,
               sweeps: int = 1, diagnostics: bool = False,
               theta_update: str = "symmetric"):
    """Conditional maximization of ``pi``, ``Lambda`` and then ``theta``.

    With ``diagnostics`` also returns the raw swept θ and the ``h_i``,
    ``g_ii`` values so callers can check each quadratic root.
    """
    tau = np.asarray(tau, dtype=np.float64)
    K = tau.shape[1]
    e = _check_labels(e, g.n_rows, K)
    B = neighbor_class_counts(g, e, K)
    if Lambda_prev is None:
        Lambda_prev = np.full((K, K), EPS_LAMBDA)
    prev = DCParams(np.full(K, 1.0 / K), np.asarray(Lambda_prev, dtype=np.float64),
                    np.asarray(theta_prev, dtype=np.float64))
    return _cm_step_counts(B, tau, e, degrees(g).astype(np.float64), prev,
                           sweeps=sweeps, diagnostics=diagnostics,
                           update=theta_update)


def dc_update_labels(g: SparseGraph, params: DCParams, tau) -> np.ndarray:
    """``e_j = argmax_k -θ_j Σ_l λ_lk U_l + Σ_l M_jl log λ_lk``; ties to smallest k."""
    tau = np.asarray(tau, dtype=np.float64)
    U = tau.T @ params.theta
    M = _column_neighbor_mass(g, tau)
    logL = np.log(params.Lambda)
    rate = U @ params.Lambda
    K = params.Lambda.shape[1]
    scores = np.empty((g.n_cols, K))
    for k in range(K):
        scores[:, k] = M @ logL[:, k] - params.theta * rate[k]
    return np.argmax(scores, axis=1).astype(np.int64)


def _dc_objective(B, params, e, K, const):
    S = _theta_class_sums(params.theta, e, K)
    s = _dc_row_scores(B, params.theta, S, params, const)
    return s, float(logsumexp(s, axis=1).sum())


def _inner_ecm(g, B, e, d, params, cfg: FitConfig):
    K = params.Lambda.shape[1]
    s, ll = _dc_objective(B, params, e, K, _theta_log_terms(g, params.theta))
    tau = _softmax_rows(s)[0]
    trace = [ll]
    iters = 0
    for _ in range(cfg.inner_max_iter):
        params = _cm_step_counts(B, tau, e, d, params, sweeps=cfg.theta_sweeps,
                                 update=cfg.theta_update)
        s, ll_new = _dc_objective(B, params, e, K, _theta_log_terms(g, params.theta))
        tau = _softmax_rows(s)[0]
        trace.append(ll_new)
        iters += 1
        if abs(ll_new - ll) <= cfg.inner_tol * abs(ll):
            break
        ll = ll_new
    return params, tau, iters, trace


def run_inner_ecm(g: SparseGraph, params_init: DCParams, e,
                  cfg: FitConfig = FitConfig()):
    """ECM at fixed labels; returns ``(params, tau, iterations, trace)``."""
    K = params_init.Lambda.shape[1]
    e = _check_labels(e, g.n_rows, K)
    B = neighbor_class_counts(g, e, K)
    return _inner_ecm(g, B, e, degrees(g).astype(np.float64), params_init, cfg)


def fit_dcsbm(g: SparseGraph, K: int, init_labels,
              cfg: FitConfig = FitConfig()) -> FitResult:
    """Degree-corrected counterpart of :func:`blockfit.sbm.fit`."""
    if g.bipartite:
        raise ValueError("fit_dcsbm expects an undirected graph")
    if K < 1 or K > g.n_rows:
        raise ValueError(f"K must lie in 1..n ({g.n_rows}), got {K}")
    t0 = time.perf_counter()
    e = _check_labels(init_labels, g.n_rows, K, "init_labels")
    params = init_dc_params(g, e, K)
    d = degrees(g).astype(np.float64)
    rows = _row_index(g)
    B = neighbor_class_counts(g, e, K, rows)
    trace = [_dc_objective(B, params, e, K, _theta_log_terms(g, params.theta))[1]]
    inner_counts, inner_traces = [], []
    converged = False
    tau = None
    for _ in range(cfg.outer_max_iter):
        params, tau, iters, itrace = _inner_ecm(g, B, e, d, params, cfg)
        inner_counts.append(iters)
        inner_traces.append(itrace)
        e = dc_update_labels(g, params, tau)
        B = neighbor_class_counts(g, e, K, rows)
        obj = _dc_objective(B, params, e, K, _theta_log_terms(g, params.theta))[1]
        prev = trace[-1]
        trace.append(obj)
        if abs(obj - prev) < cfg.outer_tol * abs(prev):
            converged = True
            break
    return FitResult(labels=e, params=params, objective_trace=trace,
                     inner_iteration_counts=inner_counts, converged=converged,
                     runtime_ms=(time.perf_counter() - t0) * 1e3, tau=tau,
                     inner_traces=inner_traces, model="dcsbm")
