"""scikit-learn style wrappers around the fitting functions.

The estimators are transductive: ``fit`` takes an adjacency (a
:class:`~blockfit.graph.SparseGraph`, a scipy sparse matrix or a dense
array) and stores the node labels in ``labels_``. ``fit_predict`` comes
from :class:`~sklearn.base.ClusterMixin`.
"""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .bisbm import fit_bisbm
from .dcsbm import fit_dcsbm
from .graph import SparseGraph
from .sbm import FitConfig, fit
from .spectral import ScpConfig, scp, scp_bipartite

__all__ = ["check_graph", "SpectralInit", "PPLSBM", "DCPPL", "BiPPL"]


def check_graph(X, bipartite: bool = False) -> SparseGraph:
    """Coerce ``X`` to a validated :class:`SparseGraph`.

    Square inputs must be symmetric unless ``bipartite`` is set; any
    nonzero entry counts as an edge and the diagonal is ignored.
    """
    if isinstance(X, SparseGraph):
        if X.bipartite != bipartite:
            kind = "bipartite" if bipartite else "undirected"
            raise ValueError(f"expected a {kind} graph")
        return X
    A = check_array(X, accept_sparse="csr", dtype=None, ensure_min_samples=1,
                    ensure_min_features=1)
    A = sp.csr_matrix(A, copy=True)
    A.eliminate_zeros()
    if not bipartite:
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {A.shape}")
        if (A != A.T).nnz:
            raise ValueError("adjacency must be symmetric")
    return SparseGraph.from_adjacency(A, bipartite=bipartite)


def _check_k(k, n, name):
    if not isinstance(k, numbers.Integral) or not 1 <= k <= n:
        raise ValueError(f"{name} must be an integer in 1..{n}, got {k!r}")
    return int(k)


def _seed(random_state):
    if random_state is None:
        return 0
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    raise ValueError("random_state must be an int or None")


class SpectralInit(ClusterMixin, BaseEstimator):
    """Regularized spectral clustering with k-means on normalized rows."""

    def __init__(self, n_clusters=2, reg_tau=0.25, eig_tol=1e-8, eig_max_iter=1000,
                 n_init=20, max_iter=100, random_state=None):
        self.n_clusters = n_clusters
        self.reg_tau = reg_tau
        self.eig_tol = eig_tol
        self.eig_max_iter = eig_max_iter
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def _config(self, k):
        return ScpConfig(k=k, reg_tau=self.reg_tau, eig_tol=self.eig_tol,
                         eig_max_iter=self.eig_max_iter, kmeans_restarts=self.n_init,
                         kmeans_max_iter=self.max_iter, seed=_seed(self.random_state))

    def fit(self, X, y=None):
        g = check_graph(X)
        k = _check_k(self.n_clusters, g.n_rows, "n_clusters")
        self.labels_ = scp(g, self._config(k))
        return self


class _PPLBase(ClusterMixin, BaseEstimator):
    def _fit_config(self):
        return FitConfig(inner_tol=self.inner_tol, inner_max_iter=self.inner_max_iter,
                         outer_tol=self.tol, outer_max_iter=self.max_iter,
                         seed=_seed(self.random_state))

    def _initial_labels(self, g, k):
        if isinstance(self.init, str):
            if self.init != "scp":
                raise ValueError(f"init must be 'scp' or an array, got {self.init!r}")
            return SpectralInit(k, random_state=self.random_state).fit(g).labels_
        init = np.asarray(self.init)
        if init.shape != (g.n_rows,):
            raise ValueError(f"init labels must have shape ({g.n_rows},)")
        return init

    def _store(self, res):
        self.result_ = res
        self.labels_ = res.labels
        self.objective_trace_ = np.asarray(res.objective_trace)
        self.converged_ = res.converged
        self.n_iter_ = res.outer_iters
        self.tau_ = res.tau


class PPLSBM(_PPLBase):
    """Block model fitted by alternating EM and column-label updates.

    Fitted attributes: ``labels_``, ``pi_``, ``P_``, ``tau_``,
    ``objective_trace_``, ``converged_``, ``n_iter_`` and ``result_``.
    """

    def __init__(self, n_clusters=2, init="scp", tol=1e-6, max_iter=60,
                 inner_tol=1e-8, inner_max_iter=100, random_state=None):
        self.n_clusters = n_clusters
        self.init = init
        self.tol = tol
        self.max_iter = max_iter
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        g = check_graph(X)
        k = _check_k(self.n_clusters, g.n_rows, "n_clusters")
        res = fit(g, k, self._initial_labels(g, k), self._fit_config())
        self._store(res)
        self.pi_ = res.params.pi
        self.P_ = res.params.P
        return self


class DCPPL(_PPLBase):
    """Degree-corrected block model fitted by an ECM inner loop.

    Adds ``Lambda_`` and ``theta_`` to the attributes of :class:`PPLSBM`.
    """

    def __init__(self, n_clusters=2, init="scp", tol=1e-6, max_iter=60,
                 inner_tol=1e-8, inner_max_iter=100, theta_update="symmetric",
                 random_state=None):
        self.n_clusters = n_clusters
        self.init = init
        self.tol = tol
        self.max_iter = max_iter
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter
        self.theta_update = theta_update
        self.random_state = random_state

    def _fit_config(self):
        base = super()._fit_config()
        return FitConfig(**{**base.__dict__, "theta_update": self.theta_update})

    def fit(self, X, y=None):
        g = check_graph(X)
        k = _check_k(self.n_clusters, g.n_rows, "n_clusters")
        res = fit_dcsbm(g, k, self._initial_labels(g, k), self._fit_config())
        self._store(res)
        self.pi_ = res.params.pi
        self.Lambda_ = res.params.Lambda
        self.theta_ = res.params.theta
        return self


class BiPPL(ClusterMixin, BaseEstimator):
    """Bipartite block model; one independent fit per node type.

    ``fit`` takes an ``m x n`` biadjacency. ``row_labels_`` and
    ``column_labels_`` hold the two label vectors. ``labels_`` aliases
    ``column_labels_`` so ``fit_predict`` returns the column labels.
    """

    def __init__(self, n_row_clusters=2, n_col_clusters=2, init="scp", tol=1e-6,
                 max_iter=60, inner_tol=1e-8, inner_max_iter=100, random_state=None):
        self.n_row_clusters = n_row_clusters
        self.n_col_clusters = n_col_clusters
        self.init = init
        self.tol = tol
        self.max_iter = max_iter
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        g = check_graph(X, bipartite=True)
        k1 = _check_k(self.n_row_clusters, g.n_rows, "n_row_clusters")
        k2 = _check_k(self.n_col_clusters, g.n_cols, "n_col_clusters")
        seed = _seed(self.random_state)
        if isinstance(self.init, str):
            if self.init != "scp":
                raise ValueError(f"init must be 'scp' or a (c1, c2) pair, got {self.init!r}")
            c1, c2 = scp_bipartite(g, k1, k2, ScpConfig(k=k1, seed=seed))
        else:
            c1, c2 = (np.asarray(v) for v in self.init)
        cfg = FitConfig(inner_tol=self.inner_tol, inner_max_iter=self.inner_max_iter,
                        outer_tol=self.tol, outer_max_iter=self.max_iter, seed=seed)
        r2, r1 = fit_bisbm(g, k1, k2, c1, c2, cfg)
        self.result_columns_, self.result_rows_ = r2, r1
        self.row_labels_ = r1.labels
        self.column_labels_ = r2.labels
        self.labels_ = self.column_labels_
        self.pi1_ = r2.params.pi
        self.P_ = r2.params.P
        self.converged_ = r1.converged and r2.converged
        return self

