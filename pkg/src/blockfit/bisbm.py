"""Bipartite block model fitting by profile pseudo likelihood.

An ``m x n`` biadjacency matrix ``A`` has row nodes of type 1 (labels
``c1`` in ``K1`` classes) and column nodes of type 2 (``c2`` in ``K2``).
Fitting on ``A`` treats the row labels as latent and the column labels as
parameters, which estimates ``c2``. Running the same code on ``A^T`` with
the roles swapped estimates ``c1``. Both runs use the square-case kernels
with rectangular dimensions, so the outer ascent property carries over.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .graph import SparseGraph
from .sbm import (EPS_P, BlockParams, FitConfig, FitResult, _check_labels,
                  _fit_core, e_step, init_params_from_labels, m_step,
                  update_column_labels)

__all__ = [
    "BiBlockParams",
    "init_bi_params",
    "bi_e_step",
    "bi_m_step",
    "bi_update_labels",
    "fit_bisbm_side",
    "fit_bisbm",
]

# same fields: ``pi`` plays the role of pi1, ``P`` is K1 x K2
BiBlockParams = BlockParams


def _require_bipartite(g: SparseGraph):
    if not g.bipartite:
        raise ValueError("expected a bipartite graph")


def init_bi_params(g: SparseGraph, c1, c2, K1: int, K2: int,
                   eps_p: float = EPS_P) -> BiBlockParams:
    """Row-type proportions and block densities of hard labels ``(c1, c2)``."""
    _require_bipartite(g)
    return init_params_from_labels(g, c2, K2, row_labels=c1, K_row=K1, eps_p=eps_p)


def bi_e_step(g: SparseGraph, params: BiBlockParams, c2) -> np.ndarray:
    """``m x K1`` posteriors of the row-node classes given column labels."""
    _require_bipartite(g)
    return e_step(g, params, c2)


def bi_m_step(g: SparseGraph, tau, c2, K2: Optional[int] = None,
              prev: Optional[BiBlockParams] = None,
              eps_p: float = EPS_P) -> BiBlockParams:
    _require_bipartite(g)
    return m_step(g, tau, c2, n_col_classes=K2, prev=prev, eps_p=eps_p)


def bi_update_labels(g: SparseGraph, params: BiBlockParams, tau) -> np.ndarray:
    """Column-node labels maximizing the expected complete-data likelihood."""
    _require_bipartite(g)
    return update_column_labels(g, params, tau)


def fit_bisbm_side(g: SparseGraph, K_row: int, K_col: int, init_row, init_col,
                   cfg: FitConfig = FitConfig()) -> FitResult:
    """Estimate the column labels of ``g``; the row labels only seed ``pi`` and ``P``."""
    _require_bipartite(g)
    if not 1 <= K_row <= g.n_rows or not 1 <= K_col <= g.n_cols:
        raise ValueError("class counts must lie in 1..(side size)")
    e = _check_labels(init_col, g.n_cols, K_col, "init_col")
    r = _check_labels(init_row, g.n_rows, K_row, "init_row")
    return _fit_core(g, K_row, K_col, e, r, cfg, model="bisbm")


def fit_bisbm(g: SparseGraph, K1: int, K2: int, init_c1, init_c2,
              cfg: FitConfig = FitConfig()) -> Tuple[FitResult, FitResult]:
    """Fit both sides independently.

    Returns ``(result_c2, result_c1)``: the first fit runs on ``A`` and
    estimates the column labels, the second runs on ``A^T`` and estimates
    the row labels.
    """
    res_c2 = fit_bisbm_side(g, K1, K2, init_c1, init_c2, cfg)
    res_c1 = fit_bisbm_side(g.transpose(), K2, K1, init_c2, init_c1, cfg)
    return res_c2, res_c1
