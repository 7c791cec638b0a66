"""Community detection in block models by profile pseudo likelihood."""

__version__ = "0.1.0"

from .graph import (GraphFormatError, SparseGraph, degrees, largest_connected_component,
                    load_edge_list, read_labels, write_edge_list, write_labels)
from .metrics import exact_recovery, match_labels, misclassification_rate, nmi
from .sbm import (BlockParams, FitConfig, FitResult, e_step, fit, log_pseudo_likelihood,
                  m_step, refine_once, run_inner_em, update_column_labels)
from .dcsbm import (DCParams, dc_cm_step, dc_e_step, dc_log_pseudo_likelihood,
                    dc_update_labels, fit_dcsbm, init_dc_params, run_inner_ecm)
from .bisbm import fit_bisbm
from .spectral import EigensolverError, ScpConfig, kmeans, scp, scp_bipartite, top_eigenpairs
from .estimators import BiPPL, DCPPL, PPLSBM, SpectralInit, check_graph

__all__ = [
    "SparseGraph", "GraphFormatError", "load_edge_list", "write_edge_list", "read_labels",
    "write_labels", "degrees", "largest_connected_component",
    "nmi", "match_labels", "misclassification_rate", "exact_recovery",
    "BlockParams", "FitConfig", "FitResult", "log_pseudo_likelihood", "e_step", "m_step",
    "run_inner_em", "update_column_labels", "fit", "refine_once",
    "DCParams", "dc_log_pseudo_likelihood", "init_dc_params", "dc_e_step", "dc_cm_step",
    "dc_update_labels", "run_inner_ecm", "fit_dcsbm",
    "fit_bisbm",
    "ScpConfig", "EigensolverError", "top_eigenpairs", "kmeans", "scp", "scp_bipartite",
    "SpectralInit", "PPLSBM", "DCPPL", "BiPPL", "check_graph",
]
