"""Seeded simulation sweeps over the standard block-model settings.

Each setting has a fixed set of grid axes with desk-scale defaults. A sweep
runs every grid point for ``replicates`` seeds, ``seed = base_seed + r``,
and emits one row per (grid point, replicate, fitted side).

CSV columns, in order::

    setting, <axis columns of the setting>, replicate, seed, fitter, side,
    init_nmi, nmi, converged, outer_iters, runtime_ms, final_objective,
    exact_recovery, error

``init_nmi`` scores the initial labels and ``nmi`` the fitted ones.
``runtime_ms`` is fit time only, with initialization excluded.
``side`` is ``c1``/``c2`` for the bipartite setting and empty otherwise.
``exact_recovery`` is filled for the consistency setting only. A replicate
that raises keeps its row, with the exception text in ``error``.

Axes per setting:

========================  ==========================================
``s1_convergence``        ``config`` (``k2``/``k5``), ``init_nmi_target``
``s2_small_dense``        ``n``
``s3_sparse``             ``beta``, ``lam``, ``n``
``dcsbm``                 ``m``, ``n``
``bisbm``                 ``n``
``consistency``           ``gamma``, ``n``, ``a``, ``b``
========================  ==========================================
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import generators as gen
from .bisbm import fit_bisbm
from .dcsbm import fit_dcsbm
from .metrics import exact_recovery, nmi
from .sbm import FitConfig, fit, refine_once
from .spectral import ScpConfig, scp, scp_bipartite

__all__ = ["SETTINGS", "SweepSpec", "run_sweep", "summarize", "write_csv",
           "read_csv", "resolve_threads", "columns_for"]

# Setting-1 block structures: name -> (K, p_between, p_boost)
S1_CONFIGS = {"k2": (2, 0.13, 0.07), "k5": (5, 0.10, 0.13)}

SETTINGS: Dict[str, Dict[str, list]] = {
    "s1_convergence": {"config": ["k2", "k5"],
                       "init_nmi_target": [0.1, 0.2, 0.3, 0.4, 0.5]},
    "s2_small_dense": {"n": [300, 500, 800]},
    "s3_sparse": {"beta": [0.0, 0.05, 0.1, 0.15, 0.2], "lam": [5.0], "n": [4000]},
    "dcsbm": {"m": [2.0, 4.0, 6.0], "n": [1200]},
    "bisbm": {"n": [1200]},
    "consistency": {"gamma": [0.6, 0.7, 0.8], "n": [1000], "a": [60.0], "b": [10.0]},
}

_DEFAULT_FITTER = {"s1_convergence": "ppl", "s2_small_dense": "ppl", "s3_sparse": "ppl",
                   "dcsbm": "dcppl", "bisbm": "ppl", "consistency": "refine"}
_ALLOWED_FITTERS = {"s1_convergence": {"ppl"}, "s2_small_dense": {"ppl", "dcppl"},
                    "s3_sparse": {"ppl", "dcppl"}, "dcsbm": {"ppl", "dcppl"},
                    "bisbm": {"ppl"}, "consistency": {"refine", "ppl"}}

_TAIL = ["replicate", "seed", "fitter", "side", "init_nmi", "nmi", "converged",
         "outer_iters", "runtime_ms", "final_objective", "exact_recovery", "error"]
_AXIS_CASTS = {"config": str, "n": int}


def columns_for(setting: str) -> List[str]:
    return ["setting", *SETTINGS[setting].keys(), *_TAIL]


@dataclass(frozen=True)
class SweepSpec:
    setting: str
    grid: Mapping[str, Sequence] = field(default_factory=dict)
    replicates: int = 1
    base_seed: int = 0
    fitter: Optional[str] = None
    fit_config: FitConfig = FitConfig()

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; choose from {sorted(SETTINGS)}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        axes = SETTINGS[self.setting]
        for name, values in self.grid.items():
            if name not in axes:
                raise ValueError(f"setting {self.setting} has no axis {name!r}")
            if len(values) == 0:
                raise ValueError(f"axis {name!r} is empty")
        if self.fitter is not None and self.fitter not in _ALLOWED_FITTERS[self.setting]:
            raise ValueError(f"fitter {self.fitter!r} not available for {self.setting}")

    @property
    def resolved_fitter(self) -> str:
        return self.fitter or _DEFAULT_FITTER[self.setting]

    def axes(self) -> Dict[str, list]:
        out = {}
        for name, default in SETTINGS[self.setting].items():
            cast = _AXIS_CASTS.get(name, float)
            out[name] = [cast(v) for v in self.grid.get(name, default)]
        return out

    def points(self) -> List[Dict[str, object]]:
        axes = self.axes()
        return [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]

    def to_dict(self):
        return {"setting": self.setting, "grid": self.axes(), "replicates": self.replicates,
                "base_seed": self.base_seed, "fitter": self.resolved_fitter,
                "fit_config": dict(self.fit_config.__dict__),
                "seeds": [self.base_seed + r for r in range(self.replicates)]}


def parse_grid(items: Sequence[str]) -> Dict[str, list]:
    """``["beta=0,0.05", "n=4000"]`` -> ``{"beta": ["0", "0.05"], "n": ["4000"]}``."""
    grid = {}
    for item in items:
        name, sep, values = item.partition("=")
        if not sep or not name.strip() or not values.strip():
            raise ValueError(f"grid override must look like axis=v1,v2; got {item!r}")
        grid[name.strip()] = [v.strip() for v in values.split(",") if v.strip()]
    return grid


# ---------------------------------------------------------------------------
# one replicate


def _fit(fitter, g, K, e0, cfg):
    if fitter == "dcppl":
        return fit_dcsbm(g, K, e0, cfg)
    return fit(g, K, e0, cfg)


def _record(res, truth, init):
    return {"init_nmi": nmi(truth, init), "nmi": nmi(truth, res.labels),
            "converged": bool(res.converged), "outer_iters": res.outer_iters,
            "runtime_ms": res.runtime_ms, "final_objective": res.objective_trace[-1]}


def _scp(g, K, seed):
    return scp(g, ScpConfig(k=K, seed=seed))


def _replicate(setting, point, fitter, seed, cfg) -> List[dict]:
    if setting == "s1_convergence":
        K, p1, p2 = S1_CONFIGS[point["config"]]
        c = gen.equal_size_labels(500, K)
        g, _ = gen.sample_sbm(gen.SbmSpec(500, np.full(K, 1.0 / K),
                                          gen.planted_partition(K, p1, p2)), seed, labels=c)
        e0 = gen.perturb_labels_to_nmi(c, point["init_nmi_target"], seed)
        return [_record(fit(g, K, e0, cfg), c, e0)]
    if setting == "s2_small_dense":
        n = point["n"]
        c = gen.equal_size_labels(n, 2)
        g, _ = gen.sample_sbm(gen.SbmSpec(n, np.full(2, 0.5), gen.planted_partition(2, 0.84, 0.06)),
                              seed, labels=c)
        e0 = _scp(g, 2, seed)
        return [_record(_fit(fitter, g, 2, e0, cfg), c, e0)]
    if setting == "s3_sparse":
        n = point["n"]
        pi = np.array([0.2, 0.3, 0.5])
        P = gen.build_edge_prob_matrix(3, point["beta"], np.ones(3), point["lam"], pi, n)
        g, c = gen.sample_sbm(gen.SbmSpec(n, pi, P), seed)
        e0 = _scp(g, 3, seed)
        return [_record(_fit(fitter, g, 3, e0, cfg), c, e0)]
    if setting == "dcsbm":
        n = point["n"]
        pi = np.array([0.2, 0.3, 0.5])
        P = 1e-2 * (np.ones((3, 3)) + np.diag([2.0, 3.0, 4.0]))
        theta = gen.sample_theta_two_point(n, point["m"], seed)
        g, c = gen.sample_dcsbm(gen.DcsbmSpec(n, pi, P, theta), seed)
        e0 = _scp(g, 3, seed)
        return [_record(_fit(fitter, g, 3, e0, cfg), c, e0)]
    if setting == "bisbm":
        n = point["n"]
        P = 0.1 * (1.2 + 0.4 * np.eye(2))
        half = np.full(2, 0.5)
        g, c1, c2 = gen.sample_bisbm(gen.BisbmSpec(n, n, half, half, P), seed)
        e1, e2 = scp_bipartite(g, 2, 2, ScpConfig(k=2, seed=seed))
        r2, r1 = fit_bisbm(g, 2, 2, e1, e2, cfg)
        return [dict(_record(r1, c1, e1), side="c1"), dict(_record(r2, c2, e2), side="c2")]
    if setting == "consistency":
        n = point["n"]
        c = gen.equal_size_labels(n, 2)
        P = gen.two_block_edge_probs(n, point["a"], point["b"])
        g, _ = gen.sample_sbm(gen.SbmSpec(n, np.full(2, 0.5), P), seed, labels=c)
        e0 = gen.perturb_labels(c, point["gamma"], seed)
        if fitter == "refine":
            e = refine_once(g, e0, K=2, cfg=cfg)
            return [{"init_nmi": nmi(c, e0), "nmi": nmi(c, e), "outer_iters": 1,
                     "exact_recovery": bool(exact_recovery(c, e))}]
        res = fit(g, 2, e0, cfg)
        return [dict(_record(res, c, e0), exact_recovery=bool(exact_recovery(c, res.labels)))]
    raise ValueError(setting)


def _job(args):
    setting, point, fitter, replicate, seed, cfg = args
    base = {"setting": setting, **point, "replicate": replicate, "seed": seed,
            "fitter": fitter, "side": ""}
    try:
        parts = _replicate(setting, point, fitter, seed, cfg)
    except Exception as exc:  # recorded per row; the sweep goes on
        return [dict(base, error=f"{type(exc).__name__}: {exc}")]
    return [{**base, **p} for p in parts]


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count from the argument, else ``BLOCKFIT_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("BLOCKFIT_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def run_sweep(spec: SweepSpec, threads: Optional[int] = None) -> List[dict]:
    """All rows of the sweep, in grid order then replicate order.

    Replicates are independent and run on a process pool when
    ``threads > 1``. Rows come back in the same order either way.
    """
    fitter = spec.resolved_fitter
    jobs = [(spec.setting, pt, fitter, r, spec.base_seed + r, spec.fit_config)
            for pt in spec.points() for r in range(spec.replicates)]
    threads = resolve_threads(threads)
    if threads == 1 or len(jobs) == 1:
        chunks = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            chunks = list(pool.map(_job, jobs))
    cols = columns_for(spec.setting)
    return [{c: row.get(c, "") for c in cols} for chunk in chunks for row in chunk]


# ---------------------------------------------------------------------------
# aggregation and IO


def _mean_sd(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def summarize(rows: Sequence[dict]) -> List[dict]:
    """Mean and sample sd (``ddof=1``; 0 for one replicate) per grid point.

    Groups by every column that precedes ``replicate`` plus fitter and
    side, in first-seen order. Rows with an error count towards
    ``n_errors`` and are left out of the statistics.
    """
    if not rows:
        return []
    keys = list(rows[0].keys())
    group_cols = keys[:keys.index("replicate")] + ["fitter", "side"]
    groups: Dict[tuple, List[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[c] for c in group_cols), []).append(row)
    out = []
    for gkey, members in groups.items():
        good = [r for r in members if not r.get("error")]
        agg = dict(zip(group_cols, gkey))
        agg["replicates"] = len(members)
        agg["n_errors"] = len(members) - len(good)
        for col in ("init_nmi", "nmi", "runtime_ms", "outer_iters"):
            vals = [float(r[col]) for r in good if r.get(col, "") != ""]
            agg[f"{col}_mean"], agg[f"{col}_sd"] = _mean_sd(vals)
        for col, name in (("converged", "converged_rate"), ("exact_recovery", "exact_recovery_rate")):
            vals = [_truthy(r[col]) for r in good if r.get(col, "") != ""]
            agg[name] = float(np.mean(vals)) if vals else math.nan
        out.append(agg)
    return out


def _truthy(v) -> float:
    if isinstance(v, str):
        return 1.0 if v.strip().lower() in ("true", "1") else 0.0
    return float(bool(v))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(rows: Sequence[dict], dest=None) -> str:
    """Write rows (keys of the first row as header); returns the CSV text."""
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(source) -> List[dict]:
    with open(source, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(spec: SweepSpec, threads: int) -> dict:
    return {"spec": spec.to_dict(), "threads": threads,
            "columns": columns_for(spec.setting)}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
