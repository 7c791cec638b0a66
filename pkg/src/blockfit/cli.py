"""Command line entry point: ``blockfit <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Errors go to stderr as ``E_USAGE:``, ``E_DATA:`` or ``E_NUMERIC:`` lines.

Any subcommand accepts ``--config FILE``, a flat ``key = value`` file
whose keys are long option names (dashes or underscores). Values on the
command line override the file, which overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from . import bench as bench_mod
from . import generators as gen
from .bisbm import fit_bisbm
from .dcsbm import fit_dcsbm
from .graph import GraphFormatError, load_edge_list, read_labels, write_edge_list, write_labels
from .metrics import exact_recovery, misclassification_rate, nmi
from .sbm import FitConfig, fit
from .spectral import EigensolverError, ScpConfig, scp, scp_bipartite
from ._random import make_rng

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument types


def _pos_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _pos_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _vector(text):
    try:
        return np.array([float(x) for x in text.split(",")], dtype=np.float64)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text):
    """Rows separated by ``;``, entries by ``,``."""
    try:
        rows = [[float(x) for x in r.split(",")] for r in text.split(";") if r.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad matrix {text!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise argparse.ArgumentTypeError("matrix rows must have equal length")
    return np.array(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--config", help="flat key=value file with defaults for this command")
    p.add_argument("--threads", type=_pos_int, default=None,
                   help="worker cap (fallback: BLOCKFIT_THREADS, then 1)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def _graph_args(p):
    p.add_argument("graph", help="edge-list file")
    p.add_argument("--one-based", action="store_true", help="node indices start at 1")


def _fit_args(p):
    p.add_argument("--outer-tol", type=_pos_float, default=1e-6)
    p.add_argument("--outer-max", type=_pos_int, default=60)
    p.add_argument("--inner-tol", type=_pos_float, default=1e-8)
    p.add_argument("--inner-max", type=_pos_int, default=100)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--reg-tau", type=float, default=0.25, help="SCP regularizer when --init scp")
    p.add_argument("--out", required=True, help="result JSON path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockfit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"blockfit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sim = sub.add_parser("simulate", help="sample a synthetic network")
    sim.add_argument("model", choices=["sbm", "dcsbm", "bisbm"])
    sim.add_argument("--n", type=_pos_int, help="node count (column nodes for bisbm)")
    sim.add_argument("--k", type=_pos_int, help="number of communities")
    sim.add_argument("--pi", type=_vector, help="class proportions (default uniform)")
    sim.add_argument("--P", dest="P", type=_matrix, help="block matrix 'a,b;c,d'")
    sim.add_argument("--p-between", type=float, help="planted partition: between probability")
    sim.add_argument("--p-boost", type=float, help="planted partition: within minus between")
    sim.add_argument("--beta", type=float, help="out-in ratio for the expected-degree construction")
    sim.add_argument("--lam", type=_pos_float, help="target expected degree")
    sim.add_argument("--omega", type=_vector, help="within-class weights (default all ones)")
    sim.add_argument("--equal-sizes", action="store_true", help="equal-size communities")
    sim.add_argument("--theta-m", type=float, help="dcsbm: two-point degree ratio m")
    sim.add_argument("--rows", type=_pos_int, help="bisbm: row node count")
    sim.add_argument("--k1", type=_pos_int, help="bisbm: row classes")
    sim.add_argument("--k2", type=_pos_int, help="bisbm: column classes")
    sim.add_argument("--pi1", type=_vector)
    sim.add_argument("--pi2", type=_vector)
    sim.add_argument("--seed", type=_nonneg_int, default=0)
    sim.add_argument("--one-based", action="store_true")
    sim.add_argument("--out", required=True,
                     help="prefix: writes PREFIX.edges, PREFIX.labels (.labels1/.labels2), PREFIX.json")
    _common(sim)

    ini = sub.add_parser("init", help="initial labels")
    ini.add_argument("method", choices=["scp"])
    _graph_args(ini)
    ini.add_argument("--k", type=_pos_int, required=True)
    ini.add_argument("--reg-tau", type=float, default=0.25)
    ini.add_argument("--restarts", type=_pos_int, default=20, help="k-means restarts")
    ini.add_argument("--seed", type=_nonneg_int, default=0)
    ini.add_argument("--out", required=True, help="label file, one integer per line")
    _common(ini)

    fit_p = sub.add_parser("fit", help="fit a block model")
    fsub = fit_p.add_subparsers(dest="model", parser_class=_Parser)
    fsub.required = True
    for name in ("sbm", "dcsbm"):
        p = fsub.add_parser(name)
        _graph_args(p)
        p.add_argument("--k", type=_pos_int, required=True)
        p.add_argument("--init", default="scp", help="'scp' or a label file")
        p.add_argument("--restarts", type=_pos_int, default=1,
                       help="total runs; runs after the first start from perturbed inits and the best objective wins")
        if name == "dcsbm":
            p.add_argument("--theta-update", choices=["symmetric", "row"], default="symmetric")
        _fit_args(p)
        _common(p)
    p = fsub.add_parser("bisbm")
    _graph_args(p)
    p.add_argument("--k1", type=_pos_int, required=True)
    p.add_argument("--k2", type=_pos_int, required=True)
    p.add_argument("--rows", type=_pos_int, required=True)
    p.add_argument("--cols", type=_pos_int, required=True)
    p.add_argument("--init", default="scp", help="'scp' or 'files' (with --init-rows/--init-cols)")
    p.add_argument("--init-rows", help="row-node label file")
    p.add_argument("--init-cols", help="column-node label file")
    _fit_args(p)
    _common(p)

    ev = sub.add_parser("eval", help="score predicted labels")
    ev.add_argument("--truth", required=True, help="true label file")
    ev.add_argument("--pred", required=True, help="result JSON or label file")
    ev.add_argument("--metric", choices=["nmi", "acc", "exact"], default="nmi")
    ev.add_argument("--side", choices=["c1", "c2"], default="c2",
                    help="which label set of a bisbm result")
    ev.add_argument("--one-based", action="store_true")
    ev.add_argument("--out", help="also write the JSON to this path")
    _common(ev)

    bn = sub.add_parser("bench", help="run a simulation sweep")
    bn.add_argument("setting", choices=sorted(bench_mod.SETTINGS))
    bn.add_argument("--grid", action="append", default=[], metavar="AXIS=V1,V2",
                    help="override one grid axis (repeatable)")
    bn.add_argument("--replicates", type=_pos_int, default=10)
    bn.add_argument("--base-seed", type=_nonneg_int, default=0)
    bn.add_argument("--fitter", default=None)
    bn.add_argument("--summary", help="also write the per-point summary CSV here")
    bn.add_argument("--out", required=True, help="sweep CSV path")
    _common(bn)
    return parser


# ---------------------------------------------------------------------------
# config files


def read_config(path) -> Dict[str, str]:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, value = s.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _leaf_parser(parser, argv):
    """The subparser that will handle ``argv`` (for applying config defaults)."""
    node = parser
    args = list(argv)
    while True:
        actions = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions:
            return node
        choices = actions[0].choices
        hit = next((i for i, a in enumerate(args) if a in choices), None)
        if hit is None:
            return node
        node = choices[args[hit]]
        args = args[hit + 1:]


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Install config-file values as defaults of the parser handling ``argv``."""
    path = _config_path(argv)
    if not path:
        return
    values = read_config(path)
    leaf = _leaf_parser(parser, argv)
    known = {a.dest: a for a in leaf._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in raw.split(";") if v.strip()]
        else:
            defaults[key] = raw  # argparse runs ``type`` on string defaults
        action.required = False
    leaf.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# helpers


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _resolved(ns) -> dict:
    skip = {"config", "manifest"}
    return {k: _jsonable(v) for k, v in sorted(vars(ns).items()) if k not in skip}


def _write_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def _emit_manifest(ns, argv, inputs: List[str], seeds, started, default_path):
    man = {
        "subcommand": " ".join(x for x in (ns.command, getattr(ns, "model", None),
                                           getattr(ns, "method", None),
                                           getattr(ns, "setting", None)) if x),
        "argv": list(argv),
        "config": _resolved(ns),
        "config_file": ns.config,
        "seeds": seeds,
        "inputs": {p: _digest(p) for p in inputs},
        "version": __version__,
        "wall_clock_s": time.time() - started,
    }
    path = ns.manifest or default_path
    if path:
        _write_json(man, path)
    return man


def _load_graph(ns, dims=None):
    if not os.path.exists(ns.graph):
        raise DataError(f"input file not found: {ns.graph}")
    return load_edge_list(ns.graph, one_based=ns.one_based, bipartite_dims=dims)


def _load_labels(path, n, K, one_based=False, what="labels"):
    if not os.path.exists(path):
        raise DataError(f"label file not found: {path}")
    lab = read_labels(path, one_based=one_based)
    if lab.size != n:
        raise DataError(f"{what}: expected {n} labels, found {lab.size}")
    if lab.size and (lab.min() < 0 or lab.max() >= K):
        raise DataError(f"{what}: labels must lie in 0..{K - 1}")
    return lab


def _fit_cfg(ns, **extra):
    return FitConfig(inner_tol=ns.inner_tol, inner_max_iter=ns.inner_max,
                     outer_tol=ns.outer_tol, outer_max_iter=ns.outer_max,
                     seed=ns.seed, **extra)


def _check_k(k, n, name="--k"):
    if k > n:
        raise UsageError(f"{name} ({k}) exceeds the number of nodes ({n})")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(ns, argv, started):
    if ns.model == "bisbm":
        if ns.rows is None or ns.n is None or ns.k1 is None or ns.k2 is None or ns.P is None:
            raise UsageError("simulate bisbm needs --rows, --n, --k1, --k2 and --P")
        pi1 = ns.pi1 if ns.pi1 is not None else np.full(ns.k1, 1.0 / ns.k1)
        pi2 = ns.pi2 if ns.pi2 is not None else np.full(ns.k2, 1.0 / ns.k2)
        spec = gen.BisbmSpec(ns.rows, ns.n, pi1, pi2, ns.P)
        g, c1, c2 = gen.sample_bisbm(spec, ns.seed)
        write_edge_list(g, ns.out + ".edges", one_based=ns.one_based)
        write_labels(c1 + ns.one_based, ns.out + ".labels1")
        write_labels(c2 + ns.one_based, ns.out + ".labels2")
        spec_d = spec.to_dict()
    else:
        if ns.n is None:
            raise UsageError("--n is required")
        P = ns.P
        K = ns.k if ns.k is not None else (P.shape[0] if P is not None else None)
        if K is None:
            raise UsageError("give --k or --P")
        pi = ns.pi if ns.pi is not None else np.full(K, 1.0 / K)
        if P is None:
            if ns.beta is not None and ns.lam is not None:
                omega = ns.omega if ns.omega is not None else np.ones(K)
                P = gen.build_edge_prob_matrix(K, ns.beta, omega, ns.lam, pi, ns.n)
            elif ns.p_between is not None and ns.p_boost is not None:
                P = gen.planted_partition(K, ns.p_between, ns.p_boost)
            else:
                raise UsageError("give --P, --beta with --lam, or --p-between with --p-boost")
        labels = gen.equal_size_labels(ns.n, K) if ns.equal_sizes else None
        if ns.model == "sbm":
            spec = gen.SbmSpec(ns.n, pi, P)
            g, c = gen.sample_sbm(spec, ns.seed, labels=labels)
        else:
            if ns.theta_m is None:
                raise UsageError("simulate dcsbm needs --theta-m")
            theta = gen.sample_theta_two_point(ns.n, ns.theta_m, ns.seed)
            spec = gen.DcsbmSpec(ns.n, pi, P, theta)
            g, c = gen.sample_dcsbm(spec, ns.seed, labels=labels)
        write_edge_list(g, ns.out + ".edges", one_based=ns.one_based)
        write_labels(c + ns.one_based, ns.out + ".labels")
        spec_d = spec.to_dict()
    man = _emit_manifest(ns, argv, [], {"seed": ns.seed}, started, None)
    man["spec"] = spec_d
    man["edges"] = int(g.n_undirected_edges if not g.bipartite else g.edge_count)
    _write_json(man, ns.manifest or ns.out + ".json")


def _cmd_init(ns, argv, started):
    g = _load_graph(ns)
    _check_k(ns.k, g.n_rows)
    cfg = ScpConfig(k=ns.k, reg_tau=ns.reg_tau, kmeans_restarts=ns.restarts, seed=ns.seed)
    write_labels(scp(g, cfg), ns.out)
    _emit_manifest(ns, argv, [ns.graph], {"seed": ns.seed}, started, ns.out + ".manifest.json")


def _perturb(e, K, rng, frac=0.1):
    e = e.copy()
    idx = rng.choice(e.size, size=max(1, int(frac * e.size)), replace=False)
    e[idx] = rng.integers(0, K, idx.size)
    return e


def _cmd_fit_square(ns, argv, started):
    g = _load_graph(ns)
    _check_k(ns.k, g.n_rows)
    inputs = [ns.graph]
    if ns.init == "scp":
        e0 = scp(g, ScpConfig(k=ns.k, reg_tau=ns.reg_tau, seed=ns.seed))
    else:
        e0 = _load_labels(ns.init, g.n_rows, ns.k, ns.one_based, "--init")
        inputs.append(ns.init)
    if ns.model == "dcsbm":
        cfg = _fit_cfg(ns, theta_update=ns.theta_update)
        runner = fit_dcsbm
    else:
        cfg = _fit_cfg(ns)
        runner = fit
    best = runner(g, ns.k, e0, cfg)
    restart_rng = make_rng(ns.seed, stream=11)
    for _ in range(ns.restarts - 1):
        res = runner(g, ns.k, _perturb(e0, ns.k, restart_rng), cfg)
        if res.objective_trace[-1] > best.objective_trace[-1]:
            best = res
    out = best.to_dict()
    out["seed"] = ns.seed
    _write_json(out, ns.out)
    _emit_manifest(ns, argv, inputs, {"seed": ns.seed}, started, ns.out + ".manifest.json")


def _cmd_fit_bisbm(ns, argv, started):
    g = _load_graph(ns, dims=(ns.rows, ns.cols))
    _check_k(ns.k1, g.n_rows, "--k1")
    _check_k(ns.k2, g.n_cols, "--k2")
    inputs = [ns.graph]
    if ns.init == "scp":
        c1, c2 = scp_bipartite(g, ns.k1, ns.k2, ScpConfig(k=ns.k1, reg_tau=ns.reg_tau, seed=ns.seed))
    elif ns.init == "files":
        if not ns.init_rows or not ns.init_cols:
            raise UsageError("--init files needs --init-rows and --init-cols")
        c1 = _load_labels(ns.init_rows, g.n_rows, ns.k1, ns.one_based, "--init-rows")
        c2 = _load_labels(ns.init_cols, g.n_cols, ns.k2, ns.one_based, "--init-cols")
        inputs += [ns.init_rows, ns.init_cols]
    else:
        raise UsageError("--init must be 'scp' or 'files'")
    r2, r1 = fit_bisbm(g, ns.k1, ns.k2, c1, c2, _fit_cfg(ns))
    d1, d2 = r1.to_dict(), r2.to_dict()
    out = {
        "model": "bisbm",
        "labels_c1": d1["labels"],
        "labels_c2": d2["labels"],
        "pi1": d2["pi"],
        "P": d2["P"],
        "pi2": d1["pi"],
        "P_transpose_fit": d1["P"],
        "objective_trace_c1": d1["objective_trace"],
        "objective_trace_c2": d2["objective_trace"],
        "converged": bool(r1.converged and r2.converged),
        "outer_iters_c1": d1["outer_iters"],
        "outer_iters_c2": d2["outer_iters"],
        "runtime_ms": d1["runtime_ms"] + d2["runtime_ms"],
        "seed": ns.seed,
    }
    _write_json(out, ns.out)
    _emit_manifest(ns, argv, inputs, {"seed": ns.seed}, started, ns.out + ".manifest.json")


def _read_pred(ns):
    if not os.path.exists(ns.pred):
        raise DataError(f"prediction file not found: {ns.pred}")
    with open(ns.pred) as fh:
        head = fh.read(1)
    if head == "{":
        try:
            with open(ns.pred) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{ns.pred}: invalid JSON ({exc.msg})") from None
        key = "labels" if "labels" in obj else f"labels_{ns.side}"
        if key not in obj:
            raise DataError(f"{ns.pred}: no '{key}' field")
        return np.asarray(obj[key], dtype=np.int64)
    return read_labels(ns.pred, one_based=ns.one_based)


def _cmd_eval(ns, argv, started):
    if not os.path.exists(ns.truth):
        raise DataError(f"truth file not found: {ns.truth}")
    truth = read_labels(ns.truth, one_based=ns.one_based)
    pred = _read_pred(ns)
    if truth.size != pred.size:
        raise DataError(f"truth has {truth.size} labels but prediction has {pred.size}")
    if ns.metric == "nmi":
        value = nmi(truth, pred)
    elif ns.metric == "acc":
        value = 1.0 - misclassification_rate(truth, pred)
    else:
        value = bool(exact_recovery(truth, pred))
    man = _emit_manifest(ns, argv, [ns.truth, ns.pred], {}, started,
                         ns.out + ".manifest.json" if ns.out else None)
    out = {"metric": ns.metric, "value": value, "n": int(truth.size), "manifest": man}
    text = json.dumps(out, indent=2)
    print(text)
    if ns.out:
        _write_json(out, ns.out)


def _cmd_bench(ns, argv, started):
    try:
        spec = bench_mod.SweepSpec(ns.setting, bench_mod.parse_grid(ns.grid),
                                   replicates=ns.replicates, base_seed=ns.base_seed,
                                   fitter=ns.fitter)
        spec.axes()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    threads = bench_mod.resolve_threads(ns.threads)
    rows = bench_mod.run_sweep(spec, threads=threads)
    bench_mod.write_csv(rows, ns.out)
    if ns.summary:
        bench_mod.write_csv(bench_mod.summarize(rows), ns.summary)
    man = _emit_manifest(ns, argv, [], spec.to_dict()["seeds"], started, None)
    man.update(bench_mod.manifest(spec, threads))
    man["failed_rows"] = sum(1 for r in rows if r["error"])
    _write_json(man, ns.manifest or ns.out + ".manifest.json")


def _dispatch(ns, argv, started):
    if ns.command == "simulate":
        return _cmd_simulate(ns, argv, started)
    if ns.command == "init":
        return _cmd_init(ns, argv, started)
    if ns.command == "fit":
        if ns.model == "bisbm":
            return _cmd_fit_bisbm(ns, argv, started)
        return _cmd_fit_square(ns, argv, started)
    if ns.command == "eval":
        return _cmd_eval(ns, argv, started)
    return _cmd_bench(ns, argv, started)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.time()
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        ns = parser.parse_args(argv)
        if getattr(ns, "threads", None) is None:
            ns.threads = bench_mod.resolve_threads(None)
        _dispatch(ns, argv, started)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"E_USAGE: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except gen.ParameterError as exc:
        print(f"E_USAGE: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EigensolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"E_NUMERIC: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GraphFormatError, OSError, ValueError) as exc:
        print(f"E_DATA: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
