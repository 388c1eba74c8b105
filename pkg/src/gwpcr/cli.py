"""Command-line interface: ``gwpcr {fit,path,simulate,evaluate,replay}``.

Every command writes ``manifest.json`` next to its outputs; ``gwpcr replay
manifest.json`` runs the recorded command again. Outputs contain no
timestamps and floats are written with ``repr``, so a replay reproduces them
byte for byte.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .admm import SolverConfig, fit
from .clustering import (
    canonical_labels,
    clustering_accuracy,
    extract_clusters,
    rand_index,
    relative_cluster_count,
)
from .compositional import build_design, recover_compositional_coefficients
from .graph import (
    SCHEMES,
    all_pairs_distance,
    graph_from_centroids,
    lattice_graph,
    read_centroid_csv,
    read_edge_csv,
    spatial_weights,
)
from .selection import PathError, lambda_grid, r_sweep, solution_path
from .simulation import METHODS, get_design, run_comparison, write_metrics_csv

log = logging.getLogger("gwpcr")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class InputError(Exception):
    """Bad arguments or malformed input files (exit code 1)."""


class NumericalFailure(Exception):
    """A fit or path that could not produce a usable solution (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- input files

def read_data_csv(path, renorm_tol=1e-6):
    """Parse ``id, comp_1..comp_p, x_1..x_q, y[, weight]``.

    Composition rows within ``renorm_tol`` of summing to one are rescaled;
    anything else is rejected with its line number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [(k, rec) for k, rec in enumerate(reader, start=2) if any(f.strip() for f in rec)]
    if not header or header[0] != "id":
        raise InputError(f"{path}:1: first column must be 'id'")
    comp = [k for k, h in enumerate(header) if h.startswith("comp_")]
    cov = [k for k, h in enumerate(header) if h.startswith("x_")]
    if len(comp) < 2:
        raise InputError(f"{path}:1: need at least two comp_ columns")
    if "y" not in header:
        raise InputError(f"{path}:1: missing 'y' column")
    known = {0, header.index("y"), *comp, *cov}
    wcol = header.index("weight") if "weight" in header else None
    if wcol is not None:
        known.add(wcol)
    extra = [header[k] for k in range(len(header)) if k not in known]
    if extra:
        raise InputError(f"{path}:1: unexpected column(s) {extra}")
    ycol = header.index("y")

    ids, x, x2, y, w = [], [], [], [], []
    for lineno, rec in rows:
        if len(rec) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
        try:
            vals = [float(rec[k]) for k in comp]
            covs = [float(rec[k]) for k in cov]
            yy = float(rec[ycol])
            ww = float(rec[wcol]) if wcol is not None else 1.0
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if not np.all(np.isfinite(vals + covs + [yy, ww])):
            raise InputError(f"{path}:{lineno}: non-finite value")
        if min(vals) < 0:
            raise InputError(f"{path}:{lineno}: negative composition entry")
        s = sum(vals)
        if abs(s - 1.0) > renorm_tol:
            raise InputError(f"{path}:{lineno}: composition sums to {s!r}, not 1")
        if ww <= 0:
            raise InputError(f"{path}:{lineno}: weight must be positive")
        ids.append(rec[0].strip())
        x.append([v / s for v in vals])
        x2.append(covs)
        y.append(yy)
        w.append(ww)
    if len(ids) < 2:
        raise InputError(f"{path}: need at least two units")
    if len(set(ids)) != len(ids):
        dup = next(u for u in ids if ids.count(u) > 1)
        raise InputError(f"{path}: duplicate unit id {dup!r}")
    return {
        "ids": ids,
        "x": np.array(x),
        "x2": np.array(x2).reshape(len(ids), len(cov)),
        "y": np.array(y),
        "weights": np.array(w) if wcol is not None else None,
        "comp_names": [header[k] for k in comp],
    }


def load_graph(args, ids):
    """Graph over the data units, in data row order."""
    given = [a for a in (args.edges, args.centroids, args.lattice) if a]
    if len(given) != 1:
        raise InputError("give exactly one of --edges, --centroids or --lattice")
    if args.edges:
        try:
            g = read_edge_csv(args.edges, ids=ids)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        present = set(np.unique(g.edges)) if g.n_edges else set()
        missing = [ids[k] for k in range(len(ids)) if k not in present]
        if missing:
            raise InputError(f"{args.edges}: unit {missing[0]!r} does not appear in the graph")
        return g
    if args.centroids:
        if args.threshold is None:
            raise InputError("--centroids needs --threshold")
        try:
            labels, pts = read_centroid_csv(args.centroids)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        pos = {u: k for k, u in enumerate(labels)}
        for u in ids:
            if u not in pos:
                raise InputError(f"{args.centroids}: no centroid for unit {u!r}")
        extra = [u for u in labels if u not in set(ids)]
        if extra:
            raise InputError(f"{args.centroids}: unit {extra[0]!r} is not in the data")
        return graph_from_centroids(pts[[pos[u] for u in ids]], args.threshold, ids)
    try:
        rows, cols = (int(v) for v in args.lattice.lower().split("x"))
    except ValueError:
        raise InputError(f"--lattice expects RxC, got {args.lattice!r}") from None
    if rows * cols != len(ids):
        raise InputError(f"--lattice {rows}x{cols} has {rows * cols} cells but the data has "
                         f"{len(ids)} units")
    g = lattice_graph(rows, cols)
    return type(g)(n=g.n, edges=g.edges, labels=tuple(ids))


def _weights(graph, scheme, r, dist=None):
    if scheme in ("exponential", "adjusted") and r is None:
        raise InputError(f"--scheme {scheme} needs --r")
    dist = all_pairs_distance(graph) if dist is None else dist
    return spatial_weights(dist, scheme, r if scheme in ("exponential", "adjusted") else None)


def _config(args, lam=0.0):
    try:
        return SolverConfig(lam=lam, gamma=args.gamma, vartheta=args.vartheta,
                            tol_primal=args.tol, tol_dual=args.tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# --------------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_fit_artifacts(out, data, design, result, prefix=""):
    labels = extract_clusters(result)
    comp = recover_compositional_coefficients(result.beta, design.proj)
    d = result.beta.shape[1]
    header = (["id", "cluster"] + [f"beta_{k + 1}" for k in range(d)]
              + [f"coef_{name}" for name in data["comp_names"]])
    rows = [[data["ids"][i], int(labels.labels[i])] + list(result.beta[i]) + list(comp[i])
            for i in range(len(data["ids"]))]
    _write_csv(out / f"{prefix}coefficients.csv", header, rows)
    summary = {
        "lambda": float(result.lam),
        "objective": float(result.objective),
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "primal_residual": float(result.primal_residual),
        "dual_residual": float(result.dual_residual),
        "polished": bool(result.polished),
        "clusters": int(labels.K),
        "eta": [float(v) for v in result.eta],
        "covariates": [f"x_{k + 1}" for k in range(len(result.eta))],
        "dropped_covariates": design.centering.get("dropped_x2", []),
    }
    _write_json(out / f"{prefix}fit.json", summary)
    return labels


def _manifest(args, extra=None):
    m = {"tool": "gwpcr", "version": __version__, "command": args.command}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "command", "verbose"):
            continue
        m[k] = v
    if extra:
        m.update(extra)
    return m


def _abs(p):
    return None if p is None else str(Path(p).resolve())


# ------------------------------------------------------------------- commands

def _prepare(args):
    data = read_data_csv(args.data)
    graph = load_graph(args, data["ids"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            design = build_design(data["x"], data["x2"], data["y"], data["weights"],
                                  drop_degenerate=True)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    return data, graph, design


def cmd_fit(args):
    data, graph, design = _prepare(args)
    if args.param_lambda is None:
        raise InputError("fit needs --lambda")
    w = _weights(graph, args.scheme, args.r)
    try:
        res = fit(design, w, _config(args, args.param_lambda))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(str(exc)) from None
    out = _out_dir(args)
    labels = write_fit_artifacts(out, data, design, res)
    _write_json(out / "manifest.json", _manifest(args))
    print(f"lambda={res.lam!r} clusters={labels.K} converged={res.converged} "
          f"iterations={res.iterations} objective={res.objective!r}")
    if not res.converged:
        raise NumericalFailure(f"no convergence in {res.iterations} iterations "
                               f"(primal {res.primal_residual:.3g}, dual {res.dual_residual:.3g})")
    return EXIT_OK


def _parse_grid(text):
    try:
        lo, hi, count = text.split(",")
        return lambda_grid(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise InputError(f"--grid expects min,max,count: {exc}") from None


def _parse_floats(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{flag} expects comma-separated numbers") from None


def cmd_path(args):
    data, graph, design = _prepare(args)
    grid = _parse_grid(args.grid) if args.grid else None
    dist = all_pairs_distance(graph)
    w = _weights(graph, args.scheme, args.r, dist)
    cfg = _config(args)
    out = _out_dir(args)
    try:
        path = solution_path(design, w, grid=grid, config=cfg, grid_size=args.grid_size)
    except PathError as exc:
        _write_json(out / "manifest.json", _manifest(args))
        raise NumericalFailure(f"{exc}; rerun with a larger --max-iter or --tol") from None
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(str(exc)) from None
    path.write_csv(out / "path.csv")
    labels = write_fit_artifacts(out, data, design, path.selected_fit)
    if args.r_sweep:
        if args.scheme not in ("exponential", "adjusted"):
            raise InputError("--r-sweep needs --scheme exponential or adjusted")
        rs = _parse_floats(args.r_sweep, "--r-sweep")
        try:
            sweep = r_sweep(design, dist, rs, args.scheme, cfg, grid=grid, grid_size=args.grid_size)
        except PathError as exc:
            raise NumericalFailure(str(exc)) from None
        _write_csv(out / "r_sweep.csv", ["r", "min_bic", "lambda", "K"],
                   [[s["r"], s["bic"], s["lambda"], s["K"]] for s in sweep])
    _write_json(out / "manifest.json", _manifest(args))
    n_conv = sum(f.converged for f in path.fits)
    print(f"selected lambda={path.selected_lambda!r} clusters={labels.K} "
          f"bic={float(path.bic[path.selected])!r} ({n_conv}/{len(path.grid)} fits converged)")
    return EXIT_OK


def cmd_simulate(args):
    try:
        design = get_design(args.design)
    except (KeyError, FileNotFoundError, ValueError) as exc:
        raise InputError(str(exc).strip("'\"")) from None
    if args.seed is not None:
        design.seed = int(args.seed)
    if args.R < 1:
        raise InputError("--R must be at least 1")
    methods = []
    for m in args.method or list(METHODS):
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}; expected one of {list(METHODS)}")
        r = None
        if METHODS[m] in ("exponential", "adjusted"):
            r = args.r if args.r is not None else design.reference_r.get(m)
            if r is None:
                raise InputError(f"method {m} needs --r")
        methods.append((m, r))
    cfg = _config(args)
    rows = run_comparison(design, methods, config=cfg, R=args.R, grid_size=args.grid_size,
                          n_jobs=args.n_jobs)
    if args.out:
        out = _out_dir(args)
        write_metrics_csv(rows, out / "metrics.csv")
        _write_json(out / "manifest.json", _manifest(args, {"design_seed": design.seed}))
    w = csv.writer(sys.stdout, lineterminator="\n")
    from .simulation import METRIC_COLUMNS
    w.writerow(METRIC_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return EXIT_OK


def _read_labels(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [(k, r) for k, r in enumerate(reader, start=1) if r and any(f.strip() for f in r)]
    if rows and rows[0][1][0].strip().lower() == "id":
        rows = rows[1:]
    out = {}
    for lineno, rec in rows:
        if len(rec) < 2:
            raise InputError(f"{path}:{lineno}: expected id, cluster")
        uid = rec[0].strip()
        if uid in out:
            raise InputError(f"{path}:{lineno}: duplicate id {uid!r}")
        out[uid] = rec[1].strip()
    return out


def cmd_evaluate(args):
    truth = _read_labels(args.truth)
    est = _read_labels(args.estimate)
    for a, b, name in ((truth, est, args.estimate), (est, truth, args.truth)):
        missing = [u for u in a if u not in b]
        if missing:
            raise InputError(f"{name}: missing id {missing[0]!r}")
    ids = list(truth)
    t = canonical_labels([truth[u] for u in ids])
    e = canonical_labels([est[u] for u in ids])
    true_k = args.true_k if args.true_k is not None else t.K
    metrics = {"RI": rand_index(t, e), "CA": clustering_accuracy(t, e),
               "RCC": relative_cluster_count([e.K], true_k), "K_true": true_k, "K_est": e.K}
    for k in ("RI", "CA", "RCC"):
        print(f"{k}={metrics[k]!r}")
    if args.out:
        out = _out_dir(args)
        _write_json(out / "metrics.json", metrics)
        _write_json(out / "manifest.json", _manifest(args))
    return EXIT_OK


def cmd_replay(args):
    with open(args.manifest) as fh:
        m = json.load(fh)
    if m.get("tool") != "gwpcr" or "command" not in m:
        raise InputError(f"{args.manifest}: not a gwpcr manifest")
    ns = argparse.Namespace(**{k: v for k, v in m.items() if k not in ("tool", "version", "design_seed")})
    if args.out:
        ns.out = args.out
    ns.func = COMMANDS[m["command"]]
    return ns.func(ns)


COMMANDS = {"fit": cmd_fit, "path": cmd_path, "simulate": cmd_simulate,
            "evaluate": cmd_evaluate, "replay": cmd_replay}


# --------------------------------------------------------------------- parser

def _add_solver_flags(p):
    p.add_argument("--gamma", type=float, default=3.0, help="MCP concavity (default 3)")
    p.add_argument("--vartheta", type=float, default=1.0, help="ADMM coefficient (default 1)")
    p.add_argument("--tol", type=float, default=1e-4, help="primal and dual tolerance")
    p.add_argument("--max-iter", type=int, default=2000)


def _add_data_flags(p):
    p.add_argument("data", type=_abs, help="CSV with id, comp_1..comp_p, x_1..x_q, y[, weight]")
    g = p.add_argument_group("graph (choose one)")
    g.add_argument("--edges", type=_abs, help="two-column edge list of unit ids")
    g.add_argument("--centroids", type=_abs, help="id, x, y per unit")
    g.add_argument("--threshold", type=float, help="centroid distance for an edge")
    g.add_argument("--lattice", help="RxC rook lattice in data row order")
    p.add_argument("--scheme", choices=SCHEMES, default="adjusted")
    p.add_argument("--r", type=float, help="decay scale for exponential/adjusted weights")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    p.add_argument("--out", type=_abs, required=True, help="output directory")
    _add_solver_flags(p)


def build_parser():
    parser = _Parser(prog="gwpcr", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"gwpcr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit at one penalty level")
    _add_data_flags(p)
    p.add_argument("--lambda", dest="param_lambda", type=float, required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="fit a lambda path and select by BIC")
    _add_data_flags(p)
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--grid", help="min,max,count (log-spaced)")
    grid.add_argument("--auto-grid", action="store_true",
                      help="search lambda_max, then span lambda_max/1000..lambda_max (default)")
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--r-sweep", help="comma-separated decay scales; writes r_sweep.csv")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("simulate", help="replicated method comparison on a design")
    p.add_argument("--design", required=True, help="bundled name, lattice-RxC, or JSON path")
    p.add_argument("--method", action="append", choices=list(METHODS),
                   help="repeatable; default all four")
    p.add_argument("--r", type=float, help="decay scale (default: the design's reference value)")
    p.add_argument("--R", type=int, default=100, help="replicates (default 100)")
    p.add_argument("--seed", type=int, help="override the design seed")
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--out", type=_abs, help="directory for metrics.csv and manifest.json")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="compare two label files")
    p.add_argument("truth", type=_abs)
    p.add_argument("estimate", type=_abs)
    p.add_argument("--true-k", type=int, help="true cluster count for RCC")
    p.add_argument("--out", type=_abs)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="rerun a recorded manifest")
    p.add_argument("manifest", type=_abs)
    p.add_argument("--out", type=_abs, help="write to a different directory")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"gwpcr: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"gwpcr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"gwpcr: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
