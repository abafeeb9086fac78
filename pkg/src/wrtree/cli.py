"""wrtree command-line driver.

Reports are JSON; tables and figure data are CSV whose leading ``# `` lines
hold the resolved configuration.  Exit status: 0 ok, 2 invalid parameters,
3 internal inconsistency.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .boundary_fields import (
    critical_scan,
    discontinuity_certificate,
    field_table,
    fixed_points_inner,
    fixed_points_outer,
    initial_state,
    run_recursion,
)
from .config import load_config, merge
from .dynamics import make_kernel
from .percolation import gw_iterate, lambda_thresholds, mc_cluster_stats
from .regime import (
    SCAN_COLUMNS,
    classify,
    figure_boundary_fields,
    figure_inner_map,
    grid_points,
    scan,
    transition_band,
)
from .static_model import InconsistencyError, ModelParams, ParameterError
from .tree import (
    build_truncation,
    constant_configuration,
    read_configuration,
    subtree_pattern,
)

EXIT_PARAMS, EXIT_INCONSISTENT = 2, 3


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def parse_grid(spec) -> list[float]:
    """'a,b,c', 'lin:start:stop:num' or 'geom:start:stop:num'."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    spec = str(spec).strip()
    try:
        if spec.startswith(("lin:", "geom:")):
            kind, a, b, n = spec.split(":")
            fn = np.linspace if kind == "lin" else np.geomspace
            return [float(x) for x in fn(float(a), float(b), int(n))]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ParameterError(f"bad grid specification {spec!r}") from None


class _Sink:
    def __init__(self, path):
        self.path = path

    def write(self, text: str):
        if self.path:
            with open(self.path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def emit_json(args, config: dict, payload: dict):
    doc = {"config": config, **payload}
    _Sink(args.out).write(json.dumps(doc, indent=2, default=_json_default) + "\n")


def csv_text(config: dict, columns, rows) -> str:
    buf = io.StringIO()
    for key in sorted(config):
        buf.write(f"# {key}={config[key]!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        values = [row[c] for c in columns] if isinstance(row, dict) else row
        w.writerow([_cell(v) for v in values])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def emit_csv(args, config, columns, rows):
    _Sink(args.out).write(csv_text(config, columns, rows))


def _need(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        flags = ", ".join("--" + {"lam": "lambda", "t": "time"}.get(k, k) for k in missing)
        raise ParameterError(f"missing required parameter(s): {flags}")


def _resolve(args, keys) -> dict:
    file_values = load_config(args.config_file) if args.config_file else {}
    cli = {k: getattr(args, k, None) for k in keys}
    cli["seed"] = args.seed
    cli["threads"] = args.threads
    cfg = merge(file_values, cli)
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", 1)
    if cfg["seed"] is None:
        cfg["seed"] = 0
    if cfg["threads"] is None:
        cfg["threads"] = 1
    return cfg


# -- subcommands


def cmd_classify(args):
    cfg = _resolve(args, ["d", "beta", "lam", "t", "s", "depth"])
    _need(cfg, "d", "beta", "lam", "t")
    cfg.setdefault("depth", 6)
    cfg["depth"] = cfg.get("depth") or 6
    rep = classify(int(cfg["d"]), cfg["beta"], cfg["lam"], cfg["t"], cfg.get("s"), cfg["depth"])
    emit_json(args, cfg, {"report": rep.to_dict()})


def _scan_rows(cfg):
    _need(cfg, "d", "betas", "lambdas", "times")
    pts = grid_points(int(cfg["d"]), cfg.get("s"), parse_grid(cfg["betas"]),
                      parse_grid(cfg["lambdas"]), parse_grid(cfg["times"]),
                      int(cfg.get("depth") or 6))
    return scan(pts, threads=int(cfg["threads"]), cache_dir=cfg.get("cache"))


def cmd_scan(args):
    cfg = _resolve(args, ["d", "s", "betas", "lambdas", "times", "depth", "cache"])
    rows = _scan_rows(cfg)
    if args.band:
        emit_json(args, cfg, {"band": transition_band(rows), "rows": rows})
    else:
        emit_csv(args, cfg, SCAN_COLUMNS, rows)


def cmd_figure(args):
    keys = ["d", "s", "beta", "t", "ht", "depth", "pattern", "sign", "points",
            "betas", "lambdas", "times", "cache"]
    cfg = _resolve(args, keys)
    cfg["which"] = args.which
    if args.which == "boundary-fields":
        kw = {k: cfg[k] for k in ("d", "beta", "t", "s", "depth") if cfg.get(k) is not None}
        rows, meta = figure_boundary_fields(
            **kw, eta=cfg.get("pattern") or "subtree", sign=int(cfg.get("sign") or -1))
        cfg.update(meta)
        emit_csv(args, cfg, ("child", "parent", "ring", "eta", "field"), rows)
    elif args.which == "inner-map":
        kw = {k: cfg[k] for k in ("d", "s", "beta") if cfg.get(k) is not None}
        ht = cfg.get("ht")
        if ht is None:
            ht = make_kernel(cfg["t"]).ht if cfg.get("t") is not None else 0.0
        rows, meta = figure_inner_map(**kw, ht=ht, points=int(cfg.get("points") or 401))
        cfg.update(meta)
        emit_csv(args, cfg, ("kind", "x", "y", "attractive"), rows)
    else:
        emit_csv(args, cfg, SCAN_COLUMNS, _scan_rows(cfg))


def cmd_fixed_points(args):
    cfg = _resolve(args, ["d", "s", "beta", "t", "ht"])
    _need(cfg, "d", "beta")
    d, beta = int(cfg["d"]), cfg["beta"]
    if cfg.get("ht") is not None:
        ht = cfg["ht"]
    elif cfg.get("t") is not None:
        ht = make_kernel(cfg["t"]).ht
    else:
        raise ParameterError("give --time or --ht")
    cfg["ht_used"] = ht
    out = {}
    if ht > 0:
        out["outer"] = fixed_points_outer(d, beta, ht).to_dict()
    if cfg.get("s") is not None:
        s = int(cfg["s"])
        inner = fixed_points_inner(d, s, beta, ht)
        out["inner"] = inner.to_dict()
        out["f_plus"] = inner.positive[-1] if inner.positive else None
        if (d + 1) / 2 < s <= d:
            cv = critical_scan(d, s)
            out["beta_c"] = cv.beta_c
            if beta > cv.beta_c:
                out["t_c"] = cv.t_c(beta)
    emit_json(args, cfg, out)


def _certify_eta(cfg, d, n):
    if cfg.get("eta_file"):
        with open(cfg["eta_file"]) as fh:
            eta = read_configuration(fh)
        return eta
    T = build_truncation(d, n + 2)
    pattern = cfg.get("pattern") or "full"
    sign = int(cfg.get("sign") or (1 if pattern == "full" else -1))
    if pattern == "full":
        return constant_configuration(T, sign)
    if pattern == "subtree":
        return subtree_pattern(T, int(cfg["s"]), subtree_sign=sign)
    if pattern == "empty":
        return constant_configuration(T, 0).with_spin(0, 1)
    raise ParameterError(f"unknown pattern {pattern!r}; use full, subtree or empty")


def cmd_certify(args):
    cfg = _resolve(args, ["d", "beta", "lam", "t", "s", "depth", "margin", "pattern", "sign",
                          "tol"])
    cfg["eta_file"] = args.eta_file
    _need(cfg, "beta", "t", "s")
    if cfg.get("eta_file"):
        with open(cfg["eta_file"]) as fh:
            header = next(ln for ln in fh if ln.strip() and not ln.startswith("#"))
        d_file, n_file = (int(x) for x in header.split())
        if cfg.get("d") is not None and int(cfg["d"]) != d_file:
            raise ParameterError(f"--d {cfg['d']} disagrees with the configuration file (d={d_file})")
        cfg["d"] = d_file
        cfg["depth"] = cfg.get("depth") or n_file - 2
    _need(cfg, "d")
    d = int(cfg["d"])
    n = int(cfg.get("depth") or 6)
    cfg["depth"] = n
    eta = _certify_eta(cfg, d, n)
    p = ModelParams(d, cfg["beta"], cfg.get("lam") or 1.0)
    k = make_kernel(cfg["t"])
    margin = cfg.get("margin")
    cert = discontinuity_certificate(eta, p, k, int(cfg["s"]), n,
                                     None if margin is None else int(margin),
                                     tol=cfg.get("tol") or 0.05)
    if args.emit_fields:
        st = run_recursion(initial_state(eta.restrict(n), p, k), cert.boundary_value)
        with open(args.emit_fields, "w") as fh:
            fh.write(csv_text(cfg, ("child", "parent", "field"), field_table(st)))
    emit_json(args, cfg, {"certificate": cert.to_dict()})


def cmd_sample(args):
    cfg = _resolve(args, ["d", "beta", "lam", "t", "depth", "samples", "s"])
    _need(cfg, "d", "beta", "lam", "depth", "samples", "s")
    p = ModelParams(int(cfg["d"]), cfg["beta"], cfg["lam"])
    k = make_kernel(cfg["t"]) if cfg.get("t") is not None else None
    st = mc_cluster_stats(p, k, int(cfg["depth"]), int(cfg["samples"]), int(cfg["seed"]),
                          int(cfg["s"]), threads=int(cfg["threads"]))
    params = [st.d, st.beta, st.lam, st.t, st.s, st.depth, st.samples, st.seed]
    rows = [
        params + ["subtree_frequency", st.frequency, st.stderr],
        params + ["subtree_prediction", st.prediction, 0.0],
        params + ["root_occupied", st.root_occupied_freq, st.root_occupied_stderr],
        params + ["rho_occ", st.rho_occ, 0.0],
        params + ["child_occupied_given_parent", st.child_freq, st.child_stderr],
        params + ["u", st.u, 0.0],
    ]
    cols = ("d", "beta", "lambda", "t", "s", "depth", "samples", "seed", "quantity", "estimate",
            "stderr")
    emit_csv(args, cfg, cols, rows)


def cmd_gw(args):
    cfg = _resolve(args, ["d", "s", "u"])
    _need(cfg, "d", "s", "u")
    rep = gw_iterate(int(cfg["d"]), int(cfg["s"]), cfg["u"])
    emit_json(args, cfg, {"gw": rep.to_dict(with_iterates=args.iterates)})


def cmd_thresholds(args):
    cfg = _resolve(args, ["d", "beta"])
    _need(cfg, "d", "beta")
    th = lambda_thresholds(ModelParams(int(cfg["d"]), cfg["beta"], 1.0))
    emit_json(args, cfg, {"thresholds": th.to_dict()})


# -- parser


def _model_args(p, *names):
    table = {
        "d": dict(type=int, help="tree order (children per non-root vertex)"),
        "s": dict(type=int, help="subtree order"),
        "beta": dict(type=float, help="repulsion strength"),
        "lambda": dict(type=float, dest="lam", help="activity"),
        "time": dict(type=float, dest="t", help="time of the spin-flip dynamics"),
        "ht": dict(type=float, help="dynamic field, overrides --time"),
        "depth": dict(type=int, help="truncation depth n"),
    }
    for name in names:
        p.add_argument("--" + name, default=None, **table[name])


def _grid_args(p):
    p.add_argument("--betas", default=None, help="grid: a,b,c | lin:a:b:n | geom:a:b:n")
    p.add_argument("--lambdas", default=None, help="grid of activities")
    p.add_argument("--times", default=None, help="grid of times")
    p.add_argument("--cache", default=None, help="directory of per-point results for resuming")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wrtree", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--out", default=None, help="output file (default stdout)")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--config", dest="config_file", default=None,
                    help="key=value parameter file; flags override it")
    # the global flags are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    p = add("classify", "classify one parameter point")
    _model_args(p, "d", "beta", "lambda", "time", "s", "depth")
    p.set_defaults(func=cmd_classify)

    p = add("scan", "classify a grid, CSV in grid order")
    _model_args(p, "d", "s", "depth")
    _grid_args(p)
    p.add_argument("--band", action="store_true", help="JSON with the transition band instead")
    p.set_defaults(func=cmd_scan)

    p = add("figure", "emit figure data as CSV")
    p.add_argument("which", choices=["boundary-fields", "inner-map", "phase-diagram"])
    _model_args(p, "d", "s", "beta", "time", "ht", "depth")
    p.add_argument("--pattern", default=None, choices=["subtree", "full", "empty"])
    p.add_argument("--sign", type=int, default=None, choices=[-1, 1])
    p.add_argument("--points", type=int, default=None)
    _grid_args(p)
    p.set_defaults(func=cmd_figure)

    p = add("fixed-points", "fixed points of the homogeneous recursions")
    _model_args(p, "d", "s", "beta", "time", "ht")
    p.set_defaults(func=cmd_fixed_points)

    p = add("certify", "boundary-field discontinuity certificate")
    p.add_argument("--config", "--eta", dest="eta_file", default=None,
                   help="conditioning configuration in the tree text format")
    p.add_argument("--pattern", default=None, choices=["full", "subtree", "empty"],
                   help="built-in configuration when no file is given")
    p.add_argument("--sign", type=int, default=None, choices=[-1, 1])
    _model_args(p, "d", "beta", "lambda", "time", "s", "depth")
    p.add_argument("--margin", type=int, default=None, help="plus/minus annuli outside D_n")
    p.add_argument("--tol", type=float, default=None, help="relative slack below 2 F+")
    p.add_argument("--emit-fields", default=None, help="CSV of per-edge plus-boundary fields")
    p.set_defaults(func=cmd_certify)

    p = add("sample", "Monte Carlo subtree statistics, CSV")
    _model_args(p, "d", "beta", "lambda", "time", "depth", "s")
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_sample)

    p = add("gw", "Galton-Watson lower-bound recursion")
    _model_args(p, "d", "s")
    p.add_argument("--u", type=float, default=None, help="child occupation probability")
    p.add_argument("--iterates", action="store_true", help="include every iterate")
    p.set_defaults(func=cmd_gw)

    p = add("thresholds", "activity thresholds for goodness and badness")
    _model_args(p, "d", "beta")
    p.set_defaults(func=cmd_thresholds)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ParameterError, ValueError, OSError) as exc:
        print(f"wrtree: error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except InconsistencyError as exc:
        print(f"wrtree: internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    return 0


if __name__ == "__main__":
    sys.exit(main())
