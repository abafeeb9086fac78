"""Regime classification of (d, beta, lambda, t) from the available criteria.

Each flag records the criterion that produced it.  The combination is:

* Dobrushin uniqueness holds -> Gibbs at every time;
* occupied clusters die out (u d < 1) -> almost surely Gibbs;
* the subtree certificate fires and s-subtrees percolate with positive
  probability -> almost surely non-Gibbs (the bad set obeys a zero-one law);
* with no admissible s below d, a certified fully occupied configuration only
  shows that bad configurations exist;
* anything else is undetermined.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .boundary_fields import (
    boundary_value_for_margin,
    discontinuity_certificate,
    field_table,
    fixed_points_inner,
    initial_state,
    inner_map,
    run_recursion,
)
from .dynamics import make_kernel
from .percolation import gw_iterate, occupation_u
from .static_model import (
    InconsistencyError,
    ModelParams,
    ParameterError,
    dobrushin_flag,
    intermediate_chain,
    kesten_stigum,
)
from .tree import build_truncation, constant_configuration, subtree_pattern

CLASSES = ("gibbs-all-t", "as-gibbs", "non-gibbs-exists-bad", "as-non-gibbs", "undetermined")

PROVENANCE = {
    "dobrushin_gibbs": "Dobrushin uniqueness condition beta (d+1) < 2",
    "extinction_as_gibbs": "subcritical occupied clusters, u d < 1",
    "kesten_stigum_nonextremal": "Kesten-Stigum bound u2^2 d > 1 for the intermediate chain",
    "subtree_badness_certified": "boundary-field gap on an all-minus s-subtree and on the fully "
    "occupied configuration (finite-depth numerical certificate)",
    "full_configuration_bad": "boundary-field gap on the fully occupied configuration "
    "(finite-depth numerical certificate)",
    "percolation_positive": "Galton-Watson lower-bound recursion for s-subtrees",
}


def default_s(d: int) -> int:
    """Subtree order used when none is given: d-1 when admissible, else d."""
    return d - 1 if d - 1 > (d + 1) / 2 else d


@dataclass
class RegimeReport:
    d: int
    beta: float
    lam: float
    t: float
    s: int
    depth: int
    dobrushin_gibbs: bool = False
    extinction_as_gibbs: bool = False
    kesten_stigum_nonextremal: bool = False
    subtree_badness_certified: bool | None = None
    full_configuration_bad: bool | None = None
    percolation_positive: bool | None = None
    gap: float | None = None
    full_gap: float | None = None
    f_plus: float | None = None
    f_prime: float | None = None
    u: float | None = None
    u2: float | None = None
    xi: float | None = None
    gw_limit: float | None = None
    classification: str = "undetermined"
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def key(self) -> str:
        return params_key(self.d, self.beta, self.lam, self.t, self.s, self.depth)


def params_key(d, beta, lam, t, s, depth) -> str:
    blob = json.dumps([int(d), repr(float(beta)), repr(float(lam)), repr(float(t)), int(s),
                       int(depth)])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def classify(d: int, beta: float, lam: float, t: float, s: int | None = None,
             depth: int = 6) -> RegimeReport:
    p = ModelParams(d, beta, lam)
    k = make_kernel(t)
    s = default_s(d) if s is None else int(s)
    if not 1 <= s <= d:
        raise ParameterError(f"s must lie in 1..{d}, got {s}")
    rep = RegimeReport(d=d, beta=float(beta), lam=float(lam), t=float(t), s=s, depth=depth)
    rep.dobrushin_gibbs = dobrushin_flag(p)
    bl, tm = intermediate_chain(p)
    oc = occupation_u(p, bl)
    rep.xi, rep.u, rep.u2 = bl.xi, oc.u, tm.eigenvalues[1]
    rep.extinction_as_gibbs = oc.u * d < 1
    rep.kesten_stigum_nonextremal = kesten_stigum(p, tm)
    rep.provenance = {key: PROVENANCE[key] for key in PROVENANCE}

    applicable = (d + 1) / 2 < s <= d
    if applicable:
        T = build_truncation(d, depth + 2)
        full = discontinuity_certificate(constant_configuration(T, 1), p, k, s, depth)
        rep.full_configuration_bad = full.is_bad
        rep.full_gap, rep.f_plus, rep.f_prime = full.gap, full.f_plus, full.f_prime
        if s <= d - 1:
            adv = discontinuity_certificate(subtree_pattern(T, s), p, k, s, depth)
            rep.gap = adv.gap
            rep.subtree_badness_certified = bool(adv.is_bad and full.is_bad)
            gw = gw_iterate(d, s, oc.u)
            rep.gw_limit = gw.limit_estimate
            rep.percolation_positive = gw.positive
        else:
            rep.notes.append(f"s = d = {d}: no almost-sure claim, existence of bad configurations only")
    else:
        rep.notes.append(f"badness branch not applicable: s={s} needs (d+1)/2 < s <= d")

    as_non_gibbs = bool(rep.subtree_badness_certified and rep.percolation_positive)
    if rep.dobrushin_gibbs and as_non_gibbs:
        raise InconsistencyError(f"Dobrushin regime certified as non-Gibbs at {rep.to_dict()}")
    if rep.extinction_as_gibbs and rep.percolation_positive:
        raise InconsistencyError(f"u d < 1 but s-subtrees percolate at {rep.to_dict()}")

    almost_sure_branch = any((d + 1) / 2 < ss <= d - 1 for ss in range(1, d + 1))
    if rep.dobrushin_gibbs:
        rep.classification = "gibbs-all-t"
    elif rep.extinction_as_gibbs:
        rep.classification = "as-gibbs"
    elif as_non_gibbs:
        rep.classification = "as-non-gibbs"
    elif rep.full_configuration_bad and not almost_sure_branch:
        rep.classification = "non-gibbs-exists-bad"
    else:
        rep.classification = "undetermined"
    return rep


# -- grid scans


SCAN_COLUMNS = (
    "d", "s", "beta", "lambda", "t", "depth", "classification", "dobrushin_gibbs",
    "extinction_as_gibbs", "kesten_stigum_nonextremal", "subtree_badness_certified",
    "full_configuration_bad", "percolation_positive", "gap", "full_gap", "f_plus", "u", "u2",
    "gw_limit", "key", "error",
)


def _row(rep: RegimeReport | None, point: tuple, error: str = "") -> dict:
    d, s, beta, lam, t, depth = point
    row = dict.fromkeys(SCAN_COLUMNS, "")
    row.update(d=d, s=s, beta=beta, t=t, depth=depth,
               key=params_key(d, beta, lam, t, s, depth), error=error)
    row["lambda"] = lam
    if rep is not None:
        dd = rep.to_dict()
        for c in SCAN_COLUMNS:
            if c in dd and dd[c] is not None:
                row[c] = dd[c]
    else:
        row["classification"] = "error"
    return row


def _scan_point(point):
    d, s, beta, lam, t, depth = point
    try:
        return _row(classify(d, beta, lam, t, s, depth), point)
    except (ParameterError, InconsistencyError, ValueError) as exc:
        return _row(None, point, f"{type(exc).__name__}: {exc}")


def grid_points(d: int, s: int | None, betas: Iterable[float], lams: Iterable[float],
                times: Iterable[float], depth: int = 6) -> list[tuple]:
    s = default_s(d) if s is None else s
    return [(d, s, float(b), float(la), float(t), depth) for b in betas for la in lams for t in times]


def scan(points: list[tuple], threads: int = 1, cache_dir: str | None = None) -> list[dict]:
    """Classify every grid point; rows come back in grid order.

    With ``cache_dir`` each point's row is stored as ``<key>.json`` and reused
    on later runs, so an interrupted scan resumes where it stopped.
    """
    rows: list[dict | None] = [None] * len(points)
    todo = []
    for i, pt in enumerate(points):
        path = _cache_path(cache_dir, pt)
        if path and os.path.exists(path):
            with open(path) as fh:
                rows[i] = json.load(fh)
        else:
            todo.append(i)
    if threads > 1 and len(todo) > 1:
        with ProcessPoolExecutor(threads) as ex:
            done = ex.map(_scan_point, [points[i] for i in todo])
            results = list(done)
    else:
        results = [_scan_point(points[i]) for i in todo]
    for i, row in zip(todo, results):
        rows[i] = row
        path = _cache_path(cache_dir, points[i])
        if path and not row["error"]:
            tmp = path + ".tmp"
            with open(tmp, "w") as fh:
                json.dump(row, fh)
            os.replace(tmp, path)
    return rows


def _cache_path(cache_dir, pt):
    if not cache_dir:
        return None
    os.makedirs(cache_dir, exist_ok=True)
    return os.path.join(cache_dir, params_key(pt[0], pt[2], pt[3], pt[4], pt[1], pt[5]) + ".json")


def transition_band(rows: list[dict]) -> dict:
    """Classification endpoints of a lambda sweep, ordered by lambda."""
    rows = sorted(rows, key=lambda r: r["lambda"])
    labels = [r["classification"] for r in rows]
    und = [r["lambda"] for r in rows if r["classification"] == "undetermined"]
    last_gibbs = max((r["lambda"] for r in rows if r["classification"] == "as-gibbs"), default=None)
    first_bad = min((r["lambda"] for r in rows if r["classification"] == "as-non-gibbs"),
                    default=None)
    return {
        "labels": labels,
        "last_as_gibbs": last_gibbs,
        "first_as_non_gibbs": first_bad,
        "undetermined_band": [min(und), max(und)] if und else None,
    }


# -- figure data


def figure_boundary_fields(d: int = 4, beta: float = 2.0, t: float = 0.2, s: int = 3,
                           depth: int = 5, eta: str = "subtree", sign: int = -1):
    """Per-edge fields on D_depth for a conditioning pattern with a plus boundary.

    The boundary value is the homogeneous plus field entering from outside,
    close to F'.  Returns (rows, meta) with rows (child, parent, ring, eta, field).
    """
    T = build_truncation(d, depth)
    if eta == "subtree":
        cfg = subtree_pattern(T, s, subtree_sign=sign)
    elif eta == "full":
        cfg = constant_configuration(T, sign)
    elif eta == "empty":
        cfg = constant_configuration(T, 0)
    else:
        raise ParameterError(f"unknown pattern {eta!r}; use subtree, full or empty")
    p, k = ModelParams(d, beta, 1.0), make_kernel(t)
    bv, m, fp = boundary_value_for_margin(d, beta, k.ht)
    st = run_recursion(initial_state(cfg, p, k), bv)
    depth_of = T.depth
    rows = [(c, par, int(depth_of[c]), int(cfg.spin[c]), f) for c, par, f in field_table(st)]
    meta = {"d": d, "beta": beta, "t": t, "ht": k.ht, "s": s, "depth": depth, "eta": eta,
            "sign": sign, "boundary_value": bv, "margin": m, "f_prime": fp}
    return rows, meta


def figure_inner_map(d: int = 8, s: int = 7, beta: float = 1.1, ht: float = 0.0,
                     points: int = 401):
    """Samples of the inner map plus its fixed points on [0, s beta/2 + 1]."""
    rep = fixed_points_inner(d, s, beta, ht)
    lo, hi = rep.interval
    xs = np.linspace(lo, hi, points)
    ys = inner_map(xs, d, s, beta, ht)
    rows = [("curve", float(x), float(y), "") for x, y in zip(xs, ys)]
    rows += [("fixed_point", r, r, bool(a)) for r, a in zip(rep.fixed_points, rep.attractive)]
    return rows, {"d": d, "s": s, "beta": beta, "ht": ht, **{"note": rep.note}}
