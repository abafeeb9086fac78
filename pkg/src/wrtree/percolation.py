"""Occupied-site statistics of the intermediate measure.

The occupation pattern of the intermediate chain is itself a tree-indexed
Markov chain, and an occupied vertex has each child occupied with the same
probability u whatever its sign.  That makes subtree percolation a
Galton-Watson question with Binomial(d, u) offspring.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dynamics import TimeKernel, evolve, philox
from .static_model import (
    InconsistencyError,
    IntermediateBoundaryLaw,
    ModelParams,
    ParameterError,
    TransitionMatrix,
    _solve_xi,
    intermediate_chain,
)
from .tree import SpinConfiguration, build_truncation, subtree_mask

BETA_GRID = tuple(np.geomspace(1e-2, 1e2, 41)) + (math.inf,)
POSITIVE = 1e-9


@dataclass(frozen=True)
class OccupationChain:
    u: float
    rho_occ: float
    d: int
    beta: float
    lam: float


def _u_from_xi(xi: float, e: float) -> float:
    a = (1.0 + e) * xi
    return a / (1.0 + a)


def occupation_u(p: ModelParams, bl: IntermediateBoundaryLaw) -> OccupationChain:
    e, xi = p.exp_minus_beta, bl.xi
    u = _u_from_xi(xi, e)
    denom = 1.0 + (1.0 + e) * xi
    rho_occ = 2 * xi * denom / (2 * xi * denom + 1 + 2 * xi)
    lo_x = 2.0 ** (-p.d) * p.lam
    lower, upper = lo_x / (1 + lo_x), 2 * p.lam / (1 + 2 * p.lam)
    slack = 1e-12
    if not lower * (1 - slack) <= u <= upper * (1 + slack):
        raise InconsistencyError(f"u={u} escapes the activity sandwich ({lower}, {upper})")
    return OccupationChain(u=u, rho_occ=rho_occ, d=p.d, beta=p.beta, lam=p.lam)


def u_of(d: int, beta: float, lam: float) -> float:
    """Occupation transition probability; beta may be inf."""
    return _u_from_xi(_solve_xi(d, beta, lam).xi, math.exp(-beta))


# -- the polynomial g and the Galton-Watson recursion


def g_poly(x, d: int):
    """Probability that Binomial(d, x) is at least d-1."""
    x = np.asarray(x, dtype=float)
    return x**d + d * x ** (d - 1) * (1 - x)


def g_fixed_points(d: int, resolution: float = 1e-4) -> list[float]:
    """Fixed points of g strictly inside (0, 1), ascending."""
    if d < 2:
        raise ParameterError(f"d must be >= 2, got {d}")
    f = lambda x: g_poly(x, d) - x  # noqa: E731
    # stay off the endpoint roots; g(x) - x is +-x near 0 and ~(1-x) near 1
    xs = np.linspace(resolution, 1 - resolution, int(round(1 / resolution)) - 1)
    v = f(xs)
    roots = [float(x) for x in xs[v == 0]]
    roots += [
        brentq(f, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        for i in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)
    ]
    return sorted(float(r) for r in roots)


def _binom_tail(q: float, d: int, s: int) -> float:
    return math.fsum(math.comb(d, j) * q**j * (1 - q) ** (d - j) for j in range(s, d + 1))


def binom_tail(q: float, d: int, s: int) -> float:
    """P(Binomial(d, q) >= s)."""
    return _binom_tail(float(q), d, s)


@dataclass(frozen=True)
class GWReport:
    d: int
    s: int
    u: float
    iterates: list[float] = field(repr=False)
    limit_estimate: float
    converged: bool
    interior_fixed_points_of_g: list[float]
    x_c: float | None
    p_lambda: float | None
    label: str = "lower-bound recursion"

    @property
    def positive(self) -> bool:
        return self.converged and self.limit_estimate > POSITIVE

    def to_dict(self, with_iterates: bool = False) -> dict:
        out = asdict(self)
        out["positive"] = self.positive
        if not with_iterates:
            out["n_iterates"] = len(out.pop("iterates"))
        return out


def subtree_probabilities(d: int, s: int, u: float, depth: int) -> list[float]:
    """Exact q_j = P(an occupied vertex roots an s-subtree j generations deep)."""
    q = [1.0]
    for _ in range(depth):
        q.append(_binom_tail(u * q[-1], d, s))
    return q


def gw_iterate(d: int, s: int, u: float, n_max: int = 1_000_000, tol: float = 1e-12) -> GWReport:
    """Iterate p -> P(Binomial(d, u p) >= s) from p = 1.

    Stops once the step and a geometric estimate of the remaining distance
    are both below ``tol``.
    """
    if d < 2 or not 1 <= s <= d - 1:
        raise ParameterError(f"need d >= 2 and 1 <= s <= d-1, got d={d}, s={s}")
    if not 0 < u <= 1:
        raise ParameterError(f"u must lie in (0, 1], got {u}")
    its = [1.0]
    converged = False
    prev_step = None
    for _ in range(n_max):
        nxt = _binom_tail(u * its[-1], d, s)
        step = its[-1] - nxt
        its.append(nxt)
        if step < 0:
            raise InconsistencyError("GW iterates increased")
        if step < tol:
            rate = step / prev_step if prev_step else 0.0
            if rate < 1 and step * rate / (1 - rate) < tol:
                converged = True
                break
        prev_step = step
    fps = g_fixed_points(d)
    return GWReport(
        d=d,
        s=s,
        u=float(u),
        iterates=its,
        limit_estimate=its[-1],
        converged=converged,
        interior_fixed_points_of_g=fps,
        x_c=fps[-1] if fps else None,
        p_lambda=_p_lambda(d, u) if s == d - 1 else None,
    )


def _p_lambda(d: int, u: float, resolution: float = 1e-4) -> float | None:
    """Largest fixed point in (0, 1] of p -> g(u p), by scan and brentq."""
    f = lambda p: g_poly(u * p, d) - p  # noqa: E731
    xs = np.linspace(resolution, 1.0, int(round(1 / resolution)))
    v = f(xs)
    if v[-1] == 0:
        return 1.0
    idx = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) <= 0)
    if idx.size == 0:
        return None
    i = idx[-1]
    if v[i] == 0:
        return float(xs[i])
    return float(brentq(f, xs[i], xs[i + 1], xtol=1e-15))


# -- activity thresholds


@dataclass(frozen=True)
class Thresholds:
    d: int
    beta: float
    lambda_g: float
    u_star: float
    lambda_b_estimate: float
    x_c: float | None
    warning: str = ""
    lambda_b_meaning: str = (
        "sufficient activity for positive subtree probability under the lower-bound recursion"
    )

    def to_dict(self) -> dict:
        return asdict(self)


def _bisect_log(pred, lo: float, hi: float, rtol: float = 1e-8) -> float:
    """Boundary of a monotone predicate, pred(lo) True and pred(hi) False."""
    a, b = math.log(lo), math.log(hi)
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if pred(math.exp(mid)):
            a = mid
        else:
            b = mid
    return math.exp(a)


def u_star(d: int) -> tuple[float, float | None]:
    """Smallest u for which x -> u g(x) has a fixed point at or above x_c.

    Returns (u*, x_c).  For d = 2 g has no interior fixed point and x_c = 0
    is used.
    """
    fps = g_fixed_points(d)
    xc = fps[-1] if fps else None
    lo = xc if xc is not None else 0.0
    ratio = lambda x: x ** (d - 2) * (d - (d - 1) * x)  # g(x)/x  # noqa: E731
    res = minimize_scalar(lambda x: -ratio(x), bounds=(lo, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    best = max(-res.fun, ratio(lo), ratio(1.0))
    return float(1.0 / best), xc


def lambda_thresholds(p: ModelParams) -> Thresholds:
    d, beta = p.d, p.beta
    # the sandwich pins the crossing of u = 1/d between these activities
    lo, hi = 1.0 / (2 * (d - 1)), 2.0**d / (d - 1)
    lo, hi = lo * (1 - 1e-9), hi * (1 + 1e-9)
    lam_g = _bisect_log(lambda lam: u_of(d, beta, lam) < 1.0 / d, lo, hi)
    us, xc = u_star(d)
    warning = ""
    if xc is None:
        warning = f"g has no interior fixed point for d={d}; u* uses x_c = 0"
        warnings.warn(warning, stacklevel=2)

    def worst_u(lam):
        return min(u_of(d, b, lam) for b in BETA_GRID)

    lo_b, hi_b = 1e-6, 1.0
    while worst_u(hi_b) <= us:
        hi_b *= 10
        if hi_b > 1e300:
            raise InconsistencyError("no activity pushes u above u*")
    lam_b = _bisect_log(lambda lam: worst_u(lam) <= us, lo_b, hi_b)
    return Thresholds(d=d, beta=beta, lambda_g=lam_g, u_star=us,
                      lambda_b_estimate=lam_b, x_c=xc, warning=warning)


# -- Monte Carlo


def sample_configuration(tm: TransitionMatrix, d: int, depth: int, seed: int,
                         stream: int) -> SpinConfiguration:
    """One draw of the intermediate chain on D_depth, root from rho.

    Vertex i uses the i-th double of Philox stream (seed, stream), so a draw
    at smaller depth is the prefix of the draw at larger depth.
    """
    t = build_truncation(d, depth)
    uni = philox(seed, stream).random(t.n_vertices)
    state = np.empty(t.n_vertices, dtype=np.int8)
    cum_rho = np.cumsum(tm.rho)
    state[0] = int(uni[0] > cum_rho[0]) + int(uni[0] > cum_rho[1])
    cum = np.cumsum(tm.entries, axis=1)
    c0, c1 = cum[:, 0].copy(), cum[:, 1].copy()
    for k in range(1, depth + 1):
        sl, psl = t.ring(k), t.ring(k - 1)
        ps = np.repeat(state[psl].astype(np.intp), d + 1 if k == 1 else d)
        x = uni[sl]
        state[sl] = x > c0.take(ps)
        state[sl] += x > c1.take(ps)
    return SpinConfiguration(t, state - 1)


@dataclass
class MCStats:
    d: int
    beta: float
    lam: float
    t: float | None
    s: int
    depth: int
    samples: int
    seed: int
    hits: int = 0
    root_occupied: int = 0
    parent_occupied_edges: int = 0
    child_occupied: int = 0
    frequency: float = 0.0
    stderr: float = 0.0
    root_occupied_freq: float = 0.0
    root_occupied_stderr: float = 0.0
    child_freq: float = 0.0
    child_stderr: float = 0.0
    u: float = 0.0
    rho_occ: float = 0.0
    prediction: float = 0.0
    prediction_note: str = (
        "rho_occ * P(Binomial(d+1, u q) >= s), q the exact (d-children) depth-1 subtree probability"
    )

    def to_dict(self) -> dict:
        return asdict(self)


def _se(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return 0.0, 0.0
    f = k / n
    return f, math.sqrt(f * (1 - f) / n)


def _mc_chunk(tm, d, depth, s, kernel, seed, js, edge_stats):
    hits = root_occ = par_edges = child_occ = 0
    root_cut = tm.rho[0] + tm.rho[1]
    for j in js:
        if not edge_stats:
            # the root's own double decides occupation; skip draws that cannot hit
            u0 = philox(seed, 2 * j + 1).random()
            if tm.rho[0] < u0 <= root_cut:
                continue
        cfg = sample_configuration(tm, d, depth, seed, 2 * j + 1)
        if kernel is not None:
            cfg = evolve(cfg, kernel, seed, 2 * j + 2)
        t = cfg.truncation
        occ = cfg.occupied
        if edge_stats:
            po = occ[t.parent[1:]]
            par_edges += int(po.sum())
            child_occ += int((po & occ[1:]).sum())
        if occ[0]:
            root_occ += 1
            hits += int(subtree_mask(cfg, s)[0])
    return hits, root_occ, par_edges, child_occ


def mc_cluster_stats(p: ModelParams, k: TimeKernel | None, depth: int, samples: int, seed: int,
                     s: int, threads: int = 1, edge_stats: bool = True) -> MCStats:
    """Frequency of {root occupied and roots an occupied s-subtree to ``depth``}.

    With ``edge_stats`` off, draws with an empty root are not expanded; the
    counts are identical, only the child-occupation fields stay 0.
    """
    if depth < 1 or samples < 1:
        raise ParameterError(f"depth and samples must be >= 1, got {depth}, {samples}")
    if not 1 <= s <= p.d:
        raise ParameterError(f"s must lie in 1..{p.d}, got {s}")
    bl, tm = intermediate_chain(p)
    oc = occupation_u(p, bl)
    chunks = np.array_split(np.arange(samples), max(1, threads) * 4)
    args = [(tm, p.d, depth, s, k, seed, c.tolist(), edge_stats) for c in chunks if c.size]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda a: _mc_chunk(*a), args))
    else:
        parts = [_mc_chunk(*a) for a in args]
    hits, root_occ, par_edges, child_occ = (sum(x) for x in zip(*parts))
    st = MCStats(d=p.d, beta=p.beta, lam=p.lam, t=None if k is None else k.t, s=s, depth=depth,
                 samples=samples, seed=seed, hits=hits, root_occupied=root_occ,
                 parent_occupied_edges=par_edges, child_occupied=child_occ)
    st.frequency, st.stderr = _se(hits, samples)
    st.root_occupied_freq, st.root_occupied_stderr = _se(root_occ, samples)
    st.child_freq, st.child_stderr = _se(child_occ, par_edges)
    st.u, st.rho_occ = oc.u, oc.rho_occ
    st.prediction = subtree_event_probability(p.d, s, oc.u, oc.rho_occ, depth)
    return st


def subtree_event_probability(d: int, s: int, u: float, rho_occ: float, depth: int) -> float:
    """P(root occupied and roots an s-subtree reaching ring ``depth``)."""
    q = subtree_probabilities(d, s, u, depth - 1)[-1]
    return rho_occ * _binom_tail(u * q, d + 1, s)


@dataclass(frozen=True)
class MarkovCheck:
    counts: dict
    freqs: dict
    stderrs: dict
    max_z: float
    edges: int

    def to_dict(self) -> dict:
        return asdict(self)


def markov_property_stats(p: ModelParams, depth: int, samples: int, seed: int) -> MarkovCheck:
    """P(child occupied | parent occupied, grandparent sign) per grandparent sign.

    ``max_z`` is the largest pairwise two-proportion z-score between the
    grandparent classes.
    """
    _, tm = intermediate_chain(p)
    t = build_truncation(p.d, depth)
    par = t.parent
    start = t.ring(2).start
    child = np.arange(start, t.n_vertices)
    parent = par[child]
    grand = par[parent]
    tot = {g: [0, 0] for g in (-1, 0, 1)}
    for j in range(samples):
        spin = sample_configuration(tm, p.d, depth, seed, 2 * j + 1).spin
        po = spin[parent] != 0
        gs = spin[grand][po]
        co = spin[child][po] != 0
        for g in (-1, 0, 1):
            sel = gs == g
            tot[g][0] += int(co[sel].sum())
            tot[g][1] += int(sel.sum())
    freqs, ses = {}, {}
    for g, (kk, nn) in tot.items():
        freqs[g], ses[g] = _se(kk, nn)
    max_z = 0.0
    keys = [g for g in tot if tot[g][1] > 0]
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            sd = math.hypot(ses[a], ses[b])
            if sd > 0:
                max_z = max(max_z, abs(freqs[a] - freqs[b]) / sd)
    edges = sum(nn for _, nn in tot.values())
    return MarkovCheck({str(g): v for g, v in tot.items()}, {str(g): v for g, v in freqs.items()},
                       {str(g): v for g, v in ses.items()}, max_z, edges)
