"""Boundary-field recursion for the time-evolved intermediate measure.

Conditioning the time-t measure on a second-layer configuration eta turns the
first layer into an Ising-like model on the occupied cluster of the root, with
fields h^t * eta_k.  Summing the first layer from the boundary inward gives a
field f on every edge pointing toward the root:

    f_{i, parent(i)} = sum over occupied children k of phi_{beta/2}(f_{k, i} + h^t eta_k)

Fields are stored per child vertex: ``field[v]`` is the field on the edge from
v to its parent, and ``field[0]`` is unused (0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dynamics import TimeKernel, time_of_ht
from .static_model import InconsistencyError, ModelParams, ParameterError, SPIN_VALUES
from .tree import SpinConfiguration, build_truncation, subtree_mask

ROOT_TOL = 1e-10
_CHUNK = 1 << 20


def phi(beta, x):
    """phi_beta(x) = 1/2 log(cosh(x + beta) / cosh(x - beta)), overflow-safe.

    Uses log cosh y = |y| + log1p(e^{-2|y|}) - log 2, which is exactly odd in x.
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x + beta)
    b = np.abs(x - beta)
    out = 0.5 * (a - b) + 0.5 * (np.log1p(np.exp(-2.0 * a)) - np.log1p(np.exp(-2.0 * b)))
    return out if out.ndim else float(out)


def dphi(beta, x):
    x = np.asarray(x, dtype=float)
    out = 0.5 * (np.tanh(x + beta) - np.tanh(x - beta))
    return out if out.ndim else float(out)


def outer_map(x, d, beta, ht):
    """Homogeneous all-plus recursion x -> d phi_{beta/2}(x + h^t)."""
    return d * phi(beta / 2, np.asarray(x, dtype=float) + ht)


def inner_map(x, d, s, beta, ht):
    """Worst-case subtree recursion x -> s phi_{beta/2}(x - h^t) - (d - s) beta/2."""
    return s * phi(beta / 2, np.asarray(x, dtype=float) - ht) - (d - s) * beta / 2


# -- configuration-dependent recursion


@dataclass(frozen=True, eq=False)
class BoundaryFieldState:
    second_layer: SpinConfiguration
    params: ModelParams
    kernel: TimeKernel
    field: np.ndarray = field(repr=False)
    boundary_value: float = 0.0

    @property
    def truncation(self):
        return self.second_layer.truncation


def initial_state(eta: SpinConfiguration, p: ModelParams, k: TimeKernel) -> BoundaryFieldState:
    return BoundaryFieldState(eta, p, k, np.zeros(eta.truncation.n_vertices))


def _sweep(spin: np.ndarray, d: int, n: int, beta: float, ht: float, boundary_value: float,
           keep: bool):
    """Run the recursion from ring n inward; return all fields or only ring 1's."""
    t = build_truncation(d, n)
    out = np.zeros(t.n_vertices) if keep else None
    if n == 0:
        return out if keep else np.zeros(0)
    if n == 1:
        f1 = np.where(spin[t.ring(1)] != 0, float(boundary_value), 0.0)
        if keep:
            out[t.ring(1)] = f1
        return out if keep else f1
    half = beta / 2
    sl = t.ring(n)
    if keep:
        out[sl] = np.where(spin[sl] != 0, boundary_value, 0.0)
    child_f = None
    # outermost children all carry the boundary value: three possible terms
    lut = np.array([phi(half, boundary_value - ht), 0.0, phi(half, boundary_value + ht)])
    for k in range(n - 1, 0, -1):
        psl, csl = t.ring(k), t.ring(k + 1)
        n_par = psl.stop - psl.start
        cspin = spin[csl]
        f_k = np.empty(n_par)
        for p0 in range(0, n_par, _CHUNK):
            p1 = min(p0 + _CHUNK, n_par)
            cs = cspin[p0 * d:p1 * d]
            if k == n - 1:
                contrib = lut[cs + 1]
            else:
                arg = child_f[p0 * d:p1 * d] + ht * cs
                contrib = np.where(cs != 0, phi(half, arg), 0.0)
            f_k[p0:p1] = contrib.reshape(-1, d).sum(axis=1)
        f_k[spin[psl] == 0] = 0.0
        if keep:
            out[psl] = f_k
        child_f = f_k
    return out if keep else child_f


def run_recursion(state: BoundaryFieldState, boundary_value: float = 0.0) -> BoundaryFieldState:
    """Fields for the conditioning ``state.second_layer``.

    Occupied vertices on the outermost ring start with ``boundary_value``;
    0 reproduces free finite-volume conditioning, and the plus-boundary value
    produced by the outer recursion models an all-plus configuration outside.
    """
    t = state.truncation
    f = _sweep(state.second_layer.spin, t.d, t.n, state.params.beta, state.kernel.ht,
               float(boundary_value), keep=True)
    f.setflags(write=False)
    return BoundaryFieldState(state.second_layer, state.params, state.kernel, f,
                              float(boundary_value))


def root_neighbour_fields(eta: SpinConfiguration, beta: float, ht: float,
                          boundary_value: float) -> np.ndarray:
    """Fields on the d+1 edges into the root, without storing inner rings."""
    t = eta.truncation
    return _sweep(eta.spin, t.d, t.n, beta, ht, boundary_value, keep=False)


def field_table(state: BoundaryFieldState) -> list[tuple[int, int, float]]:
    par = state.truncation.parent
    return [(v, int(par[v]), float(state.field[v])) for v in range(1, state.truncation.n_vertices)]


def root_conditional(state: BoundaryFieldState) -> np.ndarray:
    """First-layer law of the root spin given the second layer off the root.

    Order (-1, 0, +1).  Each occupied neighbour k contributes
    sum_{w_k = +-1} exp(-beta 1{w_k w_0 = -1} + (h^t eta_k + f_k0) w_k).
    """
    t = state.truncation
    beta, lam, ht = state.params.beta, state.params.lam, state.kernel.ht
    logw = np.log(lam) * SPIN_VALUES.astype(float) ** 2
    if t.n >= 1:
        sl = t.ring(1)
        eta = state.second_layer.spin[sl].astype(float)
        occ = eta != 0
        a = (ht * eta + state.field[sl])[occ]
        for i, w0 in enumerate(SPIN_VALUES):
            if w0 == 0:
                terms = np.logaddexp(a, -a)
            else:
                # w_k = w0 costs nothing, w_k = -w0 pays beta
                terms = np.logaddexp(w0 * a, -beta - w0 * a)
            logw[i] += terms.sum()
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def root_law_time_evolved(state: BoundaryFieldState) -> np.ndarray:
    """Law of the time-t root spin: first-layer root law pushed through p_t."""
    return root_conditional(state) @ state.kernel.kernel


# -- homogeneous fixed points


@dataclass(frozen=True)
class FixedPointReport:
    map_kind: str
    d: int
    s: int | None
    beta: float
    ht: float
    interval: tuple[float, float]
    fixed_points: list[float]
    attractive: list[bool]
    near_tangent: bool = False
    note: str = ""

    @property
    def positive(self) -> list[float]:
        return [r for r in self.fixed_points if r > 0]

    def to_dict(self) -> dict:
        return {
            "map": self.map_kind,
            "d": self.d,
            "s": self.s,
            "beta": self.beta,
            "ht": self.ht,
            "interval": list(self.interval),
            "fixed_points": self.fixed_points,
            "attractive": self.attractive,
            "near_tangent": self.near_tangent,
            "note": self.note,
        }


def _scan_roots(g: Callable, lo: float, hi: float, resolution: float, max_points: int = 2_000_001):
    """Roots of g on [lo, hi] from sign changes on a grid, refined by brentq."""
    n_pts = int(min(max_points, math.ceil((hi - lo) / resolution) + 1))
    xs = np.linspace(lo, hi, n_pts)
    v = g(xs)
    roots = [float(x) for x in xs[v == 0]]
    sgn = np.sign(v)
    for i in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
        roots.append(brentq(g, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    roots.sort()
    # a local extremum of g within a grid cell of zero without sign change
    interior = (np.abs(v[1:-1]) <= np.abs(v[:-2])) & (np.abs(v[1:-1]) <= np.abs(v[2:]))
    near = np.flatnonzero(interior & (np.abs(v[1:-1]) < 10 * resolution)) + 1
    near_tangent = any(
        sgn[i - 1] == sgn[i + 1] and sgn[i] != 0 and not any(xs[i - 1] <= r <= xs[i + 1] for r in roots)
        for i in near
    )
    return roots, near_tangent


def _report(kind, fmap, dfmap, d, s, beta, ht, lo, hi, resolution) -> FixedPointReport:
    roots, near = _scan_roots(lambda x: fmap(x) - x, lo, hi, resolution)
    for r in roots:
        if abs(fmap(r) - r) >= ROOT_TOL:
            raise InconsistencyError(f"{kind} fixed point {r} has residual {abs(fmap(r) - r)}")
    attractive = [bool(abs(dfmap(r)) < 1) for r in roots]
    return FixedPointReport(kind, d, s, float(beta), float(ht), (lo, hi), roots, attractive, near)


def fixed_points_outer(d: int, beta: float, ht: float, resolution: float = 1e-4) -> FixedPointReport:
    if not ht > 0 or not beta > 0:
        raise ParameterError(f"outer map needs beta > 0 and h^t > 0, got beta={beta}, ht={ht}")
    bound = d * beta / 2 + 1
    rep = _report(
        "outer",
        lambda x: outer_map(x, d, beta, ht),
        lambda x: d * dphi(beta / 2, x + ht),
        d, None, beta, ht, -bound, bound, resolution,
    )
    pos = rep.positive
    if len(pos) != 1 or not rep.attractive[rep.fixed_points.index(pos[0])]:
        raise InconsistencyError(f"outer map should have one attractive positive fixed point, got {pos}")
    return rep


def iterate_outer(d: int, beta: float, ht: float, tol: float = 1e-10, max_iter: int = 100_000,
                  sign: int = 1):
    """Iterates of the outer map from 0 until successive values differ by < tol.

    Returns (value, number_of_steps).  ``sign=-1`` runs the minus-boundary
    recursion x -> d phi(x - h^t), whose iterates are the exact negatives.
    """
    x = 0.0
    for step in range(1, max_iter + 1):
        x_new = d * phi(beta / 2, x + sign * ht)
        if abs(x_new - x) < tol:
            return x_new, step
        x = x_new
    raise InconsistencyError(f"outer iteration did not converge in {max_iter} steps")


def outer_fixed_point(d: int, beta: float, ht: float) -> float:
    rep = fixed_points_outer(d, beta, ht)
    return rep.positive[0]


def fixed_points_inner(d: int, s: int, beta: float, ht: float, resolution: float = 1e-4) -> FixedPointReport:
    if not 1 <= s <= d:
        raise ParameterError(f"s must lie in 1..{d}, got {s}")
    if not beta > 0 or ht < 0:
        raise ParameterError(f"inner map needs beta > 0 and h^t >= 0, got beta={beta}, ht={ht}")
    hi = s * beta / 2 + 1
    rep = _report(
        "inner",
        lambda x: inner_map(x, d, s, beta, ht),
        lambda x: s * dphi(beta / 2, x - ht),
        d, s, beta, ht, 0.0, hi, resolution,
    )
    if not rep.positive:
        note = "no positive fixed point"
        return replace(rep, note=note)
    return rep


def f_plus(d: int, s: int, beta: float, ht: float) -> float | None:
    """Largest positive fixed point of the inner map, or None."""
    pos = fixed_points_inner(d, s, beta, ht).positive
    return pos[-1] if pos else None


# -- critical parameters


def positive_root_exists(d: int, s: int, beta: float, ht: float) -> bool:
    """Whether the inner map has a fixed point x > 0.

    Positive fixed points lie below (2s - d) beta/2.  At s = d and h^t = 0 the
    origin is itself fixed and a positive root appears once the slope there,
    s tanh(beta/2), exceeds 1.
    """
    if s == d and ht == 0:
        return s * math.tanh(beta / 2) > 1
    top = (2 * s - d) * beta / 2
    if top <= 0:
        return False
    g = lambda x: inner_map(x, d, s, beta, ht) - x  # noqa: E731
    xs = np.linspace(0.0, top, 4001)
    v = g(xs)
    i = int(np.argmax(v))
    if v[i] > 0:
        return True
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(lambda x: -g(x), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-13})
    return -res.fun > 0


@dataclass(frozen=True)
class CriticalValues:
    d: int
    s: int
    beta_c: float

    def h_c(self, beta: float) -> float:
        """Largest h^t at which the inner map still has a positive fixed point."""
        if not beta > self.beta_c or not positive_root_exists(self.d, self.s, beta, 0.0):
            raise ParameterError(f"beta={beta} is not above beta_c={self.beta_c}")
        lo, hi = 0.0, (2 * self.s - self.d) * beta / 2 + beta + 1
        while positive_root_exists(self.d, self.s, beta, hi):
            hi *= 2
        while hi - lo > 1e-13 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if positive_root_exists(self.d, self.s, beta, mid):
                lo = mid
            else:
                hi = mid
        return lo

    def t_c(self, beta: float) -> float:
        """Smallest time from which a positive fixed point exists."""
        return time_of_ht(self.h_c(beta))


def critical_scan(d: int, s: int, beta_max: float = 1e3) -> CriticalValues:
    if not (d + 1) / 2 < s <= d:
        raise ParameterError(
            f"subtree order s={s} must satisfy (d+1)/2 < s <= d for d={d}; the recursion "
            "bound cannot beat the finite appendices otherwise"
        )
    grid = np.geomspace(1e-3, beta_max, 600)
    hits = [positive_root_exists(d, s, b, 0.0) for b in grid]
    if not any(hits):
        raise InconsistencyError(f"no positive fixed point found for beta <= {beta_max}")
    first = hits.index(True)
    if not all(hits[first:]):
        raise InconsistencyError("positive-root existence is not monotone in beta")
    if first == 0:
        raise InconsistencyError("positive root already exists at the smallest scanned beta")
    lo, hi = grid[first - 1], grid[first]
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if positive_root_exists(d, s, mid, 0.0):
            hi = mid
        else:
            lo = mid
    return CriticalValues(d, s, hi)


def critical_field_asymptotic(beta: float, s: int, d: int | None = None) -> float:
    """Large-beta critical h^t of the inner map, up to an error vanishing as beta grows.

    With ``d = s`` the leading term is ``(s-1) beta / 2``; each of the ``d - s``
    outside children lowers it by ``beta / 2``.
    """
    d = s if d is None else d
    return (2 * s - d - 1) / 2 * beta + (s - 1) / 2 * math.log(s - 1) - s / 2 * math.log(s)


# -- discontinuity certificate


@dataclass(frozen=True)
class Certificate:
    is_bad: bool
    gap: float
    gap_next: float
    threshold: float | None
    f_plus: float | None
    f_prime: float
    boundary_value: float
    n: int
    m: int
    s: int
    on_subtree: bool
    neighbours: list[int]

    def to_dict(self) -> dict:
        return {
            "is_bad": self.is_bad,
            "gap": self.gap,
            "gap_next": self.gap_next,
            "threshold": self.threshold,
            "f_plus": self.f_plus,
            "f_prime": self.f_prime,
            "boundary_value": self.boundary_value,
            "n": self.n,
            "m": self.m,
            "s": self.s,
            "on_subtree": self.on_subtree,
            "neighbours": self.neighbours,
            "kind": "numerical certificate (finite-depth stabilization), not a proof",
        }


def boundary_value_for_margin(d: int, beta: float, ht: float, m: int | None = None,
                              tol: float = 1e-8) -> tuple[float, int, float]:
    """Field entering D_n from m homogeneous plus annuli n+1..n+m outside it.

    The outermost of those annuli has no children, so the field on ring n+j
    edges is the (m-j)-th outer iterate of 0.  Returns (field on occupied
    ring-n vertices, m, F').  With m=None, m is the smallest margin with
    |F_{n+1} - F'| < tol.
    """
    fp = outer_fixed_point(d, beta, ht)
    x = 0.0  # field on ring n+1
    if m is None:
        m = 1
        while abs(x - fp) >= tol:
            x = float(outer_map(x, d, beta, ht))
            m += 1
            if m > 100_000:
                raise InconsistencyError("outer recursion failed to approach F'")
    else:
        for _ in range(m - 1):
            x = float(outer_map(x, d, beta, ht))
    return float(outer_map(x, d, beta, ht)), m, fp


def _gap(eta: SpinConfiguration, s: int, beta: float, ht: float, bv: float):
    t = eta.truncation
    f_up = root_neighbour_fields(eta, beta, ht, bv)
    f_dn = root_neighbour_fields(eta, beta, ht, -bv)
    mask = subtree_mask(eta, s)
    ring1 = np.arange(t.ring(1).start, t.ring(1).stop)
    occupied = eta.occupied[ring1]
    if mask[0]:
        sel = mask[ring1]
        return float(np.min((f_up - f_dn)[sel])), True, ring1[sel].tolist()
    if not occupied.any():
        return 0.0, False, []
    return float(np.max((f_up - f_dn)[occupied])), False, ring1[occupied].tolist()


def discontinuity_certificate(
    eta: SpinConfiguration,
    p: ModelParams,
    k: TimeKernel,
    s: int,
    n: int,
    m: int | None = None,
    tol: float = 0.05,
    stabilization: float = 1e-6,
) -> Certificate:
    """Plus- versus minus-boundary gap of the root-neighbour fields.

    ``eta`` is fixed inside D_n; the m annuli outside are all plus or all
    minus.  Those annuli are homogeneous, so they are summarised exactly by
    the outer recursion instead of being materialised.  The check is repeated
    at depth n+2, which needs ``eta`` on D_{n+2}.  ``is_bad`` holds when the
    root roots an occupied s-subtree, F+ exists, both gaps exceed
    2 F+ (1 - tol) and they agree to ``stabilization``.
    """
    t = eta.truncation
    if n <= 0 or (m is not None and m <= 0):
        raise ParameterError(f"depth n and margin m must be positive, got n={n}, m={m}")
    if t.n < n + 2:
        raise ParameterError(f"eta must be given on D_{n + 2}; it has depth {t.n}")
    if eta.spin[0] == 0:
        raise ParameterError("the root of the conditioning configuration is unoccupied")
    beta, ht = p.beta, k.ht
    bv, m_used, fp = boundary_value_for_margin(t.d, beta, ht, m)
    fplus = f_plus(t.d, s, beta, ht)
    gap, on_subtree, nbrs = _gap(eta.restrict(n), s, beta, ht, bv)
    gap_next, on_next, _ = _gap(eta.restrict(n + 2), s, beta, ht, bv)
    threshold = None if fplus is None else 2 * fplus * (1 - tol)
    is_bad = bool(
        on_subtree and on_next and threshold is not None
        and gap >= threshold and gap_next >= threshold
        and abs(gap - gap_next) < stabilization
    )
    return Certificate(is_bad, gap, gap_next, threshold, fplus, fp, bv, n, m_used, s,
                       on_subtree, nbrs)


def subtree_lower_bounds(d: int, s: int, beta: float, ht: float, boundary_value: float,
                         n: int) -> np.ndarray:
    """Per-annulus lower bounds for subtree fields under a plus boundary.

    Entry k (1..n) bounds f on subtree edges leaving ring k; entry n is the
    boundary value itself, and inner entries follow the inner map.
    """
    lb = np.full(n + 1, np.nan)
    lb[n] = boundary_value
    for kk in range(n - 1, 0, -1):
        lb[kk] = float(inner_map(lb[kk + 1], d, s, beta, ht))
    return lb
