"""Time-zero soft-core Widom-Rowlinson model on the Cayley tree.

Spins are indexed in the order (-1, 0, +1) everywhere.  The spin-flip
symmetric ("intermediate") boundary law is parametrised by the positive root
xi of  x = lam * ((1 + (1 + e^-beta) x) / (1 + 2x))^d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPIN_INDEX = {-1: 0, 0: 1, 1: 2}
SPIN_VALUES = np.array([-1, 0, 1])


class ParameterError(ValueError):
    """Invalid model or run parameters."""


class InconsistencyError(RuntimeError):
    """A numerical certificate contradicts another one; indicates a bug."""


@dataclass(frozen=True)
class ModelParams:
    d: int
    beta: float
    lam: float
    h: float = 0.0

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise ParameterError(f"d must be an integer >= 2, got {self.d!r}")
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ParameterError(f"lambda must be positive and finite, got {self.lam!r}")
        if not math.isfinite(self.h):
            raise ParameterError(f"h must be finite, got {self.h!r}")

    @property
    def exp_minus_beta(self) -> float:
        return math.exp(-self.beta)

    def require_zero_field(self):
        if self.h != 0:
            raise ParameterError(
                "the intermediate boundary law is only defined at h = 0; got h = %r" % self.h
            )


def _spin_index(x) -> int:
    try:
        return SPIN_INDEX[int(x)]
    except (KeyError, TypeError, ValueError):
        raise ParameterError(f"spin must be one of -1, 0, +1; got {x!r}") from None


def transfer_operator(p: ModelParams, spin_i, spin_j) -> float:
    """Q(x, y) with the single-site terms split evenly over the d+1 edges."""
    _spin_index(spin_i), _spin_index(spin_j)
    x, y = int(spin_i), int(spin_j)
    pair = p.beta if x * y == -1 else 0.0
    log_lam = math.log(p.lam)
    single = (p.h * x + log_lam * x * x + p.h * y + log_lam * y * y) / (p.d + 1)
    return math.exp(-pair + single)


def transfer_matrix_q(p: ModelParams) -> np.ndarray:
    return np.array([[transfer_operator(p, x, y) for y in SPIN_VALUES] for x in SPIN_VALUES])


@dataclass(frozen=True)
class IntermediateBoundaryLaw:
    xi: float
    law: np.ndarray
    alpha: float
    residual: float


def _xi_ratio(x, e):
    return (1.0 + (1.0 + e) * x) / (1.0 + 2.0 * x)


def xi_residual(x: float, lam: float, d: int, e: float) -> float:
    return x - lam * _xi_ratio(x, e) ** d


def solve_xi(p: ModelParams) -> IntermediateBoundaryLaw:
    """Root of x = lam * r(x)^d by bisection on the guaranteed bracket, then Newton.

    The residual is increasing on (0, inf): negative at 2^-d lam, positive at lam.
    """
    p.require_zero_field()
    return _solve_xi(p.d, p.beta, p.lam)


def _solve_xi(d: int, beta: float, lam: float) -> IntermediateBoundaryLaw:
    e = math.exp(-beta)
    lo = 2.0 ** (-d) * lam * (1 - 1e-6)
    hi = lam * (1 + 1e-6)
    f_lo, f_hi = xi_residual(lo, lam, d, e), xi_residual(hi, lam, d, e)
    if not (f_lo < 0 < f_hi):
        raise InconsistencyError(
            f"xi bracket [{lo}, {hi}] does not straddle a sign change (d={d}, beta={beta}, lam={lam})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if xi_residual(mid, lam, d, e) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * hi:
            break
    x = 0.5 * (lo + hi)
    # d/dx r(x) = (e - 1) / (1 + 2x)^2
    for _ in range(8):
        r = _xi_ratio(x, e)
        f = x - lam * r**d
        df = 1.0 - lam * d * r ** (d - 1) * (e - 1.0) / (1.0 + 2.0 * x) ** 2
        step = f / df
        x_new = x - step
        if not lo * (1 - 1e-9) <= x_new <= hi * (1 + 1e-9):
            break
        x = x_new
        if abs(step) <= 1e-16 * abs(x):
            break
    c = lam ** (-1.0 / (d + 1))
    law = np.array([x * c, 1.0, x * c])
    law.setflags(write=False)
    return IntermediateBoundaryLaw(
        xi=x, law=law, alpha=_xi_ratio(x, e), residual=abs(xi_residual(x, lam, d, e))
    )


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray
    rho: np.ndarray
    eigenvalues: tuple[float, float, float]


def transition_matrix(p: ModelParams, bl: IntermediateBoundaryLaw) -> TransitionMatrix:
    p.require_zero_field()
    e, xi, a = p.exp_minus_beta, bl.xi, bl.alpha
    denom = 1.0 + (1.0 + e) * xi
    entries = np.array(
        [
            [xi, 1.0, e * xi],
            [a * xi, a, a * xi],
            [e * xi, 1.0, xi],
        ]
    ) / denom
    u2 = (1.0 - e) * xi / denom
    u3 = -u2 / (1.0 + 2.0 * xi)
    # invariant law: rho(x) proportional to l(x) * sum_y Q(x, y) l(y)
    rho = np.array([xi * denom, 1.0 + 2.0 * xi, xi * denom])
    rho /= rho.sum()
    numeric = np.sort(np.abs(np.linalg.eigvals(entries)))[::-1]
    closed = np.sort(np.abs([1.0, u2, u3]))[::-1]
    if not np.allclose(numeric, closed, rtol=0, atol=1e-8):
        raise InconsistencyError(f"closed-form eigenvalues {closed} disagree with numeric {numeric}")
    entries.setflags(write=False)
    rho.setflags(write=False)
    return TransitionMatrix(entries=entries, rho=rho, eigenvalues=(1.0, u2, u3))


def intermediate_chain(p: ModelParams) -> tuple[IntermediateBoundaryLaw, TransitionMatrix]:
    bl = solve_xi(p)
    return bl, transition_matrix(p, bl)


def kesten_stigum(p: ModelParams, tm: TransitionMatrix) -> bool:
    """u2^2 d > 1: the intermediate measure is then non-extremal."""
    u2 = tm.eigenvalues[1]
    return u2 * u2 * p.d > 1.0


def dobrushin_flag(p: ModelParams) -> bool:
    """beta (d+1) < 2: the time-evolved measure is Gibbs at every t > 0."""
    return p.beta * (p.d + 1) < 2.0


def edge_marginal(p: ModelParams, bl: IntermediateBoundaryLaw) -> np.ndarray:
    """Joint law of the spins at the two ends of an edge."""
    p.require_zero_field()
    q = transfer_matrix_q(p)
    table = bl.law[:, None] * q * bl.law[None, :]
    return table / table.sum()


def conditional_row(tm: TransitionMatrix, spin_from) -> np.ndarray:
    return tm.entries[_spin_index(spin_from)].copy()
