"""Finite balls of the Cayley tree of order d with breadth-first indexing.

Vertices of the ball D_n are numbered 0..N-1 ring by ring, starting with the
root.  The root has d+1 children, every other non-leaf vertex has d, and the
children of a vertex are contiguous in the numbering.  Because the layout is
regular, parents and children are computed arithmetically and nothing but the
ring offsets is stored; a ball D_m with m < n is a prefix of D_n.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, TextIO

import numpy as np

SPINS = (-1, 0, 1)


@dataclass(frozen=True)
class TreeTruncation:
    d: int
    n: int
    offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise ValueError(f"depth n must be a non-negative integer, got {self.n!r}")
        sizes = [1] + [(self.d + 1) * self.d ** (k - 1) for k in range(1, self.n + 1)]
        offsets = np.zeros(self.n + 2, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)

    @property
    def n_vertices(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_edges(self) -> int:
        return self.n_vertices - 1

    def ring_size(self, k: int) -> int:
        self._check_ring(k)
        return int(self.offsets[k + 1] - self.offsets[k])

    def ring(self, k: int) -> slice:
        self._check_ring(k)
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def _check_ring(self, k):
        if not 0 <= k <= self.n:
            raise ValueError(f"annulus index {k} outside 0..{self.n}")

    def n_children(self, v: int) -> int:
        k = self.depth_of(v)
        if k == self.n:
            return 0
        return self.d + 1 if v == 0 else self.d

    def depth_of(self, v: int) -> int:
        if not 0 <= v < self.n_vertices:
            raise IndexError(f"vertex {v} not in truncation of size {self.n_vertices}")
        return int(np.searchsorted(self.offsets, v, side="right") - 1)

    def children(self, v: int) -> range:
        k = self.depth_of(v)
        if k == self.n:
            return range(0)
        if v == 0:
            return range(1, self.d + 2)
        start = int(self.offsets[k + 1]) + (v - int(self.offsets[k])) * self.d
        return range(start, start + self.d)

    def parent_of(self, v: int) -> int:
        k = self.depth_of(v)
        if k == 0:
            raise ValueError("the root has no parent")
        if k == 1:
            return 0
        return int(self.offsets[k - 1]) + (v - int(self.offsets[k])) // self.d

    @cached_property
    def depth(self) -> np.ndarray:
        out = np.repeat(np.arange(self.n + 1), np.diff(self.offsets))
        out.setflags(write=False)
        return out

    @cached_property
    def parent(self) -> np.ndarray:
        """Parent index of every vertex; -1 at the root."""
        par = np.empty(self.n_vertices, dtype=np.int64)
        par[0] = -1
        if self.n >= 1:
            par[self.ring(1)] = 0
        for k in range(2, self.n + 1):
            pos = np.arange(self.ring_size(k))
            par[self.ring(k)] = self.offsets[k - 1] + pos // self.d
        par.setflags(write=False)
        return par

    def sibling_position(self, k: int) -> np.ndarray:
        """Position of each ring-k vertex among its siblings."""
        pos = np.arange(self.ring_size(k))
        return pos if k == 1 else pos % self.d

    def path_to_root(self, v: int) -> list[int]:
        path = [v]
        while v != 0:
            v = self.parent_of(v)
            path.append(v)
        return path

    def edges(self) -> Iterable[tuple[int, int]]:
        """Edges oriented toward the root, as (child, parent)."""
        par = self.parent
        return ((v, int(par[v])) for v in range(1, self.n_vertices))


@lru_cache(maxsize=64)
def _cached_truncation(d: int, n: int) -> TreeTruncation:
    return TreeTruncation(d, n)


def build_truncation(d: int, n: int) -> TreeTruncation:
    if not isinstance(d, (int, np.integer)) or not isinstance(n, (int, np.integer)):
        raise ValueError(f"d and n must be integers, got {d!r}, {n!r}")
    return _cached_truncation(int(d), int(n))


def annulus(t: TreeTruncation, k: int) -> range:
    """Vertices at graph distance k from the root."""
    s = t.ring(k)
    return range(s.start, s.stop)


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    truncation: TreeTruncation
    spin: np.ndarray

    def __post_init__(self):
        spin = np.asarray(self.spin)
        if spin.shape != (self.truncation.n_vertices,):
            raise ValueError(
                f"spin array has shape {spin.shape}, expected ({self.truncation.n_vertices},)"
            )
        if spin.size and (spin.min() < -1 or spin.max() > 1):
            raise ValueError("spins must take values in {-1, 0, +1}")
        as_int = spin.astype(np.int8, copy=True)
        if spin.dtype.kind not in "iub" and not np.array_equal(as_int, spin):
            raise ValueError("spins must take values in {-1, 0, +1}")
        spin = as_int
        spin.setflags(write=False)
        object.__setattr__(self, "spin", spin)

    def __eq__(self, other):
        if not isinstance(other, SpinConfiguration):
            return NotImplemented
        return self.truncation == other.truncation and np.array_equal(self.spin, other.spin)

    @property
    def occupied(self) -> np.ndarray:
        return self.spin != 0

    def occupied_set(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.spin).tolist())

    def restrict(self, n: int) -> "SpinConfiguration":
        """The configuration on the sub-ball D_n (a prefix in BFS order)."""
        if n > self.truncation.n:
            raise ValueError(f"cannot restrict depth {self.truncation.n} configuration to depth {n}")
        t = build_truncation(self.truncation.d, n)
        return SpinConfiguration(t, self.spin[: t.n_vertices])

    def with_spin(self, v: int, value: int) -> "SpinConfiguration":
        spin = self.spin.copy()
        spin[v] = value
        return SpinConfiguration(self.truncation, spin)


def constant_configuration(t: TreeTruncation, value: int) -> SpinConfiguration:
    return SpinConfiguration(t, np.full(t.n_vertices, value, dtype=np.int8))


def occupied_components(cfg: SpinConfiguration) -> list[frozenset[int]]:
    """Connected components of the occupied set, ordered by smallest vertex.

    In BFS order a component's smallest vertex is its anchor: the occupied
    vertex closest to the root, whose parent is empty (or which is the root).
    """
    t = cfg.truncation
    occ = cfg.occupied
    label = np.full(t.n_vertices, -1, dtype=np.int64)
    if t.n_vertices == 0:
        return []
    if occ[0]:
        label[0] = 0
    par = t.parent
    for k in range(1, t.n + 1):
        sl = t.ring(k)
        idx = np.arange(sl.start, sl.stop)
        inherited = label[par[sl]]
        lab = np.where(inherited >= 0, inherited, idx)
        label[sl] = np.where(occ[sl], lab, -1)
    members = np.flatnonzero(label >= 0)
    groups: dict[int, list[int]] = {}
    for v, a in zip(members.tolist(), label[members].tolist()):
        groups.setdefault(a, []).append(v)
    return [frozenset(groups[a]) for a in sorted(groups)]


def subtree_mask(cfg: SpinConfiguration, s: int) -> np.ndarray:
    """Vertices that root an occupied outward subtree of order s reaching depth n.

    A vertex qualifies when it is occupied and either sits on the outermost
    ring or has at least s qualifying children.
    """
    t = cfg.truncation
    if not 1 <= s <= t.d:
        raise ValueError(f"subtree order s must lie in 1..{t.d}, got {s}")
    occ = cfg.occupied
    mask = np.zeros(t.n_vertices, dtype=bool)
    mask[t.ring(t.n)] = occ[t.ring(t.n)]
    for k in range(t.n - 1, -1, -1):
        below = mask[t.ring(k + 1)]
        counts = np.array([below.sum()]) if k == 0 else below.reshape(-1, t.d).sum(axis=1)
        mask[t.ring(k)] = occ[t.ring(k)] & (counts >= s)
    return mask


def contains_s_subtree(cfg: SpinConfiguration, s: int, root_vertex: int = 0) -> bool:
    """Whether root_vertex roots an occupied s-subtree spanning to the boundary.

    "Infinite" is read as "spans every annulus up to the truncation depth".
    """
    if not cfg.occupied[root_vertex]:
        raise ValueError(f"root vertex {root_vertex} is unoccupied")
    return bool(subtree_mask(cfg, s)[root_vertex])


def subtree_pattern(
    t: TreeTruncation,
    s: int,
    subtree_sign: int = -1,
    appendix_sign: int = -1,
    appendix_depth: int = 0,
    root_sign: int | None = None,
) -> SpinConfiguration:
    """An occupied s-subtree at the root, optionally with finite appendices.

    The first s children of every subtree vertex (the first s of the root's
    d+1) belong to the subtree and carry ``subtree_sign``.  With
    ``appendix_depth`` > 0 each remaining child heads a fully occupied
    appendix of that many generations with ``appendix_sign``, followed by
    empty sites; otherwise the remaining children are empty.  With the
    default signs the subtree opposes a plus boundary condition.
    """
    if not 1 <= s <= t.d:
        raise ValueError(f"subtree order s must lie in 1..{t.d}, got {s}")
    # kind: 0 empty, 1 subtree, 2 + j appendix generation j
    kind = np.zeros(t.n_vertices, dtype=np.int16)
    kind[0] = 1
    par = t.parent
    for k in range(1, t.n + 1):
        sl = t.ring(k)
        pk = kind[par[sl]]
        pos = t.sibling_position(k)
        ck = np.zeros_like(pk)
        ck[(pk == 1) & (pos < s)] = 1
        if appendix_depth > 0:
            ck[(pk == 1) & (pos >= s)] = 2
            grow = (pk >= 2) & (pk - 2 + 1 < appendix_depth)
            ck[grow] = pk[grow] + 1
        kind[sl] = ck
    spin = np.zeros(t.n_vertices, dtype=np.int8)
    spin[kind == 1] = subtree_sign
    spin[kind >= 2] = appendix_sign
    spin[0] = subtree_sign if root_sign is None else root_sign
    return SpinConfiguration(t, spin)


# -- text format: header "d n", then "index parent spin" per vertex


def write_configuration(cfg: SpinConfiguration, fh: TextIO) -> None:
    t = cfg.truncation
    fh.write(f"{t.d} {t.n}\n")
    par = t.parent
    for v in range(t.n_vertices):
        fh.write(f"{v} {int(par[v])} {int(cfg.spin[v])}\n")


def read_configuration(fh: TextIO) -> SpinConfiguration:
    lines = [ln for ln in (raw.strip() for raw in fh) if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty configuration file")
    try:
        d, n = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad header line {lines[0]!r}; expected 'd n'") from exc
    t = build_truncation(d, n)
    body = lines[1:]
    if len(body) != t.n_vertices:
        raise ValueError(f"expected {t.n_vertices} vertex lines, found {len(body)}")
    rows = np.array([[int(x) for x in ln.split()] for ln in body], dtype=np.int64)
    if rows.shape[1] != 3:
        raise ValueError("vertex lines must read 'index parent spin'")
    if not np.array_equal(rows[:, 0], np.arange(t.n_vertices)):
        raise ValueError("vertex indices must be 0..N-1 in order")
    if not np.array_equal(rows[:, 1], t.parent):
        raise ValueError("parent column is inconsistent with breadth-first indexing")
    return SpinConfiguration(t, rows[:, 2])


def dumps(cfg: SpinConfiguration) -> str:
    buf = io.StringIO()
    write_configuration(cfg, buf)
    return buf.getvalue()


def loads(text: str) -> SpinConfiguration:
    return read_configuration(io.StringIO(text))
