"""Per-component time grids with bisection refinement.

Component ``i`` (0-based) has breakpoints ``t[i][0] = t0 < ... < t[i][n_i] = tn``.
Cells are addressed by ``(i, j)`` with ``j = 1..n_i`` and cover
``[t[i][j-1], t[i][j]]``; coefficients are addressed by ``j = 0..n_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .model import Problem, QoI

__all__ = ["MultiMesh", "init_mesh", "select_cells", "bisect_cells", "refine_count"]

CellId = tuple[int, int]


@dataclass(frozen=True, eq=False)
class MultiMesh:
    nodes: tuple[np.ndarray, ...]
    level: int = 0
    qoi_times: tuple[float, ...] = ()

    def __post_init__(self):
        frozen = []
        for i, t in enumerate(self.nodes):
            t = np.array(t, dtype=float)
            if t.ndim != 1 or t.size < 2:
                raise ValueError(f"component {i}: need at least two breakpoints")
            if np.any(np.diff(t) <= 0.0):
                raise ValueError(f"component {i}: breakpoints must be strictly increasing")
            t.setflags(write=False)
            frozen.append(t)
        if not frozen:
            raise ValueError("mesh needs at least one component")
        t0, tn = frozen[0][0], frozen[0][-1]
        for i, t in enumerate(frozen):
            if t[0] != t0 or t[-1] != tn:
                raise ValueError(f"component {i}: endpoints differ from component 0")
        object.__setattr__(self, "nodes", tuple(frozen))
        object.__setattr__(self, "qoi_times", tuple(float(x) for x in self.qoi_times))

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.nodes[0][0]), float(self.nodes[0][-1])

    @property
    def n(self) -> tuple[int, ...]:
        """Cell count per component."""
        return tuple(t.size - 1 for t in self.nodes)

    @property
    def N(self) -> int:
        """Total number of cells over all components."""
        return sum(self.n)

    @property
    def offsets(self) -> np.ndarray:
        """Start of each component's block in the flat coefficient vector."""
        return np.concatenate([[0], np.cumsum([k + 1 for k in self.n])])

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def widths(self, i: int) -> np.ndarray:
        return np.diff(self.nodes[i])

    def cells(self) -> Iterator[CellId]:
        for i, n_i in enumerate(self.n):
            for j in range(1, n_i + 1):
                yield (i, j)

    def merged_nodes(self, components: Iterable[int] | None = None) -> np.ndarray:
        comps = range(self.m) if components is None else components
        return np.unique(np.concatenate([self.nodes[i] for i in comps]))

    def contains(self, other: "MultiMesh") -> bool:
        """True if every breakpoint of ``other`` is a breakpoint of ``self``."""
        if other.m != self.m:
            return False
        return all(
            np.isin(o, s).all() for s, o in zip(self.nodes, other.nodes)
        )

    def __eq__(self, other):
        if not isinstance(other, MultiMesh):
            return NotImplemented
        return (
            self.level == other.level
            and self.m == other.m
            and all(np.array_equal(a, b) for a, b in zip(self.nodes, other.nodes))
        )

    def __hash__(self):
        return hash((self.level, tuple(t.tobytes() for t in self.nodes)))

    def dump(self) -> str:
        """One line per component, whitespace separated breakpoints."""
        return "\n".join(" ".join(repr(float(x)) for x in t) for t in self.nodes) + "\n"


def _insert_times(t: np.ndarray, taus: Iterable[float], tol: float) -> np.ndarray:
    t = t.copy()
    extra = []
    for tau in taus:
        k = int(np.argmin(np.abs(t - tau)))
        if abs(t[k] - tau) <= tol:
            t[k] = tau
        else:
            extra.append(tau)
    return np.unique(np.concatenate([t, extra]))


def init_mesh(problem: Problem, qoi: QoI, n_init: int) -> MultiMesh:
    """Equidistant ``n_init`` breakpoints per component plus every QoI time.

    A QoI time within ``1e-12 * (tn - t0)`` of an equidistant node replaces
    that node instead of adding a new one.
    """
    if int(n_init) != n_init or n_init < 2:
        raise ValueError(f"n_init must be an integer >= 2, got {n_init}")
    t0, tn = problem.interval
    tol = 1e-12 * (tn - t0)
    base = np.linspace(t0, tn, int(n_init))
    nodes = tuple(_insert_times(base, qoi.times, tol) for _ in range(problem.m))
    return MultiMesh(nodes, 0, qoi.times)


def refine_count(p: float, N: int) -> int:
    """``ceil(p * N)``, robust against representation error in ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {p}")
    return min(N, math.ceil(round(p * N, 9)))


def select_cells(local: Mapping[CellId, float], p: float) -> set[CellId]:
    """The ``ceil(p*N)`` cells with the largest values.

    Ties are resolved towards smaller component index, then smaller cell index.
    """
    if not local:
        raise ValueError("no cells to select from")
    count = refine_count(p, len(local))
    ranked = sorted(local.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    return {cell for cell, _ in ranked[:count]}


def bisect_cells(mesh: MultiMesh, cells: Iterable[CellId]) -> MultiMesh:
    """Split each selected cell at its midpoint; the level increases by one."""
    mids: list[list[float]] = [[] for _ in range(mesh.m)]
    for i, j in cells:
        if not (0 <= i < mesh.m and 1 <= j <= mesh.n[i]):
            raise ValueError(f"invalid cell {(i, j)}")
        t = mesh.nodes[i]
        mids[i].append(0.5 * (t[j - 1] + t[j]))
    nodes = tuple(
        np.unique(np.concatenate([t, np.asarray(extra, dtype=float)]))
        for t, extra in zip(mesh.nodes, mids)
    )
    return MultiMesh(nodes, mesh.level + 1, mesh.qoi_times)
