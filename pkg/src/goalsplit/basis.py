"""Time basis families, discrete functions over a :class:`MultiMesh` and quadrature.

Families (per component, coefficients ``j = 0..n``):

``a``  piecewise constants, right-continuous: ``phi_j = 1`` on ``[t_j, t_{j+1})``,
       with ``phi_0`` extended to ``(-inf, t_1)`` and ``phi_n`` to ``[t_n, inf)``.
       Coefficient ``j`` is the value at breakpoint ``t_j``.
``b``  piecewise constants, left-continuous: ``phi_j = 1`` on ``(t_{j-1}, t_j]``,
       with ``phi_0`` on ``(-inf, t_0]`` and ``phi_n`` extended to ``(t_{n-1}, inf)``.
``c``  continuous piecewise-linear hats, ``phi_j(t_k) = delta_jk``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import MultiMesh

__all__ = [
    "FAMILIES",
    "DiscreteFunction",
    "evaluate_basis",
    "transfer_waveform",
    "merged_quadrature",
    "gauss_rule",
]

FAMILIES = ("a", "b", "c")

# breakpoint coefficient j is the a-function's right limit and the b-function's left limit
_QOI_SIDE = {"a": "right", "b": "left", "c": "right"}


def _index(family: str, nodes: np.ndarray, t, side: str | None = None) -> np.ndarray:
    n = nodes.size - 1
    if family == "a":
        idx = np.searchsorted(nodes, t, side=side or "right") - 1
    elif family == "b":
        idx = np.searchsorted(nodes, t, side=side or "left")
    else:
        raise ValueError(f"piecewise constant family expected, got {family!r}")
    return np.clip(idx, 0, n)


def _eval_component(family: str, nodes: np.ndarray, coef: np.ndarray, t, side=None):
    if family == "c":
        return np.interp(t, nodes, coef)
    return coef[_index(family, nodes, t, side)]


class DiscreteFunction:
    """Vector function ``sum_{i,j} u_{i,j} e_i phi_{i,j}`` on a multi-mesh."""

    __slots__ = ("mesh", "family", "coeffs")

    def __init__(self, mesh: MultiMesh, family: str, coeffs):
        if family not in FAMILIES:
            raise ValueError(f"unknown basis family {family!r}")
        coeffs = tuple(np.array(c, dtype=float) for c in coeffs)
        if len(coeffs) != mesh.m:
            raise ValueError(f"expected {mesh.m} coefficient blocks, got {len(coeffs)}")
        for i, (c, n_i) in enumerate(zip(coeffs, mesh.n)):
            if c.shape != (n_i + 1,):
                raise ValueError(f"component {i}: expected {n_i + 1} coefficients, got {c.shape}")
            c.setflags(write=False)
        self.mesh = mesh
        self.family = family
        self.coeffs = coeffs

    @classmethod
    def from_flat(cls, mesh: MultiMesh, family: str, vec) -> "DiscreteFunction":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (mesh.size,):
            raise ValueError(f"flat vector has shape {vec.shape}, expected ({mesh.size},)")
        off = mesh.offsets
        return cls(mesh, family, [vec[off[i]:off[i + 1]] for i in range(mesh.m)])

    @classmethod
    def constant(cls, mesh: MultiMesh, family: str, value) -> "DiscreteFunction":
        value = np.asarray(value, dtype=float)
        return cls(mesh, family, [np.full(n_i + 1, value[i]) for i, n_i in enumerate(mesh.n)])

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.coeffs)

    @property
    def qoi_side(self) -> str:
        return _QOI_SIDE[self.family]

    def component(self, i: int, t, side: str | None = None):
        return _eval_component(self.family, self.mesh.nodes[i], self.coeffs[i], t, side)

    def __call__(self, t):
        return np.array([self.component(i, t) for i in range(self.mesh.m)])

    def limit(self, t: float, side: str):
        """One-sided limit at ``t`` (``side`` is ``"left"`` or ``"right"``)."""
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        if self.family == "c":
            return self(t)
        # a: searchsorted 'right'-1 is the right limit, 'left'-1 the left limit;
        # b: searchsorted 'left' is the left limit, 'right' the right limit
        if self.family == "a":
            sside = "right" if side == "right" else "left"
        else:
            sside = "left" if side == "left" else "right"
        return np.array(
            [_eval_component(self.family, t_i, c, t, sside) for t_i, c in zip(self.mesh.nodes, self.coeffs)]
        )

    def __sub__(self, other: "DiscreteFunction") -> "DiscreteFunction":
        if other.mesh != self.mesh or other.family != self.family:
            raise ValueError("mesh or family mismatch")
        return DiscreteFunction(self.mesh, self.family, [a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __repr__(self):
        return f"DiscreteFunction(family={self.family!r}, n={self.mesh.n})"


def evaluate_basis(family: str, mesh: MultiMesh, i: int, j: int, t):
    """Value of the scalar basis function ``phi_{i,j}`` of ``family`` at ``t``."""
    if family not in FAMILIES:
        raise ValueError(f"unknown basis family {family!r}")
    if not (0 <= i < mesh.m and 0 <= j <= mesh.n[i]):
        raise ValueError(f"invalid basis index {(i, j)}")
    coef = np.zeros(mesh.n[i] + 1)
    coef[j] = 1.0
    return _eval_component(family, mesh.nodes[i], coef, t)


def transfer_waveform(f: DiscreteFunction, new: MultiMesh) -> DiscreteFunction:
    """Re-represent ``f`` exactly on the nested refinement ``new``."""
    if not new.contains(f.mesh):
        raise ValueError("target mesh is not a refinement of the source mesh")
    if f.family == "b":
        raise ValueError("transfer is defined for trial families 'a' and 'c'")
    coeffs = [f.component(i, new.nodes[i]) for i in range(new.m)]
    return DiscreteFunction(new, f.family, coeffs)


@lru_cache(maxsize=None)
def gauss_rule(points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(points)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_rule(breaks: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on every subinterval of ``breaks``, exact for ``degree``."""
    x, w = gauss_rule(max(1, (degree + 2) // 2))
    h = np.diff(breaks)
    nodes = (breaks[:-1, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def merged_quadrature(pair: tuple[int, int], mesh: MultiMesh, degree: int):
    """Nodes and weights exact for piecewise polynomials of ``degree`` on the
    union of both components' breakpoints."""
    i, k = pair
    return composite_rule(mesh.merged_nodes((i, k)), degree)
