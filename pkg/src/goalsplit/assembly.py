"""Assembly of the discrete dynamic-iteration operators.

For trial family ``a`` (explicit Euler) or ``c`` (Crank-Nicolson) and test
family ``b`` the iterate ``u_k`` solves

    F_hat u_k = G - F_check u_{k-1},

and the adjoint iterates solve ``F_hat^T z_K = H``,
``F_hat^T z_k = -F_check^T z_{k+1}``.  Rows are indexed by test functions,
columns by trial functions, both component-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import merged_quadrature
from .mesh import MultiMesh
from .model import Problem, QoI, Splitting

__all__ = ["SCHEMES", "AssembledSystem", "assemble", "scheme_families", "mass_block", "dump_triplets"]

SCHEMES = {"explicit_euler": ("a", "b"), "crank_nicolson": ("c", "b")}
_ALIASES = {"euler": "explicit_euler", "cn": "crank_nicolson"}


def canonical_scheme(scheme: str) -> str:
    scheme = _ALIASES.get(scheme, scheme).replace("-", "_")
    if scheme not in SCHEMES:
        raise ValueError(f"unsupported scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    return scheme


def scheme_families(scheme: str) -> tuple[str, str]:
    return SCHEMES[canonical_scheme(scheme)]


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    F_hat: sp.csc_matrix
    F_check: sp.csc_matrix
    G: np.ndarray
    H: np.ndarray
    mesh: MultiMesh
    scheme: str
    trial: str
    test: str
    masses: dict = field(repr=False, default_factory=dict)

    @property
    def size(self) -> int:
        return self.G.size


def mass_block(mesh: MultiMesh, i: int, k: int, trial: str) -> sp.coo_matrix:
    """``int phi^b_{i,j} phi^trial_{k,l} dt`` for all ``j, l``.

    Integrated exactly with the midpoint rule on the merged grid of both
    components (the integrand is at most linear on every merged subcell).
    """
    x, w = merged_quadrature((i, k), mesh, 1)
    ti, tk = mesh.nodes[i], mesh.nodes[k]
    rows = np.searchsorted(ti, x, side="left")
    shape = (ti.size, tk.size)
    if trial == "a":
        cols = np.searchsorted(tk, x, side="right") - 1
        return sp.coo_matrix((w, (rows, cols)), shape=shape)
    if trial != "c":
        raise ValueError(f"unsupported trial family {trial!r}")
    left = np.clip(np.searchsorted(tk, x, side="right") - 1, 0, tk.size - 2)
    theta = (x - tk[left]) / (tk[left + 1] - tk[left])
    return sp.coo_matrix(
        (np.concatenate([w * (1.0 - theta), w * theta]),
         (np.concatenate([rows, rows]), np.concatenate([left, left + 1]))),
        shape=shape,
    )


def _derivative_block(n: int) -> sp.coo_matrix:
    # row 0 carries the initial-condition pairing; rows j >= 1 the jump (family a)
    # or the integrated slope (family c) over test cell j, both u_j - u_{j-1}
    j = np.arange(1, n + 1)
    rows = np.concatenate([[0], j, j])
    cols = np.concatenate([[0], j, j - 1])
    vals = np.concatenate([[1.0], np.ones(n), -np.ones(n)])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))


def forcing_rule(scheme: str, nodes: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per test cell forcing quadrature: left rectangle (Euler) or trapezoid (CN)."""
    h = np.diff(nodes)
    if canonical_scheme(scheme) == "explicit_euler":
        return h * y[:-1]
    return 0.5 * h * (y[:-1] + y[1:])


def _place(blocks, mesh: MultiMesh) -> sp.csc_matrix:
    off = mesh.offsets
    rows, cols, vals = [], [], []
    for (i, k), blk in blocks.items():
        blk = blk.tocoo()
        rows.append(blk.row + off[i])
        cols.append(blk.col + off[k])
        vals.append(blk.data)
    if not rows:
        return sp.csc_matrix((mesh.size, mesh.size))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.size, mesh.size),
    )
    A.sum_duplicates()
    A.eliminate_zeros()
    return A.tocsc()


def assemble(problem: Problem, splitting: Splitting, qoi: QoI, mesh: MultiMesh, scheme: str) -> AssembledSystem:
    scheme = canonical_scheme(scheme)
    trial, test = SCHEMES[scheme]
    m = problem.m
    if mesh.m != m or splitting.B_hat.shape != (m, m) or qoi.m != m:
        raise ValueError("problem, splitting, QoI and mesh dimensions disagree")

    masses = {}
    hat_blocks, check_blocks = {}, {}
    for i in range(m):
        hat_blocks[(i, i)] = _derivative_block(mesh.n[i])
    for i in range(m):
        for k in range(m):
            b_hat, b_check = splitting.B_hat[i, k], splitting.B_check[i, k]
            if b_hat == 0.0 and b_check == 0.0:
                continue
            M = mass_block(mesh, i, k, trial).tocsr()
            masses[(i, k)] = M
            if b_hat != 0.0:
                prev = hat_blocks.get((i, k))
                hat_blocks[(i, k)] = b_hat * M if prev is None else prev + b_hat * M
            if b_check != 0.0:
                check_blocks[(i, k)] = b_check * M

    G = np.empty(mesh.size)
    off = mesh.offsets
    for i in range(m):
        t = mesh.nodes[i]
        y = problem.Y.component(i, t)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"forcing component {i} is not finite on the grid")
        G[off[i]] = problem.U0[i]
        G[off[i] + 1:off[i + 1]] = forcing_rule(scheme, t, y)

    H = np.zeros(mesh.size)
    for tau, w in zip(qoi.times, qoi.weights):
        for i in np.flatnonzero(w):
            t = mesh.nodes[i]
            if trial == "a":
                j = int(np.clip(np.searchsorted(t, tau, side="right") - 1, 0, t.size - 1))
                H[off[i] + j] += w[i]
            else:
                l = int(np.clip(np.searchsorted(t, tau, side="right") - 1, 0, t.size - 2))
                theta = (tau - t[l]) / (t[l + 1] - t[l])
                H[off[i] + l] += w[i] * (1.0 - theta)
                H[off[i] + l + 1] += w[i] * theta

    return AssembledSystem(
        F_hat=_place(hat_blocks, mesh),
        F_check=_place(check_blocks, mesh),
        G=G,
        H=H,
        mesh=mesh,
        scheme=scheme,
        trial=trial,
        test=test,
        masses=masses,
    )


def dump_triplets(A: sp.spmatrix) -> str:
    """``row col value`` per line, sorted by row then column."""
    A = A.tocoo()
    order = np.lexsort((A.col, A.row))
    return "".join(
        f"{int(A.row[k])} {int(A.col[k])} {float(A.data[k])!r}\n" for k in order
    )
