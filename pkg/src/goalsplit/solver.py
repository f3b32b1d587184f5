"""Primal sweeps and reverse-order adjoint solves against one factorization per level."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem
from .basis import DiscreteFunction

__all__ = [
    "SingularSystemError",
    "LevelFactorization",
    "IterationState",
    "primal_step",
    "dual_solve",
    "dual_from_scratch",
    "sup_initial_error",
]


class SingularSystemError(np.linalg.LinAlgError):
    pass


def _singular_location(A: sp.csc_matrix) -> str:
    A = A.tocsr()
    empty_rows = np.flatnonzero(np.diff(A.indptr) == 0)
    if empty_rows.size:
        return f"empty row {int(empty_rows[0])}"
    diag = A.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        return f"zero diagonal at index {int(zero[0])}"
    return "location unknown"


class LevelFactorization:
    """Sparse LU of ``F_hat``; reused for every primal and adjoint solve on a level."""

    def __init__(self, system: AssembledSystem):
        self.system = system
        try:
            self._lu = spla.splu(system.F_hat.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(
                f"F_hat is singular ({_singular_location(system.F_hat)}): {exc}"
            ) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SingularSystemError(f"non-finite solution ({_singular_location(self.system.F_hat)})")
        return x

    def solve_transpose(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(rhs, dtype=float), trans="T")
        if not np.all(np.isfinite(x)):
            raise SingularSystemError(f"non-finite adjoint solution ({_singular_location(self.system.F_hat)})")
        return x


@dataclass(frozen=True)
class IterationState:
    """Iterates of one refinement level.

    ``primal[k]`` is ``U_k`` (``primal[0]`` the initial waveform);
    ``duals[k-1]`` is ``Z_k`` of the current stack, so ``duals[-1]`` is the
    terminal solve ``F_hat^T z = H``.
    """

    primal: tuple[DiscreteFunction, ...]
    duals: tuple[DiscreteFunction, ...] = ()
    sup_E0: float = field(default=float("nan"))

    @property
    def K(self) -> int:
        return len(self.primal) - 1


def primal_step(fac: LevelFactorization, U_prev: DiscreteFunction) -> DiscreteFunction:
    """One dynamic-iteration sweep: ``F_hat u_k = G - F_check u_{k-1}``."""
    sys = fac.system
    if U_prev.mesh != sys.mesh or U_prev.family != sys.trial:
        raise ValueError("previous iterate does not live on this level's trial space")
    rhs = sys.G - sys.F_check @ U_prev.flat
    return DiscreteFunction.from_flat(sys.mesh, sys.trial, fac.solve(rhs))


def dual_solve(fac: LevelFactorization, state: IterationState) -> IterationState:
    """Extend the adjoint stack to ``K = state.K`` iterations.

    The stack for ``K`` equals the stack for ``K - 1`` shifted by one index,
    so only the new first adjoint is solved for.
    """
    sys = fac.system
    K = state.K
    if K < 1:
        raise ValueError("at least one primal iterate is required")
    duals = state.duals
    while len(duals) < K:
        if not duals:
            z = fac.solve_transpose(sys.H)
        else:
            z = fac.solve_transpose(-(sys.F_check.T @ duals[0].flat))
        duals = (DiscreteFunction.from_flat(sys.mesh, sys.test, z),) + duals
    return replace(state, duals=duals)


def dual_from_scratch(fac: LevelFactorization, K: int) -> list[DiscreteFunction]:
    """Reverse-order recursion ``z_K = F^-T H``, ``z_k = -F^-T F_check^T z_{k+1}``."""
    sys = fac.system
    z = [None] * K
    z[K - 1] = fac.solve_transpose(sys.H)
    for k in range(K - 2, -1, -1):
        z[k] = fac.solve_transpose(-(sys.F_check.T @ z[k + 1]))
    return [DiscreteFunction.from_flat(sys.mesh, sys.test, v) for v in z]


def sup_initial_error(U1: DiscreteFunction, U0: DiscreteFunction) -> float:
    """``max_t |U1(t) - U0(t)|_2`` for piecewise constant or linear functions."""
    if U1.mesh != U0.mesh or U1.family != U0.family:
        raise ValueError("mesh or family mismatch")
    t = U1.mesh.merged_nodes()
    if U1.family == "c":
        t = np.union1d(t, 0.5 * (t[1:] + t[:-1]))
    diff = (U1 - U0)(t)
    return float(np.max(np.linalg.norm(diff, axis=0)))
