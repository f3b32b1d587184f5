"""Independent oracles: fine-step RK4 reference solutions, the exact stacked
adjoint, and a monolithic solve of the stacked iteration system.

Nothing in here is used by the adaptive method itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble
from .basis import DiscreteFunction
from .mesh import MultiMesh
from .model import Problem, QoI, Splitting, evaluate_qoi

__all__ = [
    "ReferenceGateError",
    "ReferenceSolution",
    "rk4_linear",
    "reference_solve",
    "adjoint_reference",
    "stacked_solve",
    "true_goal_error",
]

DEFAULT_STEPS_EXPONENT = 16
GATE_TOL = 1e-9


class ReferenceGateError(RuntimeError):
    pass


def _rk4_maps(A: np.ndarray, h: float):
    """Matrices with ``x+ = P x + Q0 f(t) + Qm f(t + h/2) + Q1 f(t + h)`` for one RK4 step."""
    d = A.shape[0]
    I = np.eye(d)
    hA = h * A
    P = I + hA @ (I + hA @ (I / 2 + hA @ (I / 6 + hA / 24)))
    # each stage is affine in the forcing samples; propagate them as matrices
    k1 = (A, I, 0 * I, 0 * I)
    k2 = tuple(
        base + (h / 2) * (A @ s) for base, s in zip((A, 0 * I, I, 0 * I), k1)
    )
    k3 = tuple(base + (h / 2) * (A @ s) for base, s in zip((A, 0 * I, I, 0 * I), k2))
    k4 = tuple(base + h * (A @ s) for base, s in zip((A, 0 * I, 0 * I, I), k3))
    Q0, Qm, Q1 = (
        (h / 6) * (k1[c] + 2 * k2[c] + 2 * k3[c] + k4[c]) for c in (1, 2, 3)
    )
    return P, Q0, Qm, Q1


def rk4_linear(A, forcing, t_grid, x0):
    """Classical RK4 for ``x' = A x + forcing(t)`` on a uniform grid.

    ``forcing`` maps an array of times to an array of shape ``(d, len(t))``
    (or is ``None``).  Returns states of shape ``(len(t_grid), d)``.
    """
    A = np.asarray(A, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    h = t[1] - t[0]
    P, Q0, Qm, Q1 = _rk4_maps(A, h)
    x = np.empty((t.size, A.shape[0]))
    x[0] = x0
    if forcing is None:
        c = np.zeros((t.size - 1, A.shape[0]))
    else:
        f0 = forcing(t[:-1]).T
        fm = forcing(t[:-1] + h / 2).T
        f1 = forcing(t[1:]).T
        c = f0 @ Q0.T + fm @ Qm.T + f1 @ Q1.T
    Pt = P.T
    for n in range(t.size - 1):
        x[n + 1] = x[n] @ Pt + c[n]
    return x


@dataclass(frozen=True)
class _Segment:
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        # cubic Hermite interpolation between fine grid samples
        k = np.clip(np.searchsorted(self.t, s, side="right") - 1, 0, self.t.size - 2)
        h = self.t[k + 1] - self.t[k]
        th = ((s - self.t[k]) / h)[:, None]
        h00 = 2 * th**3 - 3 * th**2 + 1
        h10 = th**3 - 2 * th**2 + th
        h01 = -2 * th**3 + 3 * th**2
        h11 = th**3 - th**2
        return (
            h00 * self.x[k] + h10 * h[:, None] * self.dx[k]
            + h01 * self.x[k + 1] + h11 * h[:, None] * self.dx[k + 1]
        )


class ReferenceSolution:
    """Piecewise fine-grid solution with cubic Hermite interpolation.

    Segments join at ``breaks``; at a break the ``side`` argument selects the
    left or right segment (relevant for adjoints that jump there).
    """

    def __init__(self, segments, breaks, steps: int, method: str, self_check: float = float("nan")):
        self.segments = tuple(segments)
        self.breaks = np.asarray(breaks, dtype=float)
        self.steps = steps
        self.method = method
        self.self_check = self_check

    @property
    def dim(self) -> int:
        return self.segments[0].x.shape[1]

    def __call__(self, t, side: str = "right"):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        seg = np.searchsorted(self.breaks, t_arr, side="right" if side == "right" else "left") - 1
        seg = np.clip(seg, 0, len(self.segments) - 1)
        out = np.empty((t_arr.size, self.dim))
        for s in np.unique(seg):
            mask = seg == s
            out[mask] = self.segments[s].evaluate(t_arr[mask])
        out = out.T
        return out[:, 0] if np.ndim(t) == 0 else out

    def limit(self, t: float, side: str):
        return self(t, side=side)

    qoi_side = "right"


def _breaks(interval, times) -> np.ndarray:
    t0, tn = interval
    inner = [t for t in times if t0 < t < tn]
    return np.array([t0, *inner, tn])


def _segment_grid(a: float, b: float, h_max: float) -> np.ndarray:
    n = max(1, math.ceil((b - a) / h_max - 1e-9))
    return np.linspace(a, b, n + 1)


def _forward(problem: Problem, breaks: np.ndarray, h_max: float) -> list[_Segment]:
    A = -problem.B
    segs = []
    x0 = problem.U0
    for a, b in zip(breaks[:-1], breaks[1:]):
        t = _segment_grid(a, b, h_max)
        x = rk4_linear(A, problem.Y, t, x0)
        dx = x @ A.T + problem.Y(t).T
        segs.append(_Segment(t, x, dx))
        x0 = x[-1]
    return segs


def reference_solve(problem: Problem, qoi: QoI | None = None, steps_exponent: int = DEFAULT_STEPS_EXPONENT,
                    check: bool = True) -> ReferenceSolution:
    """High-accuracy primal solution with step ``(tn - t0) / 2**(steps_exponent + 1)``.

    The solution is also computed with twice the step; if the goal value (or
    the end state without ``qoi``) differs by ``GATE_TOL`` or more the
    reference is rejected.
    """
    times = qoi.times if qoi is not None else ()
    breaks = _breaks(problem.interval, times)
    span = problem.tn - problem.t0
    h_coarse = span / 2**steps_exponent
    with np.errstate(over="ignore", invalid="ignore"):
        fine_segs = _forward(problem, breaks, h_coarse / 2)
        coarse_segs = _forward(problem, breaks, h_coarse) if check else None
    if not all(np.all(np.isfinite(s.x)) for s in fine_segs):
        raise ReferenceGateError("reference integration diverged; the step is too large for this problem")
    fine = ReferenceSolution(fine_segs, breaks, 2 ** (steps_exponent + 1), "rk4")
    if not check:
        return fine
    coarse = ReferenceSolution(coarse_segs, breaks, 2**steps_exponent, "rk4")
    if qoi is not None:
        diff = abs(evaluate_qoi(qoi, fine) - evaluate_qoi(qoi, coarse))
    else:
        diff = float(np.max(np.abs(fine(problem.tn) - coarse(problem.tn))))
    if not diff < GATE_TOL:
        raise ReferenceGateError(f"reference self-convergence gate failed: change {diff:.3e} >= {GATE_TOL:g}")
    return ReferenceSolution(fine.segments, breaks, fine.steps, "rk4", diff)


def adjoint_reference(problem: Problem, splitting: Splitting, qoi: QoI, K: int,
                      steps_exponent: int = DEFAULT_STEPS_EXPONENT) -> list[ReferenceSolution]:
    """Exact adjoints ``Z_1..Z_K`` of the stacked iteration, integrated backward.

    ``-Z_k' + B_hat^T Z_k + B_check^T Z_{k+1} = 0``, ``Z_{K+1} = 0``; ``Z_K``
    jumps by ``-J_r`` across each ``tau_r`` (left limit minus right limit is
    ``J_r``) and ends at ``Z_K(tn) = J_R``.
    """
    m = problem.m
    d = K * m
    # ds = -dt; in reversed time the block system reads Z' = -(blocks) Z
    A = np.zeros((d, d))
    for k in range(K):
        A[k * m:(k + 1) * m, k * m:(k + 1) * m] = -splitting.B_hat.T
        if k + 1 < K:
            A[k * m:(k + 1) * m, (k + 1) * m:(k + 2) * m] = -splitting.B_check.T
    breaks = _breaks(problem.interval, qoi.times)
    h_max = (problem.tn - problem.t0) / 2**steps_exponent
    jumps = {float(t): w for t, w in zip(qoi.times, qoi.weights)}
    tn = problem.tn
    state = np.zeros(d)
    state[(K - 1) * m:] = jumps.get(tn, 0.0)
    segs = []
    for a, b in zip(breaks[::-1][:-1], breaks[::-1][1:]):
        s = _segment_grid(tn - a, tn - b, h_max)
        x = rk4_linear(A, None, s, state)
        dx = -(x @ A.T)
        segs.append(_Segment(tn - s[::-1], x[::-1].copy(), dx[::-1].copy()))
        state = x[-1].copy()
        if b in jumps and b > problem.t0:
            state[(K - 1) * m:] += jumps[b]
    segs = segs[::-1]
    refs = []
    for k in range(K):
        sl = slice(k * m, (k + 1) * m)
        parts = [_Segment(sg.t, sg.x[:, sl].copy(), sg.dx[:, sl].copy()) for sg in segs]
        refs.append(ReferenceSolution(parts, breaks, 2**steps_exponent, "rk4-adjoint"))
    return refs


def stacked_solve(problem: Problem, splitting: Splitting, qoi: QoI, mesh: MultiMesh, scheme: str, K: int,
                  U0: DiscreteFunction) -> list[DiscreteFunction]:
    """Solve all ``K`` iterations as one block lower-bidiagonal system."""
    if K < 1:
        raise ValueError("K must be positive")
    sys = assemble(problem, splitting, qoi, mesh, scheme)
    blocks = [[None] * K for _ in range(K)]
    for k in range(K):
        blocks[k][k] = sys.F_hat
        if k > 0:
            blocks[k][k - 1] = sys.F_check
    A = sp.bmat(blocks, format="csc")
    rhs = np.tile(sys.G, K)
    rhs[: sys.size] -= sys.F_check @ U0.flat
    x = spla.spsolve(A, rhs)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("stacked system is singular")
    return [DiscreteFunction.from_flat(mesh, sys.trial, x[k * sys.size:(k + 1) * sys.size]) for k in range(K)]


def true_goal_error(reference: ReferenceSolution, qoi: QoI, U_discrete) -> float:
    return abs(evaluate_qoi(qoi, reference) - evaluate_qoi(qoi, U_discrete))
