"""Goal-oriented error estimators.

* ``splitting_bound``: a-priori bound on the goal error left by ``K`` dynamic
  iterations, from the one-sided Lipschitz constant of the implicit part and
  the norm of the lagged part.
* ``local_dwr_estimates``: residual of every iterate pair ``(U_k, U_{k-1})``
  weighted by an approximation of the error of the matching adjoint ``Z_k``,
  localized to the cells of every component.

Per cell ``(i, j)`` and iteration ``k`` the signed indicator is

    eta = int_cell rho_i e_i dt - [u_i]_{t_j} e_i(t_j-) + d_ij z_ij,

where ``rho_i = y_i - u_i' - (B_hat U_k)_i - (B_check U_{k-1})_i`` is the strong
residual, ``[u_i]_{t_j}`` the jump of a piecewise-constant iterate, ``e_i`` the
adjoint error proxy and ``d_ij`` the difference between the exact forcing
integral over the cell and the quadrature used to assemble it.  The last term
vanishes when the forcing is integrated exactly; with it, the signed sum over
all cells and iterations reproduces the goal error exactly when ``e`` is the
true adjoint error.  The refinement indicator is ``mu_ij = sum_k |eta_kij|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammainc

from .assembly import AssembledSystem
from .basis import DiscreteFunction, composite_rule
from .model import Problem, QoI, Splitting

__all__ = [
    "splitting_bound",
    "truncated_exponential_factor",
    "AdjointErrorProxy",
    "reconstruct_adjoint_error",
    "quadratic_minus_linear",
    "EstimatorReport",
    "DWREstimator",
    "local_dwr_estimates",
]

ESTIMATOR_DEGREE = 11


def truncated_exponential_factor(L1: float, t: float, K: int) -> float:
    """``1 - exp(L1 t) sum_{k<K} (-L1 t)^k / k!`` for ``L1 < 0``, in ``[0, 1]``.

    Equal to the regularized lower incomplete gamma function ``P(K, -L1 t)``,
    which avoids the cancellation of the direct formula.
    """
    x = -L1 * t
    if x <= 0.0:
        return 0.0
    return float(min(1.0, max(0.0, gammainc(K, x))))


def splitting_bound(L1: float, L2: float, sup_E0: float, K: int, qoi: QoI) -> float:
    """Bound on ``|J(U) - J(U_K)|`` after ``K`` iterations.

    Returns ``inf`` when the implicit part is not dissipative (``L1 >= 0``)
    and the lagged part is nonzero; the bound is then unusable.
    """
    if K < 1:
        raise ValueError("K must be positive")
    if sup_E0 < 0 or not math.isfinite(sup_E0):
        raise ValueError(f"sup_E0 must be finite and nonnegative, got {sup_E0}")
    if L2 == 0.0:
        return 0.0
    if L1 >= 0.0:
        return math.inf
    t0 = qoi.interval[0]
    total = 0.0
    for tau, w in zip(qoi.times, qoi.weights):
        norm = math.hypot(*w)  # no underflow for tiny weights
        if norm:
            total += norm * truncated_exponential_factor(L1, tau - t0, K)
    return (-L2 / L1) ** K * sup_E0 * total


def quadratic_minus_linear(x: np.ndarray, v: np.ndarray, t) -> np.ndarray:
    """Quadratic through three nodal values minus their piecewise linear interpolant."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.size < 3:
        return np.zeros(np.shape(t))
    q = _poly_reconstruction(x, v, np.atleast_1d(np.asarray(t, dtype=float)), 2)
    lin = np.interp(t, x, v)
    return (q - lin).reshape(np.shape(t))


def _poly_reconstruction(x: np.ndarray, v: np.ndarray, t: np.ndarray, degree: int) -> np.ndarray:
    """Local Lagrange interpolation of ``degree`` through consecutive points.

    The patch is the ``degree + 1`` consecutive points best centered on the
    interval containing ``t``; outside ``[x0, xM]`` the edge patch extrapolates.
    """
    M = x.size
    if M == 1:
        return np.full(t.shape, v[0])
    p = min(degree, M - 1)
    left = np.clip(np.searchsorted(x, t, side="right") - 1, 0, M - 2)
    # patch start: interval [left, left+1] plus (p - 1) neighbours, centered
    start = np.clip(left - (p - 1) // 2, 0, M - p - 1)
    if p == 2:
        # prefer the side whose extra point is closer
        mid = 0.5 * (x[left] + x[left + 1])
        lo = np.clip(left - 1, 0, M - 3)
        hi = np.clip(left, 0, M - 3)
        use_lo = np.abs(x[lo] - mid) <= np.abs(x[np.minimum(hi + 2, M - 1)] - mid)
        start = np.where(use_lo, lo, hi)
    out = np.zeros(t.shape)
    for a in range(p + 1):
        xa = x[start + a]
        basis = np.ones(t.shape)
        for b in range(p + 1):
            if b != a:
                xb = x[start + b]
                basis *= (t - xb) / (xa - xb)
        out += basis * v[start + a]
    return out


class AdjointErrorProxy:
    """``e_i(t) = Zrec_i(t) - Z_i(t)`` for a piecewise constant discrete adjoint ``Z``.

    ``recon(i, t, side)`` returns the higher-order reconstruction of component
    ``i`` (or any accurate adjoint approximation, e.g. a reference solution).
    """

    def __init__(self, dual: DiscreteFunction, recon: Callable):
        self.dual = dual
        self.recon = recon

    def __call__(self, i: int, t, side: str = "left") -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.recon(i, t, side) - self.dual.component(i, t, side)


def _representative_points(dual: DiscreteFunction, scheme: str, i: int) -> np.ndarray:
    t = dual.mesh.nodes[i]
    if scheme == "explicit_euler":
        return t.copy()
    # Crank-Nicolson adjoint coefficients approximate cell-midpoint values
    return np.concatenate([[t[0]], 0.5 * (t[1:] + t[:-1])])


def reconstruct_adjoint_error(dual: DiscreteFunction, scheme: str, jump_times: Sequence[float] = (),
                              degree: int = 2) -> AdjointErrorProxy:
    """Local polynomial reconstruction of a piecewise constant adjoint.

    Coefficient ``j`` is attached to a representative point of its cell (the
    right end point for the Euler adjoint, the midpoint for Crank-Nicolson,
    ``t0`` for ``j = 0``) and interpolated by degree-``degree`` polynomials
    through consecutive points.  Patches never straddle a time in
    ``jump_times``, where the exact adjoint is discontinuous.  Components with
    a single cell get a zero proxy.
    """
    mesh = dual.mesh
    pieces = []
    for i in range(mesh.m):
        t = mesh.nodes[i]
        x = _representative_points(dual, scheme, i)
        v = dual.coeffs[i]
        cuts = [int(np.flatnonzero(t == tau)[0]) for tau in jump_times if t[0] < tau < t[-1] and np.any(t == tau)]
        bounds = [0, *sorted(c + 1 for c in cuts), t.size]
        pieces.append([(x[a:b], v[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])

    seg_starts = []
    for i in range(mesh.m):
        t = mesh.nodes[i]
        starts = []
        idx = 0
        for xs, _ in pieces[i][:-1]:
            idx += xs.size
            starts.append(t[idx - 1])
        seg_starts.append(np.array(starts))

    def recon(i, s, side="left"):
        s = np.asarray(s, dtype=float)
        if mesh.n[i] < 2:
            # too few adjoint values to reconstruct anything: zero proxy
            return dual.component(i, s, side)
        flat = np.atleast_1d(s).ravel()
        # segment k covers (cut_{k-1}, cut_k]; at a cut the left limit belongs to the left segment
        seg = np.searchsorted(seg_starts[i], flat, side="left" if side == "left" else "right")
        out = np.empty(flat.shape)
        for k in np.unique(seg):
            mask = seg == k
            xs, vs = pieces[i][k]
            out[mask] = _poly_reconstruction(xs, vs, flat[mask], degree)
        return out.reshape(s.shape)

    return AdjointErrorProxy(dual, recon)


@dataclass
class EstimatorReport:
    """Estimator values on one level.

    ``eta[k-1][i][j-1]`` is the signed indicator of iteration ``k`` on cell
    ``(i, j)``; ``mu_cells[i][j-1] = sum_k |eta|``.
    """

    nu: float
    mu_total: float
    mu_cells: tuple[np.ndarray, ...]
    eta: list[tuple[np.ndarray, ...]] = field(default_factory=list)
    K: int = 0
    level: int = 0

    @property
    def mu_local(self) -> dict[tuple[int, int], float]:
        return {
            (i, j + 1): float(v)
            for i, arr in enumerate(self.mu_cells)
            for j, v in enumerate(arr)
        }

    @property
    def signed_total(self) -> float:
        return float(sum(arr.sum() for eta_k in self.eta for arr in eta_k))


class DWREstimator:
    """Quadrature data of one level, factored into residual and adjoint parts.

    Residual values at the quadrature nodes depend only on the primal pair
    ``(U_k, U_{k-1})`` and adjoint-error values only on ``Z_k``; each is
    evaluated once and the cell integrals are formed by weighted products.
    """

    def __init__(self, problem: Problem, splitting: Splitting, system: AssembledSystem, degree: int = ESTIMATOR_DEGREE):
        self.problem = problem
        self.splitting = splitting
        self.system = system
        mesh = system.mesh
        self.mesh = mesh
        self.trial = system.trial
        self.nodes, self.weights, self.cell, self.defect = [], [], [], []
        B = problem.B
        off = mesh.offsets
        for i in range(mesh.m):
            coupled = [k for k in range(mesh.m) if B[i, k] != 0.0 or k == i]
            breaks = mesh.merged_nodes(coupled)
            if system.scheme == "crank_nicolson":
                t = mesh.nodes[i]
                breaks = np.union1d(breaks, 0.5 * (t[1:] + t[:-1]))
            x, w = composite_rule(breaks, degree)
            cell = np.searchsorted(mesh.nodes[i], x, side="left")
            y = problem.Y.component(i, x)
            exact = np.bincount(cell - 1, weights=w * y, minlength=mesh.n[i])
            self.nodes.append(x)
            self.weights.append(w)
            self.cell.append(cell - 1)
            self.defect.append(exact - system.G[off[i] + 1:off[i + 1]])
        self._forcing = [problem.Y.component(i, x) for i, x in enumerate(self.nodes)]

    def residual(self, U: DiscreteFunction, U_prev: DiscreteFunction):
        """Residual node values and jumps of the iterate pair, per component."""
        mesh = self.mesh
        Bh, Bc = self.splitting.B_hat, self.splitting.B_check
        out = []
        for i in range(mesh.m):
            x = self.nodes[i]
            r = self._forcing[i].copy()
            for k in range(mesh.m):
                if Bh[i, k] != 0.0:
                    r -= Bh[i, k] * U.component(k, x)
                if Bc[i, k] != 0.0:
                    r -= Bc[i, k] * U_prev.component(k, x)
            u = U.coeffs[i]
            du = np.diff(u)
            if self.trial == "c":
                r -= (du / np.diff(mesh.nodes[i]))[self.cell[i]]
                jumps = np.zeros_like(du)
            else:
                jumps = du
            out.append((r, jumps))
        return out

    def adjoint_weights(self, proxy: AdjointErrorProxy):
        """Proxy values at the quadrature nodes and left limits at cell ends, plus dual coefficients."""
        out = []
        for i in range(self.mesh.m):
            e = proxy(i, self.nodes[i], "left")
            e_end = proxy(i, self.mesh.nodes[i][1:], "left")
            out.append((e, e_end, proxy.dual.coeffs[i][1:]))
        return out

    def cell_indicators(self, residual, weights) -> tuple[np.ndarray, ...]:
        out = []
        for i in range(self.mesh.m):
            r, jumps = residual[i]
            e, e_end, z = weights[i]
            integral = np.bincount(self.cell[i], weights=self.weights[i] * r * e, minlength=self.mesh.n[i])
            out.append(integral - jumps * e_end + self.defect[i] * z)
        return tuple(out)


def local_dwr_estimates(primal: Sequence[DiscreteFunction], proxies: Sequence[AdjointErrorProxy],
                        estimator: DWREstimator) -> EstimatorReport:
    """Indicators for iterates ``primal[0..K]`` against adjoint proxies ``proxies[0..K-1]``.

    ``nu`` is left at zero; the driver fills it in.
    """
    K = len(primal) - 1
    if K < 1 or len(proxies) != K:
        raise ValueError("need K >= 1 iterates and one adjoint proxy per iterate")
    eta = []
    for k in range(1, K + 1):
        res = estimator.residual(primal[k], primal[k - 1])
        eta.append(estimator.cell_indicators(res, estimator.adjoint_weights(proxies[k - 1])))
    mu = tuple(sum(np.abs(e[i]) for e in eta) for i in range(estimator.mesh.m))
    total = float(sum(arr.sum() for arr in mu))
    return EstimatorReport(nu=0.0, mu_total=total, mu_cells=mu, eta=eta, K=K, level=estimator.mesh.level)
