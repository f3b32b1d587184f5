"""Adaptive refinement with dynamic iteration.

Per level: assemble and factor once, sweep ``U_k`` and extend the adjoint
stack, accumulate the DWR indicators, and stop iterating as soon as the
discretization estimate ``mu`` exceeds the splitting bound ``nu``.  Then the
fraction ``p`` of cells with the largest indicators is bisected and the last
iterate becomes the initial waveform of the next level.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble, canonical_scheme
from .basis import DiscreteFunction, transfer_waveform
from .estimators import (
    DWREstimator,
    EstimatorReport,
    reconstruct_adjoint_error,
    splitting_bound,
)
from .mesh import MultiMesh, bisect_cells, init_mesh, select_cells
from .model import Problem, QoI, Splitting, build_splitting, evaluate_qoi
from .solver import IterationState, LevelFactorization, dual_solve, primal_step, sup_initial_error

__all__ = ["RunConfig", "LevelRecord", "RunHistory", "stopping_check", "run", "default_proxy_degree"]


def default_proxy_degree(scheme: str) -> int:
    # Euler adjoint values sit at nodes and are first order: linear reconstruction;
    # Crank-Nicolson midpoint values are second order: quadratic reconstruction
    return 1 if canonical_scheme(scheme) == "explicit_euler" else 2


@dataclass(frozen=True)
class RunConfig:
    L_max: int = 10
    K_max: int = 20
    p: float = 0.4
    scheme: str = "explicit_euler"
    splitting: str = "jacobi"
    n_init: int = 32
    mask: tuple | None = None
    proxy_degree: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", canonical_scheme(self.scheme))
        if int(self.L_max) != self.L_max or self.L_max < 0:
            raise ValueError(f"L_max must be a nonnegative integer, got {self.L_max}")
        if int(self.K_max) != self.K_max or self.K_max < 1:
            raise ValueError(f"K_max must be a positive integer, got {self.K_max}")
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if self.proxy_degree not in (None, 1, 2):
            raise ValueError("proxy_degree must be 1, 2 or None")

    @property
    def degree(self) -> int:
        return self.proxy_degree or default_proxy_degree(self.scheme)


@dataclass(frozen=True, eq=False)
class LevelRecord:
    level: int
    mesh: MultiMesh
    K: int
    nu: float
    mu_total: float
    report: EstimatorReport
    J_discrete: float
    sup_E0: float
    nu_by_k: tuple[float, ...]
    mu_by_k: tuple[float, ...]
    final_iterate: DiscreteFunction = field(repr=False)
    initial_waveform: DiscreteFunction = field(repr=False)
    wall_time: float = 0.0

    @property
    def N(self) -> int:
        return self.mesh.N

    @property
    def mu_local(self) -> dict:
        return self.report.mu_local


@dataclass(frozen=True, eq=False)
class RunHistory:
    problem: Problem
    qoi: QoI
    config: RunConfig
    splitting: Splitting
    levels: tuple[LevelRecord, ...]

    @property
    def N(self) -> list[int]:
        return [r.N for r in self.levels]

    @property
    def K(self) -> list[int]:
        return [r.K for r in self.levels]


def stopping_check(mu_total: float, nu: float) -> bool:
    """``True`` (stop iterating) iff ``mu_total > nu``; an infinite ``nu`` never stops."""
    if math.isinf(nu):
        return False
    return mu_total > nu


class _LevelEstimator:
    """Caches residual factors per iterate pair and proxy factors per adjoint."""

    def __init__(self, est: DWREstimator, scheme: str, jump_times, degree: int):
        self.est = est
        self.scheme = scheme
        self.jump_times = jump_times
        self.degree = degree
        self._residuals = []
        self._weights = {}

    def add_pair(self, U, U_prev):
        self._residuals.append(self.est.residual(U, U_prev))

    def _weights_for(self, dual):
        key = id(dual)
        if key not in self._weights:
            proxy = reconstruct_adjoint_error(dual, self.scheme, self.jump_times, self.degree)
            self._weights[key] = (dual, self.est.adjoint_weights(proxy))
        return self._weights[key][1]

    def report(self, duals, level: int) -> EstimatorReport:
        eta = [
            self.est.cell_indicators(res, self._weights_for(dual))
            for res, dual in zip(self._residuals, duals)
        ]
        mu = tuple(sum(np.abs(e[i]) for e in eta) for i in range(self.est.mesh.m))
        total = float(sum(arr.sum() for arr in mu))
        return EstimatorReport(nu=0.0, mu_total=total, mu_cells=mu, eta=eta, K=len(eta), level=level)


def _check_finite(report: EstimatorReport, level: int, k: int):
    for i, arr in enumerate(report.mu_cells):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise FloatingPointError(
                f"non-finite estimator on level {level}, iteration {k}: component {i}, cell {int(bad[0]) + 1}"
            )


def run(problem: Problem, qoi: QoI, config: RunConfig) -> RunHistory:
    splitting = build_splitting(
        problem.B,
        "custom" if config.mask is not None else config.splitting,
        mask=config.mask,
    )
    mesh = init_mesh(problem, qoi, config.n_init)
    records = []
    U_init = None
    for level in range(config.L_max + 1):
        start = time.perf_counter()
        system = assemble(problem, splitting, qoi, mesh, config.scheme)
        if U_init is None:
            U_init = DiscreteFunction.constant(mesh, system.trial, problem.U0)
        fac = LevelFactorization(system)
        cache = _LevelEstimator(DWREstimator(problem, splitting, system), system.scheme, qoi.times, config.degree)

        U1 = primal_step(fac, U_init)
        state = dual_solve(fac, IterationState(primal=(U_init, U1)))
        sup_E0 = sup_initial_error(U1, U_init)
        cache.add_pair(U1, U_init)
        nus, mus = [], []
        k = 1
        while True:
            report = cache.report(state.duals, level)
            _check_finite(report, level, k)
            nu = splitting_bound(splitting.L1, splitting.L2, sup_E0, k, qoi)
            nus.append(nu)
            mus.append(report.mu_total)
            if stopping_check(report.mu_total, nu) or k == config.K_max:
                break
            k += 1
            U_next = primal_step(fac, state.primal[-1])
            cache.add_pair(U_next, state.primal[-1])
            state = dual_solve(fac, IterationState(primal=state.primal + (U_next,), duals=state.duals))

        report.nu = nu
        U_final = state.primal[-1]
        records.append(
            LevelRecord(
                level=level,
                mesh=mesh,
                K=k,
                nu=nu,
                mu_total=report.mu_total,
                report=report,
                J_discrete=evaluate_qoi(qoi, U_final),
                sup_E0=sup_E0,
                nu_by_k=tuple(nus),
                mu_by_k=tuple(mus),
                final_iterate=U_final,
                initial_waveform=U_init,
                wall_time=time.perf_counter() - start,
            )
        )
        if level == config.L_max:
            break
        mesh = bisect_cells(mesh, select_cells(report.mu_local, config.p))
        U_init = transfer_waveform(U_final, mesh)
    return RunHistory(problem, qoi, config, splitting, tuple(records))
