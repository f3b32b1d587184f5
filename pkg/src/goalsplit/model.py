"""Linear initial value problems, point-value goal functionals and splittings.

The continuous problem is

    U'(t) + B U(t) = Y(t),  t in [t0, tn],   U(t0) = U_t0,

with a goal functional ``J(U) = sum_r J_r . U(tau_r)``.  A splitting mask ``S``
partitions ``B`` into an implicit part ``B_hat = S * B`` and a lagged part
``B_check = B - B_hat`` used by the dynamic iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Term",
    "Signal",
    "Problem",
    "QoI",
    "Splitting",
    "build_splitting",
    "lipschitz_constants",
    "evaluate_signal",
    "evaluate_qoi",
]

TERM_KINDS = ("const", "sin", "cos", "poly")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Term:
    """One additive forcing term.

    ``const``: amplitude; ``sin``/``cos``: amplitude * sin(rate * t);
    ``poly``: amplitude * t**rate (``rate`` is a nonnegative integer power).
    """

    kind: str
    amplitude: float
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}, expected one of {TERM_KINDS}")
        if not (math.isfinite(self.amplitude) and math.isfinite(self.rate)):
            raise ValueError("term parameters must be finite")
        if self.kind == "poly" and (self.rate < 0 or self.rate != int(self.rate)):
            raise ValueError("poly power must be a nonnegative integer")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.full_like(t, self.amplitude)
        if self.kind == "sin":
            return self.amplitude * np.sin(self.rate * t)
        if self.kind == "cos":
            return self.amplitude * np.cos(self.rate * t)
        return self.amplitude * t ** int(self.rate)


@dataclass(frozen=True)
class Signal:
    """Vector forcing given as a term list per component."""

    components: tuple[tuple[Term, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "components", tuple(tuple(c) for c in self.components)
        )

    @property
    def dim(self) -> int:
        return len(self.components)

    def __call__(self, t):
        """Evaluate at scalar ``t`` (shape ``(m,)``) or array ``t`` (shape ``(m, len(t))``)."""
        t_arr = np.asarray(t, dtype=float)
        out = np.zeros((self.dim,) + t_arr.shape)
        for i, terms in enumerate(self.components):
            for term in terms:
                out[i] += term(t_arr)
        return out

    def component(self, i: int, t):
        t_arr = np.asarray(t, dtype=float)
        out = np.zeros(t_arr.shape)
        for term in self.components[i]:
            out += term(t_arr)
        return out


def evaluate_signal(Y: Signal, t):
    return Y(t)


@dataclass(frozen=True)
class Problem:
    B: np.ndarray
    Y: Signal
    U0: np.ndarray
    interval: tuple[float, float]

    def __post_init__(self):
        B = _frozen(self.B)
        U0 = _frozen(self.U0)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {B.shape}")
        m = B.shape[0]
        if m < 1:
            raise ValueError("dimension must be positive")
        if U0.shape != (m,):
            raise ValueError(f"initial vector has shape {U0.shape}, expected ({m},)")
        if self.Y.dim != m:
            raise ValueError(f"forcing has {self.Y.dim} components, expected {m}")
        t0, tn = (float(x) for x in self.interval)
        if not (math.isfinite(t0) and math.isfinite(tn)) or not tn > t0:
            raise ValueError(f"invalid interval ({t0}, {tn})")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(U0))):
            raise ValueError("problem data must be finite")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "U0", U0)
        object.__setattr__(self, "interval", (t0, tn))

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def t0(self) -> float:
        return self.interval[0]

    @property
    def tn(self) -> float:
        return self.interval[1]


@dataclass(frozen=True)
class QoI:
    """Discrete goal functional ``sum_r weights[r] . U(times[r])``.

    The last time is always ``tn``; a zero weight is appended if the caller's
    last point lies before it.
    """

    times: tuple[float, ...]
    weights: np.ndarray
    interval: tuple[float, float]

    def __post_init__(self):
        t0, tn = (float(x) for x in self.interval)
        times = [float(x) for x in self.times]
        W = np.atleast_2d(np.array(self.weights, dtype=float))
        if len(times) == 0:
            raise ValueError("a quantity of interest needs at least one time point")
        if W.shape[0] != len(times):
            raise ValueError("one weight vector per time point is required")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("QoI times must be strictly increasing")
        for tau in times:
            if tau < t0 or tau > tn:
                raise ValueError(f"QoI time {tau} outside [{t0}, {tn}]")
        if not np.all(np.isfinite(W)):
            raise ValueError("QoI weights must be finite")
        if times[-1] < tn:
            times.append(tn)
            W = np.vstack([W, np.zeros(W.shape[1])])
        object.__setattr__(self, "times", tuple(times))
        object.__setattr__(self, "weights", _frozen(W))
        object.__setattr__(self, "interval", (t0, tn))

    @classmethod
    def from_terms(cls, terms: Sequence[tuple[float, Sequence[float]]], interval):
        """Build from ``(time, weight_vector)`` pairs; equal times are merged."""
        merged: dict[float, np.ndarray] = {}
        for tau, w in terms:
            w = np.asarray(w, dtype=float)
            merged[float(tau)] = merged.get(float(tau), 0.0) + w
        times = sorted(merged)
        return cls(tuple(times), np.array([merged[t] for t in times]), interval)

    @property
    def m(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Splitting:
    mask: np.ndarray
    B_hat: np.ndarray
    B_check: np.ndarray
    L1: float
    L2: float
    scheme: str = field(default="custom")

    @property
    def contraction_ratio(self) -> float:
        """``-L2/L1`` for dissipative splittings, ``inf`` otherwise."""
        if self.L2 == 0.0:
            return 0.0
        if self.L1 >= 0.0:
            return math.inf
        return -self.L2 / self.L1


SPLITTING_SCHEMES = ("jacobi", "gauss_seidel", "full", "custom")


def build_splitting(B, scheme: str = "jacobi", mask=None) -> Splitting:
    """Split ``B`` by a 0/1 mask.

    ``jacobi`` keeps the diagonal implicit, ``gauss_seidel`` the lower triangle
    (diagonal included), ``full`` everything; ``custom`` takes ``mask``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {B.shape}")
    m = B.shape[0]
    scheme = scheme.replace("-", "_")
    if scheme == "jacobi":
        S = np.eye(m)
    elif scheme == "gauss_seidel":
        S = np.tril(np.ones((m, m)))
    elif scheme == "full":
        S = np.ones((m, m))
    elif scheme == "custom":
        if mask is None:
            raise ValueError("custom splitting requires a mask")
        S = np.asarray(mask, dtype=float)
        if S.shape != B.shape:
            raise ValueError(f"mask shape {S.shape} does not match matrix shape {B.shape}")
        if not np.all((S == 0.0) | (S == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
    else:
        raise ValueError(f"unknown splitting scheme {scheme!r}")
    B_hat = S * B
    B_check = B - B_hat
    L1, L2 = lipschitz_constants(B_hat, B_check)
    return Splitting(_frozen(S), _frozen(B_hat), _frozen(B_check), L1, L2, scheme)


def lipschitz_constants(B_hat, B_check) -> tuple[float, float]:
    """One-sided Lipschitz constant of ``-B_hat`` and spectral norm of ``B_check``.

    ``L1`` is the logarithmic 2-norm of the right-hand side Jacobian ``-B_hat``,
    i.e. the largest eigenvalue of ``-(B_hat + B_hat^T)/2``; it is negative for
    dissipative implicit parts.
    """
    B_hat = np.asarray(B_hat, dtype=float)
    B_check = np.asarray(B_check, dtype=float)
    if B_hat.shape != B_check.shape or B_hat.ndim != 2 or B_hat.shape[0] != B_hat.shape[1]:
        raise ValueError("both matrices must be square and of equal shape")
    if not (np.all(np.isfinite(B_hat)) and np.all(np.isfinite(B_check))):
        raise ValueError("matrix entries must be finite")
    sym = -(B_hat + B_hat.T) / 2.0
    L1 = float(np.linalg.eigvalsh(sym)[-1])
    L2 = float(np.linalg.norm(B_check, 2)) if np.any(B_check) else 0.0
    return L1, L2


def evaluate_qoi(qoi: QoI, U, side: str | None = None) -> float:
    """Evaluate ``sum_r J_r . U(tau_r)``.

    ``U`` is either a callable returning an ``m``-vector or a discrete function
    exposing ``limit(t, side)``.  For discrete functions the default side is the
    one under which the value at a breakpoint is that breakpoint's coefficient
    (``U.qoi_side``); ``side`` overrides it.
    """
    t0, tn = qoi.interval
    total = 0.0
    for tau, w in zip(qoi.times, qoi.weights):
        if tau < t0 or tau > tn:
            raise ValueError(f"QoI time {tau} outside [{t0}, {tn}]")
        if not np.any(w):
            continue
        if hasattr(U, "limit"):
            value = U.limit(tau, side or U.qoi_side)
        else:
            value = U(tau)
        total += float(np.dot(w, np.asarray(value, dtype=float)))
    return total

