"""CSV and SVG outputs of a run.

Floats are written with 17 significant digits so that files are exact and
reproducible.  Every plot is generated from CSV (or mesh dump) contents alone,
so regenerating a plot from saved files gives identical bytes.

History CSV columns: ``level, N, K_l, nu, mu_total, J_discrete, J_error``
(``J_error`` is ``|J(U_ref) - J_discrete|``, empty without a reference).

Estimator CSV columns: ``level, K, nu, mu_total, component, cell, cell_left,
cell_right, mu_local`` with 1-based component indices.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .driver import RunHistory
from .model import evaluate_qoi

__all__ = [
    "HISTORY_COLUMNS",
    "ESTIMATOR_COLUMNS",
    "fmt_float",
    "history_csv",
    "estimator_csv",
    "read_history_csv",
    "read_mesh_dump",
    "svg_convergence",
    "svg_mesh",
    "svg_iterations",
]

HISTORY_COLUMNS = ("level", "N", "K_l", "nu", "mu_total", "J_discrete", "J_error")
ESTIMATOR_COLUMNS = ("level", "K", "nu", "mu_total", "component", "cell", "cell_left", "cell_right", "mu_local")


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def history_csv(history: RunHistory | None, J_reference: float | None = None) -> str:
    rows = []
    for r in history.levels if history is not None else ():
        err = "" if J_reference is None else fmt_float(abs(J_reference - r.J_discrete))
        rows.append([r.level, r.N, r.K, fmt_float(r.nu), fmt_float(r.mu_total), fmt_float(r.J_discrete), err])
    return _csv_text(HISTORY_COLUMNS, rows)


def estimator_csv(history: RunHistory | None) -> str:
    rows = []
    for r in history.levels if history is not None else ():
        head = [r.level, r.K, fmt_float(r.nu), fmt_float(r.mu_total)]
        for i, mu in enumerate(r.report.mu_cells):
            t = r.mesh.nodes[i]
            for j, v in enumerate(mu):
                rows.append(head + [i + 1, j + 1, fmt_float(t[j]), fmt_float(t[j + 1]), fmt_float(v)])
    return _csv_text(ESTIMATOR_COLUMNS, rows)


def read_history_csv(text: str) -> dict[str, list]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != HISTORY_COLUMNS:
        raise ValueError(f"unexpected history CSV header {header}")
    cols = {h: [] for h in header}
    for row in reader:
        for h, v in zip(header, row):
            if h in ("level", "N", "K_l"):
                cols[h].append(int(v))
            else:
                cols[h].append(float(v) if v != "" else math.nan)
    return cols


def read_mesh_dump(text: str) -> list[np.ndarray]:
    """Inverse of :meth:`MultiMesh.dump` (one component per line, after an optional ``#`` header)."""
    comps = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        values = line.split(":", 1)[-1].split()
        comps.append(np.array([float(v) for v in values]))
    return comps


# ---------------------------------------------------------------- SVG helpers

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 160, 30, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(x: float) -> str:
    return f"{x:.2f}"


def _svg(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<title>{_escape(title)}</title>', '<rect width="100%" height="100%" fill="white"/>',
                      *body, "</svg>", ""])


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _frame(xlabel: str, ylabel: str) -> list[str]:
    x0, y0, x1, y1 = _ML, _H - _MB, _W - _MR, _MT
    return [
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_H - 12}" text-anchor="middle">{_escape(xlabel)}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{_escape(ylabel)}</text>',
    ]


class _Axis:
    def __init__(self, lo: float, hi: float, a: float, b: float, log: bool):
        self.log = log
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
            lo, hi = math.floor(lo), math.ceil(hi)
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.a, self.b = lo, hi, a, b

    def __call__(self, v: float) -> float:
        if self.log:
            v = math.log10(v)
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)

    def ticks(self):
        if self.log:
            return [(10.0**e, f"1e{e}") for e in range(int(self.lo), int(self.hi) + 1)]
        step = (self.hi - self.lo) / 5
        return [(self.lo + k * step, f"{self.lo + k * step:g}") for k in range(6)]


def _ticks(ax: _Axis, horizontal: bool) -> list[str]:
    out = []
    for v, label in ax.ticks():
        p = ax(v)
        if horizontal:
            out.append(f'<line x1="{_num(p)}" y1="{_H - _MB}" x2="{_num(p)}" y2="{_H - _MB + 4}" stroke="black"/>')
            out.append(f'<text x="{_num(p)}" y="{_H - _MB + 16}" text-anchor="middle">{label}</text>')
        else:
            out.append(f'<line x1="{_ML - 4}" y1="{_num(p)}" x2="{_ML}" y2="{_num(p)}" stroke="black"/>')
            out.append(f'<text x="{_ML - 6}" y="{_num(p + 4)}" text-anchor="end">{label}</text>')
    return out


def _polyline(pts, color: str, dashed: bool) -> list[str]:
    dash = ' stroke-dasharray="6 4"' if dashed else ""
    path = " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)
    out = [f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>']
    out += [f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2.5" fill="{color}"/>' for x, y in pts]
    return out


def svg_convergence(series: Sequence[tuple[str, dict]]) -> str:
    """Log-log error (solid) and estimator ``mu + nu`` (dashed) against ``N``.

    ``series`` holds ``(label, columns)`` pairs as returned by
    :func:`read_history_csv`; non-positive values are skipped.
    """
    xs, ys = [], []
    curves = []
    for label, cols in series:
        est = [mu + nu for mu, nu in zip(cols["mu_total"], cols["nu"])]
        for name, vals, dashed in ((f"{label} error", cols["J_error"], False), (f"{label} estimator", est, True)):
            pts = [(n, v) for n, v in zip(cols["N"], vals) if math.isfinite(v) and v > 0]
            curves.append((name, pts, dashed))
            xs += [p[0] for p in pts]
            ys += [p[1] for p in pts]
    body = _frame("total time steps N", "|J error|, estimator")
    if xs:
        ax = _Axis(min(xs), max(xs), _ML, _W - _MR, True)
        ay = _Axis(min(ys), max(ys), _H - _MB, _MT, True)
        body += _ticks(ax, True) + _ticks(ay, False)
        for c, (name, pts, dashed) in enumerate(curves):
            color = _COLORS[(c // 2) % len(_COLORS)]
            if pts:
                body += _polyline([(ax(x), ay(y)) for x, y in pts], color, dashed)
            ly = _MT + 14 * c + 8
            dash = ' stroke-dasharray="6 4"' if dashed else ""
            body.append(f'<line x1="{_W - _MR + 8}" y1="{ly}" x2="{_W - _MR + 28}" y2="{ly}" stroke="{color}"{dash}/>')
            body.append(f'<text x="{_W - _MR + 32}" y="{ly + 4}">{_escape(name)}</text>')
    return _svg(body, "convergence")


def svg_mesh(nodes: Sequence[np.ndarray], title: str = "mesh") -> str:
    """One row of breakpoint ticks per component."""
    body = _frame("t", "component")
    if nodes:
        t0 = min(float(t[0]) for t in nodes)
        tn = max(float(t[-1]) for t in nodes)
        ax = _Axis(t0, tn, _ML, _W - _MR, False)
        body += _ticks(ax, True)
        m = len(nodes)
        band = (_H - _MB - _MT) / m
        for i, t in enumerate(nodes):
            yc = _MT + band * (i + 0.5)
            body.append(f'<text x="{_ML - 6}" y="{_num(yc + 4)}" text-anchor="end">{i + 1}</text>')
            half = 0.35 * band
            d = " ".join(f"M{_num(ax(float(x)))} {_num(yc - half)}V{_num(yc + half)}" for x in t)
            body.append(f'<path d="{d}" stroke="{_COLORS[i % len(_COLORS)]}" stroke-width="0.6"/>')
    return _svg(body, title)


def svg_iterations(series: Sequence[tuple[str, dict]]) -> str:
    """Iterations ``K_l`` against refinement level."""
    body = _frame("refinement level", "iterations K")
    levels = [l for _, cols in series for l in cols["level"]]
    Ks = [k for _, cols in series for k in cols["K_l"]]
    if levels:
        ax = _Axis(min(levels), max(levels), _ML, _W - _MR, False)
        ay = _Axis(0, max(Ks), _H - _MB, _MT, False)
        body += _ticks(ax, True) + _ticks(ay, False)
        for c, (label, cols) in enumerate(series):
            color = _COLORS[c % len(_COLORS)]
            body += _polyline([(ax(l), ay(k)) for l, k in zip(cols["level"], cols["K_l"])], color, False)
            ly = _MT + 14 * c + 8
            body.append(f'<line x1="{_W - _MR + 8}" y1="{ly}" x2="{_W - _MR + 28}" y2="{ly}" stroke="{color}"/>')
            body.append(f'<text x="{_W - _MR + 32}" y="{ly + 4}">{_escape(label)}</text>')
    return _svg(body, "iterations per level")


def reference_value(history: RunHistory, reference) -> float:
    return evaluate_qoi(history.qoi, reference)


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
