"""Experiment configuration files (TOML) and the three built-in presets.

Grammar::

    name = "exp1"

    [problem]
    interval = [0.0, 3.0]
    matrix = [[10.0, -1.0], [1.0, 10.0]]
    initial = [-0.1, 0.1]

    [[problem.forcing]]          # one table per additive term
    component = 1                # 1-based
    kind = "sin"                 # const | sin | cos | poly
    amplitude = 10.0
    rate = 1.0                   # frequency, or power for poly

    [[qoi]]                      # J(U) = sum weight * u_component(time)
    time = 2.0
    component = 1
    weight = 1.0

    [run]                        # every key optional
    scheme = "euler"             # euler | cn
    splitting = "jacobi"         # jacobi | gauss-seidel | full
    refine = "goal"              # goal | uniform
    levels = 10                  # default 10 (goal) or 5 (uniform)
    fraction = 0.4               # forced to 1 for uniform refinement
    kmax = 20
    n_init = 32

    [output]
    dir = "out"

Unknown keys are rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .driver import RunConfig
from .model import Problem, QoI, Signal, Term, TERM_KINDS

__all__ = [
    "ConfigError",
    "ForcingTerm",
    "QoITerm",
    "RunSection",
    "ExperimentConfig",
    "parse_config",
    "format_config",
    "load_config",
    "PRESETS",
    "preset",
]

SCHEME_NAMES = {"euler": "explicit_euler", "cn": "crank_nicolson"}
SPLITTING_NAMES = ("jacobi", "gauss-seidel", "full")
REFINE_MODES = ("goal", "uniform")
DEFAULT_LEVELS = {"goal": 10, "uniform": 5}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ForcingTerm:
    component: int
    kind: str
    amplitude: float
    rate: float = 0.0


@dataclass(frozen=True)
class QoITerm:
    time: float
    component: int
    weight: float = 1.0


@dataclass(frozen=True)
class RunSection:
    scheme: str = "euler"
    splitting: str = "jacobi"
    refine: str = "goal"
    levels: int = 10
    fraction: float = 0.4
    kmax: int = 20
    n_init: int = 32

    def run_config(self) -> RunConfig:
        return RunConfig(
            L_max=self.levels,
            K_max=self.kmax,
            p=1.0 if self.refine == "uniform" else self.fraction,
            scheme=SCHEME_NAMES[self.scheme],
            splitting=self.splitting,
            n_init=self.n_init,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    interval: tuple[float, float]
    matrix: tuple[tuple[float, ...], ...]
    initial: tuple[float, ...]
    forcing: tuple[ForcingTerm, ...]
    qoi: tuple[QoITerm, ...]
    run: RunSection = field(default_factory=RunSection)
    out_dir: str = "out"

    @property
    def m(self) -> int:
        return len(self.initial)

    def problem(self) -> Problem:
        comps = [[] for _ in range(self.m)]
        for f in self.forcing:
            comps[f.component - 1].append(Term(f.kind, f.amplitude, f.rate))
        return Problem(np.array(self.matrix), Signal(comps), np.array(self.initial), self.interval)

    def qoi_functional(self) -> QoI:
        terms = []
        for q in self.qoi:
            w = np.zeros(self.m)
            w[q.component - 1] = q.weight
            terms.append((q.time, w))
        return QoI.from_terms(terms, self.interval)

    def with_run(self, **changes) -> "ExperimentConfig":
        return replace(self, run=_validated_run(replace(self.run, **changes), "run"))


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{where}: value must be finite")
    return value


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _table(value, where: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a table")
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r}")
    missing = sorted(required - set(value))
    if missing:
        raise ConfigError(f"{where}: missing key {missing[0]!r}")
    return value


def _vector(value, where: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a nonempty array of numbers")
    return tuple(_number(v, f"{where}[{k}]") for k, v in enumerate(value))


def _validated_run(run: RunSection, where: str) -> RunSection:
    if run.scheme not in SCHEME_NAMES:
        raise ConfigError(f"{where}.scheme: expected one of {sorted(SCHEME_NAMES)}, got {run.scheme!r}")
    if run.splitting not in SPLITTING_NAMES:
        raise ConfigError(f"{where}.splitting: expected one of {list(SPLITTING_NAMES)}, got {run.splitting!r}")
    if run.refine not in REFINE_MODES:
        raise ConfigError(f"{where}.refine: expected one of {list(REFINE_MODES)}, got {run.refine!r}")
    if run.levels < 0:
        raise ConfigError(f"{where}.levels: must be >= 0")
    if not 0.0 < run.fraction <= 1.0:
        raise ConfigError(f"{where}.fraction: must lie in (0, 1]")
    if run.kmax < 1:
        raise ConfigError(f"{where}.kmax: must be >= 1")
    if run.n_init < 2:
        raise ConfigError(f"{where}.n_init: must be >= 2")
    if run.refine == "uniform" and run.fraction != 1.0:
        run = replace(run, fraction=1.0)
    return run


def _parse_run(data: dict) -> RunSection:
    data = _table(data, "run", {"scheme", "splitting", "refine", "levels", "fraction", "kmax", "n_init"})
    kw = {}
    for key in ("scheme", "splitting", "refine"):
        if key in data:
            if not isinstance(data[key], str):
                raise ConfigError(f"run.{key}: expected a string")
            kw[key] = data[key]
    for key in ("levels", "kmax", "n_init"):
        if key in data:
            kw[key] = _integer(data[key], f"run.{key}")
    if "fraction" in data:
        kw["fraction"] = _number(data["fraction"], "run.fraction")
    refine = kw.get("refine", "goal")
    kw.setdefault("levels", DEFAULT_LEVELS.get(refine, 10))
    return _validated_run(RunSection(**kw), "run")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        where = f" at line {line}, column {col}" if line is not None else ""
        msg = getattr(exc, "msg", str(exc))
        raise ConfigError(f"syntax error{where}: {msg}") from exc
    doc = _table(doc, "document", {"name", "problem", "qoi", "run", "output"}, {"problem", "qoi"})
    name = doc.get("name", "experiment")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        raise ConfigError("name: expected a nonempty string without path separators")

    prob = _table(doc["problem"], "problem", {"interval", "matrix", "initial", "forcing"}, {"interval", "matrix", "initial"})
    interval = _vector(prob["interval"], "problem.interval")
    if len(interval) != 2 or not interval[0] < interval[1]:
        raise ConfigError("problem.interval: expected [t0, tn] with t0 < tn")
    initial = _vector(prob["initial"], "problem.initial")
    m = len(initial)
    rows = prob["matrix"]
    if not isinstance(rows, list):
        raise ConfigError("problem.matrix: expected an array of rows")
    if len(rows) != m:
        raise ConfigError(f"problem.matrix: {len(rows)} rows but problem.initial has {m} entries")
    matrix = []
    for r, row in enumerate(rows):
        vec = _vector(row, f"problem.matrix[{r}]")
        if len(vec) != m:
            raise ConfigError(f"problem.matrix[{r}]: {len(vec)} entries, expected {m}")
        matrix.append(vec)

    forcing = []
    terms = prob.get("forcing", [])
    if not isinstance(terms, list):
        raise ConfigError("problem.forcing: expected an array of tables")
    for k, t in enumerate(terms):
        where = f"problem.forcing[{k}]"
        t = _table(t, where, {"component", "kind", "amplitude", "rate"}, {"component", "kind", "amplitude"})
        comp = _integer(t["component"], f"{where}.component")
        if not 1 <= comp <= m:
            raise ConfigError(f"{where}.component: {comp} outside 1..{m}")
        if t["kind"] not in TERM_KINDS:
            raise ConfigError(f"{where}.kind: expected one of {list(TERM_KINDS)}, got {t['kind']!r}")
        rate = _number(t.get("rate", 0.0), f"{where}.rate")
        if t["kind"] == "poly" and (rate < 0 or rate != int(rate)):
            raise ConfigError(f"{where}.rate: poly power must be a nonnegative integer")
        forcing.append(ForcingTerm(comp, t["kind"], _number(t["amplitude"], f"{where}.amplitude"), rate))

    qoi = []
    if not isinstance(doc["qoi"], list) or not doc["qoi"]:
        raise ConfigError("qoi: expected a nonempty array of tables")
    for k, q in enumerate(doc["qoi"]):
        where = f"qoi[{k}]"
        q = _table(q, where, {"time", "component", "weight"}, {"time", "component"})
        tau = _number(q["time"], f"{where}.time")
        if not interval[0] <= tau <= interval[1]:
            raise ConfigError(f"{where}.time: {tau} outside [{interval[0]}, {interval[1]}]")
        comp = _integer(q["component"], f"{where}.component")
        if not 1 <= comp <= m:
            raise ConfigError(f"{where}.component: {comp} outside 1..{m}")
        qoi.append(QoITerm(tau, comp, _number(q.get("weight", 1.0), f"{where}.weight")))

    run = _parse_run(doc.get("run", {}))
    out = _table(doc.get("output", {}), "output", {"dir"})
    out_dir = out.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output.dir: expected a nonempty string")
    return ExperimentConfig(name, interval, tuple(matrix), initial, tuple(forcing), tuple(qoi), run, out_dir)


def _fmt(x: float) -> str:
    return repr(float(x))


def _str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_config(cfg: ExperimentConfig) -> str:
    """Serialize so that ``parse_config(format_config(cfg)) == cfg``."""
    vec = lambda v: "[" + ", ".join(_fmt(x) for x in v) + "]"
    lines = [f"name = {_str(cfg.name)}", "", "[problem]"]
    lines.append(f"interval = {vec(cfg.interval)}")
    lines.append("matrix = [" + ", ".join(vec(r) for r in cfg.matrix) + "]")
    lines.append(f"initial = {vec(cfg.initial)}")
    for f in cfg.forcing:
        lines += ["", "[[problem.forcing]]", f"component = {f.component}", f"kind = {_str(f.kind)}",
                  f"amplitude = {_fmt(f.amplitude)}", f"rate = {_fmt(f.rate)}"]
    for q in cfg.qoi:
        lines += ["", "[[qoi]]", f"time = {_fmt(q.time)}", f"component = {q.component}", f"weight = {_fmt(q.weight)}"]
    r = cfg.run
    lines += ["", "[run]", f"scheme = {_str(r.scheme)}", f"splitting = {_str(r.splitting)}", f"refine = {_str(r.refine)}",
              f"levels = {r.levels}", f"fraction = {_fmt(r.fraction)}", f"kmax = {r.kmax}", f"n_init = {r.n_init}"]
    lines += ["", "[output]", f"dir = {_str(cfg.out_dir)}", ""]
    return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc})") from exc
    return parse_config(text)


def _preset(name, interval, matrix, initial, forcing, qoi) -> ExperimentConfig:
    return ExperimentConfig(
        name=name,
        interval=tuple(float(x) for x in interval),
        matrix=tuple(tuple(float(x) for x in row) for row in matrix),
        initial=tuple(float(x) for x in initial),
        forcing=tuple(ForcingTerm(*f) for f in forcing),
        qoi=tuple(QoITerm(*q) for q in qoi),
        out_dir=f"out/{name}",
    )


PRESETS = {
    "exp1": _preset(
        "exp1", (0, 3), [[10, -1], [1, 10]], (-0.1, 0.1),
        [(1, "sin", 10.0, 1.0), (2, "sin", 1.0, 10.0)],
        [(2.0, 1, 1.0), (3.0, 1, 1.0), (3.0, 2, 2.0)],
    ),
    "exp2": _preset(
        "exp2", (0, 2.5), [[5, 0, 0, 0], [2, 5, 1, 0], [2, 0, 5, 1], [0, 0, -1, 5]], (-0.4, -0.2, 0.2, 0.4),
        [(1, "sin", 10.0, 1.0), (2, "sin", -10.0, 1.0), (3, "sin", 1.0, 10.0), (4, "sin", -1.0, 1.0)],
        [(0.5, 2, 1.0), (2.5, 3, 1.0)],
    ),
    "exp3": _preset(
        "exp3", (0, 4), [[5, 2], [1, 2.5]], (-0.5, 0.5),
        [(1, "sin", 10.0, 1.0), (1, "sin", 0.1, 10.0), (2, "sin", 1.0, 1.0), (2, "sin", 1.0, 10.0)],
        [(3.0, 1, 1.0), (4.0, 2, 1.0)],
    ),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
