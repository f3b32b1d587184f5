"""Command line experiment runner.

Without ``--scheme``/``--refine`` all four combinations (Euler/Crank-Nicolson,
goal-oriented/uniform) are run.  Per variant ``<name>_<scheme>_<refine>`` the
output directory receives:

* ``<variant>.csv``             level history (see :mod:`goalsplit.outputs`)
* ``<variant>_estimators.csv``  per-cell indicators of every level
* ``<variant>_mesh.txt``        final mesh, one component per line
* ``<variant>_mesh.svg``        final mesh pattern
* ``<variant>_iterations.svg``  iterations per level

plus ``<name>_convergence.svg`` with all variants and, with
``--emit-matrices``, level-0 operators as ``row col value`` triplets.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .assembly import assemble, dump_triplets
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, preset
from .driver import RunHistory, run
from .mesh import init_mesh
from .model import build_splitting, evaluate_qoi
from .outputs import (
    estimator_csv,
    history_csv,
    read_history_csv,
    read_mesh_dump,
    svg_convergence,
    svg_iterations,
    svg_mesh,
    write_text,
)
from .reference import ReferenceGateError, reference_solve
from .solver import SingularSystemError

__all__ = ["main", "build_parser", "run_experiment", "Variant"]

log = logging.getLogger("goalsplit")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


@dataclass(frozen=True)
class Variant:
    scheme: str
    refine: str

    def label(self, name: str) -> str:
        return f"{name}_{self.scheme}_{self.refine}"


ALL_VARIANTS = tuple(Variant(s, r) for s in ("euler", "cn") for r in ("goal", "uniform"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="goalsplit",
        description="Goal-oriented adaptive dynamic iteration for linear ODE systems.",
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="experiment file (TOML)")
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
    p.add_argument("--scheme", choices=("euler", "cn"), help="time discretization (default: both)")
    p.add_argument("--refine", choices=("goal", "uniform"), help="refinement mode (default: both)")
    p.add_argument("--splitting", choices=("jacobi", "gauss-seidel", "full"))
    p.add_argument("--levels", type=int, help="refinement levels L")
    p.add_argument("--fraction", type=float, help="refined fraction p for goal-oriented runs")
    p.add_argument("--kmax", type=int, help="maximal iterations per level")
    p.add_argument("--n-init", type=int, dest="n_init", help="initial equidistant breakpoints per component")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--emit-matrices", action="store_true", help="write level-0 operators as triplets")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _variant_config(cfg: ExperimentConfig, variant: Variant, levels_given: bool) -> ExperimentConfig:
    changes = {"scheme": variant.scheme, "refine": variant.refine}
    if not levels_given and variant.refine != cfg.run.refine:
        changes["levels"] = {"goal": 10, "uniform": 5}[variant.refine]
    if variant.refine == "goal" and cfg.run.refine == "uniform":
        changes["fraction"] = 0.4
    return cfg.with_run(**changes)


def run_experiment(cfg: ExperimentConfig, variants: Sequence[Variant], out: Path, emit_matrices: bool = False,
                   levels_given: bool = True) -> dict[str, RunHistory]:
    problem, qoi = cfg.problem(), cfg.qoi_functional()
    reference = reference_solve(problem, qoi)
    J_ref = evaluate_qoi(qoi, reference)
    log.info("reference J = %.17g (self-check %.3e)", J_ref, reference.self_check)
    histories = {}
    series = []
    for v in variants:
        vcfg = _variant_config(cfg, v, levels_given)
        label = v.label(cfg.name)
        history = run(problem, qoi, vcfg.run.run_config())
        histories[label] = history
        csv_text = history_csv(history, J_ref)
        write_text(out / f"{label}.csv", csv_text)
        write_text(out / f"{label}_estimators.csv", estimator_csv(history))
        mesh_text = history.levels[-1].mesh.dump()
        write_text(out / f"{label}_mesh.txt", mesh_text)
        cols = read_history_csv(csv_text)
        series.append((label, cols))
        write_text(out / f"{label}_mesh.svg", svg_mesh(read_mesh_dump(mesh_text), f"{label} final mesh"))
        write_text(out / f"{label}_iterations.svg", svg_iterations([(label, cols)]))
        if emit_matrices:
            rc = vcfg.run.run_config()
            spl = build_splitting(problem.B, rc.splitting)
            system = assemble(problem, spl, qoi, init_mesh(problem, qoi, rc.n_init), rc.scheme)
            write_text(out / f"{label}_F_hat.txt", dump_triplets(system.F_hat))
            write_text(out / f"{label}_F_check.txt", dump_triplets(system.F_check))
            write_text(out / f"{label}_G.txt", "".join(f"{x!r}\n" for x in system.G.tolist()))
            write_text(out / f"{label}_H.txt", "".join(f"{x!r}\n" for x in system.H.tolist()))
        last = history.levels[-1]
        log.info("%s: %d levels, final N = %d, K = %d, |J error| = %.3e", label, len(history.levels), last.N, last.K,
                 abs(J_ref - last.J_discrete))
    write_text(out / f"{cfg.name}_convergence.svg", svg_convergence(series))
    return histories


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else preset(args.preset)
        overrides = {
            k: getattr(args, k)
            for k in ("splitting", "levels", "fraction", "kmax", "n_init")
            if getattr(args, k) is not None
        }
        if overrides:
            cfg = cfg.with_run(**overrides)
        variants = [
            v for v in ALL_VARIANTS
            if (args.scheme is None or v.scheme == args.scheme) and (args.refine is None or v.refine == args.refine)
        ]
        out = args.out if args.out is not None else Path(cfg.out_dir)
        run_experiment(cfg, variants, out, args.emit_matrices, levels_given=args.levels is not None)
    except ConfigError as exc:
        print(f"goalsplit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"goalsplit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SingularSystemError, FloatingPointError, ReferenceGateError, np.linalg.LinAlgError) as exc:
        print(f"goalsplit: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"goalsplit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"goalsplit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
