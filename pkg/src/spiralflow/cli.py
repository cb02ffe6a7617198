"""Command line front end: ``spiralflow run | shrink-test | list-presets``.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 front tracking
or metric failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import anisotropy as an
from .bregman import SolverError
from .domain import DomainError
from .front_tracking import FrontTrackingError
from .metrics import MetricsError
from .multiphysics import LayerError
from .scenario import ScenarioError, load, preset_data, preset_names

log = logging.getLogger("spiralflow")

EXIT_CONFIG, EXIT_SOLVER, EXIT_MODEL, EXIT_IO = 2, 3, 4, 5
OUTPUT_ROOT_ENV = "SPIRALFLOW_OUTPUT_ROOT"


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "invalid scenario:\n" + "\n".join(lines)


def cmd_run(args) -> int:
    from .runner import run, write_outputs

    sc = load(args.scenario, args.set)
    root = args.out_root or os.environ.get(OUTPUT_ROOT_ENV)
    outdir = Path(args.out) if args.out else sc.output_dir(root)
    t0 = time.perf_counter()

    def on_step(u, rec, diag):
        if args.verbose and rec.step % 50 == 0:
            log.info("step %d t=%.4f outer=%d inner=%.2f", rec.step, rec.t,
                     rec.outer_count, rec.mean_inner)

    res = run(sc, on_step=on_step)
    manifest = write_outputs(res, outdir, {"wall_time_s": time.perf_counter() - t0})
    print(f"{sc.name}: mode={sc.mode} snapshots={len(manifest['snapshots'])} -> {outdir}")
    for t, D, A in res.metrics:
        print(f"  t={t:.4f}  D={D:.5f}  A={A:.5f}")
    return 0


def shrink_report(a: an.PolyhedralAnisotropy, trials: int, seed: int, mus=(1.0,),
                  n: int = 401) -> dict:
    """Compare the closed-form shrinkage with the grid oracle and the projection formula."""
    rng = np.random.default_rng(seed)
    worst_gap = -np.inf
    worst_proj = 0.0
    fails = 0
    for k in range(trials):
        mu = float(mus[k % len(mus)])
        y, z = rng.uniform(-2.0, 2.0, size=(2, 2))
        x = an.shrink(a, y, z, mu)
        _, best, slack = an.brute_force_shrink(a, y, z, mu, n)
        gap = float(an.shrink_objective(a, x, y, z, mu)) - best
        worst_gap = max(worst_gap, gap)
        fails += gap > slack
        proj = y - an.wulff_project(a.scaled(1.0 / mu), y - z)
        worst_proj = max(worst_proj, float(np.max(np.abs(proj - x))))
    return {"trials": trials, "max_objective_excess": worst_gap, "over_slack": int(fails),
            "max_projection_deviation": worst_proj}


def cmd_shrink_test(args) -> int:
    a = an.preset(args.anisotropy)
    rep = shrink_report(a, args.trials, args.seed, args.mu, args.grid)
    print(f"anisotropy={args.anisotropy} trials={rep['trials']} mu={args.mu}")
    print(f"max objective excess over grid oracle: {rep['max_objective_excess']:.3e}"
          f" (beyond slack: {rep['over_slack']})")
    print(f"max deviation from y - P_W(y - z): {rep['max_projection_deviation']:.3e}")
    return 0 if rep["over_slack"] == 0 and rep["max_projection_deviation"] < 1e-10 else 1


def cmd_list_presets(args) -> int:
    for name in preset_names():
        d = preset_data(name)
        print(f"{name:22s} {d.get('mode', ''):14s} {d.get('description', '')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spiralflow",
                                description="Crystalline spiral growth by level sets.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or preset")
    r.add_argument("scenario", help="path to a scenario JSON file or a preset name")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a field, e.g. --set domain.s=2 --set time.T=0.1")
    r.add_argument("--out", help="output directory (overrides the scenario)")
    r.add_argument("--out-root", help=f"root for relative output paths (env {OUTPUT_ROOT_ENV})")
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("shrink-test", help="check the shrinkage against a grid oracle")
    s.add_argument("--anisotropy", default="square")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mu", type=float, nargs="+", default=[1.0])
    s.add_argument("--grid", type=int, default=401)
    s.set_defaults(func=cmd_shrink_test)

    l = sub.add_parser("list-presets", help="list the shipped scenarios")
    l.set_defaults(func=cmd_list_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except ValidationError as err:
        print(_format_validation(err), file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, DomainError, an.AnisotropyError, LayerError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"solver failure: {err} {err.info}", file=sys.stderr)
        return EXIT_SOLVER
    except (FrontTrackingError, MetricsError) as err:
        print(f"model failure: {err}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
