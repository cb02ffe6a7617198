"""Mode pipelines behind the CLI: level set, front tracking, comparison, layers.

Orientation convention. The level-set equation evaluates gamma at
grad(u - theta) = -|grad(u - theta)| n, so with a density gamma its
contours form facets along the point-reflected Wulff shape -W. The scenarios
(and the front-tracking model) describe facets along the Wulff normals N_j
moving with normal velocity along N_j, so every level-set pipeline here runs
on the reflected density p -> gamma(-p). For centrally symmetric densities
(square) this changes nothing.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .anisotropy import PolyhedralAnisotropy
from .bregman import Trajectory, evolve, rescale_bcf
from .domain import Grid, PhaseField
from .front_tracking import FacetChain, FTTrajectory, evolve_ft, reconstruct_polygon
from .metrics import (MetricsError, area_A, distance_D, extract_contour,
                      height_fronttracking, height_levelset)
from .multiphysics import LayerSpec, interlace_step, mixed_step
from .scenario import Scenario

ALIGN_TOL = 0.05


def levelset_density(a: PolyhedralAnisotropy) -> PolyhedralAnisotropy:
    """Density handed to the level-set solver for facets along the Wulff normals of a."""
    return a.reflected()


def levelset_layers(layers: LayerSpec) -> LayerSpec:
    return LayerSpec(layers.m0, [levelset_density(a) for a in layers.anisotropies],
                     list(layers.v_inf), list(layers.rho_c), layers.eps)


@dataclass
class RunResult:
    scenario: Scenario
    grid: Grid
    levelset: Trajectory | None = None
    fronttracking: FTTrajectory | None = None
    metrics: list = field(default_factory=list)  # (t, D, A)


def run_levelset(sc: Scenario, grid: Grid | None = None, check_energy: bool = False,
                 on_step=None, use_numba=None) -> Trajectory:
    grid = sc.grid() if grid is None else grid
    u0 = sc.initial_phase(grid)
    params = sc.params(grid.dx)
    times = sc.snapshot_times()
    if sc.mode == "interlace":
        layers = levelset_layers(sc.layer_spec())
        layers.check_grid(grid)

        def step(u, n):
            return interlace_step(u, layers, params, use_numba)

        return evolve(u0, None, None, params, sc.time.T, times, step_fn=step,
                      use_numba=use_numba, on_step=on_step)
    f, a, raw = sc.motion_terms()
    if sc.mode == "mixed":
        a_eik = levelset_density(raw)
        _, a_curv = rescale_bcf(sc.motion.v_inf, sc.motion.rho_c,
                                levelset_density(sc.anisotropy_curv.build()))

        def step(u, n):
            return mixed_step(u, a_eik, a_curv, f, params, use_numba)

        return evolve(u0, a_curv, f, params, sc.time.T, times, step_fn=step,
                      use_numba=use_numba, on_step=on_step)
    return evolve(u0, levelset_density(a), f, params, sc.time.T, times,
                  a_eik=levelset_density(raw), check_energy=check_energy,
                  use_numba=use_numba, on_step=on_step)


def initial_chain(sc: Scenario) -> FacetChain:
    f, a, _ = sc.motion_terms()
    c = sc.centers[0]
    return FacetChain.spiral(a, f, sc.initial.value, center=(c.x, c.y))


def run_fronttracking(sc: Scenario, times=None) -> FTTrajectory:
    times = sc.snapshot_times() if times is None else times
    return evolve_ft(initial_chain(sc), sc.time.T, sc.front_tracking.dt, times)


def compare_metrics(levelset_snaps, ft_snaps, grid: Grid) -> list:
    """(t, D, A) rows for paired snapshots; refuses a misaligned start."""
    rows = []
    for u, c in zip(levelset_snaps, ft_snaps):
        cs = extract_contour(u)
        D = distance_D([reconstruct_polygon(c, (grid.xmin, grid.xmax))], cs, grid)
        A = area_A(height_fronttracking(c, grid), height_levelset(u))
        rows.append((float(c.t), D, A))
    if rows and rows[0][0] == 0.0 and not rows[0][2] < ALIGN_TOL:
        raise MetricsError(f"initial data not aligned: A(0) = {rows[0][2]:.3g}")
    return rows


def run(sc: Scenario, on_step=None, use_numba=None) -> RunResult:
    grid = sc.grid()
    res = RunResult(sc, grid)
    if sc.mode in ("levelset", "mixed", "interlace", "compare"):
        res.levelset = run_levelset(sc, grid, on_step=on_step, use_numba=use_numba)
    if sc.mode in ("fronttracking", "compare"):
        # compare at the times the level-set snapshots actually landed on
        times = [u.t for u in res.levelset.snapshots] if res.levelset else None
        res.fronttracking = run_fronttracking(sc, times)
    if sc.mode == "compare":
        res.metrics = compare_metrics(res.levelset.snapshots, res.fronttracking.snapshots, grid)
    return res


# -- output ---------------------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_polylines(path: Path, polylines, closed, t: float):
    """One row per vertex: polyline id, closed flag, vertex index, x, y, t."""
    rows = []
    for pid, (p, c) in enumerate(zip(polylines, closed)):
        for vid, (x, y) in enumerate(np.asarray(p, float)):
            rows.append((pid, int(bool(c)), vid, repr(float(x)), repr(float(y)), repr(float(t))))
    _write_csv(path, ("polyline", "closed", "vertex", "x", "y", "t"), rows)


def write_outputs(res: RunResult, outdir: Path, extra: dict | None = None) -> dict:
    outdir = Path(outdir)
    snapdir = outdir / "snapshots"
    snapdir.mkdir(parents=True, exist_ok=True)
    files = []
    if res.levelset is not None:
        for u in res.levelset.snapshots:
            cs = extract_contour(u)
            p = snapdir / f"levelset_t{u.t:.6f}.csv"
            write_polylines(p, cs.polylines, cs.closed, u.t)
            files.append(p.name)
        rows = [(r.step, repr(r.t), r.outer_count, repr(r.mean_inner), repr(r.final_F),
                 r.sor_total_sweeps, int(r.descent_ok), int(r.energy_drop_ok))
                for r in res.levelset.records]
        _write_csv(outdir / "diagnostics.csv",
                   ("step", "t", "outer_count", "mean_inner", "final_F", "sor_sweeps",
                    "descent_ok", "energy_drop_ok"), rows)
    if res.fronttracking is not None:
        box = (res.grid.xmin, res.grid.xmax)
        for c in res.fronttracking.snapshots:
            p = snapdir / f"fronttracking_t{c.t:.6f}.csv"
            write_polylines(p, [reconstruct_polygon(c, box)], [False], c.t)
            files.append(p.name)
    if res.metrics:
        _write_csv(outdir / "metrics.csv", ("t", "D", "A"),
                   [(repr(t), repr(D), repr(A)) for t, D, A in res.metrics])
    manifest = {
        "scenario": res.scenario.to_dict(),
        "grid": {"dx": res.grid.dx, "n": res.grid.n, "r": res.grid.r},
        "versions": {"spiralflow": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "backend": backend_name(),
        "snapshots": files,
    }
    if res.fronttracking is not None:
        manifest["generation_times"] = [float(t) for t in res.fronttracking.generation_times]
    if extra:
        manifest.update(extra)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, allow_nan=False, default=_json_default)
    return manifest


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return None
    raise TypeError(f"not serializable: {type(o)}")
