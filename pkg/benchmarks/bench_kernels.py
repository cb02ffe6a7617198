"""Numba kernels against their numpy fallbacks on the standard grid (dx = 0.02).

Run with ``python benchmarks/bench_kernels.py [--repeat N] [--s S]``. Each
kernel is called once to warm up the JIT cache, then timed; the two backends
are also checked for agreement.
"""

import argparse
import time

import numpy as np

from spiralflow import anisotropy as an
from spiralflow.bregman import (LinearSystem, SolverParams, SolverState, _solve_system, d_step,
                                energy_F, rescale_bcf, solve_step)
from spiralflow.discretization import psi_field
from spiralflow.domain import Grid, PhaseField


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def setup(s):
    grid = Grid.standard(s, [(0.0, 0.0, 1)])
    rng = np.random.default_rng(0)
    r = np.hypot(grid.X, grid.Y)
    u = PhaseField(4.0 * r + 0.1 * rng.normal(size=r.shape), grid)
    f, a = rescale_bcf(1.0, 0.01, an.triangle())
    params = SolverParams.standard(grid.dx, 1.0, 0.01)
    psi = psi_field(a.reflected(), u)
    return grid, u, f, a, params, psi


def cases(s):
    grid, u, f, a, params, psi = setup(s)
    rng = np.random.default_rng(1)
    y = rng.uniform(-2, 2, (grid.n * grid.n, 2))
    z = rng.uniform(-1, 1, (grid.n * grid.n, 2))
    state = SolverState.start(u, psi, f)
    system = LinearSystem(grid, psi, params)

    def shrink(nb):
        return an.shrink_many(a, y, z, params.mu, use_numba=nb)

    def psi_k(nb):
        return psi_field(a, u, True, use_numba=nb)

    def dstep(nb):
        d_step(state, a, params, use_numba=nb)
        return state.d.copy()

    def energy(nb):
        return energy_F(state, a, params, use_numba=nb)

    def sor(nb):
        st = SolverState.start(u, psi, f)
        _solve_system(st, system, params.with_(sor_ordering="lex"), use_numba=nb)
        return st.w

    def step(nb):
        return solve_step(u, a, f, params, psi, use_numba=nb)[0]

    return {"shrink_many": shrink, "psi_field": psi_k, "d_step": dstep, "energy_F": energy,
            "sor_solve": sor, "solve_step": step}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--s", type=float, default=1.0, help="grid refinement (dx = 0.02/s)")
    ap.add_argument("--only", nargs="*", help="subset of kernel names")
    args = ap.parse_args(argv)
    table = cases(args.s)
    names = args.only or list(table)
    print(f"{'kernel':12s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s}  agree")
    for name in names:
        fn = table[name]
        t_nb = best_of(lambda: fn(True), args.repeat)
        t_np = best_of(lambda: fn(False), args.repeat)
        a, b = np.asarray(fn(True)), np.asarray(fn(False))
        ok = np.allclose(np.nan_to_num(a), np.nan_to_num(b), atol=1e-6)
        print(f"{name:12s} {t_nb:11.4f} {t_np:11.4f} {t_np / t_nb:8.1f}  {ok}")


if __name__ == "__main__":
    main()
