"""Mixed anisotropies, interlace motion and the asymmetric hexagon family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anisotropy import AnisotropyError, PolyhedralAnisotropy, hexagon_asym
from .bregman import (SolverError, SolverParams, StepDiagnostics, frozen_psi,
                      minimize_step, rescale_bcf, solve_step)
from .domain import Grid, PhaseField

TWO_PI = 2.0 * math.pi


class LayerError(ValueError):
    pass


def lambda_cutoff(sigma, eps: float, m0: int):
    """Periodic cutoff: 1 near 0, linear ramps of width eps at +-pi, period 2 pi m0."""
    if not 0.0 < eps < math.pi:
        raise LayerError("eps must lie in (0, pi)")
    if m0 < 1:
        raise LayerError("m0 must be a positive integer")
    s = np.asarray(sigma, dtype=float)
    if m0 == 1:
        out = np.ones_like(s)
    else:
        period = TWO_PI * m0
        w = np.mod(s + m0 * math.pi, period) - m0 * math.pi
        out = np.clip((math.pi - np.abs(w)) / eps + 0.5, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class LayerSpec:
    """m0 sheets per period; sheet l moves by V = v_l (1 - rho_l kappa_l).

    ``anisotropies`` are the raw densities gamma_l; the energy uses
    (v_l rho_l) gamma_l and the eikonal factor uses gamma_l itself.
    """

    m0: int
    anisotropies: list
    v_inf: list
    rho_c: list
    eps: float = 0.1 * math.pi
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise LayerError("m0 must be a positive integer")
        self.m0 = int(self.m0)
        for name in ("anisotropies", "v_inf", "rho_c"):
            if len(getattr(self, name)) != self.m0:
                raise LayerError(f"{name} needs one entry per layer (m0={self.m0})")
        for k, a in enumerate(self.anisotropies):
            if not isinstance(a, PolyhedralAnisotropy):
                raise LayerError(f"anisotropies[{k}] is not a PolyhedralAnisotropy")
        if not 0.0 < self.eps < math.pi:
            raise LayerError("eps must lie in (0, pi)")

    @classmethod
    def uniform(cls, m0: int, a: PolyhedralAnisotropy, v_inf: float, rho_c: float,
                eps: float = 0.1 * math.pi) -> "LayerSpec":
        return cls(m0, [a] * m0, [v_inf] * m0, [rho_c] * m0, eps)

    def layer(self, l: int):
        """(f_l, rescaled gamma_l, raw gamma_l) for the core step."""
        if l not in self._cache:
            f, a = rescale_bcf(self.v_inf[l], self.rho_c[l], self.anisotropies[l])
            self._cache[l] = (f, a, self.anisotropies[l])
        return self._cache[l]

    def check_grid(self, grid: Grid):
        for k, m in enumerate(grid.centers.windings):
            if m % self.m0 != 0:
                raise LayerError(
                    f"winding of center {k} ({m}) is not a multiple of m0={self.m0}")


def mixed_step(u_n: PhaseField, a_eik: PolyhedralAnisotropy, a_curv: PolyhedralAnisotropy,
               f, params: SolverParams, use_numba=None):
    """Core step with psi built from a_eik and the shrinkage from a_curv."""
    return minimize_step(u_n, a_curv, f, params, a_eik=a_eik, use_numba=use_numba)


def _merge(diags) -> StepDiagnostics:
    out = StepDiagnostics(0, [], 0.0, 0)
    for d in diags:
        out.outer_count = max(out.outer_count, d.outer_count)
        out.inner_counts += d.inner_counts
        out.final_F += d.final_F
        out.sor_sweeps += d.sor_sweeps
        out.F_start += d.F_start
        out.F_end += d.F_end
        out.frozen_count += d.frozen_count
    return out


def layer_weights(u_n: PhaseField, layers: LayerSpec) -> np.ndarray:
    """lambda(u_n - theta - 2 pi l) for every layer, shape (m0, n, n).

    The principal theta differs from any continuous branch by multiples of
    2 pi m_j, which the 2 pi m0 periodic cutoff does not see.
    """
    grid = u_n.grid
    sigma = np.where(grid.mask, u_n.values - grid.theta_hat, 0.0)
    return np.stack([lambda_cutoff(sigma - TWO_PI * l, layers.eps, layers.m0)
                     for l in range(layers.m0)])


def interlace_step(u_n: PhaseField, layers: LayerSpec, params: SolverParams, use_numba=None):
    """u_{n+1} = sum_l lambda(u_n - theta - 2 pi l) w*_l."""
    grid = u_n.grid
    layers.check_grid(grid)
    lam = layer_weights(u_n, layers)
    out = np.zeros((grid.n, grid.n))
    diags = []
    for l in range(layers.m0):
        f, a, a_raw = layers.layer(l)
        psi = frozen_psi(a_raw, u_n, params, use_numba)
        psi = np.where(grid.mask, np.maximum(psi, params.alpha), 0.0)
        try:
            w, diag = solve_step(u_n, a, f, params, psi, use_numba)
        except SolverError as err:
            err.info["layer"] = l
            raise SolverError(f"layer {l}: {err}", **err.info) from err
        out += lam[l] * np.where(grid.mask, w, 0.0)
        diags.append(diag)
    return PhaseField(out, grid, u_n.t + params.h), _merge(diags)


def illusory_anisotropy(a_ratio: float, layer: int = 0) -> PolyhedralAnisotropy:
    """Layer l of the asymmetric hexagon: Frank corners q_{j+l} on the directions N_j."""
    if not 0.0 < a_ratio <= 1.0:
        raise AnisotropyError("a_ratio must lie in (0, 1)")
    return hexagon_asym(a_ratio, int(layer) % 6)


def illusory_layers(a_ratio: float, v_inf: float, rho_c: float, m0: int = 6,
                    eps: float = 0.1 * math.pi) -> LayerSpec:
    return LayerSpec(m0, [illusory_anisotropy(a_ratio, l) for l in range(m0)],
                     [v_inf] * m0, [rho_c] * m0, eps)


def triangle_interlace_layers(v_inf: float = 3.0, rho_c: float = 0.02,
                              eps: float = 0.1 * math.pi) -> LayerSpec:
    """Two triangle layers with unit normals at 2 pi j/3 + pi/6 + pi l/2."""
    an = []
    for l in range(2):
        t = 2.0 * math.pi * np.arange(3) / 3 + math.pi / 6 + math.pi * l / 2
        an.append(PolyhedralAnisotropy(np.column_stack([np.cos(t), np.sin(t)])))
    return LayerSpec(2, an, [v_inf] * 2, [rho_c] * 2, eps)
