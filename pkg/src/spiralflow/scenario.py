"""Versioned JSON scenarios: validation, overrides and object construction."""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import anisotropy as an
from .bregman import SolverParams, rescale_bcf
from .domain import Grid, PhaseField, constant_phase, rays_phase
from .multiphysics import LayerSpec, illusory_layers

SCHEMA = "spiralflow.scenario/1"
MODES = ("levelset", "fronttracking", "compare", "interlace", "mixed")


class ScenarioError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AnisotropySpec(_Strict):
    """Exactly one of preset, normals, pairs (r, angle), dual_vertices or angles."""

    preset: Optional[str] = None
    normals: Optional[list[list[float]]] = None
    pairs: Optional[list[list[float]]] = None
    dual_vertices: Optional[list[list[float]]] = None
    angles: Optional[list[float]] = None
    scale: float = 1.0
    rotate: float = 0.0

    @field_validator("normals", "pairs", "dual_vertices")
    @classmethod
    def _polygon(cls, v):
        if v is None:
            return v
        if len(v) < 3:
            raise ValueError(f"need at least 3 vectors, got {len(v)}")
        if any(len(p) != 2 for p in v):
            raise ValueError("each entry must be a 2-vector")
        return v

    @field_validator("angles")
    @classmethod
    def _angles(cls, v):
        if v is not None and len(v) < 3:
            raise ValueError(f"need at least 3 angles, got {len(v)}")
        return v

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("preset", "normals", "pairs", "dual_vertices", "angles")
                 if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of preset, normals, pairs, dual_vertices, angles")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        self.build()
        return self

    def build(self) -> an.PolyhedralAnisotropy:
        if self.preset is not None:
            a = an.preset(self.preset)
        elif self.normals is not None:
            a = an.PolyhedralAnisotropy(self.normals)
        elif self.pairs is not None:
            a = an.from_polar_pairs(self.pairs)
        elif self.dual_vertices is not None:
            a = an.from_dual_vertices(self.dual_vertices)
        else:
            t = np.asarray(self.angles, dtype=float)
            a = an.PolyhedralAnisotropy(np.column_stack([np.cos(t), np.sin(t)]))
        if self.rotate:
            a = a.rotated(self.rotate)
        return a.scaled(self.scale) if self.scale != 1.0 else a


class Domain(_Strict):
    box: tuple[float, float] = (-1.5, 1.5)
    s: Optional[float] = 1.0
    dx: Optional[float] = None
    r_multiple: float = 2.0

    @model_validator(mode="after")
    def _spacing(self):
        if self.dx is None and (self.s is None or not self.s > 0):
            raise ValueError("give a positive refinement s or a spacing dx")
        if self.dx is not None and not self.dx > 0:
            raise ValueError("dx must be positive")
        return self

    @property
    def spacing(self) -> float:
        return self.dx if self.dx is not None else 0.02 / self.s


class Center(_Strict):
    x: float
    y: float
    m: int

    @field_validator("m")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("winding number must be nonzero")
        return v


class Initial(_Strict):
    kind: Literal["constant", "rays"] = "constant"
    value: float = 0.0
    angles: Optional[list[float]] = None


class Motion(_Strict):
    v_inf: float = 1.0
    rho_c: float = 0.01

    @model_validator(mode="after")
    def _positive(self):
        if not (self.v_inf > 0 and self.rho_c > 0):
            raise ValueError("v_inf and rho_c must be positive")
        return self


class Layers(_Strict):
    m0: int
    anisotropies: Optional[list[AnisotropySpec]] = None
    a_ratio: Optional[float] = None
    cutoff_eps: float = 0.1 * math.pi

    @model_validator(mode="after")
    def _source(self):
        if (self.anisotropies is None) == (self.a_ratio is None):
            raise ValueError("give either anisotropies or a_ratio")
        if self.anisotropies is not None and len(self.anisotropies) != self.m0:
            raise ValueError("anisotropies needs one entry per layer")
        if self.a_ratio is not None and not 0.0 < self.a_ratio <= 1.0:
            raise ValueError("a_ratio must lie in (0, 1)")
        if not 0.0 < self.cutoff_eps < math.pi:
            raise ValueError("cutoff_eps must lie in (0, pi)")
        return self


class Solver(_Strict):
    h_factor: float = 0.04
    mu_factor: float = 1.0
    eps_in_factor: float = 1e-2
    eps_out_factor: float = 1e-5
    alpha: float = 1e-8
    A_ceiling: Optional[float] = None
    sor_omega: float = 1.5
    sor_tol: float = 1e-8
    sor_max_iter: int = 10_000
    sor_ordering: Literal["lex", "redblack"] = "lex"
    max_outer: int = 500
    max_inner: int = 50
    demote_cross: bool = True


class Time(_Strict):
    T: float
    snapshots: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if any(t < 0 or t > self.T + 1e-12 for t in self.snapshots):
            raise ValueError("snapshot times must lie in [0, T]")
        return self


class FrontTracking(_Strict):
    dt: float = 1e-6


class Scenario(_Strict):
    schema_: Literal["spiralflow.scenario/1"] = Field(SCHEMA, alias="schema")
    name: str
    description: str = ""
    mode: Literal["levelset", "fronttracking", "compare", "interlace", "mixed"]
    domain: Domain = Field(default_factory=Domain)
    centers: list[Center]
    initial: Initial = Field(default_factory=Initial)
    anisotropy: Optional[AnisotropySpec] = None
    anisotropy_curv: Optional[AnisotropySpec] = None
    motion: Motion = Field(default_factory=Motion)
    layers: Optional[Layers] = None
    solver: Solver = Field(default_factory=Solver)
    time: Time
    front_tracking: FrontTracking = Field(default_factory=FrontTracking)
    output: str = "runs/{name}"
    seed: int = 0

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def _mode_fields(self):
        if not self.centers:
            raise ValueError("at least one center is required")
        if self.mode in ("levelset", "fronttracking", "compare", "mixed") and self.anisotropy is None:
            raise ValueError(f"mode {self.mode!r} needs an anisotropy")
        if self.mode == "mixed" and self.anisotropy_curv is None:
            raise ValueError("mode 'mixed' needs anisotropy_curv")
        if self.mode == "interlace" and self.layers is None:
            raise ValueError("mode 'interlace' needs layers")
        if self.mode in ("fronttracking", "compare"):
            if len(self.centers) != 1 or self.centers[0].m != 1:
                raise ValueError("front tracking needs a single center with m = 1")
            if self.initial.kind != "constant":
                raise ValueError("front tracking needs constant initial data")
        if self.initial.kind == "rays":
            if self.initial.angles is None or len(self.initial.angles) != len(self.centers):
                raise ValueError("initial.angles needs one angle per center")
        if self.layers is not None:
            for k, c in enumerate(self.centers):
                if c.m % self.layers.m0:
                    raise ValueError(f"centers[{k}].m is not a multiple of layers.m0")
        return self

    # -- construction -----------------------------------------------------------
    def grid(self) -> Grid:
        cs = [(c.x, c.y, c.m) for c in self.centers]
        return Grid(self.domain.box, self.domain.spacing, cs, self.domain.r_multiple)

    def initial_phase(self, grid: Grid) -> PhaseField:
        if self.initial.kind == "constant":
            return constant_phase(grid, self.initial.value)
        return rays_phase(grid, self.initial.angles)

    def params(self, dx: float) -> SolverParams:
        vr = self.motion.v_inf * self.motion.rho_c
        s = self.solver
        return SolverParams(
            h=s.h_factor * dx, mu=s.mu_factor * vr, eps_in=s.eps_in_factor * vr,
            eps_out=s.eps_out_factor * vr, alpha=s.alpha,
            A_ceiling=math.inf if s.A_ceiling is None else s.A_ceiling,
            sor_omega=s.sor_omega, sor_tol=s.sor_tol, sor_max_iter=s.sor_max_iter,
            sor_ordering=s.sor_ordering, max_outer=s.max_outer, max_inner=s.max_inner,
            demote_cross=s.demote_cross)

    def motion_terms(self):
        """(f, rescaled gamma, raw gamma) for the main anisotropy."""
        raw = self.anisotropy.build()
        f, a = rescale_bcf(self.motion.v_inf, self.motion.rho_c, raw)
        return f, a, raw

    def layer_spec(self) -> LayerSpec:
        L = self.layers
        v, rho = self.motion.v_inf, self.motion.rho_c
        if L.a_ratio is not None:
            return illusory_layers(L.a_ratio, v, rho, L.m0, L.cutoff_eps)
        return LayerSpec(L.m0, [s.build() for s in L.anisotropies], [v] * L.m0,
                         [rho] * L.m0, L.cutoff_eps)

    def snapshot_times(self) -> list:
        return sorted(set(self.time.snapshots)) or [0.0, self.time.T]

    def output_dir(self, root=None) -> Path:
        p = Path(self.output.format(name=self.name))
        return Path(root) / p if root is not None and not p.is_absolute() else p

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


# -- loading and overrides ---------------------------------------------------------

def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values parse as JSON when possible."""
    out = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
            else:
                node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = _coerce(val)
        else:
            node[last] = _coerce(val)
    return out


def preset_names() -> list:
    root = resources.files("spiralflow") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset_data(name: str) -> dict:
    path = resources.files("spiralflow") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def load_data(source) -> dict:
    """A preset name or a path to a scenario JSON file."""
    p = Path(source)
    if p.suffix == ".json" or p.exists():
        try:
            return json.loads(p.read_text())
        except OSError as err:
            raise ScenarioError(f"cannot read scenario {source}: {err}") from err
        except json.JSONDecodeError as err:
            raise ScenarioError(f"{source}: invalid JSON ({err})") from err
    return preset_data(str(source))


def load(source, overrides=()) -> Scenario:
    return Scenario.model_validate(apply_overrides(load_data(source), overrides))
