"""Run configuration: a YAML key/value tree validated into typed blocks.

Every block is optional except ``grid``; omitted keys take documented defaults.
Validation errors are raised as ConfigError naming the dotted key path.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ThermoBlock(_Block):
    R_d: float = Field(287.0, gt=0)
    R_v: float = Field(462.0, gt=0)
    c_pd: float = Field(1005.0, gt=0)
    c_pv: float = Field(1850.0, gt=0)
    c_l: float = Field(4218.0, gt=0)
    L_ref: float = Field(2.5e6, gt=0)
    T_ref: float = Field(273.15, gt=0)
    p_ref: float = Field(1.0e5, gt=0)
    es_ref: float = Field(611.0, gt=0)
    g: float = Field(9.81, gt=0)
    a: float = Field(6.0e6, gt=0)
    Omega: float = Field(1.0e-4, gt=0)
    DeltaTheta: float = Field(40.0, ge=0)
    f: float = Field(1.0e-4, gt=0)
    beta: float = Field(1.6e-11, ge=0)
    theta_ref: Optional[float] = Field(None, gt=0)


class RegimeBlock(_Block):
    alpha: int = 0
    epsilon: float = Field(0.1, gt=0, lt=1)

    @field_validator("alpha", mode="before")
    @classmethod
    def _alpha(cls, v):
        if v not in (0, 1) or isinstance(v, bool):
            raise ValueError("regime selector must be 0 or 1")
        return int(v)


class TablesBlock(_Block):
    rho_bar: str
    theta_e_bar: str
    q_vs_bar: str


class BackgroundBlock(_Block):
    family: Literal["exponential", "boussinesq", "tabulated"] = "exponential"
    qvs_profile: Literal["exponential", "linear", "constant", "none", "clausius_clapeyron"] = "exponential"
    qvs_surface: Optional[float] = Field(None, ge=0)
    qvs_scale_height: float = Field(3500.0, gt=0)
    qvs_gradient: Optional[float] = Field(None, le=0)
    dtheta_e_dz: float = 4.0e-3
    theta_e_surface: Optional[float] = Field(None, gt=0)
    dqvs_dtheta: Optional[float] = Field(None, ge=0)
    tables: Optional[TablesBlock] = None

    @field_validator("dtheta_e_dz")
    @classmethod
    def _stable(cls, v):
        if not v > 0:
            raise ValueError("stability invariant violated: d(theta_e_bar)/dz must be > 0")
        return v

    @model_validator(mode="after")
    def _tables(self):
        if self.family == "tabulated" and self.tables is None:
            raise ValueError("tabulated family needs a tables block")
        return self


class MicrophysicsBlock(_Block):
    C_ev: float = Field(1.0, ge=0)
    C_cn: float = Field(1.0, ge=0)
    C_cd: float = Field(10.0, ge=0)
    C_ac: float = Field(1.0e-3, ge=0)
    C_cr: float = Field(2.2, ge=0)
    q_cn: float = Field(1.0e-3, ge=0)
    q_ac: float = Field(1.0e-3, ge=0)
    V_r: float = Field(5.0, gt=0)
    n: int = Field(1, ge=1)
    fast_scaling: bool = False


class GridBlock(_Block):
    nx: int = Field(..., ge=4)
    ny: int = Field(..., ge=4)
    nz: int = Field(..., ge=4)
    Lx: float = Field(4.0e6, gt=0)
    Ly: float = Field(4.0e6, gt=0)
    H: float = Field(1.0e4, gt=0)

    @field_validator("nx", "ny")
    @classmethod
    def _pow2(cls, v):
        if v & (v - 1):
            raise ValueError("must be a power of two")
        return v


class InitialBlock(_Block):
    family: Literal["random", "jet", "vortex"] = "random"
    amplitude: float = 2.0e-5
    k_peak: float = Field(4.0, gt=0)
    width: Optional[float] = Field(None, gt=0)
    perturbation: float = 1.0e-2
    moisture_offset: float = 0.0
    moisture_amplitude: float = 0.0


class DynamicsBlock(_Block):
    variant: Literal["continuous", "fast"] = "continuous"
    dt: float = Field(600.0, gt=0)
    t_end: float = Field(0.0, ge=0)
    output_every: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    initial: InitialBlock = InitialBlock()
    lagged_mask: bool = False
    compute_w: bool = True
    cfl_limit: float = Field(0.5, gt=0, le=0.5)


class SolverBlock(_Block):
    max_iter: int = Field(50, ge=1)
    mask_tol: float = Field(1.0e-12, ge=0)
    cg_rtol: float = Field(1.0e-13, gt=0, lt=1)
    cg_maxiter: int = Field(500, ge=1)
    theta_bc_bottom: float = 0.0
    theta_bc_top: float = 0.0


class RunConfig(_Block):
    thermo: ThermoBlock = ThermoBlock()
    regime: RegimeBlock = RegimeBlock()
    background: BackgroundBlock = BackgroundBlock()
    microphysics: MicrophysicsBlock = MicrophysicsBlock()
    grid: GridBlock
    dynamics: DynamicsBlock = DynamicsBlock()
    solver: SolverBlock = SolverBlock()

    # -- builders ---------------------------------------------------------

    def thermo_params(self):
        from .thermo import ThermoParams

        kw = self.thermo.model_dump()
        if kw["theta_ref"] is None:
            kw["theta_ref"] = kw["T_ref"]
        try:
            return ThermoParams(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc), key="thermo") from exc

    def grid_obj(self):
        from .grid import Grid

        return Grid(**self.grid.model_dump())

    def microphysics_params(self):
        from .microphysics import MicrophysicsParams

        return MicrophysicsParams(epsilon=self.regime.epsilon, **self.microphysics.model_dump())

    def background_state(self, tp=None, grid=None):
        from .background import build_background

        tp = tp or self.thermo_params()
        grid = grid or self.grid_obj()
        cfg = self.background.model_dump()
        if cfg["tables"] is not None:
            cfg["tables"] = dict(cfg["tables"])
        return build_background(cfg, grid.z, tp)

    def inversion_options(self):
        from .inversion import InversionOptions

        s = self.solver
        return InversionOptions(max_iter=s.max_iter, mask_tol=s.mask_tol, cg_rtol=s.cg_rtol,
                                cg_maxiter=s.cg_maxiter, theta_bc=(s.theta_bc_bottom, s.theta_bc_top))

    def model(self):
        from .dynamics import Model

        tp = self.thermo_params()
        grid = self.grid_obj()
        return Model(grid, self.background_state(tp, grid), tp, self.microphysics_params().effective(),
                     self.dynamics.variant, self.inversion_options(), self.dynamics.lagged_mask,
                     self.dynamics.cfl_limit)


def _key_path(loc) -> str:
    return ".".join(str(p) for p in loc if not (isinstance(p, str) and p.startswith("function-")))


def from_mapping(data) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of blocks")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        msg = err["msg"].removeprefix("Value error, ")
        raise ConfigError(msg, key=_key_path(err["loc"]) or "<root>") from None


def parse_config_text(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return from_mapping(data)


def parse_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cfg = parse_config_text(text)
    # profile-level invariants (e.g. tabulated theta_e) surface here as ConfigError
    cfg.background_state()
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def apply_overrides(cfg: RunConfig, seed=None, variant=None) -> RunConfig:
    data = cfg.model_dump(mode="json")
    if seed is not None:
        data["dynamics"]["seed"] = int(seed)
    if variant is not None:
        data["dynamics"]["variant"] = variant
    return from_mapping(data)


def seeded_rng(seed: int) -> np.random.Generator:
    """Counter-based, splittable generator: Philox keyed by the 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))
