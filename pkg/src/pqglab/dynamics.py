"""Time integration of the continuous-closure and fast-condensation PQG models.

The prognostic PV is stored as the periodic anomaly ``q = PV_e - beta*y``;
its evolution therefore picks up ``-beta*v`` from advection of the planetary
part.  Every Runge-Kutta stage re-closes the diagnostics (inversion, balances,
moisture partition, rain column).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import inversion as inv
from .advection import courant_number, limited_advection, spectral_advection
from .background import BackgroundState
from .errors import CFLError, ConfigError
from .grid import Grid
from .microphysics import MicrophysicsParams, MoistureCell, rain_column_solve, source_terms
from .thermo import ThermoParams

log = logging.getLogger(__name__)

VARIANTS = ("continuous", "fast")


@dataclass(frozen=True)
class Model:
    grid: Grid
    bg: BackgroundState
    tp: ThermoParams
    mp: MicrophysicsParams
    variant: str = "continuous"
    inv_opts: inv.InversionOptions = inv.InversionOptions()
    lagged_mask: bool = False
    cfl_limit: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}", key="dynamics.variant")

    def col(self, a):
        """Broadcast a vertical profile against (nz+1, ny, nx)."""
        return np.asarray(a)[:, None, None]


@dataclass
class PrognosticState:
    variant: str
    pv: np.ndarray  # PV_e - beta*y
    M: np.ndarray
    q_c: np.ndarray | None
    t: float = 0.0

    def axpy(self, a, tend, b=1.0):
        """Return b*self + a*tend (tend is a Tendencies), keeping the variant tag."""
        qc = None if self.q_c is None else b * self.q_c + a * tend.q_c
        return PrognosticState(self.variant, b * self.pv + a * tend.pv, b * self.M + a * tend.M, qc, self.t)


@dataclass
class DiagnosticState:
    phi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray
    theta_e: np.ndarray
    q_v: np.ndarray
    q_vs: np.ndarray
    q_c: np.ndarray
    q_r: np.ndarray
    mask: np.ndarray | None = None
    lid_mask: np.ndarray | None = None
    iterations: int = 0
    w: np.ndarray | None = None


@dataclass
class Tendencies:
    pv: np.ndarray
    M: np.ndarray
    q_c: np.ndarray | None = None


@dataclass
class StepStats:
    clipped_mass: float = 0.0
    courant: float = 0.0
    iterations: int = 0


def unsaturated_vapour(M, theta, model: Model):
    """(M - theta)/(L_c + B), written with the bounded coefficient c2."""
    return model.col(model.bg.coeff_c2) * (M - theta) / model.bg.L_c


def close_diagnostics(s: PrognosticState, model: Model, mask_guess=None, frozen=None) -> DiagnosticState:
    """Recover all diagnostic fields from the prognostic state.

    ``mask_guess`` seeds the active-set iteration of the fast variant;
    ``frozen`` = (mask, lid_mask) skips it and uses those branches as given.
    """
    g, bg, tp = model.grid, model.bg, model.tp
    theta_bc = model.inv_opts.theta_bc
    mask = lid_mask = None
    iterations = 0
    if s.variant == "continuous":
        phi = inv.invert_moist_linear(s.pv, s.M, bg, tp, g, theta_bc=theta_bc)
    elif frozen is not None:
        mask, lid_mask = frozen
        phi = inv.invert_fixed_branches(s.pv, s.M, mask, lid_mask, bg, tp, g, theta_bc, model.inv_opts)
    else:
        res = inv.invert_moist_fast(s.pv, s.M, bg, tp, g, model.inv_opts, initial_mask=mask_guess)
        phi, mask, lid_mask, iterations = res.phi, res.mask, res.lid_mask, res.iterations
    bal = inv.diagnose_balances(phi, tp, g)
    theta = bal.theta
    q_vs = model.col(bg.dqvs_dtheta) * theta
    branch = unsaturated_vapour(s.M, theta, model)
    if s.variant == "continuous":
        q_v = branch
        q_c = np.maximum(s.q_c, 0.0)
    else:
        q_v = np.minimum(q_vs, branch)
        q_c = np.maximum(branch - q_vs, 0.0) / model.col(bg.coeff_c1)
    theta_e = theta + bg.L_c * q_v
    q_r = rain_column_solve(q_c, q_v, q_vs, bg.rho_bar, g.dz, model.mp)
    return DiagnosticState(phi, bal.u, bal.v, bal.zeta, theta, theta_e, q_v, q_vs, q_c, q_r,
                           mask, lid_mask, iterations)


def _moist_pv_source(d: DiagnosticState, model: Model):
    g, bg, tp = model.grid, model.bg, model.tp
    uz = g.ddz(d.u)
    vz = g.ddz(d.v)
    lq = bg.L_c * d.q_v
    return -model.col(tp.f / bg.dtheta_e_dz) * (uz * g.ddx(lq) + vz * g.ddy(lq))


def tendencies(s: PrognosticState, d: DiagnosticState, model: Model) -> Tendencies:
    g, bg, tp = model.grid, model.bg, model.tp
    dpv = -spectral_advection(s.pv, d.u, d.v, g) - tp.beta * d.v + _moist_pv_source(d, model)
    B = model.col(np.where(np.isnan(bg.B), 0.0, bg.B))
    adv_M = -spectral_advection(s.M, d.u, d.v, g)
    if s.variant == "continuous":
        src = source_terms(MoistureCell(d.q_v, d.q_c, d.q_r, d.q_vs), model.mp)
        dM = adv_M + B * (src.S_ev - src.S_cd)
        dqc = -limited_advection(np.maximum(s.q_c, 0.0), d.u, d.v, g) + src.S_cd - src.S_ac - src.S_cr
        return Tendencies(dpv, dM, dqc)
    rho = model.col(bg.rho_bar)
    sed = g.ddz(model.mp.V_r * rho * d.q_r) / rho
    return Tendencies(dpv, adv_M + B * sed, None)


def vertical_velocity(s: PrognosticState, d: DiagnosticState, tend: Tendencies, model: Model):
    """w from the theta_e budget, w = -(d theta_e/dt + u.grad theta_e) / (d theta_e_bar/dz).

    The local theta_e tendency follows from inverting the PV and M tendencies
    with the current branch structure held fixed (homogeneous lid data).
    """
    g, bg, tp = model.grid, model.bg, model.tp
    if s.variant == "continuous":
        phi_t = inv.invert_moist_linear(tend.pv, tend.M, bg, tp, g)
        theta_t = g.ddz(phi_t) * tp.theta_ref / tp.g
        the_t = model.col(bg.coeff_c1) * theta_t + model.col(bg.coeff_c2) * tend.M
    else:
        phi_t = inv.invert_fixed_branches(tend.pv, tend.M, d.mask, d.lid_mask, bg, tp, g,
                                          opts=model.inv_opts)
        theta_t = g.ddz(phi_t) * tp.theta_ref / tp.g
        sat = unsaturated_vapour(s.M, d.theta, model) > d.q_vs
        the_t = np.where(sat, model.col(1.0 + bg.L_c * bg.dqvs_dtheta) * theta_t,
                         model.col(bg.coeff_c1) * theta_t + model.col(bg.coeff_c2) * tend.M)
    adv = spectral_advection(d.theta_e, d.u, d.v, g)
    return -(the_t + adv) / model.col(bg.dtheta_e_dz)


def clip_cloud(s: PrognosticState, model: Model) -> float:
    """Zero negative cloud water in place; return the removed mass per unit area [kg m^-2]."""
    if s.q_c is None:
        return 0.0
    neg = np.minimum(s.q_c, 0.0)
    if not neg.any():
        return 0.0
    g = model.grid
    mass = -float(np.sum((g.trapz_weights * model.bg.rho_bar)[:, None, None] * neg)) / (g.nx * g.ny)
    s.q_c = np.maximum(s.q_c, 0.0)
    if mass > 0.0:
        log.info("clipped negative cloud water: %.3e kg m-2", mass)
    return mass


def step(s: PrognosticState, dt: float, model: Model, d0: DiagnosticState | None = None):
    """One SSP-RK3 step; returns (new state, stats)."""
    if d0 is None:
        d0 = close_diagnostics(s, model)
    cfl = courant_number(d0.u, d0.v, dt, model.grid)
    if cfl > model.cfl_limit:
        raise CFLError(cfl, model.cfl_limit)
    frozen = (d0.mask, d0.lid_mask) if (model.lagged_mask and s.variant == "fast") else None
    iters = d0.iterations

    def close(st, prev):
        return close_diagnostics(st, model, mask_guess=prev.mask, frozen=frozen)

    k0 = tendencies(s, d0, model)
    s1 = s.axpy(dt, k0)
    d1 = close(s1, d0)
    k1 = tendencies(s1, d1, model)
    s2 = s.axpy(0.25, s1.axpy(dt, k1), b=0.75)
    d2 = close(s2, d1)
    k2 = tendencies(s2, d2, model)
    s3 = s.axpy(2.0 / 3.0, s2.axpy(dt, k2), b=1.0 / 3.0)
    s3.t = s.t + dt
    iters += d1.iterations + d2.iterations
    clipped = clip_cloud(s3, model)
    return s3, StepStats(clipped, cfl, iters)


# ---------------------------------------------------------------------------
# initial conditions


def _smooth_noise(rng, grid: Grid, k_peak: float, vertical_modes: int = 3):
    """Random field with a horizontal spectrum peaked at k_peak (in units of the
    fundamental wavenumber) and vertical structure from a few cosine modes; zero
    horizontal mean on every level, unit RMS."""
    k0 = 2 * np.pi / max(grid.Lx, grid.Ly)
    kmag = np.sqrt(grid.ksq) / k0
    env = kmag**2 * np.exp(-((kmag / max(k_peak, 1e-12)) ** 2)) * grid.dealias
    env[0, 0] = 0.0
    zeta = grid.z / grid.H
    out = np.zeros(grid.shape)
    for m in range(vertical_modes):
        shape = env.shape
        coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * env / (1 + m)
        out += np.cos(np.pi * m * zeta)[:, None, None] * grid.ifft(coef)[None]
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def initial_state(model: Model, ic: dict, rng: np.random.Generator) -> PrognosticState:
    """Build one of the canonical initial conditions.

    ``ic`` keys: family (random | jet | vortex), amplitude [s^-1], k_peak,
    perturbation, width [m], moisture_offset [K], moisture_amplitude [K].
    """
    g, bg, tp = model.grid, model.bg, model.tp
    family = ic.get("family", "random")
    amp = float(ic.get("amplitude", 2.0e-5))
    Z, Y, X = g.mesh()
    if family == "random":
        pv = amp * _smooth_noise(rng, g, float(ic.get("k_peak", 4.0)))
    elif family == "jet":
        width = float(ic.get("width", g.Ly / 8))
        yc = 0.5 * g.Ly
        prof = -np.tanh((Y - yc) / width) * np.exp(-(((Y - yc) / (0.3 * g.Ly)) ** 4))
        pv = amp * prof * np.cos(np.pi * Z / g.H) * np.ones(g.shape)
        pv = pv - pv.mean(axis=(1, 2), keepdims=True)
        pv += float(ic.get("perturbation", 1e-2)) * amp * _smooth_noise(rng, g, 6.0)
    elif family == "vortex":
        width = float(ic.get("width", g.Lx / 10))
        r2 = (X - 0.5 * g.Lx) ** 2 + (Y - 0.5 * g.Ly) ** 2
        pv = amp * np.exp(-r2 / width**2) * np.cos(0.5 * np.pi * Z / g.H) * np.ones(g.shape)
        pv = pv - pv.mean(axis=(1, 2), keepdims=True)
    else:
        raise ConfigError(f"unknown initial-condition family {family!r}", key="dynamics.initial.family")
    pv = g.ifft(g.dealias * g.fft(pv))
    # moisture tied to the temperature of the moist-neutral inversion
    n2 = tp.g * bg.dtheta_e_dz / tp.theta_ref
    phi0 = inv.invert_dry(pv, bg, tp, g, n2=n2)
    theta0 = g.ddz(phi0) * tp.theta_ref / tp.g
    M = theta0 + float(ic.get("moisture_offset", 0.0))
    m_amp = float(ic.get("moisture_amplitude", 0.0))
    if m_amp:
        M = M + m_amp * _smooth_noise(rng, g, float(ic.get("k_peak", 4.0)))
    q_c = np.zeros(g.shape) if model.variant == "continuous" else None
    return PrognosticState(model.variant, pv, M, q_c, 0.0)


# ---------------------------------------------------------------------------
# scalar diagnostics


def scalar_diagnostics(step_index: int, s: PrognosticState, d: DiagnosticState, model: Model,
                       clipped_mass: float, courant: float, iterations: int) -> dict:
    g, bg, tp = model.grid, model.bg, model.tp
    rho = bg.rho_bar
    w = g.trapz_weights
    grad2 = g.ddx(d.phi) ** 2 + g.ddy(d.phi) ** 2
    pv_e = s.pv + tp.beta * g.y[None, :, None]
    if d.mask is not None:
        sat = float(np.mean(d.mask))
    else:
        sat = float(np.mean(d.q_v > d.q_vs))
    area = g.nx * g.ny
    rain = float(np.sum((w * rho)[:, None, None] * d.q_r) / area)
    water = bg.q_vs_bar[:, None, None] + d.q_v + d.q_c + d.q_r
    total_water = float(np.sum((w * rho)[:, None, None] * water) / area)
    return {
        "step": step_index,
        "t": float(s.t),
        "energy": g.volume_mean(grad2),
        "pv_mean": g.volume_mean(pv_e),
        "pv_var": g.volume_mean((pv_e - g.volume_mean(pv_e)) ** 2),
        "pv_min": float(pv_e.min()),
        "pv_max": float(pv_e.max()),
        "sat_fraction": sat,
        "rain_column": rain,
        "clipped_mass": float(clipped_mass),
        "total_water": total_water,
        "q_c_min": float(d.q_c.min()),
        "q_r_min": float(d.q_r.min()),
        "courant": float(courant),
        "active_set_iterations": int(iterations),
    }


def frame_fields(s: PrognosticState, d: DiagnosticState) -> dict:
    """Fields written to each output frame, in frozen order."""
    out = {
        "pv_anomaly": s.pv, "M": s.M, "phi": d.phi, "u": d.u, "v": d.v, "zeta": d.zeta,
        "theta": d.theta, "theta_e": d.theta_e, "q_v": d.q_v, "q_vs": d.q_vs, "q_c": d.q_c,
        "q_r": d.q_r,
    }
    if d.w is not None:
        out["w"] = d.w
    if d.mask is not None:
        out["mask"] = d.mask.astype(float)
    return out


@dataclass
class RunResult:
    state: PrognosticState
    diagnostics: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    clipped_total: float = 0.0
    max_clip_fraction: float = 0.0
    min_q_c: float = 0.0
    min_q_r: float = 0.0


def integrate(model: Model, state: PrognosticState, dt: float, t_end: float, output_every: int = 1,
              on_output=None, compute_w: bool = True) -> RunResult:
    """Step from ``state.t`` to ``t_end``; ``on_output(index, state, diag, row)`` is called at outputs."""
    if dt <= 0:
        raise ConfigError("time step must be positive", key="dynamics.dt")
    nsteps = int(np.ceil((t_end - state.t) / dt - 1e-9)) if t_end > state.t else 0
    result = RunResult(state)
    clipped_total = 0.0
    s = state
    d = close_diagnostics(s, model)
    courant = courant_number(d.u, d.v, dt, model.grid)
    iters = d.iterations
    out_index = 0

    def emit(step_index):
        nonlocal out_index
        if compute_w:
            d.w = vertical_velocity(s, d, tendencies(s, d, model), model)
        row = scalar_diagnostics(step_index, s, d, model, clipped_total, courant, iters)
        result.diagnostics.append(row)
        result.max_clip_fraction = max(result.max_clip_fraction,
                                       clipped_total / max(row["total_water"], 1e-300))
        result.min_q_c = min(result.min_q_c, row["q_c_min"])
        result.min_q_r = min(result.min_q_r, row["q_r_min"])
        if on_output is not None:
            on_output(out_index, s, d, row)
        out_index += 1

    emit(0)
    for n in range(1, nsteps + 1):
        h = min(dt, t_end - s.t) if n == nsteps else dt
        s, stats = step(s, h, model, d0=d)
        clipped_total += stats.clipped_mass
        courant, iters = stats.courant, stats.iterations
        d = close_diagnostics(s, model, mask_guess=d.mask)
        if n % output_every == 0 or n == nsteps:
            emit(n)
    result.state = s
    result.clipped_total = clipped_total
    return result


def with_dry_background(bg: BackgroundState) -> BackgroundState:
    """The same column with moisture coefficients switched off (c1 = 1, c2 = 0)."""
    ones = np.ones_like(bg.coeff_c1)
    zeros = np.zeros_like(bg.coeff_c2)
    return replace(bg, coeff_c1=ones, coeff_c2=zeros, dq_vs_dz=zeros, B=np.full_like(bg.B, np.nan),
                   dqvs_dtheta=zeros)
