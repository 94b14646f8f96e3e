"""Vertical background state and its derived stability coefficients."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import thermo
from .errors import ConfigError
from .thermo import ThermoParams


@dataclass(frozen=True)
class BackgroundState:
    z: np.ndarray
    rho_bar: np.ndarray
    theta_bar: np.ndarray
    theta_e_bar: np.ndarray
    q_vs_bar: np.ndarray
    dtheta_e_dz: np.ndarray
    dq_vs_dz: np.ndarray
    B: np.ndarray  # NaN where dq_vs_dz == 0
    N2: np.ndarray
    coeff_c1: np.ndarray
    coeff_c2: np.ndarray
    dqvs_dtheta: np.ndarray  # linearised q_vs response to theta perturbations
    L_c: float
    family: str = "exponential"
    cc_derived: bool = False

    @property
    def nz(self) -> int:
        return self.z.size - 1

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def moist(self) -> bool:
        return bool(np.any(self.dq_vs_dz < 0.0))


def _ddz(a, dz):
    return np.gradient(a, dz, edge_order=2)


def from_profiles(z, rho_bar, theta_e_bar, q_vs_bar, tp: ThermoParams, *, family="tabulated",
                  dqvs_dtheta=None, cc_derived=False) -> BackgroundState:
    """Validate nodal profiles and precompute all derived coefficients."""
    z = np.asarray(z, dtype=float)
    rho_bar = np.asarray(rho_bar, dtype=float)
    theta_e_bar = np.asarray(theta_e_bar, dtype=float)
    q_vs_bar = np.asarray(q_vs_bar, dtype=float)
    dz = z[1] - z[0]
    if z.size < 5 or not np.allclose(np.diff(z), dz, rtol=1e-10, atol=0.0):
        raise ConfigError("vertical grid must be uniform with at least 4 cells", key="background.z")
    if np.any(rho_bar <= 0.0):
        raise ConfigError("background density must be positive", key="background.rho_bar")
    if np.any(q_vs_bar < 0.0):
        raise ConfigError("saturation mixing ratio must be non-negative", key="background.q_vs_bar")

    L_c = tp.L_c
    dthe = _ddz(theta_e_bar, dz)
    if np.any(dthe <= 0.0):
        raise ConfigError("stability invariant violated: d(theta_e_bar)/dz must be > 0 everywhere",
                          key="background.theta_e_bar")
    dq = _ddz(q_vs_bar, dz)
    # roundoff on constant profiles
    dq = np.where(np.abs(dq) <= 1e-14 * max(float(np.max(np.abs(q_vs_bar))), 1e-300) / dz, 0.0, dq)
    if np.any(dq > 0.0):
        raise ConfigError("d(q_vs_bar)/dz must be <= 0 everywhere", key="background.q_vs_bar")

    theta_bar = theta_e_bar - L_c * q_vs_bar
    N2 = tp.g * _ddz(theta_bar, dz) / tp.theta_ref
    denom = dthe - L_c * dq
    c1 = dthe / denom
    # complement keeps fl(c1 + c2) == 1 exactly for c1 in (0, 1]
    c2 = 1.0 - c1
    with np.errstate(divide="ignore"):
        B = np.where(dq < 0.0, -dthe / np.where(dq < 0.0, dq, 1.0), np.nan)
    if dqvs_dtheta is None:
        gamma_vs = q_vs_bar * tp.L_ref / (tp.R_v * tp.T_ref**2)
    else:
        gamma_vs = np.broadcast_to(np.asarray(dqvs_dtheta, dtype=float), z.shape).copy()
    if np.any(N2 <= 0.0):
        raise ConfigError("buoyancy frequency squared must be positive", key="background.theta_bar")
    return BackgroundState(
        z=z, rho_bar=rho_bar, theta_bar=theta_bar, theta_e_bar=theta_e_bar, q_vs_bar=q_vs_bar,
        dtheta_e_dz=dthe, dq_vs_dz=dq, B=B, N2=N2, coeff_c1=c1, coeff_c2=c2,
        dqvs_dtheta=gamma_vs, L_c=L_c, family=family, cc_derived=cc_derived,
    )


def _read_table(path, z):
    data = np.loadtxt(Path(path), dtype=float, ndmin=2)
    if data.shape[1] != 2:
        raise ConfigError(f"expected two columns (z, value) in {path}", key="background.tables")
    order = np.argsort(data[:, 0])
    zt, vt = data[order, 0], data[order, 1]
    if z[0] < zt[0] - 1e-9 or z[-1] > zt[-1] + 1e-9:
        raise ConfigError(f"table {path} does not cover [0, H]", key="background.tables")
    return np.interp(z, zt, vt)


def exner_column(theta_bar, z, tp: ThermoParams):
    """Hydrostatic pressure and temperature for a potential-temperature profile.

    Integrates d(pi)/dz = -g / (c_pd theta) with the trapezoid rule.
    """
    inv = 1.0 / np.asarray(theta_bar, dtype=float)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(z))])
    pi = 1.0 - tp.g / tp.c_pd * integral
    if np.any(pi <= 0.0):
        raise ConfigError("column top above the hydrostatic pressure zero", key="background.H")
    p = tp.p_ref * pi ** (tp.c_pd / tp.R_d)
    return p, theta_bar * pi


def cc_qvs_column(theta_bar, z, tp: ThermoParams):
    p, T = exner_column(theta_bar, z, tp)
    return thermo.saturation_mixing_ratio(p, T, tp)


def build_background(cfg, z, tp: ThermoParams) -> BackgroundState:
    """Evaluate a built-in profile family on the vertical levels ``z``.

    ``cfg`` is a mapping or an object with attributes (the ``background`` block
    of the run configuration).
    """
    get = cfg.get if isinstance(cfg, dict) else (lambda k, d=None: getattr(cfg, k, d))
    z = np.asarray(z, dtype=float)
    family = get("family", "exponential")
    rho_ref = thermo.derived_quantities(tp).rho_ref
    h_sc = thermo.derived_quantities(tp).h_sc
    qvs_profile = get("qvs_profile", "exponential")
    q0 = get("qvs_surface", None)
    if q0 is None:
        q0 = thermo.saturation_mixing_ratio(tp.p_ref, tp.T_ref, tp)
    gam = get("dtheta_e_dz", 4.0e-3)
    th0 = get("theta_e_surface", None)

    if family == "tabulated":
        tables = get("tables", None) or {}
        missing = {"rho_bar", "theta_e_bar", "q_vs_bar"} - set(tables)
        if missing:
            raise ConfigError(f"missing tables {sorted(missing)}", key="background.tables")
        return from_profiles(z, _read_table(tables["rho_bar"], z), _read_table(tables["theta_e_bar"], z),
                             _read_table(tables["q_vs_bar"], z), tp, family="tabulated",
                             dqvs_dtheta=get("dqvs_dtheta", None))
    if family == "exponential":
        rho = rho_ref * np.exp(-z / h_sc)
    elif family == "boussinesq":
        rho = np.full_like(z, rho_ref)
    else:
        raise ConfigError(f"unknown profile family {family!r}", key="background.family")

    cc = False
    if qvs_profile == "exponential":
        qvs = q0 * np.exp(-z / get("qvs_scale_height", 3500.0))
    elif qvs_profile == "linear":
        slope = get("qvs_gradient", None)
        if slope is None:
            slope = -gam / tp.L_c
        qvs = q0 + slope * z
    elif qvs_profile == "constant":
        qvs = np.full_like(z, q0)
    elif qvs_profile == "none":
        qvs = np.zeros_like(z)
    elif qvs_profile == "clausius_clapeyron":
        # dry theta linear, q_vs from CC on the hydrostatic column
        theta_bar = tp.T_ref + gam * z
        qvs = cc_qvs_column(theta_bar, z, tp)
        the = theta_bar + tp.L_c * qvs
        return from_profiles(z, rho, the, qvs, tp, family=family,
                             dqvs_dtheta=get("dqvs_dtheta", None), cc_derived=True)
    else:
        raise ConfigError(f"unknown q_vs profile {qvs_profile!r}", key="background.qvs_profile")
    if th0 is None:
        th0 = tp.theta_ref + tp.L_c * qvs[0]
    the = th0 + gam * z
    return from_profiles(z, rho, the, qvs, tp, family=family, dqvs_dtheta=get("dqvs_dtheta", None),
                         cc_derived=cc)


@dataclass
class ConsistencyReport:
    max_rel_deviation: float
    warning: bool
    q_vs_cc: np.ndarray

    def as_dict(self):
        return {"max_rel_deviation": self.max_rel_deviation, "warning": self.warning}


def consistency_check(bg: BackgroundState, tp: ThermoParams, warn_above: float = 0.2) -> ConsistencyReport:
    """Compare q_vs_bar with Clausius-Clapeyron on the hydrostatic column.

    The column's potential temperature is theta_e_bar - L_c q_vs_bar.  The
    deviation is normalised by the column maximum of the CC profile.
    """
    q_cc = cc_qvs_column(bg.theta_bar, bg.z, tp)
    dev = float(np.max(np.abs(bg.q_vs_bar - q_cc)) / np.max(np.abs(q_cc)))
    return ConsistencyReport(dev, dev > warn_above, q_cc)
