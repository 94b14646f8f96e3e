"""Thermodynamic constants of moist air, Clausius-Clapeyron and regime scalings.

All functions are pure and accept scalars or numpy arrays for temperature and
pressure.  Units are SI throughout.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError, DomainError

T_MIN = 150.0
T_MAX = 350.0


@dataclass(frozen=True)
class ThermoParams:
    R_d: float = 287.0
    R_v: float = 462.0
    c_pd: float = 1005.0
    c_pv: float = 1850.0
    c_l: float = 4218.0
    L_ref: float = 2.5e6
    T_ref: float = 273.15
    p_ref: float = 1.0e5
    es_ref: float = 611.0
    g: float = 9.81
    a: float = 6.0e6
    Omega: float = 1.0e-4
    DeltaTheta: float = 40.0
    f: float = 1.0e-4
    beta: float = 1.6e-11
    theta_ref: float | None = None  # defaults to T_ref

    def __post_init__(self):
        if self.theta_ref is None:
            object.__setattr__(self, "theta_ref", self.T_ref)
        self.validate()

    def validate(self):
        for fld in fields(self):
            value = getattr(self, fld.name)
            if fld.name == "DeltaTheta":
                # Pi_2 = 0 is a legitimate (if degenerate) probe
                if not value >= 0.0:
                    raise ConfigError("must be non-negative", key=f"thermo.{fld.name}")
                continue
            if not (np.isfinite(value) and value > 0.0):
                raise ConfigError("must be finite and strictly positive", key=f"thermo.{fld.name}")
        if not self.c_l > self.c_pv > self.c_pd:
            raise ConfigError("heat capacities must satisfy c_l > c_pv > c_pd", key="thermo")
        if not self.R_v > self.R_d:
            raise ConfigError("gas constants must satisfy R_v > R_d", key="thermo")
        if not self.es_ref / self.p_ref < 0.05:
            raise ConfigError("es_ref/p_ref must be below 0.05", key="thermo.es_ref")

    @property
    def gamma(self) -> float:
        """Isentropic exponent c_pd / (c_pd - R_d)."""
        return self.c_pd / (self.c_pd - self.R_d)

    @property
    def L_c(self) -> float:
        """Latent heat in temperature units, L_ref / c_pd [K]."""
        return self.L_ref / self.c_pd

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivedQuantities:
    rho_ref: float
    h_sc: float
    c_ref: float
    c_int: float
    u_ref: float

    def as_dict(self) -> dict:
        return asdict(self)


def derived_quantities(p: ThermoParams) -> DerivedQuantities:
    rho_ref = p.p_ref / (p.R_d * p.T_ref)
    h_sc = p.gamma * p.p_ref / (p.g * rho_ref)
    c_ref = math.sqrt(p.gamma * p.p_ref / rho_ref)
    c_int = math.sqrt(p.g * h_sc * p.DeltaTheta / p.T_ref)
    u_ref = (2.0 / math.pi) * p.g * h_sc / (p.Omega * p.a) * p.DeltaTheta / p.T_ref
    return DerivedQuantities(rho_ref, h_sc, c_ref, c_int, u_ref)


def pi_parameters(p: ThermoParams) -> dict:
    """The three independent dimensionless groups of the dry atmosphere."""
    dq = derived_quantities(p)
    return {
        "Pi1": dq.h_sc / p.a,
        "Pi2": p.DeltaTheta / p.T_ref,
        "Pi3": dq.c_ref / (p.Omega * p.a),
    }


def _check_temperature(T):
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)) or np.any(T <= T_MIN) or np.any(T >= T_MAX):
        raise DomainError(f"temperature outside ({T_MIN}, {T_MAX}) K")
    return T


def latent_heat(T, p: ThermoParams):
    """Linearised vaporisation enthalpy L(T) [J/kg]."""
    T = _check_temperature(T)
    L = p.L_ref - (p.c_l - p.c_pv) * (T - p.T_ref)
    return L if L.ndim else float(L)


def saturation_vapor_pressure(T, p: ThermoParams):
    """Saturation vapour pressure over liquid water [Pa].

    Exact integral of the Clausius-Clapeyron equation for the linear L(T).
    """
    T = _check_temperature(T)
    dc = (p.c_l - p.c_pv) / p.R_v
    expo = (p.L_ref / (p.R_v * p.T_ref) + dc) * (T - p.T_ref) / T
    es = p.es_ref * (p.T_ref / T) ** dc * np.exp(expo)
    return es if es.ndim else float(es)


def saturation_mixing_ratio(p_total, T, tp: ThermoParams):
    es = np.asarray(saturation_vapor_pressure(T, tp))
    p_total = np.asarray(p_total, dtype=float)
    if np.any(p_total <= es):
        raise DomainError("total pressure must exceed the saturation vapour pressure")
    q = tp.R_d / tp.R_v * es / (p_total - es)
    return q if q.ndim else float(q)


# ---------------------------------------------------------------------------
# distinguished limits

# row name -> (exponent for alpha=1, exponent for alpha=0, prefactor symbol)
_PRIMARY_ROWS = {
    "R_d/c_pd": (1, 1, "Gamma"),
    "c_pv/c_pd": (0, -1, "k_v"),
    "R_v/c_pd": (0, 0, "1/A"),
    "c_l/c_pd": (-1, -1, "k_l"),
    "L_ref/(c_pd T_ref)": (-1, -1, "L"),
}
_DERIVED_ROWS = {
    "R_d/R_v": (0, 1, "E"),
    "(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd": (1, 0, "kappa_v"),
}


def _row_values(p: ThermoParams) -> dict:
    return {
        "R_d/c_pd": p.R_d / p.c_pd,
        "c_pv/c_pd": p.c_pv / p.c_pd,
        "R_v/c_pd": p.R_v / p.c_pd,
        "c_l/c_pd": p.c_l / p.c_pd,
        "L_ref/(c_pd T_ref)": p.L_ref / (p.c_pd * p.T_ref),
        "R_d/R_v": p.R_d / p.R_v,
        "(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd": (p.c_pv / p.c_pd) * (p.R_d / p.c_pd) - p.R_v / p.c_pd,
    }


def _exponent(row: str, alpha: int) -> int:
    table = _PRIMARY_ROWS if row in _PRIMARY_ROWS else _DERIVED_ROWS
    e1, e0, _ = table[row]
    return e1 if alpha == 1 else e0


def _implied_exponent(row: str, alpha: int) -> int:
    """Leading-order exponent of a derived row computed from the primary rows."""
    ex = {r: _exponent(r, alpha) for r in _PRIMARY_ROWS}
    if row == "R_d/R_v":
        return ex["R_d/c_pd"] - ex["R_v/c_pd"]
    if row == "(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd":
        return min(ex["c_pv/c_pd"] + ex["R_d/c_pd"], ex["R_v/c_pd"])
    return ex[row]


@dataclass(frozen=True)
class RegimeScalings:
    alpha: int
    epsilon: float
    Gamma: float
    k_v: float
    k_l: float
    L: float
    E: float
    A: float
    kappa_v: float
    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        if self.alpha not in (0, 1):
            raise ConfigError("regime selector must be 0 or 1", key="regime.alpha")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("expansion parameter must lie in (0, 1)", key="regime.epsilon")

    @classmethod
    def fit(cls, p: ThermoParams, alpha: int = 0, epsilon: float = 0.1) -> "RegimeScalings":
        """Fit all O(1) prefactors as (physical ratio) / epsilon**exponent."""
        if alpha not in (0, 1):
            raise ConfigError("regime selector must be 0 or 1", key="regime.alpha")
        vals = _row_values(p)
        pre = {row: vals[row] / epsilon ** _exponent(row, alpha) for row in vals}
        pis = pi_parameters(p)
        return cls(
            alpha=alpha,
            epsilon=epsilon,
            Gamma=pre["R_d/c_pd"],
            k_v=pre["c_pv/c_pd"],
            k_l=pre["c_l/c_pd"],
            L=pre["L_ref/(c_pd T_ref)"],
            E=pre["R_d/R_v"],
            A=1.0 / pre["R_v/c_pd"],
            kappa_v=pre["(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd"],
            c1=pis["Pi1"] / epsilon**3,
            c2=pis["Pi2"] / epsilon,
            c3=pis["Pi3"] / math.sqrt(epsilon),
        )


@dataclass
class RegimeRow:
    name: str
    symbol: str
    value: float
    exponent: int
    prefactor: float
    implied_exponent: int
    consistent: bool
    in_band: bool


@dataclass
class RegimeReport:
    alpha: int
    epsilon: float
    rows: list = field(default_factory=list)
    es_ratio: float = float("nan")
    es_exponent: int = 0
    es_prefactor: float = float("nan")

    @property
    def inconsistencies(self) -> list:
        return [r.name for r in self.rows if not r.consistent]

    def row(self, name: str) -> RegimeRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "rows": [asdict(r) for r in self.rows],
            "inconsistencies": self.inconsistencies,
            "es_ref/p_ref": {"value": self.es_ratio, "exponent": self.es_exponent,
                             "prefactor": self.es_prefactor},
        }


def regime_consistency_report(r: RegimeScalings, p: ThermoParams, band=(0.1, 10.0)) -> RegimeReport:
    """Tabulate physical ratio, epsilon power and fitted prefactor per regime row.

    Derived rows are flagged inconsistent when the exponent assigned by the
    regime differs from the one implied by the primary rows (this is what
    happens for R_d/R_v and kappa_v in regime alpha = 1).
    """
    vals = _row_values(p)
    eps = r.epsilon
    rep = RegimeReport(alpha=r.alpha, epsilon=eps)
    symbols = {k: v[2] for k, v in {**_PRIMARY_ROWS, **_DERIVED_ROWS}.items()}
    for name, value in vals.items():
        ex = _exponent(name, r.alpha)
        pref = value / eps**ex
        implied = _implied_exponent(name, r.alpha)
        rep.rows.append(RegimeRow(
            name=name, symbol=symbols[name], value=value, exponent=ex, prefactor=pref,
            implied_exponent=implied, consistent=(implied == ex),
            in_band=bool(band[0] <= pref <= band[1]),
        ))
    rep.es_ratio = p.es_ref / p.p_ref
    rep.es_exponent = 1 + r.alpha
    rep.es_prefactor = rep.es_ratio / eps**rep.es_exponent
    return rep


def dry_limit_exponent(T, epsilon, p: ThermoParams, eps_ref: float = 0.1):
    """Dominant Clausius-Clapeyron exponent under the O(1) scaling of R_d/c_pd.

    L_ref/(R_v T_ref) = (c_pd/R_v) * L / epsilon with L fitted at ``eps_ref``;
    (T - T_ref)/T stays O(1), so the exponent grows like 1/epsilon.
    """
    L_fit = p.L_ref / (p.c_pd * p.T_ref) * eps_ref
    return (p.c_pd / p.R_v) * L_fit / np.asarray(epsilon, dtype=float) * (T - p.T_ref) / T


def dry_limit_decay_demo(T: float, epsilons, p: ThermoParams, eps_ref: float = 0.1) -> list:
    """Exponent sequence showing e_s ~ exp(-c/epsilon) below T_ref.

    Returns one dict per epsilon with the exponent and exp(exponent), the
    saturation vapour pressure relative to es_ref.
    """
    if not T < p.T_ref:
        raise DomainError("the dry-limit expansion of e_s has no limit for T >= T_ref")
    _check_temperature(T)
    out = []
    for eps in epsilons:
        ex = float(dry_limit_exponent(T, eps, p, eps_ref))
        out.append({"epsilon": float(eps), "exponent": ex, "es_over_es_ref": math.exp(ex)})
    return out


def with_overrides(p: ThermoParams, **kw) -> ThermoParams:
    return replace(p, **kw)
