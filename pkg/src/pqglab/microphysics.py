"""Kessler-type warm-rain closures, saturation adjustment and rain columns.

Mixing ratios follow the leading-order PQG closures: ``q_v`` and ``q_vs`` may be
signed perturbations, ``q_c`` and ``q_r`` are non-negative.  Any array shapes
that broadcast together are accepted.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, IntegrationError, RainColumnError


@dataclass(frozen=True)
class MicrophysicsParams:
    C_ev: float = 1.0
    C_cn: float = 1.0
    C_cd: float = 10.0
    C_ac: float = 1.0e-3
    C_cr: float = 2.2
    q_cn: float = 1.0e-3
    q_ac: float = 1.0e-3
    V_r: float = 5.0
    n: int = 1
    epsilon: float = 0.1
    fast_scaling: bool = False

    def __post_init__(self):
        for name in ("C_ev", "C_cn", "C_cd", "C_ac", "C_cr", "q_cn", "q_ac"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ConfigError("must be finite and non-negative", key=f"microphysics.{name}")
        if not (np.isfinite(self.V_r) and self.V_r > 0.0):
            raise ConfigError("terminal velocity must be positive", key="microphysics.V_r")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("rescaling exponent must be an integer >= 1", key="microphysics.n")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("must lie in (0, 1)", key="microphysics.epsilon")

    def rescaled(self) -> "MicrophysicsParams":
        """Nucleation and condensation rates multiplied by epsilon**-n."""
        s = self.epsilon ** (-self.n)
        return MicrophysicsParams(**{**asdict(self), "C_cn": self.C_cn * s, "C_cd": self.C_cd * s,
                                     "fast_scaling": False})

    def effective(self) -> "MicrophysicsParams":
        return self.rescaled() if self.fast_scaling else self

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class MoistureCell:
    q_v: np.ndarray
    q_c: np.ndarray
    q_r: np.ndarray
    q_vs: np.ndarray

    def __post_init__(self):
        self.q_v = np.asarray(self.q_v, dtype=float)
        self.q_c = np.asarray(self.q_c, dtype=float)
        self.q_r = np.asarray(self.q_r, dtype=float)
        self.q_vs = np.asarray(self.q_vs, dtype=float)
        if np.any(self.q_c < 0) or np.any(self.q_r < 0):
            raise ValueError("cloud and rain mixing ratios must be non-negative")

    @property
    def q_t(self):
        return self.q_v + self.q_c + self.q_r


@dataclass
class Sources:
    S_ev: np.ndarray
    S_cd: np.ndarray
    S_ac: np.ndarray
    S_cr: np.ndarray


def _pos(x):
    return np.maximum(x, 0.0)


def source_terms(cell: MoistureCell, mp: MicrophysicsParams) -> Sources:
    """Evaporation, condensation/nucleation, autoconversion and collection rates.

    The condensation term carries no positive part on its cloud-water branch,
    so ``S_cd`` turns negative in subsaturated cloudy air.
    """
    q_v, q_c, q_r, q_vs = cell.q_v, cell.q_c, cell.q_r, cell.q_vs
    excess = q_v - q_vs
    return Sources(
        S_ev=mp.C_ev * _pos(-excess) * q_r,
        S_cd=mp.C_cn * _pos(excess) * mp.q_cn + mp.C_cd * excess * q_c,
        S_ac=mp.C_ac * _pos(q_c - mp.q_ac),
        S_cr=mp.C_cr * q_c * q_r,
    )


def _complement(total, part, max_nudge=4):
    """A float c with part + c == total in floating point, starting from total - part.

    Rounding of the subtraction can leave part + (total - part) one ulp away
    from total; stepping c by single ulps restores the identity.
    """
    total = np.asarray(total, dtype=float)
    part = np.asarray(part, dtype=float)
    c = total - part
    for _ in range(max_nudge):
        s = part + c
        low, high = s < total, s > total
        if not (low.any() or high.any()):
            break
        c = np.where(low, np.nextafter(c, np.inf), np.where(high, np.nextafter(c, -np.inf), c))
    return c


def saturation_adjust(q_t, q_r, q_vs):
    """Instantaneous-condensation split of non-rain water into vapour and cloud.

    Returns ``(q_v, q_c)`` with q_v = min(q_vs, q_t - q_r) and
    q_c = max(q_t - q_r - q_vs, 0).  Complementarity and the interface
    q_t - q_r == q_vs are exact.  The budget ``q_v + q_c + q_r == q_t`` holds
    bit for bit whenever a double with that property exists; when q_t - q_r
    falls exactly halfway between two doubles, round-to-even can make every
    candidate miss q_t, and the budget is then off by one ulp of q_t.
    """
    q_t = np.asarray(q_t, dtype=float)
    q_r = np.asarray(q_r, dtype=float)
    q_vs = np.asarray(q_vs, dtype=float)
    q_t, q_r, q_vs = np.broadcast_arrays(q_t, q_r, q_vs)
    q_nr = _complement(q_t, q_r)
    q_v = np.minimum(q_vs, q_nr)
    q_c = np.maximum(_complement(q_nr, q_v), 0.0)
    return q_v, q_c


# ---------------------------------------------------------------------------
# 0-D relaxation towards the fast-condensation limit


@dataclass
class RelaxationResult:
    t: np.ndarray  # (nt,)
    q_v: np.ndarray  # (nt, ncell)
    q_c: np.ndarray
    q_r: np.ndarray
    q_vs: np.ndarray  # (ncell,)
    nfev: int

    @property
    def end(self) -> MoistureCell:
        return MoistureCell(self.q_v[-1], np.maximum(self.q_c[-1], 0.0),
                            np.maximum(self.q_r[-1], 0.0), self.q_vs)

    def adjustment_error(self) -> float:
        """Max distance of the end state from saturation_adjust of its own q_t."""
        qv, qc, qr = self.q_v[-1], self.q_c[-1], self.q_r[-1]
        qv_star, qc_star = saturation_adjust(qv + qc + qr, qr, self.q_vs)
        return float(max(np.max(np.abs(qv - qv_star)), np.max(np.abs(qc - qc_star))))


def column_relaxation(initial: MoistureCell, mp: MicrophysicsParams, t_end: float,
                      n_out: int = 201, rtol: float = 1e-8, atol: float = 1e-10,
                      method: str = "RK45") -> RelaxationResult:
    """Integrate the moisture budget of independent cells with transport switched off.

    Nucleation and condensation rates are scaled by ``epsilon**-n``.
    """
    fast = mp.rescaled()
    q_vs = np.atleast_1d(initial.q_vs).astype(float)
    y0 = np.concatenate([np.atleast_1d(initial.q_v), np.atleast_1d(initial.q_c),
                         np.atleast_1d(initial.q_r)]).astype(float)
    m = q_vs.size
    if y0.size != 3 * m:
        raise ValueError("all moisture fields of the initial profile must have the same size")

    def rhs(_t, y):
        qv, qc, qr = y[:m], y[m:2 * m], y[2 * m:]
        excess = qv - q_vs
        s_ev = fast.C_ev * _pos(-excess) * _pos(qr)
        s_cd = fast.C_cn * _pos(excess) * fast.q_cn + fast.C_cd * excess * _pos(qc)
        s_ac = fast.C_ac * _pos(qc - fast.q_ac)
        s_cr = fast.C_cr * _pos(qc) * _pos(qr)
        return np.concatenate([s_ev - s_cd, s_cd - s_ac - s_cr, s_ac + s_cr - s_ev])

    t_eval = np.linspace(0.0, t_end, n_out) if t_end > 0 else np.array([0.0])
    if t_end <= 0:
        y = y0[:, None]
        return RelaxationResult(t_eval, y[:m].T, y[m:2 * m].T, y[2 * m:].T, q_vs, 0)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method=method, t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"column relaxation failed: {sol.message}")
    y = sol.y
    return RelaxationResult(sol.t, y[:m].T, y[m:2 * m].T, y[2 * m:].T, q_vs, sol.nfev)


# ---------------------------------------------------------------------------
# diagnostic rain column


def rain_column_solve(q_c, q_v, q_vs, rho_bar, dz: float, mp: MicrophysicsParams):
    """Rain mixing ratio from the steady sedimentation balance.

    Solves d(rho V_r q_r)/dz = -rho (S_ac + S_cr - S_ev) downward from q_r = 0 at
    the top level.  Profiles have the vertical axis first (index 0 = bottom);
    trailing axes are independent columns.  Each level is the trapezoidal rule over
    one cell, linear in the unknown q_r and solved in closed form (second order).
    Where evaporation is too strong for the explicit half of the trapezoid to
    stay non-negative, that level treats evaporation implicitly at the lower
    level instead, so q_r >= 0 always.
    """
    q_c = np.asarray(q_c, dtype=float)
    q_v = np.asarray(q_v, dtype=float)
    q_vs = np.asarray(q_vs, dtype=float)
    shape = np.broadcast_shapes(q_c.shape, q_v.shape, q_vs.shape)
    q_c, q_v, q_vs = (np.broadcast_to(a, shape) for a in (q_c, q_v, q_vs))
    rho = np.asarray(rho_bar, dtype=float).reshape((shape[0],) + (1,) * (len(shape) - 1))
    nz = shape[0]
    V = mp.V_r
    s_ac = mp.C_ac * _pos(q_c - mp.q_ac)
    gain = mp.C_cr * q_c  # collection rate per unit q_r
    loss = mp.C_ev * _pos(q_vs - q_v)  # evaporation rate per unit q_r

    q_r = np.zeros(shape)
    h = 0.5 * dz
    for k in range(nz - 2, -1, -1):
        kp = k + 1
        base = rho[kp] * V * q_r[kp] + h * rho[kp] * s_ac[kp] + h * rho[k] * s_ac[k]
        # trapezoid for all terms while the explicit upper-level part stays
        # non-negative, otherwise evaporation fully implicit at the lower level
        trap = V + h * (gain[kp] - loss[kp]) >= 0.0
        numer = np.where(trap, base + h * rho[kp] * (gain[kp] - loss[kp]) * q_r[kp],
                         base + h * rho[kp] * gain[kp] * q_r[kp])
        denom = np.where(trap, rho[k] * (V + h * (loss[k] - gain[k])),
                         rho[k] * (V + dz * loss[k] - h * gain[k]))
        if np.any(denom <= 0.0):
            raise RainColumnError("collection growth exceeds sedimentation; refine the vertical grid", k)
        q_r[k] = numer / denom
        if not np.all(np.isfinite(q_r[k])):
            raise RainColumnError("non-finite rain mixing ratio", k)
    return q_r
