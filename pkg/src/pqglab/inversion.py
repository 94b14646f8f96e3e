"""Potential-vorticity inversion for dry QG and both PQG variants.

Discretisation: Fourier in the periodic horizontal directions, second-order
finite volumes in the vertical.  Unknowns live on the levels ``z_k``; the
vertical flux ``rho_bar * theta_e / (d theta_e_bar/dz)`` lives on the half
levels between them, and the lids close the outermost half cells with a
prescribed boundary potential temperature.  All routines take and return the
periodic anomaly ``q = PV - beta*y``; ``beta*y`` itself is never stored.

With horizontally uniform coefficients every horizontal wavenumber gives an
independent tridiagonal system.  The fast-condensation inversion selects
branch coefficients per half cell, which couples wavenumbers; those linear
solves use preconditioned conjugate gradients in the ``rho_bar``-weighted
inner product with the separable solver as preconditioner.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .background import BackgroundState
from .errors import InversionNotConverged, SolverError
from .grid import Grid
from .thermo import ThermoParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InversionOptions:
    max_iter: int = 50
    mask_tol: float = 1e-12
    cg_rtol: float = 1e-13
    cg_maxiter: int = 500
    theta_bc: tuple = (0.0, 0.0)  # boundary theta perturbation at bottom, top lid


@dataclass
class FastInversionResult:
    phi: np.ndarray
    mask: np.ndarray  # (nz, ny, nx) True = saturated half cell
    lid_mask: np.ndarray  # (2, ny, nx) branch selected at the lids
    iterations: int
    residual: float  # max |A(phi) - rhs| relative to max |rhs|
    cg_iterations: int


def _half(a):
    return 0.5 * (a[1:] + a[:-1])


def beta_y(grid: Grid, tp: ThermoParams):
    """The analytic planetary-vorticity field, broadcastable to the grid."""
    return tp.beta * grid.y[None, :, None]


class _Column:
    """Vertical coefficients of the discrete operator for one background."""

    def __init__(self, bg: BackgroundState, tp: ThermoParams, grid: Grid, n2=None):
        if bg.z.size != grid.nz + 1 or not np.isclose(bg.dz, grid.dz, rtol=1e-12):
            raise SolverError("background and grid vertical levels differ")
        self.grid = grid
        self.f = tp.f
        self.dz = grid.dz
        self.rho = bg.rho_bar
        self.w = grid.trapz_weights
        self.rw = self.rho * self.w
        n2_moist = tp.g * bg.dtheta_e_dz / tp.theta_ref
        self.n2_dry = bg.N2 if n2 is None else n2
        self.n2_moist = n2_moist
        self.k_dry = _half(self.rho / self.n2_dry)
        self.k_moist = _half(self.rho / n2_moist)
        self.rg = _half(self.rho / bg.dtheta_e_dz)
        self.c1 = _half(bg.coeff_c1)
        self.c2 = _half(bg.coeff_c2)
        self.sat_slope = 1.0 + bg.L_c * _half(bg.dqvs_dtheta)
        self.g_over_theta = tp.g / tp.theta_ref
        # lid data (bottom, top)
        self.lid_idx = (0, grid.nz)
        self.bg = bg
        self.tp = tp

    # -- assembly ------------------------------------------------------------

    def tridiag(self, kphi):
        """Off-diagonals of the vertical operator for half-level coefficients kphi."""
        nz = self.grid.nz
        scale = self.f / (self.rw * self.dz)
        lower = np.zeros(nz + 1)
        upper = np.zeros(nz + 1)
        lower[1:] = scale[1:] * kphi
        upper[:-1] = scale[:-1] * kphi
        return lower, upper

    def flux_divergence(self, gfull):
        """f/(rho w) * (G_{k+1/2} - G_{k-1/2}) for fluxes padded with lid values."""
        sh = (-1,) + (1,) * (gfull.ndim - 1)
        return (self.f / self.rw).reshape(sh) * (gfull[1:] - gfull[:-1])

    def pad(self, g_half, g_bot, g_top):
        shape = g_half.shape[1:] if g_half.ndim > 1 else ()
        bot = np.broadcast_to(g_bot, shape)[None]
        top = np.broadcast_to(g_top, shape)[None]
        return np.concatenate([bot, g_half, top], axis=0)

    def apply_homogeneous(self, phi, kphi):
        """Operator with zero lid fluxes and no affine terms; kphi (nz,) or (nz, ny, nx)."""
        if kphi.ndim == 1:
            kphi = kphi[:, None, None]
        dphi = (phi[1:] - phi[:-1]) / self.dz
        g = kphi * dphi
        zero = np.zeros(phi.shape[1:])
        return self.grid.laplacian(phi) / self.f + self.flux_divergence(self.pad(g, zero, zero))

    # -- separable solve -----------------------------------------------------

    def project(self, rhs):
        """Remove the rho-weighted mean, making the Neumann problem solvable."""
        mean = np.sum(self.rw[:, None, None] * rhs) / (np.sum(self.rw) * rhs.shape[1] * rhs.shape[2])
        return rhs - mean, float(mean)

    def solve_separable(self, rhs, kphi):
        """Solve the homogeneous problem with horizontally uniform kphi (nz,).

        ``rhs`` must already satisfy the compatibility condition.  The result
        has zero trapezoid-weighted volume mean.
        """
        grid = self.grid
        lower, upper = self.tridiag(kphi)
        rhat = grid.fft(rhs)
        ksq = grid.ksq.copy()
        ksq[0, 0] = 1.0
        diag = -(ksq / self.f)[None] - (lower + upper)[:, None, None]
        phat = _thomas(lower, diag, upper, rhat)
        # mean mode: pin phi_0, drop the (dependent) first equation
        r0 = rhat[:, 0, 0].real
        d0 = -(lower + upper)
        sol = np.zeros(grid.nz + 1)
        sol[1:] = _thomas(lower[1:], d0[1:], upper[1:], r0[1:])
        sol -= np.sum(self.w * sol) / np.sum(self.w)
        phat[:, 0, 0] = sol
        return grid.ifft(phat)

    # -- branch coefficients ---------------------------------------------------

    def lid_flux(self, k, theta_e_lid, n2):
        return (self.rho[k] / n2[k]) * self.g_over_theta * theta_e_lid


def _thomas(lower, diag, upper, rhs):
    """Batched tridiagonal solve along axis 0; trailing axes are independent systems."""
    n = rhs.shape[0]
    sh = (n,) + (1,) * (rhs.ndim - 1)
    lower = np.reshape(lower, sh)
    upper = np.reshape(upper, sh)
    diag = np.asarray(diag)
    dg = np.broadcast_to(diag.reshape(sh) if diag.ndim == 1 else diag, rhs.shape)
    dtype = np.result_type(dg, rhs)
    cp = np.empty(rhs.shape, dtype=dtype)
    dp = np.empty(rhs.shape, dtype=dtype)
    m = dg[0]
    if np.any(m == 0):
        raise SolverError("singular vertical operator")
    cp[0] = upper[0] / m
    dp[0] = rhs[0] / m
    for i in range(1, n):
        m = dg[i] - lower[i] * cp[i - 1]
        if np.any(m == 0):
            raise SolverError("singular vertical operator")
        cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
    x = np.empty_like(dp)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _theta_bc(opts: InversionOptions, grid: Grid):
    bot, top = opts.theta_bc
    shape = (grid.ny, grid.nx)
    return np.broadcast_to(np.asarray(bot, float), shape), np.broadcast_to(np.asarray(top, float), shape)


# ---------------------------------------------------------------------------
# public operators


def dry_coefficients(bg, tp, grid, n2=None):
    return _Column(bg, tp, grid, n2=n2).k_dry


def moist_coefficients(bg, tp, grid):
    col = _Column(bg, tp, grid)
    return col.k_moist * col.c1


def vertical_matrix(kphi, ksq: float, bg: BackgroundState, tp: ThermoParams, grid: Grid):
    """Dense matrix of the discrete operator for one horizontal wavenumber."""
    col = _Column(bg, tp, grid)
    lower, upper = col.tridiag(np.asarray(kphi, dtype=float))
    n = grid.nz + 1
    A = np.zeros((n, n))
    A[np.arange(n), np.arange(n)] = -ksq / tp.f - lower - upper
    A[np.arange(1, n), np.arange(n - 1)] = lower[1:]
    A[np.arange(n - 1), np.arange(1, n)] = upper[:-1]
    return A


def dry_operator_matrix(ksq, bg, tp, grid, n2=None):
    return vertical_matrix(dry_coefficients(bg, tp, grid, n2), ksq, bg, tp, grid)


def moist_operator_matrix(ksq, bg, tp, grid):
    return vertical_matrix(moist_coefficients(bg, tp, grid), ksq, bg, tp, grid)


def apply_dry(phi, bg, tp, grid, theta_bc=(0.0, 0.0), n2=None):
    """Left-hand side of the dry inversion applied to ``phi``."""
    col = _Column(bg, tp, grid, n2=n2)
    out = col.apply_homogeneous(phi, col.k_dry)
    bot, top = _theta_bc(InversionOptions(theta_bc=theta_bc), grid)
    lid = col.pad(np.zeros((grid.nz,) + bot.shape), col.lid_flux(0, bot, col.n2_dry),
                  col.lid_flux(grid.nz, top, col.n2_dry))
    return out + col.flux_divergence(lid)


def invert_dry(pv_anom, bg: BackgroundState, tp: ThermoParams, grid: Grid,
               theta_bc=(0.0, 0.0), n2=None):
    """Solve (1/f) Lap phi + (f/rho) d/dz(rho/N^2 dphi/dz) = PV - beta*y."""
    col = _Column(bg, tp, grid, n2=n2)
    if np.any(col.n2_dry <= 0):
        raise SolverError("N^2 must be positive for the dry inversion")
    bot, top = _theta_bc(InversionOptions(theta_bc=theta_bc), grid)
    lid = col.pad(np.zeros((grid.nz,) + bot.shape), col.lid_flux(0, bot, col.n2_dry),
                  col.lid_flux(grid.nz, top, col.n2_dry))
    rhs, _ = col.project(np.asarray(pv_anom, float) - col.flux_divergence(lid))
    return col.solve_separable(rhs, col.k_dry)


def _unsat_branch(col: _Column, M):
    """Half-level (kphi, kb) of theta_e = c1*theta + c2*M."""
    Mh = _half(M)
    kb = (col.rg * col.c2)[:, None, None] * Mh
    return col.k_moist * col.c1, kb


def _sat_branch(col: _Column):
    return col.k_moist * col.sat_slope


def _lid_theta_e(col: _Column, M, theta_bc, fast: bool):
    """theta_e at both lids; the min over branches in the fast variant."""
    out, sel = [], []
    for k, th in zip(col.lid_idx, theta_bc):
        unsat = col.bg.coeff_c1[k] * th + col.bg.coeff_c2[k] * M[k]
        if fast:
            sat = (1.0 + col.bg.L_c * col.bg.dqvs_dtheta[k]) * th
            s = (sat - unsat) < 0.0
            out.append(np.where(s, sat, unsat))
            sel.append(s)
        else:
            out.append(unsat)
            sel.append(np.zeros(unsat.shape, bool))
    return out, np.array(sel)


def apply_moist_linear(phi, M, bg, tp, grid, theta_bc=(0.0, 0.0)):
    col = _Column(bg, tp, grid)
    kphi, kb = _unsat_branch(col, M)
    bc = _theta_bc(InversionOptions(theta_bc=theta_bc), grid)
    (te_b, te_t), _ = _lid_theta_e(col, M, bc, fast=False)
    affine = col.pad(kb, col.lid_flux(0, te_b, col.n2_moist), col.lid_flux(grid.nz, te_t, col.n2_moist))
    return col.apply_homogeneous(phi, kphi) + col.flux_divergence(affine)


def invert_moist_linear(pv_anom, M, bg: BackgroundState, tp: ThermoParams, grid: Grid,
                        theta_bc=(0.0, 0.0)):
    """Linear PQG inversion with theta_e = c1*theta + c2*M."""
    col = _Column(bg, tp, grid)
    kphi, kb = _unsat_branch(col, np.asarray(M, float))
    bc = _theta_bc(InversionOptions(theta_bc=theta_bc), grid)
    (te_b, te_t), _ = _lid_theta_e(col, M, bc, fast=False)
    affine = col.pad(kb, col.lid_flux(0, te_b, col.n2_moist), col.lid_flux(grid.nz, te_t, col.n2_moist))
    rhs, _ = col.project(np.asarray(pv_anom, float) - col.flux_divergence(affine))
    return col.solve_separable(rhs, kphi)


def branch_gap(phi, M, bg, tp, grid):
    """theta_e(saturated branch) - theta_e(unsaturated branch) on half levels."""
    col = _Column(bg, tp, grid)
    theta_h = (phi[1:] - phi[:-1]) / grid.dz / col.g_over_theta
    return _gap(col, theta_h, _half(M))


def _gap(col, theta_h, Mh):
    sat = col.sat_slope[:, None, None] * theta_h
    unsat = col.c1[:, None, None] * theta_h + col.c2[:, None, None] * Mh
    return sat - unsat


def _pcg(col: _Column, rhs, kphi3, x0, rtol, maxiter):
    """Conjugate gradients for -A x = -rhs in the rho-weighted inner product."""
    rw = col.rw[:, None, None]

    def ip(a, b):
        return float(np.sum(rw * a * b))

    kpre = kphi3.mean(axis=(1, 2))

    def precond(r):
        r, _ = col.project(r)
        return -col.solve_separable(r, kpre)

    b = -rhs
    x = x0.copy()
    r = b + col.apply_homogeneous(x, kphi3)
    bnorm = np.sqrt(ip(b, b))
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0
    z = precond(r)
    p = z.copy()
    rz = ip(r, z)
    for it in range(1, maxiter + 1):
        Ap = -col.apply_homogeneous(p, kphi3)
        alpha = rz / ip(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.sqrt(ip(r, r)) <= rtol * bnorm:
            return x, it
        z = precond(r)
        rz_new = ip(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"conjugate gradients did not reach rtol={rtol} in {maxiter} iterations")


def _gauge(col, phi):
    w = col.w[:, None, None]
    return phi - np.sum(w * phi) / (np.sum(col.w) * phi.shape[1] * phi.shape[2])


def apply_moist_fast(phi, M, bg, tp, grid, theta_bc=(0.0, 0.0)):
    """Nonlinear left-hand side with theta_e = min(saturated, unsaturated branch)."""
    col = _Column(bg, tp, grid)
    M = np.asarray(M, float)
    dphi = (phi[1:] - phi[:-1]) / grid.dz
    kphi_u, kb_u = _unsat_branch(col, M)
    g_u = kphi_u[:, None, None] * dphi + kb_u
    g_s = _sat_branch(col)[:, None, None] * dphi
    bc = _theta_bc(InversionOptions(theta_bc=theta_bc), grid)
    (te_b, te_t), _ = _lid_theta_e(col, M, bc, fast=True)
    gfull = col.pad(np.minimum(g_s, g_u), col.lid_flux(0, te_b, col.n2_moist),
                    col.lid_flux(grid.nz, te_t, col.n2_moist))
    return grid.laplacian(phi) / tp.f + col.flux_divergence(gfull)


def invert_moist_fast(pv_anom, M, bg: BackgroundState, tp: ThermoParams, grid: Grid,
                      opts: InversionOptions = InversionOptions(), initial_mask=None,
                      ) -> FastInversionResult:
    """Free-boundary inversion of the fast-condensation PQG model by active sets.

    Starting from ``initial_mask`` (all unsaturated by default), each
    iteration fixes the branch per half cell, solves the resulting linear
    problem, and re-reads the mask from the branch gap of the solution.  A cell
    flips only when the gap exceeds ``opts.mask_tol``.  When the mask enters a
    two-cycle the flipping cells get the average of both branches for one
    iteration.
    """
    col = _Column(bg, tp, grid)
    M = np.asarray(M, float)
    pv_anom = np.asarray(pv_anom, float)
    bc = _theta_bc(opts, grid)
    (te_b, te_t), lid_sel = _lid_theta_e(col, M, bc, fast=True)
    lid_g = (col.lid_flux(0, te_b, col.n2_moist), col.lid_flux(grid.nz, te_t, col.n2_moist))

    kphi_u, kb_u = _unsat_branch(col, M)
    kphi_s = _sat_branch(col)
    ku3 = np.broadcast_to(kphi_u[:, None, None], kb_u.shape)
    ks3 = np.broadcast_to(kphi_s[:, None, None], kb_u.shape)
    rhs_raw = pv_anom - col.flux_divergence(col.pad(np.zeros_like(kb_u), *lid_g))
    rhs_raw, _ = col.project(rhs_raw)
    Mh = _half(M)

    mask = np.zeros(kb_u.shape, bool) if initial_mask is None else np.array(initial_mask, bool)
    prev = None
    blend = np.zeros_like(mask)
    phi = np.zeros(grid.shape)
    cg_total = 0
    lids_uniform_unsat = not lid_sel.any()
    lids_uniform_sat = lid_sel.all()
    for it in range(1, opts.max_iter + 1):
        kphi3 = np.where(mask, ks3, ku3)
        kb3 = np.where(mask, 0.0, kb_u)
        if blend.any():
            kphi3 = np.where(blend, 0.5 * (ks3 + ku3), kphi3)
            kb3 = np.where(blend, 0.5 * kb_u, kb3)
        rhs = rhs_raw - col.flux_divergence(col.pad(kb3, np.zeros_like(te_b), np.zeros_like(te_t)))
        if not blend.any() and not mask.any() and lids_uniform_unsat:
            # identical arithmetic to invert_moist_linear
            affine = col.pad(kb_u, *lid_g)
            r, _ = col.project(pv_anom - col.flux_divergence(affine))
            phi = col.solve_separable(r, kphi_u)
        elif not blend.any() and mask.all() and lids_uniform_sat:
            affine = col.pad(np.zeros_like(kb_u), *lid_g)
            r, _ = col.project(pv_anom - col.flux_divergence(affine))
            phi = col.solve_separable(r, kphi_s)
        else:
            phi, n_cg = _pcg(col, rhs, kphi3, phi, opts.cg_rtol, opts.cg_maxiter)
            phi = _gauge(col, phi)
            cg_total += n_cg
        theta_h = (phi[1:] - phi[:-1]) / grid.dz / col.g_over_theta
        gap = _gap(col, theta_h, Mh)
        new = mask.copy()
        new[gap < -opts.mask_tol] = True
        new[gap > opts.mask_tol] = False
        changed = int(np.count_nonzero(new != mask))
        log.info("active-set iter=%d changed=%d saturated=%d blend=%d", it, changed,
                 int(new.sum()), int(blend.sum()))
        if changed == 0 and not blend.any():
            res = _residual(phi, M, bg, tp, grid, opts, pv_anom, col)
            return FastInversionResult(phi, mask, lid_sel, it, res, cg_total)
        if prev is not None and np.array_equal(new, prev):
            blend = new != mask
        else:
            blend = np.zeros_like(mask)
        prev = mask
        mask = new
    raise InversionNotConverged("active-set iteration did not settle",
                                oscillating_cells=changed, iterations=opts.max_iter)


def _residual(phi, M, bg, tp, grid, opts, pv_anom, col):
    lhs = apply_moist_fast(phi, M, bg, tp, grid, opts.theta_bc)
    rhs, _ = col.project(pv_anom)
    # the projection removes only a constant; lid fluxes are data
    diff = lhs - rhs
    diff, _ = col.project(diff)
    scale = max(float(np.max(np.abs(pv_anom))), 1e-300)
    return float(np.max(np.abs(diff)) / scale)


# ---------------------------------------------------------------------------
# balance diagnostics


@dataclass
class Balances:
    u: np.ndarray
    v: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray


def diagnose_balances(phi, tp: ThermoParams, grid: Grid) -> Balances:
    """Geostrophic winds, relative vorticity and hydrostatic theta from phi."""
    phat = grid.fft(phi)
    kx, ky = grid.kx_odd, grid.ky_odd
    u = grid.ifft(-1j * ky * phat) / tp.f
    v = grid.ifft(1j * kx * phat) / tp.f
    zeta = grid.ifft(-(kx**2 + ky**2) * phat) / tp.f
    theta = grid.ddz(phi) * tp.theta_ref / tp.g
    return Balances(u, v, zeta, theta)


def invert_fixed_branches(pv_anom, M, mask, lid_mask, bg: BackgroundState, tp: ThermoParams,
                          grid: Grid, theta_bc=(0.0, 0.0), opts: InversionOptions = InversionOptions(),
                          x0=None):
    """Linear inversion with the branch per half cell (and lid) prescribed.

    Used by the lagged-mask stepping mode and to invert tendencies, where the
    branch structure of the current state is held fixed.
    """
    col = _Column(bg, tp, grid)
    M = np.asarray(M, float)
    mask = np.asarray(mask, bool)
    lid_mask = np.asarray(lid_mask, bool)
    bot, top = _theta_bc(InversionOptions(theta_bc=theta_bc), grid)
    lids = []
    for j, (k, th) in enumerate(zip(col.lid_idx, (bot, top))):
        unsat = bg.coeff_c1[k] * th + bg.coeff_c2[k] * M[k]
        sat = (1.0 + bg.L_c * bg.dqvs_dtheta[k]) * th
        lids.append(col.lid_flux(k, np.where(lid_mask[j], sat, unsat), col.n2_moist))
    kphi_u, kb_u = _unsat_branch(col, M)
    kphi3 = np.where(mask, _sat_branch(col)[:, None, None], kphi_u[:, None, None])
    kb3 = np.where(mask, 0.0, kb_u)
    rhs, _ = col.project(np.asarray(pv_anom, float) - col.flux_divergence(col.pad(kb3, *lids)))
    if not mask.any() and not lid_mask.any():
        return col.solve_separable(rhs, kphi_u)
    x0 = np.zeros(grid.shape) if x0 is None else x0
    phi, _ = _pcg(col, rhs, kphi3, x0, opts.cg_rtol, opts.cg_maxiter)
    return _gauge(col, phi)
