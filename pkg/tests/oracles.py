"""Independent reference solvers used by the tests.

Nothing here calls the package's inversion code: operators are assembled as
dense matrices from DFT differentiation matrices and the finite-volume
stencil written out directly.
"""
import numpy as np
import scipy.linalg as sla


def dft_second_derivative(n, length):
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    eye = np.eye(n)
    return np.real(np.fft.ifft(-(k**2)[:, None] * np.fft.fft(eye, axis=0), axis=0))


class DenseFastSystem:
    """The discrete fast-condensation inversion written out cell by cell."""

    def __init__(self, bg, tp, grid):
        self.grid, self.tp, self.bg = grid, tp, bg
        nz, ny, nx = grid.nz, grid.ny, grid.nx
        self.D2x = dft_second_derivative(nx, grid.Lx)
        self.D2y = dft_second_derivative(ny, grid.Ly)
        self.w = np.full(nz + 1, grid.dz)
        self.w[[0, -1]] = grid.dz / 2
        rho, gam = bg.rho_bar, bg.dtheta_e_dz
        half = lambda a: (a[1:] + a[:-1]) / 2  # noqa: E731
        self.r_h = half(rho / gam)  # rho/Gamma_e on half levels
        self.c1_h, self.c2_h = half(bg.coeff_c1), half(bg.coeff_c2)
        self.s_h = 1.0 + bg.L_c * half(bg.dqvs_dtheta)
        self.rw = rho * self.w

    def theta_half(self, phi):
        return (phi[1:] - phi[:-1]) / self.grid.dz * self.tp.theta_ref / self.tp.g

    def theta_e_half(self, phi, M):
        th = self.theta_half(phi)
        Mh = (M[1:] + M[:-1]) / 2
        sat = self.s_h[:, None, None] * th
        unsat = self.c1_h[:, None, None] * th + self.c2_h[:, None, None] * Mh
        return np.minimum(sat, unsat), sat - unsat

    def apply(self, phi, M):
        """Nonlinear left-hand side with theta_bc = 0 at both lids."""
        f, bg = self.tp.f, self.bg
        lap = np.einsum("ij,kjx->kix", self.D2y, phi) + np.einsum("ij,kyj->kyi", self.D2x, phi)
        te, _ = self.theta_e_half(phi, M)
        G = self.r_h[:, None, None] * te
        nz = self.grid.nz
        lid = []
        for k in (0, nz):
            unsat = bg.coeff_c2[k] * M[k]  # theta = 0 on the lid
            lid.append(bg.rho_bar[k] / bg.dtheta_e_dz[k] * np.minimum(0.0, unsat))
        Gf = np.concatenate([lid[0][None], G, lid[1][None]])
        div = f * (Gf[1:] - Gf[:-1]) / self.rw[:, None, None]
        return lap / f + div

    def linear_matrix(self, coeff_half):
        """Dense matrix of the homogeneous linear operator with flux rho/Gamma_e * coeff * theta."""
        g, nz, ny, nx = self.grid, self.grid.nz, self.grid.ny, self.grid.nx
        f = self.tp.f
        K = self.r_h * coeff_half * self.tp.theta_ref / self.tp.g / g.dz
        V = np.zeros((nz + 1, nz + 1))
        for j in range(nz):  # half level j between nodes j and j+1
            for k, sgn in ((j, 1.0), (j + 1, -1.0)):
                c = sgn * f * K[j] / self.rw[k]
                V[k, j + 1] += c
                V[k, j] -= c
        lap = np.kron(self.D2y, np.eye(nx)) + np.kron(np.eye(ny), self.D2x)
        return np.kron(np.eye(nz + 1), lap) / f + np.kron(V, np.eye(ny * nx))

    def solve(self, pv, M, tol=1e-14, max_iter=2000):
        """Damped fixed point phi += L^-1 (rhs - F(phi)) with one LU of L."""
        shape = self.grid.shape
        n = int(np.prod(shape))
        kref = np.maximum(self.s_h, self.c1_h)
        L = self.linear_matrix(kref)
        gauge = np.repeat(self.w, shape[1] * shape[2])
        gauge /= gauge.sum()
        lu = sla.lu_factor(L - np.outer(np.ones(n), gauge))
        rwv = self.rw[:, None, None] * np.ones(shape)
        wmean = lambda a: np.sum(rwv * a) / np.sum(rwv)  # noqa: E731
        rhs = pv - (wmean(pv) - wmean(self.apply(np.zeros(shape), M)))
        ratio = float(np.min(np.minimum(self.s_h, self.c1_h) / kref))
        omega = 2.0 / (1.0 + ratio)
        phi = np.zeros(shape)
        scale = np.max(np.abs(rhs))
        for it in range(max_iter):
            r = rhs - self.apply(phi, M)
            r -= wmean(r)
            if np.max(np.abs(r)) <= tol * scale:
                return phi, it
            phi = phi + omega * sla.lu_solve(lu, r.ravel()).reshape(shape)
        raise RuntimeError("dense fixed point did not converge")
