"""Doubly periodic, vertically bounded grid and spectral helpers.

Fields are numpy arrays shaped ``(nz + 1, ny, nx)``: vertical levels
``z_k = k * H / nz`` including both lids, x varying fastest.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int
    Lx: float
    Ly: float
    H: float

    def __post_init__(self):
        if not (_is_pow2(self.nx) and _is_pow2(self.ny)) or self.nx < 4 or self.ny < 4:
            raise ConfigError("horizontal sizes must be powers of two >= 4", key="grid")
        if self.nz < 4:
            raise ConfigError("need at least 4 vertical cells", key="grid.nz")
        if not (self.Lx > 0 and self.Ly > 0 and self.H > 0):
            raise ConfigError("domain lengths must be positive", key="grid")

    @property
    def shape(self):
        return (self.nz + 1, self.ny, self.nx)

    @property
    def dx(self):
        return self.Lx / self.nx

    @property
    def dy(self):
        return self.Ly / self.ny

    @property
    def dz(self):
        return self.H / self.nz

    @cached_property
    def x(self):
        return np.arange(self.nx) * self.dx

    @cached_property
    def y(self):
        return np.arange(self.ny) * self.dy

    @cached_property
    def z(self):
        return np.arange(self.nz + 1) * self.dz

    @cached_property
    def kx(self):
        """x wavenumbers for rfft2, broadcastable to (ny, nx//2+1)."""
        return (2 * np.pi * np.fft.rfftfreq(self.nx, d=self.dx))[None, :]

    @cached_property
    def ky(self):
        return (2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy))[:, None]

    @cached_property
    def kx_odd(self):
        """kx with the Nyquist column zeroed, for odd-order derivatives."""
        k = self.kx.copy()
        k[:, -1] = 0.0
        return k

    @cached_property
    def ky_odd(self):
        k = self.ky.copy()
        k[self.ny // 2] = 0.0
        return k

    @cached_property
    def ksq(self):
        return self.kx**2 + self.ky**2

    @cached_property
    def dealias(self):
        """2/3-rule mask in spectral space."""
        kxmax = np.pi / self.dx
        kymax = np.pi / self.dy
        return (np.abs(self.kx) < 2.0 / 3.0 * kxmax) & (np.abs(self.ky) < 2.0 / 3.0 * kymax)

    @cached_property
    def trapz_weights(self):
        """Vertical trapezoid weights (dz, with dz/2 at the lids)."""
        w = np.full(self.nz + 1, self.dz)
        w[0] = w[-1] = 0.5 * self.dz
        return w

    def mesh(self):
        """Broadcastable (z, y, x) coordinate arrays."""
        return self.z[:, None, None], self.y[None, :, None], self.x[None, None, :]

    def fft(self, a):
        return np.fft.rfft2(a, axes=(-2, -1))

    def ifft(self, a_hat):
        return np.fft.irfft2(a_hat, s=(self.ny, self.nx), axes=(-2, -1))

    def ddx(self, a):
        return self.ifft(1j * self.kx_odd * self.fft(a))

    def ddy(self, a):
        return self.ifft(1j * self.ky_odd * self.fft(a))

    def laplacian(self, a):
        return self.ifft(-self.ksq * self.fft(a))

    def ddz(self, a):
        """Second-order vertical derivative, one-sided second order at the lids.

        Written in difference form so z-independent columns give exactly zero.
        """
        a = np.asarray(a, dtype=float)
        out = np.empty_like(a)
        h2 = 2.0 * self.dz
        out[1:-1] = (a[2:] - a[:-2]) / h2
        out[0] = (4.0 * (a[1] - a[0]) - (a[2] - a[0])) / h2
        out[-1] = (4.0 * (a[-1] - a[-2]) - (a[-1] - a[-3])) / h2
        return out

    def volume_mean(self, a, weight=None):
        """Trapezoid-weighted domain mean, optionally with a vertical weight profile."""
        w = self.trapz_weights if weight is None else self.trapz_weights * weight
        return float(np.sum(w[:, None, None] * a) / (np.sum(w) * self.nx * self.ny))
