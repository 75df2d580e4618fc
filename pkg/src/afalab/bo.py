"""Born-Oppenheimer reduction: frozen-wall particle channels and the 1D wall problem.

Freezing the wall at separation R gives particle-in-a-box channels
phi_n(r, R) = sqrt(2/R) sin(n pi r / R) with energies
eps_n(R) = (hbar n pi)^2 / (2 m R^2).  The channel energy acts as a repulsive
pressure on the wall, so to first order in the mass ratio the wall
wavefunction xi_n(R) solves a stationary 1D problem

    -(hbar^2 / 2M) xi'' + [k (R - R0)^2 / 2 + eps_n(R)] xi = E xi

discretized here with second-order central differences on a uniform grid with
Dirichlet ends.  The diagonal correction term <phi_n | d^2/dR^2 phi_n> is
dropped at this order; a flag puts it back for experiments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .core import PhysParams
from .mesh import default_x_cut, default_x_max


class ResolutionWarning(UserWarning):
    """The radial grid underresolves the local de Broglie wavelength."""


@dataclass(frozen=True)
class ChannelBasis:
    """One frozen-wall channel: evaluator and channel energy."""

    n: int
    params: PhysParams

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("channel index must be >= 1")

    def phi(self, r, R):
        return np.sqrt(2.0 / R) * np.sin(self.n * np.pi * np.asarray(r) / R)

    def dphi_dR(self, r, R):
        r = np.asarray(r)
        s = np.sin(self.n * np.pi * r / R)
        c = np.cos(self.n * np.pi * r / R)
        return -np.sqrt(2.0 / R) * (s / (2.0 * R) + (self.n * np.pi * r / R**2) * c)

    def energy(self, R):
        return (self.params.hbar * self.n * np.pi) ** 2 / (2.0 * self.params.m * np.asarray(R) ** 2)


def channel_energy(n: int, R, params: PhysParams):
    return (params.hbar * n * np.pi) ** 2 / (2.0 * params.m * np.asarray(R) ** 2)


def effective_potential(n: int, R, params: PhysParams):
    """Wall potential in channel n: spring plus the repulsive channel pressure."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0.0):
        raise ValueError("R must be positive")
    return 0.5 * params.k * (R - params.R0) ** 2 + channel_energy(n, R, params)


def diagonal_correction(n: int, R, params: PhysParams):
    """Optional adiabatic diagonal term hbar^2/(2M) <d_R phi_n | d_R phi_n>."""
    R = np.asarray(R, dtype=float)
    return params.hbar**2 / (2.0 * params.M) * ((n * np.pi) ** 2 / 3.0 + 0.25) / R**2


def veff_minimum(n: int, params: PhysParams) -> tuple[float, float]:
    """(R*, V_eff(R*)) of the channel-n well; the minimizer sits beyond R0."""
    c2 = (params.hbar * n * np.pi) ** 2 / params.m  # = 2 m-normalized pressure constant

    def slope(R):
        return params.k * (R - params.R0) - c2 / R**3

    hi = params.R0 + 1.0
    while slope(hi) < 0.0:
        hi *= 1.5
    r_star = brentq(slope, params.R0, hi, xtol=1e-13)
    return r_star, float(effective_potential(n, r_star, params))


def open_channels(params: PhysParams, e_target: float, margin: float = 0.0) -> list[int]:
    """Channels whose effective well dips below e_target - margin."""
    out = []
    n = 1
    while True:
        _, vmin = veff_minimum(n, params)
        if vmin > e_target - margin:
            break
        out.append(n)
        n += 1
    return out


@dataclass
class BOEigenPair:
    n: int                  # channel
    nu: int                 # vibrational quantum number (= node count of xi)
    E: float
    R_grid: np.ndarray
    xi: np.ndarray          # unit L2 norm on the grid, zero at the ends


def default_grid(params: PhysParams, e_target: float = 12.0,
                 n_points: int = 4000) -> tuple[float, float, int]:
    return default_x_cut(params, e_target), default_x_max(params, e_target), n_points


def solve_channel(
    n: int,
    params: PhysParams,
    grid: tuple[float, float, int] | None = None,
    e_target: float = 12.0,
    channel_term: bool = True,
    diagonal_term: bool = False,
) -> list[BOEigenPair]:
    """Bound levels of the channel-n wall problem, ascending, below V_eff(R_max).

    channel_term=False is a test hook that drops the pressure term and leaves
    the bare harmonic well; diagonal_term=True adds the adiabatic diagonal
    correction (off at the working order).
    """
    if grid is None:
        grid = default_grid(params, e_target)
    r_min, r_max, n_points = grid
    if not (0.0 < r_min < params.R0 < r_max):
        raise ValueError(f"need 0 < R_min < R0 < R_max, got ({r_min}, {params.R0}, {r_max})")
    if n_points < 200:
        raise ValueError("n_points must be at least 200")

    R = np.linspace(r_min, r_max, n_points)
    dR = R[1] - R[0]
    V = 0.5 * params.k * (R - params.R0) ** 2
    if channel_term:
        V = V + channel_energy(n, R, params)
    if diagonal_term:
        V = V + diagonal_correction(n, R, params)

    e_cap = float(V[-1])
    lam_min = 2.0 * math.pi * params.hbar / math.sqrt(
        2.0 * params.M * max(e_target - V.min(), params.hbar * params.omega)
    )
    if dR > lam_min / 10.0:
        warnings.warn(
            f"grid step {dR:.2e} coarser than a tenth of the local de Broglie "
            f"wavelength {lam_min:.2e}",
            ResolutionWarning,
        )

    t = params.hbar**2 / (2.0 * params.M * dR**2)
    diag = 2.0 * t + V[1:-1]
    off = np.full(n_points - 3, -t)
    vals, vecs = eigh_tridiagonal(diag, off, select="v", select_range=(float(V.min()) - 1.0, e_cap))
    pairs = []
    for j in range(len(vals)):
        xi = np.zeros(n_points)
        xi[1:-1] = vecs[:, j]
        xi /= math.sqrt(np.sum(xi**2) * dR)
        if xi[np.argmax(np.abs(xi))] < 0:
            xi = -xi
        pairs.append(BOEigenPair(n=n, nu=j, E=float(vals[j]), R_grid=R, xi=xi))
    return pairs


@dataclass
class BOWavefunction:
    """Single-term product state on the wedge: xi_n(x) * channel mode in y."""

    pair: BOEigenPair
    params: PhysParams

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = self.params.tan_theta
        width = s * x
        if np.any((y < -1e-12) | (y > width * (1.0 + 1e-9) + 1e-12)):
            raise ValueError("evaluation point outside the wedge")
        xi = np.interp(x, self.pair.R_grid, self.pair.xi, left=0.0, right=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            chi = np.sqrt(2.0 / width) * np.sin(self.pair.n * np.pi * np.clip(y / width, 0.0, 1.0))
        chi = np.where(width > 0.0, chi, 0.0)
        return xi * chi

    def wall_profile(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pair.R_grid, self.pair.xi


def bo_wavefunction(pair: BOEigenPair, params: PhysParams) -> BOWavefunction:
    """Wedge-coordinate product state for direct comparison with exact modes.

    The y-factor is the frozen-wall channel mode in the local box of width
    x*tan(theta), so the product is normalized on the wedge whenever xi is
    normalized on its grid.
    """
    return BOWavefunction(pair=pair, params=params)


def bo_level_table(
    params: PhysParams,
    e_target: float,
    window: float,
    channels: list[int] | None = None,
    grid: tuple[float, float, int] | None = None,
) -> list[BOEigenPair]:
    """All BO levels within +-window of e_target across the open channels."""
    if channels is None:
        channels = open_channels(params, e_target + window)
    table = []
    for n in channels:
        for pair in solve_channel(n, params, grid=grid, e_target=e_target):
            if abs(pair.E - e_target) <= window:
                table.append(pair)
    return sorted(table, key=lambda p: p.E)
