"""Shared model definitions for the autonomous Fermi accelerator.

A light particle of mass m bounces elastically between a fixed hard wall at
the origin and a heavy wall of mass M that rides on a spring (stiffness k,
rest position R0).  The total energy is conserved; nothing drives the system
from outside.  This module holds the parameter set, the elastic-collision
algebra, the energy functional and the wedge coordinate map that turns the
two-body line problem into a single particle in a 2D wedge billiard.

Units are chosen as M = 1, k = 1 (so the wall frequency is 1) and hbar = 0.1
by default; everything is configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PhysParams:
    """Model parameters. Immutable; derived quantities are properties.

    eta is the particle/wall mass ratio m/M and must lie in (0, 1): the
    whole setup assumes a wall much heavier than the particle.
    """

    eta: float = 0.01
    M: float = 1.0
    k: float = 1.0
    hbar: float = 0.1
    R0: float = 5.0

    def __post_init__(self) -> None:
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")
        for name in ("M", "k", "hbar", "R0"):
            value = getattr(self, name)
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")

    @property
    def m(self) -> float:
        """Particle mass eta * M."""
        return self.eta * self.M

    @property
    def omega(self) -> float:
        """Wall oscillation frequency sqrt(k/M)."""
        return math.sqrt(self.k / self.M)

    @property
    def theta(self) -> float:
        """Wedge half-opening angle arctan(sqrt(eta)), in (0, pi/4)."""
        return math.atan(math.sqrt(self.eta))

    @property
    def tan_theta(self) -> float:
        """Slope of the wedge edge, tan(theta) = sqrt(eta)."""
        return math.sqrt(self.eta)


@dataclass
class ClassicalState:
    """Instantaneous phase of the pair: wall (R, P) and particle (r, p)."""

    t: float
    R: float
    P: float
    r: float
    p: float

    def copy(self) -> "ClassicalState":
        return ClassicalState(self.t, self.R, self.P, self.r, self.p)


def total_energy(state: ClassicalState, params: PhysParams) -> float:
    """Conserved energy: wall kinetic + particle kinetic + spring potential."""
    return (
        state.P**2 / (2.0 * params.M)
        + state.p**2 / (2.0 * params.m)
        + 0.5 * params.k * (state.R - params.R0) ** 2
    )


def elastic_collision(v: float, V: float, eta: float) -> tuple[float, float]:
    """Post-collision velocities (v', V') of particle and wall.

    Momentum m*v + M*V and kinetic energy are conserved identically; the
    relative velocity reverses sign, v' - V' = -(v - V).
    """
    v_out = ((eta - 1.0) * v + 2.0 * V) / (eta + 1.0)
    V_out = ((1.0 - eta) * V + 2.0 * eta * v) / (1.0 + eta)
    return v_out, V_out


def to_wedge(R: float, r: float, params: PhysParams) -> tuple[float, float]:
    """Map the physical pair (R, r) to wedge coordinates (x, y) = (R, sqrt(eta)*r).

    The confinement strip 0 <= r <= R becomes the wedge 0 <= y <= tan(theta)*x,
    and in the new coordinates both kinetic terms carry the wall mass M.
    """
    if r < 0.0 or R < 0.0:
        raise ValueError(f"coordinates must be non-negative, got R={R}, r={r}")
    if r > R:
        raise ValueError(f"particle outside the wall gap: r={r} > R={R}")
    return R, params.tan_theta * r


def from_wedge(x: float, y: float, params: PhysParams) -> tuple[float, float]:
    """Inverse of :func:`to_wedge`."""
    if x < 0.0 or y < 0.0:
        raise ValueError(f"coordinates must be non-negative, got x={x}, y={y}")
    r = y / params.tan_theta
    if y > params.tan_theta * x * (1.0 + 1e-14) + 1e-300:
        raise ValueError(f"point above the wedge edge: y={y} > tan(theta)*x={params.tan_theta * x}")
    return x, min(r, x)
