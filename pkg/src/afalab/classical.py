"""Event-driven classical dynamics of the autonomous Fermi accelerator.

Between collisions the motion is integrable: the wall follows its harmonic
swing analytically and the particle flies freely, so the only numerical task
is locating collision times.  The gap function R(t) - r(t) is scanned in
fractions of the wall period to bracket sign changes and each bracket is
polished with a bracketed root finder; there is no ODE integrator and hence
no drift source besides collision-time roundoff.

Collisions with the moving wall are the Poincare section events.  A "double
collision" (two successive moving-wall hits with no fixed-wall bounce in
between) is the chaos trigger: trajectories that never produce one stay on
an invariant torus.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .core import ClassicalState, PhysParams, elastic_collision, total_energy

#: Scan resolution for bracketing collision roots, in fractions of the wall period.
SCAN_STEPS_PER_PERIOD = 256

#: Search horizon in wall periods before declaring the state collision-free.
HORIZON_PERIODS = 10.0


class CollisionKind(Enum):
    MOVING_WALL = "MovingWall"
    FIXED_WALL = "FixedWall"


class NoRootInHorizon(RuntimeError):
    """No collision found within the search horizon (degenerate motionless state)."""


class GrazingContact(RuntimeError):
    """Tangential contacts kept recurring; the trajectory cannot make progress."""


class InsufficientSampling(UserWarning):
    """Too few section points for a meaningful area estimate."""


@dataclass
class CollisionEvent:
    t: float
    kind: CollisionKind
    state_after: ClassicalState
    double_flag: bool = False


@dataclass
class SectionPoint:
    """Phase recorded at a moving-wall collision (r = R implied)."""

    R: float
    P: float
    p: float

    def sphere_coords(self, params: PhysParams) -> tuple[float, float, float]:
        """Scaled coordinates (P/sqrt(2M), p/sqrt(2m), sqrt(k/2)(R-R0)).

        With this scaling the energy shell is literally a sphere of radius
        sqrt(E); the p-axis extremes are the poles, p ~ 0 the equator.
        """
        return (
            self.P / math.sqrt(2.0 * params.M),
            self.p / math.sqrt(2.0 * params.m),
            math.sqrt(params.k / 2.0) * (self.R - params.R0),
        )


def wall_free_motion(R: float, P: float, dt: float, params: PhysParams) -> tuple[float, float]:
    """Exact harmonic evolution of the wall over a time dt (no collisions)."""
    w = params.omega
    c, s = math.cos(w * dt), math.sin(w * dt)
    dR = R - params.R0
    return params.R0 + dR * c + (P / (params.M * w)) * s, P * c - params.M * w * dR * s


def _graze_speed(params: PhysParams, energy: float) -> float:
    # Relative approach speeds below this are tangencies, not collisions.
    return 1e-10 * math.sqrt(2.0 * max(energy, 1e-300) / params.m)


def next_collision(state: ClassicalState, params: PhysParams) -> CollisionEvent:
    """Locate the earliest collision after state.t and return the post-collision state.

    Raises NoRootInHorizon if neither wall is reached within HORIZON_PERIODS
    wall periods, and GrazingContact if only tangential contacts recur.
    """
    m, M = params.m, params.M
    period = 2.0 * math.pi / params.omega
    step = period / SCAN_STEPS_PER_PERIOD
    v = state.p / m
    eps_graze = _graze_speed(params, total_energy(state, params))

    def gap(dt: float) -> float:
        R, _ = wall_free_motion(state.R, state.P, dt, params)
        return R - (state.r + v * dt)

    def wall_speed(dt: float) -> float:
        _, P = wall_free_motion(state.R, state.P, dt, params)
        return P / M

    # Free flight to the fixed wall needs no root finding.
    dt_fixed = math.inf
    if state.p < 0.0 and state.r > 0.0:
        dt_fixed = state.r * m / (-state.p)

    horizon = min(dt_fixed, HORIZON_PERIODS * period)

    dt_moving = None
    t_lo, g_lo = 0.0, gap(0.0)
    if g_lo <= 0.0:
        # Fresh off the moving wall (gap == 0): the post-collision state is
        # separating, so step just inside the flight before bracketing.
        t_lo = step * 1e-9
        g_lo = gap(t_lo)
    skips = 0
    t = t_lo
    while t < horizon:
        t_next = min(t + step, horizon)
        g_next = gap(t_next)
        if g_lo > 0.0 >= g_next:
            root = brentq(gap, t, t_next, xtol=1e-13 * period, rtol=1e-15)
            if abs(wall_speed(root) - v) < eps_graze:
                # Tangency: ignore the touch and continue the flight past it.
                skips += 1
                if skips > 64:
                    raise GrazingContact(
                        f"{skips} consecutive tangential contacts near t={state.t + root}"
                    )
                # Resume once the gap has reopened.
                while t_next < horizon and gap(t_next) <= 0.0:
                    t_next += step
                g_next = gap(min(t_next, horizon))
            else:
                dt_moving = root
                break
        t, g_lo = t_next, g_next

    if dt_moving is None and math.isinf(dt_fixed):
        raise NoRootInHorizon(
            f"no collision within {HORIZON_PERIODS} wall periods of t={state.t}"
        )

    if dt_moving is not None:
        dt = dt_moving
        R_new, P_new = wall_free_motion(state.R, state.P, dt, params)
        v_out, V_out = elastic_collision(v, P_new / M, params.eta)
        after = ClassicalState(t=state.t + dt, R=R_new, P=M * V_out, r=R_new, p=m * v_out)
        return CollisionEvent(t=after.t, kind=CollisionKind.MOVING_WALL, state_after=after)

    dt = dt_fixed
    R_new, P_new = wall_free_motion(state.R, state.P, dt, params)
    after = ClassicalState(t=state.t + dt, R=R_new, P=P_new, r=0.0, p=-state.p)
    return CollisionEvent(t=after.t, kind=CollisionKind.FIXED_WALL, state_after=after)


class SimulationError(RuntimeError):
    """Event-loop failure; carries the index of the offending event."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"event {index}: {cause}")
        self.index = index


def simulate(initial: ClassicalState, n_events: int, params: PhysParams) -> list[CollisionEvent]:
    """Run the collision loop for n_events events.

    The initial state must satisfy 0 <= r <= R; the double_flag on each event
    marks moving-wall hits immediately preceded by another moving-wall hit.
    """
    if not (0.0 <= initial.r <= initial.R):
        raise ValueError(f"initial state violates confinement: r={initial.r}, R={initial.R}")
    events: list[CollisionEvent] = []
    state = initial.copy()
    last_kind = None
    for i in range(n_events):
        try:
            ev = next_collision(state, params)
        except (NoRootInHorizon, GrazingContact) as exc:
            raise SimulationError(i, exc) from exc
        ev.double_flag = (
            ev.kind is CollisionKind.MOVING_WALL and last_kind is CollisionKind.MOVING_WALL
        )
        events.append(ev)
        state = ev.state_after.copy()
        last_kind = ev.kind
    return events


def poincare_section(events: list[CollisionEvent], frame: str = "center_of_mass") -> list[SectionPoint]:
    """Project moving-wall events onto the section.

    frame="particle" reads out (r=R, p); frame="center_of_mass" reads (R, P).
    Both projections come from the same SectionPoint records, which carry the
    full (R, P, p) triple on the energy sphere.
    """
    if frame not in ("particle", "center_of_mass"):
        raise ValueError(f"unknown frame {frame!r}")
    return [
        SectionPoint(R=ev.state_after.R, P=ev.state_after.P, p=ev.state_after.p)
        for ev in events
        if ev.kind is CollisionKind.MOVING_WALL
    ]


def section_projection(points: list[SectionPoint], frame: str) -> np.ndarray:
    """(N, 2) array of the requested 2D projection of section points."""
    if frame == "particle":
        return np.array([[q.R, q.p] for q in points], dtype=float).reshape(-1, 2)
    if frame == "center_of_mass":
        return np.array([[q.R, q.P] for q in points], dtype=float).reshape(-1, 2)
    raise ValueError(f"unknown frame {frame!r}")


def chaotic_area_estimate(points: list[SectionPoint], cell_size: float) -> float:
    """Box-counting area (action units) covered in the (R, P) plane.

    Counts occupied cells of side cell_size on the center-of-mass section.
    Converges to the area of the visited region as the trajectory grows; with
    a cell size above the band width it overestimates thin structures.
    """
    if cell_size <= 0.0:
        raise ValueError("cell_size must be positive")
    if len(points) < 100:
        warnings.warn(
            f"only {len(points)} section points; area estimate unreliable",
            InsufficientSampling,
        )
    if not points:
        return 0.0
    cells = {(math.floor(q.R / cell_size), math.floor(q.P / cell_size)) for q in points}
    return len(cells) * cell_size**2


def state_on_shell(
    params: PhysParams,
    energy: float,
    latitude: float,
    longitude: float,
    r_frac: float = 0.5,
) -> ClassicalState:
    """Build a state of given energy from angles on the section sphere.

    latitude = +-pi/2 puts all energy in the particle (the poles); latitude 0
    is the equator (particle at rest).  r_frac places the particle inside the
    gap; it does not affect the energy.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    rho = math.sqrt(energy)
    u = rho * math.cos(latitude) * math.cos(longitude)   # P / sqrt(2M)
    w = rho * math.cos(latitude) * math.sin(longitude)   # sqrt(k/2) (R - R0)
    vq = rho * math.sin(latitude)                        # p / sqrt(2m)
    R = params.R0 + w * math.sqrt(2.0 / params.k)
    if R <= 0.0:
        raise ValueError("requested shell point puts the wall behind the origin")
    return ClassicalState(
        t=0.0,
        R=R,
        P=u * math.sqrt(2.0 * params.M),
        r=r_frac * R,
        p=vq * math.sqrt(2.0 * params.m),
    )


def island_fraction(
    params: PhysParams,
    energy: float,
    n_lat: int = 24,
    n_lon: int = 12,
    n_events: int = 1500,
) -> float:
    """Fraction of the energy sphere belonging to the regular region.

    Launches a uniform-area grid of trajectories (uniform in sin(latitude) and
    longitude) and classifies each cell by the absence of double collisions
    over n_events events.  Cells whose trajectory cannot collide at all count
    as regular.
    """
    regular = 0
    total = 0
    for s in np.linspace(-1.0 + 1.0 / n_lat, 1.0 - 1.0 / n_lat, n_lat):
        lat = math.asin(s)
        for lon in np.linspace(0.0, 2.0 * math.pi, n_lon, endpoint=False):
            total += 1
            state = state_on_shell(params, energy, lat, lon)
            try:
                events = simulate(state, n_events, params)
            except SimulationError:
                regular += 1
                continue
            if not any(ev.double_flag for ev in events):
                regular += 1
    return regular / total
