"""Mission state machine: tracking, hover, and the failsafe abort ladder.

Low battery or a remote stop request aborts tracking: climb to a fixed
height above the takeoff point, fly home, land, done.  The ladder is
irreversible; once a failsafe leg starts the vision loop no longer steers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .tracker import VelocityCommand


class MissionPhase(enum.Enum):
    TRACKING = "tracking"
    HOVER = "hover"
    FAILSAFE_ASCEND = "failsafe_ascend"
    FAILSAFE_RETURN = "failsafe_return"
    FAILSAFE_LAND = "failsafe_land"
    ENDED = "ended"


FAILSAFE_PHASES = (MissionPhase.FAILSAFE_ASCEND, MissionPhase.FAILSAFE_RETURN,
                   MissionPhase.FAILSAFE_LAND)


@dataclass(frozen=True)
class Ned:
    """North-east-down position in meters."""

    n: float
    e: float
    d: float

    @property
    def altitude(self) -> float:
        return -self.d


@dataclass(frozen=True)
class VehicleStatus:
    battery_voltage: float
    user_stop: bool
    position: Ned
    target_visible: bool = True  # drives the tracking/hover split

    def __post_init__(self):
        if self.battery_voltage < 0:
            raise ValueError("battery voltage cannot be negative")


@dataclass(frozen=True)
class MissionState:
    phase: MissionPhase
    home: Ned            # takeoff point (ground)
    takeoff_alt: float   # altitude of the takeoff point, meters

    def failsafe(self) -> bool:
        return self.phase in FAILSAFE_PHASES


@dataclass
class MissionConfig:
    batt_min: float = 21.0          # 3.5 V/cell floor for a 6s pack
    failsafe_alt_gain: float = 5.0  # climb this far above the takeoff point
    land_alt_eps: float = 0.05
    pos_eps: float = 0.2
    climb_speed: float = 0.5
    return_speed: float = 0.5
    descend_speed: float = 0.5
    loop_dt: float = 0.25


def step_mission(s: MissionState, status: VehicleStatus,
                 cfg: MissionConfig) -> tuple[MissionState, VelocityCommand | None]:
    """Advance the mission automaton one tick.

    Returns the new state and a directive for the flight layer: None while
    the vision tracker is in charge (tracking/hover), otherwise the failsafe
    velocity override.  Directive magnitudes are capped so each leg stops
    inside its epsilon instead of oscillating across it.
    """
    phase = s.phase
    alt = status.position.altitude
    target_alt = s.takeoff_alt + cfg.failsafe_alt_gain

    if phase in (MissionPhase.TRACKING, MissionPhase.HOVER):
        if status.battery_voltage < cfg.batt_min or status.user_stop:
            phase = MissionPhase.FAILSAFE_ASCEND
        else:
            phase = (MissionPhase.TRACKING if status.target_visible
                     else MissionPhase.HOVER)
            return replace(s, phase=phase), None

    if phase is MissionPhase.FAILSAFE_ASCEND:
        # "position at takeoff + gain": approached from below or, if the
        # vehicle was already higher, from above
        if abs(alt - target_alt) <= cfg.pos_eps:
            phase = MissionPhase.FAILSAFE_RETURN
        else:
            gap = target_alt - alt
            rate = min(cfg.climb_speed, abs(gap) / cfg.loop_dt)
            return replace(s, phase=phase), VelocityCommand(
                0.0, 0.0, -rate if gap > 0 else rate)

    if phase is MissionPhase.FAILSAFE_RETURN:
        dn = s.home.n - status.position.n
        de = s.home.e - status.position.e
        dist = math.hypot(dn, de)
        if dist <= cfg.pos_eps:
            phase = MissionPhase.FAILSAFE_LAND
        else:
            rate = min(cfg.return_speed, dist / cfg.loop_dt)
            return (replace(s, phase=phase),
                    VelocityCommand(rate * dn / dist, rate * de / dist, 0.0))

    if phase is MissionPhase.FAILSAFE_LAND:
        ground = alt - s.takeoff_alt
        if ground <= cfg.land_alt_eps:
            phase = MissionPhase.ENDED
        else:
            rate = min(cfg.descend_speed, ground / cfg.loop_dt)
            return replace(s, phase=phase), VelocityCommand(0.0, 0.0, rate)

    return replace(s, phase=MissionPhase.ENDED), VelocityCommand(0.0, 0.0, 0.0)
