"""Zone-based velocity control: centroid error bands to body-frame commands.

The image is carved into a central dead zone, a slow band and a fast band
per axis.  Lateral position maps to roll speed, vertical to thrust, and
the detected box width decides whether to pitch forward to close distance.
Speeds are discrete per band, not proportional.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .cascade import Detection


class HorizZone(enum.Enum):
    CENTER = "center"
    SLOW_LEFT = "slow_left"
    SLOW_RIGHT = "slow_right"
    FAST_LEFT = "fast_left"
    FAST_RIGHT = "fast_right"


class VertZone(enum.Enum):
    CENTER = "center"
    SLOW_UP = "slow_up"
    SLOW_DOWN = "slow_down"
    FAST_UP = "fast_up"
    FAST_DOWN = "fast_down"


@dataclass(frozen=True)
class Zone:
    horiz: HorizZone
    vert: VertZone

    @property
    def centered(self) -> bool:
        return self.horiz is HorizZone.CENTER and self.vert is VertZone.CENTER


@dataclass(frozen=True)
class VelocityCommand:
    """Body-frame NED velocity: +vx forward, +vy right, +vz down (m/s)."""

    vx: float
    vy: float
    vz: float

    def is_zero(self) -> bool:
        return self.vx == 0.0 and self.vy == 0.0 and self.vz == 0.0


@dataclass
class TrackerConfig:
    dead_zone: float = 0.15        # normalized half-width of the zero-command region
    fast_threshold: float = 0.5    # |error| above this uses the fast speeds
    roll_s: float = 0.29
    roll_f: float = 0.8
    th_s: float = 0.22
    th_f: float = 0.5
    fwd_speed: float = 0.4
    width_far: float = 0.10        # advance when box width fraction drops below
    width_near: float = 0.18       # back off above this (if allowed); hysteresis band
    allow_backward: bool = False
    loop_dt: float = 0.25          # seconds per control tick (~4 Hz)

    def __post_init__(self):
        if not 0.0 < self.dead_zone < self.fast_threshold <= 1.0:
            raise ValueError(
                f"need 0 < dead_zone < fast_threshold <= 1, got "
                f"{self.dead_zone}, {self.fast_threshold}")
        if not 0.0 < self.roll_s <= self.roll_f:
            raise ValueError(f"need 0 < roll_s <= roll_f, got {self.roll_s}, {self.roll_f}")
        if not 0.0 < self.th_s <= self.th_f:
            raise ValueError(f"need 0 < th_s <= th_f, got {self.th_s}, {self.th_f}")
        if not 0.0 < self.width_far < self.width_near < 1.0:
            raise ValueError(
                f"need 0 < width_far < width_near < 1, got "
                f"{self.width_far}, {self.width_near}")
        if self.loop_dt <= 0:
            raise ValueError("loop_dt must be positive")


def normalized_error(cx: float, cy: float, img_w: int, img_h: int) -> tuple[float, float]:
    """Centroid error scaled to [-1, 1] per axis; positive is right/down."""
    return ((cx - img_w / 2) / (img_w / 2), (cy - img_h / 2) / (img_h / 2))


def _band(e: float, cfg: TrackerConfig) -> int:
    """0 = dead zone, 1 = slow, 2 = fast; boundary values take the lower band."""
    a = abs(e)
    if a <= cfg.dead_zone:
        return 0
    if a <= cfg.fast_threshold:
        return 1
    return 2


def classify_zone(cx: float, cy: float, img_w: int, img_h: int,
                  cfg: TrackerConfig) -> Zone:
    """Zone of a pixel centroid under the config's error bands."""
    ex, ey = normalized_error(cx, cy, img_w, img_h)
    hb, vb = _band(ex, cfg), _band(ey, cfg)
    if hb == 0:
        horiz = HorizZone.CENTER
    elif ex < 0:
        horiz = HorizZone.SLOW_LEFT if hb == 1 else HorizZone.FAST_LEFT
    else:
        horiz = HorizZone.SLOW_RIGHT if hb == 1 else HorizZone.FAST_RIGHT
    if vb == 0:
        vert = VertZone.CENTER
    elif ey < 0:
        vert = VertZone.SLOW_UP if vb == 1 else VertZone.FAST_UP
    else:
        vert = VertZone.SLOW_DOWN if vb == 1 else VertZone.FAST_DOWN
    return Zone(horiz, vert)


def centroid_of(box) -> tuple[float, float]:
    return (box.x + box.w / 2, box.y + box.h / 2)


def compute_command(target: Detection | None, img_w: int, img_h: int,
                    cfg: TrackerConfig) -> VelocityCommand:
    """Velocity command for the current detection; hover (zeros) when absent.

    Roll follows the horizontal band (sign toward the target), thrust the
    vertical band (+vz descends, matching a target below center), and the
    box-width fraction drives pitch forward inside a hysteresis band so the
    drone neither tailgates nor oscillates.
    """
    if target is None:
        return VelocityCommand(0.0, 0.0, 0.0)
    cx, cy = centroid_of(target.box)
    ex, ey = normalized_error(cx, cy, img_w, img_h)

    hb, vb = _band(ex, cfg), _band(ey, cfg)
    vy = 0.0 if hb == 0 else (cfg.roll_s if hb == 1 else cfg.roll_f) * (1 if ex > 0 else -1)
    vz = 0.0 if vb == 0 else (cfg.th_s if vb == 1 else cfg.th_f) * (1 if ey > 0 else -1)

    ratio = target.box.w / img_w
    if ratio < cfg.width_far:
        vx = cfg.fwd_speed
    elif cfg.allow_backward and ratio > cfg.width_near:
        vx = -cfg.fwd_speed
    else:
        vx = 0.0
    return VelocityCommand(vx, vy, vz)
