"""Desk-scale closed-loop simulator: kinematic drone, pinhole camera, person.

The loop per tick: sense (oracle projection or rendered detection), pick a
target, compute the tracker command, advance the mission automaton, emit
the MAVLink frame, integrate the kinematics, log.  First-order kinematics
realize commands instantly; the logic under test is the decision pipeline,
not aerodynamics.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

from .cascade import Cascade, Detection
from .gated import GatedDetection, GateParams, detect_gated, select_target
from .imaging import GrayImage, Rect, draw_box, encode_ppm, to_rgb
from .mavlink import CommandSink, NullSink, build_velocity_message, open_sink
from .mission import (MissionConfig, MissionPhase, MissionState, Ned,
                      VehicleStatus, step_mission)
from .synthetic import render_scene, synthetic_gate_params
from .tracker import (TrackerConfig, VelocityCommand, Zone, classify_zone,
                      compute_command)


@dataclass(frozen=True)
class CameraModel:
    """Square-pixel pinhole camera, boresight along body +x, principal point centered."""

    img_w: int = 320
    img_h: int = 240
    focal: float = 300.0

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")


@dataclass(frozen=True)
class TargetPath:
    """Waypoint schedule; the target walks each leg at constant speed."""

    waypoints: tuple[Ned, ...] = ()
    speed: float = 0.3


@dataclass(frozen=True)
class SimState:
    t: float
    drone_pos: Ned
    drone_yaw: float
    target_pos: Ned           # face center
    path: TargetPath = TargetPath()
    leg: int = 0              # index of the next waypoint
    face_w: float = 0.16
    body_w: float = 0.5
    body_h: float = 0.75


MIN_PROJECTION_RANGE = 0.2  # meters ahead of the camera


def _rhu(v: float) -> int:
    return int(math.floor(v + 0.5))


def _clip_rect(x: int, y: int, w: int, h: int, img_w: int, img_h: int) -> Rect | None:
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, img_w), min(y + h, img_h)
    if x0 >= x1 or y0 >= y1:
        return None
    return Rect(x0, y0, x1 - x0, y1 - y0)


def _body_frame_offset(s: SimState) -> tuple[float, float, float]:
    dn = s.target_pos.n - s.drone_pos.n
    de = s.target_pos.e - s.drone_pos.e
    dd = s.target_pos.d - s.drone_pos.d
    c, sn = math.cos(s.drone_yaw), math.sin(s.drone_yaw)
    return (c * dn + sn * de, -sn * dn + c * de, dd)


def project_target(s: SimState, cam: CameraModel) -> dict[str, Rect] | None:
    """Pinhole projection of the person; face and body boxes are concentric.

    Returns image-clipped rects, or None when the target is behind or too
    close to the camera, or the face box falls entirely off frame.
    """
    dx, dy, dz = _body_frame_offset(s)
    if dx <= MIN_PROJECTION_RANGE:
        return None
    u = cam.img_w / 2 + cam.focal * dy / dx
    v = cam.img_h / 2 + cam.focal * dz / dx

    def centered(width_m: float, height_m: float) -> tuple[int, int, int, int]:
        w = max(1, _rhu(cam.focal * width_m / dx))
        h = max(1, _rhu(cam.focal * height_m / dx))
        return (_rhu(u - w / 2), _rhu(v - h / 2), w, h)

    fx, fy, fw, fh = centered(s.face_w, s.face_w)
    face = _clip_rect(fx, fy, fw, fh, cam.img_w, cam.img_h)
    if face is None:
        return None
    bx, by, bw, bh = centered(s.body_w, s.body_h)
    body = _clip_rect(bx, by, bw, bh, cam.img_w, cam.img_h)
    if body is None:
        return None
    return {"face": face, "body": body}


def step_sim(s: SimState, cmd: VelocityCommand, dt: float) -> SimState:
    """First-order Euler step of drone and target; pure function."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    c, sn = math.cos(s.drone_yaw), math.sin(s.drone_yaw)
    drone = Ned(s.drone_pos.n + (c * cmd.vx - sn * cmd.vy) * dt,
                s.drone_pos.e + (sn * cmd.vx + c * cmd.vy) * dt,
                s.drone_pos.d + cmd.vz * dt)

    target, leg = s.target_pos, s.leg
    budget = s.path.speed * dt
    while leg < len(s.path.waypoints) and budget > 0:
        wp = s.path.waypoints[leg]
        gap = math.sqrt((wp.n - target.n) ** 2 + (wp.e - target.e) ** 2
                        + (wp.d - target.d) ** 2)
        if gap <= budget:
            target, leg = wp, leg + 1
            budget -= gap
        else:
            f = budget / gap
            target = Ned(target.n + (wp.n - target.n) * f,
                         target.e + (wp.e - target.e) * f,
                         target.d + (wp.d - target.d) * f)
            budget = 0.0
    return replace(s, t=s.t + dt, drone_pos=drone, target_pos=target, leg=leg)


@dataclass(frozen=True)
class TraceRow:
    tick: int
    t: float
    drone: Ned
    target: Ned
    detected: bool
    centroid: tuple[float, float] | None
    bbox_w_px: int | None
    zone: Zone | None
    cmd: VelocityCommand
    mission: MissionPhase


TRACE_HEADER = ("tick,t,drone_n,drone_e,drone_d,target_n,target_e,target_d,"
                "detected,centroid_x,centroid_y,bbox_w_px,zone_h,zone_v,"
                "vx,vy,vz,mission")


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)

    def to_csv(self) -> str:
        out = [TRACE_HEADER]
        for r in self.rows:
            cx = f"{r.centroid[0]:.2f}" if r.centroid else ""
            cy = f"{r.centroid[1]:.2f}" if r.centroid else ""
            bw = str(r.bbox_w_px) if r.bbox_w_px is not None else ""
            zh = r.zone.horiz.value if r.zone else ""
            zv = r.zone.vert.value if r.zone else ""
            out.append(
                f"{r.tick},{r.t:.3f},"
                f"{r.drone.n:.6f},{r.drone.e:.6f},{r.drone.d:.6f},"
                f"{r.target.n:.6f},{r.target.e:.6f},{r.target.d:.6f},"
                f"{int(r.detected)},{cx},{cy},{bw},{zh},{zv},"
                f"{r.cmd.vx:.6f},{r.cmd.vy:.6f},{r.cmd.vz:.6f},"
                f"{r.mission.value}")
        return "\n".join(out) + "\n"


@dataclass
class RunConfig:
    mode: str = "oracle"                   # "oracle" | "rendered"
    ticks: int = 120
    camera: CameraModel = field(default_factory=CameraModel)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    mission: MissionConfig = field(default_factory=MissionConfig)
    drone_pos: Ned = Ned(0.0, 0.0, -1.5)
    drone_yaw: float = 0.0
    target_pos: Ned = Ned(8.0, 0.0, -1.5)
    path: TargetPath = field(default_factory=TargetPath)
    face_w: float = 0.16
    body_w: float = 0.5
    body_h: float = 0.75
    home: Ned = Ned(0.0, 0.0, 0.0)
    takeoff_alt: float = 0.0
    battery_start: float = 25.2
    battery_drain: float = 0.0             # volts per second
    user_stop_tick: int | None = None
    body_cascade: Cascade | None = None    # rendered mode
    face_cascade: Cascade | None = None
    gate: GateParams | None = None
    sink_dest: str | None = None

    def __post_init__(self):
        if self.mode not in ("oracle", "rendered"):
            raise ValueError(f"mode must be oracle or rendered, got {self.mode!r}")
        if self.mode == "rendered" and (self.body_cascade is None
                                        or self.face_cascade is None):
            raise ValueError("rendered mode requires body and face cascades")
        if self.ticks < 1:
            raise ValueError("ticks must be positive")


def _oracle_detections(state: SimState, cam: CameraModel) -> list[GatedDetection]:
    boxes = project_target(state, cam)
    if boxes is None:
        return []
    body = Detection(boxes["body"], stages_passed=1, score=1.0, neighbors=1)
    face = Detection(boxes["face"], stages_passed=1, score=1.0, neighbors=1)
    return [GatedDetection(body, face)]


def run_closed_loop(cfg: RunConfig, sink: CommandSink | None = None,
                    frames_dir: str | None = None) -> Trace:
    """Run the sense-decide-act-integrate loop; returns the per-tick trace.

    One MAVLink frame goes to the sink per tick while the mission is in a
    vision-guided phase; failsafe legs hand control to the mission
    directives.  The loop stops at the tick budget or when the mission ends.
    """
    cam = cfg.camera
    dt = cfg.tracker.loop_dt
    own_sink = sink is None
    sink = sink or (open_sink(cfg.sink_dest) if cfg.sink_dest else NullSink())
    gate = cfg.gate or synthetic_gate_params(cam.img_w)

    state = SimState(0.0, cfg.drone_pos, cfg.drone_yaw, cfg.target_pos,
                     cfg.path, 0, cfg.face_w, cfg.body_w, cfg.body_h)
    mission = MissionState(MissionPhase.TRACKING, cfg.home, cfg.takeoff_alt)
    mission_cfg = replace(cfg.mission, loop_dt=dt)
    trace = Trace()

    try:
        for tick in range(cfg.ticks):
            if cfg.mode == "oracle":
                dets = _oracle_detections(state, cam)
                frame_img = None
            else:
                boxes = project_target(state, cam)
                frame_img = render_scene(cam.img_w, cam.img_h,
                                         boxes["face"] if boxes else None,
                                         boxes["body"] if boxes else None)
                dets = detect_gated(cfg.body_cascade, cfg.face_cascade,
                                    frame_img, gate)
            chosen = select_target(dets)
            tracked = chosen.body if chosen else None

            cmd = compute_command(tracked, cam.img_w, cam.img_h, cfg.tracker)
            status = VehicleStatus(
                battery_voltage=max(0.0, cfg.battery_start
                                    - cfg.battery_drain * state.t),
                user_stop=(cfg.user_stop_tick is not None
                           and tick >= cfg.user_stop_tick),
                position=state.drone_pos,
                target_visible=chosen is not None)
            mission, directive = step_mission(mission, status, mission_cfg)
            applied = directive if directive is not None else cmd

            if mission.phase in (MissionPhase.TRACKING, MissionPhase.HOVER):
                sink.send(build_velocity_message(
                    applied.vx, applied.vy, applied.vz,
                    time_boot_ms=int(state.t * 1000)))

            if frames_dir is not None and frame_img is not None:
                _dump_frame(frames_dir, tick, frame_img, dets)

            centroid = None
            zone = None
            if tracked is not None:
                centroid = (tracked.box.x + tracked.box.w / 2,
                            tracked.box.y + tracked.box.h / 2)
                zone = classify_zone(centroid[0], centroid[1],
                                     cam.img_w, cam.img_h, cfg.tracker)
            trace.rows.append(TraceRow(
                tick=tick, t=state.t, drone=state.drone_pos,
                target=state.target_pos, detected=chosen is not None,
                centroid=centroid,
                bbox_w_px=tracked.box.w if tracked else None,
                zone=zone, cmd=applied, mission=mission.phase))

            if mission.phase is MissionPhase.ENDED:
                break
            state = step_sim(state, applied, dt)
    finally:
        if own_sink:
            sink.close()
    return trace


def _dump_frame(frames_dir: str, tick: int, img: GrayImage,
                dets: list[GatedDetection]):
    os.makedirs(frames_dir, exist_ok=True)
    rgb = to_rgb(img)
    for d in dets:
        draw_box(rgb, d.body.box, (40, 220, 40))
        draw_box(rgb, d.face.box, (220, 40, 40))
    with open(os.path.join(frames_dir, f"frame_{tick:05d}.ppm"), "wb") as fh:
        fh.write(encode_ppm(rgb))


def converged(trace: Trace, cfg: RunConfig, final_ticks: int = 10) -> bool:
    """True when the last ``final_ticks`` rows are centered with the width in band."""
    if len(trace.rows) < final_ticks:
        return False
    tr = cfg.tracker
    for r in trace.rows[-final_ticks:]:
        if not r.detected or r.zone is None or not r.zone.centered:
            return False
        ratio = (r.bbox_w_px or 0) / cfg.camera.img_w
        if not tr.width_far <= ratio <= tr.width_near:
            return False
    return True


# --- JSON config ------------------------------------------------------------

def _take(obj: dict, path: str, allowed: dict):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ValueError(f"config {path}: unknown key(s) {sorted(unknown)}")


def _ned(v, path: str) -> Ned:
    if not (isinstance(v, list) and len(v) == 3
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ValueError(f"config {path}: expected [n, e, d] numbers")
    return Ned(float(v[0]), float(v[1]), float(v[2]))


def load_run_config(text: str, cascade_loader=None) -> RunConfig:
    """Build a RunConfig from its JSON document (strict keys).

    ``cascade_loader`` maps a path string to a Cascade; the CLI wires it to
    the canonical-format parser.
    """
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("config root must be an object")
    top = {"mode": None, "ticks": None, "camera": None, "drone": None,
           "target": None, "tracker": None, "mission": None, "battery": None,
           "user_stop_tick": None, "home": None, "takeoff_alt": None,
           "cascades": None, "sink": None}
    _take(doc, "$", top)

    kw: dict = {}
    if "mode" in doc:
        kw["mode"] = doc["mode"]
    if "ticks" in doc:
        kw["ticks"] = int(doc["ticks"])
    if "camera" in doc:
        c = doc["camera"]
        _take(c, "camera", {"img_w": None, "img_h": None, "focal": None})
        kw["camera"] = CameraModel(int(c.get("img_w", 320)), int(c.get("img_h", 240)),
                                   float(c.get("focal", 300.0)))
    if "drone" in doc:
        d = doc["drone"]
        _take(d, "drone", {"pos": None, "yaw": None})
        if "pos" in d:
            kw["drone_pos"] = _ned(d["pos"], "drone.pos")
        kw["drone_yaw"] = float(d.get("yaw", 0.0))
    if "target" in doc:
        t = doc["target"]
        _take(t, "target", {"pos": None, "face_w": None, "body_w": None,
                            "body_h": None, "waypoints": None, "speed": None})
        if "pos" in t:
            kw["target_pos"] = _ned(t["pos"], "target.pos")
        for k in ("face_w", "body_w", "body_h"):
            if k in t:
                kw[k] = float(t[k])
        wps = tuple(_ned(w, f"target.waypoints[{i}]")
                    for i, w in enumerate(t.get("waypoints", [])))
        kw["path"] = TargetPath(wps, float(t.get("speed", 0.3)))
    if "tracker" in doc:
        fields = set(TrackerConfig.__dataclass_fields__)
        _take(doc["tracker"], "tracker", {k: None for k in fields})
        kw["tracker"] = TrackerConfig(**doc["tracker"])
    if "mission" in doc:
        fields = set(MissionConfig.__dataclass_fields__)
        _take(doc["mission"], "mission", {k: None for k in fields})
        kw["mission"] = MissionConfig(**doc["mission"])
    if "battery" in doc:
        b = doc["battery"]
        _take(b, "battery", {"start": None, "drain_rate": None})
        kw["battery_start"] = float(b.get("start", 25.2))
        kw["battery_drain"] = float(b.get("drain_rate", 0.0))
    if doc.get("user_stop_tick") is not None:
        kw["user_stop_tick"] = int(doc["user_stop_tick"])
    if "home" in doc:
        kw["home"] = _ned(doc["home"], "home")
    if "takeoff_alt" in doc:
        kw["takeoff_alt"] = float(doc["takeoff_alt"])
    if "cascades" in doc:
        c = doc["cascades"]
        _take(c, "cascades", {"body": None, "face": None})
        if cascade_loader is None:
            raise ValueError("config names cascades but no loader was provided")
        kw["body_cascade"] = cascade_loader(c["body"])
        kw["face_cascade"] = cascade_loader(c["face"])
    if doc.get("sink") is not None:
        kw["sink_dest"] = str(doc["sink"])
    return RunConfig(**kw)
