import json
import math

import numpy as np
import pytest

from facefollow.cascade import serialize_cascade
from facefollow.mavlink import FRAME_LEN, FileSink
from facefollow.mission import MissionPhase, Ned
from facefollow.sim import (CameraModel, RunConfig, SimState, TargetPath,
                            converged, load_run_config, project_target,
                            run_closed_loop, step_sim)
from facefollow.synthetic import build_body_cascade, build_face_cascade
from facefollow.tracker import VelocityCommand

CAM = CameraModel()


def sim_state(target: Ned, drone: Ned = Ned(0, 0, -1.5), **kw) -> SimState:
    return SimState(0.0, drone, 0.0, target, **kw)


def offset_config(ex: float, ey: float, standoff: float = 8.0,
                  alt: float = 2.0, **kw) -> RunConfig:
    """Initial pose giving the requested normalized centroid offsets."""
    dy = ex * (CAM.img_w / 2) * standoff / CAM.focal
    dz = ey * (CAM.img_h / 2) * standoff / CAM.focal
    return RunConfig(drone_pos=Ned(0.0, 0.0, -alt),
                     target_pos=Ned(standoff, dy, -alt + dz), **kw)


class TestProjection:
    def test_dead_ahead_box_width(self):
        # focal * face_w / dx = 24 px at dx = 2 m
        st = sim_state(Ned(2.0, 0.0, -1.5))
        boxes = project_target(st, CAM)
        face = boxes["face"]
        assert face.w == 24
        assert face.x + face.w / 2 == CAM.img_w / 2
        assert face.y + face.h / 2 == CAM.img_h / 2

    def test_doubling_range_halves_width(self):
        near = project_target(sim_state(Ned(2.0, 0.0, -1.5)), CAM)
        far = project_target(sim_state(Ned(4.0, 0.0, -1.5)), CAM)
        assert near["face"].w == 2 * far["face"].w
        assert near["face"].x + near["face"].w / 2 == far["face"].x + far["face"].w / 2

    def test_random_poses_match_homogeneous_projection(self, rng):
        """Matrix-projection oracle: K @ [dy, dz, dx] in homogeneous form."""
        K = np.array([[CAM.focal, 0, CAM.img_w / 2],
                      [0, CAM.focal, CAM.img_h / 2],
                      [0, 0, 1.0]])
        for _ in range(100):
            dx = rng.uniform(2.0, 12.0)
            dy = rng.uniform(-0.25, 0.25) * dx
            dz = rng.uniform(-0.2, 0.2) * dx
            st = sim_state(Ned(dx, dy, -1.5 + dz))
            boxes = project_target(st, CAM)
            uvw = K @ np.array([dy, dz, dx])
            u, v = uvw[0] / uvw[2], uvw[1] / uvw[2]
            for key, size_m in (("face", st.face_w), ("body", st.body_w)):
                box = boxes[key]
                w_px = int(math.floor(CAM.focal * size_m / dx + 0.5))
                assert box.w == w_px
                assert abs((box.x + box.w / 2) - u) <= 0.51
                assert abs((box.y + box.h / 2) - v) <= 0.51

    def test_absent_behind_camera(self):
        assert project_target(sim_state(Ned(0.1, 0.0, -1.5)), CAM) is None
        assert project_target(sim_state(Ned(-3.0, 0.0, -1.5)), CAM) is None

    def test_absent_when_face_off_frame(self):
        st = sim_state(Ned(2.0, 5.0, -1.5))  # far right of the frustum
        assert project_target(st, CAM) is None

    def test_partial_visibility_clips(self):
        # face half off the right edge survives, clipped to the frame
        dy = (CAM.img_w / 2) * 2.0 / CAM.focal
        st = sim_state(Ned(2.0, dy, -1.5))
        boxes = project_target(st, CAM)
        assert boxes is not None
        assert boxes["face"].right <= CAM.img_w
        assert boxes["body"].right <= CAM.img_w


class TestStepSim:
    def test_zero_command_static_target(self):
        st = sim_state(Ned(5.0, 1.0, -2.0))
        nxt = step_sim(st, VelocityCommand(0, 0, 0), 0.25)
        assert nxt.t == 0.25
        assert nxt.drone_pos == st.drone_pos
        assert nxt.target_pos == st.target_pos

    def test_forward_euler_step(self):
        st = sim_state(Ned(5.0, 0.0, -2.0))
        nxt = step_sim(st, VelocityCommand(1.0, 0.0, 0.0), 0.25)
        assert nxt.drone_pos.n == pytest.approx(0.25)

    def test_yaw_rotates_body_command(self):
        st = SimState(0.0, Ned(0, 0, -2.0), math.pi / 2, Ned(5, 0, -2))
        nxt = step_sim(st, VelocityCommand(1.0, 0.0, 0.0), 1.0)
        assert nxt.drone_pos.n == pytest.approx(0.0, abs=1e-12)
        assert nxt.drone_pos.e == pytest.approx(1.0)

    def test_waypoint_target_matches_closed_form(self):
        path = TargetPath((Ned(10.0, 5.0, -1.5),), speed=0.5)
        st = sim_state(Ned(5.0, 0.0, -1.5), path=path)
        direction = np.array([5.0, 5.0, 0.0])
        direction /= np.linalg.norm(direction)
        for k in range(1, 11):
            st = step_sim(st, VelocityCommand(0, 0, 0), 0.25)
            expect = np.array([5.0, 0.0, -1.5]) + direction * 0.5 * 0.25 * k
            assert st.target_pos.n == pytest.approx(expect[0])
            assert st.target_pos.e == pytest.approx(expect[1])

    def test_target_stops_at_last_waypoint(self):
        path = TargetPath((Ned(5.2, 0.0, -1.5),), speed=1.0)
        st = sim_state(Ned(5.0, 0.0, -1.5), path=path)
        for _ in range(10):
            st = step_sim(st, VelocityCommand(0, 0, 0), 0.25)
        assert st.target_pos == Ned(5.2, 0.0, -1.5)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            step_sim(sim_state(Ned(5, 0, -1.5)), VelocityCommand(0, 0, 0), 0.0)


class TestClosedLoopOracle:
    def test_converged_start_stays_put(self):
        # width ratio inside the band and centered: a fixed point
        cfg = offset_config(0.0, 0.0, standoff=4.0, ticks=40)
        trace = run_closed_loop(cfg)
        assert all(r.cmd.vx == 0 and r.cmd.vy == 0 and r.cmd.vz == 0
                   for r in trace.rows)
        assert trace.rows[-1].drone == trace.rows[0].drone

    def test_initial_left_offset_commands_fast_roll(self):
        cfg = offset_config(-0.8, 0.0, ticks=3)
        trace = run_closed_loop(cfg)
        assert trace.rows[0].cmd.vy == -cfg.tracker.roll_f

    def test_trace_is_deterministic(self, tmp_path):
        cfg = offset_config(0.8, -0.8, ticks=50)
        a = run_closed_loop(cfg).to_csv()
        b = run_closed_loop(cfg).to_csv()
        assert a == b

    def test_one_frame_per_guided_tick(self, tmp_path):
        path = tmp_path / "frames.bin"
        cfg = offset_config(0.4, 0.0, ticks=30)
        with FileSink(str(path)) as sink:
            trace = run_closed_loop(cfg, sink=sink)
        guided = sum(r.mission in (MissionPhase.TRACKING, MissionPhase.HOVER)
                     for r in trace.rows)
        assert path.stat().st_size == guided * FRAME_LEN == 30 * FRAME_LEN

    def test_failsafe_frames_stop(self, tmp_path):
        path = tmp_path / "frames.bin"
        cfg = offset_config(0.0, 0.0, standoff=4.0, ticks=200,
                            battery_start=21.05, battery_drain=0.01)
        with FileSink(str(path)) as sink:
            trace = run_closed_loop(cfg, sink=sink)
        guided = sum(r.mission in (MissionPhase.TRACKING, MissionPhase.HOVER)
                     for r in trace.rows)
        assert guided < len(trace.rows)
        assert path.stat().st_size == guided * FRAME_LEN

    def test_battery_ramp_walks_failsafe_and_peaks_at_gain(self):
        # converge from 8 m (the drone advances ~3.3 m), then the pack sags
        cfg = RunConfig(ticks=400, home=Ned(0.0, 0.0, 0.0), takeoff_alt=0.0,
                        drone_pos=Ned(0.0, 0.0, -2.0),
                        target_pos=Ned(8.0, 0.0, -2.0),
                        battery_start=21.2, battery_drain=0.01)
        trace = run_closed_loop(cfg)
        order = []
        for r in trace.rows:
            if not order or order[-1] != r.mission:
                order.append(r.mission)
        assert order == [MissionPhase.TRACKING, MissionPhase.FAILSAFE_ASCEND,
                         MissionPhase.FAILSAFE_RETURN, MissionPhase.FAILSAFE_LAND,
                         MissionPhase.ENDED]
        peak = max(-r.drone.d for r in trace.rows)
        assert abs(peak - (cfg.takeoff_alt + 5.0)) <= cfg.mission.pos_eps
        last = trace.rows[-1].drone
        assert math.hypot(last.n - cfg.home.n, last.e - cfg.home.e) <= cfg.mission.pos_eps

    def test_user_stop_routes_through_failsafe(self):
        cfg = offset_config(0.0, 0.0, standoff=4.0, ticks=300, user_stop_tick=5)
        trace = run_closed_loop(cfg)
        assert trace.rows[5].mission is MissionPhase.FAILSAFE_ASCEND
        assert trace.rows[-1].mission is MissionPhase.ENDED

    def test_hover_when_target_lost(self):
        # target walks out of the frustum: loop hovers rather than wandering
        path = TargetPath((Ned(4.0, 40.0, -6.0),), speed=5.0)
        cfg = offset_config(0.0, 0.0, standoff=4.0, ticks=40)
        cfg.path = path
        trace = run_closed_loop(cfg)
        lost = [r for r in trace.rows if not r.detected]
        assert lost
        assert all(r.mission is MissionPhase.HOVER for r in lost)
        assert all(r.cmd.vx == r.cmd.vy == r.cmd.vz == 0.0 for r in lost)

    def test_error_descent_without_advance(self, rng):
        """Static target, width already in band: max |e| never grows and the
        centroid reaches and keeps the dead zone."""
        for ex, ey in ((0.7, 0.0), (0.0, -0.7), (-0.6, 0.6), (0.45, 0.8)):
            cfg = offset_config(ex, ey, standoff=4.0, ticks=80)
            trace = run_closed_loop(cfg)
            errs = []
            for r in trace.rows:
                cx, cy = r.centroid
                errs.append(max(abs((cx - CAM.img_w / 2) / (CAM.img_w / 2)),
                                abs((cy - CAM.img_h / 2) / (CAM.img_h / 2))))
            assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
            entered = next(i for i, e in enumerate(errs) if e <= 0.15)
            assert all(e <= 0.15 for e in errs[entered:])


class TestClosedLoopRendered:
    def test_rendered_requires_cascades(self):
        with pytest.raises(ValueError, match="cascades"):
            RunConfig(mode="rendered")

    def test_rendered_gating_containment_end_to_end(self):
        cfg = offset_config(0.5, -0.4, standoff=4.0, ticks=12, mode="rendered",
                            body_cascade=build_body_cascade(),
                            face_cascade=build_face_cascade())
        trace = run_closed_loop(cfg)
        assert sum(r.detected for r in trace.rows) >= 10

    def test_frame_dumps(self, tmp_path):
        cfg = offset_config(0.0, 0.0, standoff=4.0, ticks=3, mode="rendered",
                            body_cascade=build_body_cascade(),
                            face_cascade=build_face_cascade())
        run_closed_loop(cfg, frames_dir=str(tmp_path / "frames"))
        dumped = sorted((tmp_path / "frames").glob("frame_*.ppm"))
        assert len(dumped) == 3
        assert dumped[0].read_bytes().startswith(b"P6")


class TestRunConfigJson:
    def test_full_document(self, tmp_path):
        body = tmp_path / "body.json"
        face = tmp_path / "face.json"
        body.write_text(serialize_cascade(build_body_cascade()))
        face.write_text(serialize_cascade(build_face_cascade()))
        doc = {
            "mode": "rendered",
            "ticks": 7,
            "camera": {"img_w": 320, "img_h": 240, "focal": 300.0},
            "drone": {"pos": [0.0, 0.0, -6.0], "yaw": 0.0},
            "target": {"pos": [4.0, 0.0, -6.0], "face_w": 0.16, "body_w": 0.5,
                       "body_h": 0.75, "waypoints": [[4.0, 1.0, -6.0]],
                       "speed": 0.2},
            "tracker": {"roll_s": 0.25},
            "mission": {"batt_min": 20.0},
            "battery": {"start": 25.0, "drain_rate": 0.001},
            "home": [0.0, 0.0, 0.0],
            "takeoff_alt": 0.0,
            "user_stop_tick": None,
            "cascades": {"body": str(body), "face": str(face)},
            "sink": None,
        }

        def loader(path):
            from facefollow.cascade import parse_cascade
            with open(path) as fh:
                return parse_cascade(fh.read())

        cfg = load_run_config(json.dumps(doc), cascade_loader=loader)
        assert cfg.mode == "rendered" and cfg.ticks == 7
        assert cfg.tracker.roll_s == 0.25
        assert cfg.mission.batt_min == 20.0
        assert cfg.path.waypoints == (Ned(4.0, 1.0, -6.0),)
        trace = run_closed_loop(cfg)
        assert len(trace.rows) == 7

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            load_run_config(json.dumps({"tick": 5}))

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ValueError, match="tracker"):
            load_run_config(json.dumps({"tracker": {"roll_x": 1}}))


def test_converged_helper():
    cfg = offset_config(0.0, 0.0, standoff=4.0, ticks=20)
    assert converged(run_closed_loop(cfg), cfg)
    far = offset_config(0.0, 0.0, standoff=8.0, ticks=12)  # still approaching
    assert not converged(run_closed_loop(far), far)
