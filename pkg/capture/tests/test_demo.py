"""Live loop mechanics against fake engines (the real one runs in acceptance)."""

import os
import stat
import sys
import threading
import time

import pytest

from capture_client.demo import (DropOldestQueue, EngineClient, LiveSession,
                                 MotionIndicator, NullRenderer, PipeBroken,
                                 TerminalRenderer, run_live_demo, IDLE,
                                 RECORDING)
from capture_client.sources import SyntheticSource
from capture_client.synth import generate_frames, parse_script
from conftest import write_script


class Recorder(NullRenderer):
    def __init__(self):
        self.states = []
        self.updates = []

    def frame(self, lm, state):
        self.states.append(state)

    def top5(self, entries):
        self.updates.append(entries)


def fake_engine(tmp_path, body, name="engine"):
    """Executable python script standing in for the classifier binary."""
    path = tmp_path / name
    path.write_text(f"#!{sys.executable}\nimport sys\n{body}\n")
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return str(path)


ECHO_EVERY_10 = """
n = 0
for line in sys.stdin:
    n += 1
    if n % 10 == 0:
        print('{"type": "prediction", "clip_frames": 10, '
              '"top": [{"label": "fake", "probability": 1.0}]}', flush=True)
"""

DIE_AFTER_1 = """
sys.stdin.readline()
sys.exit(1)
"""

SILENT = """
for line in sys.stdin:
    pass
"""


class TestDropOldestQueue:
    def test_drops_oldest_on_overflow(self):
        q = DropOldestQueue(3)
        for i in range(5):
            q.put(i)
        assert q.dropped == 2
        assert [q.get(timeout=0.1) for _ in range(3)] == [2, 3, 4]
        assert q.empty()

    def test_put_wait_blocks_instead_of_dropping(self):
        q = DropOldestQueue(2)
        assert q.put_wait(1) and q.put_wait(2)
        drained = []
        t = threading.Thread(
            target=lambda: drained.extend(q.get(timeout=1) for _ in range(3)))
        t.start()
        assert q.put_wait(3)              # full queue: waits for the drain
        t.join(timeout=5)
        assert drained == [1, 2, 3] and q.dropped == 0

    def test_put_wait_gives_up_on_abort(self):
        q = DropOldestQueue(1)
        q.put(1)
        assert not q.put_wait(2, abort=lambda: True)
        assert q.get(timeout=0.1) == 1 and q.empty()


class TestMotionIndicator:
    def frames(self, segments):
        return generate_frames(parse_script(
            {"fps": 30, "seed": 3, "segments": segments}))

    def test_still_never_records(self):
        ind = MotionIndicator()
        states = [ind.update(f) for f in self.frames(
            [{"kind": "still", "frames": 12}])]
        assert set(states) == {IDLE}

    def test_burst_records_then_idles(self):
        ind = MotionIndicator(stop_hold=5)
        frames = self.frames([{"kind": "still", "frames": 3},
                              {"kind": "drift", "frames": 10, "step": 0.02},
                              {"kind": "still", "frames": 10}])
        states = [ind.update(f) for f in frames]
        assert states[4] == RECORDING          # first drifted frame
        assert states[-1] == IDLE              # stop_hold still frames later
        assert RECORDING in states and states[0] == IDLE

    def test_clear_motion_triggers(self):
        ind = MotionIndicator(start_threshold=0.01)
        a = self.frames([{"kind": "still", "frames": 1}])[0]
        b = type(a)([(p[0] + 0.02, p[1], p[2]) for p in a.points])
        ind.update(a)
        assert ind.update(b) == RECORDING


class TestEngineClient:
    def test_missing_binary(self, tmp_path):
        with pytest.raises(PipeBroken):
            EngineClient([str(tmp_path / "no-such-engine"), "stream"])

    def test_predictions_collected(self, tmp_path):
        engine = EngineClient([fake_engine(tmp_path, ECHO_EVERY_10)])
        frames = generate_frames(parse_script(
            {"fps": 30, "seed": 1,
             "segments": [{"kind": "still", "frames": 20}]}))
        for f in frames:
            engine.send(f)
        engine.close()
        assert len(engine.predictions) == 2
        assert engine.predictions[0]["top"][0]["label"] == "fake"


class TestRunLiveDemo:
    def session(self, tmp_path, script_segments, engine_body,
                feed_fps=30.0, target_fps=None, seed=9):
        script = write_script(tmp_path / "feed.synth", seed=seed, fps=feed_fps,
                              segments=script_segments)
        recorder = Recorder()
        session = LiveSession(
            source=SyntheticSource(script),
            engine_argv=[fake_engine(tmp_path, engine_body)],
            renderer=recorder,
            target_fps=target_fps if target_fps is not None else feed_fps)
        return session, recorder

    def test_updates_arrive_and_exit_clean(self, tmp_path):
        session, recorder = self.session(
            tmp_path, [{"kind": "still", "frames": 30}], ECHO_EVERY_10)
        assert run_live_demo(session) == 0
        assert len(recorder.updates) == 3      # 30 frames / one echo per 10
        assert recorder.states and set(recorder.states) == {IDLE}

    def test_throttle_halves_sent_frames(self, tmp_path):
        # 32 fps feed at target 16 -> every other frame reaches the engine;
        # dyadic rates keep the tick walk float-exact, so the count is stable
        session, recorder = self.session(
            tmp_path, [{"kind": "still", "frames": 40}], ECHO_EVERY_10,
            feed_fps=32.0, target_fps=16.0)
        assert run_live_demo(session) == 0
        assert len(recorder.updates) == 2      # 20 sent frames -> 2 echoes

    def test_silent_engine_no_updates(self, tmp_path):
        session, recorder = self.session(
            tmp_path, [{"kind": "still", "frames": 15}], SILENT)
        assert run_live_demo(session) == 0
        assert recorder.updates == []

    def test_pipe_broken_twice_exits_nonzero(self, tmp_path, capsys):
        session, recorder = self.session(
            tmp_path, [{"kind": "still", "frames": 400}], DIE_AFTER_1)
        assert run_live_demo(session) == 2
        assert "pipe" in capsys.readouterr().err.lower()

    def test_quit_event_stops_early(self, tmp_path):
        session, recorder = self.session(
            tmp_path, [{"kind": "still", "frames": 100000}], SILENT)
        session.quit_event.set()
        t0 = time.monotonic()
        assert run_live_demo(session) == 0
        assert time.monotonic() - t0 < 10


class TestTerminalRenderer:
    def test_draws_status_and_skeleton(self, tmp_path):
        import io
        out = io.StringIO()
        r = TerminalRenderer(out=out)
        frames = generate_frames(parse_script(
            {"fps": 30, "seed": 2, "segments": [{"kind": "still", "frames": 1}]}))
        r.top5([{"label": "water", "probability": 0.9},
                {"label": "apple", "probability": 0.1}])
        r.frame(frames[0], IDLE)
        text = out.getvalue()
        assert "[IDLE]" in text and "48/48" in text
        assert "water" in text and "0.900" in text
        assert "o" in text                      # skeleton dots plotted
