"""Live capture demo: camera (or scripted injector) -> engine -> overlay.

Three cooperating loops, handing frames through bounded queues:

    capture loop     reads the source, enqueues raw frames
    extraction loop  resolves landmarks, throttles to the target rate,
                     feeds the engine's stream stdin
    render loop      (caller's thread) draws frames, state and the
                     latest top-5 whenever the engine answers

For a live camera the frame queue drops its oldest item when full, so
classification lag can never stall capture. Scripted/file sources are not
perishable; they are paced by backpressure instead, so every frame reaches
the extraction stage. The render queue always drops oldest — a stale frame
is worthless to draw.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from typing import Optional

from .backends import BackendUnavailable
from .landmarks import FrameLandmarks, ndjson_line


class PipeBroken(Exception):
    pass


class DropOldestQueue:
    """Bounded queue; a put on a full queue evicts the oldest item."""

    def __init__(self, maxsize: int):
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._lock = threading.Lock()
        self.dropped = 0

    def put(self, item) -> None:
        with self._lock:
            if self._q.full():
                try:
                    self._q.get_nowait()
                    self.dropped += 1
                except queue.Empty:
                    pass
            self._q.put_nowait(item)

    def put_wait(self, item, abort=None) -> bool:
        """Blocking put (backpressure). Returns False if abort() turned true."""
        while True:
            try:
                self._q.put(item, timeout=0.05)
                return True
            except queue.Full:
                if abort is not None and abort():
                    return False

    def get(self, timeout: Optional[float] = None):
        return self._q.get(timeout=timeout)

    def empty(self) -> bool:
        return self._q.empty()


class EngineClient:
    """The classifier's `stream` subcommand behind a line pipe."""

    def __init__(self, argv: list[str]):
        self.argv = list(argv)
        try:
            # engine diagnostics inherit our stderr (fd 2) untouched
            self._proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise PipeBroken(f"cannot start engine: {exc}") from None
        self.predictions: list[dict] = []
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        for line in self._proc.stdout:
            try:
                self.predictions.append(json.loads(line))
            except json.JSONDecodeError:
                continue

    def send(self, lm: FrameLandmarks) -> None:
        try:
            self._proc.stdin.write(ndjson_line(lm) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise PipeBroken(f"engine pipe: {exc}") from None

    def close(self) -> int:
        """Close the input side, let the engine flush, collect stragglers."""
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        self._reader.join(timeout=30)
        return self._proc.wait(timeout=30)


IDLE = "IDLE"
RECORDING = "RECORDING"


class MotionIndicator:
    """Client-side copy of the engine's motion gate, for the overlay only."""

    def __init__(self, start_threshold: float = 0.01,
                 stop_threshold: float = 0.004, stop_hold: int = 10):
        self.start_threshold = start_threshold
        self.stop_threshold = stop_threshold
        self.stop_hold = stop_hold
        self.state = IDLE
        self._prev: Optional[FrameLandmarks] = None
        self._still = 0

    def update(self, lm: FrameLandmarks) -> str:
        moved = 0.0
        if self._prev is not None:
            dists = [math.dist(a, b)
                     for a, b in zip(self._prev.points, lm.points)
                     if a is not None and b is not None]
            moved = sum(dists) / len(dists) if dists else 0.0
        self._prev = lm
        if self.state == IDLE:
            if moved >= self.start_threshold:
                self.state = RECORDING
                self._still = 0
        else:
            if moved <= self.stop_threshold:
                self._still += 1
                if self._still >= self.stop_hold:
                    self.state = IDLE
            else:
                self._still = 0
        return self.state


class NullRenderer:
    """Counts events without drawing; base class for test recorders."""

    def frame(self, lm: FrameLandmarks, state: str) -> None:
        pass

    def top5(self, entries: list[dict]) -> None:
        pass

    def close(self) -> None:
        pass


class TerminalRenderer(NullRenderer):
    """Minimal text overlay: status line, top-5 list, ASCII skeleton."""

    WIDTH, HEIGHT = 64, 18

    def __init__(self, out=None):
        self.out = out if out is not None else sys.stdout
        self._latest: list[dict] = []
        self._last_frame = None

    def _canvas(self, lm: FrameLandmarks) -> list[str]:
        grid = [[" "] * self.WIDTH for _ in range(self.HEIGHT)]
        for p in lm.points:
            if p is None:
                continue
            x = min(max(int(p[0] * self.WIDTH), 0), self.WIDTH - 1)
            y = min(max(int(p[1] * self.HEIGHT), 0), self.HEIGHT - 1)
            grid[y][x] = "o"
        return ["".join(row) for row in grid]

    def frame(self, lm: FrameLandmarks, state: str) -> None:
        self._last_frame = (lm, state)
        lines = [f"[{state}]  detected {lm.detected()}/48 joints"]
        for i, e in enumerate(self._latest, start=1):
            lines.append(f"  {i}. {e['label']:<20s} {e['probability']:.3f}")
        lines += self._canvas(lm)
        self.out.write("\x1b[H\x1b[J" + "\n".join(lines) + "\n")
        self.out.flush()

    def top5(self, entries: list[dict]) -> None:
        self._latest = entries
        if self._last_frame is not None:
            self.frame(*self._last_frame)   # show the answer immediately


@dataclass
class LiveSession:
    source: object                      # iterable of CapturedFrame
    engine_argv: list[str]              # e.g. [engine, "stream", "--checkpoint", ...]
    renderer: NullRenderer
    target_fps: float = 15.0
    backend: object = None              # needed only for pixel sources
    queue_size: int = 8
    quit_event: threading.Event = field(default_factory=threading.Event)


def run_live_demo(session: LiveSession) -> int:
    """Returns a process exit code: 0 clean, 2 on an unrecoverable engine pipe."""
    frame_q = DropOldestQueue(session.queue_size)
    render_q = DropOldestQueue(session.queue_size)
    capture_done = threading.Event()
    extract_done = threading.Event()
    fatal: list[str] = []

    engine = EngineClient(session.engine_argv)
    indicator = MotionIndicator()
    backend = session.backend

    live = bool(getattr(session.source, "live", False))

    def capture_loop():
        abort = lambda: (session.quit_event.is_set() or bool(fatal)
                         or extract_done.is_set())
        try:
            for frame in session.source:
                if session.quit_event.is_set():
                    break
                if live:
                    frame_q.put(frame)            # never block a camera
                elif not frame_q.put_wait(frame, abort=abort):
                    break
        finally:
            capture_done.set()

    def resolve(frame) -> FrameLandmarks:
        nonlocal backend
        if frame.landmarks is not None:
            return frame.landmarks
        if backend is None:
            from .backends import MediapipeBackend
            backend = MediapipeBackend()
        return backend.process(frame.pixels, ts=frame.ts)

    def extract_loop():
        nonlocal engine
        interval = 1.0 / session.target_fps
        next_tick: Optional[float] = None
        reconnected = False
        state = IDLE
        try:
            while not (capture_done.is_set() and frame_q.empty()):
                if session.quit_event.is_set() or fatal:
                    return
                try:
                    frame = frame_q.get(timeout=0.05)
                except queue.Empty:
                    continue
                try:
                    lm = resolve(frame)
                except BackendUnavailable as exc:
                    fatal.append(str(exc))
                    return
                due = True
                if lm.ts is not None:
                    if next_tick is None:
                        next_tick = lm.ts
                    due = lm.ts >= next_tick
                    while next_tick <= lm.ts:
                        next_tick += interval
                if due:
                    # the indicator tracks the frames the engine sees, so
                    # its state mirrors the engine's own motion gate
                    state = indicator.update(lm)
                    try:
                        engine.send(lm)
                    except PipeBroken:
                        if reconnected:
                            fatal.append("engine pipe broke twice, giving up")
                            return
                        reconnected = True
                        engine.close()
                        try:
                            engine = EngineClient(session.engine_argv)
                            engine.send(lm)
                        except PipeBroken as exc:
                            fatal.append(str(exc))
                            return
                render_q.put((lm, state))
        finally:
            extract_done.set()

    threads = [threading.Thread(target=capture_loop, daemon=True),
               threading.Thread(target=extract_loop, daemon=True)]
    for t in threads:
        t.start()

    seen = 0
    try:
        while not (extract_done.is_set() and render_q.empty()):
            try:
                lm, state = render_q.get(timeout=0.05)
                session.renderer.frame(lm, state)
            except queue.Empty:
                pass
            while seen < len(engine.predictions):
                session.renderer.top5(engine.predictions[seen].get("top", []))
                seen += 1
            if session.quit_event.is_set():
                break
        for t in threads:
            t.join(timeout=30)
        engine.close()
        # predictions for clips flushed at end-of-stream land after close()
        while seen < len(engine.predictions):
            session.renderer.top5(engine.predictions[seen].get("top", []))
            seen += 1
    finally:
        session.renderer.close()

    if fatal:
        print(f"capture-client demo: {fatal[0]}", file=sys.stderr)
        return 2
    return 0
