"""capture-client command line: batch `extract` and live `demo`."""

from __future__ import annotations

import argparse
import sys
import threading

from .backends import BackendUnavailable
from .demo import LiveSession, PipeBroken, TerminalRenderer, run_live_demo
from .extract import ExtractionJob, LabelMissing, extract_landmarks
from .sources import CameraSource, CameraUnavailable, SyntheticSource, UnreadableVideo
from .synth import BadScript

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; keep 2 for data problems instead
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def cmd_extract(args) -> int:
    job = ExtractionJob(inputs=args.inputs, out_path=args.out,
                        label_source=args.label_from)
    summary = extract_landmarks(job)
    for path, reason in summary.skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    print(f"files {summary.files} skipped {len(summary.skipped)} "
          f"frames {summary.frames} missing_frames {summary.frames_missing}")
    return 0


def _quit_watcher(event: threading.Event) -> None:
    """Arm a 'q'-to-quit key watcher when stdin is an interactive terminal."""
    if not sys.stdin.isatty():
        return
    try:
        import termios
        import tty
    except ImportError:
        return

    def watch():
        fd = sys.stdin.fileno()
        old = termios.tcgetattr(fd)
        try:
            tty.setcbreak(fd)
            while not event.is_set():
                if sys.stdin.read(1) == "q":
                    event.set()
        finally:
            termios.tcsetattr(fd, termios.TCSADRAIN, old)

    threading.Thread(target=watch, daemon=True).start()


def cmd_demo(args) -> int:
    if args.injector is not None:
        source = SyntheticSource(args.injector)
    else:
        source = CameraSource(args.camera)
    engine_argv = [args.engine, "stream",
                   "--checkpoint", args.checkpoint,
                   "--top-k", str(args.top_k)]
    session = LiveSession(source=source, engine_argv=engine_argv,
                          renderer=TerminalRenderer(), target_fps=args.fps)
    _quit_watcher(session.quit_event)
    return run_live_demo(session)


def _build_parser() -> _Parser:
    parser = _Parser(prog="capture-client",
                     description="Landmark capture: batch extraction and live demo.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser("extract", help="videos in, landmark CSV out")
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   help="video file, .synth script, or directory (repeatable)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--label-from", default="filename",
                   help="'filename' (default) or 'manifest:<json path>'")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("demo", help="live capture against a stream engine")
    p.add_argument("--camera", type=int, default=0, help="camera index")
    p.add_argument("--engine", required=True, help="path to the classifier binary")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--injector", help=".synth script standing in for the camera")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--fps", type=float, default=15.0, help="target send rate")
    p.set_defaults(fn=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return args.fn(args)
    except (UnreadableVideo, CameraUnavailable, LabelMissing, BadScript,
            BackendUnavailable, PipeBroken, OSError) as exc:
        print(f"capture-client {args.command}: {exc}", file=sys.stderr)
        return DATA_ERROR
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
