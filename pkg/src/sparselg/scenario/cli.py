"""Command-line entry point: ``simulate``, ``convergence`` and ``scenario``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..integrator import SimulationError
from .builtins import builtin_dict, builtin_scenarios
from .config import ConfigError, load_scenario, parse_scenario
from .convergence import TRUTH_ITERS, convergence_study, write_convergence_csv
from .io import LogWriter, write_frame

log = logging.getLogger("sparselg")


def _load(arg: str):
    """A config path, or ``builtin:<name>`` for a built-in scenario."""
    if arg.startswith("builtin:"):
        return parse_scenario(builtin_dict(arg.split(":", 1)[1]))
    return load_scenario(arg)


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    frames = cfg.frames if args.frames is None else args.frames
    out_dir = args.out or cfg.output.directory
    log_path = args.log or cfg.output.log
    sim = cfg.simulator()
    faces = sim.model.mesh.faces
    writer = LogWriter(log_path) if log_path else None
    try:
        if out_dir:
            write_frame(sim.x, faces, 0, out_dir)
        for _ in range(frames):
            report = sim.step()
            if writer:
                writer.write(report.records)
            if out_dir and report.frame % cfg.output.stride == 0:
                write_frame(sim.x, faces, report.frame, out_dir)
            log.info("frame %d: %d contacts, max penetration %.3g", report.frame, report.n_contacts, report.max_penetration)
    except SimulationError as exc:
        print(f"error: {exc} (last good frame {exc.last_good_frame})", file=sys.stderr)
        return 2
    finally:
        if writer:
            writer.close()
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_convergence(args) -> int:
    cfg = _load(args.config)
    records = convergence_study(cfg, args.stiffness, args.max_iters, frame=args.frame, truth_iters=args.truth_iters)
    write_convergence_csv(records, args.out, args.truth_iters)
    for r in records:
        if r.diverged:
            log.warning("%s baseline diverged at E=%g, iteration %d", r.method, r.stiffness, r.iteration)
    return 0


def cmd_scenario(args) -> int:
    try:
        cfg = builtin_dict(args.name)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    if args.emit == "config":
        json.dump(cfg, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparselg", description="Local-global soft-body simulation with frictional contact.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario config and write frames and logs")
    s.add_argument("config", help="JSON config path, or builtin:<name>")
    s.add_argument("--frames", type=int)
    s.add_argument("--out", help="directory for frame_%%05d.obj files")
    s.add_argument("--log", help="per-iteration CSV log")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("convergence", help="relative-error study on a frozen frame")
    c.add_argument("config")
    c.add_argument("--stiffness", type=_floats, default=[1e5, 1e7, 1e9])
    c.add_argument("--max-iters", type=int, default=1000)
    c.add_argument("--frame", type=int, default=30, help="frame to freeze")
    c.add_argument("--truth-iters", type=int, default=TRUTH_ITERS)
    c.add_argument("--out", required=True, help="CSV output path")
    c.set_defaults(func=cmd_convergence)

    n = sub.add_parser("scenario", help="built-in scenarios")
    n.add_argument("name", help=f"one of: {', '.join(sorted(builtin_scenarios()))}")
    n.add_argument("--emit", choices=["config"], default="config")
    n.set_defaults(func=cmd_scenario)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
