"""Command line entry point.

Exit status: 0 on success, 1 on invalid input, 2 when a gradient check
exceeds its tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from ..mot_metrics import evaluate
from ..tracker import TrackerConfig
from .gradcheck import TOLERANCE, failures, gradcheck_all
from .io import read_tracks_csv, read_tracks_json, to_trajectories, write_tracks_csv, write_tracks_json
from .pipeline import run_tracker
from .scenario import Scenario, ScenarioConfig, generate_scenario

log = logging.getLogger("detrack")

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 1, 2


def _categories(text: str | None, scenario: Scenario) -> list[str]:
    if text is None:
        return list(scenario.config.categories)
    # commas allow multi-word names: "traffic light, car"
    parts = text.split(",") if "," in text else text.split()
    cats = [p.strip() for p in parts if p.strip()]
    if not cats:
        raise ValueError("empty prompt")
    missing = set(cats) - set(scenario.config.categories)
    if missing:
        raise ValueError(f"prompt categories not in scenario: {sorted(missing)}")
    return cats


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else ScenarioConfig()
    generate_scenario(cfg).save(args.out)
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_track(args) -> int:
    scenario = Scenario.load(args.scenario)
    cfg = TrackerConfig.from_dict(json.loads(Path(args.tracker).read_text())) if args.tracker else TrackerConfig()
    outputs, _ = run_tracker(scenario, cfg, _categories(args.prompt, scenario))
    write_tracks_csv(outputs, args.out)
    write_tracks_json(outputs, Path(args.out).with_suffix(".json"))
    log.info("wrote %d track boxes to %s", sum(len(f) for f in outputs), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenario = Scenario.load(args.scenario)
    path = Path(args.tracks)
    rows = read_tracks_json(path) if path.suffix == ".json" else read_tracks_csv(path)
    cats = _categories(args.prompt, scenario)
    report = evaluate(scenario.gt.only(cats), to_trajectories(rows), args.iou)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = gradcheck_all(args.seed, args.fixtures)
    for name, r in reports.items():
        status = "ok" if r.max_rel_err < TOLERANCE else "FAIL"
        print(f"{name:28s} max_rel_err={r.max_rel_err:.3e} max_abs_err={r.max_abs_err:.3e} {status}")
    return EXIT_TOLERANCE if failures(reports) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="detrack", description="Synthetic detection/tracking harness.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    s.add_argument("--config", help="ScenarioConfig JSON (defaults if omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="run the tracker over a scenario")
    t.add_argument("--scenario", required=True)
    t.add_argument("--tracker", help="TrackerConfig JSON")
    t.add_argument("--prompt", help='categories to track, e.g. "person car"')
    t.add_argument("--out", required=True, help="CSV path; a .json mirror is written next to it")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="score tracks against scenario ground truth")
    e.add_argument("--scenario", required=True)
    e.add_argument("--tracks", required=True, help="CSV or JSON track file")
    e.add_argument("--prompt", help="restrict ground truth to these categories")
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("gradcheck", help="verify analytic loss gradients")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--fixtures", type=int, default=50)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("TRIVD_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
