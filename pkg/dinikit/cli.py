"""Command line entry point: ``dinikit run|check|families|report``."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Iterable, List, Optional

from pydantic import ValidationError

from .config import load_settings
from .exceptions import DiniKitError
from .registry import list_families
from .runner import ScenarioRunner
from .scenario import Report, Scenario, dump_scenario, load_scenario
from .store import DirectoryArtifactStore

logger = logging.getLogger(__name__)

BUNDLED_DIR = Path(__file__).parent / "scenarios"


def bundled_scenarios() -> List[Path]:
    return sorted(BUNDLED_DIR.glob("*.json"))


def resolve_scenario(ref: str) -> Scenario:
    """Load a scenario by path, or by the name of a bundled scenario."""
    path = Path(ref)
    if not path.exists():
        candidate = BUNDLED_DIR / f"{ref}.json"
        if candidate.exists():
            path = candidate
    return load_scenario(path)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dinikit", description="Dini mean oscillation regularity toolkit"
    )
    ap.add_argument("--debug", action="store_true", help="enable debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run scenarios and write reports")
    run_p.add_argument(
        "scenarios", nargs="+", help="scenario files or bundled scenario names"
    )
    run_p.add_argument("--out", help="output directory (default: DINIKIT_OUT or ./out)")
    run_p.add_argument("--jobs", type=int, help="parallel stages")
    run_p.add_argument("--seed", type=int, help="seed for point-pair sampling")
    run_p.add_argument(
        "--grid-override", type=int, help="replace every grid list by this size"
    )

    check_p = sub.add_parser("check", help="validate scenario files against the schema")
    check_p.add_argument("scenarios", nargs="+")
    check_p.add_argument(
        "--canonical", action="store_true", help="print the canonical form"
    )

    fam_p = sub.add_parser("families", help="list registered generators")
    fam_p.add_argument("--kind", choices=("coefficient", "domain", "data"))
    fam_p.add_argument(
        "--json", action="store_true", help="print parameter schemas as JSON"
    )

    rep_p = sub.add_parser(
        "report", help="re-render report summaries from an output directory"
    )
    rep_p.add_argument("directory")
    return ap


def _cmd_run(args: argparse.Namespace) -> int:
    settings = load_settings().with_overrides(
        out=args.out, jobs=args.jobs, seed=args.seed
    )
    if args.debug:
        settings = settings.with_overrides(log_level="DEBUG")
    runner = ScenarioRunner(
        settings=settings,
        store=DirectoryArtifactStore(settings.out),
        grid_override=args.grid_override,
        debug=args.debug,
    )
    status = 0
    for ref in args.scenarios:
        scenario = resolve_scenario(ref)
        if args.seed is not None:
            scenario = scenario.model_copy(update={"seed": args.seed})
        report = runner.run(scenario)
        print(report.summary())
        if not report.passed:
            status = 1
    return status


def _cmd_check(args: argparse.Namespace) -> int:
    for ref in args.scenarios:
        scenario = resolve_scenario(ref)
        if args.canonical:
            print(dump_scenario(scenario), end="")
        else:
            print(f"{scenario.name}: ok ({len(scenario.checks)} checks)")
    return 0


def _cmd_families(args: argparse.Namespace) -> int:
    entries = list_families(args.kind)
    if args.json:
        print(json.dumps([e.to_dict() for e in entries], indent=2, sort_keys=True))
        return 0
    for entry in entries:
        params = ", ".join(entry.parameters["properties"])
        print(f"{entry.kind:<12} {entry.name:<14} ({params})  {entry.description}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    root = Path(args.directory)
    paths = sorted(root.glob("**/report/report.json"))
    if not paths:
        print(f"No reports under {root}", file=sys.stderr)
        return 1
    status = 0
    for path in paths:
        try:
            report = Report.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            print(
                f"{path}: unreadable report ({exc.error_count()} errors)",
                file=sys.stderr,
            )
            status = 1
            continue
        print(report.summary())
        if not report.passed:
            status = 1
    return status


def main(argv: Optional[Iterable[str]] = None) -> int:
    args = _build_parser().parse_args(None if argv is None else list(argv))
    handlers = {
        "run": _cmd_run,
        "check": _cmd_check,
        "families": _cmd_families,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except DiniKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        logger.debug("CLI failure", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
