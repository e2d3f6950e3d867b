"""Command line entry point: ``tilecraft <experiment> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .report import DEFAULT_FROZEN, apply_frozen, commit_id, freeze, load_frozen, write_frozen
from .runners import EXPERIMENTS, Setup

COMMANDS = list(EXPERIMENTS) + ["all"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tilecraft", description="Time-frequency experiments with frozen regression constants.")
    p.add_argument("command", choices=COMMANDS, help="experiment to run")
    p.add_argument("--grid-exponent", type=int, default=12, help="log2 of the number of samples (default 12)")
    p.add_argument("--scale-min", type=int, default=None, help="smallest tile scale (default: fitted to the frequency box)")
    p.add_argument("--scale-max", type=int, default=5, help="largest tile scale (default 5)")
    p.add_argument("--box-length", type=float, default=2048.0, help="length of the periodic box (default 2048)")
    p.add_argument("--kappa", type=float, default=10.0, help="decay exponent of the weight (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000, help="random phases in the principal-value sweep")
    p.add_argument("--output-dir", type=Path, default=None, help="write reports and timing sidecars here")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--freeze", action="store_true", help="record the metrics in the frozen-constant file")
    p.add_argument("--check", action="store_true", help="exit 1 if a metric regressed against the frozen file")
    p.add_argument("--frozen-file", type=Path, default=DEFAULT_FROZEN, help="frozen-constant file")
    p.add_argument("--config", type=Path, default=None, help="key=value lines that override the flags")
    return p


def read_config(path: Path) -> dict[str, str]:
    out = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Config values override flags; types follow the parser's actions."""
    conf = read_config(args.config)
    actions = {a.dest: a for a in parser._actions}
    for key, value in conf.items():
        if key not in actions or key in ("help", "config"):
            parser.error(f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            setattr(args, key, value.lower() in ("1", "true", "yes", "on"))
        elif act.type is not None:
            setattr(args, key, act.type(value))
        else:
            setattr(args, key, value)
        if act.choices is not None and getattr(args, key) not in act.choices:
            parser.error(f"invalid value {value!r} for {key}")


def setup_from_args(args: argparse.Namespace) -> Setup:
    return Setup(
        grid_exponent=args.grid_exponent,
        box_length=args.box_length,
        scale_min=args.scale_min,
        scale_max=args.scale_max,
        kappa=args.kappa,
        seed=args.seed,
        samples=args.samples,
    )


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config is not None:
            apply_config(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        print(f"tilecraft: {exc}", file=sys.stderr)
        return 2
    try:
        setup = setup_from_args(args)
        setup.universe
    except ValueError as exc:
        print(f"tilecraft: {exc}", file=sys.stderr)
        return 2

    names = list(EXPERIMENTS) if args.command == "all" else [args.command]
    frozen = load_frozen(args.frozen_file)
    reports, failed = [], []
    for name in names:
        rep = EXPERIMENTS[name](setup)
        failed += apply_frozen(rep, frozen, args.grid_exponent)
        reports.append(rep)
        if args.output_dir is not None:
            args.output_dir.mkdir(parents=True, exist_ok=True)
            stem = rep.experiment
            body = rep.to_json() if args.format == "json" else rep.to_csv()
            (args.output_dir / f"{stem}.{args.format}").write_text(body)
            (args.output_dir / f"{stem}.timing.json").write_text(json.dumps(rep.timing()) + "\n")
        if len(names) == 1:
            sys.stdout.write(rep.to_json() if args.format == "json" else rep.to_csv())
        else:
            state = "ok" if rep.passed else "REGRESSED"
            print(f"{rep.experiment}: {state} ({len(rep.metrics)} metrics, {rep.runtime:.1f}s)")

    if args.freeze:
        frozen = freeze(reports, load_frozen(args.frozen_file), args.grid_exponent, commit_id())
        path = write_frozen(frozen, args.frozen_file)
        print(f"froze {sum(m.mode != 'record' for r in reports for m in r.metrics)} metrics into {path}", file=sys.stderr)
    if args.check and failed:
        for mid in failed:
            print(f"regression: {mid}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
