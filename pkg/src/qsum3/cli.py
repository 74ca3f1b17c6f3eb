"""Command-line front end.

Exit codes: 0 success, 1 aborts present and ``--fail-on-abort`` given,
2 invalid arguments or attack parameters.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adversary import (
    AttackKind,
    AttackStrategy,
    EveUnitaryParams,
    InvalidAttackParams,
    entangle_measure_detection,
    entangle_measure_leakage,
    entangle_measure_run_detection,
    probe_trace_distance,
)
from .harness import RunSpec, efficiency_table, monte_carlo
from .protocol import ProtocolConfig

ATTACK_KINDS = [k.value for k in AttackKind if k is not AttackKind.NONE]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("protocol and batch options")
    g.add_argument("--n", type=int, default=16, help="message length in bits")
    g.add_argument("--delta", type=int, default=8, help="padding parameter")
    g.add_argument("--gamma-b", type=int, default=16, help="Bob's decoy count")
    g.add_argument("--gamma-c", type=int, default=16, help="Charlie's decoy count")
    g.add_argument("--seed", type=int, default=0, help="master seed (64-bit)")
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--tolerance", type=float, default=0.0, help="accepted decoy error fraction")
    g.add_argument("--alpha", type=float, default=1e-6, help="significance of the summation-count audit")
    g.add_argument("--strict", action="store_true", help="audit direct announcements on every pair")
    g.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--timing", action="store_true", help="record wall-clock duration in the report")
    g.add_argument("--fail-on-abort", action="store_true", help="exit 1 if any run aborted")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    # protocol options are accepted after the subcommand name
    parser = argparse.ArgumentParser(prog="qsum3", description="Three-user quantum summation simulator.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    sub.add_parser("run-honest", parents=[common], help="batch of honest runs")

    a = sub.add_parser("run-attack", parents=[common], help="batch of attacked runs")
    a.add_argument("--attack", required=True, choices=ATTACK_KINDS)
    a.add_argument("--channel", choices=("bob", "charlie", "both"), default="bob",
                   help="sequence(s) an outside eavesdropper intercepts")
    a.add_argument("--params-file", type=Path, help="entangle-measure parameter document (JSON)")

    e = sub.add_parser("efficiency", parents=[common], help="qubit efficiency table")
    e.add_argument("--L", type=int, default=1)
    e.add_argument("--m", type=int, default=1)
    e.add_argument("--d", type=int, default=1)

    c = sub.add_parser("check-entangle", parents=[common], help="analyse entangle-measure parameters")
    c.add_argument("--params-file", type=Path, required=True)
    return parser


def load_params(path: Path) -> EveUnitaryParams:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidAttackParams(f"cannot read {path}: {exc}") from exc
    return EveUnitaryParams.from_dict(doc)


def _emit(doc: dict, args, csv_text: str | None = None) -> None:
    text = csv_text if args.format == "csv" and csv_text is not None else None
    if text is None and args.format == "csv":
        rows = ["metric,value"] + [f"{k},{v}" for k, v in sorted(doc.items())]
        text = "\n".join(rows) + "\n"
    if text is None:
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)


def _config(args) -> ProtocolConfig:
    return ProtocolConfig(args.n, args.delta, args.gamma_b, args.gamma_c, args.seed,
                          args.tolerance, args.alpha, args.strict)


def _run(args) -> int:
    if args.cmd == "efficiency":
        table = efficiency_table(args.n, args.delta, args.L, args.m, args.d)
        doc = {k: f"{v.numerator}/{v.denominator}" for k, v in table.items()}
        _emit(doc, args)
        return 0

    if args.cmd == "check-entangle":
        p = load_params(args.params_file)
        det = entangle_measure_detection(p)
        doc = {
            "detection": {s.name: det[s] for s in det},
            "run_detection": entangle_measure_run_detection(p, args.gamma_b),
            "probe_trace_distance": probe_trace_distance(p),
        }
        try:
            doc["leakage"] = entangle_measure_leakage(p)
        except InvalidAttackParams as exc:
            doc["leakage"] = None
            doc["leakage_error"] = str(exc)
        if args.format == "csv":
            flat = {f"detection.{k}": v for k, v in doc.pop("detection").items()}
            flat.update(doc)
            _emit(flat, args)
        else:
            _emit(doc, args)
        return 0

    if args.trials < 1:
        raise InvalidAttackParams("--trials must be >= 1")
    if args.cmd == "run-honest":
        attack = AttackStrategy()
    else:
        channels = ("bob", "charlie") if args.channel == "both" else (args.channel,)
        params = None
        if args.attack == AttackKind.ENTANGLE_MEASURE.value:
            if args.params_file is None:
                raise InvalidAttackParams("entangle-measure requires --params-file")
            params = load_params(args.params_file)
        attack = AttackStrategy(AttackKind(args.attack), channels, params)
    report = monte_carlo(RunSpec(_config(args), attack, args.trials))
    _emit(report.to_dict(args.timing), args, report.to_csv(args.timing))
    if args.fail_on_abort and report.completed < args.trials:
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args)
    except (ValueError, ZeroDivisionError) as exc:
        parser.print_usage(sys.stderr)
        print(f"qsum3: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
