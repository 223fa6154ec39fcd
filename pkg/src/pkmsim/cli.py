"""Command line: ``pkmsim {matrix,attack,overhead,trace}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .attacks import VICTIM, adversary_initial, new_world
from .config import ATTACK_NAMES, PROTOCOL_NAMES, ScenarioConfig, ScenarioError, load
from .matrix import ReportWriteError, emit_reports, overheads_for, restrict, run_matrix
from .netsim import Adversary
from .protocol import ProtocolId

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file (see scenario.schema.json)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out-dir", help="directory for reports (default from scenario)")
    common.add_argument("--protocol", choices=PROTOCOL_NAMES, help="restrict to one protocol")
    common.add_argument("--attack", choices=ATTACK_NAMES, help="restrict to one attack")
    common.add_argument("--check", action="store_true",
                        help="exit 1 unless every verdict equals the expected matrix")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="pkmsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("matrix", parents=[common], help="run the attack matrix and write every report")
    sub.add_parser("attack", parents=[common], help="run selected attack cells")
    sub.add_parser("overhead", parents=[common], help="write the analytical overhead report")
    sub.add_parser("trace", parents=[common], help="write the event trace of one honest or attacked join")
    return ap


def _scenario(args) -> ScenarioConfig:
    overrides = {"seed": args.seed, "out_dir": args.out_dir}
    cfg = load(args.config, overrides)
    return restrict(cfg, args.protocol, args.attack)


def _print_matrix(m, out) -> None:
    width = max(len(a.value) for a in m.attacks)
    print(" " * width + "  " + "  ".join(f"{p.value:<14}" for p in m.protocols), file=out)
    for a in m.attacks:
        cells = "  ".join(f"{m.verdict(a, p).value:<14}" for p in m.protocols)
        print(f"{a.value:<{width}}  {cells}", file=out)


def _report_mismatches(m, err) -> None:
    for a, p, want, got in m.mismatches():
        print(f"mismatch: {a.value}/{p.value} expected {want.value}, got {got.value}", file=err)


def cmd_matrix(cfg: ScenarioConfig, check: bool, out, err, *, write_overheads: bool = True) -> int:
    m = run_matrix(cfg)
    emit_reports(m, overheads_for(cfg) if write_overheads else None, m.traces(), cfg.out_dir, cfg)
    _print_matrix(m, out)
    if check:
        if not m.matches_expected():
            _report_mismatches(m, err)
            return EXIT_MISMATCH
        print("matrix matches expected", file=out)
    return EXIT_OK


def cmd_attack(cfg: ScenarioConfig, check: bool, out, err) -> int:
    m = run_matrix(cfg)
    emit_reports(m, None, m.traces(), cfg.out_dir, cfg)
    for a, p, o in m.cells():
        print(f"{a.value} {p.value}: {o.verdict.value}"
              + (f" ({o.reason})" if o.reason else ""), file=out)
        print("  " + json.dumps(o.metrics, sort_keys=True, default=str), file=out)
    if check and not m.matches_expected():
        _report_mismatches(m, err)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_overhead(cfg: ScenarioConfig, out) -> int:
    report = overheads_for(cfg)
    emit_reports(None, report, None, cfg.out_dir)
    print(report.to_csv(), end="", file=out)
    for name, ok in report.orderings.items():
        print(f"{name}: {ok}", file=out)
    return EXIT_OK


def cmd_trace(cfg: ScenarioConfig, attack: Optional[str], out) -> int:
    p = ProtocolId(cfg.protocols[0])
    if attack:
        m = run_matrix(restrict(cfg, p.value, attack))
        text = m.traces()
    else:
        w = new_world(p, cfg, cfg.seed, Adversary(adversary_initial()))
        w.schedule_join(VICTIM, 0.0)
        w.run_until(60.0)
        text = "\n".join(w.trace) + "\n"
    emit_reports(None, None, text, cfg.out_dir)
    print(text, end="", file=out)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _scenario(args)
        if args.command == "matrix":
            return cmd_matrix(cfg, args.check, out, err)
        if args.command == "attack":
            return cmd_attack(cfg, args.check, out, err)
        if args.command == "overhead":
            return cmd_overhead(cfg, out)
        return cmd_trace(cfg, args.attack, out)
    except (ScenarioError, ReportWriteError) as e:
        print(f"pkmsim: {e}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
