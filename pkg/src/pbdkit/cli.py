"""Command line: run scripted scenarios and verify audit logs.

Exit codes: 0 success, 1 expectation failure or tampered log, 2 config error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from .audit import verify_audit_file
from .rules import RuleError, load_rules
from .scenarios import SCENARIOS, ConfigError, render_report, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        result = run_scenario(args.scenario, args.config, args.seed, args.rules, args.manifests)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render_report(result.report())
    if args.report_out:
        Path(args.report_out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.audit_out:
        out = Path(args.audit_out)
        out.mkdir(parents=True, exist_ok=True)
        for name, log in result.audit_logs().items():
            log.write(out / (re.sub(r"[^A-Za-z0-9_.-]", "-", name) + ".audit"))
    for s in result.steps:
        if not s.ok:
            print(f"step {s.index} ({s.step}): expected {s.expected}, got {s.outcome}", file=sys.stderr)
    for name, ok in result.invariants.items():
        if not ok:
            print(f"invariant failed: {name}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAIL


def _cmd_audit_verify(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.is_file():
        print(f"no such file: {path}", file=sys.stderr)
        return EXIT_CONFIG
    verdict = verify_audit_file(path)
    if verdict.ok:
        print(f"ok: {verdict.entries} entries")
        return EXIT_OK
    print(f"tampered: first bad entry {verdict.first_bad} ({verdict.detail})")
    return EXIT_FAIL


def _cmd_check_rules(args: argparse.Namespace) -> int:
    try:
        rules = load_rules(args.path)
    except (OSError, RuleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in rules:
        print(r.to_line())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbdkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scripted scenario and print its report")
    run.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    run.add_argument("--config", help="scenario config (default: bundled fixture)")
    run.add_argument("--seed", type=int, help="overrides the config's seed")
    run.add_argument("--rules", help="rules file (default: bundled fixture)")
    run.add_argument("--manifests", help="directory of *.manifest files")
    run.add_argument("--audit-out", help="directory to write every audit log into")
    run.add_argument("--report-out", help="write the report here instead of stdout")
    run.set_defaults(func=_cmd_run)

    av = sub.add_parser("audit-verify", help="check an audit log's hash chain")
    av.add_argument("path")
    av.set_defaults(func=_cmd_audit_verify)

    cr = sub.add_parser("check-rules", help="parse a rules file and print it canonically")
    cr.add_argument("path")
    cr.set_defaults(func=_cmd_check_rules)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
