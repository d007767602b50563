"""Command line entry point: ``audit run | scan | report | data describe``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audit import AllMethodsFailed, AuditBundle, AuditConfig, ConfigError, run_audit, run_scan
from .data import DataError, describe, load_registered, synth_biased
from .report import ReportError, render, table1_markdown, table2_markdown

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ALL_FAILED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="audit", description="Fairness mitigation audit with knock-on effect analysis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run the full audit")
    _config_args(run)
    run.add_argument("--methods", help="comma-separated subset of lfr,dir,pr,roc,eo,ceo")
    run.add_argument("--k", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output directory (default: audit-out)")

    sc = sub.add_parser("scan", help="bias scan of the biased model only")
    _config_args(sc)

    rep = sub.add_parser("report", help="render a saved bundle")
    rep.add_argument("--bundle", required=True)
    rep.add_argument("--format", choices=("md", "json", "rules"), default="md")
    rep.add_argument("--out", help="write files here instead of printing")

    data = sub.add_parser("data", help="dataset utilities")
    dsub = data.add_subparsers(dest="data_command", required=True, parser_class=_Parser)
    d = dsub.add_parser("describe", help="summarize a dataset")
    d.add_argument("--dataset", required=True)
    d.add_argument("--path")
    d.add_argument("--seed", type=int, default=0)
    return p


def _config_args(p):
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--dataset")
    p.add_argument("--path")
    p.add_argument("--seed", type=int)


def _config(args) -> AuditConfig:
    base = AuditConfig.load(args.config)
    overrides = {}
    for key in ("dataset", "path", "seed", "k", "workers", "out"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "methods", None):
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if not overrides:
        return base
    return AuditConfig.from_dict({**base.to_dict(), **overrides})


def _cmd_run(args) -> int:
    config = _config(args)
    out = Path(config.out or "audit-out")
    status = EXIT_OK
    try:
        bundle = run_audit(config)
    except AllMethodsFailed as exc:
        bundle, status = exc.bundle, EXIT_ALL_FAILED
        print("error: every configured method failed", file=sys.stderr)
    for fmt in ("json", "md", "rules"):
        render(bundle, fmt, out)
    print(table1_markdown(bundle))
    print(table2_markdown(bundle))
    print(f"wrote {out}/bundle.json, {out}/tables.md and {out}/rules/")
    return status


def _cmd_scan(args) -> int:
    config = _config(args)
    results = run_scan(config)
    print(json.dumps([{"fold": i, **r.to_dict()} for i, r in enumerate(results)], indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        bundle = AuditBundle.from_json(Path(args.bundle).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: cannot read bundle: {exc}", file=sys.stderr)
        return EXIT_DATA
    files = render(bundle, args.format, args.out)
    if args.out is None:
        for name, text in files.items():
            if len(files) > 1:
                print(f"# == {name}")
            sys.stdout.write(text)
    return EXIT_OK


def _cmd_describe(args) -> int:
    if args.dataset == "synth_biased":
        ds = synth_biased(seed=args.seed)
    else:
        if not args.path:
            raise ConfigError("--path is required for registered datasets")
        ds = load_registered(args.dataset, args.path)
    print(json.dumps(describe(ds), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {"run": _cmd_run, "scan": _cmd_scan, "report": _cmd_report}
    handler = handlers.get(args.command, _cmd_describe)
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ReportError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
