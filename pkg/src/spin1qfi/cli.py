"""Command-line entry point: ``spin1qfi run|fit|verify``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exact import verify_appendix_identities
from .sweep import (ConfigError, StrictModeError, fit_records, load_config,
                    load_fit_rules, read_records, run_sweep)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_STRICT = 0, 1, 2, 3


def _cmd_run(args):
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers,
                          strict=True if args.strict else None)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        cfg.output = args.output
    if args.m_max_sites is not None:
        cfg.m_max_sites = args.m_max_sites
    try:
        res = run_sweep(cfg)
    except StrictModeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRICT
    n_bad = sum(not r.converged for r in res.records)
    print(f"{len(res.records)} records, {len(res.fits)} fits -> {cfg.output}"
          + (f" ({n_bad} unconverged)" if n_bad else ""))
    for f in res.fits + res.correlator_fits:
        params = ", ".join(f"{k}={v:.6g}+-{f.stderr[k]:.2g}" for k, v in f.params.items())
        print(f"  {f.label}: {f.family} {params}")
    return EXIT_OK


def _cmd_fit(args):
    try:
        records = read_records(args.records)
        rules = load_fit_rules(args.config) if args.config else {}
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fits = fit_records(records, rules)
    out = Path(args.output) if args.output else Path(args.records).with_name("fits.json")
    out.write_text(json.dumps([f.to_dict() for f in fits], indent=2) + "\n")
    for f in fits:
        params = ", ".join(f"{k}={v:.6g}+-{f.stderr[k]:.2g}" for k, v in f.params.items())
        print(f"{f.label}: {f.family} {params}")
    return EXIT_OK


def _cmd_verify(args):
    ok = True
    for N in range(args.min_n, args.max_n + 1):
        rep = verify_appendix_identities(N, beta=args.beta)
        print(rep.summary())
        ok &= rep.passed
    print("all identities hold" if ok else "identity check FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="spin1qfi", description="QFI of spin-1 chain ground states")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sweep from a YAML configuration")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None,
                   help="parallel DMRG tasks (overrides config and SPIN1QFI_WORKERS)")
    r.add_argument("--strict", action="store_true", help="exit 3 if any DMRG run is unconverged")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("-o", "--output", default=None, help="output directory (overrides config)")
    r.add_argument("--m-max-sites", type=int, default=None,
                   help="include the M matrix in reports.jsonl only up to this N")
    r.set_defaults(func=_cmd_run)

    f = sub.add_parser("fit", help="re-fit an existing records.csv")
    f.add_argument("records")
    f.add_argument("--config", default=None, help="take fit rules from this sweep config")
    f.add_argument("-o", "--output", default=None)
    f.set_defaults(func=_cmd_fit)

    v = sub.add_parser("verify", help="check the Kennedy-Tasaki identities on small chains")
    v.add_argument("--min-n", type=int, default=3)
    v.add_argument("--max-n", type=int, default=6)
    v.add_argument("--beta", type=float, default=0.0)
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
