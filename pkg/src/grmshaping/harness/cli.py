"""Command line entry point.

Exit codes: 0 success, 1 a run or verification failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..envs import TabularMdp
from ..errors import CapacityError, ConfigError
from ..intrinsic import CountBonus
from ..oracle import policy_preservation_check
from ..shaping import parse_matching
from .config import load_config, parse_value
from .plot import plot
from .runner import run_experiment
from .verify import DEFAULT_SPECS, FAMILIES, verify_sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _emit(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(stats: dict) -> str:
    if stats["mean"] is None:
        return "n/a"
    return f"{stats['mean']:.3f} +- {stats['std']:.3f}"


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replace("output_dir", args.out)
    result = run_experiment(cfg)
    s = result.summary
    print(f"{cfg.name}: greedy return {_fmt(s['greedy_return'])}, length {_fmt(s['greedy_length'])}, "
          f"{s['failed']}/{s['replicates']} failed" + (f" -> {result.out_dir}" if result.out_dir else ""))
    return EXIT_FAIL if result.any_failed else EXIT_OK


def cmd_verify(args) -> int:
    specs = args.spec or list(DEFAULT_SPECS)
    if args.mdp:
        try:
            mdp = TabularMdp.from_json(Path(args.mdp).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load MDP from {args.mdp}: {exc}") from None
        reports = {}
        ok = True
        for spec in specs:
            try:
                rep = policy_preservation_check(mdp, CountBonus(args.alpha), parse_matching(spec), args.tol)
            except CapacityError as exc:
                raise ConfigError(str(exc)) from None
            reports[spec] = rep.to_dict()
            ok &= rep.passed
        _emit({"mdp": args.mdp, "alpha": args.alpha, "reports": reports}, args.out)
        return EXIT_OK if ok else EXIT_FAIL
    if args.count is None:
        raise ConfigError("verify needs --count or --mdp")
    report = verify_sweep(args.count, args.seed, specs, args.family, args.alpha, args.tol)
    _emit(report.to_dict(), args.out)
    tally = report.tally()
    for spec in specs:
        t = tally[spec]
        print(f"{spec}: {t['pass']} pass, {t['fail']} fail, {t['skipped']} skipped", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_plot(args) -> int:
    for path in plot(args.dir, args.window):
        print(path)
    return EXIT_OK


def _parse_params(items: Sequence[str]) -> list[tuple[str, list]]:
    out = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise ConfigError(f"--param expects key=v1,v2,... got {item!r}")
        out.append((key.strip(), [parse_value(v.strip()) for v in values.split(",")]))
    return out


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    params = _parse_params(args.param)
    root = Path(args.out or base.output_dir or "runs") / base.name
    variants = []
    for combo in itertools.product(*(vals for _, vals in params)):
        cfg = base
        tag = []
        for (key, _), value in zip(params, combo):
            cfg = cfg.replace(key, value)
            tag.append(f"{key}={value}")
        variants.append(("__".join(tag), cfg))
    failed = False
    index = []
    for tag, cfg in variants:
        result = run_experiment(cfg, root / tag)
        failed |= result.any_failed
        s = result.summary
        index.append({"variant": tag, "greedy_return": s["greedy_return"],
                      "greedy_length": s["greedy_length"], "failed": s["failed"]})
        print(f"{tag}: greedy return {_fmt(s['greedy_return'])}, length {_fmt(s['greedy_length'])}")
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grmshaping", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train all replicates of one config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides config and GRM_OUT)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="brute-force optimal-policy preservation checks")
    ver.add_argument("--count", type=int)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--spec", action="append", help="matching spec; repeatable (default: the four shipped)")
    ver.add_argument("--family", choices=FAMILIES, default="random")
    ver.add_argument("--mdp", help="TabularMdp JSON file to check instead of a random sweep")
    ver.add_argument("--alpha", type=float, default=1.0, help="count-bonus coefficient")
    ver.add_argument("--tol", type=float, default=1e-9)
    ver.add_argument("--out", help="write the JSON report here instead of stdout")
    ver.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", help="render SVGs for a run directory")
    pl.add_argument("dir")
    pl.add_argument("--window", type=int, default=50)
    pl.set_defaults(func=cmd_plot)

    sw = sub.add_parser("sweep", help="grid sweep over config keys")
    sw.add_argument("config")
    sw.add_argument("--param", action="append", required=True, help="key=v1,v2,... ; repeatable")
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
