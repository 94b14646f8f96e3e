"""Command-line entry point: ``pqglab <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments
from .config import apply_overrides, parse_config
from .errors import ConfigError, DomainError, FrameFormatError, NumericalError
from .thermo import ThermoParams

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("pqglab")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pqglab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", type=Path, required=config_required, help="YAML run configuration")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=_u64, default=None)
        sp.add_argument("--variant", choices=("continuous", "fast"), default=None)

    sp = sub.add_parser("run", help="integrate a PQG model and write frames and diagnostics")
    common(sp, config_required=True)
    sp.add_argument("--t-end", type=float, default=None, help="override dynamics.t_end [s]")

    sp = sub.add_parser("relaxation-study", help="relaxation of the column microphysics towards adjustment")
    common(sp)
    sp.add_argument("--n", type=_int_list, default=[1, 2, 3, 4, 5, 6], help="comma-separated exponents")
    sp.add_argument("--epsilon", type=float, default=None)

    sp = sub.add_parser("inversion-verify", help="manufactured-solution and free-boundary inversion checks")
    common(sp)
    sp.add_argument("--resolutions", type=_int_list, default=[16, 32, 64])

    sp = sub.add_parser("cc-tables", help="derived quantities, regime report, Clausius-Clapeyron table")
    common(sp)
    return p


def _thermo(args):
    if args.config is None:
        return ThermoParams(), 0.1
    cfg = parse_config(args.config)
    return cfg.thermo_params(), cfg.regime.epsilon


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    out: Path = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            cfg = apply_overrides(parse_config(args.config), seed=args.seed, variant=args.variant)
            if args.t_end is not None:
                data = cfg.model_dump(mode="json")
                data["dynamics"]["t_end"] = args.t_end
                cfg = type(cfg).model_validate(data)
            summary = experiments.run(cfg, out)
        elif args.command == "relaxation-study":
            _, eps = _thermo(args)
            summary = experiments.relaxation_study(out, args.n, args.epsilon or eps)
        elif args.command == "inversion-verify":
            tp, _ = _thermo(args)
            summary = experiments.inversion_verify(out, tp, tuple(args.resolutions))
        else:
            tp, eps = _thermo(args)
            summary = experiments.cc_tables(tp, out, eps)
    except (ConfigError, DomainError, FrameFormatError) as exc:
        _failure(out, args.command, "config", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        _failure(out, args.command, "numerical", exc)
        return EXIT_NUMERIC
    experiments.write_summary(out, summary)
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['measured']}")
    return EXIT_OK


def _failure(out: Path, command: str, kind: str, exc: Exception) -> None:
    print(f"error ({kind}): {exc}", file=sys.stderr)
    record = {"subcommand": command, "status": "failed", "kind": kind,
              "error_type": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "level", "oscillating_cells", "iterations", "courant"):
        if hasattr(exc, attr):
            record[attr] = getattr(exc, attr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(record, indent=2, default=str) + "\n")
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
