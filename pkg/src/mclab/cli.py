"""Command line entry point ``mclab``.

Exit codes: 0 success, 1 every attempted method failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, MclabError
from .experiments import METHOD_NAMES, compare_methods, config_from_dict, load_config, run
from .reservoir import GENERATOR_KINDS, GeneratorSpec, MaskSpec, generate


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mclab", description="Memory capacity of linear echo state networks")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON or TOML config")
    r.add_argument("--config", required=True)
    r.add_argument("--desk", action="store_true", help="shrink to N <= 30 and T <= 3000")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--seed", type=_u64, default=None)
    r.add_argument("--svg", action="store_true", help="also render SVG plots")

    c = sub.add_parser("compare", help="per-lag capacities from several methods")
    c.add_argument("--kind", required=True, choices=GENERATOR_KINDS)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--rho", type=float, default=None)
    c.add_argument("--methods", default="naive,osm,osm_plus")
    c.add_argument("--tau-max", type=int, default=None)
    c.add_argument("--L", type=int, default=1000)
    c.add_argument("--T", type=int, default=100_000)
    c.add_argument("--seed", type=_u64, default=0)
    c.add_argument("--out", default=None, help="CSV path (default: stdout)")

    e = sub.add_parser("eigplot", help="eigenvalues of a generated reservoir as re,im CSV")
    e.add_argument("--kind", required=True, choices=GENERATOR_KINDS)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--rho", type=float, default=None)
    e.add_argument("--seed", type=_u64, default=0)
    e.add_argument("--out", default="out")
    e.add_argument("--svg", action="store_true")
    return p


def _cmd_run(a: argparse.Namespace) -> int:
    cfg = load_config(a.config, desk=a.desk, seed=a.seed, out=a.out)
    if a.svg:
        cfg.svg = True
    man = run(cfg)
    for name, msg in man.failures.items():
        print(f"failed {name}: {msg}", file=sys.stderr)
    print(Path(cfg.out_dir) / "manifest.json")
    return man.exit_code


def _cmd_compare(a: argparse.Namespace) -> int:
    methods = [m.strip() for m in a.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHOD_NAMES]
    if not methods or bad:
        raise ConfigError(f"methods must be a nonempty subset of {', '.join(METHOD_NAMES)}")
    rho = None if a.kind == "delay_shift" else a.rho
    try:
        sys_ = generate(GeneratorSpec(a.kind, a.n, rho, seed=a.seed))
    except MclabError as exc:
        raise ConfigError(str(exc)) from exc
    tau_max = a.tau_max or max(int(1.5 * a.n + 0.5), 1)
    table = compare_methods(sys_, tau_max, methods, L=a.L, T=a.T, seed=a.seed, mask_spec=MaskSpec("gaussian"))
    for name, msg in table.failures.items():
        print(f"failed {name}: {msg}", file=sys.stderr)
    if a.out:
        table.to_csv(a.out)
    else:
        sys.stdout.write(table.to_text())
    return 1 if len(table.failures) == len(methods) else 0


def _cmd_eigplot(a: argparse.Namespace) -> int:
    gen = {"kind": a.kind, "N": a.n}
    if a.rho is not None:
        gen["rho_target"] = a.rho
    cfg = config_from_dict({"experiment": "eigplot", "seed": a.seed, "generator": gen, "svg": a.svg}, out=a.out)
    man = run(cfg)
    print(Path(cfg.out_dir) / "eigplot.csv")
    return man.exit_code


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "compare": _cmd_compare, "eigplot": _cmd_eigplot}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except MclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
