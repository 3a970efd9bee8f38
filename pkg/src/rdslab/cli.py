"""Command line: ``rdslab run <config> [--seed S] [--out DIR]``, ``list-systems``, ``list-kernels``."""

import argparse
import inspect
import logging
import sys

from .exceptions import ConfigError
from .flows import SDE_FACTORIES
from .harness import BUILTIN_SYSTEMS, load_config, run
from .kernels import KERNEL_VARIANTS
from .skew import WORKERS_ENV
from .state_space import MAP_FACTORIES

KERNEL_HELP = {
    "additive": "T0(x) + u, u uniform on the eps-ball",
    "random_jump": "uniform jump into the eps-ball around T0(x)",
    "parametric": "T(w, x) = T0(x) + w (1 + a cos 2 pi x), w uniform on [-eps, eps]",
    "degenerate_trap": "doubling map flattened on (-eps, eps) plus additive noise; eps < 1/8",
    "delta": "the unperturbed map (no density)",
}


def _defaults(factory):
    sig = inspect.signature(factory)
    return ", ".join(f"{k}={p.default!r}" for k, p in sig.parameters.items()
                     if p.default is not inspect.Parameter.empty)


def _list_systems(out):
    out.write("maps:\n")
    for name, f in MAP_FACTORIES.items():
        out.write(f"  {name}({_defaults(f)})\n")
    out.write("sdes:\n")
    for name, f in SDE_FACTORIES.items():
        out.write(f"  {name}({_defaults(f)})\n")
    out.write("named systems:\n")
    for name, spec in BUILTIN_SYSTEMS.items():
        desc = ", ".join(f"{k}={v}" for k, v in spec.items())
        out.write(f"  {name}: {desc}\n")


def _list_kernels(out):
    for name in KERNEL_VARIANTS:
        out.write(f"{name}: {KERNEL_HELP[name]}\n")


def build_parser():
    parser = argparse.ArgumentParser(prog="rdslab", description=__doc__,
                                     epilog=f"{WORKERS_ENV} sets the worker count for ensembles.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the analyses of a YAML config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    sub.add_parser("list-systems", help="builtin maps, SDEs and named systems")
    sub.add_parser("list-kernels", help="noise kernel variants")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-systems":
        _list_systems(sys.stdout)
        return 0
    if args.command == "list-kernels":
        _list_kernels(sys.stdout)
        return 0
    try:
        cfg = load_config(args.config, seed=args.seed, output=args.out)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    for name, status in result.manifest["analyses"].items():
        print(f"{name}: {status}")
    print(f"manifest: {result.manifest_path}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
