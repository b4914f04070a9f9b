"""Command line entry point: ``difflab <subcommand> --config <path> [...]``."""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import config as cfgmod
from . import io
from .pointset import PointCountCapError

SUBCOMMANDS = ["generate", "perturb", "spectrum", "recover", "verify", "appendix", "plot"]


def build_parser():
    parser = argparse.ArgumentParser(prog="difflab", description=__doc__.split(":")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "plot",
                       help="JSON config file or the name of a shipped preset (e.g. criterion_01)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--cloak-threshold", type=float, dest="tau")
        p.add_argument("--threads", type=int, help="worker threads (default: $DIFFLAB_THREADS or 1)")
        p.add_argument("--plot", action="store_true", default=None, help="also write SVG plots")
    return parser


def _plot(args):
    from .plotting import plot_spectrum, plot_trace, plot_outputs
    target = Path(args.config or args.out or ".")
    if target.is_dir():
        target = target / "manifest.json"
    if not target.exists():
        raise FileNotFoundError(f"nothing to plot: {target} does not exist")
    if target.suffix == ".csv":
        header = target.read_text().split("\n", 1)[0]
        made = [plot_spectrum(target) if header.startswith("lambda_") else plot_trace(target)]
    else:
        man = json.loads(target.read_text())
        made = plot_outputs(man["outputs"], target.parent)
    for m in made:
        print(m)
    return 0


def _verify_criterion(cfg, args):
    from .criteria import run_criterion
    res = run_criterion(cfg["criterion"], cfg)
    print(res.line())
    for k, v in res.checks.items():
        print(f"    {k}: {'ok' if v else 'FAILED'}")
    out = Path(args.out or cfg.get("out") or "difflab_out")
    io.write_json(out / f"criterion_{res.number:02d}.json", asdict(res))
    return 0 if res.passed else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "plot":
            return _plot(args)
        cfg = cfgmod.load(args.config)
        if args.threads:
            cfg["threads"] = args.threads
        if args.command == "verify" and "criterion" in cfg:
            if args.seed is not None:
                cfg["seeds"] = [args.seed]
            if args.tau is not None:
                cfg["cloak_threshold"] = args.tau
            return _verify_criterion(cfg, args)
        from .runner import run
        man = run(cfg, args.command, out_dir=args.out, seed=args.seed, threads=args.threads, tau=args.tau,
                  plot=args.plot)
        for analysis, paths in man.outputs.items():
            print(f"{analysis}: {len(paths)} file(s)")
        for tag, status in man.seeds.items():
            if status != "ok":
                print(f"{tag}: {status}", file=sys.stderr)
        for k, v in man.verify.items():
            print(f"{k}: {'ok' if v else 'FAILED'}")
        return 0 if man.ok else 1
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PointCountCapError as exc:
        print(f"error: point-count cap exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
