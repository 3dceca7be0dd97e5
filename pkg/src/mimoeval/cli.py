"""``mimoeval`` command-line interface."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .channel import ArrayKind
from .ctf import write_channel_file
from .errors import MimoEvalError
from .experiment import ExperimentConfig, StageError, parse_antennas, run_experiment, verify_bundle
from .models import ArrayGeometry, Scenario, gen_geometric, gen_rayleigh, ground_truth_json, scenario_preset

SCENARIOS = ["rayleigh"] + [s.value for s in Scenario]


def _add_eval_flags(p, capacity=False):
    p.add_argument("--in", dest="input", required=True, help="CTF1 channel file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--users", type=int, default=None)
    p.add_argument("--antennas", default="4:128:4", help="comma list or a:b:c inclusive range")
    p.add_argument("--subsets", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0, help="master seed for subset draws")
    p.add_argument("--cdf-points", type=int, default=None, help="thin each CDF to this many rows")
    p.add_argument("--threads", type=int, default=None)
    if capacity:
        p.add_argument("--rho-db", type=float, default=10.0)
        p.add_argument("--norm", type=int, choices=(1, 2), default=None)
    else:
        p.add_argument("--norm", type=int, choices=(1,), default=1,
                       help="spread is always evaluated on NORM1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimoeval", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a channel and write it as CTF1")
    g.add_argument("--scenario", choices=SCENARIOS, default="rayleigh")
    g.add_argument("--array", choices=[a.value for a in (ArrayKind.ULA, ArrayKind.UCA)], default="ULA")
    g.add_argument("--users", type=int, default=4)
    g.add_argument("--ports", type=int, default=128)
    g.add_argument("--subcarriers", type=int, default=161)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output .ctf path")

    _add_eval_flags(sub.add_parser("spread", help="singular value spread ensemble"))
    _add_eval_flags(sub.add_parser("capacity", help="DPC capacity ensemble"), capacity=True)

    f = sub.add_parser("fingerprint", help="per-user spatial fingerprints (ULA only)")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--users", type=int, default=None)
    f.add_argument("--window", type=int, default=10)
    f.add_argument("--mpcs", type=int, default=200)
    f.add_argument("--energy-fraction", type=float, default=0.9)
    f.add_argument("--threads", type=int, default=None)

    r = sub.add_parser("run", help="run a JSON experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="override the config's output directory")
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--verify", action="store_true", help="re-run and compare checksums")

    v = sub.add_parser("verify", help="check a bundle's checksums")
    v.add_argument("bundle", help="bundle directory or manifest.json")
    v.add_argument("--rerun", action="store_true", help="also recompute the bundle from its config")
    v.add_argument("--threads", type=int, default=None)
    return parser


def _generate(args) -> int:
    out = Path(args.out)
    if args.scenario == "rayleigh":
        tensor, truth = gen_rayleigh(args.users, args.ports, args.subcarriers, args.seed), None
    else:
        geometry = ArrayGeometry.ula(args.ports) if args.array == "ULA" else ArrayGeometry.uca()
        cfg = scenario_preset(args.scenario, num_users=args.users, seed=args.seed)
        tensor, truth = gen_geometric(geometry, cfg, args.subcarriers)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_channel_file(tensor, out)
    if truth is not None:
        sidecar = out.with_suffix(".truth.json")
        sidecar.write_text(json.dumps(ground_truth_json(truth), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} shape={tensor.shape}")
    return 0


def _config_from_args(args) -> ExperimentConfig:
    if args.command == "fingerprint":
        return ExperimentConfig(analyses=["fingerprint"], out=args.out, input=args.input, users=args.users,
                                window=args.window, mpcs=args.mpcs, energy_fraction=args.energy_fraction)
    extra = {}
    if args.command == "capacity":
        extra = {"rho_db": args.rho_db, "norm": args.norm}
    return ExperimentConfig(analyses=[args.command], out=args.out, input=args.input, users=args.users,
                            antennas=parse_antennas(args.antennas), subsets=args.subsets, seed=args.seed,
                            cdf_points=args.cdf_points, **extra)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            return _generate(args)
        if args.command == "verify":
            problems = verify_bundle(args.bundle, rerun=args.rerun, threads=args.threads)
            for msg in problems:
                print(f"FAIL {msg}", file=sys.stderr)
            if not problems:
                print("OK bundle verified")
            return 1 if problems else 0
        if args.command == "run":
            cfg = ExperimentConfig.load(args.config)
            if args.out is not None:
                cfg.out = args.out
        else:
            cfg = _config_from_args(args)
        manifest = run_experiment(cfg, threads=args.threads)
        print(f"wrote {len(manifest['outputs'])} outputs to {cfg.out}")
        if args.command == "run" and args.verify:
            problems = verify_bundle(cfg.out, rerun=True, threads=args.threads)
            for msg in problems:
                print(f"FAIL {msg}", file=sys.stderr)
            if problems:
                return 1
            print("OK re-run reproduced every output")
        return 0
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MimoEvalError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
