"""Command-line entry point: ``gensm <subcommand> [options]``.

Exit codes: 0 success, 1 failed invariant (including a failed gradient
check), 2 usage error, 3 more than 10% of cells skipped, 4 any other
library error.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace

from .channel import generate_ensemble, save_ensemble
from .errors import GensmError, TooManySkipped
from .harness import InvariantViolation, gradient_suite, load_spec, run_experiment, spec_from_parser

GRAD_TOL = 1e-5


def _snr_list(text: str) -> tuple[float, ...]:
    """Comma list with optional ``start:stop:step`` ranges, e.g. ``-20:10:5,12.5``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi, step = (float(v) for v in part.split(":"))
            if step <= 0:
                raise argparse.ArgumentTypeError("range step must be positive")
            n = int(round((hi - lo) / step))
            out.extend(lo + i * step for i in range(n + 1))
        else:
            out.append(float(part))
    if not out:
        raise argparse.ArgumentTypeError("empty SNR list")
    return tuple(out)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file with [system], [channel], [digital_opt], "
                                    "[analog_opt] and [experiment] sections")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--out", help="output file; CSV goes to stdout when omitted")
    p.add_argument("--snr-db", type=_snr_list, help="SNR grid in dB, e.g. '-20:10:5' or '0,5,10'")
    p.add_argument("--channels", type=int, help="number of channel realizations")
    p.add_argument("--mc-samples", type=int, help="Monte-Carlo samples per SE estimate")
    p.add_argument("--jobs", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gensm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="bound and MC SE of unprecoded GenSM per channel and SNR")
    _common(p)
    p = sub.add_parser("optimize", help="hybrid optimization on one channel; emits the trace")
    _common(p)
    p.add_argument("--inits", type=int, help="random initial points")
    p = sub.add_parser("sweep", help="SE versus SNR")
    _common(p)
    p.add_argument("--kind", choices=("se_sweep", "bound_tightness"), default="se_sweep")
    p.add_argument("--inits", type=int)
    p = sub.add_parser("cdf", help="CDF of the optimized bound over inits and channels")
    _common(p)
    p.add_argument("--inits", type=int)
    p = sub.add_parser("param-table", help="partition (n_k, n_m) choice versus SNR")
    _common(p)
    p = sub.add_parser("channel-gen", help="export a channel ensemble to .npz")
    _common(p)
    p = sub.add_parser("gradcheck", help="finite-difference check of all analytic gradients")
    _common(p)
    p.add_argument("--instances", type=int, default=50)
    p = sub.add_parser("run", help="run the experiment named in the config file")
    _common(p)
    return ap


KIND_OF = {"evaluate": "evaluate", "optimize": "convergence", "cdf": "init_cdf",
           "param-table": "param_table"}


def _spec(args, kind=None, **extra):
    over = dict(master_seed=args.seed, out=args.out, snr_db=args.snr_db, n_channels=args.channels,
                mc_samples=args.mc_samples, n_jobs=args.jobs, kind=kind,
                n_inits=getattr(args, "inits", None), **extra)
    if args.config:
        return load_spec(args.config, **over)
    cp = configparser.ConfigParser()
    return spec_from_parser(cp, **over)


def _emit(text: str, spec):
    if not spec.out:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except InvariantViolation as exc:
        print(f"invariant failed: {exc}", file=sys.stderr)
        return 1
    except TooManySkipped as exc:
        print(f"too many skipped cells: {exc}", file=sys.stderr)
        return 3
    except (GensmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "gradcheck":
        worst = gradient_suite(args.instances, args.seed or 0)
        ok = True
        for name, err in worst.items():
            status = "ok" if err < GRAD_TOL else "FAIL"
            ok &= err < GRAD_TOL
            print(f"{name:16s} max rel err {err:.3e}  {status}")
        return 0 if ok else 1
    if cmd == "channel-gen":
        spec = _spec(args, kind="evaluate")
        if not spec.out:
            print("error: channel-gen needs --out <file.npz>", file=sys.stderr)
            return 2
        chans = generate_ensemble(spec.system, spec.channel, spec.n_channels, spec.master_seed,
                                  spec.norm_mode)
        save_ensemble(spec.out, chans, spec.master_seed)
        print(f"wrote {len(chans)} channels to {spec.out}", file=sys.stderr)
        return 0
    if cmd == "run":
        spec = _spec(args)
    elif cmd == "sweep":
        spec = _spec(args, kind=args.kind)
    elif cmd == "optimize":
        spec = _spec(args, kind="convergence")
        spec = replace(spec, n_channels=1, snr_db=spec.snr_db[:1])
    else:
        spec = _spec(args, kind=KIND_OF[cmd])
    _emit(run_experiment(spec), spec)
    return 0


if __name__ == "__main__":
    sys.exit(main())
