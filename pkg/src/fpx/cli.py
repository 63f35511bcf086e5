"""Command-line entry point: ``fpx run|preset|theta|converge``."""

import argparse
import json
import sys

import numpy as np

from .errors import FPXError, ModelError, NumericalError, QuadratureError, SpecError
from .experiment import PRESETS, converge, load_spec, preset_spec, run_experiment
from .fisher import estimate_theta
from .models import make_model

EXIT_SPEC = 2
EXIT_NUMERICAL = 3


def _parse_param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise SpecError("--param", f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _threads(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be at least 1")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="fpx", description="Transition densities of 1D/2D diffusions.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: runs)")
    common.add_argument("--threads", type=_threads, help="worker threads (default: $FPX_THREADS or 1)")

    r = sub.add_parser("run", parents=[common], help="run an experiment spec (TOML)")
    r.add_argument("spec")

    pr = sub.add_parser("preset", parents=[common], help="run a built-in figure preset")
    pr.add_argument("name", nargs="?", help=f"one of: {', '.join(PRESETS)}")
    pr.add_argument("--list", action="store_true", help="list presets and exit")

    t = sub.add_parser("theta", help="print the reversion-speed estimate for a model")
    t.add_argument("model")
    t.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--form", default="auto", choices=["auto", "jacobian", "score"])
    t.add_argument("--tol", type=float, default=1e-10)

    c = sub.add_parser("converge", help="mode-doubling study for a spec")
    c.add_argument("spec")
    return p


def _print_json(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _theta(args):
    params = dict(_parse_param(x) for x in args.param)
    model = make_model(args.model, **params)
    est = estimate_theta(model, form=args.form, tol=args.tol)
    out = {"model": args.model, "params": params, "theta": np.asarray(est.theta).tolist(),
           "quad_error": est.quad_error}
    if model.closed_form_theta is not None:
        out["closed_form"] = np.asarray(model.closed_form_theta).tolist()
    _print_json(out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            outdir = run_experiment(load_spec(args.spec, out=args.out), threads=args.threads)
            print(outdir)
        elif args.command == "preset":
            if args.list or not args.name:
                for name, p in PRESETS.items():
                    print(f"{name:12s} model={p['model']} y0={p['y0']} methods={','.join(p['methods'])}")
                return 0
            outdir = run_experiment(preset_spec(args.name, out=args.out), threads=args.threads)
            print(outdir)
        elif args.command == "theta":
            _theta(args)
        elif args.command == "converge":
            _print_json(converge(load_spec(args.spec)))
    except (SpecError, ModelError) as exc:
        print(f"fpx: spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (NumericalError, QuadratureError) as exc:
        print(f"fpx: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        diffs = getattr(exc, "differences", None)
        if diffs:
            print(f"fpx: differences: {diffs}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FPXError as exc:
        print(f"fpx: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
