"""Command-line entry point ``ritzlab``.

Subcommands
-----------
example1, example2
    Built-in experiments (error, bound and Chebyshev curves).
run --config FILE
    Experiment from a JSON config.
bounds --spectrum FILE --psi V
    Evaluate the single/multi-step bounds for a given Ritz value, no solver.
"""
import argparse
import json
import math
import sys
from dataclasses import replace

from . import lab
from .bounds import (BoundParams, AssumptionError, bound_multistep, t_index_select)
from .operators import load_spectrum

PRESETS = {
    "example1": dict(spectrum="example1", p=3, k=15, m=1, ritz_indices=[1, 2, 3],
                     mode="chebyshev-compare"),
    "example2": dict(spectrum="example2", p=9, k=15, m=1, ritz_indices=[2, 5, 8],
                     mode="chebyshev-compare"),
}


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_run_flags(sp):
    sp.add_argument("--trials", type=int, help="number of seeded trials")
    sp.add_argument("--seed", type=int, help="64-bit base seed")
    sp.add_argument("--inner", type=int, help="inner steps per outer step (k)")
    sp.add_argument("--outer", type=int, help="outer steps (m)")
    sp.add_argument("--block", type=int, help="block size (p)")
    sp.add_argument("--indices", type=_int_list, help="comma-separated Ritz indices")
    sp.add_argument("--bounds", type=_str_list, help="comma-separated subset of B1,B2,B3")
    sp.add_argument("--out", default="results.csv", help="CSV output path")
    sp.add_argument("--plot", help="gnuplot script output path")
    sp.add_argument("--jobs", type=int, help="concurrent trials")


def build_parser():
    ap = argparse.ArgumentParser(prog="ritzlab",
                                 description="Block eigensolver laboratory with Ritz value bounds.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("example1", "three well separated target eigenvalues"),
                        ("example2", "three clusters of target eigenvalues")):
        sp = sub.add_parser(name, help=help_)
        _add_run_flags(sp)
        sp.add_argument("--size", type=int, help="matrix order (default 900 / 3600)")
        sp.add_argument("--mode", choices=lab.MODES, help="solver mode")
    sp = sub.add_parser("run", help="run an experiment from a JSON config")
    sp.add_argument("--config", required=True, help="JSON config file")
    _add_run_flags(sp)
    sp = sub.add_parser("bounds", help="evaluate bounds for a given Ritz value")
    sp.add_argument("--spectrum", required=True,
                    help="spectrum file, or example1 / example2")
    sp.add_argument("--psi", type=float, required=True,
                    help="baseline Ritz value (psi_p for B1, psi_i for B2)")
    sp.add_argument("--block", type=int, default=3, help="block size (p)")
    sp.add_argument("--degree", type=int, default=14, help="Chebyshev degree per outer step")
    sp.add_argument("--outer", type=int, default=1, help="outer steps (m)")
    sp.add_argument("--indices", type=_int_list, help="Ritz indices (default 1..p)")
    return ap


def _config_from_args(args):
    if args.command == "run":
        cfg = lab.load_config(args.config)
    else:
        preset = dict(PRESETS[args.command])
        if args.size is not None:
            preset["n"] = args.size
        if args.mode is not None:
            preset["mode"] = args.mode
        cfg = lab.ExperimentConfig(**preset)
    changes = {}
    for flag, name in (("trials", "trials"), ("seed", "seed"), ("inner", "k"),
                       ("outer", "m"), ("block", "p"), ("indices", "ritz_indices"),
                       ("bounds", "bounds"), ("jobs", "jobs")):
        v = getattr(args, flag)
        if v is not None:
            changes[name] = v
    if "p" in changes and "ritz_indices" not in changes:
        kept = [i for i in cfg.ritz_indices if i <= changes["p"]]
        changes["ritz_indices"] = kept or list(range(1, changes["p"] + 1))
    return replace(cfg, **changes)


def _cmd_run(args):
    cfg = _config_from_args(args)
    res = lab.run_experiment(cfg)
    lab.emit_csv(res, args.out)
    print(f"wrote {args.out} ({len(res.inner) * len(res.ritz_indices)} rows)")
    if args.plot:
        lab.emit_plot_script(res, args.plot, csv_path=args.out)
        print(f"wrote {args.plot}")
    return 0


def _spectrum_arg(text):
    if text in lab.BUILTIN:
        return lab.BUILTIN[text]()
    return load_spectrum(text)


def _cmd_bounds(args):
    spec = _spectrum_arg(args.spectrum)
    p = args.block
    indices = args.indices or list(range(1, p + 1))
    out = {"psi": args.psi, "p": p, "degree": args.degree, "outer": args.outer, "bounds": []}
    for i in indices:
        for name, mode, floor in (("B1", "nonconsecutive", p), ("B2", "consecutive", i)):
            row = {"bound": name, "i": i}
            try:
                t = t_index_select(spec, args.psi, floor)
                params = BoundParams(i=i, p=p, t=t, k=args.degree, m=args.outer)
                bv = bound_multistep(spec, params, args.psi, mode=mode)
            except (AssumptionError, ValueError) as exc:
                row.update(flag=str(exc))
                out["bounds"].append(row)
                continue
            row.update(t=t, theorem=bv.theorem, flag=bv.flag)
            if not bv.flag:
                row.update(measure_bound=bv.value, log_measure_bound=bv.log_value,
                           error_bound=bv.abs_error(spec.lam(i)))
            out["bounds"].append(row)
    json.dump(_finite(out), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _finite(x):
    # JSON has no infinities; write them as strings
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_finite(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            return _cmd_bounds(args)
        return _cmd_run(args)
    except (lab.ConfigError, OSError, ValueError) as exc:
        print(f"ritzlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
