"""Command-line front door for the package.

Subcommands:

  check     validate a model: symmetry gate, curvature identities,
            torsion surjectivity; exit 0 only if everything passes
  euler     Euler-form integrand, closed form and/or Monte Carlo
  levy      conditional exponential moment of the Levy area
  density   kernel density of the rescaled endpoint at the origin
  jconst    vertical integral constant of the small-time density
  ms        heat supertrace of a simplicial complex

Reports are JSON (schema field included) with a `--format csv` option
for flat rows.  Every report records the seed.  Exit codes: 0 success,
1 a computation could not be carried out (or a check failed), 2 bad
input.  All randomness derives from the single --seed flag, so repeated
runs with the same flags agree byte for byte apart from the timestamp,
whatever --workers says.
"""

import argparse
import csv
import io
import json
import sys
from datetime import datetime, timezone

import numpy as np

from . import carnot, cgb, chen, foliation, mckean_singer, rng

IDENTITY_TOL = 1e-12


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError("cannot serialize %r" % (x,))


def _float_list(text, flag):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(float(tok))
        except ValueError:
            raise ValueError("%s expects comma-separated numbers, got %r" % (flag, text))
    if not vals:
        raise ValueError("%s got an empty list" % flag)
    return vals


def _load_model(args):
    """Model from --preset or --model, with overrides applied."""
    if args.preset is not None:
        fp = foliation.preset(args.preset, epsilon=args.epsilon,
                              kappa=1.0 if args.kappa is None else args.kappa)
        label = args.preset
    else:
        if args.kappa is not None:
            raise ValueError("--kappa only applies to presets")
        fp = foliation.from_config(args.model)
        if args.epsilon is not None:
            fp = foliation.FoliationPoint(fp.n, fp.m, fp.T, fp.R_hhhh,
                                          fp.T_cov_h, fp.T_cov_v,
                                          epsilon=args.epsilon, volume=fp.volume)
        label = args.model
    if args.perturb is not None:
        field, _, raw = args.perturb.partition("=")
        if field != "T_cov_h" or not raw:
            raise ValueError("--perturb expects T_cov_h=<value>, got %r" % args.perturb)
        fp = foliation.perturb(fp, float(raw))
    return fp, label


def _report(command, args, **payload):
    rep = {
        "schema": 1,
        "command": command,
        "seed": int(args.seed),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    rep.update(payload)
    return rep


def _flat(mapping, prefix=""):
    out = {}
    for key, val in mapping.items():
        name = prefix + key
        if key == "timestamp":
            continue
        if isinstance(val, dict):
            out.update(_flat(val, name + "."))
        elif isinstance(val, (list, tuple)):
            out[name] = ";".join(str(x) for x in val)
        else:
            out[name] = val
    return out


def _cell(val):
    if val is None:
        return ""
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _emit(report, rows, args):
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        keys = list(rows[0].keys())
        writer.writerow(keys)
        for row in rows:
            writer.writerow([_cell(row.get(k)) for k in keys])
        text = buf.getvalue()
    else:
        text = json.dumps(report, indent=2, sort_keys=True,
                          default=_json_default) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _grid(args, fallback):
    if args.n_grid is None:
        return fallback
    if args.n_grid < 2:
        raise ValueError("--n-grid must be at least 2")
    return int(args.n_grid)


def cmd_check(args):
    fp, label = _load_model(args)
    sym = foliation.check_symmetry(fp)
    residuals = dict(foliation.identity_residuals(fp))
    if sym["passes"]:
        residuals["script_T"] = foliation.script_T_identity_residual(fp)
    ident_ok = max(residuals.values()) < IDENTITY_TOL
    rank = int(foliation.torsion_rank(fp))
    surjective = rank == fp.m
    passes = bool(sym["passes"] and ident_ok and surjective)
    report = _report(
        "check", args, model=label, n=fp.n, m=fp.m, epsilon=fp.epsilon,
        symmetry={"passes": bool(sym["passes"]), "residual": float(sym["residual"])},
        identities={"residuals": residuals, "tolerance": IDENTITY_TOL,
                    "passes": bool(ident_ok)},
        torsion={"rank": rank, "m": fp.m, "surjective": bool(surjective)},
        passes=passes)
    return report, [_flat(report)], 0 if passes else 1


def cmd_euler(args):
    fp, label = _load_model(args)
    closed = mc = z_score = None
    if args.mode in ("closed", "both"):
        closed = cgb.closed_form_integrand(fp)
    if args.mode in ("mc", "both"):
        mc = cgb.mc_supertrace(fp, args.samples, seed=args.seed,
                               n_grid=_grid(args, 1024), workers=args.workers,
                               j_const=closed["j_const"] if closed else None)
    if args.mode == "both":
        if mc["stderr"] > 0.0:
            z_score = (mc["estimate"] - closed["integrand"]) / mc["stderr"]
        elif mc["estimate"] == closed["integrand"]:
            z_score = 0.0
    report = _report("euler", args, model=label, mode=args.mode,
                     closed=closed, mc=mc, z_score=z_score)
    return report, [_flat(report)], 0


def cmd_levy(args):
    rows = []
    n_grid = _grid(args, 1024)
    for lam in _float_list(args.lam, "--lambda"):
        out = chen.mgf_levy(lam, args.samples, seed=args.seed,
                            n_grid=n_grid, workers=args.workers)
        z = None
        if out["stderr"] > 0.0:
            z = (out["estimate"] - out["reference"]) / out["stderr"]
        rows.append({"lambda": lam, "estimate": out["estimate"],
                     "stderr": out["stderr"], "reference": out["reference"],
                     "z": z})
    report = _report("levy", args, samples=int(args.samples),
                     n_grid=n_grid, rows=rows)
    return report, rows, 0


def cmd_density(args):
    fp, label = _load_model(args)
    power = fp.n / 2.0 + fp.m  # half the homogeneous dimension
    rows = []
    for t in _float_list(args.t, "--t"):
        out = carnot.density_mc(fp, t=t, samples=args.samples, seed=args.seed,
                                n_grid=_grid(args, 256), workers=args.workers,
                                bandwidth=args.bandwidth)
        rows.append({"t": t, "estimate": out["estimate"],
                     "stderr": out["stderr"],
                     "dilation_scaled": (2.0 * t) ** power * out["estimate"],
                     "bandwidth": out["bandwidth"]})
    report = _report("density", args, model=label, samples=int(args.samples),
                     n_grid=_grid(args, 256), rows=rows)
    return report, rows, 0


def cmd_jconst(args):
    fp, label = _load_model(args)
    value = float(carnot.j_constant(fp))
    h_type = bool(carnot.is_h_type(fp))
    radial = float(carnot.j_constant_radial(fp)) if h_type else None
    report = _report("jconst", args, model=label, j_const=value,
                     h_type=h_type, radial=radial)
    return report, [_flat(report)], 0


def cmd_ms(args):
    with open(args.complex_path) as fh:
        text = fh.read()
    c = mckean_singer.Complex.from_text(text)
    rows = [{"t": t, "supertrace": float(mckean_singer.supertrace_heat(c, t))}
            for t in _float_list(args.t, "--t")]
    report = _report("ms", args, complex=args.complex_path,
                     chi=c.euler_characteristic, counts=list(c.counts),
                     rows=rows)
    return report, rows, 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="base seed; all randomness derives from it")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: HCGB_WORKERS or 1); "
                             "never changes the numbers")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", default=None,
                        help="write the report here instead of stdout")

    model = argparse.ArgumentParser(add_help=False)
    source = model.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", choices=foliation.PRESETS)
    source.add_argument("--model", help="TOML model file")
    model.add_argument("--epsilon", type=float, default=None,
                       help="override the vertical scaling")
    model.add_argument("--kappa", type=float, default=None,
                       help="H-type parameter (presets only)")
    model.add_argument("--perturb", default=None, metavar="T_cov_h=VALUE",
                       help="bump one torsion-derivative entry to break symmetry")

    parser = argparse.ArgumentParser(
        prog="hcgb",
        description="heat-kernel supertraces on totally geodesic foliations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common, model],
                       help="validate symmetry and curvature identities")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("euler", parents=[common, model],
                       help="Euler-form integrand, closed form and/or MC")
    p.add_argument("--mode", choices=("closed", "mc", "both"), default="closed")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--n-grid", dest="n_grid", type=int, default=None)
    p.set_defaults(func=cmd_euler)

    p = sub.add_parser("levy", parents=[common],
                       help="conditional exponential moment of the Levy area")
    p.add_argument("--lambda", dest="lam", default="1",
                   help="comma-separated coefficients")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--n-grid", dest="n_grid", type=int, default=None)
    p.set_defaults(func=cmd_levy)

    p = sub.add_parser("density", parents=[common, model],
                       help="kernel density of the rescaled endpoint at 0")
    p.add_argument("--t", default="1", help="comma-separated times")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--n-grid", dest="n_grid", type=int, default=None)
    p.add_argument("--bandwidth", type=float, default=None)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("jconst", parents=[common, model],
                       help="vertical integral constant")
    p.set_defaults(func=cmd_jconst)

    p = sub.add_parser("ms", parents=[common],
                       help="heat supertrace of a simplicial complex")
    p.add_argument("--complex", dest="complex_path", required=True,
                   help="text file of maximal simplices, one per line")
    p.add_argument("--t", default="1", help="comma-separated times")
    p.set_defaults(func=cmd_ms)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.workers is None:
        args.workers = rng.default_workers()
    args.workers = max(1, int(args.workers))
    try:
        report, rows, code = args.func(args)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    _emit(report, rows, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
