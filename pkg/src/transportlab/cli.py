"""Command line entry point: ``transportlab {run,convergence,list-fields,describe-check}``.

Exit status: 0 when every asserted check passes, 1 when a check fails,
2 when the configuration does not validate.
"""
from __future__ import annotations

import argparse
import sys

from .experiment import ConfigError, Experiment, resolve_config
from .fields import FIELD_GALLERY

CHECK_DESCRIPTIONS = {
    "apriori": ("Prop 1.1", "ball-mass estimates: mass in |x| < R at time t is bounded by initial mass in "
                            "|x| < R + N t, and mass outside |x| > R + N t by initial mass outside |x| > R"),
    "norm_history": ("Prop 2.1(iv), Thm 6.1", "L^p norms per time slice, classified as isometry, contraction "
                                               "or neither (a numerical proxy only)"),
    "modulus": ("Prop 2.1(iv), Eqs (2.3)/(2.5)", "||u(t+h) - u(t)||_p <= N ||grad u0||_inf (2 m(supp u0))^(1/p) |h|"),
    "renorm": ("Def 1.2, Thm 5.1", "weak residual of g(u) with initial datum g(u0) for g in "
                                   "{u^2, |u|, (|u| - r)^+}; (|u| - sup|u0|)^+ must give exactly zero"),
    "stationary": ("Thm 4.1", "weak divergence of a g(u) for a weakly stationary u"),
    "weak_residual": ("Def 1.1", "quadrature of the weak identity against a seeded bank of bumps"),
    "convergence": ("Prop 4.1", "L^2 distances between consecutive averaged-coefficient solutions and to an "
                                "exact solution when one is known"),
    "measure": ("Section 2", "Jacobian determinant of the backward characteristic map stays at one"),
}
_ALIASES = {"renormalization": "renorm", "norms": "norm_history"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transportlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a configured experiment"),
                           ("convergence", "run only the convergence study in nu")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config_arg", nargs="?", help="config path or bundled config name")
        p.add_argument("--config", dest="config", help="config path or bundled config name")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="test-bank seed (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for independent nu values")
    sub.add_parser("list-fields", help="list the field gallery")
    p = sub.add_parser("describe-check", help="describe a diagnostic")
    p.add_argument("check", help="check name")
    return parser


def _run(args, only_convergence: bool) -> int:
    target = args.config or args.config_arg
    if target is None:
        print("error: a config is required (--config PATH)", file=sys.stderr)
        return 2
    try:
        exp = Experiment.load(resolve_config(target), seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report, extras = exp.run(jobs=max(1, args.jobs), only_convergence=only_convergence)
    out = exp.write(report, extras, args.out)
    for c in report.checks:
        status = "pass" if c.passed else "FAIL"
        print(f"{status}  {c.name:<28} value={c.value:.6g} bound={c.bound:.6g} slack={c.slack:.6g}")
    print(f"artifacts: {out}")
    failures = report.failures()
    if failures:
        for c in failures:
            print(f"failed: {c.name} slack={c.slack!r} tol={c.tol!r} {c.details}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-fields":
        for name, text in FIELD_GALLERY.items():
            print(f"{name:<16} {text}")
        return 0
    if args.command == "describe-check":
        name = _ALIASES.get(args.check, args.check)
        if name not in CHECK_DESCRIPTIONS:
            print(f"unknown check {args.check!r}; known: {', '.join(sorted(CHECK_DESCRIPTIONS))}", file=sys.stderr)
            return 2
        anchor, text = CHECK_DESCRIPTIONS[name]
        print(f"{name} [{anchor}]: {text}")
        return 0
    return _run(args, only_convergence=args.command == "convergence")


if __name__ == "__main__":
    sys.exit(main())
