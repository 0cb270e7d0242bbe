"""Command-line entry point ``tree-spectra``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import eigencount as ec
from . import experiments as ex
from .errors import TreeSpectraError
from .hardy import THEOREMS, _jsonable, bound_rhs, hardy_constants
from .potentials import (
    eta_sequence,
    l1_norm,
    neumann_correction,
    potential_from_dict,
    weyl_coefficient,
)
from .tree import classify, global_dimension, tree_from_dict

EXIT_FAIL = 1
EXIT_USAGE = 2


def _load(text):
    """Inline JSON, or a path to a JSON file."""
    if text is None:
        return None
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def _out(obj):
    sys.stdout.write(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _tree(args):
    spec = _load(args.tree)
    if spec is None:
        spec = {"kind": "b_regular", "b": args.b, "d": args.d, "horizon": args.horizon}
    return tree_from_dict(spec)


def _potential(args, tree):
    spec = _load(args.potential)
    if spec is None:
        raise SystemExit("--potential is required")
    return potential_from_dict(spec, tree)


def _numerics(args):
    return ec.Numerics.from_dict(_load(args.numerics))


def _try(f):
    try:
        return f()
    except TreeSpectraError as err:
        return {"error": type(err).__name__, "message": str(err)}


def cmd_tree(args):
    tree = _tree(args)
    cls = classify(tree)
    gd = _try(lambda: global_dimension(tree))
    _out({"tree": tree.to_dict(), "class": cls.kind.value, "reduced_height": cls.reduced_height,
          "global_dimension": gd.__dict__ if hasattr(gd, "__dict__") else gd,
          "radii": tree.radii[: args.show + 1].tolist(), "g0": tree.g0[: args.show].tolist()})


def cmd_potential(args):
    tree = _tree(args)
    V = _potential(args, tree)
    eta = eta_sequence(tree, V, min(args.show, tree.horizon) - 1)
    _out({"eta": eta.values.tolist(), "l1": _try(lambda: l1_norm(tree, V)),
          "weyl_coefficient": _try(lambda: weyl_coefficient(tree, V)),
          "neumann_correction": _try(lambda: neumann_correction(tree, V)),
          "tail": None if eta.tail is None else eta.tail.__dict__})


def cmd_hardy(args):
    tree = _tree(args)
    _out(hardy_constants(tree, _potential(args, tree)).to_dict())


def cmd_functional(args):
    tree = _tree(args)
    _out(bound_rhs(args.theorem, tree, _potential(args, tree), args.p, neumann=args.neumann).to_dict())


def cmd_count(args):
    tree = _tree(args)
    V = _potential(args, tree)
    f = ec.count_negative_direct if args.direct else ec.count_negative
    _out(f(tree, V, args.alpha, args.bc, _numerics(args)).to_dict())


def cmd_bscount(args):
    tree = _tree(args)
    V = _potential(args, tree)
    _out(ec.birman_schwinger_counts(tree, V, args.s, args.bc, _numerics(args)).to_dict())


def cmd_cv(args):
    tree = _tree(args)
    V = _potential(args, tree)
    num = _load(args.numerics)
    numerics = ec.Numerics.from_dict(num) if num else None
    rep = ec.cv_estimate(tree, V, args.bc, numerics)
    out = rep.to_dict()
    if args.bracket:
        out["bracket"] = hardy_constants(tree, V).to_dict()
    _out(out)


def _config(args):
    if args.config:
        return ex.SweepConfig.from_dict(_load(args.config))
    if not args.scenario:
        raise SystemExit("give --config or --scenario")
    return ex.scenario_config(args.scenario, b=args.b, d=args.d, p=args.p, q=args.q,
                              alpha_min=args.alpha_min, alpha_max=args.alpha_max, points=args.points,
                              bc=args.bc, workers=args.workers)


def cmd_sweep(args):
    cfg = _config(args)
    res = ex.run_sweep(cfg)
    ex.emit(res, args.format, args.out)
    if args.out not in (None, "-"):
        fit = res.fit
        sys.stderr.write(f"slope {fit.slope} +/- {fit.stderr} over {fit.points} rows; wrote {args.out}\n")


def cmd_check(args):
    cfg = _config(args)
    outcomes = ex.run_check(cfg)
    for o in outcomes:
        sys.stderr.write(f"{'PASS' if o.passed else 'FAIL'} {cfg.scenario or 'sweep'}:{o.name}\n")
    _out([o.to_dict() for o in outcomes])
    return 0 if all(o.passed for o in outcomes) else EXIT_FAIL


def _common(p, potential=True, numerics=True):
    p.add_argument("--tree", help="tree JSON (inline or file)")
    p.add_argument("--b", type=int, default=2, help="branching for the b-regular shortcut")
    p.add_argument("--d", type=float, default=3.0, help="global dimension for the b-regular shortcut")
    p.add_argument("--horizon", type=int, default=40)
    if potential:
        p.add_argument("--potential", help="potential JSON (inline or file)")
    if numerics:
        p.add_argument("--numerics", help="numerics JSON (inline or file)")


def build_parser():
    ap = argparse.ArgumentParser(prog="tree-spectra", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tree", help="classify a tree")
    _common(p, potential=False, numerics=False)
    p.add_argument("--show", type=int, default=8)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("potential", help="eta sequence and integrals of a potential")
    _common(p, numerics=False)
    p.add_argument("--show", type=int, default=12)
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("hardy", help="Hardy functionals B0/B1/B2")
    _common(p, numerics=False)
    p.set_defaults(func=cmd_hardy)

    p = sub.add_parser("functional", help="right-hand side of a named estimate")
    _common(p, numerics=False)
    p.add_argument("--theorem", choices=THEOREMS, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--neumann", action="store_true")
    p.set_defaults(func=cmd_functional)

    p = sub.add_parser("count", help="number of negative eigenvalues")
    _common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--bc", choices=ec.BCS, default="dirichlet")
    p.add_argument("--direct", action="store_true", help="use the whole-tree oracle")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("bscount", help="Birman-Schwinger counting function n(s)")
    _common(p)
    p.add_argument("--s", type=float, nargs="+", required=True)
    p.add_argument("--bc", choices=ec.BCS, default="dirichlet")
    p.set_defaults(func=cmd_bscount)

    p = sub.add_parser("cv", help="best Hardy constant C_V")
    _common(p)
    p.add_argument("--bc", choices=ec.BCS, default="dirichlet")
    p.add_argument("--bracket", action="store_true", help="also report the B1/B2 bracket")
    p.set_defaults(func=cmd_cv)

    for name, func in (("sweep", cmd_sweep), ("check", cmd_check)):
        p = sub.add_parser(name, help="alpha sweep" if name == "sweep" else "run a scenario's checks")
        p.add_argument("--config", help="sweep config JSON (inline or file)")
        p.add_argument("--scenario", choices=ex.SCENARIOS)
        p.add_argument("--b", type=int, default=2)
        p.add_argument("--d", type=float, default=3.0)
        p.add_argument("--p", type=float)
        p.add_argument("--q", type=float)
        p.add_argument("--alpha-min", type=float, default=1e2)
        p.add_argument("--alpha-max", type=float, default=1e6)
        p.add_argument("--points", type=int, default=24)
        p.add_argument("--bc", choices=ec.BCS, default="dirichlet")
        p.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            p.add_argument("--out", default="-")
            p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except TreeSpectraError as err:
        sys.stderr.write(f"error: {type(err).__name__}: {err}\n")
        return EXIT_USAGE
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
