"""Command line front door.

    mwlab run --config exp.json --out out/
    mwlab constants <weight> --p 2
    mwlab sparse <op> <f.gfn> <g.gfn> --out out/
    mwlab dominate <op> <f.gfn> <g.gfn> --out out/
    mwlab theorem <id> --config exp.json --out out/
    mwlab lemmas --out out/
    mwlab report <dir-or-report.json>... --out merged/

Exit codes: 0 pass, 1 fail, 2 configuration or usage error, 3 inconclusive.
"""

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError, MwlabError
from .report import (CERTIFICATE_IDS, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, THEOREM_IDS,
                     dumps_report, exit_code, load_config, merge_reports, parse_config,
                     run_experiment, run_lemmas, weight_constants, write_outputs)

log = logging.getLogger("mwlab")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors already; keep the usage text on stderr."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="mwlab", description="Matrix-weight sparse domination laboratory.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--out", default="mwlab-out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    common(sub.add_parser("run", help="run every configured experiment"))
    sp = sub.add_parser("constants", help="weight constants A_p, A_1, A_inf^sc")
    sp.add_argument("weight", help=".mwt file, JSON weight spec, or a corpus kind name")
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--L", type=int, default=6)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    for name in ("sparse", "dominate"):
        sp = sub.add_parser(name, help="build and certify a sparse family"
                            if name == "sparse" else "sparse family plus domination bracket")
        sp.add_argument("operator", help="kernel kind or JSON operator spec")
        sp.add_argument("f", help=".gfn file")
        sp.add_argument("g", help=".gfn file")
        sp.add_argument("--r", type=float, default=1.0)
        sp.add_argument("--s", type=float, default=1.0)
        sp.add_argument("--mode", default="adaptive")
        common(sp, config=False)
    sp = sub.add_parser("theorem", help="run one certificate")
    sp.add_argument("id", choices=THEOREM_IDS)
    common(sp)
    sp = sub.add_parser("lemmas", help="exponent, SPD power and reverse Holder suites")
    sp.add_argument("--pairs", type=int, default=10_000)
    common(sp, config=False)
    sp = sub.add_parser("report", help="merge prior outputs")
    sp.add_argument("inputs", nargs="+", help="output directories or report.json files")
    sp.add_argument("--out", default="mwlab-merged")
    sp.add_argument("--no-figures", action="store_true")
    return p


def _config(args, extra=None):
    if args.config:
        cfg_obj_path = args.config
        cfg = load_config(cfg_obj_path)
        raw = dict(cfg.raw)
    else:
        raw, cfg_obj_path = {}, None
    raw.update(extra or {})
    if args.seed is not None:
        raw["seed"] = args.seed
    base = os.path.dirname(os.path.abspath(cfg_obj_path)) if cfg_obj_path else "."
    return parse_config(raw, base)


def _finish(report, args, trace):
    write_outputs(report, args.out, trace, figures=not args.no_figures)
    print(f"{report['status']}: wrote {os.path.join(args.out, 'report.json')}")
    return exit_code(report["status"])


def cmd_run(args):
    cfg = _config(args)
    trace = []
    return _finish(run_experiment(cfg, trace), args, trace)


def cmd_theorem(args):
    cfg = _config(args)
    theorems = [t for t in cfg.raw.get("theorems", []) if
                (t if isinstance(t, str) else t.get("id")) == args.id] or [args.id]
    raw = dict(cfg.raw, theorems=theorems, sparse=None, lemmas=None)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = parse_config(raw, cfg.base_dir)
    trace = []
    return _finish(run_experiment(cfg, trace), args, trace)


def _weight(spec, args):
    from .grid import GridGeometry
    from .weights import generate_weight, load_mwt, weight_from_json

    if os.path.exists(spec):
        return load_mwt(spec)
    geo = GridGeometry(args.d, args.L)
    if spec.lstrip().startswith("{"):
        return weight_from_json(json.loads(spec), geo, args.n)
    return generate_weight(spec, geo, args.n, None, args.seed)


def cmd_constants(args):
    W = _weight(args.weight, args)
    out = {"weight": W.metadata(), "p": args.p, "constants": weight_constants(W, args.p)}
    print(dumps_report(out), end="")
    return EXIT_PASS


def _operator(spec):
    from .operators import kernel_from_spec

    if spec.lstrip().startswith("{"):
        return kernel_from_spec(json.loads(spec))
    return kernel_from_spec({"kind": spec})


def cmd_sparse(args, dominate=False):
    from .grid import load_gfn
    from .sparse import build_global_sparse, domination_ratio, sparse_certify

    T = _operator(args.operator)
    f, g = load_gfn(args.f), load_gfn(args.g)
    if f.geometry != g.geometry or f.n != g.n:
        raise ConfigError("f and g must share geometry and value dimension")
    seed = 0 if args.seed is None else args.seed
    res = build_global_sparse(T, f, g, args.r, args.s, mode=args.mode, seed=seed)
    cert = sparse_certify(res.family, res.family.eta_claimed)
    checks_ok = all(all(rec.checks.values()) for rec in res.trace)
    report = {"operator": T.spec(), "geometry": f.geometry.to_json(), "n": f.n,
              "r": args.r, "s": args.s, "mode": args.mode, "seed": seed,
              "family": res.family.to_json(), "eta": str(res.family.eta_claimed),
              "certificate": {"carleson": cert.carleson, "flow_feasible": cert.flow_feasible,
                              "demand": cert.demand, "flow_value": cert.flow_value},
              "iterations": len(res.trace), "checks_ok": checks_ok}
    if dominate:
        report["domination"] = domination_ratio(T, f, g, res.family, args.r, args.s,
                                                engine=res.engine).to_json()
    report["status"] = "pass" if cert.flow_feasible and checks_ok else "fail"
    trace = [rec.to_json() for rec in res.trace]
    return _finish(report, args, trace)


def cmd_lemmas(args):
    rep = run_lemmas({"pairs": args.pairs, "seed": 0 if args.seed is None else args.seed})
    report = {"lemmas": rep, "status": "pass" if rep["passed"] else "fail"}
    for key in ("bownik", "holder_mccarthy"):
        r = rep[key]
        print(f"{key}: {r['violations']} violations in {r['checks']} checks")
    for c in rep["param"]["claims"]:
        print(f"param {c['claim']}: {c['violation_count']} violations in {c['checked']} points")
    bad = sum(not x["passed"] for x in rep["reverse_holder"])
    print(f"reverse holder: {bad} failing weights of {len(rep['reverse_holder'])}")
    return _finish(report, args, [])


def cmd_report(args):
    paths = []
    for x in args.inputs:
        path = os.path.join(x, "report.json") if os.path.isdir(x) else x
        if not os.path.exists(path):
            raise ConfigError(f"no report at {path!r}")
        paths.append(path)
    merged = merge_reports(paths)
    return _finish(merged, args, [])


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "theorem":
            return cmd_theorem(args)
        if args.command == "constants":
            return cmd_constants(args)
        if args.command in ("sparse", "dominate"):
            return cmd_sparse(args, dominate=args.command == "dominate")
        if args.command == "lemmas":
            return cmd_lemmas(args)
        return cmd_report(args)
    except ConfigError as exc:
        print(f"mwlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MwlabError, OSError, json.JSONDecodeError) as exc:
        print(f"mwlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, (OSError, json.JSONDecodeError)) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "CERTIFICATE_IDS", "EXIT_FAIL"]
