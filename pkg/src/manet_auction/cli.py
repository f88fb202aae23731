"""Command line entry point: ``manet-auction <subcommand>``.

Exit codes: 0 success, 1 usage/config error, 2 verification failure,
3 scenario runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings

import numpy as np

from . import harness, statfit, typespace, verifier
from .mechanism import NonMonotoneHazardWarning, build_tables

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_SCENARIO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with ScenarioConfig keys (flags override it)")
    for f in dataclasses.fields(harness.ScenarioConfig):
        kind = {"float": float, "int": int, "bool": _bool, "str": str}[f.type]
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=kind, default=None,
                       metavar=f.type.upper(), help=f"default {f.default!r}")


def _config(args) -> harness.ScenarioConfig:
    doc = {}
    if args.config:
        doc = harness.ScenarioConfig.load(args.config).to_dict()
    for f in dataclasses.fields(harness.ScenarioConfig):
        v = getattr(args, "cfg_" + f.name)
        if v is not None:
            doc[f.name] = v
    return harness.ScenarioConfig.from_dict(doc)


def _write(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_space(path) -> typespace.TypeSpace:
    try:
        return typespace.load(path)
    except (OSError, ValueError, KeyError) as err:
        raise UsageError(f"cannot load type space {path!r}: {err}") from None


def cmd_mechanism_tables(args) -> int:
    ts = _load_space(args.type_space)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMonotoneHazardWarning)
        tables = build_tables(ts, args.bidders)
    doc = {
        "type_space": typespace.to_dict(ts),
        "n_bidders": tables.n_bidders,
        "monotone_hazard": tables.monotone_hazard,
        "virtual_valuation": tables.vv.tolist(),
        "vv_level": tables.vv_level.tolist(),
        "allocation": tables.a.tolist(),
        "payment": tables.p.tolist(),
    }
    _write(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def verify_tables(ts: typespace.TypeSpace, n: int, tol: float = verifier.INEQ_TOL) -> dict:
    """Every mechanism check on one type space; ``report["passed"]`` is the conjunction."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMonotoneHazardWarning)
        tables = build_tables(ts, n)
    ic = verifier.brute_force_ic_check(tables, tol)
    mono_ok, mono_bad = verifier.check_allocation_monotonic(tables)
    checks = {
        "monotone_hazard": tables.monotone_hazard,
        "allocation_monotone": mono_ok,
        "allocation_violations": len(mono_bad),
        "ic_ir": ic.to_dict(),
        "adjacent_implies_all": verifier.check_adjacent_implies_all(tables, tol),
    }
    if mono_ok:
        oracle = verifier.longest_path_payment_oracle(tables)
        err = float(np.max(np.abs(oracle - tables.p)))
        checks["oracle_max_error"] = err
        checks["oracle_match"] = err <= tol
        gap = verifier.ic_u_binding_gap(tables)
        checks["ic_u_binding_gap"] = gap
        checks["ic_u_binding"] = gap <= verifier.EXACT_TOL
    else:
        checks["oracle_match"] = False
        checks["ic_u_binding"] = False
    passed = (checks["monotone_hazard"] and mono_ok and ic.passed and checks["adjacent_implies_all"]
              and checks["oracle_match"] and checks["ic_u_binding"])
    return {"passed": bool(passed), "n_bidders": n, "fingerprint": ts.fingerprint(), "checks": checks}


def cmd_verify(args) -> int:
    ts = _load_space(args.type_space)
    report = verify_tables(ts, args.bidders, args.tol)
    _write(json.dumps(report, indent=2, default=float) + "\n", args.report)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_simulate(args) -> int:
    cfg = _config(args)
    model = harness.pilot_duration_model(cfg) if "optimal" in cfg.backends else None
    pairs = [args.pair] if args.pair is not None else range(cfg.pairs)
    lines, events = [], []
    for k in pairs:
        if k < 0 or k >= cfg.pairs:
            raise UsageError(f"--pair must lie in [0, {cfg.pairs})")
        if args.snapshot and k == pairs[0]:
            mob, cost, _, _ = harness._streams(cfg, k)
            world = harness.make_world(cfg, mob, cost)
            _write(json.dumps(world.snapshot()) + "\n", args.snapshot)
        for rec, session in harness.run_pair(cfg, k, model, cfg.hash()):
            lines.append(json.dumps(rec.to_dict(), sort_keys=True))
            events.append(session.event_lines())
    if args.events:
        _write("".join(events), args.events)
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    result = harness.run_sweep(cfg, args.axis, args.values)
    _write(result.to_csv(), args.out)
    if args.records:
        with open(args.records, "w") as fh:
            for rec in result.records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    return EXIT_SCENARIO if result.failures else EXIT_OK


def cmd_fit(args) -> int:
    if args.samples:
        try:
            samples = np.loadtxt(args.samples, ndmin=1)
        except (OSError, ValueError) as err:
            raise UsageError(f"cannot read samples: {err}") from None
    else:
        samples = harness.pilot_samples(_config(args))
    fits = statfit.fit_all(samples)
    if not fits:
        raise statfit.FitError("no candidate distribution could be fitted")
    best = statfit.select_best(samples)
    doc = {"n": len(samples), "best": best.model, "fits": [f.to_dict() for f in fits]}
    expo = next((f for f in fits if f.model == "exponential"), None)
    if expo is not None:
        cap = statfit.exponential_cap(expo, args.quantile)
        doc["d_cap"] = cap
        doc["duration_pmf"] = statfit.discretize_duration(expo, args.bins, cap).tolist()
    _write(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="manet-auction", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mechanism-tables", help="build and dump vv / allocation / payment tables")
    p.add_argument("type_space", help="TypeSpace JSON file")
    p.add_argument("-n", "--bidders", type=int, required=True)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_mechanism_tables)

    p = sub.add_parser("verify", help="run IC/IR, monotonicity and payment-oracle checks")
    p.add_argument("type_space")
    p.add_argument("-n", "--bidders", type=int, required=True)
    p.add_argument("--tol", type=float, default=verifier.INEQ_TOL)
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run one scenario; prints one JSON metrics record per pair and back-end")
    _add_config_flags(p)
    p.add_argument("--pair", type=int, help="only this source/destination pair index")
    p.add_argument("--events", help="write the JSON-lines event log here")
    p.add_argument("--snapshot", help="write the start-of-run snapshot (first pair) here")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="speed or node-count sweep over both back-ends, CSV output")
    _add_config_flags(p)
    p.add_argument("--axis", choices=("speed", "nodes"), default="speed")
    p.add_argument("--values", type=float, nargs="+", help="override the sweep values")
    p.add_argument("-o", "--out")
    p.add_argument("--records", help="also write per-pair metrics as JSON lines")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit exponential / normal / lognormal to path durations")
    _add_config_flags(p)
    p.add_argument("--samples", help="whitespace-separated durations; default: a pilot simulation")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--quantile", type=float, default=0.995)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "sweep" and args.values and args.axis == "nodes":
        args.values = [int(v) for v in args.values]
    try:
        return args.func(args)
    except (UsageError, harness.ConfigError, typespace.TypeSpaceError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001
        print(f"scenario failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
