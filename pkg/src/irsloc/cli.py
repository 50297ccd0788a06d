"""Command-line front end: ``irsloc solve|sweep|check``.

Exit codes: 0 success, 1 some solve or check failed, 2 invalid config.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .baselines import SCHEMES, baseline_equal_power, run_scheme
from .channel import build_channels
from .crb import position_fim, weyl_monotonicity_check
from .geometry import delay_gradients
from .oracles import dense_chain_rule_fim, fd_jacobian
from .scenario import (ConfigError, ExperimentPlan, LayoutError, load_config, run_plan,
                       scenario_from_config)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _report_dict(scheme, report) -> dict:
    b = report.beams
    out = {"scheme": scheme, "status": report.status, "crb_m2": report.crb.tolist(),
           "worst_crb_m2": report.worst_crb, "orthogonality": report.orthogonality}
    if b is not None:
        out.update(p_w=b.p.tolist(), active=b.active_set, transmit_power_w=b.transmit_power)
    return out


def cmd_solve(args) -> int:
    scenario = scenario_from_config(load_config(args.config), seed=args.seed)
    report = run_scheme(args.scheme, scenario)
    text = json.dumps(_report_dict(args.scheme, report), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    ok = report.status in ("ok", "optimal") and np.all(np.isfinite(report.crb))
    return EXIT_OK if ok else EXIT_FAILED


def cmd_sweep(args) -> int:
    plan = ExperimentPlan.from_config(load_config(args.plan), seed=args.seed, out=args.out,
                                      trials=args.trials, workers=args.workers,
                                      schemes=tuple(args.scheme) if args.scheme else None)
    path, rows = run_plan(plan)
    failed = sum(r.status.startswith("failed") for r in rows)
    print(f"wrote {len(rows)} rows to {path} ({failed} failed)")
    return EXIT_FAILED if failed else EXIT_OK


def run_checks(scenario, trials: int = 100, rng=None) -> list[tuple[str, bool, str]]:
    """Oracle and invariant checks on one scenario; ``(name, passed, detail)`` per check."""
    rng = np.random.default_rng(scenario.rng_seed) if rng is None else rng
    results = []
    geo = delay_gradients(scenario)
    fd = fd_jacobian(scenario, 1e-4)
    err = max(np.abs(geo.a - fd.a).max(), np.abs(geo.b - fd.b).max())
    results.append(("jacobian-vs-finite-difference", err <= 1e-6, f"max error {err:.2e}"))

    report = baseline_equal_power(scenario)
    beams = report.beams
    results.append(("zero-forcing-orthogonality", report.orthogonality < 1e-9,
                    f"max cross term {report.orthogonality:.2e}"))
    power_err = abs(beams.transmit_power - scenario.p_max) / scenario.p_max
    results.append(("power-budget", power_err <= 1e-6, f"relative error {power_err:.2e}"))

    ch = build_channels(scenario)
    fim = position_fim(scenario, ch, geo, beams)
    if scenario.n_irs <= 4 and scenario.n_targets <= 3:
        dense, _ = dense_chain_rule_fim(scenario, beams, ch)
        rel = float(np.abs(dense - fim.G).max() / np.abs(dense).max())
        results.append(("fim-vs-dense-chain-rule", rel <= 1e-9, f"relative error {rel:.2e}"))

    violations = 0
    Q, K = scenario.n_targets, scenario.n_irs
    for _ in range(trials):
        q, k, l = rng.integers(Q), rng.integers(K), rng.integers(K)
        delta = float(rng.exponential()) * float(np.abs(fim.G[q]).max())
        violations += not weyl_monotonicity_check(fim, q, k, l, delta)
    results.append(("crb-monotone-in-path-energy", violations == 0,
                    f"{violations} violations in {trials} draws"))
    return results


def cmd_check(args) -> int:
    scenario = scenario_from_config(load_config(args.config), seed=args.seed)
    results = run_checks(scenario, trials=args.trials)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(p for _, p, _ in results) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario file and print the CRB report")
    p.add_argument("config", help="YAML/JSON scenario file")
    p.add_argument("--seed", type=int, default=0, help="layout seed when no positions are given")
    p.add_argument("--scheme", choices=SCHEMES, default="two-stage")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run an experiment plan and write a CSV")
    p.add_argument("plan", help="YAML/JSON plan file")
    p.add_argument("--seed", type=int, help="first seed (overrides the plan)")
    p.add_argument("--out", help="CSV path (overrides the plan)")
    p.add_argument("--scheme", action="append", choices=SCHEMES,
                   help="scheme to run; repeat for several (overrides the plan)")
    p.add_argument("--trials", type=int, help="seeds per swept value (overrides the plan)")
    p.add_argument("--workers", type=int, help="worker processes (overrides the plan)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run oracle and invariant checks on a scenario")
    p.add_argument("config", help="YAML/JSON scenario file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100, help="random draws for property checks")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LayoutError, RuntimeError, ValueError, ArithmeticError) as exc:
        # solver and geometry errors: report them without a traceback
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
