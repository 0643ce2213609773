"""Command-line interface.

Every subcommand prints one JSON record to stdout.  Exit codes: 0 success,
1 I/O or parse/validation error, 2 violated modelling assumption (including
arbitrage), 3 non-convergence.  Set EQUILIBRIA_LOG=DEBUG|INFO|WARNING for
diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .equilibrium import mutually_agreeable, pareto_check, solve_demand, solve_pepa
from .errors import (
    ArbitrageDetected,
    AssumptionViolated,
    DomainViolation,
    EmptyIntersection,
    NonConvergence,
    ParseError,
    PriceOutsideRange,
    ValidationError,
)
from .modelfile import load_model
from .oracle import GridSpec, pepa_grid_search
from .risk import inf_convolution, rho
from .stability import KINDS, PerturbationFamily, run_stability_sweep

log = logging.getLogger("equilibria")


def _clean(obj: Any) -> Any:
    """Round floats to 12 significant digits and turn arrays into lists."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        x = float(f"{x:.12g}")
        return 0.0 if x == 0 else x
    return obj


def emit(record: dict) -> None:
    sys.stdout.write(json.dumps(_clean(record), indent=2) + "\n")


def _json_arg(text: str):
    path = Path(text)
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return json.loads(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> dict:
    model = load_model(args.model)
    return {
        "command": "validate",
        "status": "ok",
        "states": model.market.n_states,
        "assets": model.market.n_assets,
        "agents": [a.name for a in model.agents],
        "bundle": model.bundle_names,
        "certificate": model.market.certificate,
        "warnings": model.warnings,
    }


def cmd_price(args) -> dict:
    model = load_model(args.model)
    res = solve_pepa(model.agents, model.market, model.bundle, config=model.solver)
    record = {
        "command": "price",
        "status": "ok",
        "bundle": model.bundle_names,
        "price": res.price,
        "allocation": {a.name: row for a, row in zip(model.agents, res.allocation)},
        "aggregate_requirement": res.value,
        "clearing_residual": res.clearing_residual,
        "foc_residual": res.foc_residual,
        "iterations": res.iterations,
        "optimizer_measures": {a.name: q for a, q in zip(model.agents, res.optimizer_measures)},
    }
    if args.oracle_step:
        n, I = model.bundle.shape[0], len(model.agents)
        d = (I - 1) * n
        grid = GridSpec((-args.oracle_box,) * d, (args.oracle_box,) * d, args.oracle_step)
        ge = pepa_grid_search(model.agents, model.market, model.bundle, grid)
        record["oracle"] = {"price": ge.price, "allocation": ge.allocation}
    return record


def _agent_index(model, key: str) -> int:
    names = [a.name for a in model.agents]
    if key in names:
        return names.index(key)
    try:
        idx = int(key)
    except ValueError:
        raise ValidationError("agent", f"no agent named {key!r}") from None
    if not 0 <= idx < len(names):
        raise ValidationError("agent", f"agent index {idx} out of range")
    return idx


def cmd_demand_sweep(args) -> dict:
    model = load_model(args.model)
    agent = model.agents[_agent_index(model, args.agent)]
    n = model.bundle.shape[0]
    if not 0 <= args.claim < n:
        raise ValidationError("claim", f"claim index {args.claim} out of range")
    if args.base_price is not None:
        base = np.asarray(_json_arg(args.base_price), dtype=float).ravel()
    else:
        base = model.bundle @ rho(agent, model.market, np.zeros(model.market.n_states)).optimizer_measure
    prices = np.linspace(args.price_from, args.price_to, args.steps)
    rows = []
    for value in prices:
        p = base.copy()
        p[args.claim] = value
        d = solve_demand(agent, model.market, model.bundle, p, model.solver)
        rows.append((p, d.allocation, d.residual))
    own = np.array([r[1][args.claim] for r in rows])
    decreasing = bool(np.all(np.diff(own) < 0))
    if args.out:
        header = ([f"price_{k}" for k in range(n)] + [f"demand_{k}" for k in range(n)] + ["residual"])
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for p, a, r in rows:
                writer.writerow([f"{x:.12g}" for x in (*p, *a, r)])
    return {
        "command": "demand-sweep",
        "status": "ok",
        "agent": agent.name,
        "claim": model.bundle_names[args.claim],
        "rows": len(rows),
        "strictly_decreasing": decreasing,
        "max_residual": max(r[2] for r in rows),
        "out": args.out,
    }


def cmd_pareto(args) -> dict:
    model = load_model(args.model)
    res = pareto_check(model.agents, model.market)
    return {"command": "pareto-check", "status": "ok", "pareto": res.is_pareto,
            "gap": res.gap, "measure": res.measure}


def cmd_agree(args) -> dict:
    model = load_model(args.model)
    price = None
    if args.allocation is None:
        pepa = solve_pepa(model.agents, model.market, model.bundle, config=model.solver)
        allocation, price = pepa.allocation, pepa.price
    else:
        allocation = np.asarray(_json_arg(args.allocation), dtype=float)
    if args.price is not None:
        price = np.asarray(_json_arg(args.price), dtype=float)
    try:
        res = mutually_agreeable(model.agents, model.market, model.bundle, allocation, price)
    except ValueError as exc:
        raise ValidationError("allocation", str(exc)) from exc
    return {"command": "agree-check", "status": "ok", "agreeable": res.agreeable,
            "allocation": allocation, "price": res.price, "certificate": res.certificate,
            "value": res.value, "requirements": res.rho_values}


def cmd_infconv(args) -> dict:
    model = load_model(args.model)
    if args.payoff is not None:
        claim = np.asarray(_json_arg(args.payoff), dtype=float)
    else:
        claim = np.zeros(model.market.n_states)
    if claim.shape != (model.market.n_states,):
        raise ValidationError("payoff", f"expected {model.market.n_states} entries")
    res = inf_convolution(model.agents, model.market, claim)
    return {"command": "infconv", "status": "ok", "claim": claim, "value": res.value,
            "split": {a.name: row for a, row in zip(model.agents, res.split)},
            "residual": res.residual}


def cmd_stability(args) -> dict:
    model = load_model(args.model)
    family = PerturbationFamily(model.agents, model.market, args.family, args.length, args.rate)
    report = run_stability_sweep(family, None, model.bundle, config=model.solver)
    if args.out:
        report.to_csv(args.out)
    last = report.rows[-1]
    return {
        "command": "stability-sweep",
        "status": "ok",
        "family": args.family,
        "steps": len(report.rows),
        "limit_price": report.limit.price,
        "final_price_gap": last.price_gap,
        "final_allocation_gap": last.allocation_gap,
        "final_r_gap": last.r_gap,
        "monotone_tail": report.monotone_tail(),
        "min_margin": report.min_margin,
        "extrapolated_price": report.extrapolated_price,
        "out": args.out,
    }


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equilibria", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load and validate a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("price", help="solve for the partial-equilibrium price-allocation")
    p.add_argument("model")
    p.add_argument("--oracle-step", type=float, default=None, help=argparse.SUPPRESS)
    p.add_argument("--oracle-box", type=float, default=3.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("demand-sweep", help="one agent's demand along a price line")
    p.add_argument("model")
    p.add_argument("--agent", default="0", help="agent name or index")
    p.add_argument("--claim", type=int, default=0, help="index of the claim whose price varies")
    p.add_argument("--from", dest="price_from", type=float, required=True)
    p.add_argument("--to", dest="price_to", type=float, required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--base-price", default=None,
                   help="JSON price vector for the other claims (default: marginal prices at zero holdings)")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_demand_sweep)

    p = sub.add_parser("pareto-check", help="test whether the agents are in a Pareto-optimal configuration")
    p.add_argument("model")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("agree-check", help="test mutual agreeability of an allocation")
    p.add_argument("model")
    p.add_argument("--allocation", default=None, help="JSON I x n matrix or path (default: the PEPA allocation)")
    p.add_argument("--price", default=None, help="candidate witness price (JSON)")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("infconv", help="inf-convolution of the agents' requirements")
    p.add_argument("model")
    p.add_argument("--payoff", default=None, help="JSON claim vector or path (default: zero claim)")
    p.set_defaults(func=cmd_infconv)

    p = sub.add_parser("stability-sweep", help="equilibria along a converging perturbation family")
    p.add_argument("model")
    p.add_argument("--family", choices=KINDS, default="gamma")
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=cmd_stability)
    return parser


EXIT_CODES = (
    ((ArbitrageDetected, AssumptionViolated, EmptyIntersection, PriceOutsideRange, DomainViolation), 2),
    ((NonConvergence,), 3),
    ((ParseError, ValidationError, OSError, json.JSONDecodeError), 1),
)


def run_cli(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EQUILIBRIA_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        emit(args.func(args))
        return 0
    except Exception as exc:
        for types, code in EXIT_CODES:
            if isinstance(exc, types):
                print(f"error: {exc}", file=sys.stderr)
                emit({"command": args.command, "status": "error", "error": type(exc).__name__,
                      "message": str(exc)})
                return code
        raise


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
