"""JSON model files: market, agents, bundle and solver settings.

Schema (version 1)::

    {
      "schema_version": 1,
      "market": {"states": [...], "probs": [...],
                 "assets": [{"name": "S1", "increments": [...]}]},
      "agents": [{"name": "A", "kind": "entropic", "gamma": 1.0,
                  "endowment": [...], "view": [0]},
                 {"name": "B", "kind": "utility",
                  "utility": {"family": "power", "exponent": -1.0, "lower_bound": 0.0},
                  "initial_wealth": 2.0, "endowment": [...], "view": [0]}],
      "bundle": [{"name": "B1", "payoff": [...]}],
      "solver": {"tolerances": {"outer_gtol": 1e-10, "residual": 1e-6},
                 "max_iterations": 500, "divergence_bound": 1e6}
    }

View entries are 0-based asset indices.  Unknown keys are rejected.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SolverConfig
from .errors import InvalidProbabilities, ParseError, ValidationError
from .market import FiniteMarket, MarketView, MartingalePolytope, build_market, check_non_redundancy, union_view
from .risk import ENTROPIC, UTILITY, RiskModel, UtilitySpec

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_TOP = {"schema_version", "market", "agents", "bundle", "solver"}
_MARKET = {"states", "probs", "assets"}
_ASSET = {"name", "increments"}
_AGENT = {"name", "kind", "gamma", "utility", "endowment", "initial_wealth", "view"}
_UTILITY = {"family", "exponent", "lower_bound"}
_CLAIM = {"name", "payoff"}
_SOLVER = {"tolerances", "max_iterations", "divergence_bound"}
_TOLERANCES = {"outer_gtol", "residual"}


@dataclass
class ModelFile:
    market: FiniteMarket
    agents: list[RiskModel]
    bundle: np.ndarray
    bundle_names: list[str]
    solver: SolverConfig = field(default_factory=SolverConfig)
    warnings: list[str] = field(default_factory=list, compare=False)


def _keys(obj, allowed: set[str], where: str, required: set[str] = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise ValidationError(where, "expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(where, f"unknown field(s) {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ValidationError(where, f"missing field(s) {sorted(missing)}")


def _vector(value, length: int | None, where: str) -> np.ndarray:
    if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                              for x in value):
        raise ValidationError(where, "expected a list of numbers")
    arr = np.array(value, dtype=float)
    if length is not None and arr.size != length:
        raise ValidationError(where, f"expected {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(where, "entries must be finite")
    return arr


def _number(value, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(where, "expected a number")
    return float(value)


def model_from_dict(data) -> ModelFile:
    """Build and validate a model from decoded JSON."""
    _keys(data, _TOP, "model", {"schema_version", "market", "agents", "bundle"})
    if data["schema_version"] != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"unsupported version {data['schema_version']!r}")

    mk = data["market"]
    _keys(mk, _MARKET, "market", {"states", "probs"})
    states = mk["states"]
    if not isinstance(states, list) or not states:
        raise ValidationError("states", "expected a non-empty list")
    n = len(states)
    probs = _vector(mk["probs"], n, "probs")
    assets = mk.get("assets", [])
    if not isinstance(assets, list):
        raise ValidationError("assets", "expected a list")
    names, rows = [], []
    for k, asset in enumerate(assets):
        _keys(asset, _ASSET, f"assets[{k}]", {"name", "increments"})
        names.append(str(asset["name"]))
        rows.append(_vector(asset["increments"], n, f"assets[{k}].increments"))
    try:
        market = build_market(probs, np.array(rows).reshape(len(rows), n), [str(s) for s in states], names)
    except InvalidProbabilities as exc:
        raise ValidationError("probs", str(exc)) from exc

    agents_raw = data["agents"]
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ValidationError("agents", "expected a non-empty list")
    agents = []
    for k, ag in enumerate(agents_raw):
        where = f"agents[{k}]"
        _keys(ag, _AGENT, where, {"kind", "view"})
        view_raw = ag["view"]
        if not isinstance(view_raw, list) or not all(isinstance(i, int) and not isinstance(i, bool)
                                                     for i in view_raw):
            raise ValidationError("view", f"{where}: expected a list of asset indices")
        if any(not 0 <= i < market.n_assets for i in view_raw):
            raise ValidationError("view", f"{where}: index out of range for {market.n_assets} assets")
        if sorted(set(view_raw)) != view_raw:
            raise ValidationError("view", f"{where}: indices must be sorted and distinct")
        view = MarketView(tuple(view_raw))
        endowment = _vector(ag["endowment"], n, "endowment") if "endowment" in ag else None
        name = str(ag.get("name", f"agent{k}"))
        kind = ag["kind"]
        try:
            if kind == ENTROPIC:
                if "utility" in ag or "initial_wealth" in ag:
                    raise ValidationError(where, "entropic agents take only gamma")
                model = RiskModel.entropic(_number(ag.get("gamma"), "gamma"), view, endowment, name)
            elif kind == UTILITY:
                if "gamma" in ag:
                    raise ValidationError(where, "utility agents take a utility spec, not gamma")
                u = ag.get("utility")
                _keys(u, _UTILITY, "utility", {"family", "exponent"})
                spec = UtilitySpec(str(u["family"]), _number(u["exponent"], "utility.exponent"),
                                   _number(u.get("lower_bound", 0.0), "utility.lower_bound"))
                model = RiskModel.utility_based(spec, view, _number(ag.get("initial_wealth", 0.0),
                                                                    "initial_wealth"), endowment, name)
                base = model.initial_wealth + model.endowment_for(market)
                if np.any(base <= spec.domain_floor):
                    raise ValidationError("initial_wealth", f"{where}: wealth must exceed the utility's "
                                                            "lower bound in every state")
            else:
                raise ValidationError("kind", f"{where}: unknown kind {kind!r}")
        except ValueError as exc:
            raise ValidationError(where, str(exc)) from exc
        agents.append(model)

    covered = union_view([a.view for a in agents])
    if len(covered) != market.n_assets:
        raise ValidationError("view", "agents' views must jointly cover every asset")

    claims = data["bundle"]
    if not isinstance(claims, list) or not claims:
        raise ValidationError("bundle", "expected a non-empty list")
    bnames, payoffs = [], []
    for k, cl in enumerate(claims):
        _keys(cl, _CLAIM, f"bundle[{k}]", {"payoff"})
        bnames.append(str(cl.get("name", f"B{k + 1}")))
        payoffs.append(_vector(cl["payoff"], n, "payoff"))
    bundle = np.vstack(payoffs)

    solver = SolverConfig()
    if "solver" in data:
        s = data["solver"]
        _keys(s, _SOLVER, "solver")
        tol = s.get("tolerances", {})
        _keys(tol, _TOLERANCES, "solver.tolerances")
        solver = SolverConfig(
            outer_gtol=_number(tol.get("outer_gtol", solver.outer_gtol), "outer_gtol"),
            residual_tol=_number(tol.get("residual", solver.residual_tol), "residual"),
            max_iterations=int(s.get("max_iterations", solver.max_iterations)),
            divergence_bound=_number(s.get("divergence_bound", solver.divergence_bound), "divergence_bound"),
        )

    warnings = []
    ok, witness = check_non_redundancy(market, bundle, MartingalePolytope(market, covered))
    if not ok:
        msg = f"bundle is redundant: delta = {witness.tolist()}"
        warnings.append(msg)
        log.warning(msg)
    return ModelFile(market, agents, bundle, bnames, solver, warnings)


def load_model(path) -> ModelFile:
    """Read, parse and validate a model file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return model_from_dict(data)


def _floats(arr) -> list[float]:
    return [float(x) for x in np.asarray(arr).ravel()]


def model_to_dict(model: ModelFile) -> dict:
    mk = model.market
    agents = []
    for a in model.agents:
        rec = {"name": a.name, "kind": a.kind}
        if a.kind == ENTROPIC:
            rec["gamma"] = float(a.gamma)
        else:
            rec["utility"] = {"family": a.utility.family, "exponent": float(a.utility.exponent),
                              "lower_bound": float(a.utility.lower_bound)}
            rec["initial_wealth"] = float(a.initial_wealth)
        if a.endowment is not None:
            rec["endowment"] = _floats(a.endowment)
        rec["view"] = list(a.view.asset_indices)
        agents.append(rec)
    s = model.solver
    return {
        "schema_version": SCHEMA_VERSION,
        "market": {
            "states": list(mk.state_labels),
            "probs": _floats(mk.probs),
            "assets": [{"name": nm, "increments": _floats(row)} for nm, row in zip(mk.asset_names, mk.increments)],
        },
        "agents": agents,
        "bundle": [{"name": nm, "payoff": _floats(row)} for nm, row in zip(model.bundle_names, model.bundle)],
        "solver": {
            "tolerances": {"outer_gtol": s.outer_gtol, "residual": s.residual_tol},
            "max_iterations": s.max_iterations,
            "divergence_bound": s.divergence_bound,
        },
    }


def dumps_model(model: ModelFile) -> str:
    # repr-exact floats so that loading the text reproduces every bit
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def save_model(model: ModelFile, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")
