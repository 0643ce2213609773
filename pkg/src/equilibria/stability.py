"""Perturbation families of agents and the equilibrium stability sweep.

A family moves one preference parameter (risk aversion, endowment,
reference probabilities or initial wealth) towards its base value on a
geometric schedule.  The sweep re-solves the equilibrium at every step and
records how far price and allocation are from the limiting equilibrium,
together with the pointwise gap of the agents' requirement functions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import SolverConfig
from .equilibrium import DEFAULT, PepaResult, solve_pepa
from .errors import AssumptionViolated
from .market import FiniteMarket, build_market
from .risk import ENTROPIC, RiskModel, UtilitySpec, rho, strict_convexity_probe

log = logging.getLogger(__name__)

KINDS = ("constant", "gamma", "endowment", "probs", "wealth")


@dataclass
class PerturbationFamily:
    """Agents whose parameters converge to ``base`` as ``m`` grows.

    At step ``m`` the perturbation weight is ``rate ** m``:

    * ``gamma``: absolute risk aversion (relative, 1 - k, for power utility) scaled by ``1 + w``
    * ``endowment``: endowments scaled by ``1 - w``
    * ``probs``: reference measure ``(1 - w) P + w * probs_target``
    * ``wealth``: initial wealth of utility-based agents scaled by ``1 + w``
    * ``constant``: no perturbation
    """

    base: list[RiskModel]
    market: FiniteMarket
    kind: str = "gamma"
    length: int = 20
    rate: float = 0.5
    probs_target: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}; expected one of {KINDS}")
        if not 0 < self.rate < 1:
            raise ValueError("rate must lie in (0, 1)")
        if self.probs_target is None:
            t = np.arange(1.0, self.market.n_states + 1.0)
            self.probs_target = t / t.sum()
        self.probs_target = np.asarray(self.probs_target, dtype=float)

    @property
    def steps(self) -> range:
        return range(self.length + 1)

    def weight(self, m: int) -> float:
        return self.rate ** m

    def market_at(self, m: int) -> FiniteMarket:
        if self.kind != "probs":
            return self.market
        w = self.weight(m)
        probs = (1 - w) * self.market.probs + w * self.probs_target
        probs = probs / probs.sum()
        return build_market(probs, self.market.increments, self.market.state_labels,
                            self.market.asset_names)

    def _perturb(self, model: RiskModel, w: float) -> RiskModel:
        if self.kind == "gamma":
            if model.kind == ENTROPIC:
                return model.with_(gamma=model.gamma * (1 + w))
            u = model.utility
            if u.family == "exponential":
                return model.with_(utility=UtilitySpec(u.family, u.exponent * (1 + w), u.lower_bound))
            # power: scale relative risk aversion 1 - k so the exponent stays below 1
            k = 1 - (1 - u.exponent) * (1 + w)
            if k == 0:
                raise ValueError("perturbed power exponent hit 0 (log utility is not supported)")
            return model.with_(utility=UtilitySpec(u.family, k, u.lower_bound))
        if self.kind == "endowment" and model.endowment is not None:
            return model.with_(endowment=model.endowment * (1 - w))
        if self.kind == "wealth" and model.kind != ENTROPIC:
            return model.with_(initial_wealth=model.initial_wealth * (1 + w))
        return model

    def models_at(self, m: int) -> list[RiskModel]:
        w = self.weight(m)
        return [self._perturb(model, w) for model in self.base]


def default_grid(center, radius: float = 1.0, points: int = 5) -> np.ndarray:
    """Box grid of allocation vectors around ``center`` (an I x n or n array)."""
    center = np.atleast_2d(np.asarray(center, dtype=float))
    lo, hi = center.min(axis=0) - radius, center.max(axis=0) + radius
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def _r_values(models, market, bundle, grid) -> np.ndarray:
    return np.array([[rho(mdl, market, a @ bundle).value for a in grid] for mdl in models])


def pointwise_convergence_check(family: PerturbationFamily, market: FiniteMarket | None, bundle, grid,
                                per_agent: bool = False) -> np.ndarray:
    """Max over ``grid`` of ``|r_i^(m)(a) - r_i(a)|`` for every step ``m``.

    Returns an array indexed by ``m``; with ``per_agent`` the array has one
    column per agent.  ``market`` defaults to the family's base market.
    """
    bundle = np.atleast_2d(np.asarray(bundle, dtype=float))
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    market = family.market if market is None else market
    base = _r_values(family.base, market, bundle, grid)
    gaps = []
    for m in family.steps:
        rm = _r_values(family.models_at(m), family.market_at(m), bundle, grid)
        gaps.append(np.max(np.abs(rm - base), axis=1))
    gaps = np.array(gaps)
    return gaps if per_agent else gaps.max(axis=1)


@dataclass
class SweepRow:
    m: int
    price: np.ndarray
    allocation: np.ndarray
    price_gap: float
    allocation_gap: float
    r_gap: float
    value_gap: float
    margin: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    limit: PepaResult
    extrapolated_price: np.ndarray
    min_margin: float
    results: list[PepaResult] = field(repr=False, default_factory=list)

    def gaps(self, attr: str) -> np.ndarray:
        return np.array([getattr(r, attr) for r in self.rows])

    def monotone_tail(self, start: int = 5, floor: float = 1e-8) -> bool:
        """Price and allocation gaps never increase (beyond ``floor``) from step ``start`` on."""
        for attr in ("price_gap", "allocation_gap"):
            g = self.gaps(attr)[start:]
            if np.any(np.diff(g) > floor):
                return False
        return True

    def header(self) -> list[str]:
        n = self.limit.price.size
        I = self.limit.allocation.shape[0]
        return (["m"] + [f"price_{k}" for k in range(n)]
                + [f"allocation_{i}_{k}" for i in range(I) for k in range(n)]
                + ["price_gap", "allocation_gap", "r_gap"])

    def table(self) -> list[list[float]]:
        return [[r.m, *r.price, *r.allocation.ravel(), r.price_gap, r.allocation_gap, r.r_gap]
                for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in self.table():
                writer.writerow([row[0]] + [f"{x:.12g}" for x in row[1:]])


def _aggregate(models, market, bundle, allocation) -> float:
    return sum(rho(mdl, market, a @ bundle).value for mdl, a in zip(models, allocation))


def run_stability_sweep(family: PerturbationFamily, market: FiniteMarket | None, bundle,
                        grid=None, config: SolverConfig = DEFAULT) -> SweepReport:
    """Solve the equilibrium at each step of the family and at the limit.

    Raises AssumptionViolated with attribute ``m`` when a perturbed agent
    set fails the existence checks.
    """
    bundle = np.atleast_2d(np.asarray(bundle, dtype=float))
    market = family.market if market is None else market
    limit = solve_pepa(family.base, market, bundle, config=config)
    if grid is None:
        grid = default_grid(limit.allocation)
    r_gaps = pointwise_convergence_check(family, market, bundle, grid)
    limit_value = _aggregate(family.base, market, bundle, limit.allocation)
    rows, results = [], []
    for m in family.steps:
        models, mkt = family.models_at(m), family.market_at(m)
        try:
            res = solve_pepa(models, mkt, bundle, config=config)
        except AssumptionViolated as exc:
            err = AssumptionViolated(exc.assumption, f"step m={m}: {exc}", exc.witness)
            err.m = m
            raise err from exc
        margin = min(strict_convexity_probe(mdl, mkt, bundle, samples=config.probe_samples, seed=k).min_margin
                     for k, mdl in enumerate(models))
        value_gap = _aggregate(family.base, market, bundle, res.allocation) - limit_value
        rows.append(SweepRow(
            m=m,
            price=res.price,
            allocation=res.allocation,
            price_gap=float(np.max(np.abs(res.price - limit.price))),
            allocation_gap=float(np.max(np.abs(res.allocation - limit.allocation))),
            r_gap=float(r_gaps[m]),
            value_gap=float(value_gap),
            margin=float(margin),
        ))
        results.append(res)
        log.info("sweep m=%d price_gap=%.3e allocation_gap=%.3e", m, rows[-1].price_gap, rows[-1].allocation_gap)
    r = family.rate
    if len(rows) >= 2:
        extrapolated = (rows[-1].price - r * rows[-2].price) / (1 - r)
    else:
        extrapolated = rows[-1].price
    return SweepReport(rows, limit, extrapolated, min(row.margin for row in rows), results)
