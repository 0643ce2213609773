"""Small reference models used by the tests, the README and the CLI examples.

``fix_a``: two equally likely states, no traded asset, one entropic agent.
``fix_b``: four equally likely states, one asset with gains (1, 1, -1, -1),
two entropic agents (risk aversion 1 and 2) without endowments, bundle
``(1, 0, 1, 0)``.  ``fix_c``: ``fix_b`` with the second agent endowed with
``(0, 1, 0, 1)``.  ``fix_power``: ``fix_b``'s market with a power-utility
agent and an exponential-utility agent.

Run ``python -m equilibria.fixtures DIR`` to write them as JSON files.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .market import MarketView, build_market
from .modelfile import ModelFile, save_model
from .risk import RiskModel, UtilitySpec

HALF_CLAIM = np.array([1.0, 0.0, 1.0, 0.0])


def fix_a() -> ModelFile:
    market = build_market([0.5, 0.5], None, ["up", "down"])
    agent = RiskModel.entropic(1.0, MarketView(()), name="A1")
    return ModelFile(market, [agent], np.array([[1.0, -1.0]]), ["B1"])


def _fix_b_market():
    return build_market([0.25] * 4, [[1.0, 1.0, -1.0, -1.0]], ["w1", "w2", "w3", "w4"], ["S1"])


def fix_b() -> ModelFile:
    market = _fix_b_market()
    view = MarketView((0,))
    agents = [RiskModel.entropic(1.0, view, name="A1"), RiskModel.entropic(2.0, view, name="A2")]
    return ModelFile(market, agents, HALF_CLAIM[None, :].copy(), ["B1"])


def fix_c() -> ModelFile:
    model = fix_b()
    a1, a2 = model.agents
    model.agents = [a1, a2.with_(endowment=np.array([0.0, 1.0, 0.0, 1.0]))]
    return model


def fix_power() -> ModelFile:
    market = _fix_b_market()
    view = MarketView((0,))
    agents = [
        RiskModel.utility_based(UtilitySpec("power", -1.0, 0.0), view, 2.0, name="P1"),
        RiskModel.utility_based(UtilitySpec("exponential", 1.5), view, 1.0,
                                np.array([0.0, 0.5, 0.0, 0.5]), name="X2"),
    ]
    return ModelFile(market, agents, HALF_CLAIM[None, :].copy(), ["B1"])


ALL = {"fix_a": fix_a, "fix_b": fix_b, "fix_c": fix_c, "fix_power": fix_power}


def write_all(directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, make in ALL.items():
        save_model(make(), directory / f"{name}.json")


if __name__ == "__main__":
    write_all(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
