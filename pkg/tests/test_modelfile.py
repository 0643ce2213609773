import json

import numpy as np
import pytest

from equilibria.errors import ArbitrageDetected, ParseError, ValidationError
from equilibria.fixtures import ALL, fix_c
from equilibria.modelfile import dumps_model, load_model, model_from_dict, model_to_dict, save_model


@pytest.fixture
def raw():
    return model_to_dict(fix_c())


class TestRoundTrip:
    @pytest.mark.parametrize("name", sorted(ALL))
    def test_fixture_round_trip(self, name, tmp_path):
        model = ALL[name]()
        path = tmp_path / f"{name}.json"
        save_model(model, path)
        again = load_model(path)
        assert dumps_model(again) == dumps_model(model)
        assert np.array_equal(again.bundle, model.bundle)
        for a, b in zip(again.agents, model.agents):
            assert (a.name, a.kind, a.view, a.gamma, a.utility, a.initial_wealth) == (
                b.name, b.kind, b.view, b.gamma, b.utility, b.initial_wealth)
            assert np.array_equal(a.endowment_for(again.market), b.endowment_for(model.market))

    def test_awkward_floats_survive(self, raw):
        raw["market"]["probs"] = [0.1, 0.2, 0.3, 0.4]
        raw["agents"][0]["gamma"] = 1 / 3
        model = model_from_dict(raw)
        assert model.agents[0].gamma == 1 / 3
        back = model_from_dict(json.loads(dumps_model(model)))
        assert back.market.probs.tolist() == model.market.probs.tolist()

    def test_shipped_fixture_files_match(self):
        from pathlib import Path
        root = Path(__file__).resolve().parents[1] / "fixtures"
        for name, make in ALL.items():
            assert (root / f"{name}.json").read_text() == dumps_model(make())


class TestValidation:
    def test_probs_do_not_sum_to_one(self, raw):
        raw["market"]["probs"] = [0.3, 0.3, 0.3, 0.3]
        with pytest.raises(ValidationError) as info:
            model_from_dict(raw)
        assert info.value.field == "probs"

    def test_view_out_of_range(self, raw):
        raw["agents"][1]["view"] = [3]
        with pytest.raises(ValidationError) as info:
            model_from_dict(raw)
        assert info.value.field == "view"

    def test_views_must_cover_assets(self, raw):
        for ag in raw["agents"]:
            ag["view"] = []
        with pytest.raises(ValidationError, match="cover"):
            model_from_dict(raw)

    def test_unknown_key(self, raw):
        raw["agents"][0]["colour"] = "blue"
        with pytest.raises(ValidationError, match="colour"):
            model_from_dict(raw)

    def test_payoff_length(self, raw):
        raw["bundle"][0]["payoff"] = [1.0, 0.0]
        with pytest.raises(ValidationError) as info:
            model_from_dict(raw)
        assert info.value.field == "payoff"

    def test_unknown_kind(self, raw):
        raw["agents"][0]["kind"] = "quadratic"
        with pytest.raises(ValidationError) as info:
            model_from_dict(raw)
        assert info.value.field == "kind"

    def test_endowment_length(self, raw):
        raw["agents"][1]["endowment"] = [1.0]
        with pytest.raises(ValidationError) as info:
            model_from_dict(raw)
        assert info.value.field == "endowment"

    def test_arbitrage(self, raw):
        raw["market"]["assets"][0]["increments"] = [1.0, 1.0, 0.0, 0.0]
        with pytest.raises(ArbitrageDetected):
            model_from_dict(raw)

    def test_redundant_bundle_warns(self, raw):
        raw["bundle"].append({"name": "B2", "payoff": [1.0, 0.0, 1.0, 0.0]})
        model = model_from_dict(raw)
        assert model.warnings and "redundant" in model.warnings[0]

    def test_parse_error_location(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "schema_version": 1,\n  "market": [\n')
        with pytest.raises(ParseError, match=r"broken\.json:4:"):
            load_model(path)
