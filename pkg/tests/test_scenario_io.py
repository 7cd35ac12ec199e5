import json

import numpy as np
import pytest

from esharing import cases
from esharing.bidding import a_min
from esharing.errors import FileError
from esharing.market import Prosumer, Scenario
from esharing.network import is_radial
from esharing.scenario_io import (
    dump_scenario,
    gen_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


def test_round_trip(tmp_path, two_f5):
    path = tmp_path / "sc.json"
    dump_scenario(two_f5, path, units="kW", labels={"name": "pair"})
    back = load_scenario(path)
    assert back.a == two_f5.a
    assert back.c == pytest.approx(two_f5.c)
    assert back.d == pytest.approx(two_f5.d)
    assert back.D == pytest.approx(two_f5.D)
    assert back.network.limits == pytest.approx(two_f5.network.limits)
    assert back.label == "pair"


def test_infinite_limit_round_trips(tmp_path, chain_f03):
    path = tmp_path / "chain.json"
    dump_scenario(chain_f03, path)
    doc = json.loads(path.read_text())
    limits = [ld["limit"] for ld in doc["network"]["lines"]]
    assert limits == [0.3, None]
    back = load_scenario(path)
    assert back.network.limits[1] == np.inf


def test_baseline_round_trips(tmp_path):
    pros = [Prosumer(c=1.0, d=0.1, demand_reduction=2.0, base_production=1.5,
                     base_purchase=0.5, base_demand=2.0),
            Prosumer(c=2.0, d=0.2, demand_reduction=1.0)]
    base = cases.two_prosumer_line(3.0)
    scenario = Scenario(network=base.network, prosumers=pros, a=1.0)
    path = tmp_path / "b.json"
    dump_scenario(scenario, path)
    back = load_scenario(path)
    assert back.prosumers[0].base_production == 1.5
    assert back.prosumers[1].base_production is None


def test_unsupported_version_rejected(two_f5):
    doc = scenario_to_dict(two_f5)
    doc["version"] = "99"
    with pytest.raises(FileError):
        scenario_from_dict(doc)


def test_missing_key_rejected(two_f5):
    doc = scenario_to_dict(two_f5)
    del doc["prosumers"]
    with pytest.raises(FileError):
        scenario_from_dict(doc)


def test_mismatched_counts_rejected(two_f5):
    doc = scenario_to_dict(two_f5)
    doc["prosumers"] = doc["prosumers"][:1]
    with pytest.raises(FileError):
        scenario_from_dict(doc)


def test_non_object_file_rejected(tmp_path):
    path = tmp_path / "arr.json"
    path.write_text("[1, 2, 3]\n")
    with pytest.raises(FileError):
        load_scenario(path)


def test_generator_is_deterministic(tmp_path):
    a = gen_scenario(123, 9)
    b = gen_scenario(123, 9)
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    dump_scenario(a, pa)
    dump_scenario(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    other = gen_scenario(124, 9)
    assert not np.array_equal(a.c, other.c)


def test_generator_output_properties():
    for seed in (0, 5, 77):
        scenario = gen_scenario(seed, 11)
        assert scenario.size == 11
        assert is_radial(scenario.network)
        assert scenario.a >= a_min(scenario)
        assert np.all(scenario.c > 0)
        assert np.all(scenario.network.limits > 0)


def test_generator_tight_style_congests_more():
    loose = gen_scenario(8, 6, style="default")
    tight = gen_scenario(8, 6, style="tight")
    assert np.all(tight.network.limits <= loose.network.limits + 1e-12)
    assert tight.network.limits.sum() < loose.network.limits.sum()
