import numpy as np
import pytest

from esharing import cases, equilibrium
from esharing.bidding import (
    BiddingConfig,
    a_min,
    fejer_check,
    platform_update,
    prosumer_update,
    run_bidding,
    write_trace_csv,
)
from esharing.errors import MaxIterExceeded, WeakSensitivityWarning
from esharing.market import Scenario, clear_market


def test_platform_fixed_point(two_f5):
    bids = np.array([10.5, 30.6])
    lam = clear_market(two_f5, bids).prices
    assert platform_update(two_f5, lam, bids) == pytest.approx(lam, abs=1e-9)


def test_platform_uncongested_shift(two_f10):
    # away from limits the update averages the prior prices toward balance
    bids = np.array([12.0, 28.0])
    lam_k = np.array([1.0, 3.0])
    lam = platform_update(two_f10, lam_k, bids)
    shift = (lam_k.sum() / 2.0 - bids.sum() / two_f10.a) / 2.0
    assert lam == pytest.approx(lam_k / 2.0 - shift)
    assert lam.sum() == pytest.approx(bids.sum() / two_f10.a)


def test_prosumer_update_formula(two_f5):
    p, b = prosumer_update(two_f5, np.array([1.55, 2.56]))
    assert p == pytest.approx([105.0, 195.0], abs=1e-10)
    assert b == pytest.approx([10.5, 30.6], abs=1e-10)


def test_prosumer_update_is_best_reply(two_f10):
    # the update minimizes J_i(p) + lam * (D - p) + (p - D + a lam)^2 term
    lam = np.array([2.0, 2.0])
    p, b = prosumer_update(two_f10, lam)
    w = 1.0 / (two_f10.a * (two_f10.size - 1))
    grid = np.linspace(-50.0, 350.0, 200001)
    for i in range(2):
        vals = two_f10.prosumers[i].disutility(grid) \
            + lam[i] * (two_f10.D[i] - grid) \
            + 0.5 * w * (two_f10.D[i] - grid) ** 2
        assert p[i] == pytest.approx(grid[vals.argmin()], abs=0.01)


def test_a_min_values():
    assert a_min(cases.two_prosumer_line(5.0)) == 0.0
    assert a_min(cases.three_bus_chain(1.0, (1.0, 1.0, 0.0), 0.3)) == \
        pytest.approx(0.25)
    ten = cases.uniform_chain(10, c=0.003, d=0.1, demand=10.0,
                              limit=np.inf, a=200.0)
    assert a_min(ten) == pytest.approx(4000.0 / 27.0)


def test_bidding_converges_to_equilibrium(two_f5):
    eqm = equilibrium.improved_gne(two_f5)
    result = run_bidding(two_f5, BiddingConfig(epsilon=1e-4))
    assert result.iterations <= 50
    assert np.abs(result.bids - eqm.b_bar).max() <= 1e-3
    assert np.abs(result.production - eqm.p_bar).max() <= 1e-3
    report = fejer_check(result.trace, eqm)
    assert report.monotone
    assert report.max_violation <= 1e-9
    assert np.all(np.diff(report.distances) <= 1e-9)


def test_bidding_started_at_equilibrium_stays(two_f5):
    eqm = equilibrium.improved_gne(two_f5)
    config = BiddingConfig(epsilon=1e-6, init_bids=eqm.b_bar,
                           init_prices=eqm.lambda_r)
    result = run_bidding(two_f5, config)
    assert result.iterations <= 2
    assert np.abs(result.bids - eqm.b_bar).max() <= 1e-6


def test_bidding_on_chain(chain_f03):
    eqm = equilibrium.improved_gne(chain_f03)
    result = run_bidding(chain_f03, BiddingConfig(epsilon=1e-8, max_iter=500))
    assert np.abs(result.bids - eqm.b_bar).max() <= 1e-6
    assert np.abs(result.prices - eqm.lambda_r).max() <= 1e-6


def test_weak_sensitivity_warns():
    base = cases.three_bus_chain(1.0, (1.0, 1.0, 0.0), 0.3)
    weak = Scenario(network=base.network, prosumers=base.prosumers, a=0.2)
    with pytest.warns(WeakSensitivityWarning):
        run_bidding(weak, BiddingConfig(epsilon=1e-3, max_iter=400))


def test_iteration_cap_raises_with_trace(two_f5):
    with pytest.raises(MaxIterExceeded) as excinfo:
        run_bidding(two_f5, BiddingConfig(epsilon=1e-14, max_iter=3))
    err = excinfo.value
    assert err.trace is not None
    assert len(err.trace) >= 3
    assert err.residual > 1e-14


def test_default_epsilon_scales_with_demand(two_f5):
    config = BiddingConfig()
    expected = 1e-6 * (1.0 + float(np.abs(two_f5.D).max()))
    assert config.resolved_epsilon(two_f5) == pytest.approx(expected)


def test_trace_csv_export(tmp_path, two_f5):
    eqm = equilibrium.improved_gne(two_f5)
    result = run_bidding(two_f5, BiddingConfig(epsilon=1e-4))
    path = tmp_path / "trace.csv"
    write_trace_csv(result.trace, path, eqm=eqm)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,i,lambda,b,p,delta_b_norm,dist_to_eqm"
    assert len(lines) == 1 + 2 * len(result.trace)
    first = lines[1].split(",")
    assert first[0] == "1" and first[1] == "1"
    assert first[5] == ""  # no bid change defined on the first sweep
    dists = [float(row.split(",")[6]) for row in lines[1::2]]
    assert dists == sorted(dists, reverse=True)


def test_trace_distance_helper(two_f5):
    eqm = equilibrium.improved_gne(two_f5)
    result = run_bidding(two_f5, BiddingConfig(epsilon=1e-4))
    dist = result.trace.distances(eqm)
    assert len(dist) == len(result.trace)
    assert dist[-1] <= 1e-3
