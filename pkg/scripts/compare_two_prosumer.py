#!/usr/bin/env python3
"""Cost comparison across market designs for the two-prosumer fixtures.

Prints, for transfer limits 5 and 10: per-prosumer costs under
self-sufficiency, the social optimum, the regulated equilibrium, and the
price-taking benchmark, plus prices and the platform's net collection.
Also runs the bidding protocol on the congested fixture and writes its
trace to ``two_prosumer_trace.csv``.
"""

import numpy as np

from esharing import cases, equilibrium
from esharing.bidding import BiddingConfig, run_bidding, write_trace_csv


def row(label, values, fmt="{:>10.3f}"):
    cells = "".join(fmt.format(v) for v in np.atleast_1d(values))
    print(f"{label:<28}{cells}")


def report(limit):
    scenario = cases.two_prosumer_line(limit)
    print(f"\n=== transfer limit {limit:g} ===")
    selfsuff, selfsuff_total = equilibrium.self_sufficiency(scenario)
    so = equilibrium.social_optimum(scenario)
    eqm = equilibrium.improved_gne(scenario)
    pt = equilibrium.price_taking_equilibrium(scenario)
    pt_costs = scenario.disutility(pt.p_tilde) \
        + pt.prices * (scenario.D - pt.p_tilde)

    row("self-sufficiency cost", selfsuff)
    row("social optimum cost", so.cost_per_prosumer)
    row("regulated equilibrium cost", eqm.costs)
    row("price-taking cost", pt_costs)
    print()
    row("social production", so.p_tilde)
    row("equilibrium production", eqm.p_bar)
    row("equilibrium bids", eqm.b_bar)
    row("regulated prices", eqm.lambda_r, fmt="{:>10.4f}")
    row("price-taking prices", pt.prices, fmt="{:>10.4f}")
    print()
    row("total: self-sufficiency", selfsuff_total)
    row("total: social", so.total_cost)
    row("total: equilibrium", eqm.total_disutility)
    poa = equilibrium.poa(scenario)
    row("efficiency ratio", poa["poa_value"], fmt="{:>10.6f}")
    row("ratio upper bound", poa["upper_bound"], fmt="{:>10.6f}")
    row("platform net collection", eqm.net_payment, fmt="{:>10.4f}")


def main():
    for limit in (10.0, 5.0):
        report(limit)

    scenario = cases.two_prosumer_line(5.0)
    eqm = equilibrium.improved_gne(scenario)
    result = run_bidding(scenario, BiddingConfig(epsilon=1e-4))
    write_trace_csv(result.trace, "two_prosumer_trace.csv", eqm=eqm)
    print(f"\nbidding on limit 5: {result.iterations} iterations, "
          f"final bids {np.round(result.bids, 4)}")
    print("trace written to two_prosumer_trace.csv")


if __name__ == "__main__":
    main()
