"""Market clearing, price regulation, and prosumer cost accounting.

The clearing rule selects the price vector of minimum squared norm among all
prices whose induced demands ``q_i = -a lam_i + b_i`` balance to zero and keep
every line flow within its limit.  It is solved directly in the price
variables so the reported duals (``eta`` for balance, ``alpha`` for the flow
bounds) match the stationarity system

    2 lam_i + a eta + a sum_l pi_il alpha_l_lower - a sum_l pi_il alpha_l_upper = 0.

An equivalent formulation in the quantity variables (projection of the bids
onto the balanced flow-feasible set) is provided as an independent
cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    Infeasible,
    MarketInfeasible,
    TooFewProsumers,
)
from .network import NetworkModel
from .qp import QuadraticProgram, solve_qp


@dataclass(frozen=True)
class Prosumer:
    """Quadratic-disutility participant.

    ``c`` and ``d`` parameterize the disutility ``J(p) = c p^2 + d p`` of
    reducing its net purchase by ``p``; ``demand_reduction`` is the required
    total reduction D.  The optional baseline triple records the original
    operating point and must satisfy production + purchase = demand.
    """

    c: float
    d: float
    demand_reduction: float
    base_production: float | None = None
    base_purchase: float | None = None
    base_demand: float | None = None

    def __post_init__(self):
        if not self.c > 0.0:
            raise DimensionMismatch(f"prosumer c must be > 0, got {self.c}")
        base = (self.base_production, self.base_purchase, self.base_demand)
        present = [v is not None for v in base]
        if any(present) and not all(present):
            raise DimensionMismatch("baseline fields must be given together")
        if all(present):
            p0, e0, d0 = base
            if abs(p0 + e0 - d0) > 1e-9 * (1.0 + abs(d0)):
                raise DimensionMismatch(
                    f"baseline violates p0 + E0 = D0: {p0} + {e0} != {d0}"
                )

    def disutility(self, p: float) -> float:
        return self.c * p * p + self.d * p


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable market instance: network, one prosumer per bus, sensitivity a."""

    network: NetworkModel
    prosumers: tuple
    a: float
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "prosumers", tuple(self.prosumers))
        if len(self.prosumers) != self.network.bus_count:
            raise DimensionMismatch(
                f"{len(self.prosumers)} prosumers for {self.network.bus_count} buses"
            )
        if len(self.prosumers) < 2:
            raise TooFewProsumers("a market needs at least two prosumers")
        if not self.a > 0.0:
            raise DimensionMismatch(f"market sensitivity a must be > 0, got {self.a}")
        for name, arr in (("c", [p.c for p in self.prosumers]),
                          ("d", [p.d for p in self.prosumers]),
                          ("D", [p.demand_reduction for p in self.prosumers])):
            v = np.asarray(arr, dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    # arrays set in __post_init__; declared for introspection
    c: np.ndarray = field(init=False, repr=False, default=None)
    d: np.ndarray = field(init=False, repr=False, default=None)
    D: np.ndarray = field(init=False, repr=False, default=None)

    @property
    def size(self) -> int:
        return len(self.prosumers)

    def disutility(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return self.c * p * p + self.d * p


@dataclass(frozen=True, eq=False)
class ClearingOutcome:
    """Prices, cleared quantities, duals, and line flows for one bid vector.

    ``alpha_lower[l]`` is the dual of ``flow_l >= -F_l``; ``alpha_upper[l]``
    of ``flow_l <= F_l``.  ``eta`` is the balance dual.
    """

    prices: np.ndarray
    quantities: np.ndarray
    eta: float
    alpha_lower: np.ndarray
    alpha_upper: np.ndarray
    flows: np.ndarray


def _flow_matrix(net: NetworkModel) -> np.ndarray:
    """L x I map from purchases to line flows (transpose of the PTDF)."""
    return net.ptdf.T


def clear_market(scenario: Scenario, bids) -> ClearingOutcome:
    """Clear the market for a bid vector.

    The uncongested solution has a uniform price equal to the mean bid over
    ``a I``; it is returned directly whenever its flows respect all limits
    (this is exact, not an approximation: with no active flow constraint the
    stationarity system forces a uniform price).  Otherwise the price-space
    program is solved with the active-set solver.
    """
    b = np.asarray(bids, dtype=float)
    n = scenario.size
    if b.shape != (n,):
        raise DimensionMismatch(f"expected {n} bids, got shape {b.shape}")
    net = scenario.network
    a = scenario.a
    limits = net.limits
    G = _flow_matrix(net)

    lam_u = float(b.sum()) / (a * n)
    q_u = b - a * lam_u
    flows_u = G @ q_u
    if np.all(np.abs(flows_u) <= limits):
        lam = np.full(n, lam_u)
        return ClearingOutcome(
            prices=lam, quantities=q_u, eta=-2.0 * lam_u / a,
            alpha_lower=np.zeros(net.line_count),
            alpha_upper=np.zeros(net.line_count), flows=flows_u,
        )

    qp = QuadraticProgram(
        hessian=2.0 * np.eye(n),
        linear=np.zeros(n),
        eq_matrix=np.ones((1, n)),
        eq_rhs=np.array([b.sum() / a]),
        ineq_matrix=-a * G,
        ineq_lower=-limits - G @ b,
        ineq_upper=limits - G @ b,
    )
    try:
        sol = solve_qp(qp)
    except Infeasible as exc:
        raise MarketInfeasible(
            "no balanced flow-feasible clearing exists for these bids"
        ) from exc
    lam = sol.x
    q = b - a * lam
    return ClearingOutcome(
        prices=lam, quantities=q, eta=float(sol.eq_duals[0]) / a,
        alpha_lower=sol.ineq_duals_lower, alpha_upper=sol.ineq_duals_upper,
        flows=G @ q,
    )


def clear_market_qform(scenario: Scenario, bids) -> ClearingOutcome:
    """Cross-check route: project the bids onto the balanced feasible set.

    Minimizes ``sum (q_i - b_i)^2`` over balanced flow-feasible quantities and
    maps back to prices via ``lam = (b - q)/a``.  Duals are not populated
    (they live in a different scaling); use :func:`clear_market` for duals.
    """
    b = np.asarray(bids, dtype=float)
    n = scenario.size
    if b.shape != (n,):
        raise DimensionMismatch(f"expected {n} bids, got shape {b.shape}")
    net = scenario.network
    G = _flow_matrix(net)
    qp = QuadraticProgram(
        hessian=2.0 * np.eye(n),
        linear=-2.0 * b,
        eq_matrix=np.ones((1, n)),
        eq_rhs=np.zeros(1),
        ineq_matrix=G,
        ineq_lower=-net.limits,
        ineq_upper=net.limits,
    )
    try:
        sol = solve_qp(qp)
    except Infeasible as exc:
        raise MarketInfeasible(
            "no balanced flow-feasible clearing exists for these bids"
        ) from exc
    q = sol.x
    lam = (b - q) / scenario.a
    return ClearingOutcome(
        prices=lam, quantities=q, eta=float("nan"),
        alpha_lower=np.full(net.line_count, np.nan),
        alpha_upper=np.full(net.line_count, np.nan), flows=G @ q,
    )


def clearing_kkt_residual(scenario: Scenario, bids, outcome: ClearingOutcome) -> float:
    """Worst violation of the clearing stationarity/feasibility system."""
    b = np.asarray(bids, dtype=float)
    net = scenario.network
    a = scenario.a
    lam, q = outcome.prices, outcome.quantities
    G = _flow_matrix(net)
    stat = (2.0 * lam + a * outcome.eta
            + a * (G.T @ outcome.alpha_lower) - a * (G.T @ outcome.alpha_upper))
    parts = [
        float(np.abs(stat).max(initial=0.0)),
        float(np.abs(q - (b - a * lam)).max(initial=0.0)),
        abs(float(q.sum())),
        float(np.max(np.abs(outcome.flows) - net.limits, initial=0.0)),
        float(max(np.max(-outcome.alpha_lower, initial=0.0),
                  np.max(-outcome.alpha_upper, initial=0.0), 0.0)),
    ]
    comp_lo = np.abs(outcome.alpha_lower) * np.abs(outcome.flows + net.limits)
    comp_up = np.abs(outcome.alpha_upper) * np.abs(net.limits - outcome.flows)
    comp = np.concatenate([comp_lo, comp_up])
    comp[np.isnan(comp)] = 0.0  # 0 * inf on unlimited lines
    parts.append(float(np.max(comp, initial=0.0)))
    return max(parts)


def _marginal_term(scenario: Scenario, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Marginal disutility adjusted by the per-prosumer price privilege."""
    n = scenario.size
    return 2.0 * scenario.c * p + scenario.d - q / (scenario.a * (n - 1))


def regulated_price(scenario: Scenario, clearing: ClearingOutcome, p) -> np.ndarray:
    """Cap/floor the cleared prices against the adjusted marginal disutility.

    Buyers (q_i >= 0, including q_i = 0) pay at least the adjusted marginal
    rate; sellers receive at most that rate.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (scenario.size,):
        raise DimensionMismatch(f"expected {scenario.size} productions")
    m = _marginal_term(scenario, p, clearing.quantities)
    lam = clearing.prices
    return np.where(clearing.quantities >= 0.0, np.maximum(lam, m),
                    np.minimum(lam, m))


def payment(scenario: Scenario, bids, p_i: float, i: int) -> float:
    """Regulated payment of prosumer ``i`` under bid vector ``bids``.

    The max of the two candidate products equals (regulated price) x quantity
    for both buyers and sellers.
    """
    out = clear_market(scenario, bids)
    q_i = float(out.quantities[i])
    n = scenario.size
    m_i = 2.0 * scenario.c[i] * p_i + scenario.d[i] - q_i / (scenario.a * (n - 1))
    return max(float(out.prices[i]) * q_i, m_i * q_i)


def prosumer_cost(scenario: Scenario, bids, i: int, regulated: bool = False) -> float:
    """Cost of prosumer ``i`` at bid vector ``bids``.

    Production is pinned by the market constraint ``p_i = D_i - q_i``; the
    cost is disutility plus the (regulated or raw) sharing payment.
    """
    out = clear_market(scenario, bids)
    return prosumer_cost_from_outcome(scenario, out, i, regulated=regulated)


def prosumer_cost_from_outcome(scenario: Scenario, out: ClearingOutcome, i: int,
                               regulated: bool = False) -> float:
    """Same as :func:`prosumer_cost` but reusing an existing clearing."""
    q_i = float(out.quantities[i])
    p_i = float(scenario.D[i]) - q_i
    ju = scenario.prosumers[i].disutility(p_i)
    lam_q = float(out.prices[i]) * q_i
    if not regulated:
        return ju + lam_q
    n = scenario.size
    m_i = 2.0 * scenario.c[i] * p_i + scenario.d[i] - q_i / (scenario.a * (n - 1))
    return ju + max(lam_q, m_i * q_i)
