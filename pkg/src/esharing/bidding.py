"""Iterative bidding protocol: proximal platform price update + closed-form
prosumer response.

Each round, the platform re-clears the standing bids through a proximal
variant of the clearing rule (squared-norm objective plus a damping term
anchored at the previous prices), and every prosumer simultaneously best
responds with the closed-form production/bid update.  The loop stops when the
bid vector moves less than ``epsilon`` in the infinity norm.

Convergence is guaranteed when the market sensitivity satisfies
``a >= (I-2)/(2(I-1)) * max_i (1/c_i)``; below that threshold the run only
emits a warning, since the condition is sufficient, not necessary.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterExceeded, WeakSensitivityWarning
from .market import Scenario
from .qp import QuadraticProgram, solve_qp
from .equilibrium import EquilibriumResult


@dataclass(frozen=True)
class BiddingConfig:
    """Loop controls.  ``epsilon=None`` selects 1e-6 * (1 + max |D_i|).

    ``init_bids``/``init_prices`` override the all-zero starting point (used
    e.g. to confirm the equilibrium is a fixed point).
    """

    epsilon: float | None = None
    max_iter: int = 500
    record_trace: bool = True
    init_bids: object = None
    init_prices: object = None

    def resolved_epsilon(self, scenario: Scenario) -> float:
        if self.epsilon is not None:
            if not self.epsilon > 0.0:
                raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
            return self.epsilon
        return 1e-6 * (1.0 + float(np.abs(scenario.D).max()))


@dataclass(eq=False)
class BiddingTrace:
    """Recorded iterates.  Row k holds the state entering iteration k+1.

    The initial row stores the starting bids/prices with production read off
    the bid identity ``p = D + a*lam - b`` (for the all-zero start this is
    the self-sufficient plan).  ``delta_b`` entries are the stopping-norm
    values; the initial row carries ``nan``.
    """

    prices: list = field(default_factory=list)
    bids: list = field(default_factory=list)
    production: list = field(default_factory=list)
    delta_b: list = field(default_factory=list)
    termination: str = "running"

    def __len__(self) -> int:
        return len(self.bids)

    def distances(self, eqm: EquilibriumResult) -> np.ndarray:
        """Euclidean distance of each iterate (p, b) to the equilibrium."""
        out = np.empty(len(self))
        for k in range(len(self)):
            dp = self.production[k] - eqm.p_bar
            db = self.bids[k] - eqm.b_bar
            out[k] = np.sqrt(float(dp @ dp) + float(db @ db))
        return out


@dataclass(frozen=True, eq=False)
class BiddingResult:
    production: np.ndarray
    bids: np.ndarray
    prices: np.ndarray
    iterations: int
    final_delta: float
    trace: BiddingTrace


@dataclass(frozen=True, eq=False)
class FejerReport:
    """Monotonicity report for the squared distances along a trace."""

    monotone: bool
    max_violation: float
    distances: np.ndarray


def platform_update(scenario: Scenario, prices_k, bids_k) -> np.ndarray:
    """Proximal re-clearing of the standing bids.

    Minimizes ``sum lam_i^2 + sum (lam_i - lam_i^k)^2`` over prices whose
    induced demands at ``bids_k`` balance and respect the flow limits.  The
    uncongested stationary point ``lam_i = lam_i^k / 2 - a eta / 4`` is used
    directly when its flows are feasible.
    """
    lam_k = np.asarray(prices_k, dtype=float)
    b = np.asarray(bids_k, dtype=float)
    n = scenario.size
    a = scenario.a
    net = scenario.network
    G = net.ptdf.T

    # uncongested candidate: stationarity 4 lam - 2 lam_k + a*eta = 0 plus balance
    shift = (float(lam_k.sum()) / 2.0 - float(b.sum()) / a) / n
    lam = lam_k / 2.0 - shift
    q = b - a * lam
    if np.all(np.abs(G @ q) <= net.limits):
        return lam

    qp = QuadraticProgram(
        hessian=4.0 * np.eye(n),
        linear=-2.0 * lam_k,
        eq_matrix=np.ones((1, n)),
        eq_rhs=np.array([b.sum() / a]),
        ineq_matrix=-a * G,
        ineq_lower=-net.limits - G @ b,
        ineq_upper=net.limits - G @ b,
    )
    return solve_qp(qp).x


def prosumer_update(scenario: Scenario, prices_next):
    """Closed-form simultaneous response of all prosumers.

    Returns ``(production, bids)``.
    """
    lam = np.asarray(prices_next, dtype=float)
    n = scenario.size
    s = scenario.a * (n - 1)
    p = (s * lam - s * scenario.d + scenario.D) / (2.0 * s * scenario.c + 1.0)
    b = scenario.D - p + scenario.a * lam
    return p, b


def a_min(scenario: Scenario) -> float:
    """Sensitivity threshold sufficient for convergence of the protocol."""
    n = scenario.size
    return (n - 2) / (2.0 * (n - 1)) * float(np.max(1.0 / scenario.c))


def run_bidding(scenario: Scenario, config: BiddingConfig | None = None) -> BiddingResult:
    """Run the protocol from zero bids/prices until the bid vector settles.

    Raises :class:`MaxIterExceeded` (with the trace and last residual
    attached) if the cap is hit first.
    """
    config = config or BiddingConfig()
    eps = config.resolved_epsilon(scenario)
    threshold = a_min(scenario)
    if scenario.a < threshold:
        warnings.warn(
            f"market sensitivity a={scenario.a} below the convergence "
            f"threshold {threshold:.6g}; the protocol may not settle",
            WeakSensitivityWarning, stacklevel=2,
        )
    n = scenario.size
    lam = (np.zeros(n) if config.init_prices is None
           else np.asarray(config.init_prices, dtype=float))
    b = (np.zeros(n) if config.init_bids is None
         else np.asarray(config.init_bids, dtype=float))
    p = scenario.D + scenario.a * lam - b

    trace = BiddingTrace()
    if config.record_trace:
        trace.prices.append(lam.copy())
        trace.bids.append(b.copy())
        trace.production.append(p.copy())
        trace.delta_b.append(float("nan"))

    for k in range(1, config.max_iter + 1):
        lam_next = platform_update(scenario, lam, b)
        p_next, b_next = prosumer_update(scenario, lam_next)
        delta = float(np.abs(b_next - b).max())
        if config.record_trace:
            trace.prices.append(lam_next)
            trace.bids.append(b_next)
            trace.production.append(p_next)
            trace.delta_b.append(delta)
        lam, b, p = lam_next, b_next, p_next
        if delta <= eps:
            trace.termination = "converged"
            return BiddingResult(production=p, bids=b, prices=lam,
                                 iterations=k, final_delta=delta, trace=trace)
    trace.termination = "max_iter"
    raise MaxIterExceeded(
        f"bidding did not settle within {config.max_iter} iterations "
        f"(last delta {delta:.3e} > epsilon {eps:.3e})",
        trace=trace, residual=delta,
    )


def fejer_check(trace: BiddingTrace, eqm: EquilibriumResult,
                rtol: float = 1e-10) -> FejerReport:
    """Check that squared distances to the equilibrium never increase.

    A step from d_k to d_{k+1} counts as a violation when
    ``d_{k+1}^2 > d_k^2 + rtol * (1 + d_k^2)``.
    """
    dist = trace.distances(eqm)
    sq = dist * dist
    if len(sq) < 2:
        return FejerReport(monotone=True, max_violation=0.0, distances=dist)
    excess = sq[1:] - sq[:-1] - rtol * (1.0 + sq[:-1])
    worst = float(excess.max())
    return FejerReport(monotone=bool(worst <= 0.0),
                       max_violation=max(worst, 0.0), distances=dist)


def write_trace_csv(trace: BiddingTrace, path, eqm: EquilibriumResult | None = None):
    """Write the trace in long form: one row per (iteration, prosumer).

    Columns: iter, i, lambda, b, p, delta_b_norm, dist_to_eqm (blank when no
    equilibrium was supplied).  Iterations and prosumers are 1-based.
    """
    dist = trace.distances(eqm) if eqm is not None else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "i", "lambda", "b", "p",
                         "delta_b_norm", "dist_to_eqm"])
        for k in range(len(trace)):
            delta = trace.delta_b[k]
            for i in range(len(trace.bids[k])):
                writer.writerow([
                    k + 1, i + 1,
                    repr(float(trace.prices[k][i])),
                    repr(float(trace.bids[k][i])),
                    repr(float(trace.production[k][i])),
                    "" if np.isnan(delta) else repr(delta),
                    "" if dist is None else repr(float(dist[k])),
                ])
