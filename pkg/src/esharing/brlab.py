"""Best-response laboratory for the unregulated sharing game.

Fixing all bids but one, a prosumer's cost as a function of its own bid is
piecewise quadratic: each congestion pattern of the clearing rule contributes
one affine price segment.  The lab scans that curve on a grid with recursive
refinement, reports every local minimum (so disqualified equilibrium
candidates are visible, not just the best response), verifies equilibrium
candidates by per-prosumer deviation gaps, and classifies the two-bus
closed-form regimes.

Scans exploit the piecewise-affine structure: for each congestion pattern the
pinned-constraint subproblem is solved once as an affine function of the
scanned bid and validated (primal feasibility + dual signs) vectorately over
the whole grid.  A per-point solver fallback covers anything left over.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ScanIntervalEmpty, WrongTopology
from .market import Scenario, clear_market, prosumer_cost_from_outcome
from .network import is_radial


@dataclass(frozen=True)
class ScanConfig:
    """Grid controls for :func:`best_response`.

    ``interval=None`` auto-sizes around the marginal-cost-consistent bid
    range (see ``_auto_interval``).  Refinement shrinks the spacing by
    ``refine_factor`` per round around each local minimum.
    """

    interval: tuple | None = None
    coarse_points: int = 2001
    refine_rounds: int = 3
    refine_factor: int = 10
    distinct_tol: float = 1e-5


@dataclass(frozen=True, eq=False)
class BestResponseScan:
    """Scan result for one prosumer against fixed opponent bids."""

    prosumer: int
    fixed_bids: np.ndarray
    interval: tuple
    samples_b: np.ndarray
    samples_cost: np.ndarray
    local_minima: tuple
    best_bid: float
    best_cost: float
    regulated: bool


@dataclass(frozen=True, eq=False)
class GneCheck:
    """Per-prosumer deviation gaps for an equilibrium candidate."""

    is_gne: bool
    gaps: np.ndarray
    incumbent_costs: np.ndarray
    best_bids: np.ndarray
    tol: float


@dataclass(frozen=True, eq=False)
class GneClassification2Bus:
    """Closed-form equilibrium structure of the symmetric two-bus game.

    ``regime`` is ``unique``, ``multiple-upper``, or ``multiple-lower``.  In
    the multiple regimes ``b2_interval`` spans the equilibrium family and
    ``b_bar``/``lam_bar`` are ``None``; production is common to the family.
    """

    regime: str
    c: float
    demands: tuple
    limit: float
    p_bar: np.ndarray
    b_bar: np.ndarray | None = None
    lam_bar: np.ndarray | None = None
    b2_interval: tuple | None = None

    def at(self, b2: float):
        """Bid/price pair of the family member with second bid ``b2``."""
        if self.regime == "unique":
            return self.b_bar, self.lam_bar
        lo, hi = self.b2_interval
        if not lo - 1e-12 <= b2 <= hi + 1e-12:
            raise ValueError(f"b2={b2} outside the equilibrium interval [{lo}, {hi}]")
        F = self.limit
        if self.regime == "multiple-upper":
            b = np.array([b2 + 2.0 * F, b2])
            lam = np.array([b[0] - F, b2 + F])
        else:
            b = np.array([b2 - 2.0 * F, b2])
            lam = np.array([b[0] + F, b2 - F])
        return b, lam


@dataclass(frozen=True, eq=False)
class BrTrajectory:
    """Sequential best-response sweep record."""

    states: tuple
    termination: str  # fixed_point | cycling | max_iter
    fixed_point: bool
    verification: GneCheck | None


@dataclass(frozen=True, eq=False)
class Example2Region:
    region: str  # M | L | U
    prices: np.ndarray


# ---------------------------------------------------------------------------
# fast clearing along a one-dimensional bid sweep


def _clearing_curve(scenario: Scenario, i: int, b_base: np.ndarray,
                    t: np.ndarray):
    """Price and quantity of prosumer ``i`` as its bid sweeps over ``t``.

    ``b_base`` is the full bid vector with slot ``i`` zeroed.  Returns
    ``(lam_i, q_i)`` arrays aligned with ``t``.
    """
    n = scenario.size
    a = scenario.a
    net = scenario.network
    G = net.ptdf.T
    F = net.limits
    m = t.size
    lam_i = np.empty(m)
    q_i = np.empty(m)
    covered = np.zeros(m, dtype=bool)

    S0 = float(b_base.sum())
    lam_u = (S0 + t) / (a * n)
    flows_base = (G @ b_base)[:, None] + np.outer(G[:, i], t) \
        - a * (G.sum(axis=1))[:, None] * lam_u[None, :]
    ok = np.all(np.abs(flows_base) <= F[:, None], axis=0)
    lam_i[ok] = lam_u[ok]
    q_i[ok] = t[ok] - a * lam_u[ok]
    covered |= ok
    if covered.all():
        return lam_i, q_i

    finite = np.flatnonzero(np.isfinite(F))
    if finite.size and finite.size <= 6:
        scale = 1.0 + float(np.abs(t).max()) + float(np.abs(b_base).max()) \
            + float(np.abs(F[finite]).max(initial=0.0))
        tol = 1e-9 * scale
        e_i = np.zeros(n)
        e_i[i] = 1.0
        for signs in itertools.product((0, -1, 1), repeat=finite.size):
            if not any(signs):
                continue
            pinned = [int(finite[k]) for k, s in enumerate(signs) if s]
            sg = np.array([s for s in signs if s], dtype=float)
            A = np.vstack([np.ones((1, n)), -a * G[pinned, :]])
            p_ct = len(pinned)
            K = np.zeros((n + 1 + p_ct, n + 1 + p_ct))
            K[:n, :n] = 2.0 * np.eye(n)
            K[:n, n:] = A.T
            K[n:, :n] = A
            rhs0 = np.concatenate([np.zeros(n), [S0 / a],
                                   sg * F[pinned] - G[pinned, :] @ b_base])
            rhs1 = np.concatenate([np.zeros(n), [1.0 / a], -G[pinned, i]])
            try:
                x0 = np.linalg.solve(K, rhs0)
                x1 = np.linalg.solve(K, rhs1)
            except np.linalg.LinAlgError:
                continue
            lam0, lam1 = x0[:n], x1[:n]
            z0, z1 = x0[n + 1:], x1[n + 1:]
            # dual-sign validity of the pinned rows over the sweep
            zt = z0[:, None] + np.outer(z1, t)
            valid = np.ones(m, dtype=bool)
            for k in range(p_ct):
                if sg[k] > 0:
                    valid &= zt[k] >= -tol
                else:
                    valid &= zt[k] <= tol
            # primal feasibility of every non-pinned line
            free = [l for l in range(net.line_count)
                    if l not in pinned and np.isfinite(F[l])]
            if free:
                f0 = G[free, :] @ b_base - a * (G[free, :] @ lam0)
                df = G[free, i] - a * (G[free, :] @ lam1)
                ft = f0[:, None] + np.outer(df, t)
                valid &= np.all(np.abs(ft) <= F[free, None] + tol, axis=0)
            new = valid & ~covered
            if np.any(new):
                lam_it = lam0[i] + lam1[i] * t[new]
                lam_i[new] = lam_it
                q_i[new] = t[new] - a * lam_it
                covered |= new
            if covered.all():
                return lam_i, q_i

    # robustness fallback: full clearing per remaining point
    for j in np.flatnonzero(~covered):
        b = b_base.copy()
        b[i] = t[j]
        out = clear_market(scenario, b)
        lam_i[j] = out.prices[i]
        q_i[j] = out.quantities[i]
    return lam_i, q_i


def _cost_curve(scenario: Scenario, i: int, lam_i: np.ndarray, q_i: np.ndarray,
                regulated: bool) -> np.ndarray:
    """Prosumer ``i`` cost along a clearing curve."""
    n = scenario.size
    p = scenario.D[i] - q_i
    disutility = scenario.c[i] * p * p + scenario.d[i] * p
    pay = lam_i * q_i
    if regulated:
        marginal = (2.0 * scenario.c[i] * p + scenario.d[i]
                    - q_i / (scenario.a * (n - 1)))
        pay = np.maximum(pay, marginal * q_i)
    return disutility + pay


def _evaluate(scenario, i, b_base, t, regulated):
    lam_i, q_i = _clearing_curve(scenario, i, b_base, np.asarray(t, dtype=float))
    return _cost_curve(scenario, i, lam_i, q_i, regulated)


def _auto_interval(scenario: Scenario, i: int, b_base: np.ndarray,
                   include=()) -> tuple:
    """Heuristic bid window guaranteed wide enough in practice.

    Anchors at the bids consistent with marginal-cost pricing over the full
    plausible production range (own demand shifted by the system total),
    takes the hull with zero, the opponents' mean bid, and any requested
    points, then widens threefold.
    """
    a = scenario.a
    c_i, d_i, D_i = scenario.c[i], scenario.d[i], scenario.D[i]
    span = float(np.abs(scenario.D).sum()) + 1.0
    p_ends = np.array([D_i - span, D_i + span])
    anchors = D_i - p_ends + a * (2.0 * c_i * p_ends + d_i)
    others = np.delete(b_base, i)
    pts = [float(anchors.min()), float(anchors.max()), 0.0,
           float(others.mean())]
    pts.extend(float(v) for v in include)
    lo, hi = min(pts), max(pts)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    half = max(half, 1.0 + 0.1 * abs(mid))
    return (mid - 3.0 * half, mid + 3.0 * half)


def _local_minima_indices(cost: np.ndarray) -> list:
    """Indices of local minima, plateau runs collapsed to one representative."""
    m = cost.size
    tie = 1e-12 * (1.0 + float(np.abs(cost).max()))
    mins = []
    j = 0
    while j < m:
        k = j
        while k + 1 < m and abs(cost[k + 1] - cost[k]) <= tie:
            k += 1
        left_ok = j == 0 or cost[j - 1] > cost[j] + tie
        right_ok = k == m - 1 or cost[k + 1] > cost[k] + tie
        if left_ok and right_ok:
            mins.append((j + k) // 2)
        j = k + 1
    return mins


def best_response(scenario: Scenario, i: int, b_minus_i,
                  scan_config: ScanConfig | None = None,
                  regulated: bool = False, include=()) -> BestResponseScan:
    """Scan prosumer ``i``'s cost over its own bid, opponents fixed.

    ``b_minus_i`` lists the other prosumers' bids in bus order (length I-1).
    All local minima are reported after refinement; the global one is the
    best response.
    """
    cfg = scan_config or ScanConfig()
    b_minus_i = np.asarray(b_minus_i, dtype=float)
    if b_minus_i.shape != (scenario.size - 1,):
        raise ScanIntervalEmpty(
            f"expected {scenario.size - 1} opponent bids, got {b_minus_i.shape}"
        )
    b_base = np.insert(b_minus_i, i, 0.0)
    interval = cfg.interval or _auto_interval(scenario, i, b_base, include)
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ScanIntervalEmpty(f"scan interval [{lo}, {hi}] is empty")

    t = np.linspace(lo, hi, cfg.coarse_points)
    cost = _evaluate(scenario, i, b_base, t, regulated)
    spacing = (hi - lo) / (cfg.coarse_points - 1)

    minima = []
    for j in _local_minima_indices(cost):
        t_best, c_best = float(t[j]), float(cost[j])
        h = spacing
        for _ in range(cfg.refine_rounds):
            wt = np.linspace(max(t_best - h, lo), min(t_best + h, hi),
                             2 * cfg.refine_factor + 1)
            wc = _evaluate(scenario, i, b_base, wt, regulated)
            j_best = int(np.argmin(wc))
            t_best, c_best = float(wt[j_best]), float(wc[j_best])
            h /= cfg.refine_factor
        minima.append((t_best, c_best))

    # merge refinements that collapsed onto the same point
    minima.sort()
    merged = []
    for t_min, c_min in minima:
        if merged and abs(t_min - merged[-1][0]) <= cfg.distinct_tol:
            if c_min < merged[-1][1]:
                merged[-1] = (t_min, c_min)
        else:
            merged.append((t_min, c_min))
    best_bid, best_cost = min(merged, key=lambda mc: (mc[1], mc[0]))
    return BestResponseScan(
        prosumer=i, fixed_bids=b_minus_i, interval=(lo, hi), samples_b=t,
        samples_cost=cost, local_minima=tuple(merged), best_bid=best_bid,
        best_cost=best_cost, regulated=regulated,
    )


def verify_gne(scenario: Scenario, b, tol: float = 1e-6,
               regulated: bool = False,
               scan_config: ScanConfig | None = None) -> GneCheck:
    """Check an equilibrium candidate by per-prosumer deviation gaps.

    ``gaps[i]`` is the cost saved by prosumer ``i``'s best unilateral
    deviation (clipped at 0 up to scan noise); the candidate passes when
    every gap is at most ``tol``.
    """
    b = np.asarray(b, dtype=float)
    incumbent = clear_market(scenario, b)
    n = scenario.size
    gaps = np.empty(n)
    incumbent_costs = np.empty(n)
    best_bids = np.empty(n)
    for i in range(n):
        incumbent_costs[i] = prosumer_cost_from_outcome(
            scenario, incumbent, i, regulated=regulated)
        scan = best_response(scenario, i, np.delete(b, i),
                             scan_config=scan_config, regulated=regulated,
                             include=(float(b[i]),))
        gaps[i] = incumbent_costs[i] - scan.best_cost
        best_bids[i] = scan.best_bid
    return GneCheck(is_gne=bool(np.all(gaps <= tol)), gaps=gaps,
                    incumbent_costs=incumbent_costs, best_bids=best_bids,
                    tol=tol)


def classify_gne_2bus(c: float, D1: float, D2: float, F: float) -> GneClassification2Bus:
    """Equilibrium regimes of the two-bus game with equal quadratic costs.

    Setting: unit sensitivity, no linear cost term, both prosumers with
    coefficient ``c``, one line of limit ``F``.  The demand gap decides
    between a unique equilibrium and a one-parameter family pinned at a flow
    limit.
    """
    threshold = (2.0 * c + 1.0) * F / c
    gap = D1 - D2
    if gap >= threshold:
        lo, hi = 2.0 * c * D2 + 2.0 * c * F, 2.0 * c * D1 - 2.0 * (c + 1.0) * F
        return GneClassification2Bus(
            regime="multiple-upper", c=c, demands=(D1, D2), limit=F,
            p_bar=np.array([D1 - F, D2 + F]), b2_interval=(lo, hi),
        )
    if gap <= -threshold:
        lo, hi = 2.0 * c * D1 + 2.0 * (c + 1.0) * F, 2.0 * c * D2 - 2.0 * c * F
        return GneClassification2Bus(
            regime="multiple-lower", c=c, demands=(D1, D2), limit=F,
            p_bar=np.array([D1 + F, D2 - F]), b2_interval=(lo, hi),
        )
    s = c * (D1 + D2)
    delta = c / (2.0 * c + 1.0) * gap
    b_bar = np.array([s + delta, s - delta])
    lam_bar = np.array([s, s])
    p_bar = np.array([D1, D2]) + lam_bar - b_bar
    return GneClassification2Bus(regime="unique", c=c, demands=(D1, D2),
                                 limit=F, p_bar=p_bar, b_bar=b_bar,
                                 lam_bar=lam_bar)


def br_iteration(scenario: Scenario, b0, iters: int = 20,
                 fp_tol: float = 1e-5, cycle_tol: float = 1e-5,
                 verify_tol: float = 1e-6, regulated: bool = False,
                 scan_config: ScanConfig | None = None) -> BrTrajectory:
    """Sequential best-response sweeps from ``b0``.

    Terminates on a verified fixed point, on a revisited state (cycling), or
    at the sweep cap; hitting the cap with no fixed point is evidence (not
    proof) that the game has no equilibrium in the visited region.
    """
    b = np.asarray(b0, dtype=float).copy()
    n = scenario.size
    states = [b.copy()]
    termination = "max_iter"
    verification = None
    for _ in range(iters):
        for i in range(n):
            scan = best_response(scenario, i, np.delete(b, i),
                                 scan_config=scan_config, regulated=regulated,
                                 include=(float(b[i]),))
            b[i] = scan.best_bid
        states.append(b.copy())
        delta = float(np.abs(states[-1] - states[-2]).max())
        if delta <= fp_tol:
            verification = verify_gne(scenario, b, tol=verify_tol,
                                      regulated=regulated,
                                      scan_config=scan_config)
            if verification.is_gne:
                termination = "fixed_point"
                break
        revisited = any(
            float(np.abs(b - s).max()) <= cycle_tol for s in states[:-2]
        )
        if revisited:
            termination = "cycling"
            break
    return BrTrajectory(states=tuple(states), termination=termination,
                        fixed_point=termination == "fixed_point",
                        verification=verification)


def example2_region(scenario: Scenario, b) -> Example2Region:
    """Region membership and closed-form prices for the three-bus chain case.

    Requires: three buses, unit sensitivity, radial network whose single
    finite-limit line hangs off bus 1 (bus 1 a leaf).  Regions are named by
    where the swing bid sits relative to the congestion window: ``M`` (no
    congestion, uniform price), ``L``/``U`` (leaf line at its lower/upper
    purchase limit).
    """
    b = np.asarray(b, dtype=float)
    net = scenario.network
    if scenario.size != 3 or b.shape != (3,):
        raise WrongTopology("closed form requires exactly three buses")
    if abs(scenario.a - 1.0) > 1e-12:
        raise WrongTopology("closed form requires unit market sensitivity")
    if not is_radial(net):
        raise WrongTopology("closed form requires a radial network")
    finite = [l for l in range(net.line_count) if np.isfinite(net.limits[l])]
    if len(finite) != 1:
        raise WrongTopology("closed form requires exactly one limited line")
    ln = net.lines[finite[0]]
    if 1 not in (ln.from_bus, ln.to_bus):
        raise WrongTopology("the limited line must be incident to bus 1")
    degree = sum(1 in (l.from_bus, l.to_bus) for l in net.lines)
    if degree != 1:
        raise WrongTopology("bus 1 must be a leaf")
    F = float(net.limits[finite[0]])

    rest = b[1] + b[2]
    if b[0] <= (rest - 3.0 * F) / 2.0:
        lam1 = b[0] + F
        lam_rest = (rest - F) / 2.0
        region = "L"
    elif b[0] >= (rest + 3.0 * F) / 2.0:
        lam1 = b[0] - F
        lam_rest = (rest + F) / 2.0
        region = "U"
    else:
        lam1 = lam_rest = b.sum() / 3.0
        region = "M"
    return Example2Region(region=region,
                          prices=np.array([lam1, lam_rest, lam_rest]))


def write_scan_csv(scan: BestResponseScan, path) -> None:
    """Write the coarse scan curve as two columns: bid, cost."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "cost"])
        for bv, cv in zip(scan.samples_b, scan.samples_cost):
            writer.writerow([repr(float(bv)), repr(float(cv))])
