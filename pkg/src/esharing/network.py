"""DC network model: incidence data, transfer distribution factors, flow limits.

Buses are numbered 1..bus_count in the public interface (matching scenario
files); arrays returned by this module are 0-indexed in the same order.

Sign convention: ``line_flows(net, q)`` maps net *purchases* q (positive =
buying from the pool) to directed line flows.  It agrees with the angle-based
DC solution for nodal injections equal to ``-q`` (a purchase is a withdrawal),
which ``dc_flow_oracle`` computes independently from the nodal equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DimensionMismatch,
    DisconnectedGraph,
    NonpositiveWeight,
    SingularLaplacian,
    UnbalancedInjection,
)


@dataclass(frozen=True)
class LineSpec:
    """One directed line: endpoints (1-based), weight, and a flow limit.

    ``limit`` may be ``math.inf`` for an unconstrained line.  The direction
    from_bus -> to_bus fixes the sign of the reported flow only; limits apply
    symmetrically in both directions.
    """

    from_bus: int
    to_bus: int
    weight: float = 1.0
    limit: float = float("inf")

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise DimensionMismatch(
                f"line endpoints must differ, got {self.from_bus}->{self.to_bus}"
            )
        if not self.weight > 0.0:
            raise NonpositiveWeight(f"line weight must be > 0, got {self.weight}")
        if self.limit < 0.0:
            raise DimensionMismatch(f"line limit must be >= 0, got {self.limit}")


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable DC network with a precomputed injection-to-flow map.

    Attributes
    ----------
    bus_count : int
    slack : int
        Reference bus, 1-based.  The slack row of ``ptdf`` is zero.
    lines : tuple[LineSpec, ...]
    ptdf : np.ndarray, shape (bus_count, line_count)
        ``ptdf[i, l]`` is the flow on line l per unit purchase at bus i+1.
    limits : np.ndarray, shape (line_count,)
    """

    bus_count: int
    slack: int
    lines: tuple
    ptdf: np.ndarray = field(repr=False)
    limits: np.ndarray = field(repr=False)

    @property
    def line_count(self) -> int:
        return len(self.lines)

    @property
    def finite_limit_mask(self) -> np.ndarray:
        return np.isfinite(self.limits)


def _incidence(bus_count: int, lines) -> np.ndarray:
    """Bus-by-line incidence: +1 at the from-bus, -1 at the to-bus."""
    C = np.zeros((bus_count, len(lines)))
    for l, ln in enumerate(lines):
        C[ln.from_bus - 1, l] = 1.0
        C[ln.to_bus - 1, l] = -1.0
    return C


def _check_connected(bus_count: int, lines) -> None:
    seen = {1}
    frontier = [1]
    adj = {i: [] for i in range(1, bus_count + 1)}
    for ln in lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    while frontier:
        u = frontier.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    if len(seen) != bus_count:
        missing = sorted(set(range(1, bus_count + 1)) - seen)
        raise DisconnectedGraph(f"buses unreachable from bus 1: {missing}")


def build_network(bus_count: int, lines, slack: int | None = None) -> NetworkModel:
    """Assemble a :class:`NetworkModel` and precompute its PTDF matrix.

    Parameters
    ----------
    bus_count : int
        Number of buses (>= 1).
    lines : iterable of LineSpec
        May be empty only when bus_count == 1.
    slack : int, optional
        Reference bus (1-based).  Defaults to the highest-index bus.
    """
    lines = tuple(lines)
    if bus_count < 1:
        raise DimensionMismatch(f"bus_count must be >= 1, got {bus_count}")
    if slack is None:
        slack = bus_count
    if not 1 <= slack <= bus_count:
        raise DimensionMismatch(f"slack bus {slack} outside 1..{bus_count}")
    for ln in lines:
        if not (1 <= ln.from_bus <= bus_count and 1 <= ln.to_bus <= bus_count):
            raise DimensionMismatch(
                f"line {ln.from_bus}->{ln.to_bus} references a bus outside 1..{bus_count}"
            )
    _check_connected(bus_count, lines)

    C = _incidence(bus_count, lines)
    B = np.asarray([ln.weight for ln in lines])
    keep = np.arange(bus_count) != slack - 1
    Cr = C[keep, :]
    lap = (Cr * B) @ Cr.T
    if lap.size:
        try:
            factor = cho_factor(lap)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by checks above
            raise SingularLaplacian(str(exc)) from exc
        # purchases are withdrawals, hence the minus sign
        ptdf_r = -cho_solve(factor, Cr * B)
    else:
        ptdf_r = np.zeros((0, len(lines)))
    ptdf = np.zeros((bus_count, len(lines)))
    ptdf[keep, :] = ptdf_r
    limits = np.asarray([ln.limit for ln in lines], dtype=float)
    ptdf.setflags(write=False)
    limits.setflags(write=False)
    return NetworkModel(bus_count=bus_count, slack=slack, lines=lines,
                        ptdf=ptdf, limits=limits)


def line_flows(net: NetworkModel, purchases: np.ndarray) -> np.ndarray:
    """Directed line flows induced by balanced net purchases.

    ``purchases`` need not be balanced for the map to be evaluated, but only
    balanced vectors correspond to a physical operating point.
    """
    q = np.asarray(purchases, dtype=float)
    if q.shape != (net.bus_count,):
        raise DimensionMismatch(
            f"expected {net.bus_count} purchases, got shape {q.shape}"
        )
    return net.ptdf.T @ q


def dc_flow_oracle(net: NetworkModel, injections: np.ndarray,
                   tol: float = 1e-9) -> np.ndarray:
    """Line flows from the nodal equations, independent of the PTDF matrix.

    Solves the reduced angle system ``L theta = inj`` and reads flows off the
    line equations ``w_l (theta_from - theta_to)``.  Used as a cross-check for
    :func:`line_flows`; the two agree on ``injections = -purchases``.
    """
    inj = np.asarray(injections, dtype=float)
    if inj.shape != (net.bus_count,):
        raise DimensionMismatch(
            f"expected {net.bus_count} injections, got shape {inj.shape}"
        )
    scale = 1.0 + float(np.abs(inj).max(initial=0.0))
    if abs(inj.sum()) > tol * scale:
        raise UnbalancedInjection(f"injections sum to {inj.sum():.3e}, not 0")
    C = _incidence(net.bus_count, net.lines)
    B = np.asarray([ln.weight for ln in net.lines])
    keep = np.arange(net.bus_count) != net.slack - 1
    Cr = C[keep, :]
    lap = (Cr * B) @ Cr.T
    theta = np.zeros(net.bus_count)
    if lap.size:
        theta[keep] = np.linalg.solve(lap, inj[keep])
    return B * (C.T @ theta)


def is_radial(net: NetworkModel) -> bool:
    """True when the connected network is a tree (line_count == bus_count - 1)."""
    return net.line_count == net.bus_count - 1
