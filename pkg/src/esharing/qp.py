"""Dense strictly convex quadratic programming with exact dual recovery.

Solves

    min  0.5 x' H x + g' x
    s.t. A x = b                 (equality rows, duals ``nu``)
         lo <= C x <= up         (two-sided rows, duals ``mu_lo``/``mu_up``)

by a primal active-set method.  The working-set subproblems are solved through
the full KKT system, so multipliers come out exactly consistent with the
stationarity condition

    H x + g + A' nu + C' (mu_up - mu_lo) = 0,      mu_lo, mu_up >= 0.

The method is deterministic: a least-index rule breaks ties both when a
blocking row is added and when a wrong-signed multiplier is dropped, so
identical inputs produce bit-identical outputs.  Problem sizes here are tiny
(tens of variables), so KKT systems are re-solved from scratch each iteration
rather than updated.

A feasible starting point is found with one linear-programming call
(``scipy.optimize.linprog``); everything after that is handled locally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DimensionMismatch,
    Infeasible,
    IterationLimit,
    NotPositiveDefinite,
)

_FEAS_RTOL = 1e-9
_STAT_RTOL = 1e-9


def _as_array(a, shape_hint=None):
    if a is None:
        return np.zeros(shape_hint if shape_hint is not None else (0,))
    return np.array(a, dtype=float)


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """Immutable problem data.  Missing blocks default to empty.

    ``ineq_lower``/``ineq_upper`` entries may be ``-inf``/``+inf`` for
    one-sided rows; a row with equal bounds is treated as a pinned equality.
    """

    hessian: np.ndarray
    linear: np.ndarray
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None
    ineq_matrix: np.ndarray = None
    ineq_lower: np.ndarray = None
    ineq_upper: np.ndarray = None

    def __post_init__(self):
        H = _as_array(self.hessian)
        g = _as_array(self.linear)
        n = g.shape[0] if g.ndim == 1 else -1
        if H.shape != (n, n) or n < 0:
            raise DimensionMismatch(
                f"hessian shape {H.shape} incompatible with linear shape {g.shape}"
            )
        A = _as_array(self.eq_matrix, (0, n))
        b = _as_array(self.eq_rhs, (0,))
        C = _as_array(self.ineq_matrix, (0, n))
        lo = _as_array(self.ineq_lower, (0,))
        up = _as_array(self.ineq_upper, (0,))
        if A.ndim != 2 or A.shape[1] != n or b.shape != (A.shape[0],):
            raise DimensionMismatch("equality block shapes are inconsistent")
        if C.ndim != 2 or C.shape[1] != n or lo.shape != (C.shape[0],) \
                or up.shape != (C.shape[0],):
            raise DimensionMismatch("inequality block shapes are inconsistent")
        scale = 1.0 + (np.abs(H).max() if H.size else 0.0)
        if H.size and np.abs(H - H.T).max() > 1e-12 * scale:
            raise NotPositiveDefinite("hessian is not symmetric")
        if np.any(lo > up):
            raise Infeasible("a row has ineq_lower > ineq_upper")
        for name, arr in (("hessian", H), ("linear", g), ("eq_matrix", A),
                          ("eq_rhs", b), ("ineq_matrix", C),
                          ("ineq_lower", lo), ("ineq_upper", up)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.linear.shape[0]

    @property
    def eq_count(self) -> int:
        return self.eq_matrix.shape[0]

    @property
    def ineq_count(self) -> int:
        return self.ineq_matrix.shape[0]


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Primal-dual solution.

    ``active_set`` lists the inequality rows at a bound at the solution as
    ``(row, side)`` pairs with side ``'lower'`` or ``'upper'``, sorted by row.
    """

    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals_lower: np.ndarray
    ineq_duals_upper: np.ndarray
    active_set: tuple
    iterations: int
    residual: float = field(default=0.0)


def _phase1(qp: QuadraticProgram) -> np.ndarray:
    """Any feasible point, via one LP solve.  Raises Infeasible if none."""
    n = qp.n
    if qp.ineq_count == 0:
        if qp.eq_count == 0:
            return np.zeros(n)
        x, *_ = np.linalg.lstsq(qp.eq_matrix, qp.eq_rhs, rcond=None)
        resid = qp.eq_matrix @ x - qp.eq_rhs
        if np.abs(resid).max(initial=0.0) > _FEAS_RTOL * (
                1.0 + np.abs(qp.eq_rhs).max(initial=0.0)):
            raise Infeasible("equality constraints are inconsistent")
        return x
    rows_ub = []
    rhs_ub = []
    for j in range(qp.ineq_count):
        if np.isfinite(qp.ineq_upper[j]):
            rows_ub.append(qp.ineq_matrix[j])
            rhs_ub.append(qp.ineq_upper[j])
        if np.isfinite(qp.ineq_lower[j]):
            rows_ub.append(-qp.ineq_matrix[j])
            rhs_ub.append(-qp.ineq_lower[j])
    kwargs = {}
    if qp.eq_count:
        kwargs["A_eq"] = qp.eq_matrix
        kwargs["b_eq"] = qp.eq_rhs
    if rows_ub:
        kwargs["A_ub"] = np.asarray(rows_ub)
        kwargs["b_ub"] = np.asarray(rhs_ub)
    res = linprog(c=np.zeros(n), bounds=[(None, None)] * n, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-9},
                  **kwargs)
    if res.status == 2:
        raise Infeasible("constraint set is empty")
    if res.status != 0:
        raise IterationLimit(f"feasibility solve failed with status {res.status}")
    return np.asarray(res.x, dtype=float)


def _eqp_solve(H, g, A_act, b_act):
    """Minimize the quadratic subject to the stacked rows held as equalities."""
    n = H.shape[0]
    m = A_act.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    if m:
        K[:n, n:] = A_act.T
        K[n:, :n] = A_act
    rhs = np.concatenate([-g, b_act])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:]


def solve_qp(qp: QuadraticProgram) -> QpSolution:
    """Solve to stationarity/feasibility residuals at the 1e-9 (scaled) level.

    Raises
    ------
    Infeasible
        If the constraint set is empty.
    NotPositiveDefinite
        If the hessian fails a Cholesky test.
    IterationLimit
        If the active-set loop exceeds ``50 * (n + ineq_count)`` changes.
    """
    n = qp.n
    if n == 0:
        feas_scale = 1.0 + np.abs(qp.eq_rhs).max(initial=0.0)
        if qp.eq_count and np.abs(qp.eq_rhs).max() > _FEAS_RTOL * feas_scale:
            raise Infeasible("zero-variable program with nonzero equality rhs")
        if qp.ineq_count and (np.any(qp.ineq_lower > 0) or np.any(qp.ineq_upper < 0)):
            raise Infeasible("zero-variable program with infeasible rows")
        empty = np.zeros(0)
        return QpSolution(x=empty, eq_duals=np.zeros(qp.eq_count),
                          ineq_duals_lower=np.zeros(qp.ineq_count),
                          ineq_duals_upper=np.zeros(qp.ineq_count),
                          active_set=(), iterations=0, residual=0.0)
    try:
        np.linalg.cholesky(qp.hessian)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("hessian is not positive definite") from exc

    H, g = qp.hessian, qp.linear
    C, lo, up = qp.ineq_matrix, qp.ineq_lower, qp.ineq_upper
    m_in = qp.ineq_count
    # rows with equal bounds are equalities in disguise: pin them permanently
    fixed = [j for j in range(m_in) if lo[j] == up[j]]
    free_rows = [j for j in range(m_in) if lo[j] != up[j]]

    x = _phase1(qp)
    working: list[tuple[int, int]] = []  # (row, side) with side -1=lower, +1=upper
    dual_tol = 1e-10 * (1.0 + np.abs(g).max(initial=0.0))
    max_iter = 50 * (n + m_in) + 10

    nu = np.zeros(qp.eq_count)
    mu_fixed = np.zeros(len(fixed))
    mu_w: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        A_act = np.vstack([qp.eq_matrix,
                           C[fixed] if fixed else np.zeros((0, n)),
                           C[[r for r, _ in working]] if working else np.zeros((0, n))])
        b_act = np.concatenate([
            qp.eq_rhs,
            lo[fixed] if fixed else np.zeros(0),
            np.asarray([up[r] if s > 0 else lo[r] for r, s in working]),
        ])
        x_star, duals = _eqp_solve(H, g, A_act, b_act)
        nu = duals[:qp.eq_count]
        mu_fixed = duals[qp.eq_count:qp.eq_count + len(fixed)]
        mu_w = list(duals[qp.eq_count + len(fixed):])

        d = x_star - x
        if np.abs(d).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(x).max(initial=0.0)):
            # stationary on the working set; least-index drop of any
            # wrong-signed multiplier, else optimal
            drop = None
            for k, (r, s) in enumerate(working):
                if (s > 0 and mu_w[k] < -dual_tol) or (s < 0 and mu_w[k] > dual_tol):
                    if drop is None or (r, s) < (working[drop][0], working[drop][1]):
                        drop = k
            if drop is None:
                x = x_star
                break
            del working[drop]
            continue

        # largest step along d that stays feasible for rows not in the set
        in_set = {r for r, _ in working}
        alpha = 1.0
        blocker = None
        for j in free_rows:
            if j in in_set:
                continue
            cj = C[j]
            cd = float(cj @ d)
            denom_scale = 1e-14 * (1.0 + float(np.abs(cj).sum() * np.abs(d).max()))
            if cd > denom_scale and np.isfinite(up[j]):
                limit = (up[j] - float(cj @ x)) / cd
                side = 1
            elif cd < -denom_scale and np.isfinite(lo[j]):
                limit = (lo[j] - float(cj @ x)) / cd
                side = -1
            else:
                continue
            limit = max(limit, 0.0)
            if limit < alpha:
                alpha = limit
                blocker = (j, side)
        if blocker is None:
            x = x_star
        else:
            x = x + alpha * d
            working.append(blocker)
            working.sort()
    else:
        raise IterationLimit(f"active-set loop exceeded {max_iter} iterations")

    mu_lower = np.zeros(m_in)
    mu_upper = np.zeros(m_in)
    for k, j in enumerate(fixed):
        if mu_fixed[k] >= 0.0:
            mu_upper[j] = mu_fixed[k]
        else:
            mu_lower[j] = -mu_fixed[k]
    for k, (r, s) in enumerate(working):
        if s > 0:
            mu_upper[r] = max(mu_w[k], 0.0)
        else:
            mu_lower[r] = max(-mu_w[k], 0.0)
    active = sorted(
        [(r, "upper" if s > 0 else "lower") for r, s in working]
        + [(j, "upper" if mu_fixed[k] >= 0 else "lower") for k, j in enumerate(fixed)]
    )
    sol = QpSolution(x=x, eq_duals=nu, ineq_duals_lower=mu_lower,
                     ineq_duals_upper=mu_upper, active_set=tuple(active),
                     iterations=iterations, residual=0.0)
    object.__setattr__(sol, "residual", kkt_residual(qp, sol))
    return sol


def kkt_residual(qp: QuadraticProgram, sol: QpSolution) -> float:
    """Worst violation of stationarity, feasibility, sign, or complementarity.

    Returns the unscaled infinity norm over all conditions; a valid solution
    of a well-scaled problem sits at or below ``1e-9 * (1 + data norms)``.
    """
    x = sol.x
    if qp.n == 0:
        return 0.0
    parts = []
    stat = qp.hessian @ x + qp.linear
    if qp.eq_count:
        stat = stat + qp.eq_matrix.T @ sol.eq_duals
        parts.append(np.abs(qp.eq_matrix @ x - qp.eq_rhs).max())
    if qp.ineq_count:
        stat = stat + qp.ineq_matrix.T @ (sol.ineq_duals_upper - sol.ineq_duals_lower)
        cx = qp.ineq_matrix @ x
        viol_up = cx - qp.ineq_upper
        viol_lo = qp.ineq_lower - cx
        parts.append(max(np.max(viol_up[np.isfinite(qp.ineq_upper)], initial=0.0),
                         np.max(viol_lo[np.isfinite(qp.ineq_lower)], initial=0.0),
                         0.0))
        parts.append(max(np.max(-sol.ineq_duals_lower, initial=0.0),
                         np.max(-sol.ineq_duals_upper, initial=0.0), 0.0))
        up_gap = np.where(np.isfinite(qp.ineq_upper),
                          np.abs(qp.ineq_upper - cx), 0.0)
        lo_gap = np.where(np.isfinite(qp.ineq_lower),
                          np.abs(cx - qp.ineq_lower), 0.0)
        comp = np.concatenate([np.abs(sol.ineq_duals_upper) * up_gap,
                               np.abs(sol.ineq_duals_lower) * lo_gap])
        parts.append(np.max(comp, initial=0.0))
    parts.append(np.abs(stat).max(initial=0.0))
    return float(max(parts))


def feasibility_tolerance(qp: QuadraticProgram) -> float:
    """Scaled feasibility tolerance used by the solution contract."""
    rhs_scale = max(np.abs(qp.eq_rhs).max(initial=0.0),
                    np.abs(qp.ineq_lower[np.isfinite(qp.ineq_lower)]).max(initial=0.0)
                    if qp.ineq_count else 0.0,
                    np.abs(qp.ineq_upper[np.isfinite(qp.ineq_upper)]).max(initial=0.0)
                    if qp.ineq_count else 0.0)
    return _FEAS_RTOL * (1.0 + rhs_scale)


def stationarity_tolerance(qp: QuadraticProgram) -> float:
    """Scaled stationarity tolerance used by the solution contract."""
    return _STAT_RTOL * (1.0 + np.abs(qp.linear).max(initial=0.0))
