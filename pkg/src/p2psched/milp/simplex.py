"""Bounded-variable revised primal simplex.

Rows are turned into equalities with one logical variable each,
``A x - s = 0`` with ``row_lo <= s <= row_hi``, so the all-logical basis is
always available as a starting point. Phase 1 minimizes the sum of bound
violations of the basic variables starting from any basis, which is also
how warm starts after bound changes are repaired.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import INFEASIBLE, OPTIMAL, TIME_LIMIT, UNBOUNDED

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3

PIVOT_TOL = 1e-9
PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
REFACTOR_EVERY = 64
DEGENERATE_STREAK = 40


class SimplexError(ArithmeticError):
    """The basis became numerically unusable."""


@dataclass
class Basis:
    head: np.ndarray   # variable index basic in each row position
    state: np.ndarray  # per variable (structural then logical) status code


@dataclass
class LPResult:
    status: str
    x: np.ndarray
    objective: float
    basis: Basis | None
    iterations: int
    # loss in objective per unit move of each variable off its bound (optimal only)
    reduced: np.ndarray | None = None


class _Factor:
    """Sparse LU of the basis matrix plus a product-form eta file."""

    def __init__(self, B: sp.csc_matrix):
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SimplexError(f"singular basis: {exc}") from None
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        w = self.lu.solve(a)
        for p, alpha in self.etas:
            wp = w[p] / alpha[p]
            if wp != 0.0:
                w -= wp * alpha
            w[p] = wp
        return w

    def btran(self, c: np.ndarray) -> np.ndarray:
        z = c.copy()
        for p, alpha in reversed(self.etas):
            z[p] -= (alpha @ z - z[p]) / alpha[p]
        return self.lu.solve(z, trans="T")

    def update(self, p: int, alpha: np.ndarray) -> None:
        self.etas.append((p, alpha))


class _Simplex:
    def __init__(self, c, A, row_lo, row_hi, lb, ub, deadline):
        m, n = A.shape
        self.m, self.n = m, n
        self.A = A.tocsr()
        self.At = self.A.T.tocsr()
        self.K = sp.hstack([self.A.tocsc(), -sp.identity(m, format="csc")], format="csc")
        self.cost = np.concatenate([-np.asarray(c, dtype=float), np.zeros(m)])
        self.L = np.concatenate([lb, row_lo]).astype(float)
        self.U = np.concatenate([ub, row_hi]).astype(float)
        self.deadline = deadline
        self.iterations = 0

    # basis bookkeeping ------------------------------------------------

    def _install(self, basis: Basis | None) -> None:
        m, n = self.m, self.n
        N = n + m
        state = np.empty(N, dtype=np.int8)
        if basis is None:
            head = np.arange(n, n + m)
            state[:n] = AT_LOWER
            state[n:] = BASIC
        else:
            head = basis.head.copy()
            state = basis.state.copy()
        # Nonbasic values come from the current bounds.
        nb = state != BASIC
        lo_ok = np.isfinite(self.L)
        up_ok = np.isfinite(self.U)
        want_up = nb & (state == AT_UPPER)
        state[nb & ~want_up] = AT_LOWER
        state[want_up & ~up_ok] = AT_LOWER
        state[nb & (state == AT_LOWER) & ~lo_ok & up_ok] = AT_UPPER
        state[nb & ~lo_ok & ~up_ok] = AT_ZERO
        self.head = head
        self.state = state
        self.x = np.zeros(N)
        lower = state == AT_LOWER
        upper = state == AT_UPPER
        self.x[lower] = self.L[lower]
        self.x[upper] = self.U[upper]
        self._refactor()

    def _refactor(self) -> None:
        B = self.K[:, self.head]
        self.factor = _Factor(sp.csc_matrix(B))
        xn = self.x.copy()
        xn[self.head] = 0.0
        rhs = -(self.A @ xn[: self.n] - xn[self.n:])
        self.x[self.head] = self.factor.lu.solve(rhs)

    def _column(self, q: int) -> np.ndarray:
        col = np.zeros(self.m)
        start, end = self.K.indptr[q], self.K.indptr[q + 1]
        col[self.K.indices[start:end]] = self.K.data[start:end]
        return col

    # main loop --------------------------------------------------------

    def run(self, basis: Basis | None) -> str:
        self._install(basis)
        streak = 0
        bland = False
        max_iter = 50 * (self.n + self.m) + 1000
        verified = False
        while True:
            if self.iterations >= max_iter:
                raise SimplexError("iteration limit reached; the problem is likely cycling")
            if self.deadline is not None and self.iterations % 20 == 0 and time.monotonic() > self.deadline:
                return TIME_LIMIT
            if len(self.factor.etas) >= REFACTOR_EVERY:
                self._refactor()

            xB = self.x[self.head]
            LB, UB = self.L[self.head], self.U[self.head]
            below = xB < LB - PRIMAL_TOL
            above = xB > UB + PRIMAL_TOL
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = above.astype(float) - below.astype(float)
                cost_nb = None
            else:
                cB = self.cost[self.head]
                cost_nb = self.cost

            y = self.factor.btran(cB)
            d = np.concatenate([-(self.At @ y), y])
            if cost_nb is not None:
                d += cost_nb
            q, direction = self._price(d, bland)
            if q < 0:
                if not verified and self.factor.etas:
                    # Confirm termination on a fresh factorization.
                    self._refactor()
                    verified = True
                    continue
                if phase1:
                    return INFEASIBLE
                self.d = d
                return OPTIMAL
            verified = False

            alpha = self.factor.ftran(self._column(q))
            theta, p, target = self._ratio(alpha, direction, q, bland)
            if p is None and math.isinf(theta):
                if phase1:
                    raise SimplexError("phase 1 direction without a blocking variable")
                return UNBOUNDED

            self.iterations += 1
            if theta <= 1e-12:
                streak += 1
                if streak > DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0
                bland = False

            step = direction * theta
            if step != 0.0:
                self.x[self.head] -= alpha * step
                self.x[q] += step
            if p is None:
                # Entering variable moved to its opposite bound.
                if direction > 0:
                    self.state[q] = AT_UPPER
                    self.x[q] = self.U[q]
                else:
                    self.state[q] = AT_LOWER
                    self.x[q] = self.L[q]
                continue
            if bland and abs(alpha[p]) < PIVOT_TOL:
                raise SimplexError(f"pivot magnitude {abs(alpha[p]):.3e} below tolerance")
            leaving = self.head[p]
            self.x[leaving] = target
            self.state[leaving] = AT_UPPER if target == self.U[leaving] else AT_LOWER
            self.state[q] = BASIC
            self.head[p] = q
            self.factor.update(p, alpha)

    def _price(self, d: np.ndarray, bland: bool) -> tuple[int, int]:
        st = self.state
        movable = self.L < self.U
        up = ((st == AT_LOWER) | (st == AT_ZERO)) & movable & (d < -DUAL_TOL)
        down = ((st == AT_UPPER) | (st == AT_ZERO)) & movable & (d > DUAL_TOL)
        score = np.where(up | down, np.abs(d), 0.0)
        if not score.any():
            return -1, 0
        if bland:
            q = int(np.flatnonzero(score)[0])
        else:
            q = int(np.argmax(score))
        return q, (1 if up[q] else -1)

    def _ratio(self, alpha, direction, q, bland):
        """Harris two-pass ratio test; returns (step, leaving row or None, leaving value)."""
        head = self.head
        xB = self.x[head]
        LB, UB = self.L[head], self.U[head]
        rate = -direction * alpha
        tol_piv = 1e-11 if bland else PIVOT_TOL
        dec = rate < -tol_piv
        inc = rate > tol_piv

        target = np.full(self.m, np.nan)
        # decreasing basics: stop at the nearest bound lying below the current value
        above = xB > UB + PRIMAL_TOL
        feas_lo = xB >= LB - PRIMAL_TOL
        sel = dec & above
        target[sel] = UB[sel]
        sel = dec & ~above & feas_lo & np.isfinite(LB)
        target[sel] = LB[sel]
        # increasing basics
        below = xB < LB - PRIMAL_TOL
        feas_hi = xB <= UB + PRIMAL_TOL
        sel = inc & below
        target[sel] = LB[sel]
        sel = inc & ~below & feas_hi & np.isfinite(UB)
        target[sel] = UB[sel]

        cand = np.flatnonzero(~np.isnan(target))
        flip = self.U[q] - self.L[q]
        if cand.size == 0:
            if math.isfinite(flip):
                return flip, None, None
            return math.inf, None, None

        dist = target[cand] - xB[cand]
        r = rate[cand]
        exact = np.maximum(dist / r, 0.0)
        if bland:
            theta_min = exact.min()
            ties = cand[exact <= theta_min + 1e-12]
            if math.isfinite(flip) and flip <= theta_min:
                return flip, None, None
            p = int(ties[np.argmin(head[ties])])
            return float(max(theta_min, 0.0)), p, target[p]
        relaxed = np.maximum((dist + np.sign(r) * PRIMAL_TOL) / r, 0.0)
        theta_max = relaxed.min()
        if math.isfinite(flip) and flip <= theta_max:
            return flip, None, None
        ok = exact <= theta_max
        pool = cand[ok]
        mags = np.abs(alpha[pool])
        best = mags.max()
        ties = pool[mags >= best * (1 - 1e-12)]
        p = int(ties[np.argmin(head[ties])])
        k = int(np.flatnonzero(cand == p)[0])
        return float(exact[k]), p, target[p]


def solve_arrays(c, A, row_lo, row_hi, lb, ub, basis: Basis | None = None,
                 deadline: float | None = None) -> LPResult:
    """Maximize ``c @ x`` subject to ``row_lo <= A x <= row_hi`` and ``lb <= x <= ub``."""
    A = sp.csr_matrix(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub) or np.any(np.asarray(row_lo) > np.asarray(row_hi)):
        return LPResult(INFEASIBLE, np.zeros(n), math.nan, None, 0)
    if m == 0:
        return _solve_boxed(c, lb, ub)
    engine = _Simplex(c, A, np.asarray(row_lo, float), np.asarray(row_hi, float), lb, ub, deadline)
    status = engine.run(basis)
    x = engine.x[:n].copy()
    snap = Basis(engine.head.copy(), engine.state.copy())
    if status == OPTIMAL:
        # Snap values sitting within tolerance of a bound onto it.
        near_lo = np.isfinite(lb) & (np.abs(x - lb) <= PRIMAL_TOL)
        near_hi = np.isfinite(ub) & (np.abs(x - ub) <= PRIMAL_TOL)
        x[near_lo] = lb[near_lo]
        x[near_hi] = ub[near_hi]
        return LPResult(status, x, float(c @ x), snap, engine.iterations, engine.d[:n].copy())
    return LPResult(status, x, math.nan, snap, engine.iterations)


def _solve_boxed(c, lb, ub) -> LPResult:
    x = np.where(c > 0, ub, np.where(c < 0, lb, np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))))
    if not np.all(np.isfinite(x)):
        return LPResult(UNBOUNDED, np.zeros_like(c), math.nan, None, 0)
    return LPResult(OPTIMAL, x, float(c @ x), None, 0, -np.asarray(c, dtype=float))
