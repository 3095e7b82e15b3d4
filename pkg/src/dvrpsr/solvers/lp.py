"""Dense bounded-variable primal revised simplex.

Problems are brought to the form ``min c x  s.t.  A x + s = b,  lo <= (x, s) <= hi``
with one logical variable per row whose bounds encode the relation:
``<=`` gives ``s in [0, inf)``, ``>=`` gives ``s in (-inf, 0]`` and ``=`` gives
``s = 0``. Phase 1 starts from the all-logical basis and adds one artificial
column for every row whose logical would sit outside its bounds.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit

LE, EQ, GE = "<=", "=", ">="
_REL_CODES = {LE: 0, "<": 0, EQ: 1, "==": 1, GE: 2, ">": 2}

OPTIMAL, UNBOUNDED, ITER_LIMIT, SINGULAR = 0, 1, 2, 3


class LPError(RuntimeError):
    """Base class for LP failures; ``dump`` renders the instance as text."""

    def __init__(self, message: str, lp: "LinearProgram | None" = None):
        super().__init__(message)
        self.lp = lp

    @property
    def dump(self) -> str:
        return self.lp.dump() if self.lp is not None else ""


class LPInfeasible(LPError):
    pass


class LPUnbounded(LPError):
    pass


class LPIterationLimit(LPError):
    pass


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    relations: list
    b: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.A.shape[0]
        if self.b.size != m or len(self.relations) != m:
            raise ValueError("constraint matrix, relations and rhs disagree in size")
        for r in self.relations:
            if r not in _REL_CODES:
                raise ValueError(f"unknown relation {r!r}")
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("bound vectors must match the number of variables")
        if np.any(self.lo > self.hi):
            raise ValueError("a variable has lo > hi")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    @property
    def shape(self):
        return self.A.shape

    def dump(self) -> str:
        """Plain-text rendering, one inequality per line."""
        out = io.StringIO()
        out.write(f"{self.sense} " + _linear(self.c) + "\n")
        out.write("subject to\n")
        for row, rel, rhs in zip(self.A, self.relations, self.b):
            out.write(f"  {_linear(row)} {rel} {rhs:.17g}\n")
        out.write("bounds\n")
        for j, (l, h) in enumerate(zip(self.lo, self.hi)):
            out.write(f"  {l:.17g} <= x{j} <= {h:.17g}\n")
        return out.getvalue()


def _linear(coefs) -> str:
    terms = [f"{v:+.17g} x{j}" for j, v in enumerate(coefs) if v != 0]
    return " ".join(terms) if terms else "0"


@dataclass
class LPResult:
    objective: float
    x: np.ndarray
    duals: np.ndarray  # one per row, for the problem in its original sense
    reduced_costs: np.ndarray
    iterations: int
    basis: np.ndarray = field(repr=False, default=None)

    def dual_objective(self, lp: LinearProgram) -> float:
        """``b y`` plus the bound terms of nonbasic structurals at finite bounds."""
        val = float(self.duals @ lp.b)
        d = self.reduced_costs
        at = np.where(np.isclose(self.x, lp.lo), lp.lo, np.where(np.isclose(self.x, lp.hi), lp.hi, 0.0))
        val += float(np.sum(np.where(np.isfinite(at), d * at, 0.0)))
        return val


@njit
def _simplex_core(AT, b, cost, lo, hi, basis, is_basic, x, binv, max_iter, tol, refactor_every, bland_after=1000):
    # Bland's rule only after a long run of degenerate pivots: it never cycles
    # but crawls on the highly degenerate partitioning masters
    # AT is the transposed constraint matrix, so columns are contiguous rows
    n, m = AT.shape
    degenerate = 0
    bland = False
    since_refactor = 0
    it = 0
    cb = np.empty(m)
    while it < max_iter:
        for i in range(m):
            cb[i] = cost[basis[i]]
        y = cb @ binv
        d = cost - AT @ y
        enter = -1
        best = 0.0
        direction = 0
        for j in range(n):
            if is_basic[j] or hi[j] - lo[j] <= 0.0:
                continue
            dj = d[j]
            free = (not np.isfinite(lo[j])) and (not np.isfinite(hi[j]))
            dirj = 0
            if dj < -tol and (free or x[j] < hi[j] - tol):
                dirj = 1
            elif dj > tol and (free or x[j] > lo[j] + tol):
                dirj = -1
            if dirj != 0:
                if bland:
                    enter = j
                    direction = dirj
                    break
                if abs(dj) > best:
                    best = abs(dj)
                    enter = j
                    direction = dirj
        if enter < 0:
            return OPTIMAL, it
        col = binv @ AT[enter]
        # basic variables move by -direction * t * col
        step = hi[enter] - lo[enter]
        leave = -1
        leave_to_hi = False
        best_piv = 0.0
        for i in range(m):
            a = direction * col[i]
            k = basis[i]
            if a > tol and np.isfinite(lo[k]):
                t = max((x[k] - lo[k]) / a, 0.0)
                to_hi = False
            elif a < -tol and np.isfinite(hi[k]):
                t = max((hi[k] - x[k]) / (-a), 0.0)
                to_hi = True
            else:
                continue
            if t < step - 1e-12:
                take = True
            elif leave >= 0 and t <= step + 1e-12:
                take = k < basis[leave] if bland else abs(a) > best_piv
            else:
                take = False
            if take:
                step = min(step, t)
                leave = i
                leave_to_hi = to_hi
                best_piv = abs(a)
        if not np.isfinite(step):
            return UNBOUNDED, it
        it += 1
        if step <= 1e-12:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
            bland = False
        for i in range(m):
            x[basis[i]] -= direction * step * col[i]
        x[enter] += direction * step
        if leave < 0:
            continue  # bound flip, basis unchanged
        k = basis[leave]
        x[k] = hi[k] if leave_to_hi else lo[k]
        is_basic[k] = False
        is_basic[enter] = True
        basis[leave] = enter
        piv = col[leave]
        if abs(piv) < 1e-14:
            return SINGULAR, it
        binv[leave, :] /= piv
        for i in range(m):
            if i != leave and col[i] != 0.0:
                binv[i, :] -= col[i] * binv[leave, :]
        since_refactor += 1
        if since_refactor >= refactor_every:
            since_refactor = 0
            _refactor(AT, b, basis, x, binv)
    return ITER_LIMIT, it


@njit
def _refactor(AT, b, basis, x, binv):
    m = basis.size
    B = np.empty((m, m))
    for i in range(m):
        B[:, i] = AT[basis[i]]
    binv[:, :] = np.linalg.inv(B)
    xn = x.copy()
    for i in range(m):
        xn[basis[i]] = 0.0
    xb = binv @ (b - xn @ AT)
    for i in range(m):
        x[basis[i]] = xb[i]


def _nonbasic_start(lo: float, hi: float) -> float:
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


def solve_lp(lp: LinearProgram, max_iter: int = 50_000, tol: float = 1e-9) -> LPResult:
    """Solve ``lp`` to optimality; raises :class:`LPError` subclasses on failure."""
    m, n = lp.A.shape
    sign = 1.0 if lp.sense == "min" else -1.0
    if m == 0:
        return _solve_unconstrained(lp, sign)
    codes = np.array([_REL_CODES[r] for r in lp.relations], dtype=np.int64)
    slack_lo = np.where(codes == 2, -np.inf, 0.0)
    slack_hi = np.where(codes == 0, np.inf, 0.0)

    x = np.array([_nonbasic_start(l, h) for l, h in zip(lp.lo, lp.hi)], dtype=float)
    resid = lp.b - lp.A @ x if m else np.zeros(0)
    # logicals that can absorb their residual become basic; others need an artificial
    ok = (resid >= slack_lo - tol) & (resid <= slack_hi + tol)
    bad = np.flatnonzero(~ok)
    n_art = bad.size
    N = n + m + n_art
    A = np.zeros((m, N))
    A[:, :n] = lp.A
    A[:, n:n + m] = np.eye(m)
    lo = np.concatenate([lp.lo, slack_lo, np.zeros(n_art)])
    hi = np.concatenate([lp.hi, slack_hi, np.full(n_art, np.inf)])
    xs = np.where(ok, resid, np.clip(resid, slack_lo, slack_hi))
    xa = np.zeros(n_art)
    basis = np.arange(n, n + m, dtype=np.int64)
    for a, i in enumerate(bad):
        over = resid[i] - xs[i]
        A[i, n + m + a] = 1.0 if over > 0 else -1.0
        xa[a] = abs(over)
        basis[i] = n + m + a
    x_all = np.concatenate([x, xs, xa])
    is_basic = np.zeros(N, dtype=np.bool_)
    is_basic[basis] = True
    binv = np.eye(m)
    for a, i in enumerate(bad):
        binv[i, i] = A[i, n + m + a]  # inverse of +-1 is itself
    AT = np.ascontiguousarray(A.T)
    b = np.ascontiguousarray(lp.b, dtype=float)
    refactor = 100
    total = 0

    if n_art:
        cost1 = np.zeros(N)
        cost1[n + m:] = 1.0
        status, its = _simplex_core(AT, b, cost1, lo, hi, basis, is_basic, x_all, binv, max_iter, tol, refactor)
        total += its
        if status == ITER_LIMIT:
            raise LPIterationLimit(f"phase 1 hit the iteration limit {max_iter}", lp)
        if status == SINGULAR:
            raise LPError("singular basis in phase 1", lp)
        infeas = float(x_all[n + m:].sum())
        scale = 1.0 + float(np.abs(lp.b).max(initial=0.0))
        if infeas > 1e-7 * scale:
            raise LPInfeasible(f"problem is infeasible (phase 1 residual {infeas:.3g})", lp)
        # artificials are frozen at zero; any still basic stay there harmlessly
        hi[n + m:] = 0.0
        x_all[n + m:] = np.where(is_basic[n + m:], x_all[n + m:], 0.0)

    cost2 = np.zeros(N)
    cost2[:n] = sign * lp.c
    status, its = _simplex_core(AT, b, cost2, lo, hi, basis, is_basic, x_all, binv, max_iter - total, tol, refactor)
    total += its
    if status == UNBOUNDED:
        raise LPUnbounded("problem is unbounded", lp)
    if status == ITER_LIMIT:
        raise LPIterationLimit(f"phase 2 hit the iteration limit {max_iter}", lp)
    if status == SINGULAR:
        raise LPError("singular basis in phase 2", lp)

    if m:
        _refactor(AT, b, basis, x_all, binv)  # clean up with a fresh factorization
    y = cost2[basis] @ binv
    d = cost2 - AT @ y
    xs = x_all[:n].copy()
    obj = float(lp.c @ xs)
    return LPResult(
        objective=obj,
        x=xs,
        duals=sign * y,
        reduced_costs=sign * d[:n],
        iterations=total,
        basis=basis.copy(),
    )


def _solve_unconstrained(lp: LinearProgram, sign: float) -> LPResult:
    c = sign * lp.c
    x = np.where(c > 0, lp.lo, np.where(c < 0, lp.hi, np.array([_nonbasic_start(l, h) for l, h in zip(lp.lo, lp.hi)])))
    if not np.all(np.isfinite(x)):
        raise LPUnbounded("problem is unbounded", lp)
    return LPResult(float(lp.c @ x), x, np.zeros(0), lp.c.copy(), 0, np.zeros(0, dtype=np.int64))
