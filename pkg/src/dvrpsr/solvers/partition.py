"""Restricted set partitioning with a vehicle cap, solved by best-bound
branch-and-bound over the LP relaxation."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, LPInfeasible, solve_lp


class PartitionError(RuntimeError):
    pass


class PartitionInfeasible(PartitionError):
    def __init__(self, message: str, element=None):
        super().__init__(message)
        self.element = element


class PartitionNodeLimit(PartitionError):
    pass


@dataclass
class PartitionProblem:
    """Pick columns covering every universe element exactly once, using at
    most ``max_columns`` columns, optimizing the total column ``value``."""

    values: np.ndarray
    covers: list  # one collection of universe elements per column
    universe: list
    max_columns: int
    sense: str = "min"  # "min" cost or "max" potential

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.covers) != self.values.size:
            raise ValueError("one cover set per column required")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    def matrix(self) -> np.ndarray:
        index = {e: r for r, e in enumerate(self.universe)}
        A = np.zeros((len(self.universe), self.values.size))
        for j, cov in enumerate(self.covers):
            for e in cov:
                if e in index:
                    A[index[e], j] += 1.0
        return A


@dataclass
class PartitionResult:
    selected: list
    objective: float
    lp_bound: float
    nodes: int


def solve_partition(
    problem: PartitionProblem,
    node_limit: int = 100_000,
    tie_penalty: float = 0.0,
    int_tol: float = 1e-6,
) -> PartitionResult:
    """Optimal integer selection.

    ``tie_penalty`` is subtracted per selected column from the objective (in
    the optimization direction) to break exact ties toward fewer columns.
    """
    n = problem.values.size
    if n == 0:
        if problem.universe:
            raise PartitionInfeasible(f"no columns to cover request {problem.universe[0]}", problem.universe[0])
        return PartitionResult([], 0.0, 0.0, 0)
    A = problem.matrix()
    covered = A.sum(axis=1) > 0
    if not covered.all():
        e = problem.universe[int(np.flatnonzero(~covered)[0])]
        raise PartitionInfeasible(f"request {e} is not covered by any column", e)

    # internally always minimize
    cost = problem.values.copy() if problem.sense == "min" else -problem.values
    cost = cost + tie_penalty
    rows = np.vstack([A, np.ones((1, n))])
    rel = ["="] * A.shape[0] + ["<="]
    rhs = np.r_[np.ones(A.shape[0]), float(problem.max_columns)]

    def relax(lo, hi):
        try:
            res = solve_lp(LinearProgram(cost, rows, rel, rhs, lo, hi, "min"))
        except LPInfeasible:
            return None
        return res

    lo0, hi0 = np.zeros(n), np.ones(n)
    root = relax(lo0, hi0)
    if root is None:
        raise PartitionInfeasible("no partition within the column cap exists")
    best_val = np.inf
    best_x = None
    heap = [(root.objective, 0, lo0, hi0, root.x)]
    counter = 1
    nodes = 0
    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        if bound >= best_val - 1e-9:
            break  # best-bound order: nothing left can improve
        nodes += 1
        if nodes > node_limit:
            raise PartitionNodeLimit(f"branch-and-bound exceeded {node_limit} nodes")
        frac = np.abs(x - np.round(x))
        if frac.max() <= int_tol:
            best_val, best_x = bound, np.round(x)
            continue
        j = int(np.argmax(np.minimum(x, 1.0 - x)))  # most fractional, lowest index on ties
        for fix in (1.0, 0.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = fix
            res = relax(clo, chi)
            if res is not None and res.objective < best_val - 1e-9:
                heapq.heappush(heap, (res.objective, counter, clo, chi, res.x))
                counter += 1
    if best_x is None:
        raise PartitionInfeasible("no integer partition within the column cap exists")
    selected = [int(j) for j in np.flatnonzero(best_x > 0.5)]
    obj = float(problem.values[selected].sum())
    root_val = root.objective - tie_penalty * float(root.x.sum())
    return PartitionResult(selected, obj, root_val if problem.sense == "min" else -root_val, nodes)
