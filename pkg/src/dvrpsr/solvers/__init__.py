from .lp import (
    EQ,
    GE,
    LE,
    LinearProgram,
    LPError,
    LPInfeasible,
    LPIterationLimit,
    LPResult,
    LPUnbounded,
    solve_lp,
)
from .partition import (
    PartitionError,
    PartitionInfeasible,
    PartitionNodeLimit,
    PartitionProblem,
    PartitionResult,
    solve_partition,
)
from .tsp import HELD_KARP_MAX, TSP_CAP, TSPCapExceeded, TSPResult, path_value, solve_tsp, solve_tsp_matrix
