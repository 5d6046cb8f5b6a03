import time

import numpy as np
import structlog

from ctqubo.models.errors import InvalidArgument, TooLarge
from ctqubo.qubo.model import Assignment, QuboModel, energy
from ctqubo.solver.kernels import enumerate_minima
from ctqubo.solver.result import SolveResult, one_hot_flag

logger = structlog.get_logger()

DEFAULT_CAP = 24
# state keys are int64 in the enumeration kernel
MAX_CAP = 62
MAX_MINIMIZERS = 64

def _tie_tolerance(model: QuboModel) -> float:
    scale = float(np.abs(model.linear).sum() + np.abs(model.quadratic.data).sum())
    return 1e-9 * max(1.0, scale)

def _bits_from_key(key: int, n: int) -> np.ndarray:
    return np.array([(key >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)

def brute_force(model: QuboModel, cap: int = DEFAULT_CAP) -> SolveResult:
    """
    Exact minimum by enumerating every assignment.

    All minimizers (up to 64) are returned in ascending lexicographic order of
    their bit tuples; `metadata["minimizers_truncated"]` flags overflow.
    """
    n = model.num_vars
    if not 0 <= cap <= MAX_CAP:
        raise InvalidArgument(f"cap must be in [0, {MAX_CAP}], got {cap}")
    if n > cap:
        raise TooLarge(f"brute force over {n} variables exceeds the cap of {cap}")

    start = time.time()
    adjacency = model.adjacency
    tol = _tie_tolerance(model)

    _, keys, _, stored, overflow = enumerate_minima(
        model.linear,
        adjacency.indptr,
        adjacency.indices,
        adjacency.data,
        MAX_MINIMIZERS,
        tol,
    )

    candidates = []
    for key in sorted(int(k) for k in keys[:stored]):
        x = Assignment(_bits_from_key(key, n))
        candidates.append((x, energy(model, x)))

    best_energy = min(e for _, e in candidates)
    minimizers = [x for x, e in candidates if e <= best_energy + tol]
    best = minimizers[0]
    best_exact = energy(model, best)

    duration_ms = int((time.time() - start) * 1000)
    logger.info(
        "brute_force_completed",
        num_vars=n,
        best_energy=best_energy,
        minimizers=len(minimizers),
        truncated=bool(overflow),
        duration_ms=duration_ms,
    )

    return SolveResult(
        best_assignment=best,
        best_energy=best_exact,
        samples=[(x, e) for x, e in candidates if e <= best_energy + tol],
        trace=np.array([best_exact]),
        one_hot_valid=one_hot_flag(best, model.encoding),
        minimizers=minimizers,
        metadata={
            "solver": "brute_force",
            "num_vars": n,
            "minimizers_truncated": bool(overflow),
            "duration_ms": duration_ms,
        },
    )
