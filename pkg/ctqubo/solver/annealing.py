import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import structlog

from ctqubo.core.phantoms import make_rng
from ctqubo.models.ct_models import AnnealSchedule
from ctqubo.models.errors import InvalidArgument
from ctqubo.qubo.model import Assignment, QuboModel, energy
from ctqubo.solver.kernels import anneal_chunk, init_field
from ctqubo.solver.result import SolveResult, one_hot_flag

logger = structlog.get_logger()

# sweeps per block of pre-drawn uniforms
SWEEP_CHUNK = 256

FINAL_TEMPERATURE_RATIO = 1e-4

def delta_energy(model: QuboModel, x: Assignment, i: int) -> float:
    """energy(flip_i(x)) - energy(x) in O(degree(i))."""
    if not 0 <= i < model.num_vars:
        raise IndexError(f"variable {i} out of range for {model.num_vars} variables")
    adjacency = model.adjacency
    start, stop = adjacency.indptr[i], adjacency.indptr[i + 1]
    coupled = float(adjacency.data[start:stop] @ x.bits[adjacency.indices[start:stop]])
    return (1.0 - 2.0 * float(x.bits[i])) * (float(model.linear[i]) + coupled)

def temperatures(t_initial: float, t_final: float, sweeps: int) -> np.ndarray:
    """Geometric cooling t_k = t_initial * (t_final / t_initial) ** (k / (sweeps - 1))."""
    if sweeps == 1:
        return np.array([t_initial])
    k = np.arange(sweeps, dtype=np.float64)
    return t_initial * (t_final / t_initial) ** (k / (sweeps - 1))

def resolve_temperatures(model: QuboModel, schedule: AnnealSchedule):
    t_initial = schedule.t_initial
    if t_initial is None:
        t_initial = model.max_abs_delta() or 1.0
    t_final = schedule.t_final
    if t_final is None:
        t_final = t_initial * FINAL_TEMPERATURE_RATIO
    if t_final > t_initial:
        raise InvalidArgument(f"t_final {t_final} exceeds t_initial {t_initial}")
    return t_initial, t_final

@dataclass
class _RestartOutcome:
    restart: int
    seed: int
    assignment: Assignment
    energy: float
    trace: np.ndarray
    max_observed_delta: float

def _run_restart(model: QuboModel, betas: np.ndarray, restart: int, seed: int) -> _RestartOutcome:
    n = model.num_vars
    adjacency = model.adjacency
    rng = make_rng(seed)

    x = rng.integers(0, 2, size=n).astype(np.int8)
    field = init_field(model.linear, adjacency.indptr, adjacency.indices, adjacency.data, x)
    start_energy = energy(model, Assignment(x))
    best_x = x.copy()
    state = np.array([start_energy, start_energy, 0.0])
    trace = np.empty(betas.size)

    for chunk_start in range(0, betas.size, SWEEP_CHUNK):
        chunk_stop = min(chunk_start + SWEEP_CHUNK, betas.size)
        uniforms = rng.random((chunk_stop - chunk_start, n))
        anneal_chunk(
            adjacency.indptr,
            adjacency.indices,
            adjacency.data,
            x,
            field,
            best_x,
            state,
            betas[chunk_start:chunk_stop],
            uniforms,
            trace[chunk_start:chunk_stop],
        )

    best = Assignment(best_x)
    exact = energy(model, best)
    # re-anchor the incrementally tracked energies on the exact value of the best state
    trace += exact - state[1]

    logger.debug("anneal_restart_completed", restart=restart, seed=seed, energy=exact)
    return _RestartOutcome(
        restart=restart,
        seed=seed,
        assignment=best,
        energy=exact,
        trace=trace,
        max_observed_delta=float(state[2]),
    )

def simulated_anneal(
    model: QuboModel,
    sched: Optional[AnnealSchedule] = None,
    workers: int = 1,
    seeds: Optional[List[int]] = None,
) -> SolveResult:
    """
    Metropolis single-flip annealing with geometric cooling.

    Restart r uses its own PCG64 stream seeded with sched.seed + r (or
    seeds[r]); the best restart wins, ties going to the lowest restart index.
    """
    sched = sched or AnnealSchedule()
    if model.num_vars < 1:
        raise InvalidArgument("simulated annealing needs at least one variable")
    if workers < 1:
        raise InvalidArgument(f"workers must be >= 1, got {workers}")
    if seeds is None:
        seeds = [(sched.seed + r) % 2**64 for r in range(sched.restarts)]
    elif len(seeds) != sched.restarts:
        raise InvalidArgument(f"{len(seeds)} seeds given for {sched.restarts} restarts")

    start = time.time()
    t_initial, t_final = resolve_temperatures(model, sched)
    betas = 1.0 / temperatures(t_initial, t_final, sched.sweeps)

    logger.info(
        "anneal_started",
        num_vars=model.num_vars,
        sweeps=sched.sweeps,
        restarts=sched.restarts,
        t_initial=t_initial,
        t_final=t_final,
        workers=workers,
    )

    if workers == 1:
        outcomes = [_run_restart(model, betas, r, seed) for r, seed in enumerate(seeds)]
    else:
        # built once here, shared read-only by the workers
        _ = model.adjacency
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda item: _run_restart(model, betas, item[0], item[1]), enumerate(seeds)))

    winner = min(outcomes, key=lambda o: (o.energy, o.restart))
    trace = np.minimum.reduce([o.trace for o in outcomes])
    trace[-1] = winner.energy
    max_observed = max(o.max_observed_delta for o in outcomes)

    duration_ms = int((time.time() - start) * 1000)
    logger.info(
        "anneal_completed",
        best_energy=winner.energy,
        best_restart=winner.restart,
        max_observed_delta=max_observed,
        duration_ms=duration_ms,
    )

    return SolveResult(
        best_assignment=winner.assignment,
        best_energy=winner.energy,
        samples=[(o.assignment, o.energy) for o in outcomes],
        trace=trace,
        one_hot_valid=one_hot_flag(winner.assignment, model.encoding),
        metadata={
            "solver": "simulated_anneal",
            "num_vars": model.num_vars,
            "sweeps": sched.sweeps,
            "restarts": sched.restarts,
            "seeds": [int(s) for s in seeds],
            "t_initial": t_initial,
            "t_final": t_final,
            "max_observed_delta": max_observed,
            "best_restart": winner.restart,
            "duration_ms": duration_ms,
        },
    )
