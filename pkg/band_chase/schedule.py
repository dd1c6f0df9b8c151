"""Round-based bulk-synchronous execution of a sweep plan.

A round is every task of one pass that shares a cycle. Sweeps start three
cycles apart, which keeps the footprints inside a round pairwise disjoint,
so a round can run on any number of workers with one barrier at its end and
still reproduce the serial engine bit for bit.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple
import logging
import threading

from pydantic import BaseModel, ConfigDict, model_validator

from band_chase.band_store import BandedMatrix, BidiagonalResult
from band_chase.chase import (
    BulgeTask,
    Interval,
    ReductionConfig,
    RoundBatch,
    SweepPlan,
    check_consistent,
    finish_reduction,
    plan_sweeps,
    run_batch,
    workspace_for,
)
from band_chase.config import load_settings
from band_chase.errors import BadConfig, OverlapError


logger = logging.getLogger(__name__)

Footprint = Tuple[Interval, Interval]

# Execution units per device; minimum sizes below assume cbw = 32.
HARDWARE_ALUS: Dict[str, int] = {
    "NVIDIA H100": 132 * 4,
    "AMD MI300X": 304,
    "Intel PVC Max 1100": 56,
}


@dataclass(frozen=True)
class Round:
    pass_i: int
    cycle_j: int
    tasks: List[BulgeTask]


class OccupancyModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    alus: int
    cbw: int

    @model_validator(mode="after")
    def _check(self) -> "OccupancyModel":
        if self.alus < 1 or self.cbw < 1:
            raise BadConfig(f"alus and cbw must be positive, got alus={self.alus}, cbw={self.cbw}")
        return self


def min_full_occupancy_size(m: OccupancyModel) -> int:
    """Smallest n with n / (3 * cbw) >= alus."""
    return 3 * m.cbw * m.alus


def occupancy_fraction(n: int, m: OccupancyModel) -> float:
    return min(1.0, n / min_full_occupancy_size(m))


def footprint(t: BulgeTask, config: ReductionConfig) -> Footprint:
    """Inclusive (rows, cols) bounding box of every cell a task reads or writes."""
    last = t.col + t.length - 1
    return (t.row, last), (t.col, min(config.n - 1, last + t.cbw))


def _overlap(x: Interval, y: Interval) -> bool:
    return x[0] <= y[1] and y[0] <= x[1]


def footprints_overlap(f: Footprint, g: Footprint) -> bool:
    return _overlap(f[0], g[0]) and _overlap(f[1], g[1])


def iter_rounds(plan: SweepPlan) -> Iterator[Round]:
    for p in plan.passes:
        for j in range(1, p.n_cycles + 1):
            tasks = p.tasks_in_cycle(j)
            if tasks:
                yield Round(pass_i=p.pass_i, cycle_j=j, tasks=tasks)


def rounds(plan: SweepPlan) -> List[Round]:
    return list(iter_rounds(plan))


def round_conflicts(r: Round, config: ReductionConfig) -> List[Tuple[BulgeTask, BulgeTask]]:
    """Pairs of tasks in one round whose footprints intersect."""
    boxes = [(t, footprint(t, config)) for t in r.tasks]
    # Sorted by anchor row: only neighbours can share rows.
    boxes.sort(key=lambda item: item[1][0][0])
    bad: List[Tuple[BulgeTask, BulgeTask]] = []
    for idx, (t, f) in enumerate(boxes):
        for u, g in boxes[idx + 1 :]:
            if g[0][0] > f[0][1]:
                break
            if footprints_overlap(f, g):
                bad.append((t, u))
    return bad


class _WriteTracker:
    """Collects the blocks each sweep wrote during one round."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._writes: List[Tuple[int, Footprint]] = []

    def record(self, sweep_R: int, rows: Interval, cols: Interval) -> None:
        with self._lock:
            self._writes.append((sweep_R, (rows, cols)))

    def check(self, b: RoundBatch) -> None:
        writes = self._writes
        self._writes = []
        for idx, (s, f) in enumerate(writes):
            for u, g in writes[idx + 1 :]:
                if s != u and footprints_overlap(f, g):
                    raise OverlapError(
                        f"pass {b.pass_i} cycle {b.cycle_j}: sweeps {s} and {u} "
                        f"both wrote rows {f[0]}/{g[0]} cols {f[1]}/{g[1]}"
                    )


def run_reduction_parallel(
    a: BandedMatrix, config: ReductionConfig, *, debug: Optional[bool] = None
) -> BidiagonalResult:
    """Reduce ``a`` in place, one barrier per round; equals the serial engine bit for bit."""
    check_consistent(a, config)
    if debug is None:
        debug = load_settings().debug
    plan = plan_sweeps(config)
    ws = workspace_for(a, config)
    tracker = _WriteTracker() if debug else None
    trace = tracker.record if tracker else None
    n_rounds = 0
    n_tasks = 0
    with ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="bulge") as pool:
        for batch in plan.batches():
            groups = batch.split(config.max_tasks)
            if len(groups) == 1 or config.workers == 1:
                for g in groups:
                    run_batch(ws, g, config, trace=trace)
            else:
                futures = [pool.submit(run_batch, ws, g, config, trace=trace) for g in groups]
                # Barrier: the next round starts only after every group finished.
                for fut in futures:
                    fut.result()
            if tracker is not None:
                tracker.check(batch)
            n_rounds += 1
            n_tasks += batch.size
    ws.commit()
    logger.debug("parallel reduction: %d rounds, %d tasks, %d workers", n_rounds, n_tasks, config.workers)
    return finish_reduction(a, config, plan, engine="parallel", rounds=n_rounds, tasks=n_tasks)
