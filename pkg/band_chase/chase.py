"""Row-bulge tasks and the sweep plan for bandwidth-tiled bulge chasing.

A reduction runs in passes. Each pass shrinks the upper bandwidth from
``cbw`` to ``tbw = cbw - width`` (``width`` is the inner tilewidth, or the
remainder for the last pass). Within a pass, sweep ``r`` (0-based) first
annihilates row ``r`` beyond ``tbw`` and then chases the bulge it creates
down the band in steps of ``cbw`` until it leaves the matrix.

Task geometry for sweep r, step m (0-based indices)::

    m == 0:  anchor k = r,                       window a = r + tbw
    m >= 1:  anchor k = r + tbw + (m - 1) * cbw,  window a = k + cbw

The row part builds a reflector from A[k, a:a+L] and applies it from the
right to rows k..a+L-1; the column part builds one from A[a:a+L, a] and
applies it from the left to columns a..a+L-1+cbw. ``L = min(width+1, n-a)``
shortens reflectors at the bottom edge. A task exists iff a <= n - 2.

Task (r, m) becomes ready at cycle ``3r + m + 1``; with 1-based sweep
R = r + 1 that is the first cycle j with 3(R - 1) < j. Inside one cycle the
window columns are ``a = tbw + (j-1)*cbw - r*(3*cbw - 1)``, equally spaced,
so a whole cycle runs as one ``RoundBatch`` of strided blocks.
"""

from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterator, List, Literal, Optional, Tuple
import logging

from pydantic import BaseModel, ConfigDict, model_validator

from band_chase.band_store import (
    BandWorkspace,
    BandedMatrix,
    BidiagonalResult,
    effective_bandwidth,
    extract_bidiagonal,
    machine_eps,
)
from band_chase.errors import BadConfig
from band_chase.reflect import apply_left_batch, apply_right_batch, make_reflectors


logger = logging.getLogger(__name__)

Interval = Tuple[int, int]
# Called with (sweep_R, rows, cols) for every block a task writes.
TraceFn = Callable[[int, Interval, Interval], None]

# Cycles between the starts of consecutive sweeps.
SWEEP_OFFSET = 3

# extract_bidiagonal tolerance after a full reduction, in units of n * eps.
RESULT_TOL_FACTOR = 50


class ReductionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    bw: int
    tw: int
    chunk_width: int = 32
    max_tasks: int = 1
    workers: int = 1
    precision: Literal["f16", "f32", "f64"] = "f64"

    @model_validator(mode="after")
    def _check(self) -> "ReductionConfig":
        if self.n < 1:
            raise BadConfig(f"n must be positive, got {self.n}")
        if self.bw < 1:
            raise BadConfig(f"bw must be >= 1, got {self.bw}")
        if self.tw < 1:
            raise BadConfig(f"tw must be >= 1, got {self.tw}")
        if self.chunk_width < 1:
            raise BadConfig(f"chunk_width must be >= 1, got {self.chunk_width}")
        if self.max_tasks < 1:
            raise BadConfig(f"max_tasks must be >= 1, got {self.max_tasks}")
        if self.workers < 1:
            raise BadConfig(f"workers must be >= 1, got {self.workers}")
        return self


@dataclass(frozen=True, slots=True)
class BulgeTask:
    pass_i: int
    sweep_R: int
    cycle_j: int
    anchor_k: int
    tbw: int
    cbw: int
    width: int
    col: int
    length: int
    is_first_in_sweep: bool

    @property
    def row(self) -> int:
        """0-based anchor row."""
        return self.anchor_k - 1

    @property
    def step(self) -> int:
        return self.cycle_j - 1 - SWEEP_OFFSET * (self.sweep_R - 1)

    def footprint_bytes(self, itemsize: int, n: int) -> int:
        rows = self.col + self.length - self.row
        cols = min(n - 1, self.col + self.length - 1 + self.cbw) - self.col + 1
        return rows * cols * itemsize


def _sweep_stride(cbw: int) -> int:
    return SWEEP_OFFSET * cbw - 1


@dataclass(frozen=True)
class RoundBatch:
    """Tasks of one cycle, ascending window column ``col0 + g * step``.

    Only block 0 can open a sweep; ``first_pos`` is then the position of
    its anchor row inside the row block (``width``), otherwise 0.
    """

    pass_i: int
    cycle_j: int
    tbw: int
    cbw: int
    width: int
    col0: int
    size: int
    step: int
    first_pos: int = 0

    def col(self, g: int) -> int:
        return self.col0 + g * self.step

    def anchor_row(self, g: int) -> int:
        if g == 0 and self.first_pos:
            return self.col0 - self.tbw
        return self.col(g) - self.cbw

    def sweep(self, g: int) -> int:
        """1-based sweep of block g."""
        r = (self.tbw + (self.cycle_j - 1) * self.cbw - self.col(g)) // _sweep_stride(self.cbw)
        return r + 1

    def split(self, count: int) -> List["RoundBatch"]:
        """Round-robin the blocks into at most ``count`` batches."""
        count = max(1, min(count, self.size))
        if count == 1:
            return [self]
        out = []
        for g in range(count):
            out.append(
                replace(
                    self,
                    col0=self.col(g),
                    size=len(range(g, self.size, count)),
                    step=self.step * count,
                    first_pos=self.first_pos if g == 0 else 0,
                )
            )
        return out

    @classmethod
    def of_task(cls, t: BulgeTask) -> "RoundBatch":
        return cls(
            pass_i=t.pass_i,
            cycle_j=t.cycle_j,
            tbw=t.tbw,
            cbw=t.cbw,
            width=t.width,
            col0=t.col,
            size=1,
            step=_sweep_stride(t.cbw),
            first_pos=t.width if t.is_first_in_sweep else 0,
        )


@dataclass(frozen=True)
class PassPlan:
    """One bandwidth pass; tasks are produced on demand."""

    pass_i: int
    n: int
    tbw: int
    width: int

    @property
    def cbw(self) -> int:
        return self.tbw + self.width

    @property
    def n_sweeps(self) -> int:
        return max(0, self.n - 1 - self.tbw)

    def steps(self, r: int) -> int:
        """Number of tasks in sweep r (0-based)."""
        last = self.n - 2 - r - self.tbw
        if r < 0 or last < 0:
            return 0
        return 1 + last // self.cbw

    def task(self, r: int, m: int) -> BulgeTask:
        if m == 0:
            k = r
            a = r + self.tbw
        else:
            k = r + self.tbw + (m - 1) * self.cbw
            a = k + self.cbw
        return BulgeTask(
            pass_i=self.pass_i,
            sweep_R=r + 1,
            cycle_j=SWEEP_OFFSET * r + m + 1,
            anchor_k=k + 1,
            tbw=self.tbw,
            cbw=self.cbw,
            width=self.width,
            col=a,
            length=min(self.width + 1, self.n - a),
            is_first_in_sweep=(m == 0),
        )

    def sweep(self, r: int) -> List[BulgeTask]:
        return [self.task(r, m) for m in range(self.steps(r))]

    @property
    def sweeps(self) -> List[List[BulgeTask]]:
        return [self.sweep(r) for r in range(self.n_sweeps)]

    @property
    def n_tasks(self) -> int:
        return sum(self.steps(r) for r in range(self.n_sweeps))

    @property
    def n_cycles(self) -> int:
        # The last sweep has a single task and starts last.
        if self.n_sweeps == 0:
            return 0
        return SWEEP_OFFSET * (self.n_sweeps - 1) + 1

    def sweep_range(self, j: int) -> range:
        """0-based sweeps with a task in cycle j."""
        if self.n_sweeps == 0 or j < 1:
            return range(0)
        hi = min((j - 1) // SWEEP_OFFSET, self.n_sweeps - 1)
        # Window a = tbw + (j-1)*cbw - r*stride must stay <= n - 2.
        over = (j - 1) * self.cbw + self.tbw - (self.n - 2)
        lo = max(0, -(-over // _sweep_stride(self.cbw)))
        return range(lo, hi + 1)

    def tasks_in_cycle(self, j: int) -> List[BulgeTask]:
        """Tasks with cycle_j == j, ascending sweep."""
        return [self.task(r, j - 1 - SWEEP_OFFSET * r) for r in self.sweep_range(j)]

    def batch(self, j: int) -> Optional[RoundBatch]:
        sweeps = self.sweep_range(j)
        if not sweeps:
            return None
        r_hi = sweeps[-1]
        first = self.task(r_hi, j - 1 - SWEEP_OFFSET * r_hi)
        return RoundBatch(
            pass_i=self.pass_i,
            cycle_j=j,
            tbw=self.tbw,
            cbw=self.cbw,
            width=self.width,
            col0=first.col,
            size=len(sweeps),
            step=_sweep_stride(self.cbw),
            first_pos=self.width if first.is_first_in_sweep else 0,
        )

    def tasks(self) -> Iterator[BulgeTask]:
        for j in range(1, self.n_cycles + 1):
            yield from self.tasks_in_cycle(j)

    def batches(self) -> Iterator[RoundBatch]:
        for j in range(1, self.n_cycles + 1):
            b = self.batch(j)
            if b is not None:
                yield b


@dataclass(frozen=True)
class SweepPlan:
    config: ReductionConfig
    passes: List[PassPlan]

    @property
    def n_tasks(self) -> int:
        return sum(p.n_tasks for p in self.passes)

    def ordered_tasks(self) -> Iterator[BulgeTask]:
        """Serial schedule order: pass, then cycle, then ascending sweep."""
        for p in self.passes:
            yield from p.tasks()

    def batches(self) -> Iterator[RoundBatch]:
        for p in self.passes:
            yield from p.batches()


def pass_layout(bw: int, tw: int) -> List[Tuple[int, int, int]]:
    """(pass_i, tbw, width) per pass, in execution order."""
    if bw < 2:
        return []
    q, rem = divmod(bw - 1, tw)
    layout: List[Tuple[int, int, int]] = []
    if rem == 0:
        for i in range(q - 1, -1, -1):
            layout.append((i, 1 + i * tw, tw))
    else:
        for i in range(q, 0, -1):
            layout.append((i, 1 + rem + (i - 1) * tw, tw))
        layout.append((0, 1, rem))
    return layout


def plan_sweeps(config: ReductionConfig) -> SweepPlan:
    passes = [
        PassPlan(pass_i=i, n=config.n, tbw=tbw, width=width)
        for i, tbw, width in pass_layout(config.bw, config.tw)
    ]
    logger.debug(
        "planned %d passes for n=%d bw=%d tw=%d", len(passes), config.n, config.bw, config.tw
    )
    return SweepPlan(config=config, passes=passes)


def plan_stats(plan: SweepPlan) -> Dict[str, int]:
    tasks = 0
    rounds = 0
    peak = 0
    for p in plan.passes:
        for j in range(1, p.n_cycles + 1):
            width = len(p.sweep_range(j))
            if width:
                rounds += 1
                tasks += width
                peak = max(peak, width)
    return {"passes": len(plan.passes), "tasks": tasks, "rounds": rounds, "peak_round": peak}


def _trace_batch(b: RoundBatch, n: int, trace: TraceFn, part: str) -> None:
    for g in range(b.size):
        a = b.col(g)
        last = min(n - 1, a + b.width)
        if part == "row":
            trace(b.sweep(g), (b.anchor_row(g), last), (a, last))
        else:
            trace(b.sweep(g), (a, last), (a, min(n - 1, last + b.cbw)))


def run_batch(
    ws: BandWorkspace,
    b: RoundBatch,
    config: ReductionConfig,
    *,
    trace: Optional[TraceFn] = None,
) -> None:
    """Row parts of every block in ``b``, then their column parts.

    Blocks run at full size ``width + 1`` even at the trailing edge; the
    padding of ``ws`` absorbs the phantom rows and columns.
    """
    L = b.width + 1
    chunk = config.chunk_width

    # Rows a-cbw..a+width, cols a..a+width. A sweep-opening block has its
    # anchor at first_pos; the rows above it are outside the task.
    view = ws.blocks(b.col0 - b.cbw, b.col0, (b.cbw + L, L), b.size, b.step)
    blk = view.astype(ws.compute, copy=False)
    x = blk[:, 0, :].copy()
    above = None
    if b.first_pos:
        x[0] = blk[0, b.first_pos, :]
        above = blk[0, : b.first_pos, :].copy()
    h = make_reflectors(x)
    apply_right_batch(h, blk, chunk_width=chunk)
    head = h.head()
    if b.first_pos:
        blk[0, : b.first_pos, :] = above
        blk[1:, 0, :] = head[1:]
        blk[0, b.first_pos, :] = head[0]
    else:
        blk[:, 0, :] = head
    if blk is not view:
        view[...] = blk
    if trace is not None:
        _trace_batch(b, ws.n, trace, "row")

    # Rows a..a+width, cols a..a+width+cbw.
    view = ws.blocks(b.col0, b.col0, (L, b.cbw + L), b.size, b.step)
    blk = view.astype(ws.compute, copy=False)
    h = make_reflectors(blk[:, :, 0].copy())
    apply_left_batch(h, blk, chunk_width=chunk)
    blk[:, :, 0] = h.head()
    if blk is not view:
        view[...] = blk
    if trace is not None:
        _trace_batch(b, ws.n, trace, "col")


def execute_task(
    a: BandedMatrix,
    t: BulgeTask,
    config: ReductionConfig,
    *,
    trace: Optional[TraceFn] = None,
) -> None:
    """Row annihilation at anchor_k followed by the matching column annihilation."""
    ws = BandWorkspace(a, pad=t.cbw + t.width + 1)
    run_batch(ws, RoundBatch.of_task(t), config, trace=trace)
    ws.commit()


def check_consistent(a: BandedMatrix, config: ReductionConfig) -> None:
    if a.n != config.n:
        raise BadConfig(f"matrix order {a.n} != config n {config.n}")
    if a.tw_scratch < config.tw or a.bw < config.bw:
        raise BadConfig(
            f"storage (bw={a.bw}, scratch={a.tw_scratch}) too small for bw={config.bw}, tw={config.tw}"
        )
    if a.precision != config.precision:
        raise BadConfig(f"matrix precision {a.precision} != config precision {config.precision}")
    lower, upper = effective_bandwidth(a)
    if lower or upper > config.bw:
        raise BadConfig(
            f"matrix has lower extent {lower} and upper extent {upper}; expected upper <= {config.bw}"
        )


def workspace_for(a: BandedMatrix, config: ReductionConfig) -> BandWorkspace:
    return BandWorkspace(a, pad=config.bw + config.tw + 1)


def finish_reduction(
    a: BandedMatrix, config: ReductionConfig, plan: SweepPlan, *, engine: str, rounds: int, tasks: int
) -> BidiagonalResult:
    tol = RESULT_TOL_FACTOR * a.n * machine_eps(a.precision)
    result = extract_bidiagonal(a, tol)
    result.meta.update(
        {
            "config": config.model_dump(),
            "passes": len(plan.passes),
            "tasks": tasks,
            "rounds": rounds,
            "engine": engine,
        }
    )
    return result


def run_reduction_serial(a: BandedMatrix, config: ReductionConfig) -> BidiagonalResult:
    """Reduce ``a`` in place and return its bidiagonal."""
    check_consistent(a, config)
    plan = plan_sweeps(config)
    ws = workspace_for(a, config)
    tasks = 0
    rounds = 0
    for p in plan.passes:
        for b in p.batches():
            run_batch(ws, b, config)
            rounds += 1
            tasks += b.size
        logger.debug("pass %d done: bandwidth %d -> %d", p.pass_i, p.cbw, p.tbw)
    ws.commit()
    return finish_reduction(a, config, plan, engine="serial", rounds=rounds, tasks=tasks)


__all__ = [
    "SWEEP_OFFSET",
    "ReductionConfig",
    "BulgeTask",
    "RoundBatch",
    "PassPlan",
    "SweepPlan",
    "pass_layout",
    "plan_sweeps",
    "plan_stats",
    "run_batch",
    "execute_task",
    "check_consistent",
    "workspace_for",
    "finish_reduction",
    "run_reduction_serial",
]
