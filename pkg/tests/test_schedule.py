import numpy as np
import pytest


def _config(n, bw, tw, **kw):
    from band_chase.chase import ReductionConfig

    return ReductionConfig(n=n, bw=bw, tw=tw, **kw)


def _random_band(n, bw, tw, seed=0):
    from band_chase.band_store import random_banded

    return random_banded(n, bw, tw, rng=np.random.default_rng(seed))


@pytest.mark.parametrize(
    "alus,cbw,expected",
    [(528, 32, 50_688), (304, 32, 29_184), (56, 32, 5_376), (1, 1, 3)],
)
def test_min_full_occupancy_size(alus, cbw, expected):
    from band_chase.schedule import OccupancyModel, min_full_occupancy_size

    m = OccupancyModel(alus=alus, cbw=cbw)
    assert min_full_occupancy_size(m) == expected
    assert min_full_occupancy_size(m) // (3 * cbw) == alus


def test_hardware_table_matches_occupancy_values():
    from band_chase.schedule import HARDWARE_ALUS, OccupancyModel, min_full_occupancy_size

    sizes = sorted(min_full_occupancy_size(OccupancyModel(alus=a, cbw=32)) for a in HARDWARE_ALUS.values())
    assert sizes == [5_376, 29_184, 50_688]


def test_occupancy_validation_and_fraction():
    from band_chase.errors import BadConfig
    from band_chase.schedule import OccupancyModel, occupancy_fraction

    with pytest.raises(BadConfig):
        OccupancyModel(alus=0, cbw=32)
    with pytest.raises(BadConfig):
        OccupancyModel(alus=56, cbw=-1)

    m = OccupancyModel(alus=56, cbw=32)
    assert occupancy_fraction(5_376, m) == 1.0
    assert occupancy_fraction(2_688, m) == 0.5
    assert occupancy_fraction(100_000, m) == 1.0


def test_rounds_partition_the_plan():
    from band_chase.chase import plan_stats, plan_sweeps
    from band_chase.schedule import rounds

    plan = plan_sweeps(_config(60, 8, 3))
    rs = rounds(plan)
    flat = [t for r in rs for t in r.tasks]
    assert flat == list(plan.ordered_tasks())
    assert len(rs) == plan_stats(plan)["rounds"]
    for r in rs:
        assert all(t.cycle_j == r.cycle_j and t.pass_i == r.pass_i for t in r.tasks)
        sweeps = [t.sweep_R for t in r.tasks]
        assert sweeps == sorted(sweeps)
        # gate: sweep R only runs once j > 3(R - 1)
        assert all(3 * (t.sweep_R - 1) < r.cycle_j for t in r.tasks)


def test_single_sweep_gives_one_task_per_round():
    from band_chase.chase import plan_sweeps
    from band_chase.schedule import rounds

    # the first pass of bw=11 has tbw=10, so n=12 leaves a single sweep in it
    plan = plan_sweeps(_config(12, 11, 1))
    first = plan.passes[0]
    assert first.n_sweeps == 1
    assert all(len(r.tasks) == 1 for r in rounds(plan) if r.pass_i == first.pass_i)


def test_second_sweep_starts_three_rounds_later():
    from band_chase.chase import plan_sweeps
    from band_chase.schedule import rounds

    plan = plan_sweeps(_config(40, 3, 2))
    rs = rounds(plan)
    first = {}
    for idx, r in enumerate(rs):
        for t in r.tasks:
            first.setdefault((t.pass_i, t.sweep_R), idx)
    for p in plan.passes:
        assert first[(p.pass_i, 2)] - first[(p.pass_i, 1)] >= 3


def test_footprint_examples():
    from band_chase.chase import plan_sweeps
    from band_chase.schedule import footprint, footprints_overlap

    config = _config(40, 6, 2)
    p = plan_sweeps(config).passes[0]
    rows, cols = footprint(p.task(0, 0), config)
    assert rows[0] == 0
    cells = (rows[1] - rows[0] + 1) * (cols[1] - cols[0] + 1)
    assert p.task(0, 0).footprint_bytes(8, 40) == 8 * cells

    a = footprint(p.task(0, 1), config)
    b = footprint(p.task(0, 2), config)
    assert footprints_overlap(a, b)

    c = footprint(p.task(1, 0), config)
    d = footprint(p.task(0, 3), config)
    assert p.task(1, 0).cycle_j == p.task(0, 3).cycle_j
    assert not footprints_overlap(c, d)


@pytest.mark.parametrize("tw", [1, 2, 7])
def test_rounds_are_disjoint(tw):
    from band_chase.chase import plan_sweeps
    from band_chase.schedule import round_conflicts, rounds

    config = _config(256, 8, tw)
    for r in rounds(plan_sweeps(config)):
        assert round_conflicts(r, config) == []


def test_footprint_covers_every_touched_cell():
    from band_chase.chase import execute_task, plan_sweeps
    from band_chase.schedule import footprint

    n = 30
    a = _random_band(n, 5, 2, seed=1)
    config = _config(n, 5, 2)
    for t in plan_sweeps(config).ordered_tasks():
        (r0, r1), (c0, c1) = footprint(t, config)
        touched = []
        execute_task(a, t, config, trace=lambda sweep, rows, cols: touched.append((sweep, rows, cols)))
        assert {sweep for sweep, _, _ in touched} == {t.sweep_R}
        for _, rows, cols in touched:
            assert r0 <= rows[0] and rows[1] <= r1
            assert c0 <= cols[0] and cols[1] <= c1
        # and no looser than the cells written, to within one row or column
        assert abs(min(rows[0] for _, rows, _ in touched) - r0) <= 1
        assert abs(max(rows[1] for _, rows, _ in touched) - r1) <= 1
        assert abs(min(cols[0] for _, _, cols in touched) - c0) <= 1
        assert abs(max(cols[1] for _, _, cols in touched) - c1) <= 1


@pytest.mark.parametrize("workers,max_tasks", [(1, 1), (4, 4), (8, 1), (3, 64)])
def test_parallel_matches_serial_bit_for_bit(workers, max_tasks):
    from band_chase.chase import run_reduction_serial
    from band_chase.schedule import run_reduction_parallel

    n, bw, tw = 96, 8, 3
    base = _random_band(n, bw, tw, seed=2)
    serial_in = base.copy()
    parallel_in = base.copy()
    serial = run_reduction_serial(serial_in, _config(n, bw, tw))
    parallel = run_reduction_parallel(
        parallel_in, _config(n, bw, tw, workers=workers, max_tasks=max_tasks), debug=False
    )
    assert np.array_equal(serial.d, parallel.d)
    assert np.array_equal(serial.e, parallel.e)
    assert np.array_equal(serial_in.data, parallel_in.data)
    assert parallel.meta["engine"] == "parallel"
    assert parallel.meta["rounds"] == serial.meta["rounds"]


def test_debug_tracking_passes_on_valid_plan(monkeypatch):
    from band_chase.chase import run_reduction_serial
    from band_chase.schedule import run_reduction_parallel

    monkeypatch.setenv("BAND_CHASE_DEBUG", "1")
    base = _random_band(48, 6, 2, seed=3)
    expected = run_reduction_serial(base.copy(), _config(48, 6, 2))
    got = run_reduction_parallel(base.copy(), _config(48, 6, 2, workers=4, max_tasks=4))
    assert np.array_equal(expected.d, got.d)


def test_debug_tracking_flags_overlapping_round(monkeypatch):
    import band_chase.chase as chase
    from band_chase.errors import OverlapError
    from band_chase.schedule import run_reduction_parallel

    # sweeps one cycle apart put neighbouring steps in the same round
    monkeypatch.setattr(chase, "SWEEP_OFFSET", 1)
    a = _random_band(24, 4, 1, seed=4)
    with pytest.raises(OverlapError):
        run_reduction_parallel(a, _config(24, 4, 1, workers=1), debug=True)


@pytest.mark.slow
@pytest.mark.parametrize("workers", [2, 4, 8])
def test_parallel_bit_equality_at_scale(workers, tmp_path):
    from band_chase.band_store import write_bnd
    from band_chase.chase import run_reduction_serial
    from band_chase.schedule import run_reduction_parallel

    n, bw, tw = 512, 16, 4
    for seed in range(10):
        base = _random_band(n, bw, tw, seed=seed)
        s_in, p_in = base.copy(), base.copy()
        run_reduction_serial(s_in, _config(n, bw, tw))
        run_reduction_parallel(p_in, _config(n, bw, tw, workers=workers, max_tasks=workers), debug=False)
        write_bnd(s_in, tmp_path / "serial.bnd")
        write_bnd(p_in, tmp_path / "parallel.bnd")
        assert (tmp_path / "serial.bnd").read_bytes() == (tmp_path / "parallel.bnd").read_bytes()
