import numpy as np
import pytest


def test_three_four_five():
    from band_chase.reflect import apply_reflector, make_reflector

    x = np.array([3.0, 4.0])
    h = make_reflector(x)
    assert h.beta == -5.0
    assert 0.0 <= h.tau <= 2.0
    y = apply_reflector(h, x.copy())
    eps = np.finfo(np.float64).eps
    assert abs(y[0] + 5.0) <= 4 * eps * 5
    assert abs(y[1]) <= 4 * eps * 5


def test_nothing_to_annihilate_is_identity():
    from band_chase.reflect import apply_reflector, make_reflector

    h = make_reflector(np.array([2.5, 0.0, 0.0]))
    assert h.tau == 0.0 and h.is_identity
    assert h.beta == 2.5

    y = np.array([1.0, -2.0, 3.0])
    before = y.copy()
    apply_reflector(h, y)
    assert np.array_equal(y, before)


def test_all_zero_input():
    from band_chase.reflect import make_reflector

    h = make_reflector(np.zeros(4))
    assert h.tau == 0.0 and h.beta == 0.0


def test_near_zero_tail_counts_as_annihilated():
    from band_chase.reflect import make_reflector

    h = make_reflector(np.array([1.0, 1e-20]))
    assert h.tau == 0.0 and h.beta == 1.0


def test_length_mismatch():
    from band_chase.errors import LengthMismatch
    from band_chase.reflect import apply_left, apply_reflector, apply_right, make_reflector

    h = make_reflector(np.array([1.0, 2.0, 3.0]))
    with pytest.raises(LengthMismatch):
        apply_reflector(h, np.ones(2))
    with pytest.raises(LengthMismatch):
        apply_right(h, np.ones((4, 2)))
    with pytest.raises(LengthMismatch):
        apply_left(h, np.ones((2, 4)))
    with pytest.raises(LengthMismatch):
        make_reflector(np.zeros(0))


@pytest.mark.parametrize("dtype", [np.float64, np.float32, np.float16])
def test_random_reflector_properties(dtype):
    import time

    from band_chase.band_store import compute_dtype, precision_of
    from band_chase.reflect import apply_right_batch, make_reflector, make_reflectors

    # Half precision computes in single and rounds each result on store.
    work = compute_dtype(precision_of(dtype))
    eps = float(np.finfo(dtype).eps)
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    total = 0
    for length in range(1, 10):
        count = 10_000 // 9 + (length == 1)
        x = rng.standard_normal((count, length)).astype(dtype)
        y = rng.standard_normal((count, length)).astype(dtype)
        norm = np.linalg.norm(x.astype(np.float64), axis=1)
        ynorm = np.linalg.norm(y.astype(np.float64), axis=1)

        h = make_reflectors(x.astype(work))
        assert np.all((h.tau >= 0) & (h.tau <= 2))
        beta = h.beta.astype(dtype).astype(np.float64)
        assert np.all(np.abs(np.abs(beta) - norm) <= 4 * eps * norm)

        hx = apply_right_batch(h, x.astype(work)[:, None, :])[:, 0, :].astype(dtype)
        # the kernel stores exact zeros here; this bounds the dot-product rounding
        tail = np.abs(hx[:, 1:].astype(np.float64)).max(axis=1, initial=0.0)
        assert np.all(tail <= max(4, length) * eps * norm)

        hy = apply_right_batch(h, y.astype(work)[:, None, :])[:, 0, :].astype(dtype)
        hynorm = np.linalg.norm(hy.astype(np.float64), axis=1)
        assert np.all(np.abs(hynorm - ynorm) <= 8 * eps * ynorm)
        back = apply_right_batch(h, hy.astype(work)[:, None, :])[:, 0, :].astype(dtype)
        err = np.abs(back.astype(np.float64) - y.astype(np.float64)).max(axis=1)
        assert np.all(err <= 16 * eps * ynorm)

        for b in (0, count // 2, count - 1):
            single = make_reflector(x[b].astype(work))
            assert np.array_equal(single.v, h.v[b])
            assert single.tau == h.tau[b] and single.beta == h.beta[b]
        total += count
    assert total == 10_000
    assert time.perf_counter() - start < 5


def test_apply_right_matches_dense_product():
    from band_chase.reflect import apply_right, make_reflector

    rng = np.random.default_rng(2)
    h = make_reflector(rng.standard_normal(5))
    block = rng.standard_normal((7, 5))
    hmat = np.eye(5) - h.tau * np.outer(h.v, h.v)
    expected = block @ hmat
    apply_right(h, block)
    np.testing.assert_allclose(block, expected, rtol=0, atol=1e-13)


def test_apply_left_is_transpose_of_right():
    from band_chase.reflect import apply_left, apply_right, make_reflector

    rng = np.random.default_rng(3)
    h = make_reflector(rng.standard_normal(4))
    block = rng.standard_normal((4, 9))
    left = apply_left(h, block.copy())
    right = apply_right(h, block.T.copy())
    assert np.array_equal(left, right.T)


def test_chunk_width_never_changes_bits():
    from band_chase.reflect import apply_right, make_reflector

    rng = np.random.default_rng(8)
    h = make_reflector(rng.standard_normal(6))
    block = rng.standard_normal((50, 6))
    results = []
    for chunk in (0, 1, 7, 32, 64):
        results.append(apply_right(h, block.copy(), chunk_width=chunk))
    for r in results[1:]:
        assert np.array_equal(r, results[0])


def test_identical_inputs_give_identical_outputs():
    from band_chase.reflect import apply_reflector, make_reflector

    rng = np.random.default_rng(9)
    x = rng.standard_normal(17)
    y = rng.standard_normal(17)
    a = apply_reflector(make_reflector(x.copy()), y.copy())
    b = apply_reflector(make_reflector(x.copy()), y.copy())
    assert np.array_equal(a, b)
