import hashlib

import numpy as np
import pytest


EPS = np.finfo(np.float64).eps


def test_spectrum_spec_validation():
    from band_chase.errors import BadSpec
    from band_chase.oracle import SpectrumSpec

    with pytest.raises(BadSpec):
        SpectrumSpec(kind="uniform", n=8)
    with pytest.raises(BadSpec):
        SpectrumSpec(kind="arithmetic", n=1)


def test_two_by_two_arithmetic():
    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    a, sigma = gen_test_matrix(SpectrumSpec(kind="arithmetic", n=2, seed=0))
    assert sigma.tolist() == [1.0, 0.5]
    # closed form for 2x2: s1*s2 = |det|, s1^2 + s2^2 = ||A||_F^2
    assert abs(abs(np.linalg.det(a)) - 0.5) <= 32 * EPS
    assert abs(np.sum(a * a) - 1.25) <= 32 * EPS


@pytest.mark.parametrize("kind", ["arithmetic", "logarithmic", "quarter_circle"])
def test_spectra_shape(kind):
    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    a, sigma = gen_test_matrix(SpectrumSpec(kind=kind, n=40, seed=1))
    assert sigma.shape == (40,)
    assert np.all(np.diff(sigma) <= 0)
    assert np.all(sigma[:-1] > 0) and sigma[-1] >= 0
    assert sigma[0] <= 1.0
    np.testing.assert_allclose(np.linalg.svd(a, compute_uv=False), sigma, rtol=0, atol=100 * 40 * EPS)


def test_logarithmic_endpoints():
    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    _, sigma = gen_test_matrix(SpectrumSpec(kind="logarithmic", n=16, seed=0))
    assert sigma[0] == pytest.approx(1.0)
    assert sigma[-1] == pytest.approx(1e-6)


def test_quarter_circle_mean():
    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    _, sigma = gen_test_matrix(SpectrumSpec(kind="quarter_circle", n=4000, seed=2))
    # density (4/pi) sqrt(1 - x^2) on [0, 1] has mean 4 / (3 pi)
    assert np.mean(sigma) == pytest.approx(4 / (3 * np.pi), abs=0.02)


def test_generator_is_deterministic_per_seed():
    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    spec = SpectrumSpec(kind="logarithmic", n=16, seed=7)
    first = hashlib.sha256(gen_test_matrix(spec)[0].tobytes()).hexdigest()
    second = hashlib.sha256(gen_test_matrix(spec)[0].tobytes()).hexdigest()
    assert first == second
    other = gen_test_matrix(SpectrumSpec(kind="logarithmic", n=16, seed=8))[0]
    assert hashlib.sha256(other.tobytes()).hexdigest() != first


# First draw of default_rng(12345), as published for the PCG64 stream.
PCG64_12345_FIRST = 0.22733602246716966


def test_generator_golden_stream_and_draw_order():
    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    assert np.random.default_rng(12345).random() == PCG64_12345_FIRST

    a, sigma = gen_test_matrix(SpectrumSpec(kind="logarithmic", n=16, seed=7))
    # U's Gaussian block is drawn first, then V's; no other draws for this spectrum.
    rng = np.random.default_rng(7)
    u = np.linalg.qr(rng.standard_normal((16, 16)))
    v = np.linalg.qr(rng.standard_normal((16, 16)))
    u = u[0] * np.sign(np.diag(u[1]))[None, :]
    v = v[0] * np.sign(np.diag(v[1]))[None, :]
    assert np.array_equal(a, (u * sigma[None, :]) @ v.T)
    assert sigma[0] == 1.0 and sigma[-1] == pytest.approx(1e-6, rel=1e-12)


def test_generator_digest_is_stable_across_processes():
    import subprocess
    import sys
    from pathlib import Path

    from band_chase.oracle import SpectrumSpec, gen_test_matrix

    code = (
        "import hashlib;"
        "from band_chase.oracle import SpectrumSpec, gen_test_matrix;"
        "a = gen_test_matrix(SpectrumSpec(kind='logarithmic', n=16, seed=7))[0];"
        "print(hashlib.sha256(a.tobytes()).hexdigest())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        check=True,
        cwd=Path(__file__).resolve().parent.parent,
    )
    here = hashlib.sha256(gen_test_matrix(SpectrumSpec(kind="logarithmic", n=16, seed=7))[0].tobytes())
    assert out.stdout.strip() == here.hexdigest()


def test_random_orthogonal():
    from band_chase.oracle import random_orthogonal

    n = 50
    u = random_orthogonal(n, np.random.default_rng(3))
    assert np.max(np.abs(u.T @ u - np.eye(n))) <= 16 * n * EPS


def test_dense_to_band_shape_and_spectrum():
    from band_chase.oracle import dense_to_band

    rng = np.random.default_rng(4)
    a = rng.standard_normal((30, 30))
    b = dense_to_band(a, 5)
    assert not np.tril(b, -1).any()
    assert not np.triu(b, 6).any()
    np.testing.assert_allclose(
        np.linalg.svd(b, compute_uv=False), np.linalg.svd(a, compute_uv=False), rtol=0, atol=50 * 30 * EPS * 10
    )


def test_dense_bidiagonalize_examples():
    from band_chase.oracle import bidiagonal_svd, dense_bidiagonalize

    r = dense_bidiagonalize(np.diag([3.0, -2.0, 1.0]))
    np.testing.assert_array_equal(np.abs(r.d), [3.0, 2.0, 1.0])
    np.testing.assert_array_equal(r.e, [0.0, 0.0])

    values = bidiagonal_svd(dense_bidiagonalize(np.ones((3, 3))))
    np.testing.assert_allclose(values, [3.0, 0.0, 0.0], rtol=0, atol=50 * 3 * EPS * 3)

    a = np.random.default_rng(5).standard_normal((32, 32))
    sigma = np.linalg.svd(a, compute_uv=False)
    values = bidiagonal_svd(dense_bidiagonalize(a))
    np.testing.assert_allclose(values, sigma, rtol=0, atol=50 * 32 * EPS * sigma[0])


def test_bidiagonal_svd_small_cases():
    from band_chase.band_store import BidiagonalResult
    from band_chase.oracle import bidiagonal_svd

    values = bidiagonal_svd(BidiagonalResult(d=np.array([1.0, 2.0, 3.0]), e=np.zeros(2)))
    assert values.tolist() == [3.0, 2.0, 1.0]

    golden = (1 + np.sqrt(5)) / 2
    values = bidiagonal_svd(BidiagonalResult(d=np.array([1.0, 1.0]), e=np.array([1.0])))
    np.testing.assert_allclose(values, [golden, golden - 1], rtol=8 * EPS)

    values = bidiagonal_svd(BidiagonalResult(d=np.array([4.0]), e=np.zeros(0)))
    assert values.tolist() == [4.0]
    assert bidiagonal_svd(BidiagonalResult(d=np.zeros(3), e=np.zeros(2))).tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("seed", range(4))
def test_bidiagonal_svd_matches_dense(seed):
    from band_chase.band_store import BidiagonalResult
    from band_chase.oracle import bidiagonal_svd

    rng = np.random.default_rng(seed)
    n = 64
    r = BidiagonalResult(d=rng.standard_normal(n), e=rng.standard_normal(n - 1))
    sigma = np.linalg.svd(r.to_dense(), compute_uv=False)
    values = bidiagonal_svd(r)
    assert np.all(values >= 0)
    assert np.max(np.abs(values - sigma)) <= 100 * n * EPS * sigma[0]

    flipped = BidiagonalResult(d=-r.d, e=r.e * np.where(np.arange(n - 1) % 2, 1.0, -1.0))
    np.testing.assert_allclose(bidiagonal_svd(flipped), values, rtol=0, atol=100 * n * EPS * sigma[0])


def test_bidiagonal_svd_graded_and_zero_diagonal():
    from band_chase.band_store import BidiagonalResult
    from band_chase.oracle import bidiagonal_svd

    n = 20
    d = np.geomspace(1.0, 1e-12, n)
    e = np.geomspace(1e-1, 1e-13, n - 1)
    r = BidiagonalResult(d=d, e=e)
    sigma = np.linalg.svd(r.to_dense(), compute_uv=False)
    assert np.max(np.abs(bidiagonal_svd(r) - sigma)) <= 100 * n * EPS * sigma[0]

    d = np.array([1.0, 0.0, 2.0, 3.0])
    e = np.array([0.5, 0.25, 0.125])
    r = BidiagonalResult(d=d, e=e)
    sigma = np.linalg.svd(r.to_dense(), compute_uv=False)
    np.testing.assert_allclose(bidiagonal_svd(r), sigma, rtol=0, atol=100 * 4 * EPS * sigma[0])


def test_bidiagonal_svd_sweep_cap():
    from band_chase.band_store import BidiagonalResult
    from band_chase.errors import NoConvergence
    from band_chase.oracle import bidiagonal_svd

    rng = np.random.default_rng(9)
    r = BidiagonalResult(d=rng.standard_normal(30), e=rng.standard_normal(29))
    with pytest.raises(NoConvergence):
        bidiagonal_svd(r, max_sweeps=1)


def test_rel_error():
    from band_chase.errors import LengthMismatch
    from band_chase.oracle import rel_error, scaled_error

    truth = np.array([1.0, 0.5, 0.25])
    assert rel_error(truth, truth) == 0.0
    assert rel_error(truth * (1 + 1e-8), truth) == pytest.approx(1e-8, rel=1e-7)
    # zeros in the truth are excluded
    assert rel_error([1.0, 1e-3], [1.0, 0.0]) == 0.0
    assert scaled_error([1.0, 0.6], [1.0, 0.5]) == pytest.approx(0.1)
    with pytest.raises(LengthMismatch):
        rel_error([1.0], [1.0, 2.0])


def test_mirror_task_keeps_singular_values():
    from band_chase.band_store import random_banded, to_dense
    from band_chase.chase import ReductionConfig, plan_sweeps
    from band_chase.oracle import mirror_task

    config = ReductionConfig(n=20, bw=4, tw=2)
    dense = to_dense(random_banded(20, 4, 2, rng=np.random.default_rng(1)))
    sigma = np.linalg.svd(dense, compute_uv=False)
    for t in plan_sweeps(config).ordered_tasks():
        mirror_task(dense, t, config)
    np.testing.assert_allclose(np.linalg.svd(dense, compute_uv=False), sigma, rtol=0, atol=50 * 20 * EPS * sigma[0])
    off = np.triu(dense, 2) + np.tril(dense, -1)
    assert np.max(np.abs(off)) <= 50 * 20 * EPS * sigma[0]


def test_pipeline_agrees_with_dense_oracle():
    from band_chase.band_store import random_banded, to_dense
    from band_chase.chase import ReductionConfig, run_reduction_serial
    from band_chase.oracle import bidiagonal_svd, dense_bidiagonalize

    n = 64
    for precision, eps in (("f64", EPS), ("f32", float(np.finfo(np.float32).eps))):
        a = random_banded(n, 6, 2, precision=precision, rng=np.random.default_rng(2))
        oracle = bidiagonal_svd(dense_bidiagonalize(to_dense(a).astype(np.float64)))
        values = bidiagonal_svd(run_reduction_serial(a, ReductionConfig(n=n, bw=6, tw=2, precision=precision)))
        assert np.max(np.abs(values - oracle)) <= 100 * n * eps * oracle[0]


def test_accuracy_trial_row():
    from band_chase.oracle import accuracy_trial

    row = accuracy_trial(precision="f64", kind="arithmetic", n=64, bw=6, tw=2, trial=0)
    assert set(row) == {"precision", "spectrum", "n", "bw", "tw", "trial", "rel_error", "scaled_error"}
    assert row["scaled_error"] < 1e-11
    assert row["rel_error"] < 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("precision,limit", [("f64", 1e-11), ("f32", 1e-4)])
def test_accuracy_study_desk_scale(precision, limit):
    from band_chase.oracle import SPECTRA, accuracy_trial

    worst = 0.0
    for kind in SPECTRA:
        for trial in range(10):
            row = accuracy_trial(precision=precision, kind=kind, n=256, bw=8, tw=4, trial=trial)
            worst = max(worst, row["scaled_error"])
    assert worst < limit
