"""Brute-force references and the accuracy protocol.

- ``gen_test_matrix``: A = U diag(sigma) V^T with seeded random orthogonal U, V.
- ``dense_to_band`` / ``dense_bidiagonalize``: one-sided Householder reductions
  on a dense copy (the stage that precedes bulge chasing).
- ``bidiagonal_svd``: Demmel-Kahan QR on (d, e), values only, in double.
- ``mirror_task``: replays one bulge task on a dense matrix with the same
  primitives, for checking the band kernel cell by cell.
"""

from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from band_chase.band_store import (
    BidiagonalResult,
    compute_dtype,
    from_dense,
    precision_of,
    storage_dtype,
)
from band_chase.chase import BulgeTask, ReductionConfig, run_reduction_serial
from band_chase.errors import BadSpec, LengthMismatch, NoConvergence
from band_chase.reflect import Reflector, apply_left, apply_right, make_reflector


logger = logging.getLogger(__name__)

SPECTRA = ("arithmetic", "logarithmic", "quarter_circle")
LOG_SPECTRUM_FLOOR = 1e-6
QUARTER_CIRCLE_TABLE = 100_000
REL_ERROR_CUTOFF = 1e-12


class SpectrumSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    n: int
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "SpectrumSpec":
        if self.kind not in SPECTRA:
            raise BadSpec(f"unknown spectrum {self.kind!r}; expected one of {', '.join(SPECTRA)}")
        if self.n < 2:
            raise BadSpec(f"n must be >= 2, got {self.n}")
        return self


def _quarter_circle_table() -> Tuple[np.ndarray, np.ndarray]:
    x = np.linspace(0.0, 1.0, QUARTER_CIRCLE_TABLE)
    pdf = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))))
    return cdf / cdf[-1], x


def spectrum(spec: SpectrumSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n
    if spec.kind == "arithmetic":
        return np.linspace(1.0, 1.0 / n, n)
    if spec.kind == "logarithmic":
        return np.geomspace(1.0, LOG_SPECTRUM_FLOOR, n)
    cdf, x = _quarter_circle_table()
    samples = np.interp(rng.random(n), cdf, x)
    return np.sort(samples)[::-1].copy()


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


def gen_test_matrix(spec: SpectrumSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Dense double-precision A with known singular values (descending)."""
    rng = np.random.default_rng(spec.seed)
    sigma = spectrum(spec, rng)
    u = random_orthogonal(spec.n, rng)
    v = random_orthogonal(spec.n, rng)
    return (u * sigma[None, :]) @ v.T, sigma


def _left(h: Reflector, block: np.ndarray) -> None:
    if h.tau == 0 or block.size == 0:
        return
    w = h.v @ block
    block -= np.outer(h.tau * h.v, w)


def _right(h: Reflector, block: np.ndarray) -> None:
    if h.tau == 0 or block.size == 0:
        return
    w = block @ h.v
    block -= np.outer(w, h.tau * h.v)


def dense_to_band(a: np.ndarray, bw: int) -> np.ndarray:
    """Orthogonally reduce a square matrix to upper-banded form with bandwidth bw.

    Computation runs in the compute precision of ``a``'s dtype and the result
    is rounded back to that dtype.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LengthMismatch(f"expected a square matrix, got shape {a.shape}")
    prec = precision_of(a.dtype)
    work = a.astype(compute_dtype(prec), copy=True)
    n = work.shape[0]
    for j in range(n):
        if j < n - 1:
            h = make_reflector(work[j:, j].copy())
            _left(h, work[j:, j + 1 :])
            work[j, j] = h.beta
            work[j + 1 :, j] = 0
        if j + bw < n - 1:
            h = make_reflector(work[j, j + bw :].copy())
            _right(h, work[j + 1 :, j + bw :])
            work[j, j + bw] = h.beta
            work[j, j + bw + 1 :] = 0
    return work.astype(storage_dtype(prec))


def dense_bidiagonalize(a: np.ndarray) -> BidiagonalResult:
    """Golub-Kahan bidiagonalization by alternating full-length reflectors."""
    b = dense_to_band(a, 1)
    n = b.shape[0]
    e = np.diagonal(b, offset=1).copy() if n > 1 else np.zeros(0, dtype=b.dtype)
    return BidiagonalResult(d=np.diagonal(b).copy(), e=e, meta={"n": n, "engine": "dense"})


# ---------------------------------------------------------------------------
# Bidiagonal singular values
# ---------------------------------------------------------------------------


def _rot(f: float, g: float) -> Tuple[float, float, float]:
    if g == 0.0:
        return 1.0, 0.0, f
    if f == 0.0:
        return 0.0, 1.0, g
    r = math.hypot(f, g)
    return f / r, g / r, r


def _svd2(f: float, g: float, h: float) -> Tuple[float, float]:
    """(smin, smax) of [[f, g], [0, h]] without overflow."""
    fa, ga, ha = abs(f), abs(g), abs(h)
    fhmn, fhmx = min(fa, ha), max(fa, ha)
    if fhmn == 0.0:
        if fhmx == 0.0:
            return 0.0, ga
        big, small = max(fhmx, ga), min(fhmx, ga)
        return 0.0, big * math.sqrt(1.0 + (small / big) ** 2)
    if ga < fhmx:
        as_ = 1.0 + fhmn / fhmx
        at = (fhmx - fhmn) / fhmx
        au = (ga / fhmx) ** 2
        c = 2.0 / (math.sqrt(as_ * as_ + au) + math.sqrt(at * at + au))
        return fhmn * c, fhmx / c
    au = fhmx / ga
    if au == 0.0:
        return (fhmn * fhmx) / ga, ga
    as_ = 1.0 + fhmn / fhmx
    at = (fhmx - fhmn) / fhmx
    c = 1.0 / (math.sqrt(1.0 + (as_ * au) ** 2) + math.sqrt(1.0 + (at * au) ** 2))
    return 2.0 * (fhmn * c) * au, ga / (c + c)


def _zero_shift_sweep(d: List[float], e: List[float], lo: int, hi: int) -> None:
    cs = 1.0
    oldcs = 1.0
    oldsn = 0.0
    for i in range(lo, hi):
        cs, sn, r = _rot(d[i] * cs, e[i])
        if i > lo:
            e[i - 1] = oldsn * r
        oldcs, oldsn, d[i] = _rot(oldcs * r, d[i + 1] * sn)
    h = d[hi] * cs
    d[hi] = h * oldcs
    e[hi - 1] = h * oldsn


def _shifted_sweep(d: List[float], e: List[float], lo: int, hi: int, shift: float) -> None:
    f = (abs(d[lo]) - shift) * (math.copysign(1.0, d[lo]) + shift / d[lo])
    g = e[lo]
    for i in range(lo, hi):
        cosr, sinr, r = _rot(f, g)
        if i > lo:
            e[i - 1] = r
        f = cosr * d[i] + sinr * e[i]
        e[i] = cosr * e[i] - sinr * d[i]
        g = sinr * d[i + 1]
        d[i + 1] = cosr * d[i + 1]
        cosl, sinl, r = _rot(f, g)
        d[i] = r
        f = cosl * e[i] + sinl * d[i + 1]
        d[i + 1] = cosl * d[i + 1] - sinl * e[i]
        if i < hi - 1:
            g = sinl * e[i + 1]
            e[i + 1] = cosl * e[i + 1]
    e[hi - 1] = f


def bidiagonal_svd(r: BidiagonalResult, *, max_sweeps: Optional[int] = None) -> np.ndarray:
    """Singular values of the upper bidiagonal (d, e), descending, in double."""
    d = [float(x) for x in np.asarray(r.d, dtype=np.float64)]
    e = [float(x) for x in np.asarray(r.e, dtype=np.float64)]
    n = len(d)
    if len(e) != max(n - 1, 0):
        raise LengthMismatch(f"d has length {n} but e has length {len(e)}")
    if n == 0:
        return np.zeros(0)
    eps = float(np.finfo(np.float64).eps)
    anorm = max(max(abs(x) for x in d), max((abs(x) for x in e), default=0.0))
    floor = eps * anorm * 1e-3
    cap = max_sweeps if max_sweeps is not None else 30 * n * n

    def negligible(i: int) -> bool:
        return abs(e[i]) <= max(eps * (abs(d[i]) + abs(d[i + 1])), floor)

    sweeps = 0
    hi = n - 1
    while hi > 0:
        if negligible(hi - 1):
            e[hi - 1] = 0.0
            hi -= 1
            continue
        lo = hi - 1
        while lo > 0 and not negligible(lo - 1):
            lo -= 1
        if lo > 0:
            e[lo - 1] = 0.0

        if hi - lo == 1:
            smin, smax = _svd2(d[lo], e[lo], d[hi])
            d[lo], d[hi], e[lo] = smax, smin, 0.0
            continue

        sweeps += 1
        if sweeps > cap:
            raise NoConvergence(f"bidiagonal QR did not converge within {cap} sweeps (n={n})")

        shift, _ = _svd2(d[hi - 1], e[hi - 1], d[hi])
        sll = abs(d[lo])
        if sll == 0.0 or (shift / sll) ** 2 < eps:
            _zero_shift_sweep(d, e, lo, hi)
        else:
            _shifted_sweep(d, e, lo, hi, shift)

    logger.debug("bidiagonal QR converged after %d sweeps (n=%d)", sweeps, n)
    return np.sort(np.abs(np.asarray(d)))[::-1].copy()


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------


def _check_pair(computed: Sequence[float], truth: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    c = np.asarray(computed, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if c.shape != t.shape:
        raise LengthMismatch(f"computed has shape {c.shape}, truth has shape {t.shape}")
    return c, t


def rel_error(computed: Sequence[float], truth: Sequence[float]) -> float:
    """max_i |c_i - t_i| / t_i over t_i above 1e-12 * max(t)."""
    c, t = _check_pair(computed, truth)
    if t.size == 0:
        return 0.0
    mask = t > REL_ERROR_CUTOFF * float(np.max(t))
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(c[mask] - t[mask]) / t[mask]))


def scaled_error(computed: Sequence[float], truth: Sequence[float]) -> float:
    """max_i |c_i - t_i| / max(t)."""
    c, t = _check_pair(computed, truth)
    if t.size == 0:
        return 0.0
    top = float(np.max(np.abs(t)))
    if top == 0.0:
        return float(np.max(np.abs(c)))
    return float(np.max(np.abs(c - t)) / top)


# ---------------------------------------------------------------------------
# Dense mirror of a single task
# ---------------------------------------------------------------------------


def mirror_task(dense: np.ndarray, t: BulgeTask, config: ReductionConfig) -> None:
    """Apply task ``t`` to a dense matrix in place, using the band kernel's primitives."""
    n = dense.shape[0]
    cdt = compute_dtype(config.precision)
    k, col = t.row, t.col
    last = col + t.length - 1

    block = dense[k : last + 1, col : last + 1].astype(cdt)
    h = make_reflector(block[0, :])
    apply_right(h, block[1:, :], chunk_width=config.chunk_width)
    block[0, 0] = h.beta
    block[0, 1:] = 0
    dense[k : last + 1, col : last + 1] = block

    hi = min(n - 1, last + t.cbw)
    block = dense[col : last + 1, col : hi + 1].astype(cdt)
    h = make_reflector(block[:, 0])
    apply_left(h, block[:, 1:], chunk_width=config.chunk_width)
    block[0, 0] = h.beta
    block[1:, 0] = 0
    dense[col : last + 1, col : hi + 1] = block


# ---------------------------------------------------------------------------
# Accuracy protocol
# ---------------------------------------------------------------------------


def accuracy_trial(
    *,
    precision: str,
    kind: str,
    n: int,
    bw: int,
    tw: int,
    trial: int,
    seed: int = 0,
    chunk_width: int = 32,
) -> Dict[str, object]:
    """Generate, band-reduce, bulge-chase and solve one instance; return a report row.

    Stages up to the bidiagonal run in ``precision``; the final solve is double.
    """
    spec = SpectrumSpec(kind=kind, n=n, seed=seed * 100_003 + trial * 7 + SPECTRA.index(kind))
    a, sigma = gen_test_matrix(spec)
    banded = dense_to_band(a.astype(storage_dtype(precision)), bw)
    config = ReductionConfig(n=n, bw=bw, tw=tw, chunk_width=chunk_width, precision=precision)
    band = from_dense(banded, bw, tw, precision=precision)
    result = run_reduction_serial(band, config)
    values = bidiagonal_svd(result)
    return {
        "precision": precision,
        "spectrum": kind,
        "n": n,
        "bw": bw,
        "tw": tw,
        "trial": trial,
        "rel_error": rel_error(values, sigma),
        "scaled_error": scaled_error(values, sigma),
    }


__all__ = [
    "SpectrumSpec",
    "SPECTRA",
    "BidiagonalResult",
    "gen_test_matrix",
    "random_orthogonal",
    "dense_to_band",
    "dense_bidiagonalize",
    "bidiagonal_svd",
    "rel_error",
    "scaled_error",
    "mirror_task",
    "accuracy_trial",
]
