"""Column-major band storage for upper-banded square matrices.

Layout follows the LAPACK general-band convention::

    data[ku + i - j, j] = A[i, j]      with  ku = bw + tw,  kl = tw

so storage row ``ku`` is the diagonal, the ``tw`` rows above the band hold
row fill created while chasing, and the ``tw`` rows below the diagonal hold
the triangular bulge fill. Total height is ``bw + 2*tw + 1``. Columns are
contiguous (Fortran order), one original matrix column per storage column.

Conversions copy values and never compute, so ``to_dense(from_dense(D))``
is bit-exact.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from band_chase.errors import (
    BadConfig,
    BadShape,
    FootprintOverflow,
    FormatError,
    LengthMismatch,
    NotBanded,
    NotBidiagonal,
)


_STORAGE_DTYPES = {"f16": np.float16, "f32": np.float32, "f64": np.float64}
# Half precision is computed in single and rounded on store.
_COMPUTE_DTYPES = {"f16": np.float32, "f32": np.float32, "f64": np.float64}


def storage_dtype(precision: str) -> np.dtype:
    try:
        return np.dtype(_STORAGE_DTYPES[precision])
    except KeyError:
        raise BadConfig(f"unknown precision {precision!r}; expected f16, f32 or f64")


def compute_dtype(precision: str) -> np.dtype:
    storage_dtype(precision)
    return np.dtype(_COMPUTE_DTYPES[precision])


def machine_eps(precision: str) -> float:
    """Unit roundoff of the *storage* precision."""
    return float(np.finfo(storage_dtype(precision)).eps)


def precision_of(dtype: np.dtype) -> str:
    dt = np.dtype(dtype)
    if dt == np.float16:
        return "f16"
    if dt == np.float32:
        return "f32"
    return "f64"


@dataclass
class BidiagonalResult:
    d: np.ndarray
    e: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.d = np.asarray(self.d)
        self.e = np.asarray(self.e)
        n = self.d.shape[0]
        if self.e.shape[0] != max(n - 1, 0):
            raise LengthMismatch(
                f"superdiagonal has length {self.e.shape[0]}, expected {max(n - 1, 0)}"
            )

    @property
    def n(self) -> int:
        return int(self.d.shape[0])

    def to_dense(self) -> np.ndarray:
        out = np.diag(self.d.astype(np.float64))
        if self.n > 1:
            out += np.diag(self.e.astype(np.float64), 1)
        return out


@dataclass
class BandedMatrix:
    n: int
    bw: int
    tw_scratch: int
    precision: str
    data: np.ndarray

    def __post_init__(self) -> None:
        # Dense blocks are strided views of the column-major buffer.
        self.data = np.asfortranarray(self.data)

    @property
    def ku(self) -> int:
        return self.bw + self.tw_scratch

    @property
    def kl(self) -> int:
        return self.tw_scratch

    @property
    def height(self) -> int:
        return self.bw + 2 * self.tw_scratch + 1

    @property
    def nbytes(self) -> int:
        return int(self.data.nbytes)

    def storage_row(self, i: int, j: int) -> int:
        return self.ku + i - j

    def is_representable(self, i: int, j: int) -> bool:
        return 0 <= i < self.n and 0 <= j < self.n and -self.kl <= j - i <= self.ku

    def get(self, i: int, j: int) -> float:
        if not self.is_representable(i, j):
            return 0.0
        return float(self.data[self.ku + i - j, j])

    def max_abs(self) -> float:
        if self.data.size == 0:
            return 0.0
        return float(np.max(np.abs(self.data.astype(np.float64))))

    def copy(self) -> "BandedMatrix":
        return BandedMatrix(
            n=self.n,
            bw=self.bw,
            tw_scratch=self.tw_scratch,
            precision=self.precision,
            data=self.data.copy(order="F"),
        )

    def _check_block(self, rows: Tuple[int, int], cols: Tuple[int, int]) -> None:
        r0, r1 = rows
        c0, c1 = cols
        if r0 < 0 or c0 < 0 or r1 >= self.n or c1 >= self.n or r1 < r0 or c1 < c0:
            raise FootprintOverflow(
                f"block rows [{r0}, {r1}] cols [{c0}, {c1}] outside a {self.n}x{self.n} matrix"
            )
        lo = c0 - r1
        hi = c1 - r0
        if lo < -self.kl or hi > self.ku:
            raise FootprintOverflow(
                f"block rows [{r0}, {r1}] cols [{c0}, {c1}] spans offsets [{lo}, {hi}] "
                f"outside storage [-{self.kl}, {self.ku}]"
            )

    def block_view(self, rows: Tuple[int, int], cols: Tuple[int, int]) -> np.ndarray:
        """Writable view of A[rows, cols] (inclusive bounds) into the band buffer.

        A[i, j] sits at flat offset ku + i + j * (height - 1) of the
        column-major buffer, so a dense block is a plain strided view.
        """
        self._check_block(rows, cols)
        r0, r1 = rows
        c0, c1 = cols
        isz = self.data.itemsize
        return np.ndarray(
            shape=(r1 - r0 + 1, c1 - c0 + 1),
            dtype=self.data.dtype,
            buffer=self.data.reshape(-1, order="F"),
            offset=(self.ku + r0 + c0 * (self.height - 1)) * isz,
            strides=(isz, (self.height - 1) * isz),
        )

    def gather(self, rows: Tuple[int, int], cols: Tuple[int, int]) -> np.ndarray:
        """Copy the dense block A[rows, cols] (inclusive bounds) in compute precision."""
        return self.block_view(rows, cols).astype(compute_dtype(self.precision))

    def scatter(self, block: np.ndarray, rows: Tuple[int, int], cols: Tuple[int, int]) -> None:
        """Store a dense block back, rounding to storage precision."""
        self.block_view(rows, cols)[...] = block


class BandWorkspace:
    """Band buffer padded with ``pad`` zero columns past the last column.

    Tasks at the trailing edge then run at full size: their phantom rows
    and columns only ever touch exact zeros, which stay zero. ``commit``
    copies the first n columns back into the source matrix.
    """

    def __init__(self, band: BandedMatrix, pad: int):
        self.band = band
        self.n = band.n
        self.ku = band.ku
        self.height = band.height
        self.compute = compute_dtype(band.precision)
        self.flat = np.zeros(self.height * (band.n + pad), dtype=band.data.dtype)
        self.data = self.flat.reshape((self.height, band.n + pad), order="F")
        self.data[:, : band.n] = band.data
        # Storage cells of rows outside 0..n-1 take part in edge blocks.
        for j in range(min(band.n, self.ku)):
            self.data[: self.ku - j, j] = 0
        for j in range(max(0, band.n - band.kl), band.n):
            self.data[band.n + self.ku - j :, j] = 0

    def offset(self, i: int, j: int) -> int:
        """Flat index of A[i, j]."""
        return self.ku + i + j * (self.height - 1)

    def blocks(
        self, row0: int, col0: int, shape: Tuple[int, int], count: int, step: int
    ) -> np.ndarray:
        """``count`` dense views of ``shape``; block g starts at (row0 + g*step, col0 + g*step)."""
        isz = self.flat.itemsize
        return np.ndarray(
            shape=(count, shape[0], shape[1]),
            dtype=self.flat.dtype,
            buffer=self.flat,
            offset=self.offset(row0, col0) * isz,
            strides=(step * self.height * isz, isz, (self.height - 1) * isz),
        )

    def commit(self) -> BandedMatrix:
        self.band.data[...] = self.data[:, : self.n]
        return self.band


def zeros(n: int, bw: int, tw: int, precision: str = "f64") -> BandedMatrix:
    if n < 1:
        raise BadShape(f"matrix order must be positive, got {n}")
    if bw < 1 or tw < 1:
        raise BadConfig(f"need bw >= 1 and tw >= 1, got bw={bw}, tw={tw}")
    height = bw + 2 * tw + 1
    data = np.zeros((height, n), dtype=storage_dtype(precision), order="F")
    return BandedMatrix(n=n, bw=bw, tw_scratch=tw, precision=precision, data=data)


def from_dense(
    dense: np.ndarray, bw: int, tw: int, *, precision: Optional[str] = None
) -> BandedMatrix:
    """Pack an upper-banded dense matrix into band storage with ``tw`` scratch."""
    dense = np.asarray(dense)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise BadShape(f"expected a square matrix, got shape {dense.shape}")
    prec = precision or precision_of(dense.dtype)
    n = dense.shape[0]
    out = zeros(n, bw, tw, prec)

    offsets = np.subtract.outer(np.arange(n), np.arange(n))  # i - j
    outside = ((-offsets) > bw) | (offsets > 0)
    bad = np.argwhere(outside & (dense != 0))
    if bad.size:
        i, j = (int(x) for x in bad[0])
        raise NotBanded(i, j, float(dense[i, j]), bw)

    for d in range(bw + 1):
        # d-th superdiagonal lives in storage row ku - d, columns d..n-1
        if d >= n:
            break
        out.data[out.ku - d, d:] = np.diagonal(dense, offset=d).astype(out.data.dtype)
    return out


def to_dense(b: BandedMatrix) -> np.ndarray:
    """Expand to an n x n array in storage precision (unrepresentable entries are zero)."""
    n = b.n
    out = np.zeros((n, n), dtype=b.data.dtype)
    cols = np.arange(n)
    for s in range(b.height):
        rows = cols + s - b.ku
        mask = (rows >= 0) & (rows < n)
        out[rows[mask], cols[mask]] = b.data[s, cols[mask]]
    return out


def _offset_grid(b: BandedMatrix) -> Tuple[np.ndarray, np.ndarray]:
    s = np.arange(b.height)[:, None]
    j = np.arange(b.n)[None, :]
    i = j + s - b.ku
    valid = (i >= 0) & (i < b.n)
    return j - i, valid


def effective_bandwidth(b: BandedMatrix) -> Tuple[int, int]:
    """(lower, upper) extent of the nonzeros actually present."""
    offset, valid = _offset_grid(b)
    nz = valid & (b.data != 0)
    if not nz.any():
        return 0, 0
    present = offset[nz]
    return int(max(0, -present.min())), int(max(0, present.max()))


def extract_bidiagonal(b: BandedMatrix, tol: float) -> BidiagonalResult:
    """Copy out (d, e) after checking nothing else exceeds ``tol * max_abs(b)``."""
    if tol < 0:
        raise BadConfig(f"tolerance must be nonnegative, got {tol}")
    offset, valid = _offset_grid(b)
    off_mask = valid & (offset != 0) & (offset != 1)
    limit = tol * b.max_abs()
    if off_mask.any():
        mags = np.where(off_mask, np.abs(b.data.astype(np.float64)), 0.0)
        s, j = np.unravel_index(int(np.argmax(mags)), mags.shape)
        worst = float(mags[s, j])
        if worst > limit:
            raise NotBidiagonal(int(j + s - b.ku), int(j), worst, limit)
    d = b.data[b.ku, :].copy()
    e = b.data[b.ku - 1, 1:].copy() if b.n > 1 else np.zeros(0, dtype=b.data.dtype)
    return BidiagonalResult(d=d, e=e, meta={"n": b.n, "bw": b.bw, "precision": b.precision})


def random_banded(
    n: int,
    bw: int,
    tw: int,
    *,
    precision: str = "f64",
    rng: Optional[np.random.Generator] = None,
) -> BandedMatrix:
    """Standard-normal entries on the diagonal and ``bw`` superdiagonals."""
    rng = rng or np.random.default_rng(0)
    out = zeros(n, bw, tw, precision)
    for d in range(min(bw, n - 1) + 1):
        out.data[out.ku - d, d:] = rng.standard_normal(n - d).astype(out.data.dtype)
    return out


# ---------------------------------------------------------------------------
# Text formats
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_bnd(b: BandedMatrix, path: Union[str, Path]) -> None:
    """Header ``n bw tw precision`` then one storage column per line."""
    p = Path(path)
    with p.open("w", encoding="utf-8") as f:
        f.write(f"{b.n} {b.bw} {b.tw_scratch} {b.precision}\n")
        for j in range(b.n):
            f.write(" ".join(_fmt(x) for x in b.data[:, j]) + "\n")


def _parse_floats(parts, *, path: str, line_no: int):
    try:
        return [float(x) for x in parts]
    except ValueError:
        raise FormatError("non-numeric value", path=path, line=line_no)


def read_bnd(path: Union[str, Path]) -> BandedMatrix:
    p = str(path)
    with open(p, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines()]
    if not lines:
        raise FormatError("empty file", path=p, line=1)
    header = lines[0].split()
    if len(header) != 4:
        raise FormatError("header must be 'n bw tw precision'", path=p, line=1)
    try:
        n, bw, tw = (int(x) for x in header[:3])
    except ValueError:
        raise FormatError("header sizes must be integers", path=p, line=1)
    precision = header[3].lower()
    if precision not in _STORAGE_DTYPES:
        raise FormatError(f"unknown precision {header[3]!r}", path=p, line=1)
    if n < 1 or bw < 1 or tw < 1:
        raise FormatError("n, bw and tw must be positive", path=p, line=1)
    out = zeros(n, bw, tw, precision)
    body = lines[1:]
    if len(body) < n:
        raise FormatError(f"expected {n} column lines, found {len(body)}", path=p, line=len(lines) + 1)
    for j in range(n):
        line_no = j + 2
        values = _parse_floats(body[j].split(), path=p, line_no=line_no)
        if len(values) != out.height:
            raise FormatError(
                f"expected {out.height} values, found {len(values)}", path=p, line=line_no
            )
        out.data[:, j] = np.asarray(values, dtype=out.data.dtype)
    return out


def read_dense(path: Union[str, Path], *, dtype=np.float64) -> np.ndarray:
    """Dense ``.mtx``-style text: ``n n`` header, then n rows of n values."""
    p = str(path)
    with open(p, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise FormatError("empty file", path=p, line=1)
    header = lines[0].split()
    if len(header) != 2:
        raise FormatError("header must be 'n n'", path=p, line=1)
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise FormatError("header sizes must be integers", path=p, line=1)
    if rows != cols or rows < 1:
        raise FormatError(f"expected a square size, got {rows} x {cols}", path=p, line=1)
    if len(lines) - 1 < rows:
        raise FormatError(f"expected {rows} rows", path=p, line=len(lines) + 1)
    out = np.zeros((rows, rows), dtype=dtype)
    for i in range(rows):
        values = _parse_floats(lines[i + 1].split(), path=p, line_no=i + 2)
        if len(values) != rows:
            raise FormatError(f"expected {rows} values", path=p, line=i + 2)
        out[i, :] = values
    return out


def write_dense(a: np.ndarray, path: Union[str, Path]) -> None:
    a = np.asarray(a)
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(f"{a.shape[0]} {a.shape[1]}\n")
        for row in a:
            f.write(" ".join(_fmt(x) for x in row) + "\n")


__all__ = [
    "BandedMatrix",
    "BidiagonalResult",
    "BandWorkspace",
    "from_dense",
    "to_dense",
    "extract_bidiagonal",
    "effective_bandwidth",
    "random_banded",
    "zeros",
    "read_bnd",
    "write_bnd",
    "read_dense",
    "write_dense",
    "storage_dtype",
    "compute_dtype",
    "machine_eps",
]
