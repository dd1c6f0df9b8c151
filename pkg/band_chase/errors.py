"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto exit codes (see ``band_chase.cli``): parse and
configuration problems exit 1, broken numerical invariants exit 2.
"""

from typing import Optional


class BandChaseError(Exception):
    """Base class for every error raised by band_chase."""


class BadShape(BandChaseError):
    pass


class NotBanded(BandChaseError):
    def __init__(self, row: int, col: int, value: float, bw: int):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(
            f"entry ({row}, {col}) = {value!r} lies outside the declared upper band bw={bw}"
        )


class NotBidiagonal(BandChaseError):
    """Residual mass found off the diagonal/superdiagonal."""

    def __init__(self, row: int, col: int, magnitude: float, limit: float):
        self.row = row
        self.col = col
        self.magnitude = magnitude
        self.limit = limit
        super().__init__(
            f"worst off-bidiagonal entry at ({row}, {col}) has |a| = {magnitude:.3e} > {limit:.3e}"
        )


class LengthMismatch(BandChaseError):
    pass


class BadConfig(BandChaseError):
    pass


class BadSpec(BandChaseError):
    pass


class FootprintOverflow(BandChaseError):
    """A task tried to touch a cell outside the band-plus-scratch storage."""


class OverlapError(BandChaseError):
    """Two tasks of the same round wrote the same storage cell (debug tracking)."""


class NoConvergence(BandChaseError):
    pass


class FormatError(BandChaseError):
    def __init__(self, message: str, *, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


__all__ = [
    "BandChaseError",
    "BadShape",
    "NotBanded",
    "NotBidiagonal",
    "LengthMismatch",
    "BadConfig",
    "BadSpec",
    "FootprintOverflow",
    "OverlapError",
    "NoConvergence",
    "FormatError",
]
