"""Integer counts in [0, 999] and their per-place supervision labels.

A count is supervised at three places. The hundreds-place label is the
midpoint of the hundred band containing the count (123 -> 150), the
tens-place label is the midpoint of its ten band (123 -> 125), and the
units-place label is the count itself. Candidate sets for staged decoding
enumerate the ten labels of one place, conditioned on the digits already
fixed.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

from .errors import DigitOutOfRange, MissingPriorDigit, OutOfRange

COUNT_MAX = 999


class StageId(enum.IntEnum):
    """Decoding stages, ordered coarse to fine."""

    HUNDREDS = 0
    TENS = 1
    UNITS = 2


@dataclass(frozen=True)
class DigitLabels:
    """Per-place supervision labels for one count."""

    hundreds_label: int
    tens_label: int
    units_label: int

    def for_stage(self, stage: StageId) -> int:
        return (self.hundreds_label, self.tens_label, self.units_label)[stage]


@dataclass(frozen=True)
class CandidateSet:
    """The ten candidate labels matched at one stage."""

    stage: StageId
    labels: tuple[int, ...]


def _check_count(count: int) -> int:
    count = int(count)
    if not 0 <= count <= COUNT_MAX:
        raise OutOfRange(f"count {count} outside [0, {COUNT_MAX}]")
    return count


def _check_digit(d: int, name: str) -> int:
    d = int(d)
    if not 0 <= d <= 9:
        raise DigitOutOfRange(f"{name} digit {d} outside [0, 9]")
    return d


def encode_places(count: int) -> DigitLabels:
    """Map a count to its (hundreds, tens, units) place labels."""
    count = _check_count(count)
    return DigitLabels(
        hundreds_label=100 * (count // 100) + 50,
        tens_label=10 * (count // 10) + 5,
        units_label=count,
    )


@functools.lru_cache(maxsize=None)
def stage_candidates(
    stage: StageId, h_digit: int | None = None, t_digit: int | None = None
) -> CandidateSet:
    """Candidate labels for one stage, conditioned on earlier digits.

    HUNDREDS needs no prior digits, TENS needs the hundreds digit, UNITS
    needs both. Labels are strictly increasing with step 100, 10, or 1.
    Results are memoized; there are only 111 distinct candidate sets.
    """
    stage = StageId(stage)
    if stage == StageId.HUNDREDS:
        return CandidateSet(stage, tuple(100 * j + 50 for j in range(10)))
    if h_digit is None:
        raise MissingPriorDigit(f"{stage.name} candidates need the hundreds digit")
    h = _check_digit(h_digit, "hundreds")
    if stage == StageId.TENS:
        return CandidateSet(stage, tuple(100 * h + 10 * j + 5 for j in range(10)))
    if t_digit is None:
        raise MissingPriorDigit("UNITS candidates need the tens digit")
    t = _check_digit(t_digit, "tens")
    return CandidateSet(stage, tuple(100 * h + 10 * t + j for j in range(10)))


def compose(h: int, t: int, u: int) -> int:
    """Assemble a count from its digits."""
    return (
        100 * _check_digit(h, "hundreds")
        + 10 * _check_digit(t, "tens")
        + _check_digit(u, "units")
    )


def decompose(count: int) -> tuple[int, int, int]:
    """Split a count into (hundreds, tens, units) digits."""
    count = _check_count(count)
    return count // 100, (count // 10) % 10, count % 10
