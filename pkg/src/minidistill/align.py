"""Span-exact alignment between two tokenizations of the same text.

A student token and a teacher token are aligned iff their byte spans are
identical. Because spans on each side are disjoint and sorted, matches are
found in one merged left-to-right sweep (two pointers advanced by span
end), and the resulting pair list is automatically monotone and one-to-one
in both indices. Identical tokenizers therefore align every position.

The supervised window is the intersection of "position < N" with the
aligned set; unaligned positions carry no loss and no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tokenizers import TokenSpan


class TextMismatchError(ValueError):
    """The two span lists do not tile the same text length."""


class ConfigError(ValueError):
    """Invalid window or selection parameter."""


@dataclass
class AlignmentMap:
    """Monotone (student index, teacher index) pairs plus coverage.

    coverage is the fraction of student tokens that found a span-identical
    teacher token (1.0 when the student side is empty).
    """

    pairs: list[tuple[int, int]]
    student_len: int
    teacher_len: int
    coverage: float = field(init=False)

    def __post_init__(self):
        self.coverage = (
            1.0 if self.student_len == 0 else len(self.pairs) / self.student_len
        )

    def student_indices(self) -> set[int]:
        return {i for i, _ in self.pairs}

    def teacher_index_of(self) -> dict[int, int]:
        return {i: j for i, j in self.pairs}


def _tiled_length(spans: list[TokenSpan]) -> int:
    return spans[-1].end if spans else 0


def align_tokenizations(
    student_spans: list[TokenSpan], teacher_spans: list[TokenSpan]
) -> AlignmentMap:
    """Greedy single-pass exact-span matching.

    Emits a pair whenever the spans at the two cursors coincide exactly;
    otherwise advances whichever cursor ends earlier. Raises
    TextMismatchError if the tilings cover different total lengths.
    """
    if _tiled_length(student_spans) != _tiled_length(teacher_spans):
        raise TextMismatchError(
            f"span lists tile different lengths: "
            f"{_tiled_length(student_spans)} vs {_tiled_length(teacher_spans)}"
        )
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < len(student_spans) and j < len(teacher_spans):
        s, t = student_spans[i], teacher_spans[j]
        if s.start == t.start and s.end == t.end:
            pairs.append((i, j))
            i += 1
            j += 1
        elif (s.end, s.start) <= (t.end, t.start):
            i += 1
        else:
            j += 1
    return AlignmentMap(pairs, len(student_spans), len(teacher_spans))


def project_window_mask(alignment: AlignmentMap, n: int, rollout_len: int) -> np.ndarray:
    """Boolean mask over student response positions: aligned AND before n.

    Position indices are 0-based, so ``n`` keeps positions 0..n-1. The mask
    has exactly ``rollout_len`` entries.
    """
    if n < 1:
        raise ConfigError(f"window cutoff must be >= 1, got {n}")
    mask = np.zeros(rollout_len, dtype=bool)
    for i in alignment.student_indices():
        if i < n and i < rollout_len:
            mask[i] = True
    return mask
