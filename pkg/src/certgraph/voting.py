"""Vote counting, majority prediction and the closed-form certified size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VoteTally:
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("vote counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def S(self) -> int:
        return sum(self.counts)

    @property
    def num_classes(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class Certificate:
    winner: int
    runner_up: int
    certified_size: int
    mode: str = ""
    task: str = ""


def tally(predictions, num_classes: int) -> VoteTally:
    preds = np.asarray(list(predictions), dtype=np.int64)
    if len(preds) and (preds.min() < 0 or preds.max() >= num_classes):
        bad = int(preds[(preds < 0) | (preds >= num_classes)][0])
        raise ValueError(f"prediction {bad} outside [0, {num_classes})")
    return VoteTally(np.bincount(preds, minlength=num_classes).tolist())


def winner_and_runner_up(t: VoteTally) -> tuple[int, int]:
    """Most- and second-most-voted classes; ties go to the smaller index."""
    if t.num_classes < 2:
        raise ValueError("need at least two classes")
    order = sorted(range(t.num_classes), key=lambda c: (-t.counts[c], c))
    return order[0], order[1]


def certified_size(t: VoteTally, mode: str = "", task: str = "") -> Certificate:
    """``P = floor((n_a - n_b - [a > b]) / 2)``, clamped at 0."""
    a, b = winner_and_runner_up(t)
    margin = t.counts[a] - t.counts[b] - int(a > b)
    return Certificate(a, b, max(0, margin // 2), mode, task)


ORACLE_MAX_S = 12


def _compositions(total: int, caps):
    """All vectors ``x`` with ``0 <= x[c] <= caps[c]`` summing to ``total``."""
    if not caps:
        if total == 0:
            yield ()
        return
    for first in range(min(total, caps[0]) + 1):
        for rest in _compositions(total - first, caps[1:]):
            yield (first,) + rest


def vote_flip_oracle(t: VoteTally, k: int) -> str:
    """Brute force: can re-casting at most ``k`` votes move the winner?

    Voters of one class are interchangeable, so a re-cast of ``r`` votes is a
    choice of how many votes leave each class and how many arrive at each
    class. Every such pair is enumerated for ``r = 1..k``. Returns
    ``"stable"`` or ``"breakable"``.
    """
    S = t.S
    if S > ORACLE_MAX_S:
        raise ValueError(f"oracle limited to S <= {ORACLE_MAX_S}, got {S}")
    if k < 0 or k > S:
        raise ValueError("k must lie in [0, S]")
    C = t.num_classes
    winner, _ = winner_and_runner_up(t)
    for r in range(1, k + 1):
        for out in _compositions(r, list(t.counts)):
            for into in _compositions(r, [r] * C):
                counts = [t.counts[c] - out[c] + into[c] for c in range(C)]
                if winner_and_runner_up(VoteTally(counts))[0] != winner:
                    return "breakable"
    return "stable"
