"""Training-window construction: per-day high-activity windows and global subsampling.

A window's score is the absolute mid-price change between its first and last
tick. Per day, windows are picked greedily by descending score with overlap
exclusion (ties broken by earliest start), then a uniform random subsample of
the pooled candidates forms the training set.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, asdict

import numpy as np

from lobrl.book import PRICE_UNITS_PER_DOLLAR, DataError, TradingDay

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_LENGTH = 10_000
DEFAULT_PER_DAY = 5
DEFAULT_TOTAL = 25


@dataclass(frozen=True)
class Window:
    day_id: str
    start_tick: int
    length: int
    score: float  # dollars, |mid(end) - mid(start)|

    def __post_init__(self):
        if self.start_tick < 0:
            raise ValueError("start_tick must be >= 0")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.score < 0:
            raise ValueError("score must be >= 0")

    @property
    def end_tick(self) -> int:
        return self.start_tick + self.length

    def overlaps(self, other: "Window") -> bool:
        return (
            self.day_id == other.day_id
            and self.start_tick < other.end_tick
            and other.start_tick < self.end_tick
        )


def score_day_windows(
    day: TradingDay, length: int = DEFAULT_WINDOW_LENGTH, per_day: int = DEFAULT_PER_DAY
) -> list[Window]:
    """Top `per_day` pairwise-disjoint windows by |endpoint mid difference|.

    Greedy by descending score, earliest start on ties. Returns fewer windows
    (with a warning) when the day cannot fit `per_day` disjoint ones.
    """
    n = len(day)
    if n < length:
        raise DataError(
            f"day {day.day_id} has {n} ticks, shorter than window length {length}"
        )
    if per_day < 1:
        raise ValueError("per_day must be >= 1")
    # 2*mid in integer units: exact arithmetic, no half-tick floats
    m2 = day.best_asks + day.best_bids
    scores2 = np.abs(m2[length - 1 :] - m2[: n - length + 1])
    starts = np.arange(scores2.shape[0])
    order = np.lexsort((starts, -scores2))

    chosen: list[Window] = []
    occupied: list[tuple[int, int]] = []
    for idx in order:
        s = int(starts[idx])
        e = s + length
        if any(s < oe and os_ < e for os_, oe in occupied):
            continue
        chosen.append(
            Window(
                day_id=day.day_id,
                start_tick=s,
                length=length,
                score=float(scores2[idx]) / (2 * PRICE_UNITS_PER_DOLLAR),
            )
        )
        occupied.append((s, e))
        if len(chosen) == per_day:
            break
    if len(chosen) < per_day:
        logger.warning(
            "day %s: only %d of %d disjoint windows fit",
            day.day_id,
            len(chosen),
            per_day,
        )
    chosen.sort(key=lambda w: (-w.score, w.start_tick))
    return chosen


def select_training_windows(
    all_windows: list[Window], total: int = DEFAULT_TOTAL, seed: int = 0
) -> list[Window]:
    """Uniform subsample without replacement, deterministic given the seed.

    The selection keeps the original manifest order of the surviving windows.
    """
    if total > len(all_windows):
        raise ValueError(
            f"requested {total} windows but only {len(all_windows)} are available"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(all_windows), size=total, replace=False)
    idx.sort()
    return [all_windows[i] for i in idx]


def check_windows_disjoint(windows: list[Window]) -> bool:
    """Independent validation pass: no two windows of the same day overlap."""
    by_day: dict[str, list[Window]] = {}
    for w in windows:
        by_day.setdefault(w.day_id, []).append(w)
    for ws in by_day.values():
        ws = sorted(ws, key=lambda w: w.start_tick)
        for a, b in zip(ws, ws[1:]):
            if b.start_tick < a.end_tick:
                return False
    return True


def write_manifest(
    windows: list[Window], path: str | os.PathLike, meta: dict | None = None
) -> None:
    doc = {"meta": meta or {}, "windows": [asdict(w) for w in windows]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str | os.PathLike) -> tuple[list[Window], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    windows = [Window(**w) for w in doc["windows"]]
    return windows, doc.get("meta", {})
