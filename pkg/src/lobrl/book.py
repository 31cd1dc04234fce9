"""Depth-10 order book ingestion: LOBSTER-style CSV parsing and basic observables.

Prices are kept as integers in 1e-4 dollar units (the LOBSTER convention) to
avoid float drift; conversion to dollars happens only at reporting boundaries.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PRICE_UNITS_PER_DOLLAR = 10_000


class DataError(Exception):
    """Base class for market data problems."""


class ParseError(DataError):
    """Malformed input row or file."""


class DataIntegrityError(DataError):
    """Structurally valid input that violates order book invariants."""


@dataclass(frozen=True)
class InstrumentSpec:
    """Static instrument properties: tick size in dollars and book depth."""

    tick_size: float = 0.01
    depth: int = 10

    def __post_init__(self):
        if self.tick_size <= 0:
            raise ValueError(f"tick_size must be positive, got {self.tick_size}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")

    @property
    def tick_units(self) -> int:
        """Tick size in integer 1e-4 dollar units."""
        return int(round(self.tick_size * PRICE_UNITS_PER_DOLLAR))


@dataclass(frozen=True)
class BookLevel:
    price: int  # 1e-4 dollar units
    volume: int  # shares

    def __post_init__(self):
        if self.price <= 0:
            raise DataIntegrityError(f"non-positive price {self.price}")
        if self.volume < 0:
            raise DataIntegrityError(f"negative volume {self.volume}")


@dataclass(frozen=True)
class BookSnapshot:
    """One tick-time LOB state: ask levels ascending, bid levels descending."""

    asks: tuple[BookLevel, ...]
    bids: tuple[BookLevel, ...]
    tick_index: int = 0
    wall_time: float = 0.0

    def __post_init__(self):
        if len(self.asks) != len(self.bids):
            raise DataIntegrityError(
                f"side depth mismatch: {len(self.asks)} asks vs {len(self.bids)} bids"
            )
        if not self.asks:
            raise DataIntegrityError("empty book")
        ask_prices = [l.price for l in self.asks]
        bid_prices = [l.price for l in self.bids]
        if any(nxt <= prev for prev, nxt in zip(ask_prices, ask_prices[1:])):
            raise DataIntegrityError("ask prices not strictly ascending")
        if any(nxt >= prev for prev, nxt in zip(bid_prices, bid_prices[1:])):
            raise DataIntegrityError("bid prices not strictly descending")
        if self.best_ask.price <= self.best_bid.price:
            raise DataIntegrityError(
                f"crossed or locked book: ask {self.best_ask.price} <= bid {self.best_bid.price}"
            )
        if self.tick_index < 0:
            raise DataIntegrityError(f"negative tick_index {self.tick_index}")

    @property
    def best_ask(self) -> BookLevel:
        return self.asks[0]

    @property
    def best_bid(self) -> BookLevel:
        return self.bids[0]

    @property
    def depth(self) -> int:
        return len(self.asks)


def mid_price(s: BookSnapshot) -> float:
    """Mid-price in dollars: average of best ask and best bid."""
    return (s.best_ask.price + s.best_bid.price) / (2 * PRICE_UNITS_PER_DOLLAR)


def spread(s: BookSnapshot, spec: InstrumentSpec = InstrumentSpec()) -> int:
    """Bid-ask spread in integer ticks."""
    diff = s.best_ask.price - s.best_bid.price
    if diff % spec.tick_units != 0:
        raise DataIntegrityError(
            f"spread {diff} units is not a multiple of the tick size {spec.tick_units}"
        )
    return diff // spec.tick_units


def parse_orderbook_row(
    line: str, spec: InstrumentSpec = InstrumentSpec(), line_no: int | None = None
) -> BookSnapshot:
    """Parse one LOBSTER orderbook CSV row into a snapshot.

    Column layout: (ask_price_1, ask_size_1, bid_price_1, bid_size_1, ...,
    ask_price_depth, ..., bid_size_depth), prices in 1e-4 dollars.
    """
    where = "" if line_no is None else f" at line {line_no}"
    fields = line.strip().split(",")
    if len(fields) != 4 * spec.depth:
        raise ParseError(
            f"expected {4 * spec.depth} fields, got {len(fields)}{where}"
        )
    try:
        values = [int(f) for f in fields]
    except ValueError as exc:
        raise ParseError(f"non-integer field{where}: {exc}") from None
    asks = tuple(BookLevel(values[4 * i], values[4 * i + 1]) for i in range(spec.depth))
    bids = tuple(
        BookLevel(values[4 * i + 2], values[4 * i + 3]) for i in range(spec.depth)
    )
    return BookSnapshot(asks=asks, bids=bids)


def serialize_row(s: BookSnapshot) -> str:
    """Inverse of parse_orderbook_row (without trailing newline)."""
    fields = []
    for a, b in zip(s.asks, s.bids):
        fields.extend((a.price, a.volume, b.price, b.volume))
    return ",".join(str(v) for v in fields)


@dataclass(frozen=True)
class TradingDay:
    """Immutable, array-backed sequence of book snapshots for one day.

    All price arrays are int64 in 1e-4 dollar units with shape (n_ticks, depth).
    """

    day_id: str
    ask_prices: np.ndarray
    ask_volumes: np.ndarray
    bid_prices: np.ndarray
    bid_volumes: np.ndarray
    wall_times: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        arrays = (self.ask_prices, self.ask_volumes, self.bid_prices, self.bid_volumes)
        shape = self.ask_prices.shape
        if len(shape) != 2:
            raise DataIntegrityError("price/volume arrays must be 2-D (ticks, depth)")
        for a in arrays:
            if a.shape != shape:
                raise DataIntegrityError("inconsistent array shapes in TradingDay")
        if self.wall_times is None:
            object.__setattr__(self, "wall_times", np.zeros(shape[0]))
        if self.wall_times.shape != (shape[0],):
            raise DataIntegrityError("wall_times length mismatch")
        if np.any(np.diff(self.wall_times) < 0):
            raise DataIntegrityError("wall_times must be non-decreasing")
        _validate_book_arrays(
            self.ask_prices, self.ask_volumes, self.bid_prices, self.bid_volumes
        )
        for a in arrays + (self.wall_times,):
            a.setflags(write=False)

    def __len__(self) -> int:
        return self.ask_prices.shape[0]

    @property
    def depth(self) -> int:
        return self.ask_prices.shape[1]

    @property
    def best_asks(self) -> np.ndarray:
        return self.ask_prices[:, 0]

    @property
    def best_bids(self) -> np.ndarray:
        return self.bid_prices[:, 0]

    def mids(self) -> np.ndarray:
        """Mid-price series in dollars."""
        return (self.best_asks + self.best_bids) / (2 * PRICE_UNITS_PER_DOLLAR)

    def spreads(self, spec: InstrumentSpec = InstrumentSpec()) -> np.ndarray:
        """Spread series in integer ticks."""
        diff = self.best_asks - self.best_bids
        if np.any(diff % spec.tick_units != 0):
            raise DataIntegrityError("off-grid spread in day " + self.day_id)
        return diff // spec.tick_units

    def snapshot(self, i: int) -> BookSnapshot:
        asks = tuple(
            BookLevel(int(p), int(v))
            for p, v in zip(self.ask_prices[i], self.ask_volumes[i])
        )
        bids = tuple(
            BookLevel(int(p), int(v))
            for p, v in zip(self.bid_prices[i], self.bid_volumes[i])
        )
        return BookSnapshot(
            asks=asks, bids=bids, tick_index=int(i), wall_time=float(self.wall_times[i])
        )


def _validate_book_arrays(ask_p, ask_v, bid_p, bid_v):
    """Vectorized invariant checks; reports the first offending row."""

    def first_bad(mask, message):
        if np.any(mask):
            raise DataIntegrityError(f"{message} at row {int(np.argmax(mask))}")

    first_bad((ask_p <= 0).any(axis=1) | (bid_p <= 0).any(axis=1), "non-positive price")
    first_bad((ask_v < 0).any(axis=1) | (bid_v < 0).any(axis=1), "negative volume")
    if ask_p.shape[1] > 1:
        first_bad((np.diff(ask_p, axis=1) <= 0).any(axis=1), "asks not strictly ascending")
        first_bad((np.diff(bid_p, axis=1) >= 0).any(axis=1), "bids not strictly descending")
    first_bad(ask_p[:, 0] <= bid_p[:, 0], "crossed or locked book")


def day_from_rows(rows: np.ndarray, day_id: str, wall_times: np.ndarray | None = None) -> TradingDay:
    """Build a TradingDay from an (n, 4*depth) integer array in LOBSTER column order."""
    if rows.ndim != 2 or rows.shape[1] % 4 != 0:
        raise ParseError(f"row array must have 4*depth columns, got shape {rows.shape}")
    return TradingDay(
        day_id=day_id,
        ask_prices=rows[:, 0::4].astype(np.int64),
        ask_volumes=rows[:, 1::4].astype(np.int64),
        bid_prices=rows[:, 2::4].astype(np.int64),
        bid_volumes=rows[:, 3::4].astype(np.int64),
        wall_times=wall_times,
    )


def load_day(
    path: str | os.PathLike,
    spec: InstrumentSpec = InstrumentSpec(),
    trim: int = 0,
    day_id: str | None = None,
) -> TradingDay:
    """Load one orderbook CSV, dropping the first and last `trim` rows.

    Raises DataIntegrityError if the file has <= 2*trim rows; any malformed row
    aborts the load with its row index.
    """
    if trim < 0:
        raise ValueError(f"trim must be >= 0, got {trim}")
    path = Path(path)
    if day_id is None:
        day_id = _day_id_from_filename(path.name)
    try:
        rows = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except OSError:
        raise
    except ValueError:
        _locate_bad_row(path, spec)  # always raises
        raise AssertionError("unreachable")
    if rows.size == 0:
        raise DataIntegrityError(f"{path}: empty file")
    if rows.shape[1] != 4 * spec.depth:
        raise ParseError(
            f"{path}: expected {4 * spec.depth} columns, got {rows.shape[1]}"
        )
    if rows.shape[0] <= 2 * trim:
        raise DataIntegrityError(
            f"{path}: day too short ({rows.shape[0]} rows) for trim={trim}"
        )
    if trim:
        rows = rows[trim : rows.shape[0] - trim]
    try:
        return day_from_rows(rows, day_id=day_id)
    except DataIntegrityError as exc:
        raise DataIntegrityError(f"{path}: {exc}") from None


def _locate_bad_row(path: Path, spec: InstrumentSpec):
    """Slow path: re-read line by line to report the offending row index."""
    with open(path) as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                raise ParseError(f"{path}: blank line at row {i}")
            try:
                parse_orderbook_row(line, spec, line_no=i)
            except DataError as exc:
                raise type(exc)(f"{path}: {exc}") from None
    raise ParseError(f"{path}: unparseable file")


def write_day_csv(day: TradingDay, path: str | os.PathLike) -> None:
    """Emit a TradingDay in the CSV layout load_day reads (wall times are not stored)."""
    n, depth = day.ask_prices.shape
    out = np.empty((n, 4 * depth), dtype=np.int64)
    out[:, 0::4] = day.ask_prices
    out[:, 1::4] = day.ask_volumes
    out[:, 2::4] = day.bid_prices
    out[:, 3::4] = day.bid_volumes
    with open(path, "w") as fh:
        for row in out:
            fh.write(",".join(str(v) for v in row))
            fh.write("\n")


def _day_id_from_filename(name: str) -> str:
    # <TICKER>_<YYYY-MM-DD>_orderbook_10.csv -> <TICKER>_<YYYY-MM-DD>
    stem = name.rsplit(".", 1)[0]
    if "_orderbook" in stem:
        return stem.split("_orderbook")[0]
    return stem
