"""Reproducible synthetic trading days, optionally with injected momentum structure.

The generator is deliberately simple: the mid follows a lazy random walk on the
tick grid, level volumes are drawn independently per tick from a geometric
distribution. This is unrealistic microstructure but sufficient to exercise the
pipeline and, with the momentum signal enabled, to provide a learnable pattern.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lobrl.book import PRICE_UNITS_PER_DOLLAR, InstrumentSpec, TradingDay


@dataclass(frozen=True)
class MomentumSignal:
    """After a volume-imbalance trigger the mid rises deterministically.

    At a trigger tick the top-of-book imbalance (bidV-askV)/(bidV+askV) is
    forced above `trigger_imbalance`; the best bid then steps up one tick at
    each of `rise_offsets` ticks after the trigger (all within 50 ticks).
    Natural volume draws are capped below the trigger threshold so that every
    threshold crossing is a real signal.
    """

    strength: int = 5  # total mid rise in ticks
    trigger_imbalance: float = 0.8
    trigger_rate: float = 1.0 / 200.0  # per-tick probability of a new trigger
    rise_offsets: tuple[int, ...] = (2, 4, 6, 8, 10)
    natural_cap: float = 0.6  # natural draws capped at natural_cap * trigger_imbalance

    def __post_init__(self):
        if not 0 < self.trigger_imbalance < 1:
            raise ValueError("trigger_imbalance must be in (0, 1)")
        if len(self.rise_offsets) != self.strength:
            raise ValueError("need exactly `strength` rise offsets")
        if list(self.rise_offsets) != sorted(set(self.rise_offsets)):
            raise ValueError("rise_offsets must be strictly increasing")
        if self.rise_offsets[0] < 1 or self.rise_offsets[-1] > 50:
            raise ValueError("rise_offsets must lie in [1, 50]")
        if not 0 < self.natural_cap < 1:
            raise ValueError("natural_cap must be in (0, 1)")

    @property
    def horizon(self) -> int:
        return self.rise_offsets[-1]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_ticks: int = 10_000
    base_price: float = 50.0  # dollars
    vol_scale: float = 200.0  # mean level volume, shares
    signal: MomentumSignal | None = None
    spread_probs: tuple[float, ...] = (0.7, 0.2, 0.1)  # over spreads {1,2,3} ticks
    spread_change_prob: float = 0.01  # per-tick probability of redrawing the spread
    walk_prob: float = 0.1  # per-tick probability the mid moves (+-1 tick)
    walk_bound: int = 200  # reflect the bid path at base +- bound ticks
    spec: InstrumentSpec = field(default_factory=InstrumentSpec)

    def __post_init__(self):
        if self.n_ticks <= 0:
            raise ValueError("n_ticks must be positive")
        if self.vol_scale <= 0:
            raise ValueError("vol_scale must be positive")
        if abs(sum(self.spread_probs) - 1.0) > 1e-9:
            raise ValueError("spread_probs must sum to 1")
        if not 0 <= self.walk_prob <= 1:
            raise ValueError("walk_prob must be in [0, 1]")
        if not 0 <= self.spread_change_prob <= 1:
            raise ValueError("spread_change_prob must be in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    """Generator-side record of what the emitted day contains."""

    mids: np.ndarray  # dollars, one per tick
    trigger_ticks: np.ndarray  # tick indices where a momentum trigger fired


def generate_day(cfg: SynthConfig, day_id: str = "synthetic") -> tuple[TradingDay, GroundTruth]:
    """Generate one synthetic day. Identical config -> bit-identical output."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_ticks
    depth = cfg.spec.depth
    tick = cfg.spec.tick_units
    sig = cfg.signal

    base_bid = int(round(cfg.base_price * PRICE_UNITS_PER_DOLLAR))
    lo = base_bid - cfg.walk_bound * tick
    hi = base_bid + cfg.walk_bound * tick
    lo = max(lo, tick)  # keep prices positive

    best_bid = np.empty(n, dtype=np.int64)
    spread_ticks = np.empty(n, dtype=np.int64)
    ask_vol = np.empty((n, depth), dtype=np.int64)
    bid_vol = np.empty((n, depth), dtype=np.int64)

    # natural imbalance cap keeps spontaneous draws strictly below the trigger
    cap_ratio = None
    if sig is not None:
        thr = sig.natural_cap * sig.trigger_imbalance
        cap_ratio = (1 + thr) / (1 - thr)

    bid = base_bid
    spr = int(rng.choice(np.arange(1, len(cfg.spread_probs) + 1), p=cfg.spread_probs))
    trigger_ticks: list[int] = []
    rise_schedule: dict[int, int] = {}  # tick -> number of +1-tick bid steps
    active_until = -1

    p_geom = 1.0 / cfg.vol_scale
    spread_choices = np.arange(1, len(cfg.spread_probs) + 1)

    for t in range(n):
        scheduled = rise_schedule.pop(t, 0)
        if scheduled:
            bid += scheduled * tick
        elif t > active_until:
            # lazy walk; frozen while a rise schedule is active
            if rng.random() < cfg.walk_prob:
                bid += tick if rng.random() < 0.5 else -tick
                if bid < lo:
                    bid = lo + (lo - bid)
                elif bid > hi:
                    bid = hi - (bid - hi)
        # persistent spread: rare redraws keep the mid close to a pure walk
        if t > active_until and rng.random() < cfg.spread_change_prob:
            spr = int(rng.choice(spread_choices, p=cfg.spread_probs))
        best_bid[t] = bid
        spread_ticks[t] = spr

        av = rng.geometric(p_geom, size=depth)
        bv = rng.geometric(p_geom, size=depth)

        trigger = (
            sig is not None
            and t > active_until
            and t + sig.horizon < n
            and rng.random() < sig.trigger_rate
        )
        if trigger:
            # force a salient top-of-book imbalance above the threshold
            av[0] = max(1, int(cfg.vol_scale / 10))
            need = (1 + sig.trigger_imbalance) / (1 - sig.trigger_imbalance)
            bv[0] = int(np.ceil(av[0] * need)) + 1
            trigger_ticks.append(t)
            for off in sig.rise_offsets:
                rise_schedule[t + off] = rise_schedule.get(t + off, 0) + 1
            active_until = t + sig.horizon
        elif cap_ratio is not None:
            imb_cap = int(av[0] * cap_ratio)
            if bv[0] > imb_cap:
                bv[0] = max(1, imb_cap)

        ask_vol[t] = av
        bid_vol[t] = bv

    best_ask = best_bid + spread_ticks * tick
    offsets = np.arange(depth, dtype=np.int64) * tick
    ask_prices = best_ask[:, None] + offsets[None, :]
    bid_prices = best_bid[:, None] - offsets[None, :]
    wall_times = 34200.0 + np.cumsum(rng.exponential(0.01, size=n))

    day = TradingDay(
        day_id=day_id,
        ask_prices=ask_prices,
        ask_volumes=ask_vol,
        bid_prices=bid_prices,
        bid_volumes=bid_vol,
        wall_times=wall_times,
    )
    truth = GroundTruth(
        mids=(best_ask + best_bid) / (2 * PRICE_UNITS_PER_DOLLAR),
        trigger_ticks=np.asarray(trigger_ticks, dtype=np.int64),
    )
    return day, truth
