"""Single-unit trading MDP over a limit order book window.

Position-action semantics: buying fills at the best ask, selling at the best
bid, so an immediate round trip pays exactly the spread. Rewards are integer
ticks. A daily stop-loss action closes any position when the day's realized
P&L is negative and disables further trading for the episode; otherwise it
acts as stay.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from lobrl.book import BookSnapshot, InstrumentSpec, TradingDay

HISTORY_TICKS = 10  # current snapshot plus 9 prior

SCENARIOS = ("c201", "c202", "c203")


class Position(IntEnum):
    NEUTRAL = 0
    LONG = 1
    SHORT = 2


class Action(IntEnum):
    SELL = 0
    STAY = 1
    BUY = 2
    STOP_LOSS = 3


@dataclass(frozen=True)
class TradeRecord:
    side: str  # "long" | "short"
    open_tick: int
    close_tick: int
    profit: int  # ticks
    cause: str  # "agent_close" | "stop_loss" | "episode_end"

    def __post_init__(self):
        if self.close_tick <= self.open_tick:
            raise ValueError("close_tick must exceed open_tick")
        if self.side not in ("long", "short"):
            raise ValueError(f"unknown side {self.side!r}")
        if self.cause not in ("agent_close", "stop_loss", "episode_end"):
            raise ValueError(f"unknown cause {self.cause!r}")


def observation_dim(scenario: str, depth: int = 10) -> int:
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}, expected one of {SCENARIOS}")
    base = HISTORY_TICKS * 2 * depth + 3  # volume history + position one-hot
    if scenario == "c201":
        return base
    if scenario == "c202":
        return base + 1  # + mark-to-market
    return base + 2  # + mark-to-market + spread


def trade_profit(
    side: str,
    open_snapshot: BookSnapshot,
    close_snapshot: BookSnapshot,
    spec: InstrumentSpec = InstrumentSpec(),
) -> int:
    """Net trade return in ticks: buy at the ask, sell at the bid."""
    if side == "long":
        diff = close_snapshot.best_bid.price - open_snapshot.best_ask.price
    elif side == "short":
        diff = open_snapshot.best_bid.price - close_snapshot.best_ask.price
    else:
        raise ValueError(f"unknown side {side!r}")
    return int(diff) // spec.tick_units


class MarketEnv:
    """One episode over `length` consecutive ticks of a trading day.

    Steps execute at ticks 0..length-2; tick length-1 is terminal and is where
    any still-open position is force-closed. Instances are single-threaded;
    distinct instances over (immutable) days may run in parallel.
    """

    def __init__(
        self,
        day: TradingDay,
        start: int = 0,
        length: int | None = None,
        scenario: str = "c202",
        vol_norm: float = 1.0,
        spec: InstrumentSpec = InstrumentSpec(),
    ):
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {scenario!r}")
        if length is None:
            length = len(day) - start
        if length < 2:
            raise ValueError("window length must be at least 2 ticks")
        if start < 0 or start + length > len(day):
            raise ValueError(
                f"window [{start}, {start + length}) outside day of {len(day)} ticks"
            )
        if vol_norm <= 0:
            raise ValueError("vol_norm must be positive")
        self.day = day
        self.start = start
        self.length = length
        self.scenario = scenario
        self.spec = spec
        self.vol_norm = float(vol_norm)
        self.obs_dim = observation_dim(scenario, day.depth)

        sl = slice(start, start + length)
        tick = spec.tick_units
        self._best_ask = day.best_asks[sl]
        self._best_bid = day.best_bids[sl]
        self._spread_ticks = (self._best_ask - self._best_bid) // tick
        self._tick = tick
        vols = np.concatenate([day.ask_volumes[sl], day.bid_volumes[sl]], axis=1)
        self._vols = vols.astype(np.float64) / self.vol_norm
        self._n_vol = self._vols.shape[1]
        self.reset()

    def reset(self) -> np.ndarray:
        self.cursor = 0
        self.position = Position.NEUTRAL
        self._entry_ask = 0
        self._entry_bid = 0
        self._open_tick = -1
        self.day_pnl = 0
        self.trading_disabled = False
        self.done = False
        return self.observe()

    # -- observation ------------------------------------------------------

    def observe(self) -> np.ndarray:
        """Feature vector at the current cursor (zero-padded early history)."""
        t = self.cursor
        obs = np.zeros(self.obs_dim)
        k = min(t + 1, HISTORY_TICKS)
        block = self._n_vol
        hist = self._vols[t + 1 - k : t + 1]
        obs[(HISTORY_TICKS - k) * block : HISTORY_TICKS * block] = hist.reshape(-1)
        pos_off = HISTORY_TICKS * block
        obs[pos_off + int(self.position)] = 1.0
        if self.scenario in ("c202", "c203"):
            obs[pos_off + 3] = float(self.mark_to_market())
        if self.scenario == "c203":
            obs[pos_off + 4] = float(self._spread_ticks[t])
        return obs

    def mark_to_market(self) -> int:
        """Ticks gained by closing the position now; zero when neutral."""
        t = self.cursor
        if self.position == Position.LONG:
            return int(self._best_bid[t] - self._entry_ask) // self._tick
        if self.position == Position.SHORT:
            return int(self._entry_bid - self._best_ask[t]) // self._tick
        return 0

    # -- dynamics ---------------------------------------------------------

    def _open(self, position: Position, t: int) -> None:
        self.position = position
        self._entry_ask = int(self._best_ask[t])
        self._entry_bid = int(self._best_bid[t])
        self._open_tick = t

    def _close(self, t: int, cause: str) -> TradeRecord:
        if self.position == Position.LONG:
            profit = (int(self._best_bid[t]) - self._entry_ask) // self._tick
            side = "long"
        else:
            profit = (self._entry_bid - int(self._best_ask[t])) // self._tick
            side = "short"
        trade = TradeRecord(
            side=side,
            open_tick=self.start + self._open_tick,
            close_tick=self.start + t,
            profit=profit,
            cause=cause,
        )
        self.position = Position.NEUTRAL
        self._open_tick = -1
        self.day_pnl += profit
        return trade

    def step(self, action: int) -> tuple[np.ndarray, int, bool, TradeRecord | None]:
        """Execute one action, returning (observation, reward_ticks, done, trade)."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        action = Action(action)
        t = self.cursor
        reward = 0
        trade: TradeRecord | None = None

        if self.trading_disabled:
            pass  # everything behaves as stay
        elif action == Action.STOP_LOSS:
            if self.day_pnl < 0:
                if self.position != Position.NEUTRAL:
                    trade = self._close(t, "stop_loss")
                    reward += trade.profit
                self.trading_disabled = True
            # non-negative day P&L: acts as stay
        elif action == Action.BUY:
            if self.position == Position.NEUTRAL:
                self._open(Position.LONG, t)
            elif self.position == Position.SHORT:
                trade = self._close(t, "agent_close")
                reward += trade.profit
            # already long: no change
        elif action == Action.SELL:
            if self.position == Position.NEUTRAL:
                self._open(Position.SHORT, t)
            elif self.position == Position.LONG:
                trade = self._close(t, "agent_close")
                reward += trade.profit
            # already short: no change

        self.cursor += 1
        if self.cursor == self.length - 1:
            self.done = True
            if self.position != Position.NEUTRAL:
                trade = self._close(self.cursor, "episode_end")
                reward += trade.profit
        return self.observe(), reward, self.done, trade

    @property
    def steps_per_episode(self) -> int:
        return self.length - 1
