"""PPO trading agents on depth-10 limit order book data."""

from lobrl.book import (
    BookLevel,
    BookSnapshot,
    DataError,
    DataIntegrityError,
    InstrumentSpec,
    ParseError,
    TradingDay,
    load_day,
    mid_price,
    parse_orderbook_row,
    spread,
)
from lobrl.env import Action, MarketEnv, Position, TradeRecord
from lobrl.ppo import PPOConfig, PPOTrader
from lobrl.gp import GaussianProcess, expected_improvement

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BookLevel",
    "BookSnapshot",
    "DataError",
    "DataIntegrityError",
    "GaussianProcess",
    "InstrumentSpec",
    "MarketEnv",
    "PPOConfig",
    "PPOTrader",
    "ParseError",
    "Position",
    "TradeRecord",
    "TradingDay",
    "expected_improvement",
    "load_day",
    "mid_price",
    "parse_orderbook_row",
    "spread",
]
