"""Out-of-sample evaluation: frozen policies over full days, ensemble statistics
and plot-ready exports (cumulative mean P&L, per-day mean/std, trade histogram).
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lobrl.book import InstrumentSpec, TradingDay
from lobrl.env import MarketEnv, TradeRecord
from lobrl.policy import PolicyParams, forward, sample_action
from lobrl.ppo import mean_level_volume  # noqa: F401  (re-export convenience)


@dataclass
class DailyResult:
    day_id: str
    member_id: int
    pnl_trajectory: np.ndarray  # cumulative realized ticks, one entry per step
    trades: list[TradeRecord]
    stopped: bool


@dataclass
class EnsembleReport:
    scenario: str
    day_ids: list[str]
    n_members: int
    per_day_mean: dict[str, np.ndarray] = field(default_factory=dict)
    per_day_std: dict[str, np.ndarray] = field(default_factory=dict)
    cumulative_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cumulative_day_ids: list[str] = field(default_factory=list)
    cumulative_ticks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    histogram: dict[int, int] = field(default_factory=dict)
    trades: list[tuple[str, int, TradeRecord]] = field(default_factory=list)


def run_day(
    params: PolicyParams,
    day: TradingDay,
    scenario: str,
    vol_norm: float,
    spec: InstrumentSpec = InstrumentSpec(),
    member_id: int = 0,
    greedy: bool = True,
    rng: np.random.Generator | None = None,
) -> DailyResult:
    """Evaluate one frozen policy over a whole day (single window = full day).

    Greedy argmax action selection by default; stochastic evaluation requires
    an explicit rng so the seed is always recorded by the caller.
    """
    if not greedy and rng is None:
        raise ValueError("stochastic evaluation requires an rng")
    env = MarketEnv(day, scenario=scenario, vol_norm=vol_norm, spec=spec)
    obs = env.reset()
    trajectory = np.empty(env.steps_per_episode, dtype=np.int64)
    trades: list[TradeRecord] = []
    done = False
    i = 0
    while not done:
        logits, _ = forward(params, obs)
        action = int(np.argmax(logits)) if greedy else sample_action(logits, rng)
        obs, _reward, done, trade = env.step(action)
        if trade is not None:
            trades.append(trade)
        trajectory[i] = env.day_pnl
        i += 1
    return DailyResult(
        day_id=day.day_id,
        member_id=member_id,
        pnl_trajectory=trajectory,
        trades=trades,
        stopped=env.trading_disabled,
    )


def run_ensemble(
    members: list[PolicyParams],
    days: list[TradingDay],
    scenario: str,
    vol_norm: float,
    spec: InstrumentSpec = InstrumentSpec(),
) -> EnsembleReport:
    """Evaluate every (member, day) pair and aggregate ensemble statistics."""
    if not members:
        raise ValueError("need at least one ensemble member")
    if not days:
        raise ValueError("need at least one day")
    report = EnsembleReport(
        scenario=scenario, day_ids=[d.day_id for d in days], n_members=len(members)
    )
    cum_parts: list[np.ndarray] = []
    offset = 0.0
    for day in days:
        results = [
            run_day(p, day, scenario, vol_norm, spec, member_id=m)
            for m, p in enumerate(members)
        ]
        stacked = np.stack([r.pnl_trajectory for r in results]).astype(np.float64)
        mean = stacked.mean(axis=0)
        report.per_day_mean[day.day_id] = mean
        report.per_day_std[day.day_id] = stacked.std(axis=0)
        cum_parts.append(offset + mean)
        offset += float(mean[-1]) if mean.size else 0.0
        for r in results:
            for tr in r.trades:
                report.trades.append((day.day_id, r.member_id, tr))
                report.histogram[tr.profit] = report.histogram.get(tr.profit, 0) + 1
    report.cumulative_mean = (
        np.concatenate(cum_parts) if cum_parts else np.zeros(0)
    )
    report.cumulative_day_ids = [
        d.day_id for d in days for _ in range(len(report.per_day_mean[d.day_id]))
    ]
    report.cumulative_ticks = np.concatenate(
        [np.arange(len(report.per_day_mean[d.day_id])) for d in days]
    ) if days else np.zeros(0, dtype=np.int64)
    return report


def checkpoint_hash(paths_or_params) -> str:
    """Short stable hash identifying an ensemble of checkpoints."""
    h = hashlib.sha256()
    for item in paths_or_params:
        if isinstance(item, (str, Path)):
            h.update(Path(item).read_bytes())
        else:
            for _name, a in item.items():
                h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:12]


def summarize(report: EnsembleReport) -> dict:
    profits = [tr.profit for _, _, tr in report.trades]
    n = len(profits)
    return {
        "scenario": report.scenario,
        "n_members": report.n_members,
        "n_days": len(report.day_ids),
        "n_trades": n,
        "total_pnl_ticks": int(sum(profits)),
        "mean_pnl_per_member_ticks": (sum(profits) / report.n_members) if n else 0.0,
        "win_rate": (sum(1 for p in profits if p > 0) / n) if n else 0.0,
        "mean_trade_return_ticks": (sum(profits) / n) if n else 0.0,
    }


def export_report(
    report: EnsembleReport, out_dir: str | os.PathLike, tag: str = ""
) -> dict[str, Path]:
    """Write plot-ready CSVs and a JSON summary; re-export is byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"{report.scenario}{('_' + tag) if tag else ''}"
    paths: dict[str, Path] = {}

    p = out / f"{prefix}_cumulative_mean.csv"
    with open(p, "w") as fh:
        fh.write("step,day_id,tick,mean_cum_pnl_ticks\n")
        for i, (d, t, v) in enumerate(
            zip(report.cumulative_day_ids, report.cumulative_ticks, report.cumulative_mean)
        ):
            fh.write(f"{i},{d},{t},{v!r}\n")
    paths["cumulative_mean"] = p

    p = out / f"{prefix}_daily_mean_std.csv"
    with open(p, "w") as fh:
        fh.write("day_id,tick,mean_ticks,std_ticks\n")
        for d in report.day_ids:
            mean = report.per_day_mean.get(d, np.zeros(0))
            std = report.per_day_std.get(d, np.zeros(0))
            for t, (m, s) in enumerate(zip(mean, std)):
                fh.write(f"{d},{t},{m!r},{s!r}\n")
    paths["daily_mean_std"] = p

    p = out / f"{prefix}_trade_histogram.csv"
    with open(p, "w") as fh:
        fh.write("profit_ticks,count\n")
        for k in sorted(report.histogram):
            fh.write(f"{k},{report.histogram[k]}\n")
    paths["histogram"] = p

    p = out / f"{prefix}_trades.csv"
    with open(p, "w") as fh:
        fh.write("day_id,member_id,side,open_tick,close_tick,profit_ticks,cause\n")
        for day_id, member_id, tr in report.trades:
            fh.write(
                f"{day_id},{member_id},{tr.side},{tr.open_tick},{tr.close_tick},"
                f"{tr.profit},{tr.cause}\n"
            )
    paths["trades"] = p

    p = out / f"{prefix}_summary.json"
    with open(p, "w") as fh:
        json.dump(summarize(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = p
    return paths


def summary_from_trades_csv(path: str | os.PathLike) -> dict:
    """Recompute the summary statistics straight from an exported trades CSV."""
    profits: list[int] = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        col = header.index("profit_ticks")
        for line in fh:
            if line.strip():
                profits.append(int(line.strip().split(",")[col]))
    n = len(profits)
    return {
        "n_trades": n,
        "total_pnl_ticks": int(sum(profits)),
        "win_rate": (sum(1 for p in profits if p > 0) / n) if n else 0.0,
        "mean_trade_return_ticks": (sum(profits) / n) if n else 0.0,
    }
