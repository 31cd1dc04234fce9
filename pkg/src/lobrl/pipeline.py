"""Run orchestration: config file handling, master-seed fan-out, and the
sample / train / tune / test stages the CLI wraps.

Every stage derives its randomness from the master seed through
(stage tag, index) so any sub-run is independently reproducible.
"""
from __future__ import annotations

import glob as globmod
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from lobrl import backtest
from lobrl.book import DataError, InstrumentSpec, TradingDay, load_day, write_day_csv
from lobrl.env import observation_dim
from lobrl.gp import SearchSpace, tune
from lobrl.policy import load_checkpoint, save_checkpoint
from lobrl.ppo import PPOConfig, mean_level_volume, train_continual
from lobrl.synthetic import GroundTruth, MomentumSignal, SynthConfig, generate_day
from lobrl.windows import (
    Window,
    check_windows_disjoint,
    read_manifest,
    score_day_windows,
    select_training_windows,
    write_manifest,
)

logger = logging.getLogger(__name__)

DEFAULT_TRIM_REAL = 200_000

STAGE_TAGS = {
    "synth_train": 10,
    "synth_val": 11,
    "synth_test": 12,
    "sample": 2,
    "train": 3,
    "tune": 4,
    "test": 5,
    "baseline": 6,
}


def derive_seed(master_seed: int, stage: str, index: int = 0) -> np.random.SeedSequence:
    """Documented fan-out: child seed = SeedSequence((master, stage tag, index))."""
    return np.random.SeedSequence((master_seed, STAGE_TAGS[stage], index))


@dataclass
class RunConfig:
    scenario: str = "c202"
    seed: int = 0
    out: str = "runs/out"
    jobs: int = 1
    ensemble: int = 30
    budget: int = 20
    data: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    search_space: SearchSpace = field(default_factory=SearchSpace)
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in ("c201", "c202", "c203"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.ensemble < 1:
            raise ValueError("ensemble size must be >= 1")
        has_synth = "synthetic" in self.data
        has_glob = any(k.endswith("_glob") for k in self.data)
        if has_synth and has_glob:
            raise ValueError("config must name exactly one data source")

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    doc: dict = {}
    if path is not None:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    ppo_kw = dict(doc.get("ppo", {}))
    if "hidden" in ppo_kw:
        ppo_kw["hidden"] = tuple(ppo_kw["hidden"])
    space_kw = doc.get("search_space", {})
    return RunConfig(
        scenario=doc.get("scenario", "c202"),
        seed=int(doc.get("seed", 0)),
        out=str(doc.get("out", "runs/out")),
        jobs=int(doc.get("jobs", 1)),
        ensemble=int(doc.get("ensemble", 30)),
        budget=int(doc.get("budget", 20)),
        data=dict(doc.get("data", {})),
        windows=dict(doc.get("windows", {})),
        ppo=PPOConfig(**ppo_kw),
        search_space=SearchSpace(
            **{k: tuple(v) for k, v in space_kw.items()}
        ),
        raw=doc,
    )


# -- data ------------------------------------------------------------------


def _synth_config(cfg: RunConfig, split: str, index: int) -> SynthConfig:
    s = cfg.data["synthetic"]
    signal = None
    if s.get("signal"):
        sig = dict(s["signal"])
        if "rise_offsets" in sig:
            sig["rise_offsets"] = tuple(sig["rise_offsets"])
        signal = MomentumSignal(**sig)
    seed = int(derive_seed(cfg.seed, f"synth_{split}", index).generate_state(1)[0])
    return SynthConfig(
        seed=seed,
        n_ticks=int(s.get("n_ticks", 10_000)),
        base_price=float(s.get("base_price", 50.0)),
        vol_scale=float(s.get("vol_scale", 200.0)),
        signal=signal,
        walk_prob=float(s.get("walk_prob", 0.1)),
    )


def get_days(cfg: RunConfig, split: str) -> tuple[list[TradingDay], list[GroundTruth]]:
    """Materialize the days of one split ('train' | 'val' | 'test')."""
    if "synthetic" in cfg.data:
        s = cfg.data["synthetic"]
        n_days = int(s.get(f"{split}_days", 0))
        days, truths = [], []
        for i in range(n_days):
            day, truth = generate_day(_synth_config(cfg, split, i), day_id=f"{split}-{i:03d}")
            days.append(day)
            truths.append(truth)
        return days, truths
    pattern = cfg.data.get(f"{split}_glob")
    if not pattern:
        return [], []
    trim = int(cfg.data.get("trim", DEFAULT_TRIM_REAL))
    spec = InstrumentSpec(depth=int(cfg.data.get("depth", 10)))
    days = [load_day(p, spec=spec, trim=trim) for p in sorted(globmod.glob(pattern))]
    if not days:
        raise DataError(f"no files match {pattern!r}")
    return days, []


# -- stages ------------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> Path:
    """Materialize synthetic days as orderbook CSVs plus ground-truth logs."""
    if "synthetic" not in cfg.data:
        raise ValueError("cmd_synth requires a synthetic data config")
    root = cfg.out_dir / "synth"
    for split in ("train", "val", "test"):
        days, truths = get_days(cfg, split)
        if not days:
            continue
        d = root / split
        d.mkdir(parents=True, exist_ok=True)
        for day, truth in zip(days, truths):
            write_day_csv(day, d / f"{day.day_id}_orderbook_10.csv")
            with open(d / f"{day.day_id}_truth.json", "w") as fh:
                json.dump(
                    {
                        "mids": truth.mids.tolist(),
                        "trigger_ticks": truth.trigger_ticks.tolist(),
                    },
                    fh,
                    sort_keys=True,
                )
    return root


def cmd_sample(cfg: RunConfig) -> Path:
    """Score per-day windows, subsample the training set, write the manifest."""
    days, _ = get_days(cfg, "train")
    if not days:
        raise DataError("no training days configured")
    w = cfg.windows
    length = int(w.get("length", 10_000))
    per_day = int(w.get("per_day", 5))
    total = int(w.get("total", 25))
    candidates: list[Window] = []
    for day in days:
        candidates.extend(score_day_windows(day, length=length, per_day=per_day))
    total = min(total, len(candidates))
    sample_seed = derive_seed(cfg.seed, "sample")
    selected = select_training_windows(
        candidates, total=total, seed=int(sample_seed.generate_state(1)[0])
    )
    assert check_windows_disjoint(selected)
    day_map = {d.day_id: d for d in days}
    vol_norm = mean_level_volume(day_map, selected)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "manifest.json"
    write_manifest(
        selected,
        path,
        meta={
            "scenario": cfg.scenario,
            "seed": cfg.seed,
            "vol_norm": vol_norm,
            "config_hash": cfg.config_hash(),
            "n_candidates": len(candidates),
        },
    )
    return path


def _train_member(args) -> str:
    """Worker for one ensemble member (top level so it pickles)."""
    cfg, windows, meta, member = args
    days, _ = get_days(cfg, "train")
    day_map = {d.day_id: d for d in days}
    seed = derive_seed(cfg.seed, "train", member)
    params, logs = train_continual(
        windows,
        day_map,
        cfg.scenario,
        cfg.ppo,
        seed,
        vol_norm=meta["vol_norm"],
    )
    ckpt_dir = cfg.out_dir / "checkpoints"
    log_dir = cfg.out_dir / "logs"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_dir.mkdir(parents=True, exist_ok=True)
    path = ckpt_dir / f"member_{member:03d}.json"
    save_checkpoint(
        path,
        params,
        meta={
            "scenario": cfg.scenario,
            "vol_norm": meta["vol_norm"],
            "member": member,
            "master_seed": cfg.seed,
            "hidden": list(cfg.ppo.hidden),
            "obs_dim": params.obs_dim,
        },
    )
    with open(log_dir / f"member_{member:03d}.jsonl", "w") as fh:
        for rec in logs:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    return str(path)


def cmd_train(cfg: RunConfig, manifest_path: str | Path | None = None) -> list[Path]:
    """Train the ensemble; members with existing checkpoints are left untouched."""
    if manifest_path is None:
        manifest_path = cfg.out_dir / "manifest.json"
    windows, meta = read_manifest(manifest_path)
    ckpt_dir = cfg.out_dir / "checkpoints"
    todo = []
    done_paths: list[Path] = []
    for member in range(cfg.ensemble):
        path = ckpt_dir / f"member_{member:03d}.json"
        if path.exists():
            logger.info("member %d already trained, skipping", member)
            done_paths.append(path)
        else:
            todo.append((cfg, windows, meta, member))
    if todo:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
                done_paths.extend(Path(p) for p in ex.map(_train_member, todo))
        else:
            done_paths.extend(Path(_train_member(a)) for a in todo)
    return sorted(done_paths)


def make_validation_objective(cfg: RunConfig, windows: list[Window], vol_norm: float):
    """Objective for SMBO: train one agent, return cumulative validation profit."""
    train_days, _ = get_days(cfg, "train")
    val_days, _ = get_days(cfg, "val")
    if not val_days:
        raise DataError("no validation days configured")
    day_map = {d.day_id: d for d in train_days}

    def objective(learning_rate: float, entropy_coef: float) -> float:
        ppo = cfg.ppo.replace(learning_rate=learning_rate, entropy_coef=entropy_coef)
        seed = derive_seed(cfg.seed, "tune")
        params, _logs = train_continual(
            windows, day_map, cfg.scenario, ppo, seed, vol_norm=vol_norm
        )
        report = backtest.run_ensemble([params], val_days, cfg.scenario, vol_norm)
        return float(
            sum(report.per_day_mean[d][-1] for d in report.day_ids if len(report.per_day_mean[d]))
        )

    return objective


def cmd_tune(cfg: RunConfig, manifest_path: str | Path | None = None, objective=None) -> Path:
    """SMBO over (learning_rate, entropy_coef); writes the trial log and best point."""
    if cfg.budget < 1:
        raise ValueError("budget must be >= 1")
    if manifest_path is None:
        manifest_path = cfg.out_dir / "manifest.json"
    if objective is None:
        windows, meta = read_manifest(manifest_path)
        objective = make_validation_objective(cfg, windows, meta["vol_norm"])
    tune_dir = cfg.out_dir / "tune"
    tune_dir.mkdir(parents=True, exist_ok=True)

    timed: list[float] = []

    def timed_objective(lr, ec):
        t0 = time.monotonic()
        try:
            return objective(lr, ec)
        finally:
            timed.append(time.monotonic() - t0)

    result = tune(
        timed_objective, cfg.search_space, cfg.budget, derive_seed(cfg.seed, "tune")
    )
    with open(tune_dir / "trials.csv", "w") as fh:
        fh.write("trial_id,learning_rate,entropy_coef,validation_profit_ticks,wall_time\n")
        for t, wt in zip(result.trials, timed):
            fh.write(f"{t.trial_id},{t.learning_rate!r},{t.entropy_coef!r},{t.objective!r},{wt:.3f}\n")
    best = result.best
    best_path = tune_dir / "best.json"
    with open(best_path, "w") as fh:
        json.dump(
            {
                "learning_rate": best.learning_rate,
                "entropy_coef": best.entropy_coef,
                "validation_profit_ticks": best.objective,
                "trial_id": best.trial_id,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return best_path


def cmd_test(cfg: RunConfig, checkpoint_paths: list[str | Path] | None = None) -> dict[str, Path]:
    """Backtest the ensemble on the test days and export the report files."""
    if checkpoint_paths is None:
        checkpoint_paths = sorted((cfg.out_dir / "checkpoints").glob("member_*.json"))
    if not checkpoint_paths:
        raise ValueError("no checkpoints to test")
    members = []
    vol_norm = None
    for p in checkpoint_paths:
        params, meta = load_checkpoint(p)
        if meta.get("scenario") != cfg.scenario:
            raise ValueError(
                f"checkpoint {p} was trained for scenario {meta.get('scenario')}, "
                f"config says {cfg.scenario}"
            )
        expected = observation_dim(cfg.scenario)
        if params.obs_dim != expected:
            raise ValueError(
                f"checkpoint {p}: observation dim {params.obs_dim} != expected {expected}"
            )
        vol_norm = meta.get("vol_norm", vol_norm)
        members.append(params)
    if vol_norm is None:
        raise ValueError("checkpoints carry no vol_norm metadata")
    days, _ = get_days(cfg, "test")
    if not days:
        raise DataError("no test days configured")
    report = backtest.run_ensemble(members, days, cfg.scenario, vol_norm)
    tag = "{}_{}-{}".format(
        backtest.checkpoint_hash(checkpoint_paths), days[0].day_id, days[-1].day_id
    )
    return backtest.export_report(report, cfg.out_dir / "report", tag=tag)


def cmd_report(trades_csv: str | Path, out_path: str | Path) -> Path:
    """Recompute the summary statistics from an exported trades CSV."""
    summary = backtest.summary_from_trades_csv(trades_csv)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_path
