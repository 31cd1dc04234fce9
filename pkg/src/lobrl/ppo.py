"""PPO with a clipped surrogate objective and continual learning over windows.

The loss is L = -E[min(r*A, clip(r, 1-eps, 1+eps)*A)]
             + value_coef * E[(V - return)^2] - entropy_coef * E[H(pi)],
with r = exp(logp_new - logp_old) and GAE(lambda) advantages normalized per
update batch. Gradients are exact (see policy.backward_trunk).
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator

from lobrl.book import InstrumentSpec, TradingDay
from lobrl.env import MarketEnv, observation_dim
from lobrl.policy import (
    Adam,
    NumericalError,
    PolicyParams,
    _forward_cached,
    backward_trunk,
    clip_grads,
    forward,
    init_params,
    log_prob_entropy,
    log_softmax,
    sample_action,
)
from lobrl.windows import Window


@dataclass(frozen=True)
class PPOConfig:
    clip_epsilon: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    steps_per_update: int = 1024
    minibatch_size: int = 256
    opt_epochs_per_update: int = 4
    env_epochs: int = 30
    max_grad_norm: float = 0.5
    hidden: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if not 0 <= self.discount <= 1:
            raise ValueError("discount must be in [0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        for name in ("steps_per_update", "minibatch_size", "opt_epochs_per_update", "env_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def replace(self, **kw) -> "PPOConfig":
        d = asdict(self)
        d.update(kw)
        d["hidden"] = tuple(d["hidden"])
        return PPOConfig(**d)


class RolloutBuffer:
    """Per-step storage for one rollout chunk."""

    def __init__(self):
        self.observations: list[np.ndarray] = []
        self.actions: list[int] = []
        self.log_probs_old: list[float] = []
        self.rewards: list[float] = []
        self.values: list[float] = []

    def add(self, obs, action, log_prob, reward, value):
        self.observations.append(obs)
        self.actions.append(action)
        self.log_probs_old.append(log_prob)
        self.rewards.append(reward)
        self.values.append(value)

    def __len__(self):
        return len(self.actions)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "observations": np.asarray(self.observations),
            "actions": np.asarray(self.actions, dtype=np.int64),
            "log_probs_old": np.asarray(self.log_probs_old),
            "rewards": np.asarray(self.rewards, dtype=np.float64),
            "values": np.asarray(self.values),
        }


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap_value: float,
    discount: float,
    gae_lambda: float,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE(lambda): A_t = delta_t + discount*lambda*A_{t+1}; returns = A + V.

    Advantages are returned raw; normalization happens per update batch in the
    trainer.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = rewards.shape[0]
    if n == 0:
        raise ValueError("empty rollout buffer")
    if values.shape[0] != n:
        raise ValueError("rewards and values must have equal length")
    next_values = np.append(values[1:], bootstrap_value)
    deltas = rewards + discount * next_values - values
    advantages = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = deltas[t] + discount * gae_lambda * acc
        advantages[t] = acc
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (advantages - advantages.mean()) / (advantages.std() + eps)


def clipped_surrogate(ratio, advantage, clip_epsilon: float):
    """Elementwise pessimistic surrogate: min(r*A, clip(r)*A)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return np.minimum(ratio * advantage, clipped * advantage)


def ppo_loss(params: PolicyParams, batch: dict, config: PPOConfig) -> tuple[float, dict]:
    """Composite PPO loss and diagnostics on one minibatch.

    `batch` needs observations, actions, log_probs_old, advantages, returns.
    """
    loss, stats, _ = _ppo_loss_impl(params, batch, config, want_grads=False)
    return loss, stats


def ppo_loss_and_grad(
    params: PolicyParams, batch: dict, config: PPOConfig
) -> tuple[float, dict, PolicyParams]:
    return _ppo_loss_impl(params, batch, config, want_grads=True)


def _ppo_loss_impl(params, batch, config, want_grads):
    obs = batch["observations"]
    actions = np.asarray(batch["actions"], dtype=np.int64)
    logp_old = np.asarray(batch["log_probs_old"], dtype=np.float64)
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    n = obs.shape[0]
    if n == 0:
        raise ValueError("empty minibatch")
    eps = config.clip_epsilon

    logits, values, cache = _forward_cached(params, obs)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, actions]
    entropy = -(p * logp_all).sum(axis=1)

    ratio = np.exp(logp - logp_old)
    if not np.all(np.isfinite(ratio)):
        raise NumericalError("non-finite probability ratio (policy diverged)")
    s_unclipped = ratio * adv
    s_clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    surrogate = np.minimum(s_unclipped, s_clipped)
    v_err = values - returns

    policy_loss = -surrogate.mean()
    value_loss = float((v_err**2).mean())
    mean_entropy = float(entropy.mean())
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * mean_entropy
    if not np.isfinite(loss):
        term = {
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": mean_entropy,
        }
        bad = [k for k, v in term.items() if not np.isfinite(v)]
        raise NumericalError(f"non-finite loss terms: {bad}")

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": mean_entropy,
        "clip_fraction": float(np.mean((ratio < 1.0 - eps) | (ratio > 1.0 + eps))),
        "surrogate": float(surrogate.mean()),
        "mean_ratio": float(ratio.mean()),
    }
    if not want_grads:
        return float(loss), stats, None

    # gradient of the surrogate w.r.t. logp: zero where the clipped branch is
    # active and the ratio sits outside the clip range
    use_unclipped = s_unclipped <= s_clipped
    inside = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)
    dsurr_dlogp = np.where(use_unclipped | inside, s_unclipped, 0.0)
    dlogp = -dsurr_dlogp / n

    one_hot = np.zeros_like(p)
    one_hot[idx, actions] = 1.0
    dlogits = dlogp[:, None] * (one_hot - p)
    # entropy term: dH/dlogits = -p * (logp + H)
    dH = -p * (logp_all + entropy[:, None])
    dlogits += (-config.entropy_coef / n) * dH
    dvalues = (2.0 * config.value_coef / n) * v_err

    grads = backward_trunk(params, cache, dlogits, dvalues)
    return float(loss), stats, grads


def _collect_chunk(env: MarketEnv, params, obs, rng, max_steps):
    """Roll the policy forward for up to max_steps transitions."""
    buf = RolloutBuffer()
    done = False
    for _ in range(max_steps):
        logits, value = forward(params, obs)
        action = sample_action(logits, rng)
        logp, _ = log_prob_entropy(logits, action)
        next_obs, reward, done, _trade = env.step(action)
        buf.add(obs, action, logp, float(reward), value)
        obs = next_obs
        if done:
            break
    return buf, obs, done


def _update(params, opt, data, config, rng):
    """Shuffled-minibatch optimization passes over one rollout chunk."""
    n = len(data["actions"])
    last_stats: dict = {}
    clipped_any = False
    for _ in range(config.opt_epochs_per_update):
        perm = rng.permutation(n)
        for lo in range(0, n, config.minibatch_size):
            sel = perm[lo : lo + config.minibatch_size]
            batch = {k: v[sel] for k, v in data.items()}
            _loss, last_stats, grads = ppo_loss_and_grad(params, batch, config)
            grads, was_clipped = clip_grads(grads, config.max_grad_norm)
            clipped_any |= was_clipped
            params = opt.step(params, grads, config.learning_rate)
    last_stats["grad_clipped"] = clipped_any
    return params, last_stats


def train_on_window(
    params: PolicyParams,
    opt: Adam,
    env: MarketEnv,
    config: PPOConfig,
    rng: np.random.Generator,
    window_id: str = "",
) -> tuple[PolicyParams, list[dict]]:
    """Run `env_epochs` passes over one window, updating after each rollout chunk."""
    if env.steps_per_episode < 1:
        raise ValueError("window too short to train on")
    logs: list[dict] = []
    for epoch in range(config.env_epochs):
        obs = env.reset()
        done = False
        update_idx = 0
        while not done:
            buf, obs, done = _collect_chunk(env, params, obs, rng, config.steps_per_update)
            data = buf.arrays()
            if done:
                bootstrap = 0.0
            else:
                _, bootstrap = forward(params, obs)
            adv, ret = compute_gae(
                data["rewards"], data["values"], bootstrap, config.discount, config.gae_lambda
            )
            data["advantages"] = normalize_advantages(adv)
            data["returns"] = ret
            del data["rewards"], data["values"]
            mean_reward = float(np.mean(buf.rewards)) if buf.rewards else 0.0
            params, stats = _update(params, opt, data, config, rng)
            logs.append(
                {
                    "window_id": window_id,
                    "epoch": epoch,
                    "update": update_idx,
                    "n_steps": len(buf),
                    "mean_reward": mean_reward,
                    "episode_pnl": int(env.day_pnl),
                    **stats,
                }
            )
            update_idx += 1
    return params, logs


def train_continual(
    windows: list[Window],
    days: dict[str, TradingDay],
    scenario: str,
    config: PPOConfig,
    seed,
    vol_norm: float,
    spec: InstrumentSpec = InstrumentSpec(),
    params: PolicyParams | None = None,
    checkpoint_fn=None,
) -> tuple[PolicyParams, list[dict]]:
    """Iterate train_on_window over the manifest, carrying params and optimizer state.

    `checkpoint_fn(index, window, params)` is called after each window when given.
    """
    if not windows:
        raise ValueError("empty window list")
    rng = np.random.default_rng(seed)
    if params is None:
        first_day = days[windows[0].day_id]
        params = init_params(observation_dim(scenario, first_day.depth), config.hidden, rng)
    opt = Adam(params)
    logs: list[dict] = []
    for i, w in enumerate(windows):
        env = MarketEnv(
            days[w.day_id],
            start=w.start_tick,
            length=w.length,
            scenario=scenario,
            vol_norm=vol_norm,
            spec=spec,
        )
        window_id = f"{w.day_id}:{w.start_tick}"
        params, wlogs = train_on_window(params, opt, env, config, rng, window_id=window_id)
        logs.extend(wlogs)
        if checkpoint_fn is not None:
            checkpoint_fn(i, w, params)
    return params, logs


def mean_level_volume(days: dict[str, TradingDay], windows: list[Window]) -> float:
    """Normalization constant: mean level volume over the training windows."""
    total = 0.0
    count = 0
    for w in windows:
        day = days[w.day_id]
        sl = slice(w.start_tick, w.start_tick + w.length)
        total += float(day.ask_volumes[sl].sum() + day.bid_volumes[sl].sum())
        count += 2 * w.length * day.depth
    if count == 0:
        raise ValueError("no window data to normalize over")
    return total / count


class PPOTrader(BaseEstimator):
    """Estimator-style facade: fit on training windows, predict greedy actions.

    Parameters mirror PPOConfig plus the scenario and the seed; get_params /
    set_params come from the sklearn base class so the trader composes with
    standard tooling.
    """

    def __init__(
        self,
        scenario: str = "c202",
        config: PPOConfig | None = None,
        seed: int = 0,
        vol_norm: float | None = None,
    ):
        self.scenario = scenario
        self.config = config
        self.seed = seed
        self.vol_norm = vol_norm

    def fit(self, windows: list[Window], days: dict[str, TradingDay]):
        config = self.config or PPOConfig()
        vol_norm = self.vol_norm
        if vol_norm is None:
            vol_norm = mean_level_volume(days, windows)
        self.vol_norm_ = vol_norm
        self.params_, self.history_ = train_continual(
            windows, days, self.scenario, config, self.seed, vol_norm
        )
        return self

    def predict(self, observations: np.ndarray) -> np.ndarray:
        """Greedy actions for a batch of observation vectors."""
        self._check_fitted()
        logits, _ = forward(self.params_, np.atleast_2d(observations))
        return logits.argmax(axis=1)

    def predict_proba(self, observations: np.ndarray) -> np.ndarray:
        self._check_fitted()
        logits, _ = forward(self.params_, np.atleast_2d(observations))
        return np.exp(log_softmax(logits))

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("PPOTrader is not fitted; call fit() first")
