"""Actor-critic MLP: shared tanh trunk, action-logit and value heads.

Everything is plain float64 numpy with hand-written reverse-mode gradients and
an Adam optimizer, so the whole training path is auditable against finite
differences.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

import numpy as np

N_ACTIONS = 4


class NumericalError(RuntimeError):
    """Non-finite value encountered during training."""


@dataclass
class PolicyParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W_act: np.ndarray
    b_act: np.ndarray
    W_val: np.ndarray
    b_val: np.ndarray

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def copy(self) -> "PolicyParams":
        return PolicyParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(**{k: np.zeros_like(v) for k, v in self.items()})

    @property
    def obs_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> tuple[int, int]:
        return (self.W1.shape[0], self.W2.shape[0])


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix the sign ambiguity of the factorization
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(
    obs_dim: int, hidden: tuple[int, int] = (64, 64), rng: np.random.Generator | None = None
) -> PolicyParams:
    """Orthogonal-style init: gain sqrt(2) for the trunk, 0.01/1.0 for the heads."""
    if rng is None:
        rng = np.random.default_rng(0)
    h1, h2 = hidden
    return PolicyParams(
        W1=_orthogonal(rng, h1, obs_dim, np.sqrt(2.0)),
        b1=np.zeros(h1),
        W2=_orthogonal(rng, h2, h1, np.sqrt(2.0)),
        b2=np.zeros(h2),
        W_act=_orthogonal(rng, N_ACTIONS, h2, 0.01),
        b_act=np.zeros(N_ACTIONS),
        W_val=_orthogonal(rng, 1, h2, 1.0),
        b_val=np.zeros(1),
    )


def forward(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray | float]:
    """Logits and value estimate for one observation or a batch."""
    single = obs.ndim == 1
    X = obs[None, :] if single else obs
    logits, values, _ = _forward_cached(params, X)
    if single:
        return logits[0], float(values[0])
    return logits, values


def _forward_cached(params: PolicyParams, X: np.ndarray):
    if X.shape[1] != params.obs_dim:
        raise ValueError(
            f"observation dim {X.shape[1]} does not match params dim {params.obs_dim}"
        )
    h1 = np.tanh(X @ params.W1.T + params.b1)
    h2 = np.tanh(h1 @ params.W2.T + params.b2)
    logits = h2 @ params.W_act.T + params.b_act
    values = (h2 @ params.W_val.T + params.b_val)[:, 0]
    return logits, values, (X, h1, h2)


def backward_trunk(
    params: PolicyParams,
    cache,
    dlogits: np.ndarray,
    dvalues: np.ndarray,
) -> PolicyParams:
    """Backprop head gradients through the shared trunk."""
    X, h1, h2 = cache
    g = params.zeros_like()
    g.W_act = dlogits.T @ h2
    g.b_act = dlogits.sum(axis=0)
    g.W_val = (dvalues[None, :] @ h2)
    g.b_val = np.array([dvalues.sum()])
    dh2 = dlogits @ params.W_act + dvalues[:, None] * params.W_val[0][None, :]
    dz2 = dh2 * (1.0 - h2 * h2)
    g.W2 = dz2.T @ h1
    g.b2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.W2
    dz1 = dh1 * (1.0 - h1 * h1)
    g.W1 = dz1.T @ X
    g.b1 = dz1.sum(axis=0)
    return g


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def log_prob_entropy(logits: np.ndarray, actions) -> tuple[np.ndarray, np.ndarray]:
    """Log-probability of the taken actions and policy entropy, batched or single."""
    single = logits.ndim == 1
    L = logits[None, :] if single else logits
    a = np.atleast_1d(np.asarray(actions, dtype=np.int64))
    logp_all = log_softmax(L)
    p = np.exp(logp_all)
    logp = logp_all[np.arange(L.shape[0]), a]
    entropy = -(p * logp_all).sum(axis=-1)
    if single:
        return float(logp[0]), float(entropy[0])
    return logp, entropy


def sample_action(logits: np.ndarray, rng: np.random.Generator) -> int:
    """Categorical draw from softmax(logits)."""
    if not np.all(np.isfinite(logits)):
        raise NumericalError(f"non-finite logits: {logits}")
    p = np.exp(log_softmax(logits))
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1]), N_ACTIONS - 1))


class Adam:
    """Standard Adam; moments mirror the parameter structure."""

    def __init__(self, params: PolicyParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()

    def step(self, params: PolicyParams, grads: PolicyParams, lr: float) -> PolicyParams:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {name}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        out = {}
        for name, w in params.items():
            g = getattr(grads, name)
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m[...] = self.beta1 * m + (1 - self.beta1) * g
            v[...] = self.beta2 * v + (1 - self.beta2) * (g * g)
            out[name] = w - lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return PolicyParams(**out)


def global_grad_norm(grads: PolicyParams) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for _, g in grads.items())))


def clip_grads(grads: PolicyParams, max_norm: float) -> tuple[PolicyParams, bool]:
    norm = global_grad_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, False
    scale = max_norm / norm
    return PolicyParams(**{k: g * scale for k, g in grads.items()}), True


CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | os.PathLike, params: PolicyParams, meta: dict | None = None) -> None:
    """Versioned JSON tensor dump; float64 values round-trip bit-exactly."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "arrays": {
            name: {"shape": list(a.shape), "data": a.reshape(-1).tolist()}
            for name, a in params.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | os.PathLike) -> tuple[PolicyParams, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    arrays = {
        name: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in doc["arrays"].items()
    }
    return PolicyParams(**arrays), doc.get("meta", {})
