"""Gaussian-process surrogate with squared-exponential kernel and Expected
Improvement, driving sequential model-based hyperparameter search over the
learning rate and the entropy coefficient (both log10-scaled).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.stats import norm
from sklearn.base import BaseEstimator

logger = logging.getLogger(__name__)


def se_kernel(x1: np.ndarray, x2: np.ndarray, length_scales, signal_var: float) -> np.ndarray:
    """Squared-exponential covariance between two point sets (n1,d) x (n2,d)."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    x2 = np.atleast_2d(np.asarray(x2, dtype=np.float64))
    ell = np.broadcast_to(np.asarray(length_scales, dtype=np.float64), (x1.shape[1],))
    d = (x1[:, None, :] - x2[None, :, :]) / ell
    return signal_var * np.exp(-0.5 * (d * d).sum(axis=-1))


class GaussianProcess(BaseEstimator):
    """Zero-mean GP regressor with SE kernel and Gaussian observation noise.

    With optimize=True the kernel hyperparameters are fit by maximizing the
    log marginal likelihood over a coarse grid (two dimensions do not warrant
    a gradient optimizer).
    """

    def __init__(
        self,
        length_scales=1.0,
        signal_var: float = 1.0,
        noise_var: float = 1e-6,
        optimize: bool = True,
        jitter: float = 1e-10,
    ):
        self.length_scales = length_scales
        self.signal_var = signal_var
        self.noise_var = noise_var
        self.optimize = optimize
        self.jitter = jitter

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y length mismatch")
        if X.shape[0] < 1:
            raise ValueError("GP needs at least one observation")
        self.X_ = X
        self.y_ = y
        if self.optimize and X.shape[0] >= 2:
            self.kernel_params_ = self._grid_fit(X, y)
        else:
            self.kernel_params_ = (
                np.broadcast_to(
                    np.asarray(self.length_scales, dtype=np.float64), (X.shape[1],)
                ).copy(),
                float(self.signal_var),
                float(self.noise_var),
            )
        ell, sf2, sn2 = self.kernel_params_
        K = se_kernel(X, X, ell, sf2)
        K[np.diag_indices_from(K)] += sn2 + self.jitter
        try:
            self.cho_ = cho_factor(K, lower=True)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"covariance not positive definite ({exc}); increase jitter/noise_var"
            ) from None
        self.alpha_ = cho_solve(self.cho_, y)
        return self

    def _grid_fit(self, X, y):
        n, d = X.shape
        ell_grid = np.logspace(-1.0, 1.0, 7)
        sf2_grid = np.array([0.1, 0.5, 1.0, 2.0, 5.0]) * max(float(np.var(y)), 1e-12)
        sn2_grid = np.array([1e-6, 1e-4, 1e-2, 1e-1]) * max(float(np.var(y)), 1e-12)
        best = None
        # shared length scale across dims on the grid; per-dim values kept in the API
        for ell in ell_grid:
            K0 = se_kernel(X, X, ell, 1.0)
            for sf2 in sf2_grid:
                for sn2 in sn2_grid:
                    K = sf2 * K0
                    K[np.diag_indices_from(K)] += sn2 + self.jitter
                    try:
                        c = cho_factor(K, lower=True)
                    except np.linalg.LinAlgError:
                        continue
                    alpha = cho_solve(c, y)
                    lml = (
                        -0.5 * float(y @ alpha)
                        - float(np.log(np.diag(c[0])).sum())
                        - 0.5 * n * np.log(2 * np.pi)
                    )
                    if best is None or lml > best[0]:
                        best = (lml, ell, sf2, sn2)
        if best is None:
            raise np.linalg.LinAlgError("no positive-definite kernel on the grid")
        _, ell, sf2, sn2 = best
        return np.full(d, ell), float(sf2), float(sn2)

    def predict(self, X, return_std: bool = False):
        """Posterior mean (and latent std) at query points."""
        if not hasattr(self, "X_"):
            raise RuntimeError("GaussianProcess is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        ell, sf2, _ = self.kernel_params_
        Ks = se_kernel(self.X_, X, ell, sf2)
        mu = Ks.T @ self.alpha_
        if not return_std:
            return mu
        L = self.cho_[0]
        v = solve_triangular(L, Ks, lower=True)
        var = sf2 - (v * v).sum(axis=0)
        if np.any(var < -1e-12):
            raise np.linalg.LinAlgError(
                f"posterior variance {var.min():.3e} below tolerance"
            )
        return mu, np.sqrt(np.maximum(var, 0.0))


def expected_improvement(mu, sigma, best_y: float, xi: float = 0.01) -> np.ndarray:
    """EI for maximization; exact max(mu - best_y - xi, 0) in the sigma=0 limit."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    imp = mu - best_y - xi
    out = np.maximum(imp, 0.0)
    pos = sigma > 0
    z = np.zeros_like(mu)
    np.divide(imp, sigma, out=z, where=pos)
    ei = imp * norm.cdf(z) + sigma * norm.pdf(z)
    return np.where(pos, ei, out)


@dataclass(frozen=True)
class SearchSpace:
    """Log10-scaled box over (learning_rate, entropy_coef)."""

    learning_rate: tuple[float, float] = (1e-5, 1e-2)
    entropy_coef: tuple[float, float] = (1e-4, 1e-1)

    def __post_init__(self):
        for lo, hi in (self.learning_rate, self.entropy_coef):
            if not 0 < lo < hi:
                raise ValueError("bounds must satisfy 0 < lower < upper")

    @property
    def log_bounds(self) -> np.ndarray:
        return np.log10(np.array([self.learning_rate, self.entropy_coef]))

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        b = self.log_bounds
        return rng.uniform(b[:, 0], b[:, 1], size=(n, 2))

    def to_values(self, x_log: np.ndarray) -> tuple[float, float]:
        return float(10.0 ** x_log[0]), float(10.0 ** x_log[1])


def propose_next(
    gp: GaussianProcess | None,
    space: SearchSpace,
    rng: np.random.Generator,
    best_y: float | None = None,
    xi: float = 0.01,
    n_grid: int = 10_000,
) -> np.ndarray:
    """Argmax of EI over a random grid in log space; random point with no model."""
    if gp is None or not hasattr(gp, "X_"):
        return space.sample(rng)[0]
    grid = space.sample(rng, n_grid)
    mu, sigma = gp.predict(grid, return_std=True)
    if best_y is None:
        best_y = float(gp.y_.max())
    ei = expected_improvement(mu, sigma, best_y, xi)
    if not np.any(ei > 0):
        logger.warning("expected improvement is zero everywhere; exploring at random")
        return space.sample(rng)[0]
    return grid[int(np.argmax(ei))]


@dataclass
class Trial:
    trial_id: int
    learning_rate: float
    entropy_coef: float
    objective: float
    failed: bool = False


@dataclass
class TuneResult:
    trials: list[Trial] = field(default_factory=list)

    @property
    def best(self) -> Trial:
        ok = [t for t in self.trials if not t.failed] or self.trials
        return max(ok, key=lambda t: t.objective)


def tune(
    objective,
    space: SearchSpace,
    budget: int,
    seed,
    n_init: int = 3,
    xi: float = 0.01,
) -> TuneResult:
    """SMBO loop: propose -> evaluate -> refit, maximizing the objective.

    `objective(learning_rate, entropy_coef) -> float` (validation cumulative
    profit in the real pipeline). A failing trial is scored at the worst
    observed value minus one standard deviation and the loop continues.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    result = TuneResult()
    X: list[np.ndarray] = []
    y: list[float] = []
    failed_idx: list[int] = []
    for trial_id in range(budget):
        if len(y) < n_init or len(set(y)) < 2:
            x = space.sample(rng)[0]
        else:
            yarr = np.asarray(y)
            z = (yarr - yarr.mean()) / (yarr.std() + 1e-12)
            gp = GaussianProcess().fit(np.asarray(X), z)
            x = propose_next(gp, space, rng, best_y=float(z.max()), xi=xi)
        lr, ec = space.to_values(x)
        try:
            score = float(objective(lr, ec))
            failed = False
        except Exception as exc:  # noqa: BLE001 - a bad trial must not kill the search
            logger.warning("trial %d (lr=%.3g, ent=%.3g) failed: %s", trial_id, lr, ec, exc)
            score = float("nan")
            failed = True
        X.append(x)
        if failed:
            ok = [v for i, v in enumerate(y) if i not in failed_idx]
            if ok:
                score = float(np.min(ok) - np.std(ok))
            else:
                score = 0.0
            failed_idx.append(trial_id)
        y.append(score)
        result.trials.append(
            Trial(trial_id=trial_id, learning_rate=lr, entropy_coef=ec, objective=score, failed=failed)
        )
    return result
