"""Convex objectives with exact gradients and calibrated stochastic oracles.

Two objective families are provided: quadratics (where the optimum, the
optimal value, and the smoothness / strong-convexity constants are all in
closed form) and ridge-regularized logistic regression on a synthetic
dataset (the desk-scale stand-in for large training tasks).  A gradient
oracle wraps an objective with either additive isotropic Gaussian noise of
a prescribed second moment or minibatch sampling over per-worker shards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .quant import GradientVector

__all__ = [
    "QuadraticObjective",
    "LogisticObjective",
    "GradientOracle",
    "make_dataset",
    "loss",
    "full_gradient",
    "sample_gradient",
    "constants",
]


class QuadraticObjective:
    """F(x) = 0.5 x'Hx + A'x + B with symmetric positive-definite H."""

    def __init__(self, H: np.ndarray, A: np.ndarray | None = None, B: float = 0.0):
        H = np.asarray(H, dtype=np.float64)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be a square matrix")
        if not np.allclose(H, H.T, rtol=1e-12, atol=1e-12):
            raise ValueError("H must be symmetric")
        self.H = 0.5 * (H + H.T)
        self.d = H.shape[0]
        self.A = np.zeros(self.d) if A is None else np.asarray(A, dtype=np.float64)
        if self.A.shape != (self.d,):
            raise ValueError("A must be a length-d vector")
        self.B = float(B)
        eigvals = np.linalg.eigvalsh(self.H)
        if eigvals[0] <= 0:
            raise ValueError(f"H must be positive definite (min eigenvalue {eigvals[0]})")
        self._mu = float(eigvals[0])
        self._L = float(eigvals[-1])
        self._x_star: np.ndarray | None = None

    @classmethod
    def isotropic(cls, d: int, lam: float, A: np.ndarray | None = None, B: float = 0.0):
        return cls(lam * np.eye(d), A, B)

    @classmethod
    def random_pd(cls, d: int, mu: float, L: float, rng: np.random.Generator):
        """Random rotation of a spectrum spanning exactly [mu, L]."""
        if d == 1:
            return cls(np.array([[L]]))
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        spectrum = np.linspace(mu, L, d)
        return cls((q * spectrum) @ q.T)

    def loss(self, x: np.ndarray) -> float:
        x = self._check(x)
        return float(0.5 * x @ self.H @ x + self.A @ x + self.B)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return self.H @ x + self.A

    def constants(self) -> tuple[float, float]:
        return self._L, self._mu

    def optimum(self) -> np.ndarray:
        if self._x_star is None:
            self._x_star = np.linalg.solve(self.H, -self.A)
        return self._x_star

    def optimal_value(self) -> float:
        x_star = self.optimum()
        # F(x*) = 0.5 A'x* + B since Hx* = -A
        return float(0.5 * self.A @ x_star + self.B)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError(f"expected a length-{self.d} point, got shape {x.shape}")
        return x


class LogisticObjective:
    """Ridge-regularized logistic regression on a fixed design matrix.

    F(x) = mean_i log(1 + exp(-y_i x_i'x)) + (ridge/2) ||x||^2 with labels
    in {-1, +1}.  Smoothness constant ||X||_op^2 / (4n) + ridge; strong
    convexity equals the ridge weight.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, ridge: float = 0.0):
        X = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("features must be an n x d matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be a length-n vector")
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be +1 or -1")
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        self.X = X
        self.y = y
        self.n, self.d = X.shape
        self.ridge = float(ridge)
        op = float(np.linalg.svd(X, compute_uv=False)[0])
        self._L = op * op / (4.0 * self.n) + self.ridge
        self._mu = self.ridge
        self._x_star: np.ndarray | None = None

    def loss(self, x: np.ndarray) -> float:
        return self.loss_on(slice(None), x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.gradient_on(slice(None), x)

    def loss_on(self, rows, x: np.ndarray) -> float:
        x = self._check(x)
        margins = self.y[rows] * (self.X[rows] @ x)
        data = float(np.mean(np.logaddexp(0.0, -margins)))
        return data + 0.5 * self.ridge * float(x @ x)

    def gradient_on(self, rows, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        Xr = self.X[rows]
        yr = self.y[rows]
        weights = -yr * expit(-yr * (Xr @ x))
        return Xr.T @ weights / Xr.shape[0] + self.ridge * x

    def constants(self) -> tuple[float, float]:
        return self._L, self._mu

    def optimum(self) -> np.ndarray:
        if self._x_star is None:
            res = minimize(
                self.loss,
                np.zeros(self.d),
                jac=self.gradient,
                method="L-BFGS-B",
                options={"gtol": 1e-12, "maxiter": 5000},
            )
            self._x_star = res.x
        return self._x_star

    def optimal_value(self) -> float:
        return self.loss(self.optimum())

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError(f"expected a length-{self.d} point, got shape {x.shape}")
        return x


def make_dataset(
    n: int, d: int, seed: int, label_noise: float = 0.2
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded synthetic classification data: standard-normal features and
    labels from a noisy linear rule."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w_true = rng.standard_normal(d) / np.sqrt(d)
    y = np.sign(X @ w_true + label_noise * rng.standard_normal(n))
    y[y == 0] = 1.0
    return X, y


class GradientOracle:
    """Unbiased per-worker stochastic gradient source.

    noise="gaussian": returns grad F(x) + eps with eps ~ N(0, (sigma^2/d) I),
    so E||g - grad F||^2 equals sigma^2 exactly (sigma = 0 degenerates to the
    exact gradient).

    noise="minibatch": each worker owns a contiguous equal shard of the
    dataset rows and samples batch_size of them without replacement; a batch
    covering the whole shard is deterministic.  Requires a dataset-backed
    objective.  The per-worker second moment is not prescribed here; measure
    it with calibrate().
    """

    def __init__(
        self,
        objective,
        workers: int,
        noise: str = "gaussian",
        sigma: float = 0.0,
        batch_size: int = 32,
        shard_mode: str = "split",
        norm_order: float = 2.0,
    ):
        if workers < 1:
            raise ValueError("need at least one worker")
        if noise not in ("gaussian", "minibatch"):
            raise ValueError(f"unknown noise model {noise!r}")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.objective = objective
        self.W = workers
        self.noise = noise
        self.sigma = float(sigma)
        self.batch_size = int(batch_size)
        self.norm_order = norm_order
        self.shards: list[np.ndarray] | None = None
        if noise == "minibatch":
            if not hasattr(objective, "n"):
                raise ValueError("minibatch noise requires a dataset-backed objective")
            n = objective.n
            if shard_mode == "replicate":
                self.shards = [np.arange(n) for _ in range(workers)]
            elif shard_mode == "split":
                if n % workers != 0:
                    raise ValueError(
                        f"dataset size {n} does not split evenly over {workers} workers"
                    )
                size = n // workers
                self.shards = [
                    np.arange(i * size, (i + 1) * size) for i in range(workers)
                ]
            else:
                raise ValueError(f"unknown shard mode {shard_mode!r}")
            if any(len(s) == 0 for s in self.shards):
                raise ValueError("a worker received an empty shard")
            if self.batch_size < 1:
                raise ValueError("batch_size must be at least 1")

    @property
    def d(self) -> int:
        return self.objective.d

    def mean_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.objective.gradient(x)

    def sample(
        self, worker: int, x: np.ndarray, rng: np.random.Generator
    ) -> GradientVector:
        if not 0 <= worker < self.W:
            raise ValueError(f"worker index {worker} out of range [0, {self.W})")
        if self.noise == "gaussian":
            g = self.objective.gradient(x)
            if self.sigma > 0:
                g = g + rng.normal(0.0, self.sigma / np.sqrt(self.d), size=self.d)
        else:
            shard = self.shards[worker]
            if self.batch_size >= len(shard):
                rows = shard
            else:
                rows = rng.choice(shard, size=self.batch_size, replace=False)
            g = self.objective.gradient_on(rows, x)
        return GradientVector(g, p=self.norm_order)

    def calibrate(
        self, x: np.ndarray, draws: int, rng: np.random.Generator
    ) -> tuple[float, list[float]]:
        """Measure E||g - grad F(x)||^2 per worker; returns (max, per-worker).

        The max across workers is the effective sampling-noise bound used by
        the theory oracles when the model does not prescribe one.
        """
        ref = self.objective.gradient(x)
        per_worker = []
        for i in range(self.W):
            total = 0.0
            for _ in range(draws):
                g = self.sample(i, x, rng)
                diff = g.values - ref
                total += float(diff @ diff)
            per_worker.append(total / draws)
        return max(per_worker), per_worker


def loss(obj, x: np.ndarray) -> float:
    """Exact objective value at x."""
    return obj.loss(x)


def full_gradient(obj, x: np.ndarray, p: float = 2.0) -> GradientVector:
    """Exact gradient at x, wrapped with its l_p norm."""
    return GradientVector(obj.gradient(x), p=p)


def sample_gradient(
    oracle: GradientOracle, worker: int, x: np.ndarray, rng: np.random.Generator
) -> GradientVector:
    """One unbiased stochastic gradient draw for the given worker."""
    return oracle.sample(worker, x, rng)


def constants(obj) -> tuple[float, float]:
    """(L, mu): smoothness and strong-convexity constants."""
    return obj.constants()
