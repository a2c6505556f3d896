"""Gaussian-process surrogate with exact inference and gradient-based MLE.

Targets are standardized with the mean and standard deviation of all
observed values and transformed back at prediction.  Hyperparameters are
fitted by maximizing the marginal log-likelihood with Adam in an
unconstrained parameterization (log for positive parameters, scaled logistic
for bounded correlations); families with closed-form kernel derivatives get
analytic gradients, the rest fall back to central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log, pi

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from . import kernels
from .space import InvalidInputError, SearchSpace

__all__ = [
    "TrainingSet",
    "OptimizerConfig",
    "GpState",
    "fit",
    "make_state",
    "mll",
    "predict",
    "predict_batch",
    "NumericFailure",
]

JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)
FD_STEP = 1e-5  # relative step for finite-difference gradients


class NumericFailure(RuntimeError):
    """Covariance factorization failed even after maximal jitter."""


@dataclass(frozen=True)
class TrainingSet:
    """Observed points with raw targets and their standardization statistics."""

    points: np.ndarray  # (m, n) int
    raw_targets: np.ndarray  # (m,)
    mean: float
    std: float

    @classmethod
    def from_observations(cls, space: SearchSpace, points, values) -> "TrainingSet":
        X = space.validate_points(points)
        y = np.asarray(values, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError("one target per point required")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("targets must be finite")
        if y.size < 2:
            # single observation: standardization statistics are undefined
            return cls(X, y, mean=0.0, std=1.0)
        mean = float(np.mean(y))
        std = float(np.std(y))
        if std == 0.0:
            std = 1.0
        return cls(X, y, mean=mean, std=std)

    @property
    def count(self) -> int:
        return int(self.raw_targets.shape[0])

    def standardized(self) -> np.ndarray:
        return (self.raw_targets - self.mean) / self.std

    def destandardize_mean(self, values):
        return self.mean + self.std * np.asarray(values)

    def destandardize_variance(self, values):
        return self.std**2 * np.asarray(values)


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 100
    learning_rate: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    jitter_ladder: tuple = JITTER_LADDER
    initial_noise: float = 1e-3


@dataclass(frozen=True)
class GpState:
    """Fitted surrogate: spec, noise, training set and factored covariance."""

    space: SearchSpace
    spec: kernels.KernelSpec
    noise_variance: float
    train: TrainingSet
    chol_lower: np.ndarray  # L with L @ L.T = K + noise * I
    weights: np.ndarray  # (K + noise * I)^{-1} y_std
    mll_value: float
    variance_clamps: list = field(default_factory=list, repr=False, compare=False)

    def prior_variance(self) -> float:
        """Prior predictive variance in raw target units."""
        diag = kernels.diag_values(self.space, self.spec, self.train.points[:1])
        return float(diag[0]) * self.train.std**2


def _chol_with_jitter(K: np.ndarray, ladder) -> tuple[np.ndarray, float]:
    mean_diag = float(np.mean(np.diag(K)))
    for level in ladder:
        try:
            jitter = level * mean_diag
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericFailure("covariance not factorizable after jitter escalation")


def _gram_for(space, spec, X, M):
    if M is not None and kernels.supports_match(spec):
        return kernels.gram_from_match(space, spec, M)
    return kernels.gram(space, spec, X)


def _mll_parts(space, spec, log_noise, X, M, y, ladder):
    K = _gram_for(space, spec, X, M)
    noise = float(np.exp(log_noise))
    m = y.shape[0]
    L, _ = _chol_with_jitter(K + noise * np.eye(m), ladder)
    alpha = cho_solve((L, True), y)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * m * log(2.0 * pi)
    )
    return value, K, L, alpha, noise


def _mll_and_grad(space, spec, log_noise, X, M, y, ladder):
    """Marginal log-likelihood and its gradient in the unconstrained space."""
    value, K, L, alpha, noise = _mll_parts(space, spec, log_noise, X, M, y, ladder)
    m = y.shape[0]
    K_inv = cho_solve((L, True), np.eye(m))
    W = np.outer(alpha, alpha) - K_inv
    if kernels.has_analytic_grads(spec):
        _, grads = kernels.gram_with_grads(space, spec, M)
        kernel_grad = np.array([0.5 * float(np.sum(W * G)) for G in grads])
    else:
        theta = kernels.pack_spec(space, spec)
        kernel_grad = np.empty(theta.size)
        for j in range(theta.size):
            step = FD_STEP * max(1.0, abs(theta[j]))
            tp = theta.copy(); tp[j] += step
            tm = theta.copy(); tm[j] -= step
            vp, *_ = _mll_parts(
                space, kernels.unpack_spec(space, spec, tp), log_noise, X, M, y, ladder
            )
            vm, *_ = _mll_parts(
                space, kernels.unpack_spec(space, spec, tm), log_noise, X, M, y, ladder
            )
            kernel_grad[j] = (vp - vm) / (2.0 * step)
    noise_grad = 0.5 * float(np.trace(W)) * noise  # dK/d log noise = noise * I
    return value, np.concatenate([kernel_grad, [noise_grad]])


def _adam_ascent(objective, theta0: np.ndarray, config: OptimizerConfig):
    """First-order adaptive ascent; returns the best iterate seen."""
    theta = theta0.copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    best_value, _ = objective(theta, need_grad=False)
    best_theta = theta.copy()
    for t in range(1, config.steps + 1):
        value, grad = objective(theta, need_grad=True)
        if value > best_value:
            best_value, best_theta = value, theta.copy()
        m1 = config.beta1 * m1 + (1 - config.beta1) * grad
        m2 = config.beta2 * m2 + (1 - config.beta2) * grad**2
        m1_hat = m1 / (1 - config.beta1**t)
        m2_hat = m2 / (1 - config.beta2**t)
        theta = theta + config.learning_rate * m1_hat / (np.sqrt(m2_hat) + config.epsilon)
    value, _ = objective(theta, need_grad=False)
    if value > best_value:
        best_value, best_theta = value, theta.copy()
    return best_theta, best_value


def make_state(
    space: SearchSpace,
    train: TrainingSet,
    spec: kernels.KernelSpec,
    noise_variance: float,
    jitter_ladder=JITTER_LADDER,
) -> GpState:
    """Assemble a state from explicit hyperparameters without any fitting."""
    if noise_variance <= 0:
        raise InvalidInputError("noise variance must be > 0")
    kernels.validate_spec(space, spec)
    y = train.standardized()
    M = (
        kernels.match_tensor(space, train.points)
        if kernels.supports_match(spec)
        else None
    )
    value, _, L, alpha, _ = _mll_parts(
        space, spec, log(noise_variance), train.points, M, y, jitter_ladder
    )
    return GpState(
        space=space,
        spec=spec,
        noise_variance=noise_variance,
        train=train,
        chol_lower=L,
        weights=alpha,
        mll_value=value,
    )


def fit(
    space: SearchSpace,
    train: TrainingSet,
    spec: kernels.KernelSpec,
    config: OptimizerConfig = OptimizerConfig(),
    warm_start: kernels.KernelSpec | None = None,
    warm_noise: float | None = None,
) -> GpState:
    """Maximize the marginal log-likelihood; best of the available starts wins.

    Starts from ``spec`` (typically family defaults) and, when given, from
    the previous fit's hyperparameters.  Deterministic: full-batch gradients,
    no stochasticity anywhere.
    """
    if train.count < 2:
        raise InvalidInputError("need at least 2 training points to fit")
    kernels.validate_spec(space, spec)
    y = train.standardized()
    M = (
        kernels.match_tensor(space, train.points)
        if kernels.supports_match(spec)
        else None
    )
    X = train.points

    def objective_for(start_spec):
        def objective(theta, need_grad=True):
            cur = kernels.unpack_spec(space, start_spec, theta[:-1])
            if need_grad:
                return _mll_and_grad(
                    space, cur, theta[-1], X, M, y, config.jitter_ladder
                )
            value, *_ = _mll_parts(
                space, cur, theta[-1], X, M, y, config.jitter_ladder
            )
            return value, None
        return objective

    starts = [(spec, config.initial_noise)]
    if warm_start is not None:
        starts.append((warm_start, warm_noise if warm_noise else config.initial_noise))

    best = None
    for start_spec, start_noise in starts:
        theta0 = np.concatenate(
            [kernels.pack_spec(space, start_spec), [log(start_noise)]]
        )
        theta_opt, value = _adam_ascent(objective_for(start_spec), theta0, config)
        if best is None or value > best[2]:
            best = (start_spec, theta_opt, value)

    start_spec, theta_opt, _ = best
    fitted_spec = kernels.unpack_spec(space, start_spec, theta_opt[:-1])
    fitted_noise = float(np.exp(theta_opt[-1]))
    return make_state(space, train, fitted_spec, fitted_noise, config.jitter_ladder)


def mll(state: GpState) -> float:
    """Marginal log-likelihood of the standardized targets under the state."""
    return state.mll_value


def predict_batch(state: GpState, points) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance in raw target units for each query point."""
    X = state.space.validate_points(points)
    k_star = kernels.cross_gram(state.space, state.spec, X, state.train.points)
    mean_std = k_star @ state.weights
    v = solve_triangular(state.chol_lower, k_star.T, lower=True)
    prior_diag = kernels.diag_values(state.space, state.spec, X)
    var_std = prior_diag - np.sum(v**2, axis=0)
    clamped = var_std < 0
    if np.any(clamped):
        state.variance_clamps.append(int(np.count_nonzero(clamped)))
        var_std = np.maximum(var_std, 0.0)
    return (
        state.train.destandardize_mean(mean_std),
        state.train.destandardize_variance(var_std),
    )


def predict(state: GpState, point) -> tuple[float, float]:
    means, variances = predict_batch(state, [point])
    return float(means[0]), float(variances[0])
