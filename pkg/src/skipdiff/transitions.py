"""Closed-form skip transitions: jump from x_t directly to x_{t-k}.

Three operator families, all pure and safe for unrestricted concurrent use:

  * DDPM posterior skip -- Bayes posterior q(x_{t-k} | x_t, x_0):
        mu' = [sqrt(abar_t/abar_{t-k}) (1-abar_{t-k}) x_t
               + sqrt(abar_{t-k}) (1-abar_t/abar_{t-k}) x_0] / (1-abar_t)
        var = (1-abar_t/abar_{t-k}) (1-abar_{t-k}) / (1-abar_t)
  * DDIM marginal-consistency skip with coefficients
        kappa = sqrt(1-abar_{t-k}-sigma^2) / sqrt(1-abar_t)
        lambda = sqrt(abar_{t-k}) - kappa sqrt(abar_t)
  * Euler ODE skip -- one fused integration step across k grid intervals.

Noise z is always injected by the caller; nothing here samples, so the
parallel scheduler's determinism contract holds by construction.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import IndexOutOfRange, InvalidSkip, TimestepOutOfRange, VarianceTooLarge
from .schedule import NoiseSchedule, SigmaGrid


class VarianceKind(Enum):
    DETERMINISTIC = "deterministic"
    DDPM_INDUCED = "ddpm"
    ETA = "eta"


@dataclass(frozen=True)
class VarianceRule:
    """Transition-std policy sigma_{t,k}: zero (deterministic), the
    DDPM-induced value, or an eta-scaled fraction of it."""

    kind: VarianceKind
    eta: float = 0.0

    def __post_init__(self):
        if self.kind is VarianceKind.ETA and not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    @classmethod
    def deterministic(cls):
        return cls(VarianceKind.DETERMINISTIC)

    @classmethod
    def ddpm_induced(cls):
        return cls(VarianceKind.DDPM_INDUCED)

    @classmethod
    def eta_scaled(cls, eta: float):
        return cls(VarianceKind.ETA, eta=eta)

    @property
    def stochastic(self) -> bool:
        return self.kind is VarianceKind.DDPM_INDUCED or (
            self.kind is VarianceKind.ETA and self.eta > 0.0
        )

    def sigma(self, s: NoiseSchedule, t: int, k: int) -> float:
        """sigma_{t,k} for the transition t -> t-k."""
        if self.kind is VarianceKind.DETERMINISTIC:
            return 0.0
        induced = math.sqrt(_ddpm_skip_variance(s, t, k))
        if self.kind is VarianceKind.DDPM_INDUCED:
            return induced
        return self.eta * induced


@dataclass(frozen=True)
class SkipCoeffs:
    """DDIM skip coefficients: x_{t-k} = kappa x_t + lambda x_0 + sigma z."""

    kappa: float
    lam: float
    sigma: float


@dataclass(frozen=True)
class SkipPosterior:
    """Isotropic Gaussian q(x_{t-k} | x_t, x_0)."""

    mean: np.ndarray
    variance: float


def _check_skip(s: NoiseSchedule, t: int, k: int):
    if k < 1:
        raise InvalidSkip(f"k={k} must be >= 1")
    if t > s.T or k > t:
        raise TimestepOutOfRange(f"(t={t}, k={k}) outside 1 <= k <= t <= {s.T}")


def _ddpm_skip_variance(s: NoiseSchedule, t: int, k: int) -> float:
    _check_skip(s, t, k)
    a_t = s.alpha_bar[t]
    a_s = s.alpha_bar[t - k]
    return (1.0 - a_t / a_s) * (1.0 - a_s) / (1.0 - a_t)


def ddpm_skip_posterior(
    s: NoiseSchedule, t: int, k: int, x_t: np.ndarray, x0_hat: np.ndarray
) -> SkipPosterior:
    """k-step analogue of the one-step DDPM posterior."""
    _check_skip(s, t, k)
    a_t = s.alpha_bar[t]
    a_s = s.alpha_bar[t - k]
    ratio = a_t / a_s
    denom = 1.0 - a_t
    mean = (np.sqrt(ratio) * (1.0 - a_s) * x_t + np.sqrt(a_s) * (1.0 - ratio) * x0_hat) / denom
    variance = (1.0 - ratio) * (1.0 - a_s) / denom
    return SkipPosterior(mean=mean, variance=variance)


def ddpm_skip_sample(
    s: NoiseSchedule,
    t: int,
    k: int,
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    z: np.ndarray | None,
) -> np.ndarray:
    """mean + sqrt(variance) * z. z may be None only when the variance is 0
    (the skip-to-0 degeneracy)."""
    post = ddpm_skip_posterior(s, t, k, x_t, x0_hat)
    if post.variance == 0.0:
        return post.mean
    if z is None:
        raise ValueError("z required for a stochastic transition")
    return post.mean + math.sqrt(post.variance) * z


def ddim_skip_coeffs(s: NoiseSchedule, t: int, k: int, rule: VarianceRule) -> SkipCoeffs:
    """Coefficients solving the marginal-consistency constraints
    lambda + kappa sqrt(abar_t) = sqrt(abar_{t-k}) and
    kappa^2 (1-abar_t) + sigma^2 = 1 - abar_{t-k}."""
    _check_skip(s, t, k)
    a_t = s.alpha_bar[t]
    a_s = s.alpha_bar[t - k]
    sigma = rule.sigma(s, t, k)
    radicand = 1.0 - a_s - sigma * sigma
    if radicand < 0.0:
        raise VarianceTooLarge(
            f"sigma^2={sigma * sigma} exceeds 1 - alpha_bar[{t - k}]={1.0 - a_s}"
        )
    kappa = math.sqrt(radicand) / math.sqrt(1.0 - a_t)
    lam = math.sqrt(a_s) - kappa * math.sqrt(a_t)
    return SkipCoeffs(kappa=kappa, lam=lam, sigma=sigma)


def ddim_skip(
    s: NoiseSchedule,
    t: int,
    k: int,
    x_t: np.ndarray,
    eps: np.ndarray,
    rule: VarianceRule,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """DDIM skip update:

        x_{t-k} = sqrt(abar_{t-k}) x0_hat + sqrt(1-abar_{t-k}-sigma^2) eps + sigma z,
        x0_hat  = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t).
    """
    _check_skip(s, t, k)
    a_t = s.alpha_bar[t]
    a_s = s.alpha_bar[t - k]
    coeffs = ddim_skip_coeffs(s, t, k, rule)
    x0_hat = (x_t - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)
    out = math.sqrt(a_s) * x0_hat + math.sqrt(1.0 - a_s - coeffs.sigma**2) * eps
    if coeffs.sigma > 0.0:
        if z is None:
            raise ValueError("z required for a stochastic transition")
        out = out + coeffs.sigma * z
    return out


def euler_skip(g: SigmaGrid, i: int, k: int, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Fused Euler step across k grid intervals: x + (sigma_{i+k} - sigma_i) v."""
    if k < 1:
        raise InvalidSkip(f"k={k} must be >= 1")
    if i < 0 or i + k > g.N:
        raise IndexOutOfRange(f"(i={i}, k={k}) outside 0 <= i, i+k <= {g.N}")
    return x + (g.sigmas[i + k] - g.sigmas[i]) * v
