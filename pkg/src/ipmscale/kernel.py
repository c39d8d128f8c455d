"""Demographic redistribution kernel and its component vital rates.

The kernel combines a survival-weighted Gaussian growth density with a
recruitment term whose new individuals enter just above the lower trait
bound, and a log-linear climate multiplier. Both survival and recruitment
respond to current total population size.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError

_SQRT2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class ClimateRecord:
    """Plot-year climate: mean winter temperature (C) and annual precipitation (mm)."""

    winter_temp: float
    annual_precip: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.winter_temp) and np.isfinite(self.annual_precip)):
            raise DomainError("climate values must be finite")
        if self.annual_precip < 0:
            raise DomainError(f"annual precipitation {self.annual_precip} must be >= 0")

    def design(self) -> np.ndarray:
        """Covariate vector with a leading intercept."""
        return np.array([1.0, self.winter_temp, self.annual_precip])


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Kernel parameters.

    q0 : survival odds at zero population size (survival there is q0/(1+q0)).
    q1 : decay of survival odds with population size.
    sigma : growth increment standard deviation.
    delta0 : log recruitment rate at zero population size.
    delta1 : decay of log recruitment with population size.
    eta : recruit-size decay above the lower trait bound.
    beta : climate coefficients; length matches the covariate vector.
    mu : mean growth increment.
    """

    q0: float
    q1: float
    sigma: float
    delta0: float
    delta1: float
    eta: float
    beta: np.ndarray = field(default_factory=lambda: np.zeros(1))
    mu: float = 0.0

    def __post_init__(self) -> None:
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise DomainError("beta must be a finite vector")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if not self.q0 > 0:
            raise DomainError(f"q0 {self.q0} must be positive")
        if self.q1 < 0:
            raise DomainError(f"q1 {self.q1} must be nonnegative")
        if not self.sigma > 0:
            raise DomainError(f"sigma {self.sigma} must be positive")
        if self.delta0 < 0:
            raise DomainError(f"delta0 {self.delta0} must be nonnegative")
        if self.delta1 < 0:
            raise DomainError(f"delta1 {self.delta1} must be nonnegative")
        if not self.eta > 0:
            raise DomainError(f"eta {self.eta} must be positive")
        if not np.isfinite(self.mu):
            raise DomainError("mu must be finite")


def covariate_vector(z) -> np.ndarray:
    """Coerce a climate record, scalar level, or sequence to a covariate vector."""
    if isinstance(z, ClimateRecord):
        return z.design()
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise DomainError("covariate must be a finite vector or scalar")
    return arr


def climate_scale(z, params: KernelParams) -> float:
    """Multiplier exp(z . beta); the covariate and beta lengths must agree."""
    design = covariate_vector(z)
    if design.shape != params.beta.shape:
        raise DomainError(
            f"covariate length {design.size} does not match beta length {params.beta.size}"
        )
    return float(np.exp(design @ params.beta))


def _check_pop(gamma_dot: float) -> float:
    gamma_dot = float(gamma_dot)
    if not np.isfinite(gamma_dot) or gamma_dot < 0:
        raise DomainError(f"population size {gamma_dot} must be finite and nonnegative")
    return gamma_dot


def survival_prob(params: KernelParams, gamma_dot: float) -> float:
    """Survival probability at total population size gamma_dot; always in (0, 1)."""
    gamma_dot = _check_pop(gamma_dot)
    return float(expit(np.log(params.q0) - params.q1 * gamma_dot))


def recruitment_rate(params: KernelParams, gamma_dot: float) -> float:
    """Per-capita recruitment exp(delta0 - delta1 * gamma_dot)."""
    gamma_dot = _check_pop(gamma_dot)
    return float(np.exp(params.delta0 - params.delta1 * gamma_dot))


def growth_density(increment, params: KernelParams):
    """Gaussian density of a size increment (mean mu, sd sigma)."""
    increment = np.asarray(increment, dtype=float)
    u = (increment - params.mu) / params.sigma
    out = np.exp(-0.5 * u * u) / (params.sigma * _SQRT2PI)
    return float(out) if out.ndim == 0 else out


def recruit_density(size, params: KernelParams, lower: float):
    """Recruit size density eta * exp(-eta * (size - lower)) on [lower, inf)."""
    size = np.asarray(size, dtype=float)
    if np.any(size < lower):
        raise DomainError(f"recruit sizes below the lower trait bound {lower}")
    out = params.eta * np.exp(-params.eta * (size - lower))
    return float(out) if out.ndim == 0 else out


def kernel_eval(y, x, z, params: KernelParams, gamma_dot: float, lower: float):
    """Kernel density K(y; x) at population size gamma_dot under climate z."""
    q = survival_prob(params, gamma_dot)
    delta = recruitment_rate(params, gamma_dot)
    scale = climate_scale(z, params)
    out = scale * (
        q * growth_density(np.asarray(y, dtype=float) - np.asarray(x, dtype=float), params)
        + delta * recruit_density(y, params, lower)
    )
    return float(out) if np.ndim(out) == 0 else out


def population_update(gamma_dot: float, z, params: KernelParams) -> float:
    """Next total population size (q + Delta) * exp(z . beta) * gamma_dot."""
    gamma_dot = _check_pop(gamma_dot)
    q = survival_prob(params, gamma_dot)
    delta = recruitment_rate(params, gamma_dot)
    return (q + delta) * climate_scale(z, params) * gamma_dot
