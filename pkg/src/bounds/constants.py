"""Closed-form regret bound constants for FTL and Hedge-family combiners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger

from src.errors import BoundError, ConfigError

GEOMETRIC_TAIL_TOL = 1e-17
MAX_COEFFICIENTS = 100_000


@dataclass(frozen=True, eq=False)
class GapProfile:
    """Expected losses and (excess) loss variances of K stochastic experts.

    ``excess_variances[k]`` is the variance of ``l_k - l_best``; it is zero
    for the best expert itself.
    """

    means: np.ndarray
    variances: np.ndarray
    excess_variances: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        if means.ndim != 1 or means.shape != variances.shape:
            raise ConfigError("Means and variances must be vectors of the same length")
        if np.any(means < 0.0) or np.any(means > 1.0):
            raise ConfigError("Expected losses must lie in [0, 1]: {}".format(means))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        if self.excess_variances is None:
            excess = variances + variances[self.best]
            excess[self.best] = 0.0
            object.__setattr__(self, "excess_variances", excess)
        else:
            object.__setattr__(self, "excess_variances", np.asarray(self.excess_variances, dtype=float))

    @classmethod
    def bernoulli(cls, means: np.ndarray) -> "GapProfile":
        means = np.asarray(means, dtype=float)
        return cls(means=means, variances=means * (1.0 - means))

    @property
    def n_experts(self) -> int:
        return int(self.means.shape[0])

    @property
    def best(self) -> int:
        return int(np.argmin(self.means))

    @property
    def delta(self) -> float:
        if self.n_experts < 2:
            return math.inf
        others = np.delete(self.means, self.best)
        return float(others.min() - self.means[self.best])

    @property
    def vmax(self) -> float:
        return float(self.variances.max())

    @property
    def excess_vmax(self) -> float:
        if self.n_experts < 2:
            return 0.0
        return float(np.delete(self.excess_variances, self.best).max())


@dataclass(frozen=True, eq=False)
class MixingProfile:
    """phi-mixing coefficients ``phi_1, phi_2, ...`` of a stationary loss process.

    Coefficients beyond the stored ones are taken to be zero.
    """

    coefficients: np.ndarray

    def __post_init__(self) -> None:
        coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if np.any(coefficients < 0.0) or np.any(coefficients > 1.0):
            raise ConfigError("Mixing coefficients must lie in [0, 1]")
        if np.any(np.diff(coefficients) > 0.0):
            logger.warning("Mixing coefficients are not nonincreasing")
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def geometric(cls, ratio: float, scale: float = 1.0) -> "MixingProfile":
        """``phi_n = scale * |ratio| ** n``, truncated once terms drop below 1e-17."""
        ratio = abs(ratio)
        if ratio >= 1.0:
            raise ConfigError("Geometric mixing needs |ratio| < 1, got {}".format(ratio))
        if ratio == 0.0 or scale == 0.0:
            return cls(coefficients=np.zeros(0))
        n_terms = int(math.ceil(math.log(GEOMETRIC_TAIL_TOL / scale) / math.log(ratio)))
        n_terms = min(max(n_terms, 1), MAX_COEFFICIENTS)
        return cls(coefficients=scale * ratio ** np.arange(1, n_terms + 1))

    @classmethod
    def two_state_chain(cls, p: float, q: float) -> "MixingProfile":
        """Coefficients of a stationary two-state chain with switch probabilities ``p`` (0->1) and ``q`` (1->0).

        ``phi_n = max(pi_0, pi_1) * |1 - p - q| ** n``: the largest total-variation
        distance between the n-step law from a fixed state and the stationary law.
        """
        if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0) or not 0.0 < p + q < 2.0:
            raise ConfigError("Two-state chain with p={}, q={} is not ergodic and aperiodic".format(p, q))
        stationary_max = max(q, p) / (p + q)
        return cls.geometric(1.0 - p - q, scale=stationary_max)

    @classmethod
    def independent(cls) -> "MixingProfile":
        return cls(coefficients=np.zeros(0))

    def excess(self) -> "MixingProfile":
        """Coefficients bounding ``l_k - l_j`` for two independent processes with these coefficients."""
        return MixingProfile(coefficients=np.minimum(1.0, 2.0 * self.coefficients))

    @property
    def sum_phi(self) -> float:
        return float(self.coefficients.sum())

    @property
    def sum_sqrt_phi(self) -> float:
        return float(np.sqrt(self.coefficients).sum())

    @property
    def theta_h(self) -> float:
        return 1.0 + 4.0 * self.sum_phi

    @property
    def theta_b(self) -> float:
        return (1.0 + self.sum_sqrt_phi) ** 2

    @property
    def rho_h(self) -> float:
        return 1.0 + self.sum_phi

    @property
    def rho_b(self) -> float:
        return 1.0 + self.sum_sqrt_phi

    def warmup_expression(self) -> str:
        """Implicit warm-up time of the geometric-mixing Bernstein case, left unsolved."""
        return "t0* = ceil(inf{t >= 1 : t * Delta^2 / (8 * theta_B * (8 v_max + Delta) * log(t)^(2/gamma)) >= log K})"


class BoundTerms(NamedTuple):
    hoeffding: float
    bernstein: float

    @property
    def value(self) -> float:
        return min(self.hoeffding, self.bernstein)


class WorstCaseBounds(NamedTuple):
    decreasing: float
    optimal_constant: float
    adahedge: float


def _check_gap(profile: GapProfile, n_experts: int, min_experts: int, label: str) -> Tuple[float, float]:
    if n_experts < min_experts:
        raise BoundError("{} bounds assume K >= {}, got K={}".format(label, min_experts, n_experts))
    delta = profile.delta
    if not delta > 0.0:
        raise BoundError("{} bounds need a positive sub-optimality gap, got Delta={}".format(label, delta))
    return delta, math.log(n_experts)


def ftl_bound_terms(profile: GapProfile, mixing: Optional[MixingProfile], n_experts: int) -> BoundTerms:
    delta, log_k = _check_gap(profile, n_experts, 2, "FTL")
    if mixing is None:
        hoeffding = 2.0 + (2.0 * log_k + 4.0) / delta**2
        bernstein = 2.0 + (8.0 * profile.vmax + 4.0 * delta / 3.0) * (math.log(2 * n_experts) + 2.0) / delta**2
    else:
        hoeffding = 3.0 + 8.0 * mixing.theta_h * (log_k + 4.0) / delta**2
        bernstein = 2.0 + 8.0 * mixing.theta_b * (8.0 * profile.vmax + delta) * (log_k + 2.0) / delta**2
    return BoundTerms(hoeffding=hoeffding, bernstein=bernstein)


def ftl_bound(profile: GapProfile, mixing: Optional[MixingProfile], n_experts: int) -> float:
    """Bound on the expected FTL regret, uniform in the horizon.

    Args:
        profile: Expected losses and variances of the experts.
        mixing: Mixing coefficients of the loss processes, ``None`` for i.i.d. losses.
        n_experts: Number of experts K.

    Returns:
        float: The smaller of the Hoeffding- and Bernstein-type constants.

    Raises:
        BoundError: If ``Delta <= 0`` or ``K < 2``.
    """
    return ftl_bound_terms(profile, mixing, n_experts).value


def hedge_bound_terms(profile: GapProfile, mixing: Optional[MixingProfile], n_experts: int) -> BoundTerms:
    delta, log_k = _check_gap(profile, n_experts, 3, "Decreasing Hedge")
    v_tilde = profile.excess_vmax
    if mixing is None:
        hoeffding = (4.0 * delta * log_k + 25.0) / delta**2
        bernstein = (
            1.0
            + math.sqrt(log_k)
            + (4.0 * math.sqrt(2.0 / 3.0) * delta * log_k + 8.0 * (v_tilde + delta / 3.0) + 16.0) / delta**2
        )
    else:
        rho_h, rho_b = mixing.rho_h, mixing.rho_b
        hoeffding = 2.0 + (1.0 + 3.0 * rho_h) * (delta * log_k + 16.0) / delta**2
        bernstein = (
            1.0
            + math.sqrt(log_k)
            + (4.0 * math.sqrt(5.0) * rho_b * delta * log_k + 16.0 * rho_b**2 * (4.0 * v_tilde + delta) + 16.0)
            / delta**2
        )
    return BoundTerms(hoeffding=hoeffding, bernstein=bernstein)


def hedge_bound(profile: GapProfile, mixing: Optional[MixingProfile], n_experts: int) -> float:
    """Bound on the expected regret of decreasing Hedge with ``c0 = 2``.

    ``mixing`` describes the excess-loss processes ``l_k - l_best`` (see
    ``MixingProfile.excess``), ``None`` for i.i.d. losses.

    Raises:
        BoundError: If ``K < 3`` or ``Delta <= 0``.
    """
    return hedge_bound_terms(profile, mixing, n_experts).value


def worstcase_hedge_bound(horizon: int, n_experts: int, s_cap: float = 1.0) -> WorstCaseBounds:
    """Anytime decreasing-Hedge, tuned constant-Hedge and AdaHedge worst-case regret bounds."""
    if horizon < 1 or n_experts < 2:
        raise BoundError("Worst-case bounds need T >= 1 and K >= 2, got T={} K={}".format(horizon, n_experts))
    log_k = math.log(n_experts)
    return WorstCaseBounds(
        decreasing=math.sqrt(horizon * log_k),
        optimal_constant=s_cap * math.sqrt(horizon * log_k / 2.0),
        adahedge=s_cap * math.sqrt(horizon * log_k) + s_cap * (4.0 / 3.0 * log_k + 2.0),
    )


def adahedge_pathwise_bound(sum_sq_range: float, max_range: float, n_experts: int) -> float:
    log_k = math.log(n_experts)
    return math.sqrt(sum_sq_range * log_k) + max_range * (4.0 / 3.0 * log_k + 2.0)


def ftl_pathwise_bound(max_range: float, leader_changes: int) -> float:
    return max_range * leader_changes
