"""Synthetic i.i.d. and Markov-modulated loss panels with known mixing structure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.bounds.constants import GapProfile, MixingProfile
from src.combiner.panel import LossPanel
from src.errors import ConfigError, DimensionMismatchError

NOISE_KINDS = ("bernoulli", "beta")


def _check_means(means: np.ndarray, n_experts: Optional[int]) -> np.ndarray:
    means = np.asarray(means, dtype=float).reshape(-1)
    if means.size < 1:
        raise ConfigError("At least one expert mean is required")
    if n_experts is not None and means.size != n_experts:
        raise DimensionMismatchError("Got {} means for K={}".format(means.size, n_experts))
    if np.any(means < 0.0) or np.any(means > 1.0):
        raise ConfigError("Expert means must lie in [0, 1]: {}".format(means))
    return means


def _rng(seed: int | np.random.SeedSequence | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NoiseSpec:
    """Law of i.i.d. losses: ``bernoulli`` or a Beta with mean ``mu`` and the given concentration."""

    kind: str = "bernoulli"
    concentration: float = 20.0

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ConfigError("Unknown noise kind {!r}, expected one of {}".format(self.kind, NOISE_KINDS))
        if self.concentration <= 0.0:
            raise ConfigError("Beta concentration must be positive, got {}".format(self.concentration))

    def variances(self, means: np.ndarray) -> np.ndarray:
        base = means * (1.0 - means)
        return base if self.kind == "bernoulli" else base / (self.concentration + 1.0)

    def gap_profile(self, means: np.ndarray) -> GapProfile:
        means = _check_means(means, None)
        return GapProfile(means=means, variances=self.variances(means))


def simulate_iid_losses(
    means: np.ndarray,
    noise: NoiseSpec,
    n_rounds: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
    n_experts: Optional[int] = None,
) -> LossPanel:
    """Draw ``n_rounds`` independent loss rows with expert k centred on ``means[k]``."""
    means = _check_means(means, n_experts)
    rng = _rng(seed)
    shape = (int(n_rounds), means.size)
    if noise.kind == "bernoulli":
        losses = (rng.random(shape) < means).astype(float)
    else:
        interior = (means > 0.0) & (means < 1.0)
        safe = np.where(interior, means, 0.5)
        draws = rng.beta(safe * noise.concentration, (1.0 - safe) * noise.concentration, size=shape)
        losses = np.where(interior, draws, means)
    return LossPanel.from_losses(losses, n_experts=means.size)


@dataclass(frozen=True)
class ChainSpec:
    """Two-state Markov modulator shared in law by every expert.

    The chain moves 0 -> 1 with probability ``p`` and 1 -> 0 with probability
    ``q``. Expert k's loss is ``mu_k + a_k * ((1 - s) * c_t + s * u_t)`` where
    ``c_t`` is the centred, unit-scaled chain state, ``u_t`` is uniform on
    [-1, 1], ``s = noise_share`` and ``a_k = amplitude * min(mu_k, 1 - mu_k)``.
    """

    p: float
    q: float
    amplitude: float = 0.5
    noise_share: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ConfigError("Transition probabilities must lie in [0, 1], got p={} q={}".format(self.p, self.q))
        if not 0.0 < self.p + self.q < 2.0:
            raise ConfigError("Chain with p={} q={} has no unique mixing stationary law".format(self.p, self.q))
        if not 0.0 <= self.amplitude <= 1.0 or not 0.0 <= self.noise_share <= 1.0:
            raise ConfigError("Chain amplitude and noise share must lie in [0, 1]")

    @classmethod
    def symmetric(cls, ratio: float, amplitude: float = 0.5, noise_share: float = 0.5) -> "ChainSpec":
        """Chain with ``p = q`` and second eigenvalue ``ratio``."""
        if not -1.0 < ratio < 1.0:
            raise ConfigError("Chain eigenvalue must lie in (-1, 1), got {}".format(ratio))
        switch = (1.0 - ratio) / 2.0
        return cls(p=switch, q=switch, amplitude=amplitude, noise_share=noise_share)

    @property
    def eigenvalue(self) -> float:
        return 1.0 - self.p - self.q

    @property
    def stationary(self) -> Tuple[float, float]:
        total = self.p + self.q
        return self.q / total, self.p / total

    @property
    def mixing(self) -> MixingProfile:
        return MixingProfile.two_state_chain(self.p, self.q)

    def amplitudes(self, means: np.ndarray) -> np.ndarray:
        return self.amplitude * np.minimum(means, 1.0 - means)

    def loss_variances(self, means: np.ndarray) -> np.ndarray:
        pi0, pi1 = self.stationary
        chain_var = pi0 * pi1 / max(pi0, pi1) ** 2
        share = self.noise_share
        return self.amplitudes(means) ** 2 * ((1.0 - share) ** 2 * chain_var + share**2 / 3.0)


def simulate_chain(chain: ChainSpec, n_rounds: int, n_chains: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary 0/1 paths of ``n_chains`` independent copies of ``chain``, shape (n_rounds, n_chains)."""
    pi1 = chain.stationary[1]
    states = np.empty((int(n_rounds), int(n_chains)), dtype=np.int8)
    if n_rounds == 0:
        return states
    draws = rng.random(states.shape)
    current = draws[0] < pi1
    states[0] = current
    for t in range(1, n_rounds):
        leave = np.where(current, chain.q, chain.p)
        current = current ^ (draws[t] < leave)
        states[t] = current
    return states


def simulate_mixing_losses(
    means: np.ndarray,
    chain: ChainSpec,
    n_rounds: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
    n_experts: Optional[int] = None,
) -> Tuple[LossPanel, MixingProfile]:
    """Loss panel driven by independent copies of a two-state chain, one per expert.

    Returns:
        Tuple[LossPanel, MixingProfile]: The panel and the analytic mixing
        coefficients of every expert's loss process.
    """
    means = _check_means(means, n_experts)
    rng = _rng(seed)
    states = simulate_chain(chain, n_rounds, means.size, rng)
    pi0, pi1 = chain.stationary
    centred = (states - pi1) / max(pi0, pi1)
    noise = rng.uniform(-1.0, 1.0, size=states.shape)
    share = chain.noise_share
    losses = means + chain.amplitudes(means) * ((1.0 - share) * centred + share * noise)
    return LossPanel.from_losses(losses, n_experts=means.size), chain.mixing


def chain_gap_profile(means: np.ndarray, chain: ChainSpec) -> GapProfile:
    means = _check_means(means, None)
    return GapProfile(means=means, variances=chain.loss_variances(means))
