"""Leaky echo state network reservoirs.

State equation::

    x_t = alpha * x_{t-1} + (1 - alpha) * tanh(rho * A x_{t-1} + gamma * C z_t + sigma * zeta)

with ``A`` scaled to unit spectral radius and ``C``, ``zeta`` to unit norm.
Matrices are regenerated from ``(dims, sparsity, seed, distributions)`` and
never stored.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from src.errors import (
    ConfigError,
    DimensionMismatchError,
    InsufficientDataError,
    NonFiniteInputError,
    ReservoirSamplingError,
)

DENSE_EIG_MAX_DIM = 256
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
MIN_SPECTRAL_RADIUS = 1e-12
MAX_RESAMPLES = 100

_ENTRY_DISTRIBUTIONS = ("normal", "uniform")
_SHIFT_DISTRIBUTIONS = ("zero", "normal", "uniform")
_NORMS = ("fro", "spectral")


@dataclass(frozen=True)
class HyperParams:
    """Leak rate, spectral scale, input scale and shift scale of a reservoir.

    ``rho = 0`` is accepted and gives a memoryless reservoir.
    """

    alpha: float = 0.1
    rho: float = 0.5
    gamma: float = 1.0
    sigma_shift: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("Leak rate alpha must lie in [0, 1), got {}".format(self.alpha))
        if not self.rho >= 0.0:
            raise ConfigError("Spectral scale rho must be >= 0, got {}".format(self.rho))
        if not self.gamma > 0.0:
            raise ConfigError("Input scale gamma must be > 0, got {}".format(self.gamma))
        if not self.sigma_shift >= 0.0:
            raise ConfigError("Shift scale must be >= 0, got {}".format(self.sigma_shift))


@dataclass(frozen=True)
class ReservoirDistributions:
    state: str = "normal"
    input: str = "uniform"
    shift: str = "zero"
    norm: str = "fro"

    def __post_init__(self) -> None:
        if self.state not in _ENTRY_DISTRIBUTIONS or self.input not in _ENTRY_DISTRIBUTIONS:
            raise ConfigError("Matrix entry distributions must be one of {}".format(_ENTRY_DISTRIBUTIONS))
        if self.shift not in _SHIFT_DISTRIBUTIONS:
            raise ConfigError("Shift distribution must be one of {}".format(_SHIFT_DISTRIBUTIONS))
        if self.norm not in _NORMS:
            raise ConfigError("Norm must be one of {}".format(_NORMS))


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    dim_state: int
    dim_input: int
    a_bar: np.ndarray = field(repr=False)
    c_bar: np.ndarray = field(repr=False)
    zeta_bar: np.ndarray = field(repr=False)
    sparsity: float
    hyper: HyperParams
    seed: int
    distributions: ReservoirDistributions = ReservoirDistributions()
    attempt: int = 0

    def with_hyper(self, hyper: HyperParams) -> "ReservoirSpec":
        return replace(self, hyper=hyper)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dim_state": self.dim_state,
            "dim_input": self.dim_input,
            "sparsity": self.sparsity,
            "seed": self.seed,
            "hyper": asdict(self.hyper),
            "distributions": asdict(self.distributions),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ReservoirSpec":
        return sample_reservoir(
            dim_state=int(payload["dim_state"]),
            dim_input=int(payload["dim_input"]),
            sparsity=float(payload["sparsity"]),
            seed=int(payload["seed"]),
            hyper=HyperParams(**payload.get("hyper", {})),
            distributions=ReservoirDistributions(**payload.get("distributions", {})),
        )


def _matrix_norm(matrix: np.ndarray, norm: str) -> float:
    if norm == "spectral":
        return float(np.linalg.norm(matrix, 2))
    return float(np.linalg.norm(matrix))


def _power_iteration(matrix: np.ndarray) -> Optional[float]:
    vector = np.ones(matrix.shape[0]) / np.sqrt(matrix.shape[0])
    previous = 0.0
    for _ in range(POWER_MAX_ITER):
        image = matrix @ vector
        estimate = float(np.linalg.norm(image))
        if estimate == 0.0:
            return 0.0
        if abs(estimate - previous) <= POWER_TOL * max(1.0, estimate):
            return estimate
        previous = estimate
        vector = image / estimate
    return None


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest eigenvalue modulus.

    Dense eigenvalues up to 256 dimensions; power iteration above, with an
    ARPACK solve when the iteration does not settle (complex dominant pair).
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError("Spectral radius needs a square matrix, got {}".format(matrix.shape))
    if matrix.shape[0] <= DENSE_EIG_MAX_DIM:
        return float(np.max(np.abs(np.linalg.eigvals(matrix))))
    estimate = _power_iteration(matrix)
    if estimate is not None:
        return estimate
    logger.debug("Power iteration did not converge for D={}, using ARPACK", matrix.shape[0])
    try:
        values = eigs(matrix, k=1, which="LM", tol=POWER_TOL, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        values = exc.eigenvalues
    return float(np.max(np.abs(values)))


def normalize_reservoir(
    a: np.ndarray, c: np.ndarray, zeta: np.ndarray, norm: str = "fro"
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale ``a`` to unit spectral radius and ``c``, ``zeta`` to unit norm.

    A zero shift vector stays zero.

    Raises:
        ReservoirSamplingError: If ``a`` has (numerically) zero spectral radius or ``c`` is zero.
    """
    radius = spectral_radius(a)
    if radius < MIN_SPECTRAL_RADIUS:
        raise ReservoirSamplingError("State matrix has spectral radius {:.3e}".format(radius))
    c_norm = _matrix_norm(c, norm)
    if c_norm == 0.0:
        raise ReservoirSamplingError("Input matrix is identically zero")
    zeta_norm = _matrix_norm(zeta, norm)
    zeta_bar = zeta / zeta_norm if zeta_norm > 0.0 else np.zeros_like(zeta)
    return a / radius, c / c_norm, zeta_bar


def _draw_entries(rng: np.random.Generator, shape: Tuple[int, ...], sparsity: float, kind: str) -> np.ndarray:
    mask = rng.random(shape) < sparsity
    if kind == "normal":
        values = rng.standard_normal(shape)
    else:
        values = rng.uniform(-1.0, 1.0, shape)
    return np.where(mask, values, 0.0)


def sample_reservoir(
    dim_state: int,
    dim_input: int,
    sparsity: float,
    seed: int,
    hyper: HyperParams | None = None,
    distributions: ReservoirDistributions | None = None,
) -> ReservoirSpec:
    """Draw and normalize a sparse random reservoir.

    Degenerate draws (zero input matrix or state matrix with spectral radius
    below 1e-12) are redrawn from the next substream ``[seed, attempt]``.

    Args:
        dim_state: State dimension D.
        dim_input: Input dimension d.
        sparsity: Expected fraction of nonzero entries, in (0, 1].
        seed: Nonnegative integer seed.
        hyper: Hyperparameters stored on the spec.
        distributions: Entry distributions and normalization norm.

    Returns:
        ReservoirSpec: Normalized matrices, bit-identical for identical arguments.

    Raises:
        ConfigError: On invalid dimensions or sparsity.
        ReservoirSamplingError: If 100 consecutive draws are degenerate.
    """
    hyper = hyper or HyperParams()
    distributions = distributions or ReservoirDistributions()
    if dim_state < 1 or dim_input < 1:
        raise ConfigError("Reservoir dimensions must be >= 1, got D={} d={}".format(dim_state, dim_input))
    if not 0.0 < sparsity <= 1.0:
        raise ConfigError("Sparsity must lie in (0, 1], got {}".format(sparsity))
    if seed < 0:
        raise ConfigError("Seed must be nonnegative, got {}".format(seed))

    for attempt in range(MAX_RESAMPLES):
        rng = np.random.default_rng([seed, attempt])
        a = _draw_entries(rng, (dim_state, dim_state), sparsity, distributions.state)
        c = _draw_entries(rng, (dim_state, dim_input), sparsity, distributions.input)
        if distributions.shift == "zero":
            zeta = np.zeros(dim_state)
        elif distributions.shift == "normal":
            zeta = rng.standard_normal(dim_state)
        else:
            zeta = rng.uniform(-1.0, 1.0, dim_state)
        try:
            a_bar, c_bar, zeta_bar = normalize_reservoir(a, c, zeta, distributions.norm)
        except ReservoirSamplingError as exc:
            logger.debug("Reservoir draw seed={} attempt={} rejected: {}", seed, attempt, exc)
            continue
        for matrix in (a_bar, c_bar, zeta_bar):
            matrix.setflags(write=False)
        return ReservoirSpec(
            dim_state=dim_state,
            dim_input=dim_input,
            a_bar=a_bar,
            c_bar=c_bar,
            zeta_bar=zeta_bar,
            sparsity=sparsity,
            hyper=hyper,
            seed=seed,
            distributions=distributions,
            attempt=attempt,
        )
    raise ReservoirSamplingError(
        "No usable reservoir after {} draws (D={}, sparsity={}, seed={})".format(
            MAX_RESAMPLES, dim_state, sparsity, seed
        )
    )


def step(spec: ReservoirSpec, state: np.ndarray, z: np.ndarray) -> np.ndarray:
    """One application of the leaky state equation."""
    state = np.asarray(state, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if state.shape != (spec.dim_state,) or z.shape != (spec.dim_input,):
        raise DimensionMismatchError(
            "State/input shapes {} / {} do not match D={} d={}".format(
                state.shape, z.shape, spec.dim_state, spec.dim_input
            )
        )
    if not np.all(np.isfinite(z)):
        raise NonFiniteInputError("Reservoir input contains NaN or Inf")
    hyper = spec.hyper
    activation = np.tanh(
        hyper.rho * (spec.a_bar @ state) + hyper.gamma * (spec.c_bar @ z) + hyper.sigma_shift * spec.zeta_bar
    )
    return hyper.alpha * state + (1.0 - hyper.alpha) * activation


def run_sequence(
    spec: ReservoirSpec, x0: Optional[np.ndarray], inputs: np.ndarray, washout: int = 0
) -> np.ndarray:
    """Iterate ``step`` over ``inputs`` and drop the first ``washout`` states.

    Returns:
        np.ndarray: ``(T - washout) x D`` states, row order matching input order.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs.reshape(-1, 1)
    n_steps = inputs.shape[0]
    if n_steps == 0:
        raise InsufficientDataError("Cannot run a reservoir on an empty input sequence")
    if not 0 <= washout < n_steps:
        raise InsufficientDataError("Washout {} must lie in [0, {})".format(washout, n_steps))
    state = np.zeros(spec.dim_state) if x0 is None else np.asarray(x0, dtype=float)
    states = np.empty((n_steps, spec.dim_state))
    for index in range(n_steps):
        state = step(spec, state, inputs[index])
        states[index] = state
    return states[washout:]
