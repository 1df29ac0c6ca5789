"""Monte Carlo checks of empirical regret against the closed-form bounds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.bounds.constants import (
    BoundTerms,
    GapProfile,
    MixingProfile,
    adahedge_pathwise_bound,
    ftl_bound_terms,
    ftl_pathwise_bound,
    hedge_bound_terms,
)
from src.bounds.simulate import ChainSpec, NoiseSpec, chain_gap_profile, simulate_iid_losses, simulate_mixing_losses
from src.combiner.panel import LossPanel
from src.combiner.paths import decreasing_rates, ftl_tie_rounds, ftl_weight_path, hedge_weight_path, regret_path
from src.combiner.schemes import DEFAULT_C0, Scheme, run_scheme
from src.errors import ConfigError
from src.utils.parallel import map_ordered

DEFAULT_REPLICATIONS = 200
DEFAULT_ROUNDS = 10_000
DEFAULT_BEST_MEAN = 0.3
PLATEAU_TOLERANCE = 0.05
PATHWISE_TOL = 1e-9

REPORT_COLUMNS = (
    "scheme",
    "K",
    "delta",
    "mixing_ratio",
    "replications",
    "rounds",
    "empirical_mean",
    "empirical_se",
    "bound",
    "bound_hoeffding",
    "bound_bernstein",
    "ratio",
    "half_horizon_mean",
    "plateau_ok",
    "tie_rounds",
    "tie_excluded",
    "status",
)


def gap_means(n_experts: int, delta: float, best_mean: float = DEFAULT_BEST_MEAN) -> np.ndarray:
    """Expert 0 has mean ``best_mean``; every other expert sits exactly ``delta`` above it."""
    if n_experts < 2:
        raise ConfigError("A gap profile needs K >= 2, got {}".format(n_experts))
    if not delta > 0.0:
        raise ConfigError("Sub-optimality gap must be positive, got {}; the bounds are undefined".format(delta))
    if best_mean + delta > 1.0 or best_mean < 0.0:
        raise ConfigError("Means {} and {} do not fit in [0, 1]".format(best_mean, best_mean + delta))
    means = np.full(n_experts, best_mean + delta)
    means[0] = best_mean
    return means


@dataclass(frozen=True)
class GridPoint:
    n_experts: int
    delta: float
    mixing_ratio: float = 0.0

    @property
    def is_iid(self) -> bool:
        return self.mixing_ratio == 0.0


@dataclass(frozen=True)
class SuiteSettings:
    replications: int = DEFAULT_REPLICATIONS
    n_rounds: int = DEFAULT_ROUNDS
    best_mean: float = DEFAULT_BEST_MEAN
    noise: NoiseSpec = NoiseSpec(kind="beta")
    amplitude: float = 0.5
    noise_share: float = 0.5
    c0: float = DEFAULT_C0

    def __post_init__(self) -> None:
        if self.replications < 1 or self.n_rounds < 2:
            raise ConfigError("Need at least one replication and two rounds")


@dataclass(frozen=True)
class ValidationRow:
    scheme: str
    K: int
    delta: float
    mixing_ratio: float
    replications: int
    rounds: int
    empirical_mean: float
    empirical_se: float
    bound: float
    bound_hoeffding: float
    bound_bernstein: float
    ratio: float
    half_horizon_mean: float
    plateau_ok: bool
    tie_rounds: int
    tie_excluded: int
    status: str

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    @property
    def failed(self) -> bool:
        return self.status == "FAIL"

    def to_record(self) -> Dict[str, object]:
        return asdict(self)


class _Replication(NamedTuple):
    ftl: Tuple[float, float]
    hedge: Optional[Tuple[float, float]]
    ties: int


def _point_profiles(point: GridPoint, settings: SuiteSettings) -> Tuple[np.ndarray, GapProfile, Optional[ChainSpec]]:
    means = gap_means(point.n_experts, point.delta, settings.best_mean)
    if point.is_iid:
        return means, settings.noise.gap_profile(means), None
    chain = ChainSpec.symmetric(point.mixing_ratio, amplitude=settings.amplitude, noise_share=settings.noise_share)
    return means, chain_gap_profile(means, chain), chain


def _replicate(
    seed: np.random.SeedSequence, means: np.ndarray, chain: Optional[ChainSpec], settings: SuiteSettings
) -> _Replication:
    if chain is None:
        panel = simulate_iid_losses(means, settings.noise, settings.n_rounds, seed)
    else:
        panel, _ = simulate_mixing_losses(means, chain, settings.n_rounds, seed)
    half = settings.n_rounds // 2
    ftl = regret_path(panel, ftl_weight_path(panel)).regret
    hedge = None
    if panel.n_experts >= 3:
        rates = decreasing_rates(panel.n_rounds, panel.n_experts, settings.c0)
        hedge_regret = regret_path(panel, hedge_weight_path(panel, rates)).regret
        hedge = (float(hedge_regret[-1]), float(hedge_regret[half - 1]))
    return _Replication(ftl=(float(ftl[-1]), float(ftl[half - 1])), hedge=hedge, ties=ftl_tie_rounds(panel))


def _summarize(
    scheme: Scheme,
    point: GridPoint,
    settings: SuiteSettings,
    finals: np.ndarray,
    halves: np.ndarray,
    terms: BoundTerms,
    ties: int = 0,
    excluded: int = 0,
) -> ValidationRow:
    bound = terms.value
    if finals.size == 0:
        # every replication tied; the no-tie bound has nothing to check
        mean = se = half_mean = math.nan
        status = "TIED"
    else:
        mean = float(np.mean(finals))
        se = float(np.std(finals, ddof=1) / math.sqrt(finals.size)) if finals.size > 1 else 0.0
        half_mean = float(np.mean(halves))
        status = "PASS" if mean <= bound else "FAIL"
    if status == "FAIL":
        logger.warning(
            "{} at K={} delta={} ratio={}: mean regret {:.3f} exceeds bound {:.3f}",
            scheme.value,
            point.n_experts,
            point.delta,
            point.mixing_ratio,
            mean,
            bound,
        )
    return ValidationRow(
        scheme=scheme.value,
        K=point.n_experts,
        delta=point.delta,
        mixing_ratio=point.mixing_ratio,
        replications=int(finals.size),
        rounds=settings.n_rounds,
        empirical_mean=mean,
        empirical_se=se,
        bound=bound,
        bound_hoeffding=terms.hoeffding,
        bound_bernstein=terms.bernstein,
        ratio=mean / bound,
        half_horizon_mean=half_mean,
        plateau_ok=bool(finals.size == 0 or mean - half_mean < PLATEAU_TOLERANCE * bound),
        tie_rounds=ties,
        tie_excluded=excluded,
        status=status,
    )


def validate_point(
    point: GridPoint, settings: SuiteSettings, seed: int | np.random.SeedSequence, threads: int = 1
) -> List[ValidationRow]:
    """Monte Carlo FTL and decreasing-Hedge regret at one grid point.

    Each replication draws its own panel from a child of ``seed``; the
    decreasing-Hedge row is omitted for K < 3, where its bound does not apply.
    The FTL bound assumes a unique leader, so replications in which FTL split
    its weights after the first round are left out of the FTL row and counted
    in ``tie_excluded``. A point where every replication tied gets status
    ``TIED``. The Hedge row always uses every replication.

    Returns:
        List[ValidationRow]: One row per scheme, FTL first.
    """
    means, profile, chain = _point_profiles(point, settings)
    mixing: Optional[MixingProfile] = None if chain is None else chain.mixing
    ftl_terms = ftl_bound_terms(profile, mixing, point.n_experts)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(settings.replications)
    results = map_ordered(lambda child: _replicate(child, means, chain, settings), children, threads)

    ties = sum(result.ties for result in results)
    tie_free = [result.ftl for result in results if result.ties == 0]
    excluded = len(results) - len(tie_free)
    if excluded:
        logger.info(
            "FTL split its weights on {} rounds at K={} delta={}; {} of {} replications left out of the FTL row",
            ties,
            point.n_experts,
            point.delta,
            excluded,
            len(results),
        )
    ftl = np.array(tie_free, dtype=float).reshape(-1, 2)
    rows = [_summarize(Scheme.FTL, point, settings, ftl[:, 0], ftl[:, 1], ftl_terms, ties, excluded)]
    if point.n_experts >= 3:
        hedge_terms = hedge_bound_terms(profile, None if mixing is None else mixing.excess(), point.n_experts)
        hedge = np.array([result.hedge for result in results])
        rows.append(_summarize(Scheme.HEDGE_DECREASING, point, settings, hedge[:, 0], hedge[:, 1], hedge_terms))
    else:
        logger.warning("Skipping decreasing Hedge at K={}: its bound assumes K >= 3", point.n_experts)
    return rows


def validate_grid(
    points: Sequence[GridPoint], settings: SuiteSettings, seed: int, threads: int = 1
) -> List[ValidationRow]:
    """Run ``validate_point`` on every grid point with independent child seeds."""
    children = np.random.SeedSequence(seed).spawn(len(points))
    rows: List[ValidationRow] = []
    for point, child in zip(points, children):
        logger.info("Validating K={} delta={} mixing={}", point.n_experts, point.delta, point.mixing_ratio)
        rows.extend(validate_point(point, settings, child, threads))
    return rows


@dataclass(frozen=True)
class PathwiseReport:
    panels: int
    rounds: int
    decreasing_violations: int
    adahedge_violations: int
    ftl_violations: int

    @property
    def total_violations(self) -> int:
        return self.decreasing_violations + self.adahedge_violations + self.ftl_violations


def arbitrary_panel(index: int, n_rounds: int, n_experts: int, rng: np.random.Generator) -> LossPanel:
    """One of several loss patterns in [0, 1], cycling on ``index``."""
    kind = index % 4
    if kind == 0:
        losses = rng.random((n_rounds, n_experts))
    elif kind == 1:
        losses = (rng.random((n_rounds, n_experts)) < rng.random(n_experts)).astype(float)
    elif kind == 2:
        # alternating leaders keep FTL switching
        losses = np.zeros((n_rounds, n_experts))
        losses[np.arange(n_rounds), (np.arange(n_rounds) + rng.integers(n_experts)) % n_experts] = 1.0
        losses[0] *= 0.5
    else:
        scale = rng.uniform(0.05, 1.0, size=(n_rounds, 1))
        losses = scale * rng.beta(0.5, 0.5, size=(n_rounds, n_experts))
    return LossPanel.from_losses(losses)


def pathwise_checks(
    n_panels: int = 50, n_rounds: int = 500, n_experts: int = 5, seed: int = 0, c0: float = DEFAULT_C0
) -> PathwiseReport:
    """Check the pathwise regret bounds at every prefix of ``n_panels`` seeded panels.

    Decreasing Hedge must stay below ``sqrt(t log K)``, AdaHedge below its
    range-adaptive bound and FTL below ``S_t * C_t``.
    """
    rng = np.random.default_rng(seed)
    log_k = math.log(n_experts)
    rounds = np.arange(1, n_rounds + 1)
    decreasing = adahedge = ftl = 0
    for index in range(n_panels):
        panel = arbitrary_panel(index, n_rounds, n_experts, rng)
        rates = decreasing_rates(n_rounds, n_experts, c0)
        hedge_regret = regret_path(panel, hedge_weight_path(panel, rates)).regret
        decreasing += int(np.count_nonzero(hedge_regret > np.sqrt(rounds * log_k) + PATHWISE_TOL))

        for ledger in run_scheme(panel, Scheme.ADAHEDGE).ledgers:
            limit = adahedge_pathwise_bound(ledger.sum_sq_range, ledger.max_loss_range, n_experts)
            adahedge += int(ledger.cumulative_regret > limit + PATHWISE_TOL)
        for ledger in run_scheme(panel, Scheme.FTL).ledgers:
            limit = ftl_pathwise_bound(ledger.max_loss_range, ledger.leader_changes)
            ftl += int(ledger.cumulative_regret > limit + PATHWISE_TOL)
    report = PathwiseReport(
        panels=n_panels,
        rounds=n_rounds,
        decreasing_violations=decreasing,
        adahedge_violations=adahedge,
        ftl_violations=ftl,
    )
    logger.info(
        "Pathwise checks over {} panels: {} decreasing, {} AdaHedge, {} FTL violations",
        n_panels,
        decreasing,
        adahedge,
        ftl,
    )
    return report
