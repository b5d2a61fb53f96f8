"""Synthetic datasets drawn from known parameters, and recovery experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, _interaction_factors, derive_interaction
from .draws import DrawConfig
from .errors import DataError, EstimationError, RpmixlError
from .estimation import OptimizerConfig, estimate
from .likelihood import choice_probabilities, realized_coefficients
from .model_spec import ModelSpec, Role, parameter_layout

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CovariateGenConfig:
    probabilities: dict[str, float]
    n_observations: int
    seed: int = 0

    def __post_init__(self):
        if self.n_observations < 1:
            raise ValueError("n_observations must be >= 1")
        for c, p in self.probabilities.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability for '{c}' must lie in [0, 1], got {p}")


def base_columns(spec: ModelSpec) -> tuple[str, ...]:
    """Referenced columns that must be sampled (interaction factors, not products)."""
    out: dict[str, None] = {}
    for c in spec.columns():
        factors = _interaction_factors(c)
        for f in factors or (c,):
            out.setdefault(f)
    return tuple(out)


def simulate_dataset(spec: ModelSpec, theta_true, gen: CovariateGenConfig) -> Dataset:
    """Sample covariates, individual coefficients and outcomes.

    Observation n uses its own pseudo-random stream seeded by (seed, n), so
    each row is reproducible on its own and unrelated to Halton draws.
    """
    layout = parameter_layout(spec)
    theta = np.asarray(theta_true, dtype=np.float64)
    if theta.shape != (len(layout),):
        raise ValueError(f"theta_true has length {theta.size}, layout expects {len(layout)}")
    cols = base_columns(spec)
    missing = [c for c in cols if c not in gen.probabilities]
    if missing:
        raise DataError(f"no Bernoulli probability for column '{missing[0]}'", column=missing[0])
    probs = np.array([gen.probabilities[c] for c in cols])
    n_random = len(spec.random_entries)
    J = len(spec.alternatives)
    alt_of = np.array([spec.alternatives.index(e.alternative) for e in spec.entries])

    N = gen.n_observations
    values = np.empty((N, len(cols)))
    chosen = np.empty(N, dtype=np.int64)
    for n in range(N):
        rng = np.random.default_rng([gen.seed, n])
        x = (rng.random(len(cols)) < probs).astype(float)
        v = rng.standard_normal(n_random)
        u = rng.random()
        row = dict(zip(cols, x.tolist()))
        for c in spec.columns():
            if c not in row:
                a, b = _interaction_factors(c)
                row[c] = row[a] * row[b]
        beta = realized_coefficients(theta, layout, row, v)
        xs = np.array([1.0 if e.is_constant else row[e.variable] for e in spec.entries])
        util = np.bincount(alt_of, weights=beta * xs, minlength=J)
        p = choice_probabilities(util)
        chosen[n] = min(int(np.searchsorted(np.cumsum(p), u, side="right")), J - 1)
        values[n] = x

    ds = Dataset(
        columns=cols,
        binary=(True,) * len(cols),
        values=values,
        chosen=chosen,
        alternatives=spec.alternatives.labels,
        label_column=spec.label_column,
        source=f"simulated(seed={gen.seed})",
    )
    for c in spec.columns():
        if c not in ds.columns:
            ds = derive_interaction(ds, *_interaction_factors(c), c)
    return ds


@dataclass
class Replication:
    seed: int
    theta_hat: np.ndarray
    std_errors: np.ndarray
    within: np.ndarray  # |error| < 3 se, per parameter
    converged: bool
    covariance_method: str

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "theta_hat": self.theta_hat.tolist(),
            "std_errors": self.std_errors.tolist(),
            "within_3se": self.within.tolist(),
            "converged": self.converged,
            "covariance_method": self.covariance_method,
        }


@dataclass
class RecoveryReport:
    names: tuple[str, ...]
    roles: tuple[Role, ...]
    theta_true: np.ndarray
    replications: list[Replication] = field(default_factory=list)

    def _errors(self) -> np.ndarray:
        truth = comparable(self.theta_true, self.roles)
        return np.array([comparable(r.theta_hat, self.roles) - truth for r in self.replications])

    @property
    def mean_bias(self) -> np.ndarray:
        return self._errors().mean(axis=0)

    @property
    def coverage(self) -> np.ndarray:
        return np.array([r.within for r in self.replications]).mean(axis=0)

    @property
    def overall_coverage(self) -> float:
        return float(np.array([r.within for r in self.replications]).mean())

    def to_dict(self) -> dict:
        return {
            "parameters": list(self.names),
            "theta_true": self.theta_true.tolist(),
            "mean_bias": self.mean_bias.tolist(),
            "coverage": self.coverage.tolist(),
            "overall_coverage": self.overall_coverage,
            "replications": [r.to_dict() for r in self.replications],
        }


def comparable(theta, roles) -> np.ndarray:
    """Scale parameters by absolute value; their sign is not identified."""
    theta = np.array(theta, dtype=np.float64)
    for i, role in enumerate(roles):
        if role is Role.RANDOM_SCALE:
            theta[i] = abs(theta[i])
    return theta


def recovery_experiment(
    spec: ModelSpec,
    theta_true,
    gen: CovariateGenConfig,
    draws: DrawConfig,
    n_seeds: int,
    optimizer: OptimizerConfig | None = None,
) -> RecoveryReport:
    """Simulate and re-estimate ``n_seeds`` times (seeds gen.seed, gen.seed+1, ...)."""
    layout = parameter_layout(spec)
    roles = tuple(d.role for d in layout)
    truth = comparable(theta_true, roles)
    report = RecoveryReport(layout.names, roles, np.asarray(theta_true, dtype=np.float64))
    for k in range(n_seeds):
        seed = gen.seed + k
        ds = simulate_dataset(spec, theta_true, replace(gen, seed=seed))
        try:
            res = estimate(ds, spec, draws, optimizer)
        except RpmixlError as exc:
            raise EstimationError(f"seed {seed}: {exc}") from exc
        est = comparable(res.theta_hat, roles)
        se = res.standard_errors
        within = np.abs(est - truth) < 3.0 * se
        log.info("seed %d: converged=%s coverage=%.2f", seed, res.converged, within.mean())
        report.replications.append(Replication(seed, res.theta_hat, se, within, res.converged, res.covariance_method))
    return report
