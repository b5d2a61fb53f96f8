"""Simulated maximum likelihood: BFGS ascent, covariance, fit statistics."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import chi2

from .dataset import Dataset
from .draws import DrawBlock, DrawConfig, generate_draw_block, normal_cdf
from .errors import DegenerateDistributionError, EstimationError, SingularCovarianceError
from .likelihood import MNLLikelihood, SimulatedLikelihood
from .model_spec import ModelSpec, ParameterLayout, Role, parameter_layout, spec_from_mapping

log = logging.getLogger(__name__)

ITERATION_LIMIT = "iteration limit"
GRADIENT_TOL = "gradient tolerance"
RELATIVE_LL_TOL = "relative log-likelihood change"
NO_IMPROVEMENT = "line search failed to improve"


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-5
    relative_ll_tolerance: float = 1e-9
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60

    def __post_init__(self):
        for name in ("max_iterations", "gradient_tolerance", "relative_ll_tolerance", "backtrack", "armijo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gradient_tolerance", "relative_ll_tolerance", "backtrack", "armijo"):
            if not getattr(self, name) < 1:
                raise ValueError(f"{name} must be < 1")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "gradient_tolerance": self.gradient_tolerance,
            "relative_ll_tolerance": self.relative_ll_tolerance,
            "backtrack": self.backtrack,
            "armijo": self.armijo,
            "max_backtracks": self.max_backtracks,
        }


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    reason: str
    iterations: int
    trajectory: list[dict] = field(default_factory=list)


def maximize(
    fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    config: OptimizerConfig | None = None,
    names=None,
) -> OptimizeResult:
    """BFGS ascent with Armijo backtracking.

    Every accepted step satisfies f(x + a p) >= f(x) + c a g.p, so the
    trajectory of function values is non-decreasing.
    """
    cfg = config or OptimizerConfig()
    x = np.array(x0, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        label = names[bad[0]] if names is not None else f"theta[{bad[0]}]"
        raise EstimationError(f"non-finite starting value for {label}")
    f, g = fun_and_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        which = np.flatnonzero(~np.isfinite(g))
        label = ""
        if which.size:
            label = f" (gradient non-finite at {names[which[0]] if names is not None else f'theta[{which[0]}]'})"
        raise EstimationError(f"non-finite log-likelihood at the starting point{label}")

    n = x.size
    H = np.eye(n)  # inverse Hessian of -f
    trajectory = [{"iteration": 0, "loglik": f, "grad_inf": float(np.max(np.abs(g), initial=0.0)), "step": 0.0}]
    for it in range(1, cfg.max_iterations + 1):
        if np.max(np.abs(g), initial=0.0) < cfg.gradient_tolerance:
            return OptimizeResult(x, f, g, True, GRADIENT_TOL, it - 1, trajectory)
        p = H @ g
        slope = g @ p
        if not slope > 0:
            H = np.eye(n)
            p, slope = g.copy(), g @ g
        step = 1.0
        for _ in range(cfg.max_backtracks):
            x_new = x + step * p
            f_new, g_new = fun_and_grad(x_new)
            if np.isfinite(f_new) and f_new >= f + cfg.armijo * step * slope:
                break
            step *= cfg.backtrack
        else:
            if not np.allclose(H, np.eye(n)):
                H = np.eye(n)
                continue
            return OptimizeResult(x, f, g, False, NO_IMPROVEMENT, it - 1, trajectory)

        s = x_new - x
        y = g - g_new  # gradient change of the minimized function -f
        f_old = f
        x, f, g = x_new, f_new, g_new
        trajectory.append(
            {"iteration": it, "loglik": f, "grad_inf": float(np.max(np.abs(g), initial=0.0)), "step": step}
        )
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
        log.debug("iter %d loglik %.10g grad_inf %.3g step %.3g", it, f, trajectory[-1]["grad_inf"], step)

        if np.max(np.abs(g), initial=0.0) < cfg.gradient_tolerance:
            return OptimizeResult(x, f, g, True, GRADIENT_TOL, it, trajectory)
        if abs(f - f_old) <= cfg.relative_ll_tolerance * max(abs(f_old), 1.0):
            return OptimizeResult(x, f, g, True, RELATIVE_LL_TOL, it, trajectory)
    return OptimizeResult(x, f, g, False, ITERATION_LIMIT, cfg.max_iterations, trajectory)


def starting_values(spec: ModelSpec, ds: Dataset, layout: ParameterLayout | None = None,
                    config: OptimizerConfig | None = None) -> np.ndarray:
    """Fixed-parameter logit fit for fixed betas and random means; scales at
    0.1 and every shifter at 0."""
    layout = layout or parameter_layout(spec)
    mnl = MNLLikelihood(spec, ds, layout)
    free = np.array(layout.indices(Role.FIXED_BETA) + layout.indices(Role.RANDOM_MEAN), dtype=np.int64)
    theta = np.zeros(len(layout))

    def sub(x):
        full = theta.copy()
        full[free] = x
        f, g = mnl.value_and_gradient(full)
        return f, g[free]

    fit = maximize(sub, np.zeros(free.size), config)
    theta[free] = fit.x
    theta[layout.indices(Role.RANDOM_SCALE)] = 0.1
    return theta


def maximize_loglik(ds: Dataset, spec: ModelSpec, block: DrawBlock, config: OptimizerConfig | None = None,
                    start=None, layout: ParameterLayout | None = None) -> OptimizeResult:
    layout = layout or parameter_layout(spec)
    model = SimulatedLikelihood(spec, ds, block, layout)
    x0 = starting_values(spec, ds, layout, config) if start is None else np.asarray(start, dtype=np.float64)
    return maximize(model.value_and_gradient, x0, config, names=layout.names)


def numerical_hessian(grad: Callable[[np.ndarray], np.ndarray], theta, rel_step=1e-4, min_step=1e-4) -> np.ndarray:
    """Central differences of the gradient, symmetrized; step max(1e-4, 1e-4*|theta_i|)."""
    theta = np.asarray(theta, dtype=np.float64)
    n = theta.size
    H = np.empty((n, n))
    for i in range(n):
        h = max(min_step, rel_step * abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        H[:, i] = (grad(up) - grad(dn)) / (up[i] - dn[i])
    return 0.5 * (H + H.T)


def _inverse_pd(M: np.ndarray):
    try:
        c = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    inv_c = np.linalg.inv(c)
    cov = inv_c.T @ inv_c
    return 0.5 * (cov + cov.T)


def _null_direction(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    v = V[:, np.argmin(w)]
    k = np.argmax(np.abs(v))
    return v * np.sign(v[k])


def covariance_from_hessian(hessian: np.ndarray, scores: np.ndarray | None = None, names=None):
    """Covariance from the negative Hessian, else from BHHH outer products.

    Returns ``(covariance, method)`` with method ``"hessian"`` or ``"bhhh"``.
    """
    cov = _inverse_pd(-np.asarray(hessian))
    if cov is not None:
        return cov, "hessian"
    if scores is not None:
        opg = scores.T @ scores
        cov = _inverse_pd(opg)
        if cov is not None:
            return cov, "bhhh"
        direction = _null_direction(opg)
    else:
        direction = _null_direction(-np.asarray(hessian))
    keyed = dict(zip(names, direction.tolist())) if names is not None else direction.tolist()
    raise SingularCovarianceError("neither the Hessian nor the BHHH matrix is positive definite", keyed)


def t_statistics(theta, cov) -> np.ndarray:
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.asarray(theta) / se


def covariance_and_tstats(theta_hat, ds: Dataset, spec: ModelSpec, block: DrawBlock, layout=None):
    """Returns ``(covariance, t_stats, method)``; t-statistics are signed."""
    layout = layout or parameter_layout(spec)
    model = SimulatedLikelihood(spec, ds, block, layout)
    H = numerical_hessian(lambda t: model.value_and_gradient(t)[1], theta_hat)
    _, S = model.scores(theta_hat)
    cov, method = covariance_from_hessian(H, S, layout.names)
    return cov, t_statistics(theta_hat, cov), method


@dataclass(frozen=True)
class FitStatistics:
    rho_squared: float
    lr_chi2: float
    df: int
    p_value: float


def fit_statistics(ll_zero: float, ll_beta: float, df_diff: int) -> FitStatistics:
    """rho^2 = 1 - LL(beta)/LL(0) and the likelihood-ratio test of the two."""
    if ll_zero > 0:
        raise ValueError("restricted log-likelihood must be <= 0")
    if ll_beta < ll_zero:
        raise ValueError(f"LL(beta)={ll_beta} is below the restricted LL={ll_zero}")
    rho2 = 1.0 - ll_beta / ll_zero if ll_zero != 0 else 0.0
    lr = 2.0 * (ll_beta - ll_zero)
    p = float(chi2.sf(lr, df_diff)) if df_diff > 0 else float("nan")
    return FitStatistics(rho2, lr, int(df_diff), p)


def share_above_zero(mean: float, scale: float) -> float:
    """Population share of a normal coefficient above zero: Phi(mean/|scale|)."""
    if scale == 0:
        share = 0.5 if mean == 0 else float(mean > 0)
        raise DegenerateDistributionError("zero scale: the coefficient is a point mass", share)
    return float(normal_cdf(mean / abs(scale)))


@dataclass(frozen=True)
class DistributionShare:
    parameter: str
    mean: float
    sd: float
    above: float
    below: float
    degenerate: bool = False


def distribution_shares(theta, layout: ParameterLayout) -> list[DistributionShare]:
    out = []
    for i, _ in enumerate(layout.spec.entries):
        means = layout.for_entry(i, Role.RANDOM_MEAN)
        if not means:
            continue
        m = float(theta[means[0].index])
        s = float(theta[layout.for_entry(i, Role.RANDOM_SCALE)[0].index])
        try:
            above, degenerate = share_above_zero(m, s), False
        except DegenerateDistributionError as exc:
            above, degenerate = exc.share, True
        out.append(DistributionShare(means[0].name, m, abs(s), above, 1.0 - above, degenerate))
    return out


def run_identifier(data_digest: str, spec: ModelSpec, draws: DrawConfig, opt: OptimizerConfig) -> str:
    payload = json.dumps(
        {"data": data_digest, "model": spec.to_document(), "draws": draws.to_dict(), "optimizer": opt.to_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def dataset_digest(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(list(ds.columns)).encode())
    h.update(np.ascontiguousarray(ds.values).tobytes())
    if ds.chosen is not None:
        h.update(np.ascontiguousarray(ds.chosen, dtype=np.int64).tobytes())
    return h.hexdigest()


@dataclass
class EstimationResult:
    spec: ModelSpec
    names: tuple[str, ...]
    theta_hat: np.ndarray
    covariance: np.ndarray
    t_stats: np.ndarray
    ll_zero: float
    ll_beta: float
    rho_squared: float
    converged: bool
    reason: str
    iterations: int
    covariance_method: str
    draw_config: DrawConfig
    optimizer_config: OptimizerConfig
    n_obs: int
    shares: list[DistributionShare]
    run_id: str
    n_floored: int = 0
    effects: "object | None" = None  # MarginalEffectsTable, attached after estimation

    @property
    def layout(self) -> ParameterLayout:
        return parameter_layout(self.spec)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        doc = {
            "run_id": self.run_id,
            "model": self.spec.to_document(),
            "n_obs": self.n_obs,
            "parameters": [
                {"name": n, "estimate": float(v), "std_error": float(se), "t_stat": float(t)}
                for n, v, se, t in zip(self.names, self.theta_hat, self.standard_errors, self.t_stats)
            ],
            "covariance": self.covariance.tolist(),
            "covariance_method": self.covariance_method,
            "ll_zero": self.ll_zero,
            "ll_beta": self.ll_beta,
            "rho_squared": self.rho_squared,
            "converged": self.converged,
            "reason": self.reason,
            "iterations": self.iterations,
            "n_floored": self.n_floored,
            "draw_config": self.draw_config.to_dict(),
            "optimizer_config": self.optimizer_config.to_dict(),
            "shares": [vars(s) for s in self.shares],
        }
        if self.effects is not None:
            doc["effects"] = self.effects.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimationResult":
        from .effects import MarginalEffectsTable

        params = doc["parameters"]
        return cls(
            spec=spec_from_mapping(doc["model"]),
            names=tuple(p["name"] for p in params),
            theta_hat=np.array([p["estimate"] for p in params], dtype=np.float64),
            covariance=np.array(doc["covariance"], dtype=np.float64).reshape(len(params), len(params)),
            t_stats=np.array([p["t_stat"] for p in params], dtype=np.float64),
            ll_zero=doc["ll_zero"],
            ll_beta=doc["ll_beta"],
            rho_squared=doc["rho_squared"],
            converged=doc["converged"],
            reason=doc["reason"],
            iterations=doc["iterations"],
            covariance_method=doc["covariance_method"],
            draw_config=DrawConfig.from_dict(doc["draw_config"]),
            optimizer_config=OptimizerConfig(**doc["optimizer_config"]),
            n_obs=doc["n_obs"],
            shares=[DistributionShare(**s) for s in doc["shares"]],
            run_id=doc["run_id"],
            n_floored=doc.get("n_floored", 0),
            effects=MarginalEffectsTable.from_dict(doc["effects"]) if doc.get("effects") else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=True) + "\n"


def estimate(
    ds: Dataset,
    spec: ModelSpec,
    draws: DrawConfig | None = None,
    optimizer: OptimizerConfig | None = None,
    block: DrawBlock | None = None,
    start=None,
) -> EstimationResult:
    """Full pipeline: starting values, BFGS, covariance, fit statistics, shares."""
    draws = draws or DrawConfig()
    optimizer = optimizer or OptimizerConfig()
    layout = parameter_layout(spec)
    if block is None:
        block = generate_draw_block(len(ds), len(spec.random_entries), draws)
    model = SimulatedLikelihood(spec, ds, block, layout)
    x0 = starting_values(spec, ds, layout, optimizer) if start is None else np.asarray(start, dtype=np.float64)
    opt = maximize(model.value_and_gradient, x0, optimizer, names=layout.names)
    theta = opt.x
    H = numerical_hessian(lambda t: model.value_and_gradient(t)[1], theta)
    value, S = model.scores(theta)
    cov, method = covariance_from_hessian(H, S, layout.names)
    ll_zero = MNLLikelihood(spec, ds, layout).evaluate(np.zeros(len(layout))).loglik
    ll_beta = value.loglik
    rho2 = 1.0 - ll_beta / ll_zero
    return EstimationResult(
        spec=spec,
        names=layout.names,
        theta_hat=theta,
        covariance=cov,
        t_stats=t_statistics(theta, cov),
        ll_zero=ll_zero,
        ll_beta=ll_beta,
        rho_squared=rho2,
        converged=opt.converged,
        reason=opt.reason,
        iterations=opt.iterations,
        covariance_method=method,
        draw_config=draws,
        optimizer_config=optimizer,
        n_obs=len(ds),
        shares=distribution_shares(theta, layout),
        run_id=run_identifier(dataset_digest(ds), spec, draws, optimizer),
        n_floored=value.n_floored,
    )
