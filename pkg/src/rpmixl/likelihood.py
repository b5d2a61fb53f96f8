"""Realized coefficients, logit probabilities and the simulated log-likelihood.

For observation n, draw r and random entry k the coefficient is

    beta_knr = mean_k + theta_k . z_n + s_k * exp(psi_k . w_n) * v_knr

and utilities are sums of coefficient * covariate over the entries attached
to each alternative (unmentioned pairs contribute zero). The simulated
choice probability is the average over draws of the logit probability of
the chosen alternative.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .dataset import Dataset
from .draws import DrawBlock
from .errors import DataError, DrawError
from .model_spec import ModelSpec, ParameterLayout, Role, parameter_layout

PROB_FLOOR = 1e-300
LOG_FLOOR = math.log(PROB_FLOOR)
_CHUNK_ELEMENTS = 1 << 18


def worker_count() -> int:
    """Worker cap from ``RPMIXL_THREADS`` (default: CPU count)."""
    raw = os.environ.get("RPMIXL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True, eq=False)
class LikelihoodValue:
    loglik: float
    per_obs: np.ndarray
    n_floored: int = 0


def choice_probabilities(utilities, axis: int = -1) -> np.ndarray:
    """Logit probabilities along ``axis`` with max-subtraction."""
    u = np.asarray(utilities, dtype=np.float64)
    e = np.exp(u - u.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def realized_coefficients(
    theta, layout: ParameterLayout, obs: Mapping[str, float], draw
) -> np.ndarray:
    """Coefficient of every utility entry (spec order) for one observation
    and one draw vector (one value per random entry, layout order)."""
    theta = np.asarray(theta, dtype=np.float64)
    spec = layout.spec
    draw = np.atleast_1d(np.asarray(draw, dtype=np.float64))
    if draw.shape != (len(spec.random_entries),):
        raise DrawError(f"draw must have one value per random entry ({len(spec.random_entries)})")
    out = np.empty(len(spec.entries))
    d = 0
    for i, entry in enumerate(spec.entries):
        if not entry.is_random:
            out[i] = theta[layout.for_entry(i, Role.FIXED_BETA)[0].index]
            continue
        beta = theta[layout.for_entry(i, Role.RANDOM_MEAN)[0].index]
        for p in layout.for_entry(i, Role.MEAN_SHIFTER):
            beta += theta[p.index] * obs[p.shifter]
        scale = theta[layout.for_entry(i, Role.RANDOM_SCALE)[0].index]
        psi_w = sum(theta[p.index] * obs[p.shifter] for p in layout.for_entry(i, Role.VARIANCE_SHIFTER))
        out[i] = beta + scale * math.exp(psi_w) * draw[d]
        d += 1
    return out


@dataclass(frozen=True, eq=False)
class _FixedTerm:
    alt: int
    x: np.ndarray
    index: int


@dataclass(frozen=True, eq=False)
class _RandomTerm:
    alt: int
    x: np.ndarray
    mean: int
    scale: int
    z: np.ndarray  # (N, m)
    theta_idx: np.ndarray
    w: np.ndarray  # (N, q)
    psi_idx: np.ndarray


class _Design:
    """Column data of a dataset arranged per utility entry."""

    def __init__(self, spec: ModelSpec, ds: Dataset, layout: ParameterLayout | None = None):
        if ds.chosen is None:
            raise DataError("dataset has no chosen-outcome column")
        if ds.alternatives and tuple(ds.alternatives) != spec.alternatives.labels:
            raise DataError("dataset alternatives do not match the model")
        self.spec = spec
        self.layout = layout or parameter_layout(spec)
        self.n_obs = len(ds)
        self.n_alt = len(spec.alternatives)
        self.chosen = np.asarray(ds.chosen, dtype=np.int64)
        ones = np.ones(self.n_obs)

        def col(name):
            return ones if name == "constant" else ds.column(name)

        self.fixed: list[_FixedTerm] = []
        self.random: list[_RandomTerm] = []
        L = self.layout
        for i, e in enumerate(spec.entries):
            alt = spec.alternatives.index(e.alternative)
            if not e.is_random:
                self.fixed.append(_FixedTerm(alt, col(e.variable), L.for_entry(i, Role.FIXED_BETA)[0].index))
                continue
            ms = L.for_entry(i, Role.MEAN_SHIFTER)
            vs = L.for_entry(i, Role.VARIANCE_SHIFTER)
            self.random.append(
                _RandomTerm(
                    alt=alt,
                    x=col(e.variable),
                    mean=L.for_entry(i, Role.RANDOM_MEAN)[0].index,
                    scale=L.for_entry(i, Role.RANDOM_SCALE)[0].index,
                    z=np.column_stack([ds.column(p.shifter) for p in ms]) if ms else np.zeros((self.n_obs, 0)),
                    theta_idx=np.array([p.index for p in ms], dtype=np.int64),
                    w=np.column_stack([ds.column(p.shifter) for p in vs]) if vs else np.zeros((self.n_obs, 0)),
                    psi_idx=np.array([p.index for p in vs], dtype=np.int64),
                )
            )

    def fixed_utilities(self, theta, sl=slice(None)) -> np.ndarray:
        n = len(self.chosen[sl])
        v = np.zeros((n, self.n_alt))
        for t in self.fixed:
            v[:, t.alt] += theta[t.index] * t.x[sl]
        return v

    def shifted_means(self, theta, t: _RandomTerm, sl=slice(None)) -> np.ndarray:
        m = np.full(len(self.chosen[sl]), theta[t.mean])
        if t.theta_idx.size:
            m = m + t.z[sl] @ theta[t.theta_idx]
        return m

    def scale_factors(self, theta, t: _RandomTerm, sl=slice(None)) -> np.ndarray:
        if t.psi_idx.size:
            return np.exp(t.w[sl] @ theta[t.psi_idx])
        return np.ones(len(self.chosen[sl]))


def _check_theta(theta, layout) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (len(layout),):
        raise ValueError(f"theta has length {theta.size}, layout expects {len(layout)}")
    return theta


class SimulatedLikelihood:
    """Simulated log-likelihood of one (spec, dataset, draw block) triple.

    Observations are processed in fixed-size chunks, optionally on a thread
    pool; per-observation results are written back in dataset order, so the
    output does not depend on the number of workers.
    """

    def __init__(self, spec: ModelSpec, ds: Dataset, block: DrawBlock, layout: ParameterLayout | None = None):
        self.design = _Design(spec, ds, layout)
        self.layout = self.design.layout
        n_random = len(self.design.random)
        if block.shape[0] != self.design.n_obs or block.shape[2] != n_random:
            raise DrawError(
                f"draw block shape {block.shape} does not match {self.design.n_obs} observations "
                f"and {n_random} random entries"
            )
        # Without random entries every draw yields the same probability.
        self.draws = block.values if n_random else block.values[:, :1, :]
        R = self.draws.shape[1]
        self.chunk = max(1, _CHUNK_ELEMENTS // max(1, R * self.design.n_alt))

    @property
    def n_obs(self) -> int:
        return self.design.n_obs

    def _chunks(self):
        return [slice(a, min(a + self.chunk, self.n_obs)) for a in range(0, self.n_obs, self.chunk)]

    def _map(self, fn):
        chunks = self._chunks()
        workers = min(worker_count(), len(chunks))
        if workers <= 1:
            return chunks, [fn(sl) for sl in chunks]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return chunks, list(pool.map(fn, chunks))

    def _probabilities(self, theta, sl):
        """Per-draw probabilities (n, J, R) plus the coefficient pieces needed for scores."""
        D = self.design
        v_draws = self.draws[sl]
        R = v_draws.shape[1]
        util = np.repeat(D.fixed_utilities(theta, sl)[:, :, None], R, axis=2)
        pieces = []
        for d, t in enumerate(D.random):
            mean = D.shifted_means(theta, t, sl)
            spread = D.scale_factors(theta, t, sl)
            v = v_draws[:, :, d]
            beta = mean[:, None] + (theta[t.scale] * spread)[:, None] * v
            util[:, t.alt, :] += beta * t.x[sl][:, None]
            pieces.append((spread, v))
        return choice_probabilities(util, axis=1), pieces

    def _chunk_eval(self, theta, sl, scores: bool):
        D = self.design
        P, pieces = self._probabilities(theta, sl)
        n = P.shape[0]
        c = D.chosen[sl]
        pc = P[np.arange(n), c, :]  # (n, R)
        phat = pc.mean(axis=1)
        floored = phat < PROB_FLOOR
        per_obs = np.log(np.where(floored, PROB_FLOOR, phat))
        if not scores:
            return per_obs, int(floored.sum()), None
        R = pc.shape[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            wts = pc / (R * phat)[:, None]
        wts[floored] = 0.0
        S = np.zeros((n, len(self.layout)))
        # d log P_c / d beta_k = x_k * (1[c == alt_k] - P_alt_k)
        for t in D.fixed:
            hit = (c == t.alt).astype(float)
            S[:, t.index] = t.x[sl] * (hit - (wts * P[:, t.alt, :]).sum(axis=1))
        for t, (spread, v) in zip(D.random, pieces):
            hit = (c == t.alt).astype(float)
            g = wts * (hit[:, None] - P[:, t.alt, :]) * t.x[sl][:, None]
            gm = g.sum(axis=1)
            gv = (g * v).sum(axis=1)
            S[:, t.mean] = gm
            if t.theta_idx.size:
                S[:, t.theta_idx] = gm[:, None] * t.z[sl]
            S[:, t.scale] = spread * gv
            if t.psi_idx.size:
                S[:, t.psi_idx] = (theta[t.scale] * spread * gv)[:, None] * t.w[sl]
        return per_obs, int(floored.sum()), S

    def evaluate(self, theta) -> LikelihoodValue:
        theta = _check_theta(theta, self.layout)
        _, parts = self._map(lambda sl: self._chunk_eval(theta, sl, False))
        return _assemble(parts)

    def scores(self, theta) -> tuple[LikelihoodValue, np.ndarray]:
        """Log-likelihood plus the (N, P) matrix of per-observation scores."""
        theta = _check_theta(theta, self.layout)
        _, parts = self._map(lambda sl: self._chunk_eval(theta, sl, True))
        value = _assemble(parts)
        S = np.vstack([p[2] for p in parts]) if parts else np.zeros((0, len(self.layout)))
        return value, S

    def value_and_gradient(self, theta) -> tuple[float, np.ndarray]:
        value, S = self.scores(theta)
        return value.loglik, S.sum(axis=0)

    def mean_probabilities(self, theta) -> np.ndarray:
        """Draw-averaged probabilities of every alternative, shape (N, J)."""
        theta = _check_theta(theta, self.layout)
        _, parts = self._map(lambda sl: self._probabilities(theta, sl)[0].mean(axis=2))
        return np.vstack(parts) if parts else np.zeros((0, self.design.n_alt))


def _assemble(parts) -> LikelihoodValue:
    per_obs = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    floored = sum(p[1] for p in parts)
    # fsum is correctly rounded, hence independent of evaluation order.
    return LikelihoodValue(math.fsum(per_obs.tolist()), per_obs, floored)


class MNLLikelihood:
    """Closed-form logit log-likelihood with every random coefficient held at
    its (shifted) mean; scales and variance shifters are ignored."""

    def __init__(self, spec: ModelSpec, ds: Dataset, layout: ParameterLayout | None = None):
        self.design = _Design(spec, ds, layout)
        self.layout = self.design.layout

    def _utilities(self, theta):
        D = self.design
        util = D.fixed_utilities(theta)
        for t in D.random:
            util[:, t.alt] += D.shifted_means(theta, t) * t.x
        return util

    def scores(self, theta) -> tuple[LikelihoodValue, np.ndarray]:
        theta = _check_theta(theta, self.layout)
        D = self.design
        P = choice_probabilities(self._utilities(theta), axis=1)
        n = D.n_obs
        pc = P[np.arange(n), D.chosen]
        floored = pc < PROB_FLOOR
        per_obs = np.log(np.where(floored, PROB_FLOOR, pc))
        value = LikelihoodValue(math.fsum(per_obs.tolist()), per_obs, int(floored.sum()))
        S = np.zeros((n, len(self.layout)))
        for t in D.fixed:
            S[:, t.index] = t.x * ((D.chosen == t.alt) - P[:, t.alt])
        for t in D.random:
            g = t.x * ((D.chosen == t.alt) - P[:, t.alt])
            S[:, t.mean] = g
            if t.theta_idx.size:
                S[:, t.theta_idx] = g[:, None] * t.z
        S[floored] = 0.0
        return value, S

    def evaluate(self, theta) -> LikelihoodValue:
        return self.scores(theta)[0]

    def value_and_gradient(self, theta) -> tuple[float, np.ndarray]:
        value, S = self.scores(theta)
        return value.loglik, S.sum(axis=0)

    def probabilities(self, theta) -> np.ndarray:
        return choice_probabilities(self._utilities(_check_theta(theta, self.layout)), axis=1)


def simulated_loglik(theta, ds: Dataset, block: DrawBlock, spec: ModelSpec, layout=None) -> LikelihoodValue:
    return SimulatedLikelihood(spec, ds, block, layout).evaluate(theta)


def mnl_loglik(theta, ds: Dataset, spec: ModelSpec, layout=None) -> LikelihoodValue:
    return MNLLikelihood(spec, ds, layout).evaluate(theta)


def numeric_gradient(f: Callable[[np.ndarray], float], theta, rel_step: float = 1e-6, min_step: float = 1e-6) -> np.ndarray:
    """Central differences with per-coordinate step max(min_step, rel_step*|theta_i|)."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = max(min_step, rel_step * abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (up[i] - dn[i])
    return g


def loglik_gradient(theta, ds: Dataset, block: DrawBlock, spec: ModelSpec, layout=None, method: str = "analytic") -> np.ndarray:
    model = SimulatedLikelihood(spec, ds, block, layout)
    if method == "analytic":
        return model.value_and_gradient(theta)[1]
    if method == "numeric":
        return numeric_gradient(lambda t: model.evaluate(t).loglik, theta)
    raise ValueError(f"unknown gradient method '{method}'")
