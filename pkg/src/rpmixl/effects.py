"""Average discrete-change marginal effects of binary indicators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .draws import DrawBlock, generate_draw_block
from .errors import DataError
from .likelihood import SimulatedLikelihood
from .model_spec import ModelSpec, parameter_layout

SUBSETS = ("all", "observed_zero")


@dataclass(frozen=True, eq=False)
class MarginalEffectsTable:
    variables: tuple[str, ...]
    alternatives: tuple[str, ...]
    values: np.ndarray  # (V, J) probability changes
    run_id: str | None = None
    subset: str = "all"

    def row(self, variable: str) -> np.ndarray:
        return self.values[self.variables.index(variable)]

    def __eq__(self, other):
        return (
            isinstance(other, MarginalEffectsTable)
            and self.variables == other.variables
            and self.alternatives == other.alternatives
            and self.run_id == other.run_id
            and self.subset == other.subset
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "subset": self.subset,
            "alternatives": list(self.alternatives),
            "rows": [
                {"variable": v, "effects": [float(x) for x in self.values[i]]}
                for i, v in enumerate(self.variables)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MarginalEffectsTable":
        rows = doc["rows"]
        J = len(doc["alternatives"])
        values = np.array([r["effects"] for r in rows], dtype=np.float64).reshape(len(rows), J)
        return cls(
            variables=tuple(r["variable"] for r in rows),
            alternatives=tuple(doc["alternatives"]),
            values=values,
            run_id=doc.get("run_id"),
            subset=doc.get("subset", "all"),
        )


def effect_variables(spec: ModelSpec, ds: Dataset) -> tuple[str, ...]:
    """Binary columns the model reads (utility variables first, then shifters)."""
    ordered: dict[str, None] = {}
    for e in spec.entries:
        if not e.is_constant:
            ordered.setdefault(e.variable)
    for e in spec.entries:
        for c in e.mean_shifters + e.variance_shifters:
            ordered.setdefault(c)
    return tuple(c for c in ordered if ds.is_binary(c))


def average_discrete_effects(
    theta,
    ds: Dataset,
    spec: ModelSpec,
    block: DrawBlock,
    variable: str,
    subset: str = "all",
) -> np.ndarray:
    """Mean over observations of P(alt | variable=1) - P(alt | variable=0).

    Both counterfactual states rebuild derived interaction columns and the
    shifter covariates, and reuse the same draws.
    """
    theta = getattr(theta, "theta_hat", theta)
    if subset not in SUBSETS:
        raise ValueError(f"subset must be one of {SUBSETS}")
    if variable not in ds.columns:
        raise DataError(f"unknown variable '{variable}'", column=variable)
    if not ds.is_binary(variable):
        raise DataError(f"variable '{variable}' is not a binary indicator", column=variable)
    layout = parameter_layout(spec)
    on = SimulatedLikelihood(spec, ds.with_forced(variable, 1.0), block, layout).mean_probabilities(theta)
    off = SimulatedLikelihood(spec, ds.with_forced(variable, 0.0), block, layout).mean_probabilities(theta)
    diff = on - off
    if subset == "observed_zero":
        diff = diff[ds.column(variable) == 0]
        if diff.shape[0] == 0:
            return np.zeros(len(spec.alternatives))
    return diff.mean(axis=0)


def marginal_effects(
    theta,
    ds: Dataset,
    spec: ModelSpec,
    block: DrawBlock | None = None,
    variables=None,
    draw_config=None,
    run_id: str | None = None,
    subset: str = "all",
) -> MarginalEffectsTable:
    if block is None:
        block = generate_draw_block(len(ds), len(spec.random_entries), draw_config)
    variables = tuple(variables) if variables is not None else effect_variables(spec, ds)
    rows = [average_discrete_effects(theta, ds, spec, block, v, subset) for v in variables]
    values = np.array(rows).reshape(len(variables), len(spec.alternatives))
    return MarginalEffectsTable(variables, spec.alternatives.labels, values, run_id, subset)


def effects_for_result(result, ds: Dataset, block: DrawBlock | None = None, subset: str = "all") -> MarginalEffectsTable:
    """Effects at an estimation result's estimates, with its draw configuration."""
    return marginal_effects(
        result.theta_hat, ds, result.spec, block, draw_config=result.draw_config, run_id=result.run_id, subset=subset
    )
