"""Text and machine-readable rendering of an estimation run."""

from __future__ import annotations

import json

import numpy as np

from .dataset import INTERACTION_SEP
from .effects import MarginalEffectsTable
from .errors import RpmixlError
from .estimation import EstimationResult
from .model_spec import CONSTANT, Role

TITLE = "Random parameters multinomial logit model with heterogeneity in the means of random parameters"
SD_ROW = "Standard deviation of parameter distribution"


class ReportError(RpmixlError):
    pass


def _label(variable: str) -> str:
    if INTERACTION_SEP in variable:
        a, b = variable.split(INTERACTION_SEP, 1)
        return f"({a} * {b}) interaction"
    return variable


class _Table:
    def __init__(self, alternatives, name_width):
        self.alts = alternatives
        self.w = name_width
        self.lines: list[str] = []

    def section(self, title):
        self.lines.append(title)

    def row(self, name, estimate=None, t=None, effects=None):
        est = f"{estimate:>12.3f}" if estimate is not None else " " * 12
        ts = f"{t:>14.3f}" if t is not None else " " * 14
        eff = ""
        if effects is not None:
            eff = "".join(f"{x:>{max(14, len(a) + 2)}.3f}" for x, a in zip(effects, self.alts))
        self.lines.append(f"{name:<{self.w}}{est}{ts}{eff}".rstrip())

    def text(self, name):
        self.lines.append(name)


def render_report(
    result: EstimationResult,
    effects: MarginalEffectsTable | None = None,
    abs_t: bool = False,
) -> tuple[str, dict]:
    """Render ``result`` in the sectioned layout of a published mixed-logit
    table. Returns ``(text, document)``; the document is the lossless JSON
    form that :meth:`EstimationResult.from_dict` reads back."""
    effects = effects if effects is not None else result.effects
    if effects is not None and effects.run_id is not None and effects.run_id != result.run_id:
        raise ReportError(f"effects belong to run {effects.run_id}, result is run {result.run_id}")

    spec = result.spec
    layout = result.layout
    if tuple(layout.names) != tuple(result.names):
        raise ReportError("result parameter names do not match the model layout")
    alts = spec.alternatives.labels
    theta = result.theta_hat
    tstat = np.abs(result.t_stats) if abs_t else result.t_stats

    def eff(variable):
        if effects is None or variable not in effects.variables:
            return None
        return effects.row(variable)

    names = [_label(e.variable) + f" [{e.alternative}]" for e in spec.entries]
    width = max([44, len(SD_ROW) + 4] + [len(n) + 4 for n in names] + [len(d.name) + 6 for d in layout]) + 2
    tab = _Table(alts, width)
    shown: list[int] = []

    def param_row(label, idx, variable=None, value=None, t=None):
        shown.append(idx)
        tab.row(label, theta[idx] if value is None else value, tstat[idx] if t is None else t,
                eff(variable) if variable else None)

    tab.text(TITLE)
    dc = result.draw_config
    tab.text(
        f"Number of observations: {result.n_obs}   Halton draws: {dc.n_draws} (burn-in {dc.burn_in}"
        + (f", shuffle seed {dc.shuffle_seed})" if dc.shuffle_seed is not None else ")")
    )
    tab.text(f"Run: {result.run_id}")
    tab.text("")
    header_eff = "".join(f"{a:>{max(14, len(a) + 2)}}" for a in alts)
    tab.text(f"{'':<{width}}{'Estimated':>12}{'':>14}{'Marginal effects':>{len(header_eff)}}")
    tab.text(f"{'':<{width}}{'parameter':>12}{'t-Statistics':>14}{header_eff}")
    tab.text("-" * (width + 26 + len(header_eff)))

    for i, e in enumerate(spec.entries):
        if e.is_constant and not e.is_random:
            param_row(f"Constant [{e.alternative}]", layout.for_entry(i, Role.FIXED_BETA)[0].index)

    randoms = [(i, e) for i, e in enumerate(spec.entries) if e.is_random]
    if randoms:
        tab.section("Random parameters in utility functions")
        shares = {s.parameter: s for s in result.shares}
        for i, e in randoms:
            mean = layout.for_entry(i, Role.RANDOM_MEAN)[0]
            scale = layout.for_entry(i, Role.RANDOM_SCALE)[0]
            label = "Constant" if e.is_constant else _label(e.variable)
            param_row(f"{label} [{e.alternative}]", mean.index, None if e.is_constant else e.variable)
            # The scale's sign is not identified; report its magnitude.
            param_row(f"  {SD_ROW}", scale.index, value=abs(theta[scale.index]), t=abs(result.t_stats[scale.index]))
            sh = shares.get(mean.name)
            if sh is not None:
                flag = " (point mass)" if sh.degenerate else ""
                tab.text(f"  Share above zero {100 * sh.above:.2f}%, below zero {100 * sh.below:.2f}%{flag}")

        mean_rows = [(e, d) for i, e in randoms for d in layout.for_entry(i, Role.MEAN_SHIFTER)]
        if mean_rows:
            tab.section("Heterogeneity in the mean of the random parameter")
            for e, d in mean_rows:
                param_row(f"{_label(e.variable)}: {_label(d.shifter)} [{e.alternative}]", d.index)
        var_rows = [(e, d) for i, e in randoms for d in layout.for_entry(i, Role.VARIANCE_SHIFTER)]
        if var_rows:
            tab.section("Heterogeneity in the variance of the random parameter")
            for e, d in var_rows:
                param_row(f"{_label(e.variable)}: {_label(d.shifter)} [{e.alternative}]", d.index)

    fixed = [(i, e) for i, e in enumerate(spec.entries) if not e.is_random and not e.is_constant]
    plain = [(i, e) for i, e in fixed if INTERACTION_SEP not in e.variable]
    inter = [(i, e) for i, e in fixed if INTERACTION_SEP in e.variable]
    if plain or inter:
        tab.section("Fixed parameters in utility functions")
        tab.text(f"{spec.alternatives.base} Base")
        for i, e in plain + inter:
            param_row(f"{_label(e.variable)} [{e.alternative}]", layout.for_entry(i, Role.FIXED_BETA)[0].index, e.variable)

    if effects is not None:
        used = {e.variable for e in spec.entries if e.variable != CONSTANT}
        extra = [v for v in effects.variables if v not in used]
        if extra:
            tab.section("Marginal effects of heterogeneity variables")
            for v in extra:
                tab.row(_label(v), effects=effects.row(v))

    if sorted(shown) != list(range(len(layout))):
        raise ReportError("report does not show every parameter exactly once")

    tab.text("-" * (width + 26 + len(header_eff)))
    foot = [
        ("Number of observations", f"{result.n_obs}"),
        ("Log likelihood at zero, LL(0)", f"{result.ll_zero:.2f}"),
        ("Log likelihood at convergence, LL(beta)", f"{result.ll_beta:.2f}"),
        ("rho^2 = 1 - LL(beta)/LL(0)", f"{result.rho_squared:.3f}"),
        ("Converged", f"{'yes' if result.converged else 'no'} ({result.reason}, {result.iterations} iterations)"),
        ("Covariance method", result.covariance_method),
    ]
    if abs_t:
        foot.append(("t-Statistics", "absolute values"))
    for k, v in foot:
        tab.text(f"{k:<{width}}{v:>12}" if len(v) <= 12 else f"{k:<{width}}{v}")

    doc = result.to_dict()
    if effects is not None:
        doc["effects"] = effects.to_dict()
    return "\n".join(tab.lines) + "\n", doc


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"
