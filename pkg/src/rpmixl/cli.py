"""Command-line entry point: ``rpmixl <command> ...``.

Exit codes: 0 success, 2 usage error, 3 invalid model or data,
4 estimation did not converge (outputs are still written), 1 other failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .dataset import load_dataset, summarize, write_dataset
from .draws import DrawConfig, generate_draw_block
from .effects import SUBSETS, effects_for_result
from .errors import DataError, DrawError, RpmixlError, SpecError, SpecSyntaxError
from .estimation import EstimationResult, OptimizerConfig, estimate, fit_statistics
from .model_spec import load_model_spec, parameter_layout
from .report import dump_document, render_report
from .synth import CovariateGenConfig, recovery_experiment, simulate_dataset

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("rpmixl")


def _label_map(pairs):
    out = {}
    for p in pairs or ():
        raw, sep, label = p.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--label-map expects RAW=LABEL, got '{p}'")
        out[raw] = label
    return out


def _read_doc(path):
    text = Path(path).read_text(encoding="utf-8")
    return json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)


def _load(args, spec):
    return load_dataset(args.data, spec, continuous=args.continuous or (), label_map=_label_map(args.label_map))


def cmd_summarize(args):
    if args.model:
        spec = load_model_spec(args.model)
        ds = _load(args, spec)
    else:
        ds = load_dataset(args.data, label_column=args.label_column)
    table = summarize(ds)
    sys.stdout.write(table.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(table.to_records(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_estimate(args):
    spec = load_model_spec(args.model)
    ds = _load(args, spec)
    draws = DrawConfig(n_draws=args.draws, burn_in=args.burn_in, shuffle_seed=args.shuffle_seed)
    opt = OptimizerConfig(max_iterations=args.max_iterations)
    block = generate_draw_block(len(ds), len(spec.random_entries), draws)
    result = estimate(ds, spec, draws, opt, block=block)
    result.effects = effects_for_result(result, ds, block, subset=args.effects_subset)
    text, doc = render_report(result, abs_t=args.abs_t)
    Path(args.out).write_text(dump_document(doc), encoding="utf-8")
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if not result.converged:
        log.error("estimation did not converge: %s", result.reason)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_effects(args):
    result = EstimationResult.from_dict(_read_doc(args.results))
    spec = load_model_spec(args.model)
    if spec.to_document() != result.spec.to_document():
        raise SpecError("<root>", "model document differs from the one stored in the results")
    ds = _load(args, spec)
    table = effects_for_result(result, ds, subset=args.subset)
    out = json.dumps(table.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_report(args):
    result = EstimationResult.from_dict(_read_doc(args.results))
    text, _ = render_report(result, abs_t=args.abs_t)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _theta_from_params(spec, doc):
    layout = parameter_layout(spec)
    values = doc.get("theta", {})
    unknown = sorted(set(values) - set(layout.names))
    if unknown:
        raise SpecError(f"theta.{unknown[0]}", "not a parameter of the model")
    missing = [n for n in layout.names if n not in values]
    if missing:
        raise SpecError(f"theta.{missing[0]}", "missing true value")
    return np.array([float(values[n]) for n in layout.names])


def cmd_simulate(args):
    spec = load_model_spec(args.model)
    params = _read_doc(args.params)
    theta = _theta_from_params(spec, params)
    gen = CovariateGenConfig(dict(params.get("covariates", {})), args.n, args.seed)
    ds = simulate_dataset(spec, theta, gen)
    write_dataset(ds, args.out)
    meta = {
        "model": spec.to_document(),
        "theta_true": dict(zip(parameter_layout(spec).names, theta.tolist())),
        "covariates": gen.probabilities,
        "n_observations": gen.n_observations,
        "seed": gen.seed,
    }
    Path(str(args.out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_recover(args):
    spec = load_model_spec(args.model)
    params = _read_doc(args.params)
    theta = _theta_from_params(spec, params)
    gen = CovariateGenConfig(dict(params.get("covariates", {})), args.n, args.seed)
    draws = DrawConfig(n_draws=args.draws, burn_in=args.burn_in)
    report = recovery_experiment(spec, theta, gen, draws, args.seeds)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(f"overall coverage within 3 s.e.: {report.overall_coverage:.3f}\n")
    for name, b, c in zip(report.names, report.mean_bias, report.coverage):
        sys.stdout.write(f"  {name:<30} bias {b:+.4f}  coverage {c:.2f}\n")
    return EXIT_OK


def cmd_lrtest(args):
    r = _read_doc(args.restricted)
    u = _read_doc(args.unrestricted)
    df = len(u["parameters"]) - len(r["parameters"])
    if df <= 0:
        raise RpmixlError("the unrestricted model must have more parameters than the restricted one")
    stats = fit_statistics(r["ll_beta"], u["ll_beta"], df)
    sys.stdout.write(f"chi2 = {stats.lr_chi2:.4f}\ndf = {stats.df}\np-value = {stats.p_value:.6g}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rpmixl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_opts(sp, model_required=True):
        sp.add_argument("--data", required=True)
        sp.add_argument("--model", required=model_required)
        sp.add_argument("--continuous", action="append", metavar="COL", help="column that is not a 0/1 indicator")
        sp.add_argument("--label-map", action="append", metavar="RAW=LABEL")

    sp = sub.add_parser("summarize", help="per-column mean, sd, max, min")
    data_opts(sp, model_required=False)
    sp.add_argument("--label-column", help="outcome column to skip when no model is given")
    sp.add_argument("--json", help="also write the summary as JSON")
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("estimate", help="simulated maximum likelihood estimation")
    data_opts(sp)
    sp.add_argument("--draws", type=int, default=1000)
    sp.add_argument("--burn-in", type=int, default=10)
    sp.add_argument("--shuffle-seed", type=int)
    sp.add_argument("--max-iterations", type=int, default=500)
    sp.add_argument("--abs-t", action="store_true", help="print absolute t-statistics")
    sp.add_argument("--effects-subset", choices=SUBSETS, default="all")
    sp.add_argument("--out", required=True, help="results document (JSON)")
    sp.add_argument("--report", help="text report path (default: stdout)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("effects", help="average discrete-change marginal effects")
    data_opts(sp)
    sp.add_argument("--results", required=True)
    sp.add_argument("--subset", choices=SUBSETS, default="all")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_effects)

    sp = sub.add_parser("report", help="re-render a results document")
    sp.add_argument("--results", required=True)
    sp.add_argument("--abs-t", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("simulate", help="synthetic dataset from known parameters")
    sp.add_argument("--model", required=True)
    sp.add_argument("--params", required=True, help="document with 'theta' and 'covariates' maps")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("recover", help="parameter recovery over several seeds")
    sp.add_argument("--model", required=True)
    sp.add_argument("--params", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--draws", type=int, default=500)
    sp.add_argument("--burn-in", type=int, default=10)
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0, help="first seed")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_recover)

    sp = sub.add_parser("lrtest", help="likelihood-ratio test between two results documents")
    sp.add_argument("--restricted", required=True)
    sp.add_argument("--unrestricted", required=True)
    sp.set_defaults(func=cmd_lrtest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, SpecError, SpecSyntaxError, DrawError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except argparse.ArgumentTypeError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (RpmixlError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
