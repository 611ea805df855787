"""Command-line interface.

Subcommands ``analyze``, ``escalc``, ``priorpred``, ``ppp`` and
``calibrate``. Exit codes: 0 success, 2 malformed input, 3 propriety or
domain error, 4 file system error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import priors as P
from .analysis import AnalysisConfig, IntervalKind, SUMMARY_ROWS, run_analysis
from .calibration import CalibrationScenario, ks_uniform, run_calibration
from .effects import ContingencyTable, EffectEstimate, EffectMeasure, escalc
from .errors import NNHMError, ParseError
from .forest import render_forest
from .mixture import DirectConfig, dump_mixtures, normalmixture
from .model import Dataset
from .ppcheck import Hypothesis, ppp_value

EXIT_OK, EXIT_PARSE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4

CONFIG_KEYS = {"measure", "correction", "mu_prior", "tau_prior", "delta", "epsilon",
               "interval", "level", "seed"}

ESTIMATE_COLUMNS = ("label", "y", "sigma")
COUNT_COLUMNS = ("label", "events_t", "total_t", "events_c", "total_c")


# --------------------------------------------------------------------------
# input parsing

def _num(text, what, line):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"{what} is not a number: {text!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} must be finite", line)
    return v


def read_study_file(path, measure=EffectMeasure.LOGOR, correction=0.5) -> Dataset:
    """Read a CSV of ``label,y,sigma`` or ``label,events_t,total_t,events_c,total_c``."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_study_csv(text, measure, correction)


def parse_study_csv(text, measure=EffectMeasure.LOGOR, correction=0.5) -> Dataset:
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError("empty data file", 1)
    header = tuple(h.strip().lower() for h in rows[0])
    if header == ESTIMATE_COLUMNS:
        counts = False
    elif header == COUNT_COLUMNS:
        counts = True
    else:
        raise ParseError(f"header must be {','.join(ESTIMATE_COLUMNS)} or "
                         f"{','.join(COUNT_COLUMNS)}", 1)
    estimates = []
    for line, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        label = row[0].strip()
        vals = [_num(v, header[j + 1], line) for j, v in enumerate(row[1:])]
        try:
            if counts:
                if any(v != int(v) for v in vals):
                    raise ParseError("counts must be whole numbers", line)
                table = ContingencyTable.from_totals(*vals)
                estimates.append(escalc(table, measure, correction, label))
            else:
                estimates.append(EffectEstimate(vals[0], vals[1], label))
        except ParseError:
            raise
        except NNHMError as exc:
            raise ParseError(f"study {label!r}: {exc}", line) from None
    if not estimates:
        raise ParseError("no studies in data file", len(rows))
    return Dataset(estimates)


def parse_mu_prior(spec) -> P.EffectPrior:
    if isinstance(spec, dict):
        unknown = set(spec) - {"mean", "sd"}
        if unknown:
            raise ParseError(f"unknown mu_prior keys: {sorted(unknown)}")
        return P.EffectPrior.normal(float(spec["mean"]), float(spec["sd"]))
    text = str(spec).strip().lower()
    if text == "uniform":
        return P.EffectPrior.uniform()
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(f"mu prior must be 'mean,sd' or 'uniform', got {spec!r}")
    return P.EffectPrior.normal(_num(parts[0], "mu prior mean", None),
                                _num(parts[1], "mu prior sd", None))


_FIXED = {
    "half-normal": (P.half_normal, 1), "half-cauchy": (P.half_cauchy, 1),
    "half-t": (P.half_student_t, 2), "half-student-t": (P.half_student_t, 2),
    "exponential": (P.exponential, 1), "lognormal": (P.lognormal, 2),
    "log-normal": (P.lognormal, 2), "lomax": (P.lomax, 2), "power": (P.power_prior, 1),
}
_CONTEXT = {"uniform-shrinkage": P.uniform_shrinkage, "dumouchel": P.dumouchel,
            "conventional": P.conventional, "jeffreys": P.jeffreys,
            "berger-deely": P.berger_deely}
_POWER = {"uniform": 0.0, "sqrt": -0.5, "log-uniform": -1.0}


def parse_tau_prior(spec: str):
    """Heterogeneity prior from ``family[:arg...]``.

    Priors that scale with the standard errors come back as factories
    taking the dataset.
    """
    parts = [p.strip() for p in str(spec).split(":")]
    name = parts[0].lower()
    args = parts[1:]
    if name == "turner":
        if len(args) != 3:
            raise ParseError("turner prior needs turner:<outcome>:<comparator1>:<comparator2>")
        return P.turner_prior(*args)
    if name in _CONTEXT:
        if args:
            raise ParseError(f"{name} prior takes no parameters")
        return _CONTEXT[name]
    if name in _POWER:
        if args:
            raise ParseError(f"{name} prior takes no parameters")
        return P.power_prior(_POWER[name])
    if name in _FIXED:
        fn, nargs = _FIXED[name]
        if len(args) != nargs:
            raise ParseError(f"{name} prior needs {nargs} parameter(s), e.g. {name}:" +
                             ":".join(["0.5"] * nargs))
        return fn(*(_num(a, f"{name} parameter", None) for a in args))
    known = sorted(list(_FIXED) + list(_CONTEXT) + list(_POWER) + ["turner"])
    raise ParseError(f"unknown tau prior {name!r}; known: {', '.join(known)}")


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config: {exc.msg}", exc.lineno) from None
    if not isinstance(cfg, dict):
        raise ParseError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return cfg


def _settings(args) -> dict:
    """Config file values overridden by command-line flags."""
    cfg = load_config(getattr(args, "config", None))
    for key in ("measure", "mu_prior", "tau_prior", "delta", "epsilon", "interval", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _analysis_config(cfg: dict) -> AnalysisConfig:
    if "tau_prior" not in cfg:
        raise ParseError("no heterogeneity prior given (--tau-prior or config 'tau_prior')")
    return AnalysisConfig(
        heterogeneity_prior=parse_tau_prior(cfg["tau_prior"]),
        effect_prior=parse_mu_prior(cfg.get("mu_prior", "uniform")),
        direct=DirectConfig(float(cfg.get("delta", 0.01)), float(cfg.get("epsilon", 1e-4))),
        interval_type=IntervalKind.parse(cfg.get("interval", "shortest")),
        level=float(cfg.get("level", 0.95)))


def _dataset(args, cfg) -> Dataset:
    return read_study_file(args.data, EffectMeasure.parse(cfg.get("measure", "logor")),
                           float(cfg.get("correction", 0.5)))


# --------------------------------------------------------------------------
# output

def _round(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return None
        return float(format(v, ".10g"))
    if isinstance(v, dict):
        return {k: _round(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_round(x) for x in v.tolist()]
    if isinstance(v, np.integer):
        return int(v)
    return v


def dumps(obj) -> str:
    return json.dumps(_round(obj), indent=2, ensure_ascii=False) + "\n"


def _emit(obj, out_dir: Optional[str], name: str):
    text = dumps(obj)
    if out_dir is None:
        sys.stdout.write(text)
    else:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text)


def result_document(result, cfg: dict) -> dict:
    """JSON-ready summary of an analysis."""
    summ = result.summary
    est = {name: {"tau": getattr(result, name).tau, "mu": getattr(result, name).mu}
           for name in ("ml_joint", "ml_marginal", "map_joint", "map_marginal")}
    intervals = {}
    for col, target in zip(summ.columns, ["tau", "mu", "predictive"] +
                           list(range(1, result.data.k + 1))):
        iv = result.interval(target)
        intervals[col] = {"lo": iv.lo, "hi": iv.hi, "level": iv.level, "kind": iv.kind.value}
    bf = result.bayes_factors or None
    return {
        "data": [{"label": l, "y": float(y), "sigma": float(s)}
                 for l, y, s in zip(result.data.labels, result.data.y, result.data.sigma)],
        "config": {
            "effect_prior": result.effect_prior.describe(),
            "tau_prior": result.heterogeneity_prior.describe(),
            "delta": result.config.direct.delta,
            "epsilon": result.config.direct.epsilon,
            "interval": result.config.interval_type.value,
            "level": result.config.level,
        },
        "rows": list(SUMMARY_ROWS),
        "summary": summ.to_dict(),
        "intervals": intervals,
        "estimates": est,
        "bayes_factors": bf,
        "log_evidence": result.tau_marginal.log_evidence if result.priors_proper else None,
        "mixture_components": len(result.grid),
    }


def write_densities(result, path, n=201):
    from .plotting import density_grid

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "x", "density"])
        for target in ("tau", "mu", "predictive"):
            x, d = density_grid(result, target, n)
            for a, b in zip(x, d):
                w.writerow([target, format(float(a), ".10g"), format(float(b), ".10g")])


# --------------------------------------------------------------------------
# commands

def cmd_analyze(args) -> int:
    cfg = _settings(args)
    data = _dataset(args, cfg)
    result = run_analysis(data, _analysis_config(cfg))
    out = args.out
    os.makedirs(out, exist_ok=True)
    _emit(result_document(result, cfg), out, "summary.json")
    write_densities(result, os.path.join(out, "densities.csv"))
    mixtures = {"mu": result.effect_mixture, "predictive": result.predictive_mixture}
    for label, mix in zip(data.labels, result.shrinkage_mixtures):
        mixtures[label] = mix
    with open(os.path.join(out, "mixture.csv"), "w", encoding="utf-8") as fh:
        fh.write(dump_mixtures(mixtures))
    render_forest(result, os.path.join(out, "forest.svg"))
    if not args.no_figures:
        from .plotting import render_densities
        render_densities(result, os.path.join(out, "densities.png"))
    return EXIT_OK


def cmd_escalc(args) -> int:
    cfg = _settings(args)
    data = _dataset(args, cfg)
    doc = {"measure": EffectMeasure.parse(cfg.get("measure", "logor")).value,
           "estimates": [{"label": l, "y": float(y), "sigma": float(s)}
                         for l, y, s in zip(data.labels, data.y, data.sigma)]}
    _emit(doc, args.out, "escalc.json")
    return EXIT_OK


def cmd_priorpred(args) -> int:
    if args.tau_prior is not None:
        prior = parse_tau_prior(args.tau_prior)
    elif args.family is not None:
        params = [v for v in (args.scale, args.df) if v is not None]
        if args.family in ("exponential",):
            params = [args.rate if args.rate is not None else args.scale]
        prior = parse_tau_prior(":".join([args.family] + [repr(float(v)) for v in params]))
    else:
        raise ParseError("give --family/--scale or --tau-prior")
    if callable(prior) and not isinstance(prior, P.HeterogeneityPrior):
        raise ParseError("priors scaled by standard errors need study data; not supported here")
    cfgd = DirectConfig(args.delta or 0.01, args.epsilon or 1e-4)
    mix = normalmixture(prior, args.mu, cfgd)
    ps = args.p or [0.025, 0.5, 0.975]
    doc = {"prior": prior.describe(), "mu": args.mu, "components": len(mix),
           "quantiles": {format(p, "g"): float(mix.quantile(p)) for p in ps}}
    _emit(doc, args.out, "priorpred.json")
    return EXIT_OK


def cmd_ppp(args) -> int:
    cfg = _settings(args)
    data = _dataset(args, cfg)
    if args.subset:
        data = data.subset([s.strip() for s in args.subset.split(",")])
    result = run_analysis(data, _analysis_config(cfg))
    param = args.parameter
    if param not in ("mu", "tau"):
        param = int(param) if param.isdigit() else param
    hyp = Hypothesis(param, args.value, args.alternative)
    seed = int(cfg.get("seed", 0))
    res = ppp_value(result, hyp, args.statistic, args.tail, args.n, seed)
    doc = {"hypothesis": {"parameter": str(hyp.parameter), "value": hyp.value,
                          "alternative": hyp.alternative},
           "statistic": res.statistic, "tail": res.tail, "n": res.n, "seed": res.seed,
           "observed_statistic": res.observed_statistic, "p_value": res.p_value,
           "failures": res.failures}
    _emit(doc, args.out, "ppp.json")
    if args.out is not None:
        with open(os.path.join(args.out, "replicates.csv"), "w", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "mu", "statistic", "tail_flag"])
            rep = res.replicates
            for row in zip(rep["tau"], rep["mu"], rep["statistic"], rep["tail_flag"]):
                w.writerow([format(float(row[0]), ".10g"), format(float(row[1]), ".10g"),
                            format(float(row[2]), ".10g"), int(row[3])])
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _settings(args)
    tau_prior = parse_tau_prior(cfg.get("tau_prior", "half-normal:0.5"))
    if not isinstance(tau_prior, P.HeterogeneityPrior):
        raise ParseError("calibration needs a prior that does not depend on the data")
    scen = CalibrationScenario(
        effect_prior=parse_mu_prior(cfg.get("mu_prior", "0,4")),
        heterogeneity_prior=tau_prior,
        k_choices=tuple(int(v) for v in args.k_choices.split(",")),
        sigma_range=tuple(float(v) for v in args.sigma_range.split(",")),
        n_sim=args.n_sim, seed=int(cfg.get("seed", 0)),
        direct=DirectConfig(float(cfg.get("delta", 0.01)), float(cfg.get("epsilon", 1e-4))))
    pit = run_calibration(scen)
    d_mu, crit = ks_uniform(pit.pit_mu)
    d_tau, _ = ks_uniform(pit.pit_tau)
    levels = (0.5, 0.8, 0.9, 0.95, 0.99)
    doc = {"n_sim": scen.n_sim, "seed": scen.seed, "failures": pit.failures,
           "flagged": pit.flagged,
           "ks": {"mu": d_mu, "tau": d_tau, "critical_05": crit},
           "coverage": {"mu": {format(l, "g"): pit.coverage(l, "mu") for l in levels},
                        "tau": {format(l, "g"): pit.coverage(l, "tau") for l in levels}}}
    _emit(doc, args.out, "calibration.json")
    if args.out is not None:
        with open(os.path.join(args.out, "pit.csv"), "w", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pit_mu", "pit_tau"])
            for a, b in zip(pit.pit_mu, pit.pit_tau):
                w.writerow([format(float(a), ".10g"), format(float(b), ".10g")])
    return EXIT_OK


def _common(p, data=True):
    if data:
        p.add_argument("--data", required=True, help="CSV with label,y,sigma or count columns")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--interval", choices=["shortest", "central"])
    p.add_argument("--tau-prior", dest="tau_prior", help="e.g. half-normal:0.5, jeffreys, "
                   "turner:<outcome>:<c1>:<c2>")
    p.add_argument("--mu-prior", dest="mu_prior", help="'mean,sd' or 'uniform'")
    p.add_argument("--measure", choices=["logor", "logrr"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nnhm", description="Bayesian random-effects meta-analysis")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full analysis with summary, densities and forest plot")
    _common(p)
    p.add_argument("--no-figures", action="store_true", help="skip the matplotlib figure")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("escalc", help="effect sizes from 2x2 counts")
    _common(p)
    p.set_defaults(func=cmd_escalc)

    p = sub.add_parser("priorpred", help="quantiles of the prior predictive normal mixture")
    p.add_argument("--family")
    p.add_argument("--scale", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--df", type=float)
    p.add_argument("--tau-prior", dest="tau_prior")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--p", type=float, action="append")
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_priorpred)

    p = sub.add_parser("ppp", help="posterior predictive p-value")
    _common(p)
    p.add_argument("--parameter", default="mu", help="mu, tau, or a study index/label")
    p.add_argument("--value", type=float, default=0.0)
    p.add_argument("--alternative", choices=["less", "greater"], default="less")
    p.add_argument("--statistic", choices=["cdf", "q"], default="cdf")
    p.add_argument("--tail", choices=["auto", "upper", "lower"], default="auto")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--subset", help="comma-separated study labels to analyse")
    p.set_defaults(func=cmd_ppp)

    p = sub.add_parser("calibrate", help="PIT calibration simulation")
    _common(p, data=False)
    p.add_argument("--n-sim", dest="n_sim", type=int, default=1000)
    p.add_argument("--k-choices", dest="k_choices", default="2,3,5,10,20")
    p.add_argument("--sigma-range", dest="sigma_range", default="0.2,1.0")
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"nnhm: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"nnhm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NNHMError, ValueError) as exc:
        print(f"nnhm: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
