"""Command-line front end.

Every subcommand writes one JSON report (plus CSV curve files where relevant)
that records the tool version, the fully resolved configuration, the seed and
the elapsed wall-clock time.  Exit codes: 0 success, 2 input error, 3
numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bayes_robust import SOURCES, all_binary_rules, bounds_sample, draw_posterior, from_bounds, report
from .decision_rules import BinaryBounds, LossSpec, MultinomialBounds, robust_forecasts, theta_optimal
from .divergence_dual import (
    ContinuousSetSpec, DiscreteReference, NormalMixtureReference, NormalReference,
    dual_extreme_lower_report, dual_extreme_upper_report,
)
from .errors import EmptyIdentifiedSet, InputError, NumericalFailure
from .limit_experiment import (
    MC_CHECK_POINTS, RULES, Ex7Config, ex7_excess_regret_curve, ex7_excess_risk_curve, ex7_monte_carlo,
    ratio_table, summary, write_curves_csv,
)
from .linear_model import binary_bounds_report, extreme_probs_binary, profile_bounds, write_profile_csv
from .panel_dbc import (
    FORECAST_MODES, HT_LAMBDA_GRID, HistoryDistribution, PanelJobConfig, PanelModelSpec, all_histories,
    build_panel_spec, grid_from_range, history_index, history_matrix, honore_tamer_dgp, ingest_panel_csv,
    link_cdf, load_model_spec, simulate_panel, tally_histories,
)

DIGITS = 6


# ---------------------------------------------------------------------------
# output helpers


def _round(obj):
    """Round floats to the printed precision; infinities become strings."""
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return round(x, DIGITS) + 0.0
    return obj


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_via(path: Path, writer) -> None:
    """Run ``writer(tmp_path)`` and move the file into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _emit(args, results: dict, started: float, seed: Optional[int] = None) -> dict:
    doc = {
        "tool": "robust_forecast",
        "version": __version__,
        "command": args.command,
        "config": _resolved(args),
        "seed": seed,
        "results": results,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    text = json.dumps(_round(doc), indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write(Path(args.out) / f"{args.command}.json", text)
    sys.stdout.write(text)
    return doc


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 32))
    return args.seed


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


def _history(text: str, T: int):
    text = text.strip()
    if len(text) != T or set(text) - {"0", "1"}:
        raise InputError(f"history {text!r} must be {T} characters of 0/1")
    return tuple(int(c) for c in text)


# ---------------------------------------------------------------------------
# panel set-up shared by extreme-probs and bayes-forecast


def _panel_job(args):
    """Model configuration and history distribution from the arguments."""
    if args.spec:
        path = Path(args.spec)
        if not path.exists():
            raise InputError(f"model spec file not found: {path}")
        job = load_model_spec(path)
        T = job.model.T
    else:
        T = args.T
        beta = grid_from_range({"min": args.beta_min, "max": args.beta_max, "step": args.beta_step}, "beta")
        first = _history(args.history.split(",")[0], T) if args.history and args.history != "all" else (0,) * T
        job = PanelJobConfig(PanelModelSpec(T, tuple(HT_LAMBDA_GRID), first), beta, args.forecast)
    if args.panel:
        path = Path(args.panel)
        if not path.exists():
            raise InputError(f"panel file not found: {path}")
        P = ingest_panel_csv(path)
    elif args.dgp == "honore-tamer":
        dgp, P = honore_tamer_dgp(T, args.weights)
        if getattr(args, "n", None):
            P = tally_histories(simulate_panel(dgp, T, args.n, np.random.default_rng(_seed(args))))
    else:
        raise InputError("give either --panel CSV or --dgp honore-tamer")
    if P.T != T:
        raise InputError(f"panel has T={P.T} but the model has T={T}")
    if args.history == "all":
        histories = [tuple(h) for h in all_histories(T) if P.probs[history_index(h)] > 0]
    elif args.history:
        histories = [_history(h, T) for h in args.history.split(",")]
    else:
        histories = [job.model.history]
    return job, P, histories


def _spec_for(job: PanelJobConfig, P: HistoryDistribution, history):
    m = job.model
    model = PanelModelSpec(m.T, m.lambda_grid, history, m.link, m.y0_support)
    return build_panel_spec(model, P, job.beta_grid, job.forecast)


def cmd_extreme_probs(args) -> int:
    started = time.perf_counter()
    job, P, histories = _panel_job(args)
    results = {"histories": {}, "history_probs": P.probs}
    for h in histories:
        label = "".join(map(str, h))
        rep = binary_bounds_report(_spec_for(job, P, h))
        results["histories"][label] = {
            "p_L": rep.bounds.p_L, "p_U": rep.bounds.p_U,
            "argphi_p_L": rep.argphi["p_L"], "argphi_p_U": rep.argphi["p_U"],
            "audit_gap": rep.audit_gap, "n_feasible": rep.n_feasible,
        }
        results["feasible_interval"] = {"lo": rep.feasible.lo, "hi": rep.feasible.hi, "empty": rep.feasible.empty}
        if args.out and not args.no_profile:
            rows = profile_bounds(_spec_for(job, P, h))
            _atomic_via(Path(args.out) / f"profile_{label}.csv", lambda tmp: write_profile_csv(rows, tmp))
    _emit(args, results, started, args.seed)
    return 0


# ---------------------------------------------------------------------------
# forecast


def _loss(args) -> LossSpec:
    n = len(_floats(args.gaps or args.lower or "0,0")) if args.loss == "classification" else 2
    return LossSpec(args.loss, args.a01, args.a10, n)


def _decision_dict(dec, risk=None):
    out = {"decision": dec.value, "tie": dec.tie, "tie_set": list(dec.tie_set)}
    if risk is not None:
        out[risk.criterion] = risk.value
    return out


def cmd_forecast(args) -> int:
    started = time.perf_counter()
    loss = _loss(args)
    results = {}
    if loss.kind == "classification":
        lower = tuple(_floats(args.lower)) if args.lower else ()
        gaps = tuple(_floats(args.gaps)) if args.gaps else ()
        if lower and gaps and len(gaps) != len(lower):
            # the lower vector may omit trailing outcomes with zero lower probability
            lower = lower + (0.0,) * (len(gaps) - len(lower))
        bounds = MultinomialBounds(lower, gaps)
        for name, (dec, risk) in robust_forecasts(loss, bounds).items():
            if dec is not None:
                results[name] = _decision_dict(dec, risk)
    else:
        if args.pl is None or args.pu is None:
            raise InputError("binary, quadratic and log losses need --pl and --pu")
        bounds = BinaryBounds(args.pl, args.pu)
        for name, (dec, risk) in robust_forecasts(loss, bounds).items():
            results[name] = _decision_dict(dec, risk)
    if args.p is not None:
        point = _floats(args.p)
        results["theta_optimal"] = _decision_dict(theta_optimal(loss, point if loss.kind == "classification" else point[0]))
    _emit(args, results, started)
    return 0


# ---------------------------------------------------------------------------
# bayes-forecast


def _read_bounds_csv(path) -> list:
    path = Path(path)
    if not path.exists():
        raise InputError(f"bounds file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"p_L", "p_U"}:
        raise InputError(f"{path}: expected header p_L,p_U and at least one row")
    try:
        return [BinaryBounds(float(r["p_L"]), float(r["p_U"])) for r in rows]
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_bayes_forecast(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    if args.bounds_csv:
        bs = from_bounds(_read_bounds_csv(args.bounds_csv))
        draws_info = {"S": len(bs), "source": "supplied", "skipped": 0}
        rules = all_binary_rules(bs, args.a01, args.a10)
        results = {"rules": {k: _decision_dict(v) for k, v in rules.items()}, "draws": draws_info}
        pl, pu = bs.binary_arrays()
        results.update(mean_pL=pl.mean(), mean_pU=pu.mean())
        _emit(args, results, started, seed)
        return 0

    job, P, histories = _panel_job(args)
    if P.counts is None:
        raise InputError("Bayesian forecasts need observed counts: use --panel or --dgp with --n")
    alpha = _floats(args.alpha) if args.alpha else None
    draws = draw_posterior(P, args.S, seed, args.source, alpha)
    results = {"histories": {}, "S": draws.S, "source": draws.source}
    for h in histories:
        label = "".join(map(str, h))

        def bound_fn(p, h=h):
            return extreme_probs_binary(_spec_for(job, HistoryDistribution(p), h))

        bs = bounds_sample(draws, bound_fn)
        entry = {"skipped": bs.skipped, "skipped_fraction": bs.skipped / draws.S}
        if len(bs):
            rules = all_binary_rules(bs, args.a01, args.a10)
            entry["rules"] = {k: report(k, v, bs, draws) for k, v in rules.items()}
        else:
            entry["error"] = "every draw had an empty identified set"
        results["histories"][label] = entry
    _emit(args, results, started, seed)
    if all("error" in e for e in results["histories"].values()):
        raise EmptyIdentifiedSet("every posterior draw had an empty identified set")
    return 0


# ---------------------------------------------------------------------------
# limit-experiment


def cmd_limit_experiment(args) -> int:
    started = time.perf_counter()
    rules = tuple(r.strip() for r in args.rules.split(",")) if args.rules else RULES
    cfg = Ex7Config(-args.h0_max, args.h0_max, args.step, rules)
    risk, regret = ex7_excess_risk_curve(cfg), ex7_excess_regret_curve(cfg)
    results = {
        "risk": summary(risk), "regret": summary(regret),
        "ratios": {"risk": ratio_table(risk), "regret": ratio_table(regret)},
    }
    seed = None
    if args.mc_check:
        seed = _seed(args)
        reps = int(float(args.mc_check))
        checks = []
        for crit, curves in (("risk", risk), ("regret", regret)):
            for rule, curve in curves.items():
                for h0 in MC_CHECK_POINTS:
                    est, se = ex7_monte_carlo(rule, h0, reps, seed, crit)
                    exact = float(np.interp(h0, curve.h0, curve.excess))
                    z = abs(est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)
                    checks.append({"criterion": crit, "rule": rule, "h0": h0, "analytic": exact,
                                   "monte_carlo": est, "se": se, "within_3se": z <= 3.0})
        results["mc_check"] = checks
    if args.out:
        _atomic_via(Path(args.out) / "risk_curves.csv", lambda tmp: write_curves_csv(risk, tmp))
        _atomic_via(Path(args.out) / "regret_curves.csv", lambda tmp: write_curves_csv(regret, tmp))
    _emit(args, results, started, seed)
    return 0


# ---------------------------------------------------------------------------
# kl-bounds


def _reference(raw: dict):
    kind = raw.get("type", "normal")
    if kind == "normal":
        return NormalReference(float(raw.get("mean", 0.0)), float(raw.get("sd", 1.0)),
                               raw.get("method", "mc"), int(raw.get("nodes", 64)))
    if kind == "mixture":
        return NormalMixtureReference(tuple(raw["weights"]), tuple(raw["means"]), tuple(raw["sds"]))
    if kind == "discrete":
        return DiscreteReference(tuple(raw["support"]), tuple(raw["probs"]))
    raise InputError(f"unknown reference type {kind!r}")


def parse_kl_spec(raw: dict) -> ContinuousSetSpec:
    """Build a KL set from JSON.

    Objective families: ``{"family": "panel_probit", "y_last": 0|1, "link": ...}``
    gives ``F(phi * y_last + x)``; ``{"family": "threshold", "cut": c}`` gives
    ``1[x >= c]``.  Moment family ``{"family": "panel_histories", "T", "y0",
    "r"}`` matches the probabilities of all but the last history.
    """
    try:
        ref = _reference(raw.get("reference", {}))
        phi = grid_from_range(raw["phi"], "phi") if isinstance(raw.get("phi"), dict) else np.asarray(raw.get("phi", [0.0]), dtype=float)
        bspec = raw.get("b", {"family": "panel_probit", "y_last": 0})
        family = bspec.get("family")
        if family == "panel_probit":
            y_last, link = int(bspec.get("y_last", 0)), bspec.get("link", "probit")

            def b(x, p, m):
                q = link_cdf(p * y_last + np.asarray(x, dtype=float), link)
                return q if m == 1 else 1.0 - q
        elif family == "threshold":
            cut = float(bspec["cut"])

            def b(x, p, m):
                ind = (np.asarray(x, dtype=float) >= cut).astype(float)
                return ind if m == 1 else 1.0 - ind
        else:
            raise InputError(f"unknown objective family {family!r}")
        g, r = None, np.zeros(0)
        mspec = raw.get("moments")
        if mspec:
            if mspec.get("family") != "panel_histories":
                raise InputError(f"unknown moment family {mspec.get('family')!r}")
            T, y0 = int(mspec["T"]), int(mspec.get("y0", 0))
            r = np.asarray(mspec["r"], dtype=float)[:-1]
            link = mspec.get("link", "probit")

            def g(x, p):
                x = np.asarray(x, dtype=float)
                return history_matrix(T, np.full(x.size, y0), x, float(p), link)[:-1].T
        delta = raw.get("delta", 0.0)
        return ContinuousSetSpec(phi, ref, b, g, r, delta if delta == "large" else float(delta),
                                 int(raw.get("sample_size", 100_000)), int(raw.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed KL spec: {exc}") from exc


def cmd_kl_bounds(args) -> int:
    started = time.perf_counter()
    path = Path(args.spec)
    if not path.exists():
        raise InputError(f"KL spec file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if args.delta is not None:
        raw["delta"] = args.delta
    spec = parse_kl_spec(raw)
    up, lo = dual_extreme_upper_report(spec), dual_extreme_lower_report(spec)
    results = {
        "p_U": min(max(up.value, 0.0), 1.0), "p_L": min(max(lo.value, 0.0), 1.0),
        "se_p_U": up.std_error, "se_p_L": lo.std_error,
        "argphi_p_U": up.phi, "argphi_p_L": lo.phi, "n_feasible": up.n_feasible,
        "delta": spec.delta, "spec": raw,
    }
    _emit(args, results, started, spec.seed)
    return 0


# ---------------------------------------------------------------------------
# parser


def _panel_args(p):
    p.add_argument("--dgp", choices=["honore-tamer"], help="use the built-in population design")
    p.add_argument("--panel", help="CSV of binary panels with header y1..yT")
    p.add_argument("--spec", help="model spec JSON")
    p.add_argument("--T", type=int, default=2, help="horizon when no spec file is given")
    p.add_argument("--history", help="conditioning histories, e.g. 00 or 00,11, or 'all'")
    p.add_argument("--beta-min", type=float, default=-5.0)
    p.add_argument("--beta-max", type=float, default=5.0)
    p.add_argument("--beta-step", type=float, default=0.01)
    p.add_argument("--forecast", choices=FORECAST_MODES, default="marginal")
    p.add_argument("--weights", choices=["cell", "density"], default="cell",
                   help="discretization of the normal effect distribution in the built-in design")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output directory for report files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-forecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extreme-probs", help="forecast bounds for a panel dynamic binary choice model")
    _panel_args(p)
    p.add_argument("--no-profile", action="store_true", help="skip the per-beta profile CSV")
    p.set_defaults(func=cmd_extreme_probs)

    p = sub.add_parser("forecast", help="robust decisions from known bounds")
    p.add_argument("--pl", type=float)
    p.add_argument("--pu", type=float)
    p.add_argument("--p", help="a point probability (or vector) for the theta-optimal forecast")
    p.add_argument("--lower", help="comma-separated lower probabilities (classification)")
    p.add_argument("--gaps", help="comma-separated regret gaps (classification)")
    p.add_argument("--loss", choices=["binary", "quadratic", "log", "classification"], default="binary")
    p.add_argument("--a01", type=float, default=1.0)
    p.add_argument("--a10", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("bayes-forecast", help="Bayesian robust decisions from posterior or bootstrap draws")
    _panel_args(p)
    p.add_argument("--n", type=int, help="simulate this many panels from the built-in design")
    p.add_argument("--S", type=int, default=1000)
    p.add_argument("--source", choices=SOURCES, default="dirichlet_flat")
    p.add_argument("--alpha", help="comma-separated Dirichlet prior for dirichlet_custom")
    p.add_argument("--bounds-csv", help="per-draw bounds with header p_L,p_U instead of a panel")
    p.add_argument("--a01", type=float, default=1.0)
    p.add_argument("--a10", type=float, default=1.0)
    p.set_defaults(func=cmd_bayes_forecast)

    p = sub.add_parser("limit-experiment", help="excess risk and regret curves of the limit experiment")
    p.add_argument("--h0-max", type=float, default=8.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--rules", help=f"comma-separated subset of {','.join(RULES)}")
    p.add_argument("--mc-check", help="Monte Carlo replications for the analytic-curve check, e.g. 1e5")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_limit_experiment)

    p = sub.add_parser("kl-bounds", help="extreme probabilities over a KL neighbourhood")
    p.add_argument("--spec", required=True, help="KL set JSON")
    p.add_argument("--delta", type=float, help="override the radius given in the KL set JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kl_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, EmptyIdentifiedSet) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
