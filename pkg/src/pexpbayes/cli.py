"""Command-line interface.

Subcommands: ``simulate``, ``mmle``, ``gibbs``, ``rates``, ``experiment``,
``contract`` and ``report``. Each one writes CSV/JSON files to its output
directory and prints a short CSV summary on stdout.

Exit codes: 0 on success, 2 for invalid configurations or arguments, 3
for numerical failures (the message names a diagnostic dump file).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ExperimentConfig, load_config, merge
from .ebayes import QuadratureSpec, mmle
from .errors import ConfigError, DomainError, NumericError, SamplerError
from .gibbs import run_gibbs
from .model import Observation, simulate
from .rates import RateQuery, eps_upper, linear_minimax_rate, minimax_rate, optimize_tau

__all__ = ["main", "build_parser"]

DEFAULT_CONFIG = {
    "name": "custom",
    "truth": {"kind": "power_sine", "a": 2.25, "omega": 10.0},
    "n": 200,
    "L_rule": {"kind": "fixed", "L": 200},
    "prior": {"p": 1.0, "alpha": 1.75, "tau": 1.0},
    "mode": "tau",
    "hyper": {"kind": "trunc_invgamma", "params": {"a": 1.0, "b": 1.0}, "trunc": {"form": "assumption"}},
    "method": "HB",
    "seed": 0,
}

DEFAULT_HYPER = {
    "tau": {"kind": "trunc_invgamma", "params": {"a": 1.0, "b": 1.0}, "trunc": {"form": "assumption"}},
    "alpha": {"kind": "trunc_exp", "params": {"rate": 1.0}, "trunc": {"lo": 0.5, "hi": 100.0}},
    "both": {"kind": "product", "params": {"a": 1.0, "b": 1.0, "rate": 1.0},
             "trunc": {"lo": 0.5, "hi": 100.0}},
}


# ---------------------------------------------------------------------------
# helpers


def _parse_set(items) -> dict:
    """Turn ``["mcmc.iters=2000", ...]`` into a nested override document."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value", field=item)
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        parts = key.split(".")
        for k in parts[:-1]:
            node = node.setdefault(k, {})
        node[parts[-1]] = val
    return out


def _flag_overrides(args) -> dict:
    o = {}
    if getattr(args, "n", None) is not None:
        o["n"] = args.n if len(args.n) > 1 else args.n[0]
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    prior = {k: getattr(args, k) for k in ("p", "alpha", "tau")
             if isinstance(getattr(args, k, None), (int, float))}
    if prior:
        o["prior"] = prior
    if getattr(args, "mode", None):
        o["mode"] = args.mode
    if getattr(args, "L", None) is not None:
        o["L_rule"] = {"kind": "fixed", "L": args.L}
    mc = {k: getattr(args, k) for k in ("iters", "burnin", "thin") if getattr(args, k, None) is not None}
    if mc:
        o["mcmc"] = mc
    if getattr(args, "reps", None) is not None:
        o["replications"] = args.reps
    return o


def _config(args, base=None) -> ExperimentConfig:
    """Configuration from ``--config`` (or ``base``), then flags, then ``--set``."""
    if getattr(args, "config", None):
        doc = load_config(args.config).to_dict()
    else:
        doc = dict(base or DEFAULT_CONFIG)
    doc = merge(doc, _flag_overrides(args))
    doc = merge(doc, _parse_set(getattr(args, "set", None)))
    mode = doc.get("mode", "frozen")
    if mode == "frozen":
        doc.pop("hyper", None)
    elif doc.get("hyper", {}).get("kind") != DEFAULT_HYPER[mode]["kind"]:
        doc["hyper"] = DEFAULT_HYPER[mode]
    return ExperimentConfig(doc)


def _observation(args, cfg: ExperimentConfig):
    """Load ``--data`` or simulate one data set from the configuration."""
    if getattr(args, "data", None):
        try:
            return Observation.load(args.data), None
        except FileNotFoundError as e:
            raise DomainError(f"data file {e.filename} not found") from e
    n = cfg.n_list[0]
    truth = cfg.truth(cfg.L(n))
    data_rng, _ = ex._streams(cfg.seed, n, 0, ())
    return simulate(truth, n, data_rng, seed=cfg.seed), truth


def _out_dir(args, default) -> Path:
    d = Path(args.out) if getattr(args, "out", None) else Path(default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())


def _g(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _config(args)
    obs, truth = _observation(args, cfg)
    out = _out_dir(args, "out/simulate")
    obs.save(out / "observation.csv")
    truth.to_csv(out / "truth.csv", value_name="theta0")
    _emit([[_g(obs.n), obs.L, cfg.seed, str(out / "observation.csv")]], ["n", "L", "seed", "path"])
    return 0


def cmd_mmle(args) -> int:
    cfg = _config(args)
    obs, _ = _observation(args, cfg)
    mode = cfg.mode()
    if mode.kind == "frozen":
        raise ConfigError("config field mode: the MMLE needs a free hyper-parameter", field="mode")
    grid_kw = cfg.grid_kw()
    if args.resolution is not None:
        grid_kw["resolution"] = args.resolution
    if args.alpha_bounds is not None:
        grid_kw["alpha_bounds"] = tuple(args.alpha_bounds)
    if args.alpha_step is not None:
        grid_kw["alpha_step"] = args.alpha_step
    quad = QuadratureSpec(closed_form_p2=args.closed_form)
    res = mmle(obs, mode, cfg.p, quad=quad, **grid_kw)
    out = _out_dir(args, "out/mmle")
    with open(out / "mmle_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "alpha", "log_marginal"])
        for t, a, v in res.rows():
            w.writerow([repr(t), repr(a), repr(v)])
    (out / "mmle.json").write_text(json.dumps(
        {"mode": mode.kind, "p": cfg.p, "n": obs.n, "L": obs.L, "lambda_hat": res.lam,
         "log_marginal": res.log_marginal, "grid_points": len(res.grid)}, indent=1) + "\n")
    _emit([[mode.kind, _g(cfg.p), _g(obs.n), obs.L, _g(res.lam["tau"]), _g(res.lam["alpha"]),
            _g(res.log_marginal), len(res.grid)]],
          ["mode", "p", "n", "L", "tau_hat", "alpha_hat", "log_marginal", "grid_points"])
    return 0


def cmd_gibbs(args) -> int:
    cfg = _config(args)
    obs, truth = _observation(args, cfg)
    out = _out_dir(args, "out/gibbs")
    n = obs.n
    log_path = Path(args.log) if args.log else out / "chain.jsonl"
    _, chain_rng = ex._streams(cfg.seed, n, 0, ())
    summ, chain = run_gibbs(obs, cfg.mode(), cfg.hyper(n), cfg.p, cfg.gibbs_config(),
                            rng=chain_rng, seed=cfg.seed, log_path=log_path, resume=args.resume,
                            dump_dir=out)
    summ.mean.to_csv(out / "posterior_mean.csv", value_name="mean")
    with open(out / "band.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean", "lower", "upper"])
        t = summ.points if summ.points is not None else np.arange(1, obs.L + 1, dtype=float)
        m = summ.mean_curve if summ.points is not None else summ.mean.coeffs
        for row in zip(t, m, summ.lower, summ.upper):
            w.writerow([repr(float(v)) for v in row])
    info = {"n": n, "L": obs.L, "mode": cfg.mode().kind, "n_kept": summ.n_kept,
            "band_width": summ.band_width, "acc_xi": summ.acc_xi, "acc_lam": summ.acc_lam,
            "acc_centered": summ.acc_c, "lambda_moments": summ.lam_moments,
            "backend": chain.backend, "log": str(log_path)}
    if truth is not None:
        info["l2_error"] = float(np.linalg.norm(summ.mean.coeffs - truth.coeffs))
    (out / "summary.json").write_text(json.dumps(info, indent=1, default=float) + "\n")
    lam = summ.lam_moments
    _emit([[_g(n), obs.L, info["mode"], _g(lam.get("tau_mean", math.nan)),
            _g(lam.get("alpha_mean", math.nan)), _g(summ.acc_xi), _g(summ.acc_lam),
            _g(summ.band_width), _g(info.get("l2_error", math.nan))]],
          ["n", "L", "mode", "tau_mean", "alpha_mean", "acc_xi", "acc_lam", "band_width", "l2_error"])
    return 0


def cmd_rates(args) -> int:
    rows = []
    for n in args.n:
        q = RateQuery(n=n, beta=args.beta, q=args.q, p=args.p, alpha=args.alpha, tau=args.tau, K=args.K)
        cls = args.truth_class or ("besov" if args.q < 2 else "sobolev")
        try:
            eps = eps_upper(q, cls).value
        except DomainError:
            eps = math.nan
        try:
            tau0, b = optimize_tau(args.alpha, args.beta, args.p, n)
            eps_opt = b.value
        except DomainError:
            tau0 = eps_opt = math.nan
        rows.append([_g(float(n)), _g(args.beta), _g(args.q), _g(args.p), _g(args.alpha), q.regime.value,
                     _g(minimax_rate(args.beta, n)), _g(linear_minimax_rate(args.beta, args.q, n)),
                     _g(eps), _g(tau0), _g(eps_opt)])
    header = ["n", "beta", "q", "p", "alpha", "regime", "minimax", "linear", "eps_upper",
              "tau_opt", "eps_tau_opt"]
    if args.out:
        out = _out_dir(args, args.out)
        with open(out / "rates.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    _emit(rows, header)
    return 0


def _print_study(study):
    rows = [r.row() for r in study.records]
    _emit(rows, ex.RESULT_COLUMNS)
    if study.slope is not None:
        sys.stdout.write(f"# slope={study.slope:.6g} target={study.target_exponent:.6g}\n")


def cmd_experiment(args) -> int:
    overrides = {}
    if args.config:
        overrides = load_config(args.config).to_dict()
    if args.seed is not None:
        overrides["seed"] = args.seed
    mc = {k: getattr(args, k) for k in ("iters", "burnin") if getattr(args, k) is not None}
    if mc:
        overrides["mcmc"] = mc
    if args.reps is not None:
        overrides["replications"] = args.reps
    overrides = merge(overrides, _parse_set(args.set))
    out = _out_dir(args, f"out/experiment{args.which}")
    if args.which == 1:
        if args.n is not None:
            overrides["n"] = args.n if len(args.n) > 1 else args.n[0]
        study = ex.run_experiment_1(overrides, alphas=args.alpha, out_dir=out, workers=args.workers)
    else:
        priors = tuple(args.p) if args.p else ex.EXPERIMENT_2_PRIORS
        study = ex.run_experiment_2(overrides, priors=priors, n_values=args.n, out_dir=out,
                                    workers=args.workers)
    _print_study(study)
    return 0


def cmd_contract(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, "out/contract")
    study = ex.contraction_study(cfg, out_dir=out, workers=args.workers)
    _print_study(study)
    return 0


def cmd_report(args) -> int:
    for path in ex.render_report(args.dir):
        sys.stdout.write(f"{path}\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(sp, data=True):
    sp.add_argument("--config", help="JSON configuration file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a configuration field, e.g. mcmc.iters=2000 (repeatable)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=float, nargs="+", help="noise precision(s)")
    sp.add_argument("--out", help="output directory")
    if data:
        sp.add_argument("--data", help="observation CSV written by 'simulate' (default: simulate)")
        sp.add_argument("--L", type=int, help="fixed truncation level")


def _prior_flags(sp):
    sp.add_argument("--mode", choices=["frozen", "tau", "alpha", "both"])
    sp.add_argument("--p", type=float, help="prior shape in [1, 2]")
    sp.add_argument("--alpha", type=float, help="fixed prior regularity")
    sp.add_argument("--tau", type=float, help="fixed prior scale")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pexpbayes", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw one observation from the white noise model")
    _common(sp, data=False)
    sp.add_argument("--L", type=int, help="fixed truncation level")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mmle", help="maximum marginal likelihood hyper-parameters")
    _common(sp)
    _prior_flags(sp)
    sp.add_argument("--resolution", type=float, help="tau grid points per decade")
    sp.add_argument("--alpha-bounds", type=float, nargs=2)
    sp.add_argument("--alpha-step", type=float)
    sp.add_argument("--closed-form", action="store_true", help="closed-form marginal when p = 2")
    sp.set_defaults(func=cmd_mmle)

    sp = sub.add_parser("gibbs", help="hierarchical posterior by Gibbs sampling")
    _common(sp)
    _prior_flags(sp)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--burnin", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--log", help="chain log path (default: <out>/chain.jsonl)")
    sp.add_argument("--resume", action="store_true", help="continue from the last checkpoint in --log")
    sp.set_defaults(func=cmd_gibbs)

    sp = sub.add_parser("rates", help="rate bounds for a smoothness class")
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--q", type=float, default=2.0)
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--n", type=float, nargs="+", required=True)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--K", type=float, default=1.0)
    sp.add_argument("--truth-class", choices=["sobolev", "besov"])
    sp.add_argument("--out", help="also write rates.csv here")
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("experiment", help="run one of the two reference studies")
    sp.add_argument("which", type=int, choices=[1, 2])
    sp.add_argument("--config", help="JSON document merged into the study defaults")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=float, nargs="+")
    sp.add_argument("--alpha", type=float, nargs="+", help="prior regularities (study 1)")
    sp.add_argument("--p", type=float, nargs="+", help="prior shapes (study 2)")
    sp.add_argument("--iters", type=int)
    sp.add_argument("--burnin", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("contract", help="empirical contraction rate over an n grid")
    _common(sp, data=False)
    _prior_flags(sp)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--burnin", type=int)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_contract)

    sp = sub.add_parser("report", help="re-render SVG figures from curves.csv")
    sp.add_argument("dir")
    sp.set_defaults(func=cmd_report)
    return ap


def _numeric_dump(exc, args) -> str:
    out = getattr(args, "out", None)
    fd, name = tempfile.mkstemp(prefix="pexp_numeric_", suffix=".json",
                                dir=out if out and Path(out).is_dir() else None)
    with open(fd, "w") as fh:
        json.dump({"error": str(exc), "type": type(exc).__name__,
                   "index": getattr(exc, "index", None), "argv": sys.argv[1:],
                   "traceback": traceback.format_exc()}, fh, indent=1)
    return name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return 2
    except SamplerError as e:
        dump = e.dump_path or _numeric_dump(e, args)
        sys.stderr.write(f"numeric failure: {e}\ndiagnostic dump: {dump}\n")
        return 3
    except NumericError as e:
        sys.stderr.write(f"numeric failure: {e}\ndiagnostic dump: {_numeric_dump(e, args)}\n")
        return 3
    except DomainError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
