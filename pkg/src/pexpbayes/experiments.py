"""Experiment orchestration: the two reference studies and contraction sweeps.

Every run is a task keyed by ``(variant, n, rep)``. Its random streams are
derived from the study seed and the key's values (never from its position
in a list), so any subset of tasks can be run, in any order or process, and
reproduce the same numbers. Data are keyed by ``(n, rep)`` only, so the
variants of one study (prior regularities, prior shapes) see the same
observations.

Outputs written to the study directory:

``results.csv``
    one row per run: ``n, rep, method, mode, lambda_hat_or_mean, l2_error,
    band_width, seconds``
``curves.csv``
    every plotted curve in long form, with its figure and panel position;
    :func:`render_report` rebuilds all figures from this file alone
``study.json``
    configuration, per-run diagnostics and the fitted slope
``*.svg``
    figures
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, merge
from .ebayes import QuadratureSpec, conjugate_posterior_mean, eb_posterior, mmle
from .errors import DomainError, SamplerError
from .gibbs import default_eval_points, run_gibbs
from .model import simulate
from .prior import PriorSpec
from .rates import adaptive_rate_target
from .sequences import Basis, basis_matrix
from .svg import Figure

__all__ = [
    "EXPERIMENT_1",
    "EXPERIMENT_2",
    "RunRecord",
    "StudyResult",
    "fit_slope",
    "run_experiment_1",
    "run_experiment_2",
    "contraction_study",
    "run_config",
    "render_report",
    "worker_count",
]

EXPERIMENT_1 = {
    "name": "experiment1",
    "truth": {"kind": "power_sine", "a": 2.25, "omega": 10.0},
    "n": 200,
    "L_rule": {"kind": "fixed", "L": 200},
    "prior": {"p": 1.0, "alpha": 1.75},
    "mode": "tau",
    "hyper": {"kind": "trunc_invgamma", "params": {"a": 1.0, "b": 1.0}, "trunc": {"form": "experiment"}},
    "method": "HB",
    "mcmc": {"iters": 25000, "burnin": 5000},
    "seed": 0,
    "replications": 1,
}
# truth smoothness of the first study; the prior regularities are beta + offsets
EXPERIMENT_1_BETA = 1.75
EXPERIMENT_1_OFFSETS = (-1.0, -0.5, 0.0, 0.5, 1.0)

EXPERIMENT_2 = {
    "name": "experiment2",
    "truth": {"kind": "power_sine_cos", "a": 1.5, "omega": 1.0},
    "n": [1000, 100000],
    "L_rule": {"kind": "power", "exponent": 1 / 1.5},
    "prior": {"p": 1.0, "tau": 1.0},
    "mode": "alpha",
    "hyper": {"kind": "trunc_exp", "params": {"rate": 1.0}, "trunc": {"lo": 0.5, "hi": 100.0}},
    "method": "HB",
    "mcmc": {"iters": 25000, "burnin": 5000},
    "seed": 0,
    "replications": 1,
}
EXPERIMENT_2_PRIORS = (1.0, 2.0)

RESULT_COLUMNS = ["n", "rep", "method", "mode", "lambda_hat_or_mean", "l2_error", "band_width", "seconds"]
CURVE_COLUMNS = ["figure", "row", "col", "title", "series", "t", "value"]


def worker_count(n_tasks: int) -> int:
    """Workers for ``n_tasks`` tasks, capped by ``PEXP_THREADS`` (default: CPU count)."""
    env = os.environ.get("PEXP_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


@dataclass
class RunRecord:
    n: float
    rep: int
    method: str
    mode: str
    lam: dict
    l2_error: float
    band_width: float
    seconds: float
    variant: dict = field(default_factory=dict)
    L: int = 0
    zero_error: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def lambda_text(self) -> str:
        return ";".join(f"{k}={v:.6g}" for k, v in sorted(self.lam.items()))

    def row(self) -> list:
        return [f"{self.n:g}", self.rep, self.method, self.mode, self.lambda_text,
                repr(self.l2_error), repr(self.band_width), f"{self.seconds:.3f}"]


@dataclass
class StudyResult:
    """Per-run records plus the slope of log median error against log n."""

    name: str
    records: list
    slope: float | None = None
    intercept: float | None = None
    target_exponent: float | None = None
    config: dict = field(default_factory=dict)
    out_dir: Path | None = None

    def errors_by(self, key) -> dict:
        out = {}
        for r in self.records:
            out.setdefault(key(r), []).append(r.l2_error)
        return out

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_COLUMNS)
            for r in self.records:
                w.writerow(r.row())
        return path

    def to_json(self) -> dict:
        return {"name": self.name, "slope": self.slope, "intercept": self.intercept,
                "target_exponent": self.target_exponent, "config": self.config,
                "records": [asdict(r) for r in self.records]}


def fit_slope(ns, errors) -> tuple[float, float]:
    """Least-squares fit of log median error on log n.

    ``errors[i]`` holds the replicate errors at ``ns[i]``.
    """
    ns = np.asarray(ns, dtype=float)
    if np.unique(ns).size < 3:
        raise DomainError("a slope needs at least 3 distinct n values")
    med = np.array([np.median(e) for e in errors])
    slope, icpt = np.polyfit(np.log(ns), np.log(med), 1)
    return float(slope), float(icpt)


# ---------------------------------------------------------------------------
# one run


def _streams(seed, n, rep, variant_key):
    data = np.random.SeedSequence(seed, spawn_key=(int(round(n)), int(rep), 0))
    chain = np.random.SeedSequence(seed, spawn_key=(int(round(n)), int(rep), 1) + tuple(variant_key))
    return np.random.default_rng(data), np.random.default_rng(chain)


def _curves(mean, lower, upper, truth, basis):
    if basis is Basis.ABSTRACT:
        t = np.arange(1, truth.size + 1, dtype=float)
        return t, truth, mean, lower, upper
    t = default_eval_points()
    B = basis_matrix(basis, truth.size, t)
    return t, B @ truth, B @ mean, lower, upper


def _run_task(doc, n, rep, variant, variant_key):
    """Execute one ``(variant, n, rep)`` task; returns records and curves.

    A sampler abort is re-raised with the path of a configuration snapshot
    written next to the state dump.
    """
    try:
        return _run_task_inner(doc, n, rep, variant, variant_key)
    except SamplerError as e:
        where = Path(e.dump_path).parent if e.dump_path else Path(tempfile.gettempdir())
        snap = where / f"pexp_config_n{n:g}_rep{rep}.json"
        snap.write_text(json.dumps({"config": doc, "n": n, "rep": rep, "variant": variant},
                                   indent=1, default=str) + "\n")
        raise SamplerError(f"{e} [n={n:g}, rep={rep}, variant={variant}; config snapshot {snap}]",
                           dump_path=e.dump_path) from e


def _run_task_inner(doc, n, rep, variant, variant_key):
    cfg = ExperimentConfig.from_dict(doc)
    L = cfg.L(n)
    truth = cfg.truth(L)
    data_rng, chain_rng = _streams(cfg.seed, n, rep, variant_key)
    obs = simulate(truth, n, data_rng)
    mode = cfg.mode()
    p = cfg.p
    out = []
    methods = ("EB", "HB") if cfg.method == "Both" else (cfg.method,)
    for method in methods:
        t1 = time.perf_counter()
        diag = {}
        lower = upper = None
        if method == "EB_conjugate":
            res = mmle(obs, mode, p, quad=QuadratureSpec(closed_form_p2=True), **cfg.grid_kw())
            gam = PriorSpec(p, res.lam["alpha"], res.lam["tau"], L).scales()
            mean = conjugate_posterior_mean(obs.x.coeffs, n, gam)
            lam = {k: res.lam[k] for k in mode.free}
            band_width = float("nan")
        elif method == "EB":
            res = mmle(obs, mode, p, **cfg.grid_kw())
            summ, chain = eb_posterior(obs, res.lam, p, cfg.gibbs_config(), rng=chain_rng)
            mean, lower, upper = summ.mean.coeffs, summ.lower, summ.upper
            lam = {k: res.lam[k] for k in mode.free}
            band_width = summ.band_width
            diag = {"acc_xi": summ.acc_xi}
        else:
            summ, chain = run_gibbs(obs, mode, cfg.hyper(n), p, cfg.gibbs_config(), rng=chain_rng)
            mean, lower, upper = summ.mean.coeffs, summ.lower, summ.upper
            m = summ.lam_moments
            lam = {"tau": m["tau_mean"], "alpha": m["alpha_mean"]}
            lam = {k: lam[k] for k in mode.free}
            band_width = summ.band_width
            diag = {"acc_xi": summ.acc_xi, "acc_lam": summ.acc_lam, **m,
                    "backend": chain.backend}
        err = float(np.linalg.norm(mean - truth.coeffs))
        rec = RunRecord(n, rep, method, mode.kind, lam, err, band_width,
                        time.perf_counter() - t1, dict(variant), L,
                        float(np.linalg.norm(truth.coeffs)), diag)
        curves = None
        if lower is not None:
            curves = _curves(mean, lower, upper, truth.coeffs, truth.basis)
        out.append((rec, curves))
    return out


def _run_tasks(tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_task, *t) for t in tasks]
            results = [f.result() for f in futs]
    else:
        results = [_run_task(*t) for t in tasks]
    return results


# ---------------------------------------------------------------------------
# figures


def _write_curves(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for figure, r, c, title, series, t, v in rows:
            for ti, vi in zip(t, v):
                w.writerow([figure, r, c, title, series, repr(float(ti)), repr(float(vi))])


def _curve_rows(figure, r, c, title, curves):
    t, truth, mean, lower, upper = curves
    return [(figure, r, c, title, "truth", t, truth), (figure, r, c, title, "mean", t, mean),
            (figure, r, c, title, "lower", t, lower), (figure, r, c, title, "upper", t, upper)]


def render_report(out_dir) -> list[Path]:
    """Render every figure described in ``<out_dir>/curves.csv`` as SVG.

    Truth in black, posterior mean in red, credible envelope in grey.
    """
    out_dir = Path(out_dir)
    src = out_dir / "curves.csv"
    if not src.exists():
        raise DomainError(f"{src} not found; run an experiment first")
    data = {}
    with open(src, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["figure"], int(row["row"]), int(row["col"]), row["title"])
            s = data.setdefault(key, {}).setdefault(row["series"], ([], []))
            s[0].append(float(row["t"]))
            s[1].append(float(row["value"]))
    figs = {}
    for (fig, r, c, title), series in data.items():
        shape = figs.setdefault(fig, {})
        shape[(r, c, title)] = series
    written = []
    for fig, panels in sorted(figs.items()):
        rows = 1 + max(r for r, _, _ in panels)
        cols = 1 + max(c for _, c, _ in panels)
        F = Figure(rows, cols)
        for (r, c, title), s in sorted(panels.items()):
            P = F.panel(r, c, title)
            if "lower" in s and "upper" in s:
                P.band(s["lower"][0], s["lower"][1], s["upper"][1])
            if "truth" in s:
                P.line(*s["truth"], color="black", width=1.5)
            if "mean" in s:
                P.line(*s["mean"], color="#d62728", width=1.5)
        written.append(F.save(out_dir / f"{fig}.svg"))
    return written


def _finish(study: StudyResult, out_dir, curve_rows, extra=None):
    if out_dir is None:
        return study
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    study.out_dir = out_dir
    study.to_csv(out_dir / "results.csv")
    if curve_rows:
        _write_curves(out_dir / "curves.csv", curve_rows)
        render_report(out_dir)
    doc = study.to_json()
    if extra:
        doc.update(extra)
    (out_dir / "study.json").write_text(json.dumps(doc, indent=1, default=str) + "\n")
    return study


# ---------------------------------------------------------------------------
# studies


def run_experiment_1(overrides: dict | None = None, alphas=None, out_dir=None,
                     workers: int | None = None) -> StudyResult:
    """Laplace priors of five regularities around the truth's, tau learned.

    ``alphas`` defaults to ``1.75 + (-1, -0.5, 0, 0.5, 1)``. ``overrides``
    is merged into the default configuration (e.g. ``{"seed": 7}``).
    """
    base = merge(EXPERIMENT_1, overrides)
    if alphas is None:
        alphas = [EXPERIMENT_1_BETA + d for d in EXPERIMENT_1_OFFSETS]
    cfg = ExperimentConfig(base)
    tasks = []
    for a in alphas:
        doc = merge(base, {"prior": {"alpha": float(a)}})
        for n in cfg.n_list:
            for rep in range(cfg.replications):
                tasks.append((doc, n, rep, {"alpha": float(a)}, (int(round(a * 1000)),)))
    results = _run_tasks(tasks, workers or worker_count(len(tasks)))
    records, rows = [], []
    for (doc, n, rep, variant, _), out in zip(tasks, results):
        for rec, curves in out:
            records.append(rec)
            if curves is not None and rep == 0:
                a = variant["alpha"]
                fig = f"experiment1_alpha_{a:g}" + (f"_n{n:g}" if len(cfg.n_list) > 1 else "")
                rows += _curve_rows(fig, 0, 0, f"alpha = {a:g}, n = {n:g}", curves)
    study = StudyResult("experiment1", records, config=base)
    return _finish(study, out_dir, rows)


def run_experiment_2(overrides: dict | None = None, priors=EXPERIMENT_2_PRIORS, n_values=None,
                     out_dir=None, workers: int | None = None) -> StudyResult:
    """Laplace and Gaussian priors with tau = 1 and alpha learned, two noise levels.

    Figure layout: Laplace top row, Gaussian bottom row, n increasing left
    to right. A band-width table (``band_widths.csv``) compares the priors.
    """
    base = merge(EXPERIMENT_2, overrides)
    if n_values is not None:
        base["n"] = [float(v) for v in n_values]
    cfg = ExperimentConfig(base)
    tasks = []
    for p in priors:
        doc = merge(base, {"prior": {"p": float(p)}})
        for n in cfg.n_list:
            for rep in range(cfg.replications):
                tasks.append((doc, n, rep, {"p": float(p)}, (int(round(p * 1000)),)))
    results = _run_tasks(tasks, workers or worker_count(len(tasks)))
    records, rows = [], []
    ns = sorted(cfg.n_list)
    for (doc, n, rep, variant, _), out in zip(tasks, results):
        for rec, curves in out:
            records.append(rec)
            if curves is not None and rep == 0:
                p = variant["p"]
                r = list(priors).index(p)
                name = {1.0: "Laplace", 2.0: "Gaussian"}.get(p, f"p = {p:g}")
                rows += _curve_rows("experiment2", r, ns.index(n), f"{name}, n = {n:g}", curves)
    study = StudyResult("experiment2", records, config=base)
    widths = [{"p": r.variant["p"], "n": r.n, "rep": r.rep, "band_width": r.band_width,
               "alpha_mean": r.lam.get("alpha"), "alpha_sd": r.diagnostics.get("alpha_sd")}
              for r in records]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "band_widths.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(widths[0]))
            w.writeheader()
            w.writerows(widths)
    return _finish(study, out_dir, rows)


def truth_smoothness(doc: dict) -> float:
    """Sobolev smoothness of a power-law truth (``a - 1/2``) or the
    nominal Besov smoothness of a sparse dyadic truth."""
    t = doc.get("truth", {})
    if t.get("kind") == "sparse_dyadic":
        return float(t.get("beta", 1.0))
    return float(t.get("a", 1.5)) - 0.5


def target_exponent(doc: dict) -> float:
    """Exponent of the rate the study should reproduce."""
    beta = truth_smoothness(doc)
    p = float(doc["prior"]["p"])
    mode = doc.get("mode", "frozen")
    alpha = doc["prior"].get("alpha")
    if mode in ("tau", "frozen") and alpha is not None and beta > alpha + 1.0 / p:
        # oversmoothing truth: the tau-adaptive rate saturates
        return -(1.0 + alpha * p) / (2.0 + p * (1.0 + 2.0 * alpha))
    return -beta / (1.0 + 2.0 * beta)


def contraction_study(cfg, out_dir=None, workers: int | None = None) -> StudyResult:
    """Median L2 error across replications against n, with its log-log slope.

    ``cfg`` is a configuration document or :class:`ExperimentConfig` with
    at least three n values and three replications.
    """
    doc = cfg.to_dict() if isinstance(cfg, ExperimentConfig) else dict(cfg)
    c = ExperimentConfig(doc)
    ns = c.n_list
    if len(set(ns)) < 3:
        raise DomainError("a contraction study needs at least 3 distinct n values")
    if c.replications < 3:
        raise DomainError("a contraction study needs at least 3 replications per n")
    tasks = [(doc, n, rep, {}, ()) for n in ns for rep in range(c.replications)]
    results = _run_tasks(tasks, workers or worker_count(len(tasks)))
    records = [rec for out in results for rec, _ in out]
    study = StudyResult(c.name, records, config=doc)
    by_n = {}
    for r in records:
        by_n.setdefault(r.n, []).append(r.l2_error)
    keys = sorted(by_n)
    study.slope, study.intercept = fit_slope(keys, [by_n[k] for k in keys])
    study.target_exponent = target_exponent(doc)
    # the theoretical rate for reference (constants suppressed)
    try:
        beta = truth_smoothness(doc)
        kind = doc.get("mode", "frozen")
        kw = {"alpha": doc["prior"].get("alpha")} if kind in ("tau", "frozen") else {}
        study.config = dict(doc, rate_targets={f"{n:g}": adaptive_rate_target(
            "tau" if kind == "frozen" else kind, beta, 2.0, float(doc["prior"]["p"]), n, **kw)
            for n in keys})
    except DomainError:
        pass
    return _finish(study, out_dir, [])


def run_config(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> StudyResult:
    """Run a custom configuration: every ``n`` times every replication."""
    doc = cfg.to_dict()
    tasks = [(doc, n, rep, {}, ()) for n in cfg.n_list for rep in range(cfg.replications)]
    results = _run_tasks(tasks, workers or worker_count(len(tasks)))
    records, rows = [], []
    for (doc_, n, rep, _, _), out in zip(tasks, results):
        for rec, curves in out:
            records.append(rec)
            if curves is not None and rep == 0:
                rows += _curve_rows(f"{cfg.name}_n{n:g}_{rec.method}", 0, 0,
                                    f"{rec.method}, n = {n:g}", curves)
    study = StudyResult(cfg.name, records, config=doc)
    if len(set(cfg.n_list)) >= 3 and cfg.replications >= 1:
        by_n = study.errors_by(lambda r: r.n)
        keys = sorted(by_n)
        study.slope, study.intercept = fit_slope(keys, [by_n[k] for k in keys])
        study.target_exponent = target_exponent(doc)
    return _finish(study, out_dir or cfg.output_dir, rows)
