"""Hierarchical posterior sampling by pCN within Gibbs on whitened coordinates.

The parameter is written as ``theta = gamma(lambda) * u(xi)`` with
``u = F_p^{-1}(Phi(xi))`` applied coordinate-wise, so under the prior ``xi``
is standard normal whatever p and lambda are. A sweep alternates

* a preconditioned Crank-Nicolson move on ``xi`` with lambda fixed,
  ``xi' = sqrt(1 - b_l^2) xi + b_l zeta`` with ``b_l = beta / sqrt(1 + n gamma_l^2)``,
  accepted on the log-likelihood difference alone;
* a Gaussian random walk on ``(log tau, alpha)`` with xi fixed, accepted on
  the log-likelihood difference plus the hyper-prior ratio (and the Jacobian
  of the log scale when tau moves).

During burn-in the two step sizes are tuned by Robbins-Monro on their logs
toward acceptance rates 0.30 and 0.35; afterwards the kernel is fixed.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .errors import DomainError, SamplerError
from .model import Observation
from .pexp import PExp
from .prior import HyperParamMode
from .sequences import Basis, CoefficientVector, basis_matrix

__all__ = [
    "GibbsConfig",
    "ChainState",
    "ChainLog",
    "PosteriorSummary",
    "initial_state",
    "pcn_update",
    "lambda_update",
    "centered_lambda_update",
    "run_gibbs",
    "summarize",
    "default_eval_points",
]


@dataclass(frozen=True)
class GibbsConfig:
    """Sampler settings.

    ``burnin`` defaults to 20% of ``iters``. ``block`` is the number of
    sweeps handed to the kernel at once (random numbers are drawn per
    block); ``checkpoint_every`` is rounded up to a multiple of it.
    ``kernel`` is ``"whitened"`` or ``"noncentered"`` (the latter writes
    ``theta = tau v`` and random-walks ``v`` under its prior; tau-only).
    ``centered`` adds, after the whitened hyper-parameter move, a second
    move that changes the hyper-parameters with theta held fixed. The two
    parametrizations fail in opposite regimes (weak and strong data), so
    alternating them keeps the hyper-parameters mixing at every ``n``.
    """

    iters: int = 25000
    burnin: int | None = None
    thin: int = 1
    beta: float = 0.1
    step: float = 0.2
    adapt: bool = True
    precondition: bool = True
    target_xi: float = 0.30
    target_lam: float = 0.35
    block: int = 250
    checkpoint_every: int = 5000
    checkpoint_draws: bool = True
    kernel: str = "whitened"
    centered: bool = True

    def __post_init__(self):
        if self.burnin is None:
            object.__setattr__(self, "burnin", int(0.2 * self.iters))
        if not self.iters > self.burnin >= 0:
            raise DomainError(f"need iters > burnin >= 0, got {self.iters} and {self.burnin}")
        if self.thin < 1 or self.block < 1:
            raise DomainError("thin and block must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"pCN step must lie in [0, 1], got {self.beta}")
        if self.kernel not in ("whitened", "noncentered"):
            raise DomainError(f"unknown kernel {self.kernel!r}")

    @property
    def n_kept(self) -> int:
        return len(range(self.burnin, self.iters, self.thin))


@dataclass
class ChainState:
    xi: np.ndarray
    log_tau: float
    alpha: float
    loglik: float
    log_beta: float
    log_step: float
    log_step_c: float = math.log(0.2)
    iteration: int = 0

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    @property
    def beta_pcn(self) -> float:
        return math.exp(self.log_beta)

    def gamma(self) -> np.ndarray:
        ell = np.arange(1, self.xi.size + 1, dtype=float)
        return np.exp(self.log_tau - (0.5 + self.alpha) * np.log(ell))

    def theta(self, p: float) -> np.ndarray:
        return self.gamma() * backend.whiten(self.xi, p)

    def refresh(self, obs: Observation, p: float) -> "ChainState":
        t = self.theta(p)
        self.loglik = obs.n * float(np.dot(obs.x.coeffs - 0.5 * t, t))
        return self

    def to_json(self) -> dict:
        return {"xi": self.xi.tolist(), "log_tau": self.log_tau, "alpha": self.alpha,
                "loglik": self.loglik, "log_beta": self.log_beta, "log_step": self.log_step,
                "log_step_c": self.log_step_c, "iteration": self.iteration}

    @classmethod
    def from_json(cls, d) -> "ChainState":
        return cls(np.asarray(d["xi"], dtype=float), d["log_tau"], d["alpha"], d["loglik"],
                   d["log_beta"], d["log_step"], d.get("log_step_c", d["log_step"]), d["iteration"])


def _check_pairing(mode: HyperParamMode, hyper):
    if mode.kind == "frozen":
        return
    if hyper is None or getattr(hyper, "target", None) != mode.kind:
        raise DomainError(f"mode {mode.kind!r} needs a hyper-prior on {mode.kind!r}, "
                          f"got {type(hyper).__name__}")


def initial_state(obs: Observation, mode: HyperParamMode, hyper, p: float, cfg: GibbsConfig,
                  init_xi=None) -> ChainState:
    """xi = 0 (or ``init_xi``) and the free hyper-parameters at the hyper-prior median."""
    _check_pairing(mode, hyper)
    med = hyper.median() if hyper is not None and mode.kind != "frozen" else {}
    tau = med.get("tau", mode.tau)
    alpha = med.get("alpha", mode.alpha)
    xi = np.zeros(obs.L) if init_xi is None else np.array(init_xi, dtype=float)
    log_beta = math.log(cfg.beta) if cfg.beta > 0 else -math.inf
    st = ChainState(xi, math.log(tau), float(alpha), 0.0, log_beta, math.log(cfg.step),
                    math.log(cfg.step))
    return st.refresh(obs, p)


def _draw_block(rng, B, L):
    # fixed order of consumption; both backends see identical numbers
    zeta = rng.standard_normal((B, L))
    lu_xi = np.log(rng.random(B))
    z_lam = rng.standard_normal((B, 4))
    lu_lam = np.log(rng.random((B, 2)))
    return zeta, lu_xi, z_lam, lu_lam


def _hyper_args(hyper, mode):
    if mode.kind == "frozen" or hyper is None:
        return backend.HYPER_NONE, np.zeros(8)
    return hyper.kernel_args()


def _logell(L):
    return np.log(np.arange(1, L + 1, dtype=float))


def _st(state):
    return np.array([state.log_tau, state.alpha, state.loglik, state.log_beta, state.log_step,
                     state.log_step_c])


def _single(state, obs, rng, p, mode_code, hyper_code, hyper_par, do_xi, cfg, kernels,
            centered=False):
    kern = kernels or backend.kernels
    B, L = 1, state.xi.size
    zeta, lu_xi, z_lam, lu_lam = _draw_block(rng, B, L)
    out_theta = np.empty((B, L))
    out_trace = np.empty((B, 6))
    status, xi, new = kern.gibbs_block(
        state.xi, obs.x.coeffs, _logell(L), obs.n, float(p), _st(state), mode_code, hyper_code,
        hyper_par, zeta, lu_xi, z_lam, lu_lam, state.iteration, 0, False,
        cfg.precondition if cfg else True, do_xi, centered, 0.3, 0.35, out_theta, out_trace)
    if status >= 0:
        raise SamplerError("non-finite log-likelihood in a single update")
    return ChainState(np.array(xi), *new, iteration=state.iteration + 1)


def pcn_update(state: ChainState, obs: Observation, rng, p: float,
               cfg: GibbsConfig | None = None, kernels=None) -> ChainState:
    """One pCN move on the whitened coordinates with lambda held fixed."""
    return _single(state, obs, rng, p, 0, backend.HYPER_NONE, np.zeros(8), True, cfg, kernels)


def lambda_update(state: ChainState, obs: Observation, hyper, rng, mode: HyperParamMode,
                  p: float, cfg: GibbsConfig | None = None, kernels=None) -> ChainState:
    """One random-walk move on the free hyper-parameters with xi held fixed."""
    _check_pairing(mode, hyper)
    code, par = _hyper_args(hyper, mode)
    return _single(state, obs, rng, p, mode.code, code, par, False, cfg, kernels)


def centered_lambda_update(state: ChainState, obs: Observation, hyper, rng, mode: HyperParamMode,
                           p: float, cfg: GibbsConfig | None = None, kernels=None) -> ChainState:
    """One whitened hyper-parameter move followed by one move with theta held fixed."""
    _check_pairing(mode, hyper)
    code, par = _hyper_args(hyper, mode)
    return _single(state, obs, rng, p, mode.code, code, par, False, cfg, kernels, centered=True)


# ---------------------------------------------------------------------------
# non-centered alternative


def _noncentered_block(state, obs, p, cfg, hyper_par, zeta, lu_xi, z_lam, lu_lam, it0,
                       out_theta, out_trace):
    # theta = tau * v, v_l = s_l w_l with s_l = l^(-1/2 - alpha) and w_l iid f_p.
    # v moves by a scaled Gaussian random walk accepted on likelihood plus prior.
    x, n = obs.x.coeffs, obs.n
    L = x.size
    s = np.exp(-(0.5 + state.alpha) * _logell(L))
    d = PExp(p)
    tau = math.exp(state.log_tau)
    v = s * backend.whiten(state.xi, p)
    theta = tau * v
    log_beta, log_step = state.log_beta, state.log_step
    log_tau, loglik = state.log_tau, state.loglik
    a, b, left = hyper_par[0], hyper_par[1], hyper_par[2]

    def lh(lt):
        if lt < math.log(left):
            return -math.inf
        return -(a + 1.0) * lt - b * math.exp(-lt)

    cur_lh = lh(log_tau)
    for k in range(lu_xi.size):
        it = it0 + k
        eta = (it + 1.0) ** -0.6
        adapting = cfg.adapt and it < cfg.burnin
        acc_xi = acc_lam = 0.0
        step_l = math.exp(log_beta) * s
        if cfg.precondition:
            step_l = step_l / np.sqrt(1.0 + n * tau * tau * s * s)
        v_p = v + step_l * zeta[k]
        th_p = tau * v_p
        r = (n * float(np.dot(x - 0.5 * (theta + th_p), th_p - theta))
             + float(np.sum(d.log_density(v_p / s) - d.log_density(v / s))))
        if lu_xi[k] < r:
            v, theta = v_p, th_p
            loglik = n * float(np.dot(x - 0.5 * theta, theta))
            acc_xi = 1.0
        if adapting:
            log_beta = min(0.0, log_beta + eta * ((math.exp(r) if r < 0 else 1.0) - cfg.target_xi))
        lt_p = log_tau + math.exp(log_step) * z_lam[k, 0]
        lh_p = lh(lt_p)
        if math.isfinite(lh_p):
            th_p = math.exp(lt_p) * v
            r = n * float(np.dot(x - 0.5 * (theta + th_p), th_p - theta)) + lh_p - cur_lh + lt_p - log_tau
        else:
            r = -math.inf
        if lu_lam[k, 0] < r:
            log_tau, tau, cur_lh, theta = lt_p, math.exp(lt_p), lh_p, th_p
            loglik = n * float(np.dot(x - 0.5 * theta, theta))
            acc_lam = 1.0
        if adapting:
            log_step += eta * ((math.exp(r) if r < 0 else 1.0) - cfg.target_lam)
        out_theta[k] = theta
        out_trace[k] = (log_tau, state.alpha, loglik, acc_xi, acc_lam, 0.0)
        if not math.isfinite(loglik):
            return k, backend.unwhiten(v / s, p), (log_tau, state.alpha, loglik, log_beta, log_step,
                                                   state.log_step_c)
    xi = backend.unwhiten(v / s, p)
    return -1, xi, (log_tau, state.alpha, loglik, log_beta, log_step, state.log_step_c)


# ---------------------------------------------------------------------------
# chain log


@dataclass
class ChainLog:
    """Retained iterations of one chain.

    Arrays are aligned: ``iters[i]`` is the sweep index of ``draws[i]``.
    """

    iters: np.ndarray
    log_tau: np.ndarray
    alpha: np.ndarray
    loglik: np.ndarray
    acc_xi: np.ndarray
    acc_lam: np.ndarray
    acc_c: np.ndarray
    draws: np.ndarray
    path: Path | None = None
    final_state: dict = field(default_factory=dict)
    post_burnin_state: dict = field(default_factory=dict)
    backend: str = ""

    @property
    def n_kept(self) -> int:
        return int(self.iters.size)

    @property
    def tau(self) -> np.ndarray:
        return np.exp(self.log_tau)


def _rng_state(rng) -> dict:
    return {"bit_generator": type(rng.bit_generator).__name__, "state": rng.bit_generator.state}


def _rng_from_state(d) -> np.random.Generator:
    bg = getattr(np.random, d["bit_generator"])()
    bg.state = d["state"]
    return np.random.Generator(bg)


def _read_checkpoint(path: Path):
    lines = path.read_text().splitlines(keepends=True)
    last = None
    for i, line in enumerate(lines):
        if line.startswith('{"type": "checkpoint"'):
            last = i
    if last is None:
        raise DomainError(f"{path}: no checkpoint to resume from")
    ck = json.loads(lines[last])
    return lines[: last + 1], ck


def _write_dump(dump_dir, state: ChainState, status_iter, obs, cfg) -> str:
    dump_dir = Path(dump_dir) if dump_dir else Path(tempfile.gettempdir())
    dump_dir.mkdir(parents=True, exist_ok=True)
    fd, name = tempfile.mkstemp(prefix="pexp_sampler_dump_", suffix=".json", dir=dump_dir)
    with os.fdopen(fd, "w") as fh:
        json.dump({"iteration": status_iter, "n": obs.n, "config": asdict(cfg),
                   **state.to_json()}, fh, default=float)
    return name


# ---------------------------------------------------------------------------
# driver


def run_gibbs(obs: Observation, mode: HyperParamMode, hyper, p: float, cfg: GibbsConfig,
              rng: np.random.Generator | None = None, seed=None, init_xi=None,
              log_path=None, resume: bool = False, stop_after: int | None = None,
              dump_dir=None, kernels=None, eval_points=None, level: float = 0.95):
    """Run one chain and summarize the retained draws.

    Parameters
    ----------
    rng, seed
        Either a generator or a seed for ``numpy.random.default_rng``.
    log_path
        JSON-lines chain log: a header, one ``draw`` record per retained
        sweep and a ``checkpoint`` record (full state and generator state)
        every ``cfg.checkpoint_every`` sweeps. With ``checkpoint_draws`` the
        retained draws up to the checkpoint go to ``<log_path>.draws.npy``.
    resume
        Continue from the last checkpoint in ``log_path``; records written
        after it are discarded. The continuation is identical to an
        uninterrupted run.
    stop_after
        Stop once this many sweeps are done (used to test resumption).

    Returns
    -------
    (PosteriorSummary, ChainLog)
    """
    _check_pairing(mode, hyper)
    kern = kernels or backend.kernels
    if cfg.kernel == "noncentered" and mode.kind != "tau":
        raise DomainError("the non-centered kernel is available for the tau-only mode")
    L = obs.L
    keep_idx = np.arange(cfg.burnin, cfg.iters, cfg.thin)
    n_keep = keep_idx.size
    draws = np.empty((n_keep, L))
    trace_keep = np.zeros((n_keep, 6))
    code, par = _hyper_args(hyper, mode)
    logell = _logell(L)
    B = cfg.block
    ck_every = max(B, -(-cfg.checkpoint_every // B) * B)
    post_burnin_state = {}

    log_path = Path(log_path) if log_path else None
    draws_path = Path(str(log_path) + ".draws.npy") if log_path else None
    fh = None
    if resume:
        if log_path is None:
            raise DomainError("resume needs a log path")
        kept_lines, ck = _read_checkpoint(log_path)
        state = ChainState.from_json(ck["state"])
        rng = _rng_from_state(ck["rng"])
        n_done = ck["n_kept"]
        if n_done:
            draws[:n_done] = np.load(draws_path)[:n_done]
        post_burnin_state = ck.get("post_burnin_state", {})
        fh = open(log_path, "w")
        fh.writelines(kept_lines)
    else:
        if rng is None:
            rng = np.random.default_rng(seed)
        state = initial_state(obs, mode, hyper, p, cfg, init_xi)
        n_done = 0
        if log_path:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            fh = open(log_path, "w")
            fh.write(json.dumps({"type": "header", "n": obs.n, "L": L, "p": p, "mode": mode.kind,
                                 "config": asdict(cfg), "seed": seed}) + "\n")

    # the trace of retained iterations is rebuilt from the log on resume
    if resume:
        for line in kept_lines:
            if line.startswith('{"type": "draw"'):
                r = json.loads(line)
                j = (r["iter"] - cfg.burnin) // cfg.thin
                trace_keep[j, :3] = (r["log_tau"], r["alpha"], r["loglik"])
                trace_keep[j, 3:] = (r["acc_xi"], r["acc_lam"], r.get("acc_c", 0.0))

    t0 = time.perf_counter()
    try:
        it = state.iteration
        while it < cfg.iters:
            Bk = min(B, cfg.iters - it)
            zeta, lu_xi, z_lam, lu_lam = _draw_block(rng, Bk, L)
            out_theta = np.empty((Bk, L))
            out_trace = np.empty((Bk, 6))
            if cfg.kernel == "whitened":
                status, xi, new = kern.gibbs_block(
                    state.xi, obs.x.coeffs, logell, obs.n, float(p), _st(state), mode.code, code,
                    par, zeta, lu_xi, z_lam, lu_lam, it, cfg.burnin, cfg.adapt, cfg.precondition,
                    True, cfg.centered, cfg.target_xi, cfg.target_lam, out_theta, out_trace)
            else:
                status, xi, new = _noncentered_block(state, obs, p, cfg, par, zeta, lu_xi, z_lam,
                                                     lu_lam, it, out_theta, out_trace)
            state = ChainState(np.array(xi), *new, iteration=it + Bk)
            if status >= 0:
                dump = _write_dump(dump_dir or (log_path.parent if log_path else None),
                                   state, it + status, obs, cfg)
                raise SamplerError(f"non-finite log-likelihood at sweep {it + status}; "
                                   f"state dumped to {dump}", dump_path=dump)
            sweeps = np.arange(it, it + Bk)
            sel = (sweeps >= cfg.burnin) & ((sweeps - cfg.burnin) % cfg.thin == 0)
            if sel.any():
                j = (sweeps[sel] - cfg.burnin) // cfg.thin
                draws[j] = out_theta[sel]
                trace_keep[j] = out_trace[sel]
                if fh:
                    for s_it, row in zip(sweeps[sel], out_trace[sel]):
                        fh.write(json.dumps({"type": "draw", "iter": int(s_it), "log_tau": row[0],
                                             "alpha": row[1], "loglik": row[2],
                                             "acc_xi": row[3], "acc_lam": row[4],
                                             "acc_c": row[5]}) + "\n")
                n_done = int(j[-1]) + 1
            it += Bk
            if not post_burnin_state and it >= cfg.burnin:
                post_burnin_state = {"log_beta": state.log_beta, "log_step": state.log_step,
                                     "log_step_c": state.log_step_c}
            if fh and (it % ck_every == 0 or it == cfg.iters):
                if cfg.checkpoint_draws:
                    np.save(draws_path, draws[:n_done])
                fh.write(json.dumps({"type": "checkpoint", "iteration": it, "n_kept": n_done,
                                     "state": state.to_json(), "rng": _rng_state(rng),
                                     "post_burnin_state": post_burnin_state}) + "\n")
                fh.flush()
            if stop_after is not None and it >= stop_after and it < cfg.iters:
                return None, None
    finally:
        if fh:
            fh.close()
    elapsed = time.perf_counter() - t0

    chain = ChainLog(keep_idx, trace_keep[:, 0].copy(), trace_keep[:, 1].copy(),
                     trace_keep[:, 2].copy(), trace_keep[:, 3].copy(), trace_keep[:, 4].copy(),
                     trace_keep[:, 5].copy(), draws, log_path,
                     {"log_beta": state.log_beta, "log_step": state.log_step,
                      "log_step_c": state.log_step_c,
                      "log_tau": state.log_tau, "alpha": state.alpha, "seconds": elapsed},
                     post_burnin_state, getattr(kern, "__name__", ""))
    summary = summarize(draws, level=level, basis=obs.x.basis, points=eval_points, chain=chain,
                        lam_free=mode.free)
    return summary, chain


# ---------------------------------------------------------------------------
# summaries


def default_eval_points(m: int = 200) -> np.ndarray:
    return np.arange(1, m + 1, dtype=float) / m


@dataclass
class PosteriorSummary:
    """Posterior mean, credible band and chain diagnostics.

    The band is formed by the ``n_band = ceil(level N)`` retained draws
    closest to the mean in L2 (ties by draw index), reported as the
    pointwise envelope ``lower``/``upper`` of their function values on
    ``points`` (coefficient-wise when the basis has no pointwise meaning).
    ``band_width`` is the average envelope width.
    """

    mean: CoefficientVector
    lower: np.ndarray
    upper: np.ndarray
    points: np.ndarray | None
    band_index: np.ndarray
    band_width: float
    n_kept: int
    n_band: int
    acc_xi: float = float("nan")
    acc_lam: float = float("nan")
    acc_c: float = float("nan")
    lam_moments: dict = field(default_factory=dict)

    @property
    def mean_curve(self):
        if self.points is None:
            return None
        return basis_matrix(self.mean.basis, self.mean.trunc_level, self.points) @ self.mean.coeffs


def summarize(draws, level: float = 0.95, basis=Basis.ABSTRACT, points=None, chain=None,
              lam_free=()) -> PosteriorSummary:
    """Posterior mean and the L2-nearest ``level`` fraction of draws as a band."""
    draws = np.asarray([d.coeffs if isinstance(d, CoefficientVector) else d for d in draws]
                       if isinstance(draws, list) else draws, dtype=float)
    N = draws.shape[0]
    if N < 100:
        raise DomainError(f"summaries need at least 100 retained draws, got {N}")
    if not 0 < level <= 1:
        raise DomainError(f"level must lie in (0, 1], got {level}")
    mean = draws.mean(axis=0)
    dist = np.sqrt(np.sum((draws - mean) ** 2, axis=1))
    k = math.ceil(level * N - 1e-9)
    band_index = np.sort(np.argsort(dist, kind="stable")[:k])
    basis = Basis(basis)
    if basis is Basis.ABSTRACT:
        pts = None
        lower = np.full(draws.shape[1], np.inf)
        upper = np.full(draws.shape[1], -np.inf)
        for s in range(0, k, 4096):
            blk = draws[band_index[s:s + 4096]]
            np.minimum(lower, blk.min(axis=0), out=lower)
            np.maximum(upper, blk.max(axis=0), out=upper)
    else:
        pts = default_eval_points() if points is None else np.asarray(points, dtype=float)
        Bm = basis_matrix(basis, draws.shape[1], pts)
        lower = np.full(pts.size, np.inf)
        upper = np.full(pts.size, -np.inf)
        for s in range(0, k, 2048):
            f = draws[band_index[s:s + 2048]] @ Bm.T
            np.minimum(lower, f.min(axis=0), out=lower)
            np.maximum(upper, f.max(axis=0), out=upper)
    summ = PosteriorSummary(CoefficientVector(mean, basis), lower, upper, pts, band_index,
                            float(np.mean(upper - lower)), N, k)
    if chain is not None:
        summ.acc_xi = float(np.mean(chain.acc_xi))
        summ.acc_lam = float(np.mean(chain.acc_lam)) if lam_free else float("nan")
        summ.acc_c = float(np.mean(chain.acc_c)) if lam_free else float("nan")
        tau = np.exp(chain.log_tau)
        summ.lam_moments = {"tau_mean": float(tau.mean()), "tau_sd": float(tau.std()),
                            "alpha_mean": float(chain.alpha.mean()),
                            "alpha_sd": float(chain.alpha.std())}
    return summ
