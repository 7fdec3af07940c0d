"""Compare the compiled and numpy kernel backends.

Times whitening, the per-coordinate marginal likelihood and a full Gibbs
run with each backend and prints one row per (kernel, backend). Results from
both backends are also checked against each other.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--L 200] [--iters 4000]
"""
import argparse
import timeit

import numpy as np

from pexpbayes import backend
from pexpbayes.ebayes import QuadratureSpec, _gauss_legendre
from pexpbayes.gibbs import GibbsConfig, run_gibbs
from pexpbayes.model import simulate
from pexpbayes.pexp import log_normalizer
from pexpbayes.prior import HyperParamMode, PriorSpec, TruncInvGamma
from pexpbayes.sequences import TruthSpec, make_truth


def available():
    names = ["python"]
    try:
        backend.get_kernels("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def cases(args):
    rng = np.random.default_rng(0)
    truth = make_truth(TruthSpec("power_sine", args.L, a=1.5, omega=1.0))
    obs = simulate(truth, 1e4, rng)
    gamma = PriorSpec(1.0, 1.0, 1.0, args.L).scales()
    xi = rng.standard_normal(100_000)
    q = QuadratureSpec()
    n1, w1 = _gauss_legendre(q.nodes)
    n2, w2 = _gauss_legendre(2 * q.nodes)
    mode = HyperParamMode("tau", alpha=1.0)
    cfg = GibbsConfig(iters=args.iters)

    def whiten(k):
        return k.whiten(xi, 1.0)

    def marginal(k):
        return k.log_marginal_terms(obs.x.coeffs, obs.n, gamma, 1.0, log_normalizer(1.0),
                                    n1, w1, n2, w2, q.tol, q.drop, q.panels, q.grade)

    def gibbs(k):
        return run_gibbs(obs, mode, TruncInvGamma(1.0, 1.0, 1e-3), 1.0, cfg, seed=1, kernels=k)[0].mean.coeffs

    return {"whiten (1e5)": whiten, f"log_marginal_terms (L={args.L})": marginal,
            f"gibbs ({args.iters} sweeps, L={args.L})": gibbs}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--L", type=int, default=200)
    ap.add_argument("--iters", type=int, default=4000)
    args = ap.parse_args(argv)

    names = available()
    print(f"{'kernel':40s} {'backend':8s} {'best [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for label, fn in cases(args).items():
        times, outputs = {}, {}
        for name in names:
            k = backend.get_kernels(name)
            outputs[name] = np.asarray(fn(k))
            reps = 1 if label.startswith("gibbs") else args.repeat
            times[name] = min(timeit.repeat(lambda: fn(k), number=1, repeat=reps))
        ref = times["python"]
        for name in names:
            diff = np.max(np.abs(outputs[name] - outputs["python"]))
            print(f"{label:40s} {name:8s} {times[name]:10.4f} {ref / times[name]:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
