"""Numpy reference implementation of the hot kernels.

The compiled module ``pexpbayes._kernels`` exposes the same four functions
with the same signatures and is preferred when it imports; see
``pexpbayes.backend``. Both consume random numbers that the caller draws in
advance, so a run is reproducible across backends up to floating-point
rounding.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special as sc

from .errors import NumericError

SQRT2 = math.sqrt(2.0)
LOG2 = math.log(2.0)

# hyper-prior codes understood by gibbs_block
HYPER_NONE, HYPER_INVGAMMA, HYPER_TRUNCEXP, HYPER_PRODUCT = 0, 1, 2, 3
# hyper_par layout: a, b, left, rate, lo, hi, c0, c1


def whiten(xi, p):
    """Map standard normal coordinates to unit-scale p-exponential ones.

    ``u = F_p^{-1}(Phi(xi))``, written through the two-sided tail probability
    ``q = 2 Phi(-|xi|)`` so that neither tail saturates.
    """
    xi = np.asarray(xi, dtype=float)
    if p == 2.0:
        return xi.copy()
    ax = np.abs(xi)
    if p == 1.0:
        t = -LOG2 - sc.log_ndtr(-ax)
    else:
        a = 1.0 / p
        q = 2.0 * sc.ndtr(-ax)
        with np.errstate(all="ignore"):
            y = np.where(q <= 0.5, sc.gammainccinv(a, q), sc.gammaincinv(a, sc.erf(ax / SQRT2)))
        t = (p * y) ** a
    return np.copysign(t, xi)


def unwhiten(u, p):
    """Inverse of :func:`whiten`."""
    u = np.asarray(u, dtype=float)
    if p == 2.0:
        return u.copy()
    t = np.abs(u)
    if p == 1.0:
        with np.errstate(all="ignore"):
            small = np.sqrt(2.0) * sc.erfinv(-np.expm1(-t))
            large = -sc.ndtri(0.5 * np.exp(-t))
        x = np.where(t < 1.0, small, large)
    else:
        a = 1.0 / p
        y = t**p / p
        q = sc.gammaincc(a, y)
        with np.errstate(all="ignore"):
            x = np.where(q < 0.5, -sc.ndtri(0.5 * q), SQRT2 * sc.erfinv(sc.gammainc(a, y)))
    return np.copysign(x, u)


# ---------------------------------------------------------------------------
# per-coordinate marginal likelihood


def _g(s, a, b, p):
    return a * s - 0.5 * b * s * s - np.abs(s) ** p / p


def _mode(a, b, p):
    # maximizer of g for a >= 0
    if p == 1.0:
        return max(0.0, (a - 1.0) / b)
    if p == 2.0:
        return a / (b + 1.0)
    if a == 0.0:
        return 0.0
    lo = 0.0
    hi = min(a / b, a ** (1.0 / (p - 1.0)))
    s = 0.5 * hi
    for _ in range(200):
        h = a - b * s - s ** (p - 1.0)
        if h > 0:
            lo = s
        else:
            hi = s
        dh = -b - (p - 1.0) * s ** (p - 2.0)
        s_new = s - h / dh
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= 1e-15 * s_new or hi - lo <= 1e-15 * hi:
            return s_new
        s = s_new
    return s


def _edge(s0, gmax, a, b, p, direction, drop, scale):
    # distance from the mode to the level g = gmax - drop, to within a factor 2
    target = gmax - drop
    d = scale
    for _ in range(1100):
        if _g(s0 + direction * d, a, b, p) < target:
            break
        d *= 2.0
    else:
        raise NumericError("quadrature window search did not terminate")
    lo = 0.5 * d
    for _ in range(6):
        mid = 0.5 * (lo + d)
        if _g(s0 + direction * mid, a, b, p) < target:
            d = mid
        else:
            lo = mid
    return d


def _panels(lo, hi, p, npan, grade):
    # breakpoints covering [lo, hi]; split at 0 and graded toward 0 when the
    # integrand has a non-smooth power there
    segs = []
    sides = [(lo, 0.0), (0.0, hi)] if lo < 0.0 < hi else [(lo, hi)]
    for a0, b0 in sides:
        w = b0 - a0
        touches = grade and (a0 == 0.0 or b0 == 0.0)
        if touches:
            cuts = [0.0] + [w * 2.0 ** (-j) for j in range(grade, -1, -1)]
            pts = [a0 + c for c in cuts] if a0 == 0.0 else [b0 - c for c in reversed(cuts)]
            segs.extend(zip(pts[:-1], pts[1:]))
        else:
            edges = np.linspace(a0, b0, npan + 1)
            segs.extend(zip(edges[:-1], edges[1:]))
    return segs


def _gl_sum(segs, nodes, weights, a, b, p, gmax):
    total = 0.0
    for s0, s1 in segs:
        half = 0.5 * (s1 - s0)
        mid = 0.5 * (s1 + s0)
        s = mid + half * nodes
        total += half * float(np.dot(weights, np.exp(_g(s, a, b, p) - gmax)))
    return total


def coord_log_marginal(x, n, gamma, p, log_c_p, nodes, weights, nodes2, weights2,
                       tol=1e-9, drop=45.0, npan=4, grade=20, index=None):
    """log of the integral of exp(n x t - n t^2/2) f_p(t/gamma)/gamma dt."""
    a = abs(n * x * gamma)
    b = n * gamma * gamma
    s0 = _mode(a, b, p)
    gmax = float(_g(s0, a, b, p))
    scale = 1.0 / math.sqrt(b + 1.0)
    lo = s0 - _edge(s0, gmax, a, b, p, -1.0, drop, scale)
    hi = s0 + _edge(s0, gmax, a, b, p, 1.0, drop, scale)
    segs = _panels(lo, hi, p, npan, 0 if p in (1.0, 2.0) else grade)
    i1 = _gl_sum(segs, nodes, weights, a, b, p, gmax)
    i2 = _gl_sum(segs, nodes2, weights2, a, b, p, gmax)
    if not (i1 > 0 and i2 > 0) or abs(math.log(i1) - math.log(i2)) > tol:
        raise NumericError(
            f"quadrature did not converge for coordinate {index} "
            f"(x={x}, n={n}, gamma={gamma}, p={p})",
            index=index,
        )
    return gmax - log_c_p + math.log(i2)


def log_marginal_terms(x, n, gamma, p, log_c_p, nodes, weights, nodes2, weights2,
                       tol=1e-9, drop=45.0, npan=4, grade=20):
    x = np.asarray(x, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = coord_log_marginal(x[i], n, gamma[i], p, log_c_p, nodes, weights,
                                    nodes2, weights2, tol, drop, npan, grade, index=i)
    return out


# ---------------------------------------------------------------------------
# Gibbs sweep


def hyper_logpdf(code, par, n, log_tau, alpha):
    """Unnormalized log hyper-density in (tau, alpha); -inf off the support.

    Terms that do not depend on the hyper-parameters are dropped, except the
    truncation normalizer of tau given alpha in the product form.
    """
    if code == HYPER_NONE:
        return 0.0
    a, b, left, rate, lo, hi, c0, c1 = par
    out = 0.0
    if code in (HYPER_TRUNCEXP, HYPER_PRODUCT):
        if not (lo <= alpha <= hi):
            return -math.inf
        out -= rate * alpha
    if code in (HYPER_INVGAMMA, HYPER_PRODUCT):
        if code == HYPER_PRODUCT:
            left = n ** (-1.0 / (c0 + c1 * alpha))
            out -= math.log(sc.gammainc(a, b / left))
        if log_tau < math.log(left):
            return -math.inf
        out += -(a + 1.0) * log_tau - b * math.exp(-log_tau)
    return out


def gibbs_block(xi, x, logell, n, p, st, mode, hyper_code, hyper_par,
                zeta, lu_xi, z_lam, lu_lam, it0, burnin, adapt, precondition,
                do_xi, centered, target_xi, target_lam, out_theta, out_trace):
    """Run ``len(lu_xi)`` Gibbs sweeps.

    ``st`` holds ``[log_tau, alpha, loglik, log_beta, log_step, log_step_c]``.
    ``z_lam`` has four columns and ``lu_lam`` two: the first of each feed the
    whitened hyper-parameter move, the second the centered one (run only when
    ``centered`` is true), which changes the hyper-parameters with theta held
    fixed and re-derives xi. Row ``k`` of ``out_theta`` receives theta after
    sweep ``k`` and row ``k`` of ``out_trace`` the values ``log_tau, alpha,
    loglik, xi_accepted, lambda_accepted, centered_accepted``.

    Returns ``(status, xi, st)`` with the final whitened coordinates and
    state; ``status`` is -1 on success or the block offset of the first
    non-finite log-likelihood.
    """
    log_tau, alpha, loglik, log_beta, log_step, log_step_c = (float(v) for v in st)
    tau_free = mode in (1, 3)
    alpha_free = mode in (2, 3)
    u = whiten(xi, p)
    g = np.exp(log_tau - (0.5 + alpha) * logell)
    theta = g * u
    lh = hyper_logpdf(hyper_code, hyper_par, n, log_tau, alpha)
    status = -1
    for k in range(lu_xi.size):
        it = it0 + k
        eta = (it + 1.0) ** -0.6
        adapting = adapt and it < burnin
        acc_xi = acc_lam = acc_c = 0.0
        if do_xi:
            beta = math.exp(log_beta)
            # per-coordinate steps are capped at 1, so beta itself may exceed 1
            bl = np.minimum(beta / np.sqrt(1.0 + n * g * g), 1.0) if precondition else np.full(g.size, beta)
            xi_p = np.sqrt(1.0 - bl * bl) * xi + bl * zeta[k]
            u_p = whiten(xi_p, p)
            th_p = g * u_p
            d = n * float(np.dot(x - 0.5 * (theta + th_p), th_p - theta))
            if lu_xi[k] < d:
                xi, u, theta = xi_p, u_p, th_p
                if d != 0.0:
                    # an unchanged theta keeps its cached value bit for bit
                    loglik = n * float(np.dot(x - 0.5 * theta, theta))
                acc_xi = 1.0
            if adapting:
                cap = 0.5 * math.log1p(n * g[0] * g[0]) if precondition else 0.0
                log_beta = min(cap, log_beta + eta * ((math.exp(d) if d < 0.0 else 1.0) - target_xi))
        if mode != 0:
            step = math.exp(log_step)
            lt_p = log_tau + step * z_lam[k, 0] if tau_free else log_tau
            a_p = alpha + step * z_lam[k, 1] if alpha_free else alpha
            lh_p = hyper_logpdf(hyper_code, hyper_par, n, lt_p, a_p)
            if math.isfinite(lh_p) and a_p > 0.0:
                g_p = np.exp(lt_p - (0.5 + a_p) * logell)
                th_p = g_p * u
                r = n * float(np.dot(x - 0.5 * (theta + th_p), th_p - theta)) + lh_p - lh
                if tau_free:
                    r += lt_p - log_tau
            else:
                r = -math.inf
            if lu_lam[k, 0] < r:
                log_tau, alpha, lh, g, theta = lt_p, a_p, lh_p, g_p, th_p
                loglik = n * float(np.dot(x - 0.5 * theta, theta))
                acc_lam = 1.0
            if adapting:
                log_step += eta * ((math.exp(r) if r < 0.0 else 1.0) - target_lam)
        if mode != 0 and centered:
            step = math.exp(log_step_c)
            lt_p = log_tau + step * z_lam[k, 2] if tau_free else log_tau
            a_p = alpha + step * z_lam[k, 3] if alpha_free else alpha
            lh_p = hyper_logpdf(hyper_code, hyper_par, n, lt_p, a_p)
            if math.isfinite(lh_p) and a_p > 0.0:
                # log(gamma / gamma'); the likelihood cancels because theta is kept
                dl = (log_tau - lt_p) + (a_p - alpha) * logell
                u_p = u * np.exp(dl)
                r = float(np.sum((np.abs(u) ** p - np.abs(u_p) ** p) / p + dl)) + lh_p - lh
                if tau_free:
                    r += lt_p - log_tau
                if not math.isfinite(r):
                    r = -math.inf
            else:
                r = -math.inf
            if lu_lam[k, 1] < r:
                xi_p = unwhiten(u_p, p)
                if np.all(np.isfinite(xi_p)):
                    log_tau, alpha, lh, u, xi = lt_p, a_p, lh_p, u_p, xi_p
                    g = np.exp(log_tau - (0.5 + alpha) * logell)
                    acc_c = 1.0
            if adapting:
                log_step_c += eta * ((math.exp(r) if r < 0.0 else 1.0) - target_lam)
        out_theta[k] = theta
        out_trace[k, 0] = log_tau
        out_trace[k, 1] = alpha
        out_trace[k, 2] = loglik
        out_trace[k, 3] = acc_xi
        out_trace[k, 4] = acc_lam
        out_trace[k, 5] = acc_c
        if not math.isfinite(loglik):
            status = k
            break
    xi_out = np.asarray(xi)
    return status, xi_out, (log_tau, alpha, loglik, log_beta, log_step, log_step_c)
