# cython: language_level=3
"""Compiled versions of the kernels in ``pexpbayes._pykernels``.

Same algorithms, same signatures and the same consumption of pre-drawn
random numbers; only the loops are moved to C.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, fabs, pow, copysign, expm1, isfinite, INFINITY
from scipy.special.cython_special cimport (
    log_ndtr, ndtr, ndtri, erf, erfinv, gammainc, gammaincc, gammaincinv, gammainccinv,
)

from .errors import NumericError

cnp.import_array()

cdef double SQRT2 = sqrt(2.0)
cdef double LOG2 = log(2.0)


cdef inline double _whiten1(double xi, double p) noexcept nogil:
    cdef double ax, t, a, q, y
    if p == 2.0:
        return xi
    ax = fabs(xi)
    if p == 1.0:
        t = -LOG2 - log_ndtr(-ax)
    else:
        a = 1.0 / p
        q = 2.0 * ndtr(-ax)
        if q <= 0.5:
            y = gammainccinv(a, q)
        else:
            y = gammaincinv(a, erf(ax / SQRT2))
        t = pow(p * y, a)
    return copysign(t, xi)


cdef inline double _unwhiten1(double u, double p) noexcept nogil:
    cdef double t, x, a, y, q
    if p == 2.0:
        return u
    t = fabs(u)
    if p == 1.0:
        if t < 1.0:
            x = SQRT2 * erfinv(-expm1(-t))
        else:
            x = -ndtri(0.5 * exp(-t))
    else:
        a = 1.0 / p
        y = pow(t, p) / p
        q = gammaincc(a, y)
        if q < 0.5:
            x = -ndtri(0.5 * q)
        else:
            x = SQRT2 * erfinv(gammainc(a, y))
    return copysign(x, u)


def whiten(xi, double p):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] src = np.ascontiguousarray(xi, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(src)
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        out[i] = _whiten1(src[i], p)
    return out.reshape(np.shape(xi))


def unwhiten(u, double p):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] src = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(src)
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        out[i] = _unwhiten1(src[i], p)
    return out.reshape(np.shape(u))


# ---------------------------------------------------------------------------
# per-coordinate marginal likelihood

cdef inline double _g(double s, double a, double b, double p) noexcept nogil:
    return a * s - 0.5 * b * s * s - pow(fabs(s), p) / p


cdef double _mode(double a, double b, double p) noexcept nogil:
    cdef double lo, hi, s, h, dh, s_new
    cdef int k
    if p == 1.0:
        return (a - 1.0) / b if a > 1.0 else 0.0
    if p == 2.0:
        return a / (b + 1.0)
    if a == 0.0:
        return 0.0
    lo = 0.0
    hi = a / b
    s = pow(a, 1.0 / (p - 1.0))
    if s < hi:
        hi = s
    s = 0.5 * hi
    for k in range(200):
        h = a - b * s - pow(s, p - 1.0)
        if h > 0:
            lo = s
        else:
            hi = s
        dh = -b - (p - 1.0) * pow(s, p - 2.0)
        s_new = s - h / dh
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if fabs(s_new - s) <= 1e-15 * s_new or hi - lo <= 1e-15 * hi:
            return s_new
        s = s_new
    return s


cdef double _edge(double s0, double gmax, double a, double b, double p,
                  double direction, double drop, double scale) noexcept nogil:
    cdef double target = gmax - drop
    cdef double d = scale, lo, mid
    cdef int k
    for k in range(1100):
        if _g(s0 + direction * d, a, b, p) < target:
            break
        d *= 2.0
    else:
        return -1.0
    lo = 0.5 * d
    for k in range(6):
        mid = 0.5 * (lo + d)
        if _g(s0 + direction * mid, a, b, p) < target:
            d = mid
        else:
            lo = mid
    return d


cdef double _panel_sum(double s0, double s1, const double[:] nodes, const double[:] weights,
                       double a, double b, double p, double gmax) noexcept nogil:
    cdef double half = 0.5 * (s1 - s0), mid = 0.5 * (s1 + s0), tot = 0.0
    cdef Py_ssize_t j
    for j in range(nodes.shape[0]):
        tot += weights[j] * exp(_g(mid + half * nodes[j], a, b, p) - gmax)
    return half * tot


cdef double _side_sum(double a0, double b0, int npan, int grade,
                      const double[:] nodes, const double[:] weights,
                      double a, double b, double p, double gmax) noexcept nogil:
    # integral over [a0, b0]; graded toward whichever end sits at 0
    cdef double w = b0 - a0, tot = 0.0, c_prev, c
    cdef int j
    if grade > 0 and (a0 == 0.0 or b0 == 0.0):
        c_prev = 0.0
        for j in range(grade, -2, -1):
            c = w * pow(2.0, -j) if j >= 0 else w
            if j == -1:
                break
            if a0 == 0.0:
                tot += _panel_sum(a0 + c_prev, a0 + c, nodes, weights, a, b, p, gmax)
            else:
                tot += _panel_sum(b0 - c, b0 - c_prev, nodes, weights, a, b, p, gmax)
            c_prev = c
        return tot
    for j in range(npan):
        tot += _panel_sum(a0 + w * j / npan, a0 + w * (j + 1) / npan,
                          nodes, weights, a, b, p, gmax)
    return tot


cdef double _window_sum(double lo, double hi, int npan, int grade,
                        const double[:] nodes, const double[:] weights,
                        double a, double b, double p, double gmax) noexcept nogil:
    if lo < 0.0 < hi:
        return (_side_sum(lo, 0.0, npan, grade, nodes, weights, a, b, p, gmax)
                + _side_sum(0.0, hi, npan, grade, nodes, weights, a, b, p, gmax))
    return _side_sum(lo, hi, npan, grade, nodes, weights, a, b, p, gmax)


def log_marginal_terms(x, double n, gamma, double p, double log_c_p,
                       nodes, weights, nodes2, weights2,
                       double tol=1e-9, double drop=45.0, int npan=4, int grade=20):
    cdef const double[:] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:] gv = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef const double[:] n1 = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef const double[:] w1 = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:] n2 = np.ascontiguousarray(nodes2, dtype=np.float64)
    cdef const double[:] w2 = np.ascontiguousarray(weights2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(xv.shape[0])
    cdef Py_ssize_t i
    cdef double a, b, s0, gmax, scale, dl, dr, i1, i2
    cdef int gr = 0 if (p == 1.0 or p == 2.0) else grade
    for i in range(xv.shape[0]):
        a = fabs(n * xv[i] * gv[i])
        b = n * gv[i] * gv[i]
        s0 = _mode(a, b, p)
        gmax = _g(s0, a, b, p)
        scale = 1.0 / sqrt(b + 1.0)
        dl = _edge(s0, gmax, a, b, p, -1.0, drop, scale)
        dr = _edge(s0, gmax, a, b, p, 1.0, drop, scale)
        if dl < 0 or dr < 0:
            raise NumericError("quadrature window search did not terminate", index=i)
        i1 = _window_sum(s0 - dl, s0 + dr, npan, gr, n1, w1, a, b, p, gmax)
        i2 = _window_sum(s0 - dl, s0 + dr, npan, gr, n2, w2, a, b, p, gmax)
        if not (i1 > 0 and i2 > 0) or fabs(log(i1) - log(i2)) > tol:
            raise NumericError(
                f"quadrature did not converge for coordinate {i} "
                f"(x={xv[i]}, n={n}, gamma={gv[i]}, p={p})", index=i)
        out[i] = gmax - log_c_p + log(i2)
    return out


# ---------------------------------------------------------------------------
# Gibbs sweep

cdef double _hyper_logpdf(int code, const double[:] par, double n,
                          double log_tau, double alpha) noexcept nogil:
    cdef double out = 0.0, left
    if code == 0:
        return 0.0
    if code == 2 or code == 3:
        if not (par[4] <= alpha <= par[5]):
            return -INFINITY
        out -= par[3] * alpha
    if code == 1 or code == 3:
        left = par[2]
        if code == 3:
            left = pow(n, -1.0 / (par[6] + par[7] * alpha))
            out -= log(gammainc(par[0], par[1] / left))
        if log_tau < log(left):
            return -INFINITY
        out += -(par[0] + 1.0) * log_tau - par[1] * exp(-log_tau)
    return out


def hyper_logpdf(int code, par, double n, double log_tau, double alpha):
    cdef const double[:] pv = np.ascontiguousarray(par, dtype=np.float64)
    return _hyper_logpdf(code, pv, n, log_tau, alpha)


def gibbs_block(xi_in, x_in, logell_in, double n, double p, st, int mode,
                int hyper_code, hyper_par, zeta_in, lu_xi_in, z_lam_in, lu_lam_in,
                long it0, long burnin, bint adapt, bint precondition, bint do_xi,
                bint centered, double target_xi, double target_lam, out_theta_in, out_trace_in):
    cdef double[:] xi = np.array(xi_in, dtype=np.float64)
    cdef const double[:] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:] logell = np.ascontiguousarray(logell_in, dtype=np.float64)
    cdef const double[:] hp = np.ascontiguousarray(hyper_par, dtype=np.float64)
    cdef const double[:, :] zeta = np.ascontiguousarray(zeta_in, dtype=np.float64)
    cdef const double[:] lu_xi = np.ascontiguousarray(lu_xi_in, dtype=np.float64)
    cdef const double[:, :] z_lam = np.ascontiguousarray(z_lam_in, dtype=np.float64)
    cdef const double[:, :] lu_lam = np.ascontiguousarray(lu_lam_in, dtype=np.float64)
    cdef double[:, :] out_theta = out_theta_in
    cdef double[:, :] out_trace = out_trace_in
    cdef Py_ssize_t L = xi.shape[0], B = lu_xi.shape[0], k, l
    cdef double log_tau = st[0], alpha = st[1], loglik = st[2]
    cdef double log_beta = st[3], log_step = st[4], log_step_c = st[5]
    cdef bint tau_free = mode == 1 or mode == 3
    cdef bint alpha_free = mode == 2 or mode == 3
    cdef double[:] u = np.empty(L)
    cdef double[:] g = np.empty(L)
    cdef double[:] theta = np.empty(L)
    cdef double[:] xi_p = np.empty(L)
    cdef double[:] u_p = np.empty(L)
    cdef double[:] g_p = np.empty(L)
    cdef double[:] th_p = np.empty(L)
    cdef double lh, lh_p, lt_p, a_p, d, r, beta, bl, cap, step, eta, acc_xi, acc_lam, acc_c, ll, dl
    cdef bint ok
    cdef long it
    cdef bint adapting
    cdef int status = -1

    with nogil:
        for l in range(L):
            u[l] = _whiten1(xi[l], p)
            g[l] = exp(log_tau - (0.5 + alpha) * logell[l])
            theta[l] = g[l] * u[l]
        lh = _hyper_logpdf(hyper_code, hp, n, log_tau, alpha)
        for k in range(B):
            it = it0 + k
            eta = pow(it + 1.0, -0.6)
            adapting = adapt and it < burnin
            acc_xi = 0.0
            acc_lam = 0.0
            acc_c = 0.0
            if do_xi:
                beta = exp(log_beta)
                d = 0.0
                for l in range(L):
                    bl = beta / sqrt(1.0 + n * g[l] * g[l]) if precondition else beta
                    if bl > 1.0:
                        # per-coordinate steps are capped at 1, so beta itself may exceed 1
                        bl = 1.0
                    xi_p[l] = sqrt(1.0 - bl * bl) * xi[l] + bl * zeta[k, l]
                    u_p[l] = _whiten1(xi_p[l], p)
                    th_p[l] = g[l] * u_p[l]
                    d += (x[l] - 0.5 * (theta[l] + th_p[l])) * (th_p[l] - theta[l])
                d *= n
                if lu_xi[k] < d:
                    ll = 0.0
                    for l in range(L):
                        xi[l] = xi_p[l]
                        u[l] = u_p[l]
                        theta[l] = th_p[l]
                        ll += (x[l] - 0.5 * theta[l]) * theta[l]
                    if d != 0.0:
                        # an unchanged theta keeps its cached value bit for bit
                        loglik = n * ll
                    acc_xi = 1.0
                if adapting:
                    log_beta = log_beta + eta * ((exp(d) if d < 0.0 else 1.0) - target_xi)
                    cap = 0.5 * log1p(n * g[0] * g[0]) if precondition else 0.0
                    if log_beta > cap:
                        log_beta = cap
            if mode != 0:
                step = exp(log_step)
                lt_p = log_tau + step * z_lam[k, 0] if tau_free else log_tau
                a_p = alpha + step * z_lam[k, 1] if alpha_free else alpha
                lh_p = _hyper_logpdf(hyper_code, hp, n, lt_p, a_p)
                if isfinite(lh_p) and a_p > 0.0:
                    r = 0.0
                    for l in range(L):
                        g_p[l] = exp(lt_p - (0.5 + a_p) * logell[l])
                        th_p[l] = g_p[l] * u[l]
                        r += (x[l] - 0.5 * (theta[l] + th_p[l])) * (th_p[l] - theta[l])
                    r = n * r + lh_p - lh
                    if tau_free:
                        r += lt_p - log_tau
                else:
                    r = -INFINITY
                if lu_lam[k, 0] < r:
                    log_tau = lt_p
                    alpha = a_p
                    lh = lh_p
                    ll = 0.0
                    for l in range(L):
                        g[l] = g_p[l]
                        theta[l] = th_p[l]
                        ll += (x[l] - 0.5 * theta[l]) * theta[l]
                    loglik = n * ll
                    acc_lam = 1.0
                if adapting:
                    log_step = log_step + eta * ((exp(r) if r < 0.0 else 1.0) - target_lam)
            if mode != 0 and centered:
                step = exp(log_step_c)
                lt_p = log_tau + step * z_lam[k, 2] if tau_free else log_tau
                a_p = alpha + step * z_lam[k, 3] if alpha_free else alpha
                lh_p = _hyper_logpdf(hyper_code, hp, n, lt_p, a_p)
                if isfinite(lh_p) and a_p > 0.0:
                    r = 0.0
                    for l in range(L):
                        # log(gamma / gamma'); the likelihood cancels because theta is kept
                        dl = (log_tau - lt_p) + (a_p - alpha) * logell[l]
                        u_p[l] = u[l] * exp(dl)
                        r += (pow(fabs(u[l]), p) - pow(fabs(u_p[l]), p)) / p + dl
                    r = r + lh_p - lh
                    if tau_free:
                        r += lt_p - log_tau
                    if not isfinite(r):
                        r = -INFINITY
                else:
                    r = -INFINITY
                if lu_lam[k, 1] < r:
                    ok = True
                    for l in range(L):
                        xi_p[l] = _unwhiten1(u_p[l], p)
                        if not isfinite(xi_p[l]):
                            ok = False
                            break
                    if ok:
                        log_tau = lt_p
                        alpha = a_p
                        lh = lh_p
                        for l in range(L):
                            xi[l] = xi_p[l]
                            u[l] = u_p[l]
                            g[l] = exp(log_tau - (0.5 + alpha) * logell[l])
                        acc_c = 1.0
                if adapting:
                    log_step_c = log_step_c + eta * ((exp(r) if r < 0.0 else 1.0) - target_lam)
            for l in range(L):
                out_theta[k, l] = theta[l]
            out_trace[k, 0] = log_tau
            out_trace[k, 1] = alpha
            out_trace[k, 2] = loglik
            out_trace[k, 3] = acc_xi
            out_trace[k, 4] = acc_lam
            out_trace[k, 5] = acc_c
            if not isfinite(loglik):
                status = k
                break
    return status, np.asarray(xi), (log_tau, alpha, loglik, log_beta, log_step, log_step_c)
