# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np

cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, isfinite

cnp.import_array()

BACKEND = "cython"

cdef enum:
    L0 = 0
    L1 = 1


cdef inline double _feature(int kind, int e0, int e1, int e2, double theta,
                            double omega, double t, double time_scale) noexcept nogil:
    cdef double v, x
    cdef int i
    if kind == 0:
        v = 1.0
        for i in range(e0):
            v *= theta
        for i in range(e1):
            v *= omega
        for i in range(e2):
            v *= t
        return v
    if e0 == 0:
        x = theta
    elif e0 == 1:
        x = omega
    else:
        x = time_scale * t
    if kind == 1:
        return sin(x)
    return cos(x)


cdef inline double _rhs(const double[::1] coef, const long[::1] kinds,
                        const long[:, ::1] exps, double time_scale, double theta,
                        double omega, double t) noexcept nogil:
    cdef double acc = 0.0
    cdef double cj
    cdef Py_ssize_t j
    for j in range(coef.shape[0]):
        cj = coef[j]
        if cj != 0.0:
            acc += cj * _feature(<int>kinds[j], <int>exps[j, 0], <int>exps[j, 1],
                                 <int>exps[j, 2], theta, omega, t, time_scale)
    return acc


cdef inline bint _bad(double th, double om, double bound) noexcept nogil:
    return not (isfinite(th) and isfinite(om)) or fabs(om) > bound


def rk4_simulate(coef, kinds, exps, double time_scale, double theta0, double omega0,
                 double dt, Py_ssize_t n_steps, double bound):
    cdef const double[::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef const long[::1] kd = np.ascontiguousarray(kinds, dtype=np.int_)
    cdef const long[:, ::1] ex = np.ascontiguousarray(exps, dtype=np.int_).reshape(-1, 3)
    theta_arr = np.zeros(n_steps + 1)
    omega_arr = np.zeros(n_steps + 1)
    cdef double[::1] theta = theta_arr
    cdef double[::1] omega = omega_arr
    cdef double th = theta0, om = omega0, half = 0.5 * dt, t
    cdef double k1t, k1w, k2t, k2w, k3t, k3w, k4t, k4w
    cdef Py_ssize_t k
    cdef Py_ssize_t n_valid = n_steps + 1, div = -1
    if _bad(th, om, bound):
        return theta_arr, omega_arr, 0, 0
    theta[0] = th
    omega[0] = om
    with nogil:
        for k in range(n_steps):
            t = k * dt
            k1t = om
            k1w = _rhs(c, kd, ex, time_scale, th, om, t)
            k2t = om + half * k1w
            k2w = _rhs(c, kd, ex, time_scale, th + half * k1t, k2t, t + half)
            k3t = om + half * k2w
            k3w = _rhs(c, kd, ex, time_scale, th + half * k2t, k3t, t + half)
            k4t = om + dt * k3w
            k4w = _rhs(c, kd, ex, time_scale, th + dt * k3t, k4t, t + dt)
            th = th + (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
            om = om + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
            if _bad(th, om, bound):
                n_valid = k + 1
                div = k + 1
                break
            theta[k + 1] = th
            omega[k + 1] = om
    return theta_arr, omega_arr, n_valid, div


def euler_maruyama(double c_omega, double c_theta, double epsilon, drive, noise,
                   double theta0, double omega0, double dt):
    cdef const double[::1] dp = np.ascontiguousarray(drive, dtype=np.float64)
    cdef const double[::1] z = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t n_steps = z.shape[0], k
    theta_arr = np.empty(n_steps + 1)
    omega_arr = np.empty(n_steps + 1)
    cdef double[::1] theta = theta_arr
    cdef double[::1] omega = omega_arr
    cdef double th = theta0, om = omega0, om_next
    cdef double amp = epsilon * sqrt(dt)
    theta[0] = th
    omega[0] = om
    with nogil:
        for k in range(n_steps):
            om_next = om + dt * (-c_omega * om - c_theta * th + dp[k]) + amp * z[k]
            th = th + dt * om
            om = om_next
            theta[k + 1] = th
            omega[k + 1] = om
    return theta_arr, omega_arr


def lasso_cd(gram, corr, double half_alpha, penalize, b0, double tol, Py_ssize_t max_iter):
    cdef const double[:, ::1] g = np.ascontiguousarray(gram, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(corr, dtype=np.float64)
    cdef const unsigned char[::1] pen = np.ascontiguousarray(penalize, dtype=np.uint8)
    b_arr = np.array(b0, dtype=np.float64, copy=True)
    cdef double[::1] b = b_arr
    cdef Py_ssize_t p = b.shape[0], j, k, it
    cdef double gjj, rho, new, delta, max_delta
    with nogil:
        for it in range(1, max_iter + 1):
            max_delta = 0.0
            for j in range(p):
                gjj = g[j, j]
                if gjj <= 0.0:
                    continue
                rho = c[j]
                for k in range(p):
                    rho -= g[j, k] * b[k]
                rho += gjj * b[j]
                if pen[j]:
                    if rho > half_alpha:
                        new = (rho - half_alpha) / gjj
                    elif rho < -half_alpha:
                        new = (rho + half_alpha) / gjj
                    else:
                        new = 0.0
                else:
                    new = rho / gjj
                delta = fabs(new - b[j])
                if delta > max_delta:
                    max_delta = delta
                b[j] = new
            if max_delta < tol:
                with gil:
                    return b_arr, it, True
    return b_arr, max_iter, False


cdef inline double _prox(double x, int mode, double level, bint penalized) noexcept nogil:
    if not penalized:
        return x
    if mode == L0:
        return x if fabs(x) >= level else 0.0
    if mode == L1:
        if x > level:
            return x - level
        if x < -level:
            return x + level
        return 0.0
    return x * level


def sr3_loop(u, K, w0, int mode, double level, penalize, double tol, Py_ssize_t max_iter):
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] kk = np.ascontiguousarray(K, dtype=np.float64)
    cdef const unsigned char[::1] pen = np.ascontiguousarray(penalize, dtype=np.uint8)
    w_arr = np.array(w0, dtype=np.float64, copy=True)
    xi_arr = w_arr.copy()
    cdef double[::1] w = w_arr
    cdef double[::1] xi = xi_arr
    cdef Py_ssize_t p = w.shape[0], i, k, it
    cdef double acc, ss, new, d
    with nogil:
        for it in range(1, max_iter + 1):
            for i in range(p):
                acc = uu[i]
                for k in range(p):
                    acc += kk[i, k] * w[k]
                xi[i] = acc
            ss = 0.0
            for i in range(p):
                new = _prox(xi[i], mode, level, pen[i])
                d = new - w[i]
                ss += d * d
                w[i] = new
            if sqrt(ss) < tol:
                with gil:
                    return w_arr, xi_arr, it, True
    return w_arr, xi_arr, max_iter, False
