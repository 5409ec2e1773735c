"""Pure-Python reference kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same floating-point operation order, so the two backends agree to
the last bit on IEEE-754 hardware without FMA contraction.

Feature encoding shared by the kernels: ``kinds[j]`` is 0 for a monomial
with exponents ``exps[j] = (a, b, c)`` over (theta, omega, t), 1 for
``sin(state)`` and 2 for ``cos(state)`` where ``exps[j, 0]`` holds the state
index.  Trig terms of the time state use ``sin(time_scale * t)``.
"""
import math

import numpy as np

BACKEND = "python"

L0, L1, L2 = 0, 1, 2


def _feature(kind, e0, e1, e2, theta, omega, t, time_scale):
    if kind == 0:
        v = 1.0
        for _ in range(e0):
            v *= theta
        for _ in range(e1):
            v *= omega
        for _ in range(e2):
            v *= t
        return v
    if e0 == 0:
        x = theta
    elif e0 == 1:
        x = omega
    else:
        x = time_scale * t
    return math.sin(x) if kind == 1 else math.cos(x)


def _rhs(coef, kinds, exps, time_scale, theta, omega, t):
    acc = 0.0
    for j in range(len(coef)):
        cj = coef[j]
        if cj != 0.0:
            acc += cj * _feature(kinds[j], exps[j][0], exps[j][1], exps[j][2],
                                 theta, omega, t, time_scale)
    return acc


def rk4_simulate(coef, kinds, exps, time_scale, theta0, omega0, dt, n_steps, bound):
    """Integrate d(theta)/dt = omega, d(omega)/dt = coef . phi(theta, omega, t).

    Returns ``(theta, omega, n_valid, divergence_step)``; arrays have length
    ``n_steps + 1`` and only the first ``n_valid`` entries are meaningful.
    ``divergence_step`` is -1 when the run stayed finite and inside ``bound``.
    """
    coef = [float(c) for c in coef]
    kinds = [int(k) for k in kinds]
    exps = [tuple(int(v) for v in row) for row in exps]
    theta = np.zeros(n_steps + 1)
    omega = np.zeros(n_steps + 1)
    th, om = float(theta0), float(omega0)
    if not (math.isfinite(th) and math.isfinite(om)) or abs(om) > bound:
        return theta, omega, 0, 0
    theta[0], omega[0] = th, om
    half = 0.5 * dt
    for k in range(n_steps):
        t = k * dt
        k1t = om
        k1w = _rhs(coef, kinds, exps, time_scale, th, om, t)
        k2t = om + half * k1w
        k2w = _rhs(coef, kinds, exps, time_scale, th + half * k1t, k2t, t + half)
        k3t = om + half * k2w
        k3w = _rhs(coef, kinds, exps, time_scale, th + half * k2t, k3t, t + half)
        k4t = om + dt * k3w
        k4w = _rhs(coef, kinds, exps, time_scale, th + dt * k3t, k4t, t + dt)
        th = th + (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        om = om + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if not (math.isfinite(th) and math.isfinite(om)) or abs(om) > bound:
            return theta, omega, k + 1, k + 1
        theta[k + 1] = th
        omega[k + 1] = om
    return theta, omega, n_steps + 1, -1


def euler_maruyama(c_omega, c_theta, epsilon, drive, noise, theta0, omega0, dt):
    """Euler-Maruyama for the linear stochastic swing equation.

    ``drive[k]`` is the power imbalance at ``t_k`` and ``noise[k]`` a standard
    normal draw; both have length ``n_steps``.
    """
    n_steps = len(noise)
    theta = np.empty(n_steps + 1)
    omega = np.empty(n_steps + 1)
    th, om = float(theta0), float(omega0)
    theta[0], omega[0] = th, om
    amp = epsilon * math.sqrt(dt)
    for k in range(n_steps):
        om_next = om + dt * (-c_omega * om - c_theta * th + float(drive[k])) + amp * float(noise[k])
        th = th + dt * om
        om = om_next
        theta[k + 1] = th
        omega[k + 1] = om
    return theta, omega


def lasso_cd(gram, corr, half_alpha, penalize, b0, tol, max_iter):
    """Cyclic coordinate descent for ``||Z b - y||^2 + alpha ||b||_1``.

    Works on the Gram form: ``gram = Z^T Z`` and ``corr = Z^T y``.  Entries
    with ``penalize[j] == 0`` are updated without shrinkage.  Returns
    ``(b, iterations, converged)``.
    """
    g = np.asarray(gram, dtype=float).tolist()
    c = [float(v) for v in corr]
    pen = [bool(v) for v in penalize]
    b = [float(v) for v in b0]
    p = len(b)
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            gjj = g[j][j]
            if gjj <= 0.0:
                continue
            row = g[j]
            rho = c[j]
            for k in range(p):
                rho -= row[k] * b[k]
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
            delta = abs(new - b[j])
            if delta > max_delta:
                max_delta = delta
            b[j] = new
        if max_delta < tol:
            return np.array(b), it, True
    return np.array(b), max_iter, False


def _prox(x, mode, level, penalized):
    if not penalized:
        return x
    if mode == L0:
        return x if abs(x) >= level else 0.0
    if mode == L1:
        if x > level:
            return x - level
        if x < -level:
            return x + level
        return 0.0
    return x * level


def sr3_loop(u, K, w0, mode, level, penalize, tol, max_iter):
    """Alternating SR3 updates for one target column.

    The relaxed least-squares step is affine in W, ``xi = u + K w``, with
    ``u`` and ``K`` precomputed from a QR factorization.  ``level`` is the
    hard threshold (L0), the soft threshold (L1) or the multiplicative
    shrink factor (L2).  Returns ``(w, xi, iterations, converged)``.
    """
    uu = [float(v) for v in u]
    kk = np.asarray(K, dtype=float).tolist()
    pen = [bool(v) for v in penalize]
    w = [float(v) for v in w0]
    p = len(w)
    xi = list(w)
    for it in range(1, max_iter + 1):
        for i in range(p):
            acc = uu[i]
            row = kk[i]
            for k in range(p):
                acc += row[k] * w[k]
            xi[i] = acc
        ss = 0.0
        for i in range(p):
            new = _prox(xi[i], mode, level, pen[i])
            d = new - w[i]
            ss += d * d
            w[i] = new
        if math.sqrt(ss) < tol:
            return np.array(w), np.array(xi), it, True
    return np.array(w), np.array(xi), max_iter, False
