"""Pure-Python integration kernel.

Mirrors ``_ckernel.pyx`` step for step.  It is used when the compiled
extension is unavailable and for drifts the compiled kernel does not cover
(state dimension above one, or non-polynomial maps).

State vectors are plain lists of floats; all randomness has been drawn by
the caller, so the kernel is a deterministic function of its inputs.
"""
import math
from bisect import bisect_right

OK = 0
BLOW_UP = 1


def exp_weights(a):
    """Weights (w0, w1) of the endpoint values for
    ``integral_0^h lam exp(lam (u - h)) g(u) du`` with ``g`` linear, ``a = lam h``."""
    if a < 1e-3:
        w1 = a * (0.5 - a * (1.0 / 6.0 - a * (1.0 / 24.0 - a / 120.0)))
    else:
        w1 = 1.0 + math.expm1(-a) / a
    return -math.expm1(-a) - w1, w1


def piece_max(x0, x1, h, r):
    """Max over s in [-h, 0] of exp(r s) |x1 + s (x1 - x0) / h|."""
    n = len(x1)
    A = 0.0
    for i in range(n):
        A += x1[i] * x1[i]
    best = math.sqrt(A)
    if h <= 0:
        return best
    B = 0.0
    C = 0.0
    b = [(x1[i] - x0[i]) / h for i in range(n)]
    q0 = 0.0
    for i in range(n):
        B += x1[i] * b[i]
        C += b[i] * b[i]
        q0 += x0[i] * x0[i]
    left = math.exp(-r * h) * math.sqrt(q0)
    if left > best:
        best = left
    qa = r * C
    if qa <= 0:
        return best
    qb = 2.0 * r * B + C
    qc = r * A + B
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return best
    qq = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
    roots = [qq / qa]
    if qq != 0:
        roots.append(qc / qq)
    for s in roots:
        if -h < s < 0:
            q = A + 2.0 * B * s + C * s * s
            if q > 0:
                v = math.exp(r * s) * math.sqrt(q)
                if v > best:
                    best = v
    return best


def integrate(
    grid,
    xi_t,
    xi_x,
    xi_tail,
    r,
    xi_norm,
    local_fn,
    part_fns,
    atoms,
    exps,
    exp_init,
    small,
    jump_t,
    jump_z,
    heun,
    bound,
):
    """Advance one path over ``grid``.

    ``atoms`` is a list of ``(part, weight, theta0)``, ``exps`` a list of
    ``(part, weight, lam)`` with starting integrals ``exp_init``.  ``small[k]``
    is added at the end of step ``k``; ``jump_t``/``jump_z`` are inserted at
    their exact times.  Returns ``(times, states, norms, status, fail_time,
    fail_value)``.
    """
    n = len(xi_tail)
    xi_t = list(map(float, xi_t))
    xi_x = [list(map(float, row)) for row in xi_x]
    xi_tail = list(map(float, xi_tail))
    xi_min = xi_t[0]
    K = len(grid) - 1
    J = len(jump_t)

    ts = [0.0]
    xs = [list(xi_x[-1])]
    norms = [float(xi_norm)]
    I = [list(map(float, row)) for row in exp_init]

    def history(q, t_now, x_now, t_pred=None, x_pred=None):
        if t_pred is not None and q > t_now:
            lam = (q - t_now) / (t_pred - t_now)
            return [x_now[i] + lam * (x_pred[i] - x_now[i]) for i in range(n)]
        if q >= t_now:
            return x_now
        if q >= 0.0:
            i = bisect_right(ts, q) - 1
            if i >= len(ts) - 1:
                return xs[-1]
            lam = (q - ts[i]) / (ts[i + 1] - ts[i])
            a, b = xs[i], xs[i + 1]
            return [a[c] + lam * (b[c] - a[c]) for c in range(n)]
        if q < xi_min:
            w = math.exp(-r * q)
            return [w * v for v in xi_tail]
        i = bisect_right(xi_t, q) - 1
        if i >= len(xi_t) - 1:
            return xi_x[-1]
        lam = (q - xi_t[i]) / (xi_t[i + 1] - xi_t[i])
        a, b = xi_x[i], xi_x[i + 1]
        return [a[c] + lam * (b[c] - a[c]) for c in range(n)]

    def drift(t, x, ints):
        out = list(local_fn(x))
        for p, w, th in atoms:
            hv = part_fns[p](history(t + th, t, x))
            for c in range(n):
                out[c] += w * hv[c]
        for e, (p, w, lam) in enumerate(exps):
            row = ints[e]
            for c in range(n):
                out[c] += w * row[c]
        return out

    def drift_pred(t0, x0, t1, x1, ints1):
        # drift at t1 for the predicted endpoint x1; history on (t0, t1] is linear
        out = list(local_fn(x1))
        for p, w, th in atoms:
            hv = part_fns[p](history(t1 + th, t0, x0, t1, x1))
            for c in range(n):
                out[c] += w * hv[c]
        for e, (p, w, lam) in enumerate(exps):
            row = ints1[e]
            for c in range(n):
                out[c] += w * row[c]
        return out

    def advance_integrals(ints, x0, x1, h):
        new = []
        for e, (p, w, lam) in enumerate(exps):
            a = lam * h
            w0, w1 = exp_weights(a)
            d = math.exp(-a)
            g0 = part_fns[p](x0)
            g1 = part_fns[p](x1)
            row = ints[e]
            new.append([d * row[c] + w0 * g0[c] + w1 * g1[c] for c in range(n)])
        return new

    def too_big(x):
        s = 0.0
        for v in x:
            s += v * v
        m = math.sqrt(s)
        return not (m <= bound), m

    x = xs[0]
    N = norms[0]
    t = 0.0
    j = 0
    for k in range(K):
        t1 = grid[k + 1]
        while True:
            if j < J and jump_t[j] <= t1:
                stop = float(jump_t[j])
                is_jump = True
            else:
                stop = t1
                is_jump = False
            h = stop - t
            if h > 0:
                f0 = drift(t, x, I)
                if heun:
                    xp = [x[c] + h * f0[c] for c in range(n)]
                    Ip = advance_integrals(I, x, xp, h)
                    f1 = drift_pred(t, x, stop, xp, Ip)
                    xn = [x[c] + 0.5 * h * (f0[c] + f1[c]) for c in range(n)]
                else:
                    xn = [x[c] + h * f0[c] for c in range(n)]
                if stop == t1 and small is not None:
                    inc = small[k]
                    xn = [xn[c] + inc[c] for c in range(n)]
                I = advance_integrals(I, x, xn, h)
                pm = piece_max(x, xn, h, r)
                N = max(math.exp(-r * h) * N, pm)
                ts.append(stop)
                xs.append(xn)
                norms.append(N)
                x = xn
                t = stop
                bad, m = too_big(x)
                if bad:
                    return ts, xs, norms, BLOW_UP, t, m
            if is_jump:
                z = jump_z[j]
                xr = [x[c] + float(z[c]) for c in range(n)]
                s = 0.0
                for v in xr:
                    s += v * v
                N = max(N, math.sqrt(s))
                ts.append(stop)
                xs.append(xr)
                norms.append(N)
                x = xr
                j += 1
                bad, m = too_big(x)
                if bad:
                    return ts, xs, norms, BLOW_UP, t, m
                if stop == t1:
                    break
            else:
                break
    return ts, xs, norms, OK, math.nan, math.nan
