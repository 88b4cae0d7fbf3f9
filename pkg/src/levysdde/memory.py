"""Fading-memory histories, delay measures and distributed-delay integrals.

A history ``phi`` on ``(-inf, 0]`` is stored as a piecewise-linear grid on
``[theta_min, 0]`` plus an exponential tail ``phi(theta) = exp(-r theta) v``
for ``theta < theta_min``.  The norm is ``sup exp(r theta) |phi(theta)|``.
Grid times may repeat: a repeated time is a jump, the first node holding the
left limit and the second the value (paths are right-continuous).
"""
import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DivergenceError, QuadratureError

CONTINUITY_TOL = 1e-12
FOLD_TOL = 1e-12


def piece_weighted_max(t0, t1, x0, x1, r):
    """Max of ``exp(r u) |x(u)|`` over ``u`` in ``[t0, t1]`` for linear ``x``.

    Arrays broadcast over pieces: ``t0, t1`` have shape (k,), ``x0, x1`` shape (k, n).
    The stationary points of ``exp(2 r u) |x(u)|^2`` solve a quadratic, so the
    maximum is exact up to rounding.
    """
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    h = t1 - t0
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(h[:, None] > 0, (x1 - x0) / h[:, None], 0.0)
    # local coordinate s = u - t1 in [-h, 0]
    A = np.einsum("ij,ij->i", x1, x1)
    B = np.einsum("ij,ij->i", x1, b)
    C = np.einsum("ij,ij->i", b, b)

    def value(s):
        q = np.maximum(A + 2 * B * s + C * s * s, 0.0)
        return np.exp(r * (t1 + s)) * np.sqrt(q)

    best = np.maximum(value(np.zeros_like(h)), value(-h))
    # r C s^2 + (2 r B + C) s + (r A + B) = 0
    qa = r * C
    qb = 2 * r * B + C
    qc = r * A + B
    disc = qb * qb - 4 * qa * qc
    ok = (qa > 0) & (disc >= 0)
    if np.any(ok):
        sq = np.sqrt(np.where(ok, disc, 0.0))
        # numerically stable roots
        qq = -0.5 * (qb + np.copysign(sq, qb))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(ok, qq / np.where(qa != 0, qa, 1.0), np.nan)
            r2 = np.where(ok & (qq != 0), qc / np.where(qq != 0, qq, 1.0), np.nan)
        for root in (r1, r2):
            inside = ok & (root > -h) & (root < 0)
            if np.any(inside):
                cand = np.where(inside, root, 0.0)
                best = np.where(inside, np.maximum(best, value(cand)), best)
    return best


class HistorySegment:
    """Immutable element of the fading-memory space (see module docstring)."""

    __slots__ = ("r", "times", "values", "tail")

    def __init__(self, times, values, tail, r, *, check=True):
        times = np.array(times, dtype=float)
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        tail = np.atleast_1d(np.array(tail, dtype=float))
        if not r > 0:
            raise ValueError("fading rate r must be positive")
        if len(times) == 0 or len(times) != len(values):
            raise ValueError("need at least one node and one value per node")
        if tail.shape != (values.shape[1],):
            raise ValueError("tail coefficient must have the state dimension")
        if check:
            if times[-1] != 0.0:
                raise ValueError("grid must end at theta = 0")
            if np.any(np.diff(times) < 0):
                raise ValueError("grid times must be nondecreasing")
            if np.any(times[2:] == times[:-2]):
                raise ValueError("at most two nodes may share a time")
            if not np.all(np.isfinite(values)) or not np.all(np.isfinite(tail)):
                raise ValueError("non-finite history values")
            w = math.exp(r * times[0])
            gap = np.linalg.norm(w * values[0] - tail)
            if gap > CONTINUITY_TOL * max(1.0, np.linalg.norm(tail)):
                raise ConsistencyError(
                    f"grid value at theta_min={times[0]} does not match the exponential tail (gap {gap:.3g})"
                )
        for a in (times, values, tail):
            a.setflags(write=False)
        self.times = times
        self.values = values
        self.tail = tail
        self.r = float(r)

    # constructors -----------------------------------------------------

    @classmethod
    def constant(cls, c, r, theta_min=-5.0):
        """``phi = c`` on ``[theta_min, 0]`` with a continuous exponential tail."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        if theta_min == 0:
            return cls([0.0], [c], c, r)
        return cls([theta_min, 0.0], [c, c], math.exp(r * theta_min) * c, r)

    @classmethod
    def pure_tail(cls, v, r):
        """``phi(theta) = exp(-r theta) v`` everywhere: one node at 0, the rest is tail.

        Interpolating the exponential linearly between nodes would overstate
        the norm, so no grid part is kept.
        """
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return cls([0.0], [v], v, r)

    @classmethod
    def from_nodes(cls, times, values, r):
        """Grid data with the tail matched continuously at the first node."""
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        tail = math.exp(r * float(times[0])) * values[0]
        return cls(times, values, tail, r)

    # basic accessors ---------------------------------------------------

    @property
    def dimension(self):
        return self.values.shape[1]

    @property
    def theta_min(self):
        return float(self.times[0])

    @property
    def head(self):
        return self.values[-1]

    def __call__(self, theta):
        """Evaluate at ``theta`` (scalar or array); right-continuous at jumps."""
        th = np.asarray(theta, dtype=float)
        scalar = th.ndim == 0
        th = np.atleast_1d(th)
        if np.any(th > 0):
            raise ValueError("histories live on theta <= 0")
        out = np.empty((len(th), self.dimension))
        below = th < self.times[0]
        out[below] = np.exp(-self.r * th[below])[:, None] * self.tail
        on = ~below
        if np.any(on):
            t = th[on]
            i = np.searchsorted(self.times, t, side="right") - 1
            i = np.clip(i, 0, len(self.times) - 1)
            j = np.minimum(i + 1, len(self.times) - 1)
            h = self.times[j] - self.times[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                lam = np.where(h > 0, (t - self.times[i]) / h, 0.0)
            out[on] = self.values[i] + lam[:, None] * (self.values[j] - self.values[i])
        return out[0] if scalar else out

    def pieces(self):
        """(t0, t1, x0, x1) for every linear piece of positive length."""
        t = self.times
        k = np.flatnonzero(t[1:] > t[:-1])
        return t[k], t[k + 1], self.values[k], self.values[k + 1]

    def scaled(self, a):
        return HistorySegment(self.times, a * self.values, a * self.tail, self.r, check=False)

    def __add__(self, other):
        return combine(self, other, 1.0, 1.0)

    def __sub__(self, other):
        return combine(self, other, 1.0, -1.0)

    def __eq__(self, other):
        return (
            isinstance(other, HistorySegment)
            and self.r == other.r
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.tail, other.tail)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"HistorySegment(r={self.r}, nodes={len(self.times)}, "
            f"theta_min={self.theta_min:.6g}, head={self.head.tolist()}, tail={self.tail.tolist()})"
        )

    # serialization -----------------------------------------------------

    def to_csv(self, fh=None):
        """Write ``theta, x0, x1, ...`` rows after a ``# r=..., tail=...`` header."""
        own = fh is None
        if own:
            fh = io.StringIO()
        fh.write(f"# r={self.r!r} tail_coefficient={','.join(repr(float(x)) for x in self.tail)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta"] + [f"x{i}" for i in range(self.dimension)])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in v])
        return fh.getvalue() if own else None

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        header = lines[0].lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        rows = list(csv.reader(lines[2:]))
        times = [float(row[0]) for row in rows]
        values = [[float(x) for x in row[1:]] for row in rows]
        tail = [float(x) for x in meta["tail_coefficient"].split(",")]
        return cls(times, values, tail, float(meta["r"]))


def combine(a, b, ca, cb):
    """``ca * a + cb * b`` on the union grid.

    Both segments must share ``r`` and ``theta_min`` so that the result is
    again piecewise linear plus one exponential tail.
    """
    if a.r != b.r:
        raise ValueError("segments must share r")
    if a.theta_min != b.theta_min:
        raise ValueError("segments must share theta_min to be combined exactly")
    # union of grids; jump nodes of either side are kept as double nodes
    lo = min(a.theta_min, b.theta_min)
    ts = np.union1d(a.times[a.times >= lo], b.times[b.times >= lo])
    jumps = set(_jump_times(a)) | set(_jump_times(b))
    out_t, out_v = [], []
    for t in ts:
        if t in jumps:
            left = ca * _left_value(a, t) + cb * _left_value(b, t)
            out_t.append(t)
            out_v.append(left)
        out_t.append(t)
        out_v.append(ca * a(t) + cb * b(t))
    return HistorySegment(out_t, out_v, ca * a.tail + cb * b.tail, a.r, check=False)


def _jump_times(seg):
    t = seg.times
    return t[1:][t[1:] == t[:-1]].tolist()


def _left_value(seg, t):
    idx = np.flatnonzero(seg.times == t)
    if len(idx) == 2:
        return seg.values[idx[0]]
    return seg(t)


def fading_norm(segment, r=None):
    """``sup_{theta <= 0} exp(r theta) |phi(theta)|``.

    On the tail the weighted value is the constant ``|v|``; on each linear
    piece the maximum is found in closed form.  ``r`` defaults to the
    segment's own rate; a larger rate weighs the same function (the tail's
    weighted value then decays and peaks at ``theta_min``), a smaller one
    gives ``inf`` unless the tail vanishes.
    """
    rate = segment.r if r is None else float(r)
    v = float(np.linalg.norm(segment.tail))
    if rate == segment.r:
        best = v
    elif rate > segment.r or v == 0:
        best = math.exp((rate - segment.r) * segment.theta_min) * v
    else:
        return math.inf
    best = max(best, float(np.max(np.exp(rate * segment.times) * np.linalg.norm(segment.values, axis=1))))
    t0, t1, x0, x1 = segment.pieces()
    if len(t0):
        best = max(best, float(piece_weighted_max(t0, t1, x0, x1, rate).max()))
    return best


def shift_append(segment, path_times, path_values, *, jump=False):
    """History after following ``path`` for ``path_times[-1]`` time units.

    ``path_times`` starts at 0; ``path_values[0]`` must equal the current head
    unless ``jump`` is set, in which case the junction becomes a double node.
    """
    path_times = np.asarray(path_times, dtype=float)
    path_values = np.asarray(path_values, dtype=float)
    if path_values.ndim == 1:
        path_values = path_values[:, None]
    if len(path_times) == 0:
        return segment
    if path_times[0] != 0.0:
        raise ValueError("path must start at time 0")
    if np.any(np.diff(path_times) < 0):
        raise ValueError("path times must be nondecreasing")
    dt = float(path_times[-1])
    mismatch = np.linalg.norm(path_values[0] - segment.head)
    if mismatch > CONTINUITY_TOL * max(1.0, np.linalg.norm(segment.head)) and not jump:
        raise ConsistencyError(f"path starts {mismatch:.3g} away from the current history value")
    if dt == 0 and not jump:
        return segment
    start = 0 if jump and mismatch > 0 else 1
    times = np.concatenate([segment.times - dt, path_times[start:] - dt])
    values = np.concatenate([segment.values, path_values[start:]])
    times[-1] = 0.0
    tail = math.exp(-segment.r * dt) * segment.tail
    times, values = _fold(times, values, tail, segment.r)
    return HistorySegment(times, values, tail, segment.r, check=False)


def _fold(times, values, tail, r):
    """Drop leading pieces that are indistinguishable from a zero tail."""
    if np.linalg.norm(tail) >= FOLD_TOL:
        return times, values
    k = 0
    n = len(times)
    while k + 2 < n and times[k + 1] > times[k]:
        m = piece_weighted_max(times[k : k + 1], times[k + 1 : k + 2], values[k : k + 1], values[k + 1 : k + 2], r)[0]
        if m >= FOLD_TOL:
            break
        k += 1
    if k == 0:
        return times, values
    # the new first node must sit on the (numerically zero) tail
    return times[k:], values[k:]


# ---------------------------------------------------------------------------
# delay measures


@dataclass(frozen=True)
class Atom:
    theta0: float

    def __post_init__(self):
        if self.theta0 > 0:
            raise ValueError("atoms must sit at theta <= 0")

    def exp_moment(self, kappa):
        return math.exp(-kappa * self.theta0)


@dataclass(frozen=True)
class Exponential:
    """Density ``lam exp(lam theta)`` on ``(-inf, 0]``."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("exponential rate must be positive")

    def exp_moment(self, kappa):
        if self.lam <= kappa:
            return math.inf
        return self.lam / (self.lam - kappa)


class DelayMeasure:
    """Finite mixture of atoms and exponential densities on ``(-inf, 0]``."""

    def __init__(self, components):
        comps = [(float(w), k) for w, k in components]
        if not comps:
            raise ValueError("a delay measure needs at least one component")
        if any(not w > 0 for w, _ in comps):
            raise ValueError("component weights must be positive")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"measure not normalized: weights sum to {total!r}")
        self.components = tuple(comps)

    @classmethod
    def atom(cls, theta0):
        return cls([(1.0, Atom(theta0))])

    @classmethod
    def exponential(cls, lam):
        return cls([(1.0, Exponential(lam))])

    def exp_moment(self, kappa):
        return sum(w * k.exp_moment(kappa) for w, k in self.components)

    def to_list(self):
        out = []
        for w, k in self.components:
            if isinstance(k, Atom):
                out.append({"weight": w, "kind": "atom", "theta0": k.theta0})
            else:
                out.append({"weight": w, "kind": "exp", "lambda": k.lam})
        return out

    @classmethod
    def from_list(cls, items):
        comps = []
        for item in items:
            kind = item.get("kind")
            if kind == "atom":
                comps.append((item["weight"], Atom(float(item["theta0"]))))
            elif kind == "exp":
                comps.append((item["weight"], Exponential(float(item["lambda"]))))
            else:
                raise ValueError(f"unknown delay-measure kind {kind!r}")
        return cls(comps)

    def __eq__(self, other):
        return isinstance(other, DelayMeasure) and self.components == other.components

    __hash__ = None

    def __repr__(self):
        return f"DelayMeasure({list(self.components)!r})"


def exp_moment(measure, kappa):
    """``integral exp(-kappa theta) mu(d theta)``; ``math.inf`` when divergent."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return measure.exp_moment(kappa)


def in_M_kappa(measure, kappa):
    return math.isfinite(exp_moment(measure, kappa))


# ---------------------------------------------------------------------------
# integration

# Gauss-Kronrod 15/7 rule on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_G_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
G_WEIGHTS = np.concatenate([_WG[:-1], _WG[::-1]])


def gauss_kronrod(func, a, b, epsabs=1e-10, epsrel=1e-8, max_intervals=200_000):
    """Adaptive GK15 over the intervals ``[a_i, b_i]``; returns the summed integral.

    ``func`` is vectorized: it maps an array of abscissae of shape (k,) to an
    array of shape (k,) or (k, m).  Intervals whose local error exceeds their
    length-share of the global tolerance are bisected, until the summed error
    of all remaining intervals fits in what is left of the tolerance.  Raises
    :class:`QuadratureError` when the interval budget runs out.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    total_len = float(np.sum(b - a))
    if total_len == 0:
        return 0.0
    done = None
    done_err = 0.0
    active = 0
    while len(a):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        x = mid[:, None] + half[:, None] * GK_NODES[None, :]
        fx = np.asarray(func(x.ravel()), dtype=float)
        fx = fx.reshape(x.shape + fx.shape[1:])
        k = np.tensordot(fx, GK_WEIGHTS, axes=([1], [0])) if fx.ndim == 2 else np.einsum("ijk,j->ik", fx, GK_WEIGHTS)
        g = (
            np.tensordot(fx[:, _G_IDX], G_WEIGHTS, axes=([1], [0]))
            if fx.ndim == 2
            else np.einsum("ijk,j->ik", fx[:, _G_IDX], G_WEIGHTS)
        )
        k = k * (half if k.ndim == 1 else half[:, None])
        g = g * (half if g.ndim == 1 else half[:, None])
        if not np.all(np.isfinite(k)):
            raise QuadratureError("integrand is not finite on the integration range", math.inf)
        err = np.abs(k - g)
        if err.ndim > 1:
            err = err.max(axis=1)
        scale = np.abs(k).sum() if done is None else np.abs(k).sum() + np.abs(done).sum()
        tol = max(epsabs, epsrel * scale)
        ok = err <= tol * (2 * half) / total_len
        if done_err + float(err.sum()) <= tol:
            # global test: lets intervals next to integrable endpoint singularities through
            ok[:] = True
        acc = k[ok].sum(axis=0)
        done = acc if done is None else done + acc
        done_err += float(err[ok].sum())
        a, b = a[~ok], b[~ok]
        active += 2 * len(a)
        if active > max_intervals:
            raise QuadratureError("adaptive Gauss-Kronrod exceeded its interval budget", float(err[~ok].sum()) + done_err)
        if len(a):
            m = 0.5 * (a + b)
            a, b = np.concatenate([a, m]), np.concatenate([m, b])
    return done


class PolynomialMap:
    """Coordinate-wise polynomial ``x -> sum_k c_k x^k`` (coefficients ascending)."""

    def __init__(self, coeffs):
        c = [float(x) for x in coeffs]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        self.coeffs = tuple(c) if c else (0.0,)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        acc = np.full_like(x, self.coeffs[-1])
        for c in reversed(self.coeffs[:-1]):
            acc = acc * x + c
        return acc

    def __eq__(self, other):
        return isinstance(other, PolynomialMap) and self.coeffs == other.coeffs

    __hash__ = None

    def __repr__(self):
        return f"PolynomialMap({list(self.coeffs)})"


def delay_integral(segment, measure, g):
    """``integral g(phi(theta)) mu(d theta)`` over ``(-inf, 0]``.

    ``g`` maps arrays of shape (k, n) to (k,) or (k, m).  Atoms are evaluated
    exactly, density components by adaptive quadrature split at the grid
    nodes, and the part below ``theta_min`` via the closed tail form.
    """
    total = 0.0
    for w, comp in measure.components:
        if isinstance(comp, Atom):
            val = np.asarray(g(segment(np.array([comp.theta0]))), dtype=float)[0]
        else:
            val = _exp_component_integral(segment, comp.lam, g)
        total = total + w * val
    return np.asarray(total, dtype=float)


def _exp_component_integral(seg, lam, g):
    r = seg.r
    tail = seg.tail
    theta_min = seg.theta_min
    n = seg.dimension

    # grid part
    t0, t1, x0, x1 = seg.pieces()
    if len(t0):
        def integrand(th):
            return (lam * np.exp(lam * th))[:, None] * _as_2d(g(seg(th)), len(th))

        grid_part = gauss_kronrod(integrand, t0, t1)
    else:
        grid_part = 0.0

    # tail part: theta < theta_min
    if not np.any(tail):
        gz = _as_2d(g(np.zeros((1, n))), 1)[0]
        tail_part = math.exp(lam * theta_min) * gz
    elif isinstance(g, PolynomialMap):
        tail_part = np.zeros(n)
        for k, c in enumerate(g.coeffs):
            if c == 0.0:
                continue
            rate = lam - k * r
            if rate <= 0:
                raise DivergenceError(
                    f"exponential component lambda={lam}: tail term of degree {k} grows like "
                    f"exp(-{k * r} theta), which the measure does not integrate"
                )
            tail_part = tail_part + c * tail ** k * lam * math.exp(rate * theta_min) / rate
    else:
        # theta = theta_min - s with s = t / (lam (1 - t)), t in [0, 1): the weight
        # lam e^{lam theta} d theta becomes e^{lam theta_min} e^{-t/(1-t)} dt / (1-t)^2,
        # smooth at both ends whenever the integral converges
        def integrand_t(t):
            u = t / (1.0 - t)
            th = theta_min - u / lam
            with np.errstate(over="ignore", invalid="ignore"):
                x = np.exp(-r * th)[:, None] * tail[None, :]
                w = np.exp(-u) / (1.0 - t) ** 2
                val = w[:, None] * _as_2d(g(x), len(t))
            # weight underflow against an overflowing g: the product is negligible
            return np.where((w == 0)[:, None], 0.0, val)

        try:
            tail_part = math.exp(lam * theta_min) * gauss_kronrod(integrand_t, 0.0, 1.0)
        except QuadratureError as exc:
            raise DivergenceError(
                f"exponential component lambda={lam}: tail integral does not converge ({exc})"
            ) from exc
        if not np.all(np.isfinite(tail_part)):
            raise DivergenceError(f"exponential component lambda={lam}: tail integral is not finite")
    out = np.asarray(grid_part + tail_part)
    return out


def _as_2d(v, k):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full((k, 1), float(v))
    elif v.ndim == 1:
        v = v[:, None] if len(v) == k else np.broadcast_to(v, (k, len(v)))
    return v
