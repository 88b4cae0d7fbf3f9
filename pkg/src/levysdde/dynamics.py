"""Drift functionals and the three integrators.

* ``integrate_deterministic``: ``dX = f(X_t) dt``;
* ``integrate_truncated``: adds the jumps with ``delta < |z| <= eps``;
* ``integrate_full``: adds every jump, the ones with ``|z| > 1`` inserted at
  their exact times (interlacing).

The small-jump stream of a trial is always drawn on the band
``(delta, 1]`` and then thinned to ``|z| <= eps``.  With a common seed the
truncated path for any ``eps`` therefore uses a subset of the jumps of the
full path, and coincides with it node for node whenever no jump larger than
``eps`` occurs before the horizon.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel, rng as rngmod
from .errors import BlowUpError
from .levy import JumpEvent, band_jump_arrays, large_jump_arrays
from .memory import DelayMeasure, HistorySegment, PolynomialMap, delay_integral, fading_norm

LARGE_JUMP_THRESHOLD = 1.0
DEFAULT_BLOW_UP = 1e8
SCHEMES = ("euler", "heun")


class DriftSpec:
    """``f(phi) = local(phi(0)) + sum_i integral h_i(phi(theta)) mu_i(d theta)``.

    ``local`` and each ``h_i`` map arrays of shape (k, n) to (k, n);
    :class:`PolynomialMap` terms act coordinate-wise and, for n = 1, run in
    the compiled kernel.
    """

    def __init__(self, local_part, delay_parts=(), name="custom", dimension=1):
        self.local_part = local_part
        self.delay_parts = tuple((h, mu) for h, mu in delay_parts)
        for _, mu in self.delay_parts:
            if not isinstance(mu, DelayMeasure):
                raise TypeError("delay parts need a DelayMeasure")
        self.name = name
        self.dimension = dimension

    @property
    def compilable(self):
        return self.dimension == 1 and all(
            isinstance(m, PolynomialMap) for m in (self.local_part, *(h for h, _ in self.delay_parts))
        )

    def __repr__(self):
        return f"DriftSpec({self.name!r}, local={self.local_part!r}, delay_parts={list(self.delay_parts)!r})"


def cubic_example(mu1):
    """``f(phi) = 1 - 2 phi(0) - 2 phi(0)^3 + integral phi(theta)^2 mu1(d theta)``."""
    return DriftSpec(PolynomialMap([1.0, -2.0, 0.0, -2.0]), [(PolynomialMap([0.0, 0.0, 1.0]), mu1)], name="cubic_example")


def linear(rate=1.0):
    """``f(phi) = -rate * phi(0)``."""
    return DriftSpec(PolynomialMap([0.0, -rate]), name="linear")


def zero():
    return DriftSpec(PolynomialMap([0.0]), name="zero")


def polynomial(local_coeffs, delay_terms=()):
    """Scalar drift from coefficient tables: ``delay_terms`` is ``[(coeffs, mu), ...]``."""
    return DriftSpec(
        PolynomialMap(local_coeffs), [(PolynomialMap(c), mu) for c, mu in delay_terms], name="custom"
    )


def _apply(fn, x):
    """Evaluate a (k, n) -> (k, n) map at one state."""
    out = np.asarray(fn(np.asarray(x, dtype=float)[None, :]), dtype=float)
    return out.reshape(-1) if out.size == len(x) else np.broadcast_to(out.reshape(-1), (len(x),)).copy()


def evaluate_drift(spec, segment):
    """``f(phi)`` for a history segment."""
    out = _apply(spec.local_part, segment.head)
    for h, mu in spec.delay_parts:
        out = out + np.asarray(delay_integral(segment, mu, h), dtype=float).reshape(-1)
    return out


# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """One simulated path.

    ``times`` may repeat at large-jump times: the first node holds the left
    limit, the second the post-jump value.  ``segment_norms[i]`` is
    ``||x_t||_r`` at node ``i``.
    """

    times: np.ndarray
    states: np.ndarray
    segment_norms: np.ndarray
    jump_log: list
    xi: HistorySegment
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.xi.r

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_norm(self):
        return float(self.segment_norms[-1])

    def index_at(self, t):
        """Index of the node holding ``x(t)`` (post-jump value at jump times)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0 or self.times[i] != t:
            raise KeyError(f"t = {t} is not a node of this trajectory")
        return i

    def norm_at(self, t):
        return float(self.segment_norms[self.index_at(t)])

    def running_sup(self, t=None):
        """``sup_{0 <= s <= t} |x(s)|`` (over nodes; the path is linear between them)."""
        stop = len(self.times) if t is None else self.index_at(t) + 1
        return float(np.max(np.linalg.norm(self.states[:stop], axis=1)))

    def jump_flags(self):
        flags = np.zeros(len(self.times), dtype=int)
        same = np.flatnonzero(self.times[1:] == self.times[:-1]) + 1
        flags[same] = 1
        return flags

    def segment_at(self, t=None):
        """The history ``x_t`` as a :class:`HistorySegment`."""
        if t is None:
            stop = len(self.times)
            t = self.horizon
        else:
            stop = self.index_at(t) + 1
        r = self.r
        path_t = self.times[:stop] - t
        path_x = self.states[:stop]
        xi = self.xi
        times = np.concatenate([xi.times - t, path_t[1:]])
        values = np.concatenate([xi.values, path_x[1:]])
        times[-1] = 0.0
        tail = math.exp(-r * t) * xi.tail
        return HistorySegment(times, values, tail, r, check=False)

    def to_csv(self, fh):
        n = self.states.shape[1]
        fh.write("t," + ",".join(f"x{i}" for i in range(n)) + ",segment_norm,jump\n")
        flags = self.jump_flags()
        for t, x, nrm, jf in zip(self.times, self.states, self.segment_norms, flags):
            fh.write(f"{float(t)!r}," + ",".join(repr(float(v)) for v in x) + f",{float(nrm)!r},{jf}\n")


def make_grid(T, dt):
    """``0, dt, 2 dt, ..., T`` (the last step may be shorter)."""
    if not T > 0 or not dt > 0:
        raise ValueError("need T > 0 and dt > 0")
    K = max(1, int(math.ceil(T / dt - 1e-9)))
    grid = np.arange(K + 1, dtype=float) * dt
    grid[-1] = T
    return grid


def _py_map(fn, n):
    """Turn a (k, n) -> (k, n) map into a list -> list closure for the Python kernel."""
    if isinstance(fn, PolynomialMap):
        c = fn.coeffs
        deg = len(c) - 1
        top = c[deg]
        rest = c[:deg][::-1]

        def poly(x):
            out = []
            for v in x:
                acc = top
                for ck in rest:
                    acc = acc * v + ck
                out.append(acc)
            return out

        return poly

    def wrapped(x):
        return list(_apply(fn, x))

    return wrapped


def _layout(spec, xi):
    """Flatten the delay parts into atom and exponential components."""
    atoms, exps, exp_init = [], [], []
    for p, (h, mu) in enumerate(spec.delay_parts):
        for w, comp in mu.components:
            if hasattr(comp, "theta0"):
                atoms.append((p, w, comp.theta0))
            else:
                exps.append((p, w, comp.lam))
                val = np.asarray(delay_integral(xi, DelayMeasure.exponential(comp.lam), h), dtype=float)
                exp_init.append(np.broadcast_to(val.reshape(-1), (xi.dimension,)).copy())
    return atoms, exps, np.array(exp_init, dtype=float).reshape(len(exps), xi.dimension)


def _run_kernel(spec, xi, grid, small, jump_t, jump_z, scheme, bound):
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if spec.dimension != xi.dimension:
        raise ValueError("drift and initial history have different dimensions")
    n = xi.dimension
    atoms, exps, exp_init = _layout(spec, xi)
    xi_norm = fading_norm(xi)
    heun = scheme == "heun"
    backend = kernel.resolve(spec.compilable)
    if backend == "compiled":
        polys = [spec.local_part] + [h for h, _ in spec.delay_parts]
        width = max(len(p.coeffs) for p in polys)
        table = np.zeros((len(polys), width))
        for i, p in enumerate(polys):
            table[i, : len(p.coeffs)] = p.coeffs
        degs = np.array([len(p.coeffs) - 1 for p in polys], dtype=np.int32)
        local_c = np.ascontiguousarray(table[:1])
        part_c = np.ascontiguousarray(table[1:]) if len(polys) > 1 else np.zeros((1, 1))
        part_deg = np.ascontiguousarray(degs[1:]) if len(polys) > 1 else np.zeros(1, dtype=np.int32)
        ts, xs, ns, status, ft, fv = kernel.ckernel.integrate_1d(
            grid,
            np.ascontiguousarray(xi.times),
            np.ascontiguousarray(xi.values[:, 0]),
            float(xi.tail[0]),
            xi.r,
            xi_norm,
            local_c,
            int(degs[0]),
            part_c,
            part_deg,
            np.array([a[0] for a in atoms], dtype=np.int32),
            np.array([a[1] for a in atoms], dtype=float),
            np.array([a[2] for a in atoms], dtype=float),
            np.array([e[0] for e in exps], dtype=np.int32),
            np.array([e[1] for e in exps], dtype=float),
            np.array([e[2] for e in exps], dtype=float),
            np.ascontiguousarray(exp_init[:, 0]),
            np.ascontiguousarray(small[:, 0]) if small is not None else np.zeros(1),
            small is not None,
            np.ascontiguousarray(jump_t, dtype=float),
            np.ascontiguousarray(jump_z[:, 0], dtype=float),
            heun,
            float(bound),
        )
        xs = np.asarray(xs)[:, None]
    else:
        local_fn = _py_map(spec.local_part, n)
        part_fns = [_py_map(h, n) for h, _ in spec.delay_parts]
        ts, xs, ns, status, ft, fv = kernel.pykernel.integrate(
            list(grid),
            xi.times,
            xi.values,
            xi.tail,
            xi.r,
            xi_norm,
            local_fn,
            part_fns,
            atoms,
            exps,
            exp_init,
            None if small is None else small.tolist(),
            list(map(float, jump_t)),
            jump_z.tolist(),
            heun,
            float(bound),
        )
        xs = np.asarray(xs, dtype=float).reshape(len(ts), n)
    if status:
        raise BlowUpError(ft, fv, bound)
    return np.asarray(ts, dtype=float), xs, np.asarray(ns, dtype=float), backend


def _streams(rng, trial):
    """(small, large) generators from a seed, a Generator, or a pair."""
    if isinstance(rng, tuple):
        return rng
    if isinstance(rng, np.random.Generator):
        small, large = rng.spawn(2)
        return small, large
    return rngmod.trial_streams(int(rng), rngmod.DYNAMICS, trial)


def small_jump_increments(levy, eps, delta, grid, rng):
    """Per-step sums of the band jumps ``delta < |z| <= eps``.

    The stream is drawn on ``(delta, 1]`` and thinned, so it is shared by
    every ``eps`` for a given generator state.  Returns the ``(K, n)``
    increments, the largest mark radius in the whole ``(delta, 1]`` stream
    (0 when empty) and the number of kept jumps.
    """
    if not 0 < delta < eps <= LARGE_JUMP_THRESHOLD:
        raise ValueError("need 0 < delta < eps <= 1")
    T = float(grid[-1])
    K = len(grid) - 1
    n = levy.dimension
    times, marks = band_jump_arrays(levy, delta, LARGE_JUMP_THRESHOLD, T, rng)
    radii = np.linalg.norm(marks, axis=1)
    keep = radii <= eps
    idx = np.clip(np.searchsorted(grid, times, side="left") - 1, 0, K - 1)
    inc = np.zeros((K, n))
    np.add.at(inc, idx[keep], marks[keep])
    largest = float(radii.max()) if len(radii) else 0.0
    return inc, largest, int(keep.sum())


def integrate_deterministic(spec, xi, T, dt, *, scheme="euler", blow_up_bound=DEFAULT_BLOW_UP):
    """Solve ``dX = f(X_t) dt`` from ``xi`` up to ``T``."""
    grid = make_grid(T, dt)
    n = xi.dimension
    ts, xs, ns, backend = _run_kernel(spec, xi, grid, None, np.zeros(0), np.zeros((0, n)), scheme, blow_up_bound)
    meta = {"kind": "deterministic", "dt": dt, "scheme": scheme, "backend": backend}
    return TrajectoryRecord(ts, xs, ns, [], xi, meta)


def integrate_truncated(spec, xi, levy, eps, delta, T, dt, rng, *, trial=0, scheme="euler",
                        blow_up_bound=DEFAULT_BLOW_UP):
    """Path driven by the jumps with ``delta < |z| <= eps`` only.

    ``rng`` is a seed (streams derived per ``trial``), a Generator for the
    small-jump stream, or a ``(small, large)`` pair of which only the first
    is used.
    """
    if isinstance(rng, np.random.Generator):
        small_rng = rng
    else:
        small_rng = _streams(rng, trial)[0]
    grid = make_grid(T, dt)
    n = xi.dimension
    inc, _, count = small_jump_increments(levy, eps, delta, grid, small_rng)
    ts, xs, ns, backend = _run_kernel(spec, xi, grid, inc, np.zeros(0), np.zeros((0, n)), scheme, blow_up_bound)
    meta = {
        "kind": "truncated", "dt": dt, "eps": eps, "delta": delta, "scheme": scheme, "backend": backend,
        "seed": rng if isinstance(rng, (int, np.integer)) else None, "trial": trial, "small_jumps": count,
    }
    return TrajectoryRecord(ts, xs, ns, [], xi, meta)


def integrate_full(spec, xi, levy, delta, T, dt, rng, *, trial=0, scheme="euler",
                   blow_up_bound=DEFAULT_BLOW_UP, forced_jumps=None):
    """Path driven by all jumps above ``delta``.

    Jumps with ``|z| > 1`` come from an independent stream and are applied as
    instantaneous state jumps at their exact times.  ``forced_jumps`` (a list
    of :class:`JumpEvent`) replaces that stream; it is a test hook.
    """
    small_rng, large_rng = _streams(rng, trial)
    grid = make_grid(T, dt)
    n = xi.dimension
    inc, small_max, count = small_jump_increments(levy, LARGE_JUMP_THRESHOLD, delta, grid, small_rng)
    if forced_jumps is not None:
        jt = np.array([ev.time for ev in forced_jumps], dtype=float)
        jz = np.array([np.atleast_1d(ev.mark) for ev in forced_jumps], dtype=float).reshape(len(jt), n)
        order = np.argsort(jt, kind="stable")
        jt, jz = jt[order], jz[order]
        if np.any((jt <= 0) | (jt > T)):
            raise ValueError("forced jump times must lie in (0, T]")
    else:
        jt, jz = large_jump_arrays(levy, LARGE_JUMP_THRESHOLD, T, large_rng)
    ts, xs, ns, backend = _run_kernel(spec, xi, grid, inc, jt, jz, scheme, blow_up_bound)
    meta = {
        "kind": "full", "dt": dt, "eps": LARGE_JUMP_THRESHOLD, "delta": delta, "scheme": scheme,
        "backend": backend, "seed": rng if isinstance(rng, (int, np.integer)) else None, "trial": trial,
        "small_jumps": count, "max_small_jump": small_max,
    }
    return TrajectoryRecord(ts, xs, ns, [JumpEvent(float(t), z.copy()) for t, z in zip(jt, jz)], xi, meta)


def largest_jump_before(record_full, T=None):
    """Largest jump radius of a full-path record (small stream over the whole horizon)."""
    big = max((float(np.linalg.norm(ev.mark)) for ev in record_full.jump_log
               if T is None or ev.time <= T), default=0.0)
    return max(big, record_full.meta["max_small_jump"])
