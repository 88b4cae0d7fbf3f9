"""Symmetric Levy measures and their jump streams.

Three families are supported:

* ``AtomsLevy``: finitely many atoms closed under ``z -> -z`` (any dimension);
* ``RadialLevy``: the one-dimensional density ``c |z|^(-1-alpha)`` on
  ``0 < |z| < R`` (``R`` may be infinite), i.e. a truncated alpha-stable measure;
* ``CompoundPoissonLevy``: total rate ``lam`` times a symmetric one-dimensional
  mark law given as a frozen ``scipy.stats`` distribution.

Because every model is symmetric, the compensator of any band
``{a < |z| <= b}`` is the zero vector.  That is enforced once, at
construction, and never computed numerically.
"""
from dataclasses import dataclass

import numpy as np

from .errors import QuadratureError
from .memory import gauss_kronrod

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8
QUAD_MAX_INTERVALS = 20_000


def adaptive_quad(func, a, b, what="integral"):
    """Adaptive Gauss-Kronrod on ``[a, b]``; ``b`` may be infinite.

    An infinite upper limit is mapped to ``[0, 1)`` by ``z = a + t / (1 - t)``.
    Raises :class:`QuadratureError` (with the residual estimate) on failure.
    """
    if np.isinf(b):
        def g(t):
            return func(a + t / (1.0 - t)) / (1.0 - t) ** 2

        lo, hi, fn = 0.0, 1.0, g
    else:
        lo, hi, fn = a, b, func
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            value = gauss_kronrod(fn, lo, hi, QUAD_EPSABS, QUAD_EPSREL, QUAD_MAX_INTERVALS)
    except QuadratureError as exc:
        raise QuadratureError(f"quadrature of {what} on [{a}, {b}] did not converge", exc.residual) from exc
    value = float(np.asarray(value).reshape(-1)[0])
    if not np.isfinite(value):
        raise QuadratureError(f"quadrature of {what} on [{a}, {b}] is not finite")
    return value


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: np.ndarray


class LevyMeasureModel:
    """Common interface.  Subclasses implement the band primitives."""

    kind = None
    dimension = 1

    def band_mass(self, lo, hi):
        """nu({lo < |z| <= hi}) for 0 <= lo < hi <= inf (lo = 0 only if finite)."""
        raise NotImplementedError

    def band_second_moment(self, lo, hi):
        """Integral of |z|^2 over {lo < |z| <= hi}."""
        raise NotImplementedError

    def sample_band(self, lo, hi, size, rng):
        """``size`` i.i.d. marks from nu restricted to {lo < |z| <= hi}, shape (size, n)."""
        raise NotImplementedError

    def mass_above(self, eps):
        return self.band_mass(eps, np.inf)

    def small_jump_second_moment(self, eps):
        return self.band_second_moment(0.0, eps)

    def support_radius(self):
        """Largest |z| in the support (may be inf)."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class AtomsLevy(LevyMeasureModel):
    """Finite symmetric atomic measure."""

    kind = "symmetric-atoms"

    def __init__(self, locations, masses, *, mirror=False, atol=1e-12):
        locs = np.asarray(locations, dtype=float)
        if locs.ndim == 1 or locs.size == 0 and locs.ndim < 2:
            locs = locs[:, None]
        masses = np.asarray(masses, dtype=float).ravel()
        if len(masses) != len(locs):
            raise ValueError("need one mass per atom")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise ValueError("atom masses must be finite and nonnegative")
        if mirror:
            locs = np.concatenate([locs, -locs])
            masses = np.concatenate([masses, masses])
        keep = masses > 0
        locs, masses = locs[keep], masses[keep]
        radii = np.linalg.norm(locs, axis=1) if len(locs) else np.zeros(0)
        if np.any(radii == 0):
            raise ValueError("nu({0}) must be 0: atom at the origin")
        if not mirror:
            _check_atom_symmetry(locs, masses, atol)
        self.locations = locs
        self.masses = masses
        self.radii = radii
        self.dimension = locs.shape[1]

    @classmethod
    def from_positive_half(cls, locations, masses):
        """Mirror a list of atoms: each (z, m) also yields (-z, m)."""
        return cls(locations, masses, mirror=True)

    def band_mass(self, lo, hi):
        sel = (self.radii > lo) & (self.radii <= hi)
        return float(self.masses[sel].sum())

    def band_second_moment(self, lo, hi):
        sel = (self.radii > lo) & (self.radii <= hi)
        return float((self.masses[sel] * self.radii[sel] ** 2).sum())

    def sample_band(self, lo, hi, size, rng):
        sel = np.flatnonzero((self.radii > lo) & (self.radii <= hi))
        if size == 0:
            return np.zeros((0, self.dimension))
        if len(sel) == 0:
            raise ValueError(f"no atoms with {lo} < |z| <= {hi}")
        p = self.masses[sel] / self.masses[sel].sum()
        idx = rng.choice(sel, size=size, p=p)
        return self.locations[idx].copy()

    def support_radius(self):
        return float(self.radii.max()) if len(self.radii) else 0.0

    def to_dict(self):
        half = self.locations[:, 0] > 0 if self.dimension == 1 else None
        if half is not None:
            return {
                "kind": "atoms",
                "locations": self.locations[half, 0].tolist(),
                "masses": self.masses[half].tolist(),
            }
        return {"kind": "atoms", "locations": self.locations.tolist(), "masses": self.masses.tolist(), "mirror": False}


def _check_atom_symmetry(locs, masses, atol):
    for z, m in zip(locs, masses):
        opp = np.all(np.abs(locs + z) <= atol, axis=1)
        if abs(masses[opp].sum() - masses[np.all(np.abs(locs - z) <= atol, axis=1)].sum()) > atol:
            raise ValueError(f"atomic measure is not symmetric at {z.tolist()}")


class RadialLevy(LevyMeasureModel):
    """Density ``c |z|^(-1-alpha)`` on ``0 < |z| < R`` in one dimension."""

    kind = "radial-density"

    def __init__(self, c, alpha, R=np.inf):
        if not c > 0:
            raise ValueError("c must be positive")
        if not 0 < alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if not R > 0:
            raise ValueError("outer cutoff R must be positive")
        self.c = float(c)
        self.alpha = float(alpha)
        self.R = float(R)

    def _tail(self, rho):
        # nu(|z| > rho) for 0 < rho
        if rho >= self.R:
            return 0.0
        out = rho ** -self.alpha
        if np.isfinite(self.R):
            out -= self.R ** -self.alpha
        return 2.0 * self.c * out / self.alpha

    def band_mass(self, lo, hi):
        if lo <= 0:
            return np.inf
        if hi <= lo:
            return 0.0
        return self._tail(lo) - (self._tail(hi) if np.isfinite(hi) else 0.0)

    def band_second_moment(self, lo, hi):
        lo, hi = max(lo, 0.0), min(hi, self.R)
        if hi <= lo:
            return 0.0
        k = 2.0 - self.alpha
        return 2.0 * self.c * (hi ** k - lo ** k) / k

    def sample_band(self, lo, hi, size, rng):
        # inverse CDF in the variable rho^(-alpha), which is uniform under nu
        hi = min(hi, self.R)
        if lo <= 0:
            raise ValueError("infinite-activity band: need lo > 0")
        a = -self.alpha
        u = 1.0 - rng.random(size)
        top = lo ** a
        bot = hi ** a if np.isfinite(hi) else 0.0
        rho = (top - u * (top - bot)) ** (1.0 / a)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return (sign * rho)[:, None]

    def support_radius(self):
        return self.R

    def to_dict(self):
        d = {"kind": "radial", "c": self.c, "alpha": self.alpha}
        if np.isfinite(self.R):
            d["R"] = self.R
        return d


class CompoundPoissonLevy(LevyMeasureModel):
    """``lam * P(Y in dz)`` for a symmetric one-dimensional law ``Y``."""

    kind = "compound-poisson-density"

    def __init__(self, lam, marks, *, law_name=None, law_params=None):
        if not lam >= 0:
            raise ValueError("total mass must be nonnegative")
        self.lam = float(lam)
        self.marks = marks
        self.law_name = law_name
        self.law_params = dict(law_params or {})
        xs = np.array([1e-3, 0.1, 0.5, 1.0, 2.0, 5.0])
        if not np.allclose(marks.cdf(-xs), marks.sf(xs), rtol=1e-10, atol=1e-14):
            raise ValueError("mark distribution is not symmetric about 0")

    def _abs_sf(self, rho):
        return 2.0 * self.marks.sf(rho) if rho > 0 else 1.0

    def band_mass(self, lo, hi):
        if hi <= lo:
            return 0.0
        upper = self._abs_sf(hi) if np.isfinite(hi) else 0.0
        return self.lam * (self._abs_sf(lo) - upper)

    def band_second_moment(self, lo, hi):
        if hi <= lo or self.lam == 0:
            return 0.0
        pdf = self.marks.pdf
        hi_ = hi if np.isfinite(hi) else np.inf
        return 2.0 * self.lam * adaptive_quad(lambda z: z * z * pdf(z), max(lo, 0.0), hi_, "z^2 nu(dz)")

    def sample_band(self, lo, hi, size, rng):
        s_lo = self.marks.sf(lo) if lo > 0 else 0.5
        s_hi = self.marks.sf(hi) if np.isfinite(hi) else 0.0
        u = 1.0 - rng.random(size)
        rho = self.marks.isf(s_hi + u * (s_lo - s_hi))
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return (sign * rho)[:, None]

    def support_radius(self):
        return float(self.marks.support()[1]) if self.lam > 0 else 0.0

    def to_dict(self):
        return {"kind": "compound_poisson", "rate": self.lam, "law": self.law_name, **self.law_params}


def mass_above(model, eps):
    """nu({|z| > eps})."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return model.mass_above(eps)


def small_jump_second_moment(model, eps):
    """Integral of |z|^2 nu(dz) over {0 < |z| <= eps}."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return model.small_jump_second_moment(eps)


def sample_large_jumps(model, eps, horizon, rng):
    """Jumps with |z| > eps on [0, horizon], in time order."""
    times, marks = large_jump_arrays(model, eps, horizon, rng)
    return [JumpEvent(float(t), m) for t, m in zip(times, marks)]


def large_jump_arrays(model, eps, horizon, rng):
    """Array form of :func:`sample_large_jumps`: ``(times, marks)``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rate = mass_above(model, eps)
    n = model.dimension
    if rate == 0:
        return np.zeros(0), np.zeros((0, n))
    # exponential gaps drawn in chunks; the chunk layout depends only on the seed
    chunk = max(16, int(2 * rate * horizon) + 1)
    times = []
    t = 0.0
    while True:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        arr = t + np.cumsum(gaps)
        inside = arr[arr <= horizon]
        times.append(inside)
        if len(inside) < chunk:
            break
        t = arr[-1]
    times = np.concatenate(times)
    marks = model.sample_band(eps, np.inf, len(times), rng)
    return times, marks


def band_jump_arrays(model, lo, hi, horizon, rng):
    """Poisson stream of marks in {lo < |z| <= hi} on [0, horizon]: ``(times, marks)``."""
    mass = model.band_mass(lo, hi)
    if not np.isfinite(mass):
        raise ValueError("band mass is infinite; raise the inner cutoff")
    count = rng.poisson(mass * horizon) if mass > 0 else 0
    times = np.sort(rng.random(count) * horizon)
    marks = model.sample_band(lo, hi, count, rng) if count else np.zeros((0, model.dimension))
    return times, marks


def sample_small_jump_increment(model, delta, eps, dt, rng):
    """Sum of the jumps in {delta < |z| <= eps} during a step of length dt.

    Jumps below ``delta`` are dropped.  The compensating drift of the band is
    zero because the model is symmetric, so nothing is subtracted.
    """
    if not 0 < delta < eps:
        raise ValueError("need 0 < delta < eps")
    if not dt > 0:
        raise ValueError("dt must be positive")
    mass = model.band_mass(delta, eps)
    count = rng.poisson(mass * dt) if mass > 0 else 0
    if count == 0:
        return np.zeros(model.dimension)
    return model.sample_band(delta, eps, count, rng).sum(axis=0)


def levy_from_dict(d):
    """Build a model from a config table (see README for the fields)."""
    from scipy import stats

    kind = d.get("kind")
    if kind == "atoms":
        locs = d["locations"]
        if d.get("mirror", True):
            return AtomsLevy.from_positive_half(locs, d["masses"])
        return AtomsLevy(locs, d["masses"])
    if kind == "radial":
        return RadialLevy(d["c"], d["alpha"], d.get("R", np.inf))
    if kind == "compound_poisson":
        law = d.get("law", "normal")
        scale = float(d.get("scale", 1.0))
        params = {"scale": scale}
        if law == "normal":
            dist = stats.norm(0.0, scale)
        elif law == "laplace":
            dist = stats.laplace(0.0, scale)
        elif law == "t":
            params["df"] = float(d["df"])
            dist = stats.t(params["df"], 0.0, scale)
        else:
            raise ValueError(f"unknown mark law {law!r}")
        return CompoundPoissonLevy(d["rate"], dist, law_name=law, law_params=params)
    if kind == "none":
        return AtomsLevy(np.zeros((0, 1)), np.zeros(0))
    raise ValueError(f"unknown levy kind {kind!r}")
