"""Checks of the standing hypotheses on a drift.

Proposition-level inequalities are evaluated exactly from the exponential
moments of the delay measures.  The one-sided dissipativity inequality and
the local Lipschitz bound are checked statistically on random history pairs.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import evaluate_drift
from .levy import mass_above
from .memory import DelayMeasure, HistorySegment, delay_integral, exp_moment, fading_norm

DISSIPATIVITY_TOL = 1e-9


def example_H(x, y):
    """``(x - y)^2 (2 x^2 + 2 x y + 2 y^2)`` for scalar states; arrays broadcast."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim and x.shape[-1] == 1:
        x, y = x[..., 0], y[..., 0]
    d = x - y
    return d * d * (2 * x * x + 2 * x * y + 2 * y * y)


H_PRESETS = {"example_H": example_H}


@dataclass
class DissipativityConstants:
    lambda1_bar: float
    lambda2_bar: float
    K1_bar: float
    K2_bar: float
    q1: float
    q2: float
    H: object
    mu1: DelayMeasure
    mu2: DelayMeasure
    r: float
    K: float

    def __post_init__(self):
        for name in ("lambda1_bar", "lambda2_bar", "K1_bar", "K2_bar"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (self.q1 > 0 and self.q2 > 0 and self.r > 0 and self.K > 0):
            raise ValueError("q1, q2, r and K must be positive")


def example_constants(mu1, r=1.0, mu2=None):
    """Constants for the cubic example drift: 0, 3, 1, 2 with ``example_H``."""
    return DissipativityConstants(
        lambda1_bar=0.0, lambda2_bar=3.0, K1_bar=1.0, K2_bar=2.0, q1=4.0, q2=4.0,
        H=example_H, mu1=mu1, mu2=mu1 if mu2 is None else mu2, r=r, K=12.0,
    )


@dataclass
class ConditionReport:
    slack1: float
    slack2: float
    mu1_moment_2r: float
    mu2_moment_2r: float
    mu1_membership_kappa: float
    mu1_in_class: bool
    mu2_in_class: bool
    passed: bool
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "slack1": self.slack1,
            "slack2": self.slack2,
            "mu1_moment_2r": self.mu1_moment_2r,
            "mu2_moment_2r": self.mu2_moment_2r,
            "mu1_membership_kappa": self.mu1_membership_kappa,
            "mu1_in_class": self.mu1_in_class,
            "mu2_in_class": self.mu2_in_class,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def _times(c, moment):
    # 0 * inf counts as 0: a vanishing constant switches the term off
    return 0.0 if c == 0 else c * moment


def check_proposition_conditions(c):
    """Slack of the two moment inequalities plus the class memberships."""
    m1 = exp_moment(c.mu1, 2 * c.r)
    m2 = exp_moment(c.mu2, 2 * c.r)
    slack1 = c.lambda2_bar - 2 * c.r - _times(c.lambda1_bar, m2)
    slack2 = c.K2_bar - _times(c.K1_bar, m1)
    kappa1 = max(2.0, c.q1) * c.r
    in1 = math.isfinite(exp_moment(c.mu1, kappa1))
    in2 = math.isfinite(m2)
    failures = []
    if not slack1 >= 0:
        failures.append(f"lambda2_bar - 2r - lambda1_bar*mu2^(2r) = {slack1:.6g} < 0")
    if not slack2 >= 0:
        failures.append(f"K2_bar - K1_bar*mu1^(2r) = {slack2:.6g} < 0")
    if not in1:
        failures.append(f"mu1 has infinite exponential moment of order {kappa1:g}: {_offenders(c.mu1, kappa1)}")
    if not in2:
        failures.append(f"mu2 has infinite exponential moment of order {2 * c.r:g}: {_offenders(c.mu2, 2 * c.r)}")
    return ConditionReport(slack1, slack2, m1, m2, kappa1, in1, in2, not failures, failures)


def _offenders(mu, kappa):
    bad = [f"exp(lambda={k.lam:g})" for _, k in mu.components if hasattr(k, "lam") and k.lam <= kappa]
    return ", ".join(bad)


def check_H(c, n_samples, rng, scale=5.0):
    """Sampled checks of ``H(x, x) = 0`` and the growth bound; returns a dict of counts."""
    x = rng.normal(scale=scale, size=(n_samples, 1))
    y = rng.normal(scale=scale, size=(n_samples, 1))
    diag = np.abs(c.H(x, x))
    growth = c.H(x, y) - c.K * (np.abs(x[:, 0]) ** c.q1 + np.abs(y[:, 0]) ** c.q2)
    neg = np.asarray(c.H(x, y)) < 0
    return {
        "diagonal_max": float(diag.max()),
        "growth_violations": int(np.sum(growth > 1e-9 * (1 + np.abs(growth)))),
        "negative_values": int(neg.sum()),
        "passed": bool(diag.max() <= 1e-12 and not np.any(growth > 1e-9 * (1 + np.abs(growth))) and not neg.any()),
    }


# ---------------------------------------------------------------------------
# random histories


def random_segment(rng, r, radius, dimension=1, times=None, max_nodes=40):
    """Random piecewise-linear history with norm at most ``radius``.

    Node count is uniform on 2..``max_nodes``, values are Gaussian, and the
    whole segment is rescaled to a norm drawn uniformly from ``(0, radius]``.
    """
    if times is None:
        times = random_grid(rng)
    vals = rng.normal(size=(len(times), dimension))
    seg = HistorySegment.from_nodes(times, vals, r)
    target = radius * (1.0 - rng.random())
    nrm = fading_norm(seg)
    return seg.scaled(target / nrm) if nrm > 0 else seg


def random_grid(rng, max_nodes=40, max_horizon=5.0):
    k = int(rng.integers(2, max_nodes + 1))
    theta_min = -max_horizon * (1.0 - rng.random())
    inner = np.sort(rng.uniform(theta_min, 0.0, size=k - 2))
    return np.concatenate([[theta_min], inner, [0.0]])


def random_pair(rng, r, radius, dimension=1):
    """Two random histories on a common grid, each inside the ball of ``radius``."""
    times = random_grid(rng)
    return random_segment(rng, r, radius, dimension, times), random_segment(rng, r, radius, dimension, times)


def stack(a, b):
    """The ``2n``-dimensional history ``(phi, psi)``; both must share one grid."""
    if a.r != b.r or not np.array_equal(a.times, b.times):
        raise ValueError("pair must share r and grid")
    return HistorySegment(a.times, np.hstack([a.values, b.values]), np.concatenate([a.tail, b.tail]), a.r, check=False)


# ---------------------------------------------------------------------------


@dataclass
class ViolationReport:
    n_trials: int
    violations: int
    worst_margin: float
    tolerance: float
    witnesses: list = field(default_factory=list)

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {
            "n_trials": self.n_trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "witnesses": self.witnesses,
        }


def dissipativity_sides(spec, c, phi, psi):
    """(left, right) sides of the one-sided inequality for the pair."""
    n = phi.dimension
    d0 = phi.head - psi.head
    left = 2.0 * float(np.dot(d0, evaluate_drift(spec, phi) - evaluate_drift(spec, psi)))
    pair = stack(phi, psi)

    def H_pair(X):
        return np.asarray(c.H(X[:, :n], X[:, n:]), dtype=float)

    def sq_diff(X):
        d = X[:, :n] - X[:, n:]
        return np.einsum("ij,ij->i", d, d)

    right = -c.K2_bar * float(np.asarray(c.H(phi.head[None, :], psi.head[None, :])).reshape(-1)[0])
    right -= c.lambda2_bar * float(np.dot(d0, d0))
    if c.K1_bar:
        right += c.K1_bar * float(np.asarray(delay_integral(pair, c.mu1, H_pair)).reshape(-1)[0])
    if c.lambda1_bar:
        right += c.lambda1_bar * float(np.asarray(delay_integral(pair, c.mu2, sq_diff)).reshape(-1)[0])
    return left, right


def sample_dissipativity(spec, c, sampler, n, rng, tol=DISSIPATIVITY_TOL, max_witnesses=5):
    """Evaluate both sides on ``n`` pairs from ``sampler(rng)``.

    A pair violates when ``left - right > tol * max(1, |left| + |right|)``;
    the margin reported is ``right - left`` (negative for violations).
    """
    if n < 1:
        raise ValueError("need at least one trial")
    count = 0
    worst = math.inf
    witnesses = []
    for _ in range(n):
        phi, psi = sampler(rng)
        left, right = dissipativity_sides(spec, c, phi, psi)
        margin = right - left
        worst = min(worst, margin)
        if -margin > tol * max(1.0, abs(left) + abs(right)):
            count += 1
            if len(witnesses) < max_witnesses:
                witnesses.append({"left": left, "right": right, "phi": phi.to_csv(), "psi": psi.to_csv()})
    return ViolationReport(n, count, worst, tol, witnesses)


def ball_sampler(r, radius, dimension=1):
    def sample(rng):
        return random_pair(rng, r, radius, dimension)

    return sample


def _lipschitz_ratio(spec, phi, psi):
    dn = fading_norm(phi - psi)
    if dn < 1e-12:
        return None
    df = evaluate_drift(spec, phi) - evaluate_drift(spec, psi)
    return float(np.dot(df, df)) / dn ** 2


def sample_local_lipschitz(spec, k, n, rng, r=1.0, dimension=1):
    """Largest ``|f(phi) - f(psi)|^2 / ||phi - psi||_r^2`` over ``n`` pairs in the ball of radius ``k``.

    A lower estimate of the local Lipschitz constant ``c_k``.
    """
    if not k > 0:
        raise ValueError("ball radius must be positive")
    best = 0.0
    for _ in range(n):
        phi, psi = random_pair(rng, r, k, dimension)
        ratio = _lipschitz_ratio(spec, phi, psi)
        if ratio is not None and ratio > best:
            best = ratio
    return best


def lipschitz_profile(spec, radii, n, rng, r=1.0, dimension=1):
    """Lower estimates of ``c_k`` for every ``k`` in ``radii`` from one shared pool.

    The pool is drawn in the largest ball; each ``k`` uses the pairs that
    fall inside its own ball, so the estimates are nondecreasing in ``k``.
    """
    radii = sorted(float(k) for k in radii)
    best = {k: 0.0 for k in radii}
    for _ in range(n):
        phi, psi = random_pair(rng, r, radii[-1], dimension)
        outer = max(fading_norm(phi), fading_norm(psi))
        ratio = _lipschitz_ratio(spec, phi, psi)
        if ratio is None:
            continue
        for k in radii:
            if outer <= k and ratio > best[k]:
                best[k] = ratio
    return best


def irreducibility_lower_bound(levy, eps, T, half=0.5):
    """``half * exp(-nu(|z| > eps) T)``: probability of staying close times no big jump.

    ``half`` is the probability that the truncated path ends within a
    quarter of the target radius of the deterministic one; the classical
    argument fixes it at one half.
    """
    if not (eps > 0 and T > 0):
        raise ValueError("need eps > 0 and T > 0")
    return half * math.exp(-mass_above(levy, eps) * T)
