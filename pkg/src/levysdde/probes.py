"""Numerical experiments: decay, convergence of the truncated noise,
first-jump law, weak irreducibility and the resolvent.

Every probe returns a :class:`ProbeReport`.  Trials are keyed by
``(seed, PROBES, trial_index, stream)``, so a probe is a deterministic
function of its arguments whatever the worker count.
"""
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import rng as rngmod
from .conditions import check_proposition_conditions, irreducibility_lower_bound
from .dynamics import integrate_deterministic, integrate_full, integrate_truncated
from .levy import large_jump_arrays, mass_above, small_jump_second_moment
from .memory import fading_norm, piece_weighted_max

SCHEMA_VERSION = 1
MIN_TRIALS_WARN = 100
SHIFT_TOL = 1e-9


@dataclass
class ProbeReport:
    probe_name: str
    parameters: dict
    estimates: dict = field(default_factory=dict)
    theoretical_values: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    trial_count: int = 0
    seed: object = None
    notes: list = field(default_factory=list)
    observables: dict = field(default_factory=dict)

    def estimate(self, name, value, stderr=None):
        self.estimates[name] = {"value": _num(value), "stderr": _num(stderr)}

    def theory(self, name, value, provenance):
        self.theoretical_values[name] = {"value": _num(value), "provenance": provenance}

    def verdict(self, name, passed, estimate, reference, tolerance=None):
        """``estimate`` and ``reference`` name entries of this report (or a literal threshold)."""
        self.verdicts[name] = {
            "passed": bool(passed), "estimate": estimate, "reference": reference, "tolerance": _num(tolerance),
        }

    @property
    def passed(self):
        return all(v["passed"] for v in self.verdicts.values())

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "probe_name": self.probe_name,
            "parameters": self.parameters,
            "estimates": self.estimates,
            "theoretical_values": self.theoretical_values,
            "verdicts": self.verdicts,
            "trial_count": self.trial_count,
            "seed": self.seed,
            "notes": self.notes,
            "passed": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def write_csv(self, fh):
        """Long format: ``trial,observable,value``."""
        fh.write("trial,observable,value\n")
        for name in sorted(self.observables):
            for i, v in enumerate(np.asarray(self.observables[name], dtype=float)):
                fh.write(f"{i},{name},{float(v)!r}\n")


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _map_trials(fn, n, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n), chunksize=max(1, n // (8 * workers))))
    return [fn(i) for i in range(n)]


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def wilson_interval(k, n, level=0.95):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def difference_norm(a, b):
    """``||a_T - b_T||_r`` for two records on the same node times and the same history."""
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("records must share their node times")
    T = a.horizon
    d = a.states - b.states
    t = a.times - T
    if len(t) < 2:
        return float(np.linalg.norm(d[-1]))
    return float(np.max(piece_weighted_max(t[:-1], t[1:], d[:-1], d[1:], a.r)))


# ---------------------------------------------------------------------------


def decay_probe(spec, xi, T_list, dt, *, tol=1e-3, bound_tol=1e-6, constants=None, scheme="euler",
                blow_up_bound=1e8, require_decay=True):
    """Deterministic decay and boundedness over the horizons ``T_list``.

    With ``require_decay=False`` the decay outcome is reported as the
    estimate ``decay_observed`` (1 or 0) instead of a verdict, for drifts
    whose flow is known to settle away from zero.

    The shift check uses ``||X_t||_r <= max(e^{-rt} ||xi||_r, sup_s e^{-r(t-s)} |X(s)|)
    <= sup_{s<=t} |X(s)| + e^{-rt} ||xi||_r`` at every node.
    """
    T_list = sorted(float(T) for T in T_list)
    rep = ProbeReport("decay", {"T_list": T_list, "dt": dt, "tol": tol, "bound_tol": bound_tol,
                                "scheme": scheme, "r": xi.r, "drift": spec.name, "require_decay": require_decay})
    if constants is not None:
        cond = check_proposition_conditions(constants)
        if not cond.passed:
            msg = "proposition conditions fail: " + "; ".join(cond.failures)
            warnings.warn(msg)
            rep.notes.append(msg)
    r = xi.r
    xi_norm = fading_norm(xi)
    norms, sups = [], []
    worst_shift = -math.inf
    for T in T_list:
        rec = integrate_deterministic(spec, xi, T, dt, scheme=scheme, blow_up_bound=blow_up_bound)
        norms.append(rec.final_norm)
        sups.append(rec.running_sup())
        run = np.maximum.accumulate(np.linalg.norm(rec.states, axis=1))
        gap = rec.segment_norms - (run + np.exp(-r * rec.times) * xi_norm)
        worst_shift = max(worst_shift, float(gap.max()))
        rep.estimate(f"norm_T{T:g}", rec.final_norm)
        rep.estimate(f"sup_T{T:g}", rec.running_sup())
    rep.observables = {"T": T_list, "segment_norm": norms, "running_sup": sups}
    last = f"norm_T{T_list[-1]:g}"
    rep.theory("decay_threshold", tol, "tolerance")
    if require_decay:
        rep.verdict("decay_to_zero", norms[-1] < tol, last, "decay_threshold", tol)
    else:
        rep.estimate("decay_observed", float(norms[-1] < tol))
    if len(T_list) > 1:
        change = abs(sups[-1] - sups[-2])
        rep.estimate("sup_change_last", change)
        rep.theory("boundedness_threshold", bound_tol, "tolerance")
        rep.verdict("uniform_boundedness", change < bound_tol, "sup_change_last", "boundedness_threshold", bound_tol)
    rep.estimate("shift_inequality_worst_gap", worst_shift)
    rep.theory("shift_inequality_slack", 0.0, "sup|X| + exp(-rt)||xi||_r bounds the segment norm")
    rep.verdict("shift_inequality", worst_shift <= SHIFT_TOL, "shift_inequality_worst_gap",
                "shift_inequality_slack", SHIFT_TOL)
    rep.trial_count = 1
    return rep


# ---------------------------------------------------------------------------


def _convergence_trial(i, *, spec, xi, levy, ladder, delta, T, dt, q, seed, scheme, base, bound):
    out = []
    for eps in ladder:
        # same generator state for every eps: common random numbers
        g = rngmod.derive_rng(seed, rngmod.PROBES, i, rngmod.SMALL_JUMPS)
        rec = integrate_truncated(spec, xi, levy, eps, delta, T, dt, g, scheme=scheme, blow_up_bound=bound)
        out.append(difference_norm(rec, base) ** (2 * q))
    return out


def gronwall_bound(levy, eps, r, T, q, p):
    """``e^{-2qrT} p/(p-q) (m2(eps) (e^{2rT} - 1) / (2r))^q``."""
    m2 = small_jump_second_moment(levy, eps)
    return math.exp(-2 * q * r * T) * p / (p - q) * (m2 * math.expm1(2 * r * T) / (2 * r)) ** q


def convergence_probe(spec, xi, levy, eps_ladder, delta, T, dt, q, p, n_trials, seed, *, scheme="euler",
                      workers=1, blow_up_bound=1e8):
    if not 0 < q < p < 1:
        raise ValueError("need 0 < q < p < 1")
    ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps_ladder must be strictly decreasing")
    if not 0 < delta < ladder[-1]:
        raise ValueError("need 0 < delta < min(eps_ladder)")
    rep = ProbeReport("convergence", {"eps_ladder": ladder, "delta": delta, "T": T, "dt": dt, "q": q, "p": p,
                                      "n_trials": n_trials, "r": xi.r, "scheme": scheme, "drift": spec.name},
                      seed=seed, trial_count=n_trials)
    if n_trials < MIN_TRIALS_WARN:
        rep.notes.append(f"warning: only {n_trials} trials")
    base = integrate_deterministic(spec, xi, T, dt, scheme=scheme, blow_up_bound=blow_up_bound)
    fn = partial(_convergence_trial, spec=spec, xi=xi, levy=levy, ladder=ladder, delta=delta, T=T, dt=dt, q=q,
                 seed=seed, scheme=scheme, base=base, bound=blow_up_bound)
    vals = np.array(_map_trials(fn, n_trials, workers), dtype=float).reshape(n_trials, len(ladder))
    means, bounds = [], []
    for j, eps in enumerate(ladder):
        key = f"eps{eps:g}"
        m, se = _mean_se(vals[:, j])
        b = gronwall_bound(levy, eps, xi.r, T, q, p)
        means.append(m)
        bounds.append(b)
        rep.estimate(f"moment_{key}", m, se)
        rep.theory(f"bound_{key}", b, "stochastic Gronwall bound with the small-jump second moment")
        rel = se / m if m > 0 and math.isfinite(se) else 0.0
        rep.verdict(f"below_bound_{key}", m <= b * (1 + 3 * rel), f"moment_{key}", f"bound_{key}", 3 * rel)
        rep.observables[f"moment_{key}"] = vals[:, j]
    keys = [f"eps{eps:g}" for eps in ladder]
    mono = all(b <= a for a, b in zip(means, means[1:]))
    rep.verdict("ladder_nonincreasing", mono, [f"moment_{k}" for k in keys], [f"moment_{k}" for k in keys], 0.0)
    bmono = all(b <= a for a, b in zip(bounds, bounds[1:]))
    rep.verdict("bound_monotone_in_eps", bmono, [f"bound_{k}" for k in keys], [f"bound_{k}" for k in keys], 0.0)
    return rep


# ---------------------------------------------------------------------------


def first_jump_times(levy, eps, n_samples, rng):
    """First arrivals of ``|z| > eps`` drawn through the large-jump generator."""
    rate = mass_above(levy, eps)
    if rate == 0:
        raise ValueError("no jumps above eps: the first jump time is infinite")
    horizon = 60.0 / rate
    out = np.empty(n_samples)
    for i in range(n_samples):
        times, _ = large_jump_arrays(levy, eps, horizon, rng)
        out[i] = times[0] if len(times) else math.inf
    return out


def first_jump_probe(levy, eps, n_samples, rng, *, alpha=0.01):
    """KS test of the first large-jump time against ``Exp(nu(|z| > eps))``.

    ``rng`` is a Generator or an integer seed.
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = rngmod.derive_rng(seed, rngmod.PROBES, 0, rngmod.LARGE_JUMPS)
    rate = mass_above(levy, eps)
    tau = first_jump_times(levy, eps, n_samples, rng)
    rep = ProbeReport("first_jump", {"eps": eps, "n_samples": n_samples, "alpha": alpha}, seed=seed,
                      trial_count=n_samples)
    ks = stats.kstest(tau, "expon", args=(0.0, 1.0 / rate))
    rep.estimate("ks_statistic", ks.statistic)
    rep.estimate("ks_pvalue", ks.pvalue)
    rep.theory("rate", rate, "nu(|z| > eps)")
    rep.theory("alpha", alpha, "significance level")
    rep.verdict("ks_exponential", ks.pvalue > alpha, "ks_pvalue", "alpha", alpha)
    m, se = _mean_se(tau * rate)
    rep.estimate("scaled_mean", m, se)
    rep.theory("unit_mean", 1.0, "mean of Exp(1)")
    tol = 3 / math.sqrt(n_samples)
    rep.verdict("scaled_mean", abs(m - 1) <= tol, "scaled_mean", "unit_mean", tol)
    rep.estimate("min_sample", tau.min())
    rep.theory("zero", 0.0, "arrival times are positive")
    rep.verdict("positive_finite", bool(np.all(tau > 0) and np.all(np.isfinite(tau))), "min_sample", "zero")
    rep.observables = {"tau": tau}
    return rep


# ---------------------------------------------------------------------------


def _full_norm_trial(i, *, spec, xi, levy, delta, T, dt, seed, scheme, bound, sample_times=None):
    small, large = rngmod.trial_streams(seed, rngmod.PROBES, i)
    rec = integrate_full(spec, xi, levy, delta, T, dt, (small, large), scheme=scheme, blow_up_bound=bound)
    if sample_times is None:
        return rec.final_norm
    idx = np.searchsorted(rec.times, np.asarray(sample_times) + 1e-12, side="right") - 1
    return rec.segment_norms[idx]


def _truncated_gap_trial(i, *, spec, xi, levy, eps, delta, T, dt, seed, scheme, bound, base):
    g = rngmod.derive_rng(seed, rngmod.PROBES, i, rngmod.SMALL_JUMPS)
    rec = integrate_truncated(spec, xi, levy, eps, delta, T, dt, g, scheme=scheme, blow_up_bound=bound)
    return difference_norm(rec, base)


def irreducibility_probe(spec, xi_list, levy, kappa_list, T, dt, delta, n_trials, seed, *, eps_grid=(1.0, 0.5, 0.25, 0.1),
                         bound_trials=None, scheme="euler", workers=1, blow_up_bound=1e8, min_trials=1000):
    """Estimate ``P(||x_T||_r <= kappa)`` with Wilson intervals for each initial history and radius.

    All radii use the same trajectories, so the estimates are exactly monotone
    in ``kappa``.  The conservative proof-side bound is evaluated on the grid
    ``eps_grid`` with the measured closeness probability (from
    ``bound_trials`` truncated paths) and with the fixed one half.
    """
    if n_trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    kappas = sorted(float(k) for k in kappa_list)
    eps_grid = [float(e) for e in eps_grid if e > delta]
    bound_trials = min(n_trials, 1000) if bound_trials is None else bound_trials
    rep = ProbeReport("irreducibility", {"kappa_list": kappas, "T": T, "dt": dt, "delta": delta,
                                         "n_trials": n_trials, "bound_trials": bound_trials, "eps_grid": eps_grid,
                                         "r": xi_list[0].r, "scheme": scheme, "drift": spec.name},
                      seed=seed, trial_count=n_trials)
    for s, xi in enumerate(xi_list):
        tag = f"xi{s}"
        fn = partial(_full_norm_trial, spec=spec, xi=xi, levy=levy, delta=delta, T=T, dt=dt, seed=seed,
                     scheme=scheme, bound=blow_up_bound)
        norms = np.array(_map_trials(fn, n_trials, workers), dtype=float)
        rep.observables[f"{tag}_final_norm"] = norms
        base = integrate_deterministic(spec, xi, T, dt, scheme=scheme, blow_up_bound=blow_up_bound)
        rep.estimate(f"{tag}_deterministic_norm", base.final_norm)
        close = {}
        for eps in eps_grid:
            g = partial(_truncated_gap_trial, spec=spec, xi=xi, levy=levy, eps=eps, delta=delta, T=T, dt=dt,
                        seed=seed, scheme=scheme, bound=blow_up_bound, base=base)
            close[eps] = np.array(_map_trials(g, bound_trials, workers), dtype=float)
        prev = -1.0
        mono = True
        for kappa in kappas:
            key = f"{tag}_kappa{kappa:g}"
            k = int(np.sum(norms <= kappa))
            p_hat = k / n_trials
            lo, hi = wilson_interval(k, n_trials)
            rep.estimate(f"p_{key}", p_hat, math.sqrt(p_hat * (1 - p_hat) / n_trials))
            rep.estimate(f"wilson_low_{key}", lo)
            rep.estimate(f"wilson_high_{key}", hi)
            rep.theory("zero", 0.0, "positivity threshold")
            rep.verdict(f"positive_{key}", lo > 0, f"wilson_low_{key}", "zero", 0.0)
            mono = mono and p_hat >= prev
            prev = p_hat
            best_measured, best_half, best_eps = 0.0, 0.0, None
            for eps in eps_grid:
                frac = float(np.mean(close[eps] <= kappa / 4))
                b = irreducibility_lower_bound(levy, eps, T, half=frac)
                if b > best_measured or best_eps is None:
                    best_measured, best_eps = b, eps
                best_half = max(best_half, irreducibility_lower_bound(levy, eps, T))
            rep.theory(f"proof_bound_measured_{key}", best_measured,
                       f"P(||X^eps_T - X_T||_r <= kappa/4) * exp(-nu(|z|>eps) T) at eps = {best_eps:g}")
            rep.theory(f"proof_bound_half_{key}", best_half, "0.5 * exp(-nu(|z|>eps) T), best eps on the grid")
            if kappa < base.final_norm:
                rep.notes.append(f"{key}: kappa below the deterministic norm {base.final_norm:.6g}; reported only")
        names = [f"p_{tag}_kappa{k:g}" for k in kappas]
        rep.verdict(f"monotone_in_kappa_{tag}", mono, names, names, 0.0)
    return rep


# ---------------------------------------------------------------------------


def resolvent_estimate(spec, xi, levy, kappa, lam, T_grid, dt, delta, n_trials, seed, *, scheme="euler", workers=1,
                       blow_up_bound=1e8):
    """Trapezoid estimate of ``lam * int_0^inf e^{-lam t} P(||x_t||_r <= kappa) dt`` on ``T_grid``.

    The part beyond ``T_max`` is dropped; it is at most ``e^{-lam T_max}``.
    Returns ``(estimate, report)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    tg = np.asarray(sorted(float(t) for t in T_grid))
    if tg[0] != 0.0:
        tg = np.concatenate([[0.0], tg])
    T_max = float(tg[-1])
    fn = partial(_full_norm_trial, spec=spec, xi=xi, levy=levy, delta=delta, T=T_max, dt=dt, seed=seed,
                 scheme=scheme, bound=blow_up_bound, sample_times=tg)
    norms = np.array(_map_trials(fn, n_trials, workers), dtype=float).reshape(n_trials, len(tg))
    hits = (norms <= kappa).astype(float)
    dens = lam * np.exp(-lam * tg)
    w = np.zeros(len(tg))
    dt_ = np.diff(tg)
    w[:-1] += 0.5 * dt_ * dens[:-1]
    w[1:] += 0.5 * dt_ * dens[1:]
    per_trial = hits @ w
    est, se = _mean_se(per_trial)
    lo, hi = est - 1.96 * se, est + 1.96 * se
    rep = ProbeReport("resolvent", {"kappa": kappa, "lambda": lam, "T_grid": tg.tolist(), "dt": dt, "delta": delta,
                                    "n_trials": n_trials, "scheme": scheme, "drift": spec.name},
                      seed=seed, trial_count=n_trials)
    rep.estimate("resolvent", est, se)
    rep.estimate("ci_low", lo)
    rep.estimate("ci_high", hi)
    rep.theory("truncation_error_bound", math.exp(-lam * T_max), "mass of lam e^{-lam t} beyond T_max")
    rep.theory("zero", 0.0, "positivity threshold")
    rep.verdict("positive", lo > 0, "ci_low", "zero", 0.0)
    rep.observables = {"resolvent_contribution": per_trial}
    return est, rep
