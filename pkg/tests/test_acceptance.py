"""Exit criteria, each at its stated tolerance.  One PASS/FAIL line per criterion
is printed in the terminal summary."""
import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE_LINES
from levysdde import AtomsLevy, DelayMeasure, HistorySegment, RadialLevy
from levysdde import cli
from levysdde import conditions as C
from levysdde import probes as P
from levysdde.config import load_config
from levysdde.dynamics import cubic_example, integrate_deterministic, integrate_full, integrate_truncated
from levysdde.dynamics import largest_jump_before
from levysdde.memory import Atom, Exponential, exp_moment, fading_norm
from levysdde.rng import derive_rng

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

PRESET = Path(__file__).resolve().parents[1] / "scenarios" / "cubic_atom.cfg"


def record(number, ok, detail, seconds=None, limit=None):
    timing = ""
    if seconds is not None:
        timing = f" [{seconds:.1f}s / {limit}s]" if limit is not None else f" [{seconds:.1f}s]"
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}{timing}")


@pytest.fixture(scope="module")
def preset():
    return load_config(PRESET)


def test_c1_norm_and_moment_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_norm = 0.0
    for _ in range(200):
        r = rng.uniform(0.2, 3.0)
        seg = C.random_segment(rng, r, 5.0, int(rng.integers(1, 3)))
        th = np.union1d(np.linspace(seg.theta_min, 0.0, 100_000), seg.times)
        ref = max((np.linalg.norm(seg(th), axis=1) * np.exp(r * th)).max(), float(np.linalg.norm(seg.tail)))
        worst_norm = max(worst_norm, abs(fading_norm(seg) - ref))
    worst_moment = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(k))
        comps = []
        for wi in w:
            if rng.random() < 0.5:
                comps.append((float(wi), Atom(-rng.uniform(0.0, 5.0))))
            else:
                comps.append((float(wi), Exponential(rng.uniform(3.0, 20.0))))
        mu = DelayMeasure(comps)
        kappa = rng.uniform(0.0, 2.0)
        ref = 0.0
        for wi, c in comps:
            if isinstance(c, Atom):
                ref += wi * math.exp(-kappa * c.theta0)
            else:
                lam = c.lam
                ref += wi * integrate.quad(lambda t: lam * math.exp((lam - kappa) * t), -np.inf, 0,
                                           epsabs=1e-14, epsrel=1e-13)[0]
        worst_moment = max(worst_moment, abs(exp_moment(mu, kappa) - ref))
    secs = time.perf_counter() - start
    ok = worst_norm <= 1e-9 and worst_moment <= 1e-10 and secs < 30
    record(1, ok, f"max norm error {worst_norm:.2e}, max moment error {worst_moment:.2e}", secs, 30)
    assert ok


def test_c2_first_jump_law():
    start = time.perf_counter()
    models = {
        "two_atoms": (AtomsLevy.from_positive_half([1.0], [0.7]), 0.5),
        "radial": (RadialLevy(1.0, 1.5, R=10.0), 0.1),
    }
    passes = {}
    for name, (levy, eps) in models.items():
        passes[name] = sum(P.first_jump_probe(levy, eps, 10_000, seed).verdicts["ks_exponential"]["passed"]
                           for seed in range(20))
    secs = time.perf_counter() - start
    ok = all(v >= 19 for v in passes.values()) and secs < 60
    record(2, ok, ", ".join(f"{k} {v}/20 seeds" for k, v in passes.items()), secs, 60)
    assert ok


def test_c3_interlacing_identity():
    start = time.perf_counter()
    mu = DelayMeasure.atom(-0.3)
    f = cubic_example(mu)
    levy = AtomsLevy.from_positive_half([0.2, 1.5], [3.0, 0.1])
    xi = HistorySegment.constant(0.5, 1.0)
    eps, T = 0.5, 2.0
    agree = runs = trial = 0
    while runs < 100:
        full = integrate_full(f, xi, levy, 1e-3, T, 1e-3, 7, trial=trial)
        if largest_jump_before(full) <= eps:
            trunc = integrate_truncated(f, xi, levy, eps, 1e-3, T, 1e-3, derive_rng(7, 1, trial, 0))
            runs += 1
            agree += (np.array_equal(full.times, trunc.times) and np.array_equal(full.states, trunc.states)
                      and np.array_equal(full.segment_norms, trunc.segment_norms))
        trial += 1
    secs = time.perf_counter() - start
    ok = agree == runs and secs < 60
    record(3, ok, f"{agree}/{runs} conditioned runs identical ({trial} seeded runs drawn)", secs, 60)
    assert ok


def test_c4_gronwall_bound():
    start = time.perf_counter()
    mu = DelayMeasure.atom(-0.3)
    levy = AtomsLevy.from_positive_half([0.2], [3.0])
    rep = P.convergence_probe(cubic_example(mu), HistorySegment.constant(0.5, 1.0), levy, [0.5, 0.25, 0.1], 1e-3,
                              1.0, 1e-3, 0.25, 0.5, 10_000, 2024)
    secs = time.perf_counter() - start
    ok = rep.passed and secs < 300
    est = ", ".join(f"{k}={v['value']:.4f}" for k, v in rep.estimates.items())
    record(4, ok, f"{est}; bound(0.5)={rep.theoretical_values['bound_eps0.5']['value']:.4f}", secs, 300)
    assert ok


def test_c5_proposition_conditions(preset):
    start = time.perf_counter()
    c = preset.build_constants()
    rep = C.check_proposition_conditions(c)
    # a point mass integrates to its value: e^{0.6}, in extended precision
    m = float(mpmath.exp(mpmath.mpf("0.6")))
    flipped = C.check_proposition_conditions(C.example_constants(c.mu1, r=2.0))
    secs = time.perf_counter() - start
    ok = (rep.passed and rep.slack1 == 1.0 and abs(rep.slack2 - (2 - math.exp(0.6))) < 1e-14
          and abs(rep.mu1_moment_2r - m) < 1e-14 and not flipped.passed and secs < 1)
    record(5, ok, f"slack1={rep.slack1:g}, slack2={rep.slack2:.6f}, r=2 fails: {not flipped.passed}", secs, 1)
    assert ok


def _dissipativity(constants, n, seed):
    f = cubic_example(constants.mu1)
    return C.sample_dissipativity(f, constants, C.ball_sampler(1.0, 5.0), n, np.random.default_rng(seed))


def test_c6_dissipativity(preset):
    start = time.perf_counter()
    c = preset.build_constants()
    main = _dissipativity(c, 10_000, 6)
    k1 = _dissipativity(C.DissipativityConstants(**{**vars(c), "K1_bar": 0.0}), 1000, 7)
    secs = time.perf_counter() - start
    ok = main.violations == 0 and k1.violations >= 1 and secs < 120
    record(6, ok, f"{main.violations} violations in 10^4 pairs; K1_bar=0 control {k1.violations}/1000", secs, 120)
    assert ok


@pytest.mark.xfail(strict=True, reason="lambda2_bar enters the right side with a minus sign; "
                                        "zeroing it only enlarges the right side, so no violation can occur")
def test_c6_lambda2_zero_control(preset):
    c = preset.build_constants()
    ctl = _dissipativity(C.DissipativityConstants(**{**vars(c), "lambda2_bar": 0.0}), 1000, 8)
    record("6 (lambda2_bar=0 control)", ctl.violations >= 1,
           f"{ctl.violations}/1000 violations; expected failure, see decisions ledger")
    assert ctl.violations >= 1


def test_c7_boundedness(preset):
    start = time.perf_counter()
    f = preset.build_drift()
    changes = {}
    for label, xi in [("xi=0.5", preset.build_initial()), ("xi=0", HistorySegment.constant(0.0, 1.0)),
                      ("xi=2", HistorySegment.constant(2.0, 1.0))]:
        rec = integrate_deterministic(f, xi, 100.0, preset.integrator["dt"])
        changes[label] = abs(rec.running_sup(100.0) - rec.running_sup(50.0))
    secs = time.perf_counter() - start
    ok = all(v < 1e-6 for v in changes.values()) and secs < 30
    record(7, ok, ", ".join(f"{k}: {v:.1e}" for k, v in changes.items()), secs, 30)
    assert ok


def test_c8_irreducibility(preset):
    start = time.perf_counter()
    kappas = [0.5, 0.75, 1.0]
    rep = P.irreducibility_probe(preset.build_drift(), [preset.build_initial()], preset.build_levy(), kappas, 30.0,
                                 preset.integrator["dt"], preset.integrator["delta"], 10_000, 88, bound_trials=200)
    secs = time.perf_counter() - start
    lo = rep.estimates["wilson_low_xi0_kappa1"]["value"]
    ok = lo > 0 and rep.verdicts["monotone_in_kappa_xi0"]["passed"] and secs < 600
    p = [rep.estimates[f"p_xi0_kappa{k:g}"]["value"] for k in kappas]
    record(8, ok, f"P(kappa=1)={p[-1]:.4f}, Wilson low {lo:.4f}, monotone {p}", secs, 600)
    assert ok


def test_c9_reproducible_reports(tmp_path):
    start = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["run", str(PRESET), "--trials", "1000", "--out", str(d)]) == 0
    files = sorted(p.name for p in a.iterdir())
    same = [n for n in files if (a / n).read_bytes() == (b / n).read_bytes()]
    secs = time.perf_counter() - start
    ok = len(files) == 14 and len(same) == len(files)
    record(9, ok, f"{len(same)}/{len(files)} report files bitwise identical", secs)
    assert ok
