"""Command line entry point: ``levysdde check`` and ``levysdde run``."""
import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import conditions as cond
from . import probes as pr
from . import rng as rngmod
from .config import PROBE_NAMES, TRIAL_KEYS, load_config
from .errors import ConfigError, LevySDDEError

OUT_ENV = "LEVYSDDE_OUT"
EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def resolve_out_dir(cfg, flag=None):
    """``--out`` wins over ``$LEVYSDDE_OUT``, which wins over ``output_dir``."""
    return Path(flag or os.environ.get(OUT_ENV) or cfg.output_dir)


def check_report(cfg):
    """Proposition conditions and sampled properties of ``H`` as a JSON-ready dict."""
    c = cfg.build_constants()
    rep = cond.check_proposition_conditions(c).to_dict()
    rep["H_checks"] = cond.check_H(c, 10000, rngmod.derive_rng(cfg.seed, rngmod.CONDITIONS, 0, 0))
    rep["passed"] = rep["passed"] and rep["H_checks"]["passed"]
    rep["schema_version"] = pr.SCHEMA_VERSION
    return rep


def run_probe(cfg, name, trials=None, workers=1):
    """Run one configured probe and return its :class:`ProbeReport`."""
    t = cfg.probes[name]
    it = cfg.integrator
    dt, delta, scheme, bound = it["dt"], it["delta"], it["scheme"], it["blow_up_bound"]
    seed = cfg.seed
    spec = cfg.build_drift()
    xi = cfg.build_initial()
    n = trials if trials is not None else t.get(TRIAL_KEYS.get(name, "trials"))
    if name == "decay":
        constants = cfg.build_constants() if cfg.conditions is not None else None
        return pr.decay_probe(spec, xi, t["T_list"], dt, tol=t["tol"], bound_tol=t["bound_tol"], constants=constants,
                              scheme=scheme, blow_up_bound=bound, require_decay=t["require_decay"])
    if name == "convergence":
        return pr.convergence_probe(spec, xi, cfg.build_levy(), t["eps_ladder"], delta, t["T"], dt, t["q"], t["p"], n,
                                    seed, scheme=scheme, workers=workers, blow_up_bound=bound)
    if name == "first_jump":
        return pr.first_jump_probe(cfg.build_levy(), t["eps"], n, seed)
    if name == "irreducibility":
        xis = [xi] + [cfg.build_initial(d) for d in t.get("initial", [])]
        kappa = t["kappa"] if isinstance(t["kappa"], list) else [t["kappa"]]
        return pr.irreducibility_probe(spec, xis, cfg.build_levy(), kappa, t["T"], dt, delta, n, seed,
                                       eps_grid=t["eps_grid"], bound_trials=t.get("bound_trials"), scheme=scheme,
                                       workers=workers, blow_up_bound=bound, min_trials=min(1000, n))
    if name == "resolvent":
        _, rep = pr.resolvent_estimate(spec, xi, cfg.build_levy(), t["kappa"], t["lambda"], t["T_grid"], dt, delta, n,
                                       seed, scheme=scheme, workers=workers, blow_up_bound=bound)
        return rep
    if name == "dissipativity":
        c = cfg.build_constants()
        g = rngmod.derive_rng(seed, rngmod.CONDITIONS, 0, 1)
        v = cond.sample_dissipativity(spec, c, cond.ball_sampler(cfg.r, t["radius"]), n, g, tol=t["tolerance"])
        rep = pr.ProbeReport("dissipativity", {"radius": t["radius"], "tolerance": t["tolerance"], "trials": n},
                             seed=seed, trial_count=n)
        rep.estimate("violations", v.violations)
        rep.estimate("worst_margin", v.worst_margin)
        rep.theory("zero", 0.0, "no pair may violate the inequality")
        rep.verdict("no_violations", v.passed, "violations", "zero", t["tolerance"])
        rep.notes.extend(json.dumps(w, sort_keys=True) for w in v.witnesses)
        return rep
    if name == "lipschitz":
        g = rngmod.derive_rng(seed, rngmod.CONDITIONS, 0, 2)
        prof = cond.lipschitz_profile(spec, t["radii"], n, g, r=cfg.r)
        rep = pr.ProbeReport("lipschitz", {"radii": sorted(prof), "trials": n}, seed=seed, trial_count=n)
        for k, v in prof.items():
            rep.estimate(f"c_k{k:g}", v)
        names = [f"c_k{k:g}" for k in prof]
        vals = list(prof.values())
        rep.verdict("nondecreasing_in_k", all(b >= a for a, b in zip(vals, vals[1:])), names, names, 0.0)
        return rep
    raise KeyError(name)


def write_report(rep, out_dir, name=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or rep.probe_name
    (out_dir / f"{name}_report.json").write_text(rep.to_json())
    with open(out_dir / f"{name}_trials.csv", "w") as fh:
        rep.write_csv(fh)


def run_scenario(cfg, probe_names, *, out_dir, trials=None, workers=1, stream=sys.stdout):
    """Run the probes in order, write their artifacts, print a summary; returns the exit code."""
    rows = []
    code = EXIT_OK
    for name in probe_names:
        if name not in cfg.probes:
            print(f"error: probe {name!r} has no [probes.{name}] table in the config", file=sys.stderr)
            return EXIT_ERROR
    for name in probe_names:
        start = time.perf_counter()
        try:
            rep = run_probe(cfg, name, trials=trials, workers=workers)
        except (LevySDDEError, ValueError) as exc:
            print(f"error in probe {name}: {exc}", file=sys.stderr)
            rows.append((name, "ERROR", time.perf_counter() - start))
            code = EXIT_ERROR
            break
        write_report(rep, out_dir)
        rows.append((name, "pass" if rep.passed else "FAIL", time.perf_counter() - start))
        for vname, v in rep.verdicts.items():
            rows.append((f"  {vname}", "pass" if v["passed"] else "FAIL", None))
        if not rep.passed and code == EXIT_OK:
            code = EXIT_FAIL
    width = max(len(r[0]) for r in rows) if rows else 10
    for label, status, secs in rows:
        tail = f"  {secs:8.2f}s" if secs is not None else ""
        print(f"{label:<{width}}  {status}{tail}", file=stream)
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="levysdde", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario file (TOML)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and output_dir)")
    sub.add_parser("check", parents=[common], help="evaluate the proposition conditions only")
    run = sub.add_parser("run", parents=[common], help="run probes")
    run.add_argument("--probe", nargs="+", choices=PROBE_NAMES, help="probes to run (default: all configured)")
    run.add_argument("--trials", type=int, help="override every trial count")
    run.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo trials")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = resolve_out_dir(cfg, args.out)
    if args.command == "check":
        try:
            rep = check_report(cfg)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "conditions_report.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
        print(f"slack1 = {rep['slack1']!r}")
        print(f"slack2 = {rep['slack2']!r}")
        print(f"mu1 in M_{rep['mu1_membership_kappa']:g}: {rep['mu1_in_class']}")
        print(f"mu2 in M_{2 * cfg.r:g}: {rep['mu2_in_class']}")
        for f in rep["failures"]:
            print(f"FAIL: {f}")
        print("conditions:", "pass" if rep["passed"] else "FAIL")
        return EXIT_OK if rep["passed"] else EXIT_FAIL
    names = args.probe or list(cfg.probes)
    if not names:
        print("error: no probes configured", file=sys.stderr)
        return EXIT_ERROR
    if args.trials is not None and args.trials < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_ERROR
    return run_scenario(cfg, names, out_dir=out_dir, trials=args.trials, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
