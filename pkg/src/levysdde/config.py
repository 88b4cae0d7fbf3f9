"""Scenario files.

A scenario is a TOML document; the accepted keys are listed in the README.
``load_config`` fills defaults and collects every problem before raising,
and ``dump_config`` writes a file that loads back to an equal config.
"""
import math
import sys
from dataclasses import asdict, dataclass, field

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .conditions import H_PRESETS, DissipativityConstants
from .dynamics import cubic_example, linear, polynomial, zero
from .errors import ConfigError
from .levy import levy_from_dict
from .memory import DelayMeasure, HistorySegment

DRIFT_PRESETS = ("zero", "linear", "cubic_example", "custom")
SCHEMES = ("euler", "heun")
PROBE_NAMES = ("decay", "convergence", "first_jump", "irreducibility", "resolvent", "dissipativity", "lipschitz")
IRREDUCIBILITY_EPS_GRID = [1.0, 0.5, 0.25, 0.1]

# per probe: required keys and defaults
PROBE_KEYS = {
    "decay": ({"T_list"}, {"tol": 1e-3, "bound_tol": 1e-6, "require_decay": True}),
    "convergence": ({"eps_ladder", "T", "q", "p"}, {"trials": 1000}),
    "first_jump": ({"eps"}, {"samples": 10000}),
    "irreducibility": ({"kappa", "T"}, {"trials": 1000, "eps_grid": IRREDUCIBILITY_EPS_GRID}),
    "resolvent": ({"kappa", "lambda", "T_grid"}, {"trials": 1000}),
    "dissipativity": (set(), {"trials": 10000, "radius": 5.0, "tolerance": 1e-9}),
    "lipschitz": (set(), {"trials": 1000, "radii": [2.0, 4.0]}),
}
TRIAL_KEYS = {"first_jump": "samples"}


@dataclass
class ScenarioConfig:
    seed: int
    r: float
    drift: dict
    levy: dict
    mu1: list
    initial: dict
    integrator: dict
    probes: dict = field(default_factory=dict)
    mu2: list = None
    conditions: dict = None
    output_dir: str = "runs"

    # builders -------------------------------------------------------------

    def measure(self, name):
        if name == "mu1":
            return DelayMeasure.from_list(self.mu1)
        if name == "mu2":
            return DelayMeasure.from_list(self.mu2 if self.mu2 is not None else self.mu1)
        raise KeyError(name)

    def build_levy(self):
        return levy_from_dict(self.levy)

    def build_drift(self):
        d = self.drift
        p = d["preset"]
        if p == "zero":
            return zero()
        if p == "linear":
            return linear(d.get("rate", 1.0))
        if p == "cubic_example":
            return cubic_example(self.measure(d.get("measure", "mu1")))
        return polynomial(d["local"], [(t["coeffs"], self.measure(t.get("measure", "mu1"))) for t in d.get("delay", [])])

    def build_initial(self, table=None):
        d = self.initial if table is None else table
        kind = d["kind"]
        if kind == "constant":
            return HistorySegment.constant(d["value"], self.r, d.get("theta_min", -5.0))
        if kind == "pure_tail":
            return HistorySegment.pure_tail(d["tail"], self.r)
        return HistorySegment.from_nodes(d["times"], d["values"], self.r)

    def build_constants(self):
        c = self.conditions
        if c is None:
            raise ConfigError("no [conditions] table")
        return DissipativityConstants(
            lambda1_bar=c["lambda1_bar"], lambda2_bar=c["lambda2_bar"], K1_bar=c["K1_bar"], K2_bar=c["K2_bar"],
            q1=c["q1"], q2=c["q2"], H=H_PRESETS[c["H"]], mu1=self.measure("mu1"), mu2=self.measure("mu2"),
            r=self.r, K=c["K"],
        )

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


# ---------------------------------------------------------------------------


def _num(problems, where, v, *, positive=False, nonneg=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        problems.append(f"{where}: expected {'an integer' if integer else 'a number'}, got {v!r}")
        return None
    if not math.isfinite(v):
        problems.append(f"{where}: must be finite")
    elif positive and not v > 0:
        problems.append(f"{where}: must be positive")
    elif nonneg and v < 0:
        problems.append(f"{where}: must be nonnegative")
    return v


def _numlist(problems, where, v, **kw):
    if not isinstance(v, list) or not v:
        problems.append(f"{where}: expected a nonempty list")
        return []
    return [_num(problems, f"{where}[{i}]", x, **kw) for i, x in enumerate(v)]


def _table(problems, raw, key, required=True):
    v = raw.get(key)
    if v is None:
        if required:
            problems.append(f"missing [{key}] table")
        return None
    if not isinstance(v, dict):
        problems.append(f"{key}: expected a table")
        return None
    return dict(v)


def _check_measure(problems, name, items):
    if not isinstance(items, list) or not items:
        problems.append(f"{name}: expected an array of tables [[{name}]]")
        return
    for i, it in enumerate(items):
        if not isinstance(it, dict):
            problems.append(f"{name}[{i}]: expected a table")
            continue
        _num(problems, f"{name}[{i}].weight", it.get("weight"), positive=True)
        kind = it.get("kind")
        if kind == "atom":
            th = _num(problems, f"{name}[{i}].theta0", it.get("theta0"))
            if th is not None and th > 0:
                problems.append(f"{name}[{i}].theta0: must be <= 0")
        elif kind == "exp":
            _num(problems, f"{name}[{i}].lambda", it.get("lambda"), positive=True)
        else:
            problems.append(f"{name}[{i}].kind: expected 'atom' or 'exp', got {kind!r}")
    try:
        DelayMeasure.from_list(items)
    except (ValueError, KeyError, TypeError) as exc:
        msg = str(exc)
        if "not normalized" in msg:
            problems.append(f"{name}: {msg}")


def validate(raw):
    """Normalize a parsed document into a :class:`ScenarioConfig` or raise with every problem."""
    problems = []
    known = {"seed", "r", "output_dir", "drift", "levy", "mu1", "mu2", "initial", "integrator", "conditions", "probes"}
    for k in raw:
        if k not in known:
            problems.append(f"unknown key {k!r}")
    seed = _num(problems, "seed", raw.get("seed", 0), integer=True, nonneg=True)
    r = None
    if "r" in raw:
        r = _num(problems, "r", raw["r"], positive=True)
    else:
        problems.append("missing r")
    out = raw.get("output_dir", "runs")
    if not isinstance(out, str):
        problems.append("output_dir: expected a string")

    mu1 = raw.get("mu1")
    if mu1 is None:
        problems.append("missing [[mu1]]")
    else:
        _check_measure(problems, "mu1", mu1)
    mu2 = raw.get("mu2")
    if mu2 is not None:
        _check_measure(problems, "mu2", mu2)

    drift = _table(problems, raw, "drift")
    if drift is not None:
        p = drift.get("preset")
        if p not in DRIFT_PRESETS:
            problems.append(f"drift.preset: unknown preset {p!r} (known: {', '.join(DRIFT_PRESETS)})")
        elif p == "linear":
            drift.setdefault("rate", 1.0)
            _num(problems, "drift.rate", drift["rate"])
        elif p == "cubic_example":
            drift.setdefault("measure", "mu1")
        elif p == "custom":
            _numlist(problems, "drift.local", drift.get("local"))
            for i, t in enumerate(drift.get("delay", [])):
                _numlist(problems, f"drift.delay[{i}].coeffs", t.get("coeffs"))
                t.setdefault("measure", "mu1")
        if p in ("cubic_example", "custom"):
            refs = [drift.get("measure")] if p == "cubic_example" else [t.get("measure") for t in drift.get("delay", [])]
            for m in refs:
                if m not in ("mu1", "mu2"):
                    problems.append(f"drift: unknown measure reference {m!r}")

    levy = _table(problems, raw, "levy")
    if levy is not None:
        try:
            levy_from_dict(levy)
        except (ValueError, KeyError, TypeError) as exc:
            problems.append(f"levy: {exc}")

    initial = _table(problems, raw, "initial")
    if initial is not None:
        kind = initial.get("kind")
        if kind == "constant":
            _num(problems, "initial.value", initial.get("value"))
            initial.setdefault("theta_min", -5.0)
        elif kind == "pure_tail":
            _num(problems, "initial.tail", initial.get("tail"))
        elif kind == "piecewise":
            t = _numlist(problems, "initial.times", initial.get("times"))
            v = _numlist(problems, "initial.values", initial.get("values"))
            if len(t) != len(v):
                problems.append("initial: times and values differ in length")
            elif t and t[-1] != 0:
                problems.append("initial.times: last node must be 0")
        else:
            problems.append(f"initial.kind: expected constant, piecewise or pure_tail, got {kind!r}")

    probes = raw.get("probes", {})
    if not isinstance(probes, dict):
        problems.append("probes: expected a table")
        probes = {}
    probes = {k: dict(v) for k, v in probes.items() if isinstance(v, dict)}
    for name, table in probes.items():
        if name not in PROBE_KEYS:
            problems.append(f"probes.{name}: unknown probe (known: {', '.join(PROBE_NAMES)})")
            continue
        req, defaults = PROBE_KEYS[name]
        for k in sorted(req - table.keys()):
            problems.append(f"probes.{name}: missing {k}")
        for k, v in defaults.items():
            table.setdefault(k, list(v) if isinstance(v, list) else v)
    _check_probes(problems, probes)

    integrator = _table(problems, raw, "integrator", required=False) or {}
    integrator.setdefault("dt", 1e-3)
    integrator.setdefault("scheme", "euler")
    integrator.setdefault("blow_up_bound", 1e8)
    _num(problems, "integrator.dt", integrator["dt"], positive=True)
    _num(problems, "integrator.blow_up_bound", integrator["blow_up_bound"], positive=True)
    if integrator["scheme"] not in SCHEMES:
        problems.append(f"integrator.scheme: expected one of {SCHEMES}")
    eps_used = _eps_in_use(probes)
    if "delta" not in integrator:
        integrator["delta"] = min(eps_used) / 100
    d = _num(problems, "integrator.delta", integrator["delta"], positive=True)
    if d is not None:
        for name, eps in _eps_sources(probes):
            if isinstance(eps, (int, float)) and not d < eps <= 1:
                problems.append(f"{name}: need delta < eps <= 1 (delta = {d:g}, eps = {eps!r})")

    conditions = _table(problems, raw, "conditions", required=False)
    if conditions is not None:
        conditions.setdefault("H", "example_H")
        for k in ("lambda1_bar", "lambda2_bar", "K1_bar", "K2_bar"):
            _num(problems, f"conditions.{k}", conditions.get(k), nonneg=True)
        for k in ("q1", "q2", "K"):
            _num(problems, f"conditions.{k}", conditions.get(k), positive=True)
        if conditions["H"] not in H_PRESETS:
            problems.append(f"conditions.H: unknown preset {conditions['H']!r}")

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(seed=seed, r=float(r), drift=drift, levy=levy, mu1=mu1, mu2=mu2, initial=initial,
                          integrator=integrator, probes=probes, conditions=conditions, output_dir=out)


def _eps_sources(probes):
    out = []
    if "convergence" in probes:
        out += [("probes.convergence.eps_ladder", e) for e in probes["convergence"].get("eps_ladder", [])]
    if "first_jump" in probes:
        out.append(("probes.first_jump.eps", probes["first_jump"].get("eps")))
    if "irreducibility" in probes:
        out += [("probes.irreducibility.eps_grid", e) for e in probes["irreducibility"].get("eps_grid", [])]
    return out


def _eps_in_use(probes):
    vals = [e for _, e in _eps_sources(probes) if isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0]
    return vals + [1.0]


def _check_probes(problems, probes):
    for name, t in probes.items():
        where = f"probes.{name}"
        for k in ("trials", "samples"):
            if k in t:
                _num(problems, f"{where}.{k}", t[k], integer=True, positive=True)
        for k in ("T", "q", "p", "eps", "lambda", "radius", "tol", "bound_tol", "tolerance"):
            if k in t:
                _num(problems, f"{where}.{k}", t[k], positive=True)
        for k in ("T_list", "eps_ladder", "kappa", "T_grid", "radii", "eps_grid"):
            if k in t:
                if k == "kappa" and not isinstance(t[k], list):
                    _num(problems, f"{where}.kappa", t[k], positive=True)
                else:
                    _numlist(problems, f"{where}.{k}", t[k], nonneg=(k == "T_grid"), positive=(k != "T_grid"))
        if name == "decay" and not isinstance(t.get("require_decay"), bool):
            problems.append(f"{where}.require_decay: expected true or false")
        if name == "convergence" and all(isinstance(t.get(k), (int, float)) for k in ("q", "p")):
            if not 0 < t["q"] < t["p"] < 1:
                problems.append(f"{where}: need 0 < q < p < 1")
        if name == "convergence" and isinstance(t.get("eps_ladder"), list):
            lad = t["eps_ladder"]
            if any(not (isinstance(a, (int, float)) and isinstance(b, (int, float)) and b < a) for a, b in zip(lad, lad[1:])):
                problems.append(f"{where}.eps_ladder: must be strictly decreasing")
        if name == "irreducibility" and "initial" in t:
            if not isinstance(t["initial"], list):
                problems.append(f"{where}.initial: expected an array of tables")


def loads_config(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the message carries "(at line L, column C)"
        raise ConfigError(f"parse error: {exc}") from exc
    return validate(raw)


def load_config(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 ({exc})") from exc
    return loads_config(text)


def dump_config(cfg):
    return tomli_w.dumps(cfg.to_dict())
