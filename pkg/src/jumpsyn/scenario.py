"""Scenario files: JSON load, validation and canonical serialization."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import DimensionMismatch, ParseError, RangeError
from .model import (MATRIX_NAMES, DelaySpec, InitialHistory, ObservationModel, PerformanceSpec,
                    Scenario, SimSettings, validate_model)
from .sim.signals import normalize_delay_descriptor, normalize_disturbance_descriptor

BUNDLED = ("reference_example", "infeasible_budget", "stable_demo")


def bundled_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``reference_example`` etc.)."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUNDLED:
        raise FileNotFoundError(f"no bundled scenario named {name!r}; choose from {BUNDLED}")
    return Path(str(resources.files("jumpsyn") / "data" / f"{stem}.json"))


def resolve_path(path) -> Path:
    """Accept a filesystem path or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    try:
        return bundled_path(p.name)
    except FileNotFoundError:
        raise FileNotFoundError(f"scenario file {path} not found") from None


def _get(doc: Mapping, key: str, where: str):
    if not isinstance(doc, Mapping):
        raise ParseError("expected an object", where)
    if key not in doc:
        raise ParseError("missing key", f"{where}/{key}")
    return doc[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", where)
    return value


def _L_stack(raw, N: int, n: int) -> np.ndarray:
    arr = np.array(raw, dtype=float)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (N * N,) + arr.shape).copy()
    if arr.ndim != 3 or arr.shape != (N * N, n, n):
        raise DimensionMismatch(
            f"performance.L must be one {n}x{n} matrix or {N * N} of them, got shape {arr.shape}")
    return arr


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    model = validate_model(doc)
    N, n = model.N, model.n

    G = np.array(_get(doc, "observation_rates", ""), dtype=float)
    obs = ObservationModel(G)

    d = _get(doc, "delay", "")
    delay = DelaySpec(_number(_get(d, "tau0", "/delay"), "/delay/tau0"),
                      _number(_get(d, "tau_plus", "/delay"), "/delay/tau_plus"))

    p = _get(doc, "performance", "")
    phi0 = np.array(_get(p, "phi0", "/performance"), dtype=float).ravel()
    if phi0.shape != (n,):
        raise DimensionMismatch(f"phi0 has {phi0.size} entries, expected {n}")
    if p.get("phi") is not None:
        ph = p["phi"]
        phi = InitialHistory(_get(ph, "times", "/performance/phi"), _get(ph, "values", "/performance/phi"))
        if not np.array_equal(phi.phi0, phi0):
            raise ParseError("phi values at t = 0 disagree with phi0", "/performance/phi")
    else:
        phi = InitialHistory.constant(phi0, delay.tau0)
    perf = PerformanceSpec(
        gamma=_number(_get(p, "gamma", "/performance"), "/performance/gamma"),
        f2=_number(_get(p, "f2", "/performance"), "/performance/f2"),
        f_inf=_number(_get(p, "f_inf", "/performance"), "/performance/f_inf"),
        L=_L_stack(_get(p, "L", "/performance"), N, n),
        X=_number(_get(p, "X", "/performance"), "/performance/X"),
        phi=phi,
    )

    s = _get(doc, "sim", "")
    r0 = _integer(_get(s, "r0", "/sim"), "/sim/r0")
    robs0 = _integer(s.get("robs0", r0), "/sim/robs0")
    for name, v in (("r0", r0), ("robs0", robs0)):
        if not 1 <= v <= N:
            raise RangeError(f"sim.{name} = {v} is not a mode in 1..{N}")
    sim = SimSettings(
        r0=r0 - 1, robs0=robs0 - 1,
        horizon=_number(_get(s, "horizon", "/sim"), "/sim/horizon"),
        dt=_number(_get(s, "dt", "/sim"), "/sim/dt"),
        seed=_integer(s.get("seed", 0), "/sim/seed"),
        runs=_integer(s.get("runs", 200), "/sim/runs"),
        disturbance=normalize_disturbance_descriptor(s.get("disturbance", {"kind": "zero"}), model.q),
        delay_signal=normalize_delay_descriptor(s.get("delay_signal", {"kind": "ramp"}), delay),
    )
    return Scenario(model=model, obs=obs, delay=delay, perf=perf, sim=sim,
                    name=str(doc.get("name", "")), reference=doc.get("reference"))


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    """Canonical document; ``scenario_from_dict`` inverts it exactly."""
    m = sc.model
    doc: dict[str, Any] = {"name": sc.name}
    doc["modes"] = [{name: getattr(m, name)[i].tolist() for name in MATRIX_NAMES} for i in range(m.N)]
    doc["generator"] = m.Pi.tolist()
    doc["observation_rates"] = sc.obs.G.tolist()
    doc["delay"] = {"tau0": sc.delay.tau0, "tau_plus": sc.delay.tau_plus}
    perf = {
        "gamma": sc.perf.gamma, "f2": sc.perf.f2, "f_inf": sc.perf.f_inf,
        "L": sc.perf.L.tolist(), "X": sc.perf.X, "phi0": sc.perf.phi.phi0.tolist(),
    }
    if not (sc.perf.phi.is_constant and sc.perf.phi.times.size == 2):
        perf["phi"] = {"times": sc.perf.phi.times.tolist(), "values": sc.perf.phi.values.tolist()}
    doc["performance"] = perf
    doc["sim"] = {
        "r0": sc.sim.r0 + 1, "robs0": sc.sim.robs0 + 1, "horizon": sc.sim.horizon,
        "dt": sc.sim.dt, "seed": sc.sim.seed, "runs": sc.sim.runs,
        "disturbance": dict(sc.sim.disturbance), "delay_signal": dict(sc.sim.delay_signal),
    }
    if sc.reference is not None:
        doc["reference"] = sc.reference
    return doc


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file (path or bundled name)."""
    path = resolve_path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    return scenario_from_dict(doc)


def dumps_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2) + "\n"


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc))
