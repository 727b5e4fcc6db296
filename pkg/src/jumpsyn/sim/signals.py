"""Delay and disturbance signals.

Both are described by small JSON-compatible descriptors (``{"kind": ...}``)
so a scenario file fully determines a simulation. Evaluators are
vectorized over time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from ..errors import ParseError, RangeError
from ..model import DelaySpec

DELAY_KINDS = ("constant", "ramp", "sine")
DISTURBANCE_KINDS = ("zero", "example-waveform", "grid")


@dataclass(frozen=True, eq=False)
class DelaySignal:
    """Realized delay ``tau(t)`` together with the bounds it was built for.

    ``admissible`` is False for kinds that violate ``0 <= dtau/dt <= tau_plus``
    (only ``sine``); such signals are for stress tests, not for checking
    the synthesis guarantee.
    """

    kind: str
    spec: DelaySpec
    params: Mapping[str, float]
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    admissible: bool = True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.fn(t)

    def descriptor(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}

    def is_zero(self) -> bool:
        return self.kind == "constant" and self.params["c"] == 0.0


def make_delay_signal(spec: DelaySpec, kind: str = "ramp", **params) -> DelaySignal:
    """Build a delay signal.

    ``constant``: ``tau = c`` with ``0 <= c <= tau0``.
    ``ramp``: ``tau = min(tau0, tau_init + tau_plus * t)`` with
    ``0 <= tau_init <= tau0``.
    ``sine``: ``tau = mid + amp * sin(2 pi t / period)`` clipped to
    ``[0, tau0]``; not admissible.
    """
    tau0, tp = spec.tau0, spec.tau_plus
    if kind == "constant":
        c = float(params.pop("c", 0.0))
        if not 0 <= c <= tau0:
            raise RangeError(f"constant delay c = {c} outside [0, tau0 = {tau0}]")
        _no_extra(params, kind)
        return DelaySignal(kind, spec, {"c": c}, lambda t: np.full(t.shape, c))
    if kind == "ramp":
        t0 = float(params.pop("tau_init", 0.0))
        if not 0 <= t0 <= tau0:
            raise RangeError(f"ramp tau_init = {t0} outside [0, tau0 = {tau0}]")
        _no_extra(params, kind)
        return DelaySignal(kind, spec, {"tau_init": t0},
                           lambda t: np.minimum(tau0, t0 + tp * t))
    if kind == "sine":
        mid = float(params.pop("mid", 0.5 * tau0))
        amp = float(params.pop("amp", 0.5 * tau0))
        period = float(params.pop("period", 1.0))
        if not period > 0:
            raise RangeError(f"sine period must be > 0, got {period}")
        if mid - abs(amp) < 0 or mid + abs(amp) > tau0:
            raise RangeError(f"sine delay range [{mid - abs(amp)}, {mid + abs(amp)}] leaves [0, {tau0}]")
        _no_extra(params, kind)
        w = 2 * np.pi / period
        return DelaySignal(kind, spec, {"mid": mid, "amp": amp, "period": period},
                           lambda t: mid + amp * np.sin(w * t), admissible=False)
    raise ParseError(f"unknown delay kind {kind!r}; expected one of {DELAY_KINDS}", "/sim/delay_signal/kind")


def _no_extra(params, kind):
    if params:
        raise ParseError(f"unexpected parameters {sorted(params)} for {kind!r}", "/sim")


def normalize_delay_descriptor(desc: Mapping[str, Any], spec: DelaySpec) -> dict[str, Any]:
    """Validate a delay descriptor and fill in defaults."""
    if not isinstance(desc, Mapping) or "kind" not in desc:
        raise ParseError("delay_signal must be an object with a 'kind'", "/sim/delay_signal")
    params = {k: v for k, v in desc.items() if k != "kind"}
    return make_delay_signal(spec, desc["kind"], **params).descriptor()


@dataclass(frozen=True, eq=False)
class DisturbanceSignal:
    """Exogenous input ``w(t)`` in R^q."""

    kind: str
    q: int
    params: Mapping[str, Any]
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, t) -> np.ndarray:
        """Values at times ``t``; shape ``t.shape + (q,)``."""
        t = np.asarray(t, dtype=float)
        return self.fn(t)

    def descriptor(self) -> dict[str, Any]:
        if self.kind == "function":
            raise ValueError("a disturbance built from a Python function has no descriptor")
        return {"kind": self.kind, **self.params}

    def is_zero(self) -> bool:
        return self.kind == "zero"

    @classmethod
    def zero(cls, q: int) -> "DisturbanceSignal":
        return cls("zero", q, {}, lambda t: np.zeros(t.shape + (q,)))

    @classmethod
    def example_waveform(cls, q: int, amplitude=0.5, decay=0.1, frequency=0.01 * np.pi) -> "DisturbanceSignal":
        """``amplitude * exp(-decay t) * sin(frequency t)`` on every component."""
        a, d, f = float(amplitude), float(decay), float(frequency)

        def fn(t):
            v = a * np.exp(-d * t) * np.sin(f * t)
            return np.repeat(v[..., None], q, axis=-1)

        return cls("example-waveform", q, {"amplitude": a, "decay": d, "frequency": f}, fn)

    @classmethod
    def grid(cls, times, values) -> "DisturbanceSignal":
        """Linear interpolation of samples; held constant outside the grid."""
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 1 or v.shape[0] != t.size:
            raise ParseError("disturbance grid needs one value row per time", "/sim/disturbance")
        if np.any(np.diff(t) <= 0):
            raise ParseError("disturbance grid times must increase", "/sim/disturbance/times")
        if not np.all(np.isfinite(v)):
            raise RangeError("disturbance grid has non-finite values")
        q = v.shape[1]

        def fn(tt):
            flat = tt.ravel()
            out = np.column_stack([np.interp(flat, t, v[:, c]) for c in range(q)])
            return out.reshape(tt.shape + (q,))

        return cls("grid", q, {"times": t.tolist(), "values": v.tolist()}, fn)

    @classmethod
    def from_function(cls, fn: Callable[[float], Any], q: int) -> "DisturbanceSignal":
        """Wrap a scalar-time Python callable (not serializable)."""
        def vec(t):
            flat = [np.broadcast_to(np.asarray(fn(float(s)), dtype=float), (q,)) for s in t.ravel()]
            return np.array(flat, dtype=float).reshape(t.shape + (q,))

        return cls("function", q, {}, vec)


def make_disturbance(desc: Mapping[str, Any], q: int) -> DisturbanceSignal:
    if not isinstance(desc, Mapping) or "kind" not in desc:
        raise ParseError("disturbance must be an object with a 'kind'", "/sim/disturbance")
    params = {k: v for k, v in desc.items() if k != "kind"}
    kind = desc["kind"]
    if kind == "zero":
        _no_extra(params, kind)
        return DisturbanceSignal.zero(q)
    if kind == "example-waveform":
        extra = set(params) - {"amplitude", "decay", "frequency"}
        _no_extra(extra, kind)
        return DisturbanceSignal.example_waveform(q, **params)
    if kind == "grid":
        sig = DisturbanceSignal.grid(params.get("times", []), params.get("values", []))
        if sig.q != q:
            raise ParseError(f"disturbance grid has {sig.q} components, expected q = {q}", "/sim/disturbance")
        return sig
    raise ParseError(f"unknown disturbance kind {kind!r}; expected one of {DISTURBANCE_KINDS}",
                     "/sim/disturbance/kind")


def normalize_disturbance_descriptor(desc: Mapping[str, Any], q: int) -> dict[str, Any]:
    return make_disturbance(desc, q).descriptor()
