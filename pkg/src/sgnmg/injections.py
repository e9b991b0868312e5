"""Scripted disturbances and their per-step footprint on the bus."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

INJECTION_KINDS = ("LoadStep", "Sag", "HarmonicBurst", "Fault", "Islanding")

#: highest harmonic order carried by the telemetry synthesis
MAX_ORDER = 25


@dataclass(frozen=True)
class ScenarioInjection:
    """One scripted disturbance.

    Only the fields relevant to ``kind`` are meaningful:
    LoadStep(dp), Sag(depth, duration), HarmonicBurst(order, amplitude,
    duration), Fault(severity, element), Islanding(dp = lost import).
    """

    kind: str
    t_start: float
    dp: float = 0.0
    depth: float = 0.0
    duration: float = 0.0
    order: int = 0
    amplitude: float = 0.0
    severity: float = 0.0
    element: str = ""

    def __post_init__(self):
        if self.kind not in INJECTION_KINDS:
            raise ValueError(f"unknown injection kind {self.kind!r}")
        if self.t_start < 0:
            raise ValueError("t_start must be >= 0")
        if self.kind in ("Sag", "HarmonicBurst") and not self.duration > 0:
            raise ValueError(f"{self.kind} needs duration > 0")
        if self.kind == "Sag" and not 0 <= self.depth <= 1:
            raise ValueError("sag depth must lie in [0, 1]")
        if self.kind == "HarmonicBurst" and not 2 <= self.order <= MAX_ORDER:
            raise ValueError(f"harmonic order must lie in [2, {MAX_ORDER}]")
        if self.kind == "Fault" and not self.element:
            raise ValueError("Fault needs an element")

    @property
    def t_end(self) -> float:
        if self.kind in ("Sag", "HarmonicBurst"):
            return self.t_start + self.duration
        return float("inf")

    def shifted(self, dt: float) -> "ScenarioInjection":
        d = asdict(self)
        d["t_start"] = self.t_start + dt
        return ScenarioInjection(**d)

    def to_dict(self) -> dict:
        keep = {
            "LoadStep": ("dp",),
            "Sag": ("depth", "duration"),
            "HarmonicBurst": ("order", "amplitude", "duration"),
            "Fault": ("severity", "element"),
            "Islanding": ("dp",),
        }[self.kind]
        out = {"kind": self.kind, "t_start": self.t_start}
        out.update({k: getattr(self, k) for k in keep})
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioInjection":
        return cls(**dict(d))


def _step_window(inj: ScenarioInjection, dt: float) -> tuple[int, float]:
    k0 = int(round(inj.t_start / dt))
    if inj.kind in ("Sag", "HarmonicBurst"):
        return k0, k0 + int(round(inj.duration / dt))
    return k0, float("inf")


@dataclass
class BusProfile:
    """Per-step disturbance footprint over ``n`` steps starting at step ``k0``."""

    demand: np.ndarray        # connected load before breakers and shedding
    imbalance: np.ndarray     # extra power deficit (faults, lost import)
    sag: np.ndarray           # total voltage depression, pu
    harm: np.ndarray          # (n, MAX_ORDER + 1) relative harmonic amplitudes


def bus_profile(
    injections: Iterable[ScenarioInjection],
    k0: int,
    n: int,
    dt: float,
    p_load0: float,
    fault_power_ratio: float,
    breaker_closed: Mapping[str, bool],
) -> BusProfile:
    ks = np.arange(k0, k0 + n)
    demand = np.full(n, float(p_load0))
    imbalance = np.zeros(n)
    sag = np.zeros(n)
    harm = np.zeros((n, MAX_ORDER + 1))
    harm[:, 1] = 1.0
    for inj in injections:
        a, b = _step_window(inj, dt)
        if a >= k0 + n or b <= k0:
            continue
        on = (ks >= a) & (ks < b)
        if inj.kind == "LoadStep":
            demand[on] += inj.dp
        elif inj.kind == "Islanding":
            imbalance[on] += inj.dp
        elif inj.kind == "Sag":
            sag[on] += inj.depth
        elif inj.kind == "HarmonicBurst":
            harm[on, inj.order] += inj.amplitude
        elif inj.kind == "Fault":
            if breaker_closed.get(inj.element, False):
                imbalance[on] += inj.severity * fault_power_ratio
                sag[on] += inj.severity
    return BusProfile(demand, imbalance, sag, harm)


def sort_timeline(items: Sequence[ScenarioInjection]) -> list[ScenarioInjection]:
    return sorted(items, key=lambda i: i.t_start)
