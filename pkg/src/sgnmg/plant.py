"""Single-bus islanded microgrid with always-closed droop primary control.

Frequency is dynamic (per-unit swing equation integrated by explicit Euler),
voltage is algebraic: ``v0 + dv_offset + var_support - sag``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .injections import ScenarioInjection, bus_profile


class SimulationDiverged(FloatingPointError):
    """Raised when the integrated state stops being finite."""


@dataclass(frozen=True)
class DGUnit:
    p_set: float = 0.4
    p_max: float = 1.0
    droop_R: float = 0.05


@dataclass(frozen=True)
class EssParams:
    p_max: float = 0.2
    e_cap: float = 20.0
    soc0: float = 0.5
    ramp: float = 0.5  # pu/s
    # under-frequency (pu) at which pre-dispatched headroom is fully released
    ffr_band: float = 0.002


def _default_units():
    return (DGUnit(), DGUnit())


def _default_feeders():
    return {"feeder1": 0.8, "feeder2": 0.2}


@dataclass(frozen=True)
class PlantParams:
    f0: float = 50.0
    M: float = 10.0
    D: float = 1.0
    dg_units: tuple = field(default_factory=_default_units)
    ess: EssParams = field(default_factory=EssParams)
    v0: float = 1.0
    dt_sim: float = 0.001
    # governor lag of the DG power response; 0 makes droop algebraic
    tau_gov: float = 0.3
    p_load0: float | None = None  # defaults to sum of p_set (balanced start)
    feeders: Mapping[str, float] = field(default_factory=_default_feeders)
    fault_power_ratio: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "dg_units", tuple(
            u if isinstance(u, DGUnit) else DGUnit(**u) for u in self.dg_units))
        if not isinstance(self.ess, EssParams):
            object.__setattr__(self, "ess", EssParams(**self.ess))
        object.__setattr__(self, "feeders", dict(self.feeders))
        if self.p_load0 is None:
            object.__setattr__(self, "p_load0", sum(u.p_set for u in self.dg_units))
        if not self.M > 0:
            raise ValueError("M must be > 0")
        if not self.D >= 0:
            raise ValueError("D must be >= 0")
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be > 0")
        if self.tau_gov < 0:
            raise ValueError("tau_gov must be >= 0")
        if not self.dg_units:
            raise ValueError("at least one DG unit is required")
        for u in self.dg_units:
            if not u.droop_R > 0:
                raise ValueError("droop_R must be > 0")
            if not u.p_max >= 0:
                raise ValueError("p_max must be >= 0")
        if not self.ess.p_max >= 0 or not self.ess.e_cap > 0:
            raise ValueError("ESS needs p_max >= 0 and e_cap > 0")
        if self.ess.ffr_band < 0:
            raise ValueError("ffr_band must be >= 0")
        if not 0 <= self.ess.soc0 <= 1:
            raise ValueError("soc0 must lie in [0, 1]")
        if any(s < 0 for s in self.feeders.values()) or sum(self.feeders.values()) > 1 + 1e-12:
            raise ValueError("feeder shares must be >= 0 and sum to at most 1")

    @property
    def stiffness(self) -> float:
        """Sum of 1/R over all units plus load damping."""
        return sum(1.0 / u.droop_R for u in self.dg_units) + self.D

    def to_dict(self) -> dict:
        return {
            "f0": self.f0, "M": self.M, "D": self.D,
            "dg_units": [vars(u).copy() for u in self.dg_units],
            "ess": vars(self.ess).copy(),
            "v0": self.v0, "dt_sim": self.dt_sim, "tau_gov": self.tau_gov,
            "p_load0": self.p_load0, "feeders": dict(self.feeders),
            "fault_power_ratio": self.fault_power_ratio,
        }

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "PlantParams":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown plant fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SecondaryCommand:
    df_offset: float = 0.0
    dv_offset: float = 0.0
    ess_predispatch: float = 0.0
    trip_threshold_bias: float = 0.0
    trip_delay_bias: float = 0.0
    prearm: bool = False
    shed_desensitize: bool = False

    def __post_init__(self):
        for name in ("df_offset", "dv_offset", "ess_predispatch",
                     "trip_threshold_bias", "trip_delay_bias"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


NEUTRAL_COMMAND = SecondaryCommand()

ACTION_KINDS = ("Trip", "Shed", "VarInject", "Prearm", "None")


@dataclass(frozen=True)
class ProtectionAction:
    kind: str = "None"
    element: str = ""
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action {self.kind!r}")

    @property
    def is_protective(self) -> bool:
        """Trip and Shed interrupt service; they count as trips in KPIs."""
        return self.kind in ("Trip", "Shed")

    def label(self) -> str:
        if self.kind == "Trip":
            return f"Trip({self.element})"
        if self.kind in ("Shed", "VarInject"):
            return f"{self.kind}({self.value:g})"
        return self.kind


NO_ACTION = ProtectionAction()


@dataclass(frozen=True)
class PlantState:
    k: int                      # step index; t = k * dt_sim
    t: float
    delta_f: float
    v: float
    p_dg: tuple
    p_ess: float
    soc: float
    p_load: float               # connected demand before breakers/shedding
    shed_fraction: float = 0.0
    breaker_closed: Mapping[str, bool] = field(default_factory=dict)
    prearm: bool = False
    var_support: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p_dg", tuple(float(p) for p in self.p_dg))
        object.__setattr__(self, "breaker_closed", dict(self.breaker_closed))

    def check_finite(self):
        vals = (self.delta_f, self.v, self.p_ess, self.soc, self.p_load, *self.p_dg)
        if not all(math.isfinite(x) for x in vals):
            raise SimulationDiverged(f"non-finite plant state at t={self.t:.6f}s")

    def served_factor(self, params: PlantParams) -> float:
        open_share = sum(s for name, s in params.feeders.items()
                         if not self.breaker_closed.get(name, True))
        return (1.0 - open_share) * (1.0 - self.shed_fraction)


def initial_state(params: PlantParams) -> PlantState:
    return PlantState(
        k=0, t=0.0, delta_f=0.0, v=params.v0,
        p_dg=tuple(u.p_set for u in params.dg_units),
        p_ess=0.0, soc=params.ess.soc0, p_load=params.p_load0,
        breaker_closed={name: True for name in params.feeders},
    )


def droop_dispatch(delta_f: float, params: PlantParams,
                   cmd: SecondaryCommand = NEUTRAL_COMMAND) -> np.ndarray:
    """Steady-state droop power of every DG unit."""
    p_set = np.array([u.p_set for u in params.dg_units])
    p_max = np.array([u.p_max for u in params.dg_units])
    inv_r = np.array([1.0 / u.droop_R for u in params.dg_units])
    return np.clip(p_set - (delta_f - cmd.df_offset) * inv_r, 0.0, p_max)


@dataclass
class StepBlock:
    """Per-step channels produced by :func:`advance`."""

    t: np.ndarray
    delta_f: np.ndarray
    v: np.ndarray
    p_dg: np.ndarray
    p_ess: np.ndarray
    soc: np.ndarray
    p_load: np.ndarray
    p_served: np.ndarray
    harm: np.ndarray


def advance(state: PlantState, params: PlantParams, cmd: SecondaryCommand,
            injections: Iterable[ScenarioInjection], n: int) -> tuple[PlantState, StepBlock]:
    """Integrate ``n`` steps with command and breaker state held constant."""
    dt = params.dt_sim
    prof = bus_profile(injections, state.k, n, dt, params.p_load0,
                       params.fault_power_ratio, state.breaker_closed)
    served = prof.demand * state.served_factor(params)
    demand = served + prof.imbalance

    units = params.dg_units
    p_set = np.array([u.p_set for u in units])
    p_max = np.array([u.p_max for u in units])
    inv_r = np.array([1.0 / u.droop_R for u in units])
    p_dg = np.array(state.p_dg, dtype=float)
    ess = params.ess
    target = min(max(cmd.ess_predispatch, -ess.p_max), ess.p_max)

    out_df = np.empty(n)
    out_pdg = np.empty((n, len(units)))
    out_pess = np.empty(n)
    out_soc = np.empty(n)
    delta_f, p_ess, soc = kernels.euler_steps(
        float(state.delta_f), p_dg, float(state.p_ess), float(state.soc), dt,
        float(params.M), float(params.D), float(params.tau_gov),
        p_set, p_max, inv_r, float(cmd.df_offset), demand,
        float(target), float(ess.ffr_band), float(ess.p_max), float(ess.ramp), float(ess.e_cap),
        out_df, out_pdg, out_pess, out_soc,
    )
    v = params.v0 + cmd.dv_offset + state.var_support - prof.sag
    np.maximum(v, 0.0, out=v)
    k_end = state.k + n
    new = replace(
        state, k=k_end, t=k_end * dt, delta_f=float(delta_f), v=float(v[-1]),
        p_dg=tuple(p_dg), p_ess=float(p_ess), soc=float(soc),
        p_load=float(prof.demand[-1]),
    )
    new.check_finite()
    block = StepBlock(
        t=np.arange(state.k + 1, k_end + 1) * dt,
        delta_f=out_df, v=v, p_dg=out_pdg, p_ess=out_pess, soc=out_soc,
        p_load=prof.demand, p_served=served, harm=prof.harm,
    )
    return new, block


def step(state: PlantState, params: PlantParams, cmd: SecondaryCommand = NEUTRAL_COMMAND,
         injections: Sequence[ScenarioInjection] = ()) -> PlantState:
    """Advance one ``dt_sim``."""
    return advance(state, params, cmd, injections, 1)[0]


def apply_protection(state: PlantState, action: ProtectionAction,
                     log: list | None = None) -> PlantState:
    """Enforce a protection action on the plant state.

    Repeated sheds compound on the surviving load. ``log``, when given,
    receives one record per call.
    """
    kind = action.kind
    if kind == "Trip":
        if action.element not in state.breaker_closed:
            raise ValueError(f"unknown protected element {action.element!r}")
        closed = dict(state.breaker_closed)
        closed[action.element] = False
        new = replace(state, breaker_closed=closed)
    elif kind == "Shed":
        if not 0.0 <= action.value <= 1.0:
            raise ValueError("shed fraction must lie in [0, 1]")
        survivors = (1.0 - state.shed_fraction) * (1.0 - action.value)
        new = replace(state, shed_fraction=1.0 - survivors)
    elif kind == "VarInject":
        new = replace(state, var_support=float(action.value))
    elif kind == "Prearm":
        new = replace(state, prearm=True)
    else:
        new = state
    if log is not None:
        log.append({"t": state.t, "type": "action", "action": action.label()})
    return new
