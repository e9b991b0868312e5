"""Scenario specs, their YAML documents, and the PPI / PPF suite generators."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .gate import GateParams
from .injections import ScenarioInjection, sort_timeline
from .plant import PlantParams
from .reflex import ReflexLimits
from .supervisor import PolicyState
from .telemetry import Thresholds

CONTROLLERS = ("sg-nmg", "droop-only", "bel", "pi")
GROUND_TRUTHS = ("Benign", "Harmful")


@dataclass(frozen=True)
class PrepulsePulsePair:
    prepulse: ScenarioInjection
    pulse: ScenarioInjection | None
    delta_t: float
    ground_truth: str

    def __post_init__(self):
        if self.ground_truth not in GROUND_TRUTHS:
            raise ValueError(f"unknown ground truth {self.ground_truth!r}")
        if self.ground_truth == "Benign" and self.pulse is not None:
            raise ValueError("a Benign pair has no pulse")
        if self.ground_truth == "Harmful":
            if self.pulse is None or not self.delta_t > 0:
                raise ValueError("a Harmful pair needs a pulse and delta_t > 0")
            if abs(self.pulse.t_start - self.prepulse.t_start - self.delta_t) > 1e-9:
                raise ValueError("pulse must start delta_t after the prepulse")

    @property
    def t_start(self) -> float:
        return self.prepulse.t_start

    def injections(self) -> list[ScenarioInjection]:
        return [self.prepulse] + ([self.pulse] if self.pulse is not None else [])

    def to_dict(self) -> dict:
        return {"pair": {
            "prepulse": self.prepulse.to_dict(),
            "pulse": None if self.pulse is None else self.pulse.to_dict(),
            "delta_t": self.delta_t,
            "ground_truth": self.ground_truth,
        }}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PrepulsePulsePair":
        d = dict(d)
        return cls(
            prepulse=ScenarioInjection.from_dict(d["prepulse"]),
            pulse=None if d.get("pulse") is None else ScenarioInjection.from_dict(d["pulse"]),
            delta_t=float(d.get("delta_t", 0.0)),
            ground_truth=d["ground_truth"],
        )


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "sg-nmg"
    # test hook: pin every supervisory decision to one kind
    force_decision: str | None = None
    forced_confidence: float = 1.0
    policy: PolicyState = field(default_factory=PolicyState)
    gate: GateParams = field(default_factory=GateParams)
    bel: Mapping = field(default_factory=dict)
    pi: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.kind!r}")
        if self.force_decision not in (None, "Inhibit", "Facilitate", "Neutral"):
            raise ValueError(f"bad force_decision {self.force_decision!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "force_decision": self.force_decision,
            "forced_confidence": self.forced_confidence,
            "policy": self.policy.to_json(),
            "gate": asdict(self.gate),
            "bel": dict(self.bel),
            "pi": dict(self.pi),
        }

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "ControllerConfig":
        d = dict(d or {})
        if "policy" in d:
            d["policy"] = PolicyState.from_json(d["policy"])
        if "gate" in d:
            d["gate"] = GateParams(**d["gate"])
        return cls(**d)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    seed: int = 0
    duration: float = 1.0
    plant: PlantParams = field(default_factory=PlantParams)
    thresholds: Thresholds = field(default_factory=Thresholds)
    reflex: ReflexLimits = field(default_factory=ReflexLimits)
    timeline: tuple = ()
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    secondary_period: float = 0.1
    hop: float = 0.01

    def __post_init__(self):
        items = sorted(self.timeline, key=lambda x: x.t_start)
        object.__setattr__(self, "timeline", tuple(items))
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        for inj in self.injections:
            if inj.t_start >= self.duration or (inj.t_end != float("inf") and inj.t_end > self.duration):
                raise ValueError(f"{inj.kind} at t={inj.t_start} not covered by duration")
        dt = self.plant.dt_sim
        for name in ("hop", "secondary_period"):
            ratio = getattr(self, name) / dt
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"{name} must be a whole number of simulation steps")

    @property
    def injections(self) -> list[ScenarioInjection]:
        out = []
        for item in self.timeline:
            out.extend(item.injections() if isinstance(item, PrepulsePulsePair) else [item])
        return sort_timeline(out)

    @property
    def ground_truth(self) -> str:
        for item in self.timeline:
            if isinstance(item, PrepulsePulsePair) and item.ground_truth == "Harmful":
                return "Harmful"
        if any(i.kind == "Fault" for i in self.injections):
            return "Harmful"
        return "Benign"

    def with_controller(self, kind: str, **kw) -> "ScenarioSpec":
        return replace(self, controller=replace(self.controller, kind=kind, **kw))

    # --- documents ------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "duration": self.duration,
            "secondary_period": self.secondary_period,
            "hop": self.hop,
            "plant": self.plant.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "reflex": self.reflex.to_dict(),
            "controller": self.controller.to_dict(),
            "timeline": [item.to_dict() for item in self.timeline],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        timeline = []
        for item in d.get("timeline") or ():
            if "pair" in item:
                timeline.append(PrepulsePulsePair.from_dict(item["pair"]))
            else:
                timeline.append(ScenarioInjection.from_dict(item))
        d["timeline"] = tuple(timeline)
        d["plant"] = PlantParams.from_dict(d.get("plant"))
        d["thresholds"] = Thresholds.from_dict(d.get("thresholds"))
        d["reflex"] = ReflexLimits.from_dict(d.get("reflex"))
        d["controller"] = ControllerConfig.from_dict(d.get("controller"))
        return cls(**d)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


def save_suite(specs: Sequence[ScenarioSpec], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [spec.save(directory / f"{i:04d}_{spec.name}.yaml") for i, spec in enumerate(specs)]


def load_suite(directory) -> list[ScenarioSpec]:
    paths = sorted(Path(directory).glob("*.yaml")) + sorted(Path(directory).glob("*.yml"))
    return [ScenarioSpec.load(p) for p in sorted(paths)]


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------
def _ms(x: float) -> float:
    """Round to the millisecond grid so every edge lands on a simulation step."""
    return round(float(x), 3)


def resolve_seed(seed: int) -> int:
    """``NMG_SEED`` in the environment overrides any seed."""
    env = os.environ.get("NMG_SEED")
    return int(env) if env not in (None, "") else int(seed)


def generate_ppi_suite(seed: int, n: int, reflex: ReflexLimits | None = None,
                       controller: ControllerConfig | None = None) -> list[ScenarioSpec]:
    """Benign prepulses only: short shallow sags and small harmonic bursts.

    Sags and bursts alternate so every suite carries both kinds.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n):
        t0 = _ms(rng.uniform(0.2, 0.3))
        if i % 2 == 0:
            pre = ScenarioInjection("Sag", t0, depth=_ms(rng.uniform(0.06, 0.2)),
                                    duration=_ms(rng.uniform(0.02, 0.045)))
        else:
            pre = ScenarioInjection("HarmonicBurst", t0, order=int(rng.choice([3, 5, 7])),
                                    amplitude=_ms(rng.uniform(0.1, 0.15)),
                                    duration=_ms(rng.uniform(0.05, 0.08)))
        pair = PrepulsePulsePair(pre, None, 0.0, "Benign")
        specs.append(ScenarioSpec(
            name=f"ppi_{i:03d}", seed=seed, duration=1.0, timeline=(pair,),
            reflex=reflex or ReflexLimits(), controller=controller or ControllerConfig(),
        ))
    return specs


def generate_ppf_suite(seed: int, n: int, delta_t_range: tuple = (0.6, 1.5),
                       reflex: ReflexLimits | None = None,
                       controller: ControllerConfig | None = None,
                       tail: float = 0.8) -> list[ScenarioSpec]:
    """Sustained, harmonic-rich sags followed by a fault ``delta_t`` later."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = (float(x) for x in delta_t_range)
    if not 0 < lo <= hi:
        raise ValueError("delta_t_range must be a non-empty range inside (0, duration)")
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n):
        t0 = _ms(rng.uniform(0.2, 0.3))
        dur = _ms(rng.uniform(0.15, 0.28))
        delta_t = _ms(rng.uniform(lo, hi))
        sag = ScenarioInjection("Sag", t0, depth=_ms(rng.uniform(0.06, 0.09)), duration=dur)
        burst = ScenarioInjection("HarmonicBurst", t0, order=int(rng.choice([3, 5])),
                                  amplitude=_ms(rng.uniform(0.08, 0.12)), duration=dur)
        fault = ScenarioInjection("Fault", _ms(t0 + delta_t),
                                  severity=_ms(rng.uniform(0.35, 0.39)), element="feeder2")
        pair = PrepulsePulsePair(sag, fault, fault.t_start - t0, "Harmful")
        specs.append(ScenarioSpec(
            name=f"ppf_{i:03d}", seed=seed, duration=_ms(fault.t_start + tail),
            timeline=(pair, burst), reflex=reflex or ReflexLimits(),
            controller=controller or ControllerConfig(),
        ))
    return specs


def generate_separable_suite(seed: int, n: int, boundary: float = 0.1, guard: float = 0.01,
                             controller: ControllerConfig | None = None) -> list[ScenarioSpec]:
    """Sags whose harmfulness depends only on their duration.

    Sags longer than ``boundary`` are followed by a marginal fault; a guard
    band of +-``guard`` around the boundary is never sampled.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n):
        t0 = _ms(rng.uniform(0.2, 0.3))
        harmful = bool(rng.random() < 0.5)
        if harmful:
            dur = _ms(rng.uniform(boundary + guard, 2 * boundary))
        else:
            dur = _ms(rng.uniform(0.02, boundary - guard))
        sag = ScenarioInjection("Sag", t0, depth=_ms(rng.uniform(0.2, 0.28)), duration=dur)
        delta_t = _ms(rng.uniform(0.4, 0.6))
        if harmful:
            fault = ScenarioInjection("Fault", _ms(t0 + delta_t),
                                      severity=_ms(rng.uniform(0.35, 0.39)), element="feeder2")
            pair = PrepulsePulsePair(sag, fault, fault.t_start - t0, "Harmful")
        else:
            pair = PrepulsePulsePair(sag, None, 0.0, "Benign")
        specs.append(ScenarioSpec(
            name=f"sep_{i:03d}", seed=seed, duration=1.2, timeline=(pair,),
            controller=controller or ControllerConfig(),
        ))
    return specs


def load_step_spec(dp: float, duration: float = 10.0, t_start: float = 0.0,
                   plant: PlantParams | None = None, controller: str = "droop-only",
                   name: str = "load_step") -> ScenarioSpec:
    return ScenarioSpec(
        name=name, duration=duration, plant=plant or PlantParams(),
        timeline=(ScenarioInjection("LoadStep", t_start, dp=dp),),
        controller=ControllerConfig(kind=controller),
    )
