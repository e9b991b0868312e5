"""Fast reflex protection: instantaneous and definite-time criteria plus hard limits."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

from .plant import NO_ACTION, NEUTRAL_COMMAND, ProtectionAction, SecondaryCommand
from .telemetry import FeatureVector

CRITERIA = ("SagInstant", "RoCoFDefiniteTime", "FreqUnderOver", "ThdSustained")

# criterion -> (feature attribute, proposed action kind)
_CRITERION_MAP = {
    "SagInstant": ("sag_depth", "Trip"),
    "RoCoFDefiniteTime": ("rocof", "Shed"),
    "FreqUnderOver": ("df_mag", "Shed"),
    "ThdSustained": ("thd", "VarInject"),
}
_PRIORITY = {"Trip": 0, "Shed": 1, "VarInject": 2}


@dataclass(frozen=True)
class Pickup:
    threshold: float
    delay: float = 0.0


def _default_pickups():
    return {
        "SagInstant": Pickup(0.2, 0.0),
        "RoCoFDefiniteTime": Pickup(1.0, 0.05),
        "FreqUnderOver": Pickup(0.008, 0.1),
        "ThdSustained": Pickup(0.06, 0.03),
    }


@dataclass(frozen=True)
class ReflexLimits:
    pickups: Mapping[str, Pickup] = field(default_factory=_default_pickups)
    df_hard: float = 0.02
    rocof_hard: float = 2.5
    trip_element: str = "feeder2"
    shed_step: float = 0.1
    var_step: float = 0.02
    # extra pickup margin on shed criteria while shedding is desensitized
    desensitize_margin: float = 0.5

    def __post_init__(self):
        pk = dict(_default_pickups())
        for name, p in dict(self.pickups).items():
            if name not in CRITERIA:
                raise ValueError(f"unknown criterion {name!r}")
            pk[name] = p if isinstance(p, Pickup) else Pickup(**p)
        object.__setattr__(self, "pickups", pk)
        for p in pk.values():
            if not p.threshold > 0 or p.delay < 0:
                raise ValueError("pickup thresholds must be > 0 and delays >= 0")
        if self.df_hard < pk["FreqUnderOver"].threshold:
            raise ValueError("df_hard must be >= the FreqUnderOver pickup")
        if self.rocof_hard < pk["RoCoFDefiniteTime"].threshold:
            raise ValueError("rocof_hard must be >= the RoCoF pickup")

    @classmethod
    def sensitive(cls) -> "ReflexLimits":
        """Deliberately over-sensitive voltage pickups (nuisance-trip prone)."""
        pk = _default_pickups()
        pk["SagInstant"] = Pickup(0.04, 0.0)
        pk["ThdSustained"] = Pickup(0.03, 0.03)
        return cls(pickups=pk)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pickups"] = {k: asdict(v) for k, v in self.pickups.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "ReflexLimits":
        return cls(**dict(d or {}))


@dataclass(frozen=True)
class ReflexDrive:
    a: float
    proposed: ProtectionAction
    criteria_fired: frozenset
    t: float

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError("drive must lie in [0, 1]")
        if (self.a == 0.0) != (not self.criteria_fired):
            raise ValueError("a = 0 exactly when no criterion fired")


def severity(value: float, threshold: float) -> float:
    return min(1.0, value / threshold - 1.0)


class Reflex:
    """Stateful criterion evaluation; holds definite-time pickup timers."""

    def __init__(self, limits: ReflexLimits = ReflexLimits()):
        self.limits = limits
        self._since: dict[str, float] = {}

    def reset(self):
        self._since.clear()

    def effective_pickup(self, name: str, cmd: SecondaryCommand, prearm: bool = False) -> Pickup:
        p = self.limits.pickups[name]
        thr = p.threshold * (1.0 + cmd.trip_threshold_bias)
        if cmd.shed_desensitize and _CRITERION_MAP[name][1] == "Shed":
            thr *= 1.0 + self.limits.desensitize_margin
        delay = 0.0 if prearm else max(0.0, p.delay + cmd.trip_delay_bias)
        return Pickup(max(thr, 1e-12), delay)

    def evaluate(self, features: FeatureVector, t: float,
                 cmd: SecondaryCommand = NEUTRAL_COMMAND, prearm: bool = False) -> ReflexDrive:
        fired = []
        a = 0.0
        for name in CRITERIA:
            attr, _ = _CRITERION_MAP[name]
            value = getattr(features, attr)
            pk = self.effective_pickup(name, cmd, prearm)
            if value > pk.threshold:
                start = self._since.setdefault(name, t)
                if t - start >= pk.delay - 1e-12:
                    fired.append(name)
                    # floor keeps a > 0 when value/threshold rounds to 1
                    a = max(a, severity(value, pk.threshold), 1e-15)
            else:
                self._since.pop(name, None)
        proposed = NO_ACTION
        if fired:
            kind = min((_CRITERION_MAP[n][1] for n in fired), key=_PRIORITY.__getitem__)
            proposed = self._action(kind)
        return ReflexDrive(a=a, proposed=proposed, criteria_fired=frozenset(fired), t=t)

    def _action(self, kind: str) -> ProtectionAction:
        lim = self.limits
        if kind == "Trip":
            return ProtectionAction("Trip", element=lim.trip_element)
        if kind == "Shed":
            return ProtectionAction("Shed", value=lim.shed_step)
        return ProtectionAction("VarInject", value=lim.var_step)


def evaluate(features: FeatureVector, limits: ReflexLimits = ReflexLimits(),
             cmd: SecondaryCommand = NEUTRAL_COMMAND, t: float = 0.0) -> ReflexDrive:
    """Stateless evaluation (definite-time delays count from ``t``)."""
    return Reflex(limits).evaluate(features, t, cmd)


def hard_override(features: FeatureVector, limits: ReflexLimits = ReflexLimits()) -> ProtectionAction | None:
    """Trip that no gate or supervisor can suppress (boundaries inclusive)."""
    if features.df_mag >= limits.df_hard or features.rocof >= limits.rocof_hard:
        return ProtectionAction("Trip", element=limits.trip_element)
    return None
