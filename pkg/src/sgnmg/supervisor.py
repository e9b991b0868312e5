"""EMS supervisor: precursor classification, gating decisions and bandit learning."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .telemetry import FeatureVector

ACTIONS = ("Inhibit", "Facilitate", "Neutral")
LABELS = ("Harmless", "Harmful")
MODES = ("RuleBased", "Learned")


@dataclass(frozen=True)
class SupervisoryDecision:
    kind: str
    confidence: float
    i_mag: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.kind not in ACTIONS:
            raise ValueError(f"unknown decision {self.kind!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.kind != "Inhibit" and self.i_mag != 0.0:
            raise ValueError("i_mag is nonzero only for Inhibit")
        if not 0.0 <= self.i_mag <= 1.0:
            raise ValueError("i_mag must lie in [0, 1]")


NEUTRAL_DECISION = SupervisoryDecision("Neutral", 0.0)


@dataclass(frozen=True)
class RuleParams:
    """Boundaries of the rule-based classifier and the evidence scale."""

    sag_duration: float = 0.05
    thd: float = 0.05
    rocof: float = 0.3
    persistence: int = 3
    # feature scales at which a precursor counts as fully evident
    evidence_sag: float = 0.05
    evidence_thd: float = 0.05
    evidence_rocof: float = 0.5
    evidence_df: float = 0.01


def _default_bins():
    return {
        "sag_depth": (0.1, 0.2, 0.3),
        "sag_duration": (0.05, 0.1, 0.15),
        "thd": (0.03, 0.05, 0.1),
        "rocof": (0.3, 1.0, 2.0),
    }


@dataclass(frozen=True)
class RewardWeights:
    w_dev: float = 1.0
    w_trip: float = 2.0
    w_miss: float = 5.0
    w_ess: float = 0.1


@dataclass
class PolicyState:
    mode: str = "RuleBased"
    q_table: dict = field(default_factory=dict)      # bin tuple -> [qI, qF, qN]
    bins: dict = field(default_factory=_default_bins)
    epsilon: float = 0.0
    alpha_lr: float = 0.5
    rng_seed: int = 0
    history: dict = field(default_factory=dict)      # bin tuple -> [n_harmless, n_harmful]
    c_min: float = 0.2
    explore_confidence: float = 0.8
    temperature: float = 1.0
    rules: RuleParams = field(default_factory=RuleParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.alpha_lr <= 1.0:
            raise ValueError("alpha_lr must lie in (0, 1]")
        if not 0.0 <= self.c_min <= 1.0:
            raise ValueError("c_min must lie in [0, 1]")
        self.bins = {k: tuple(float(e) for e in v) for k, v in self.bins.items()}
        for name, edges in self.bins.items():
            if list(edges) != sorted(edges):
                raise ValueError(f"bin edges of {name} must be sorted")
        if isinstance(self.rules, Mapping):
            self.rules = RuleParams(**self.rules)
        for q in self.q_table.values():
            if not all(math.isfinite(x) for x in q):
                raise ValueError("q-values must be finite")

    def bin_of(self, features: FeatureVector) -> tuple:
        return tuple(int(np.searchsorted(edges, getattr(features, name), side="right"))
                     for name, edges in self.bins.items())

    def q(self, b: tuple) -> np.ndarray:
        return np.asarray(self.q_table.get(b, (0.0, 0.0, 0.0)), dtype=float)

    def greedy(self, features: FeatureVector) -> str:
        return ACTIONS[int(np.argmax(self.q(self.bin_of(features))))]

    # --- JSON ---------------------------------------------------------------
    def to_json(self) -> dict:
        key = lambda b: ",".join(str(i) for i in b)
        return {
            "mode": self.mode,
            "bins": {k: list(v) for k, v in self.bins.items()},
            "q_table": {key(b): list(q) for b, q in sorted(self.q_table.items())},
            "history": {key(b): list(h) for b, h in sorted(self.history.items())},
            "epsilon": self.epsilon,
            "alpha_lr": self.alpha_lr,
            "rng_seed": self.rng_seed,
            "c_min": self.c_min,
            "explore_confidence": self.explore_confidence,
            "temperature": self.temperature,
            "rules": vars(self.rules).copy(),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "PolicyState":
        d = dict(d)
        unkey = lambda s: tuple(int(i) for i in s.split(",")) if s else ()
        d["q_table"] = {unkey(k): [float(x) for x in v] for k, v in d.get("q_table", {}).items()}
        d["history"] = {unkey(k): [int(x) for x in v] for k, v in d.get("history", {}).items()}
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PolicyState":
        return cls.from_json(json.loads(Path(path).read_text()))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _softmax(q: np.ndarray, temperature: float) -> np.ndarray:
    z = q / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def classify(features: FeatureVector, policy: PolicyState) -> tuple[str, float]:
    """Label a precursor Harmless or Harmful with a confidence in [0, 1]."""
    if policy.mode == "RuleBased":
        rp = policy.rules
        fv = features
        harmful = ((fv.sag_duration > rp.sag_duration and fv.thd > rp.thd)
                   or fv.rocof > rp.rocof or fv.persistence >= rp.persistence)
        score = max(min(fv.sag_duration / rp.sag_duration, fv.thd / rp.thd),
                    fv.rocof / rp.rocof, fv.persistence / rp.persistence)
        if harmful:
            return "Harmful", _clamp01(score - 1.0)
        evidence = min(1.0, max(fv.sag_depth / rp.evidence_sag, fv.thd / rp.evidence_thd,
                                fv.rocof / rp.evidence_rocof, fv.df_mag / rp.evidence_df))
        return "Harmless", evidence * _clamp01(1.0 - score)

    b = policy.bin_of(features)
    q = policy.q(b)
    best = ACTIONS[int(np.argmax(q))]
    if best == "Inhibit":
        label = "Harmless"
    elif best == "Facilitate":
        label = "Harmful"
    else:
        n_harmless, n_harmful = policy.history.get(b, (0, 0))
        label = "Harmful" if n_harmful > n_harmless else "Harmless"
    p = _softmax(q, policy.temperature)
    return label, _clamp01(abs(float(p[0] - p[1])))


def decision_of(kind: str, c: float, t: float = 0.0) -> SupervisoryDecision:
    return SupervisoryDecision(kind, c, c if kind == "Inhibit" else 0.0, t)


def explore(policy: PolicyState, rng: np.random.Generator) -> str | None:
    """Epsilon-greedy draw: a random action with probability epsilon, else None."""
    if policy.mode == "Learned" and policy.epsilon > 0 and rng.random() < policy.epsilon:
        return ACTIONS[int(rng.integers(len(ACTIONS)))]
    return None


def decide(label: str, c: float, policy: PolicyState,
           rng: np.random.Generator | None = None, t: float = 0.0) -> SupervisoryDecision:
    """Map a classification to Inhibit / Facilitate / Neutral.

    In Learned mode, passing ``rng`` enables epsilon-greedy substitution; an
    explored decision carries ``policy.explore_confidence``.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("confidence must lie in [0, 1]")
    if label not in LABELS:
        raise ValueError(f"unknown label {label!r}")
    if rng is not None:
        kind = explore(policy, rng)
        if kind is not None:
            return decision_of(kind, policy.explore_confidence, t)
    if c < policy.c_min:
        return SupervisoryDecision("Neutral", c, 0.0, t)
    return decision_of("Inhibit" if label == "Harmless" else "Facilitate", c, t)


def reward(kpis, weights: RewardWeights = RewardWeights()) -> float:
    """Episode reward from a KPI report (anything with the KPI attributes)."""
    r = (1.0 - weights.w_dev * kpis.freq_dev_area - weights.w_trip * kpis.false_trips
         - weights.w_miss * kpis.missed_faults - weights.w_ess * kpis.ess_stress)
    if not math.isfinite(r):
        raise ValueError("non-finite reward")
    return float(r)


def update(policy: PolicyState, features: FeatureVector, action: str, r: float,
           label: str | None = None) -> PolicyState:
    """One contextual-bandit step: q += alpha * (r - q) on the taken action.

    ``label`` is the revealed ground truth of the episode and feeds the
    per-bin history used when Neutral is the greedy action.
    """
    if policy.mode != "Learned":
        raise ValueError("update needs a Learned policy")
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    b = policy.bin_of(features)
    q = list(policy.q(b))
    i = ACTIONS.index(action)
    q[i] = q[i] + policy.alpha_lr * (r - q[i])
    table = dict(policy.q_table)
    table[b] = q
    history = dict(policy.history)
    if label is not None:
        h = list(history.get(b, (0, 0)))
        h[LABELS.index(label)] += 1
        history[b] = h
    return replace(policy, q_table=table, history=history)
