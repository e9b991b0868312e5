"""Closed-loop orchestration: plant, telemetry, reflex, supervisor and gate per hop."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .baselines import BelController, BelState, PiController, PiState
from .gate import NEUTRAL_GATE, GatedResponse, gate, gating_factor, synthesize_commands
from .plant import (NEUTRAL_COMMAND, ProtectionAction, SecondaryCommand, advance,
                    apply_protection, initial_state)
from .reflex import Reflex, hard_override
from .report import KpiReport, Trace, compute_kpis
from .scenario import ScenarioSpec
from .supervisor import (NEUTRAL_DECISION, PolicyState, RewardWeights, classify, decide,
                         decision_of, explore, reward, update)
from .telemetry import FEATURE_NAMES, FeatureExtractor, FeatureVector, TelemetryBus, detect_event

PREARM = ProtectionAction("Prearm")


def _bel_controller(spec: ScenarioSpec) -> BelController:
    opts = dict(spec.controller.bel)
    state = opts.pop("state", None)
    ctrl = BelController(**opts)
    if state is not None:
        ctrl.state = state if isinstance(state, BelState) else BelState(**state)
    return ctrl


def _merge(summary: FeatureVector, fv: FeatureVector, freeze_frequency: bool) -> FeatureVector:
    """Running max of a precursor run. Once a trip or shed has acted, the
    frequency features describe the action's aftermath and stop merging."""
    m = summary.merged_max(fv)
    if freeze_frequency:
        m = replace(m, rocof=summary.rocof, df_mag=summary.df_mag)
    return m


def run(spec: ScenarioSpec, policy: PolicyState | None = None,
        rng: np.random.Generator | None = None, bel: BelController | None = None) -> Trace:
    """Simulate one scenario and return its trace.

    ``rng`` enables exploration for a Learned policy; ``bel`` lets a BEL
    controller carry its weights from one episode to the next.
    """
    ctl = spec.controller
    kind = ctl.kind
    params = spec.plant
    dt = params.dt_sim
    n_total = int(round(spec.duration / dt))
    hop_steps = int(round(spec.hop / dt))
    sec_steps = int(round(spec.secondary_period / dt))
    n_hops = -(-n_total // hop_steps)
    gp = ctl.gate
    policy = policy if policy is not None else ctl.policy
    injections = spec.injections

    state = initial_state(params)
    bus = TelemetryBus(n_total, dt, params.v0, params.f0)
    extractor = FeatureExtractor(spec.thresholds.precursor, params.v0, params.f0, hop=spec.hop)
    reflex = Reflex(spec.reflex)
    secondary = None
    if kind == "bel":
        secondary = bel if bel is not None else _bel_controller(spec)
    elif kind == "pi":
        secondary = PiController(PiState(**dict(ctl.pi)))

    n_dg = len(params.dg_units)
    steps = {
        "t": np.empty(n_total), "delta_f": np.empty(n_total), "v": np.empty(n_total),
        **{f"p_dg_{i}": np.empty(n_total) for i in range(n_dg)},
        "p_ess": np.empty(n_total), "soc": np.empty(n_total), "p_load": np.empty(n_total),
        "p_served": np.empty(n_total), "shed_fraction": np.empty(n_total),
        **{f"breaker_{name}": np.empty(n_total, dtype=bool) for name in params.feeders},
    }
    hop_cols = ("t", *FEATURE_NAMES[:5], "a", "s_out", "g", "i_mag", "confidence",
                "trip_threshold_bias", "ess_predispatch", "df_offset")
    hops = {c: np.empty(n_hops) for c in hop_cols}
    hops["persistence"] = np.empty(n_hops, dtype=np.int64)
    hops["decision"] = np.empty(n_hops, dtype=object)

    events: list[dict] = [{"t": i.t_start, "type": "injection", "kind": i.kind}
                          for i in injections]
    cmd = NEUTRAL_COMMAND
    pending = NEUTRAL_COMMAND
    decision = NEUTRAL_DECISION
    summary: FeatureVector | None = None
    run_peak = 0.0
    run_explore: str | None = None
    final_kind: str | None = None
    final_label = ("", 0.0)
    final_summary: FeatureVector | None = None
    acted = False
    latched: set[str] = set()
    hard_active = False
    last_protective = -np.inf

    k = 0
    for h in range(n_hops):
        n = min(hop_steps, n_total - k)
        pre = state
        state, blk = advance(state, params, cmd, injections, n)
        sl = slice(k, k + n)
        steps["t"][sl] = blk.t
        steps["delta_f"][sl] = blk.delta_f
        steps["v"][sl] = blk.v
        for i in range(n_dg):
            steps[f"p_dg_{i}"][sl] = blk.p_dg[:, i]
        steps["p_ess"][sl] = blk.p_ess
        steps["soc"][sl] = blk.soc
        steps["p_load"][sl] = blk.p_load
        steps["p_served"][sl] = blk.p_served
        steps["shed_fraction"][sl] = pre.shed_fraction
        for name in params.feeders:
            steps[f"breaker_{name}"][sl] = pre.breaker_closed[name]
        k += n
        t = state.t
        bus.push(blk.t, blk.delta_f, blk.v, blk.harm)
        fv = extractor.extract(bus.window())

        drive = reflex.evaluate(fv, t, cmd, prearm=state.prearm)
        hard = hard_override(fv, spec.reflex)
        if hard is not None:
            if not hard_active:
                events.append({"t": t, "type": "hard_override", "action": hard.label()})
                state = apply_protection(state, hard)
                last_protective = t
                acted = summary is not None
            hard_active = True
        else:
            hard_active = False

        gf = NEUTRAL_GATE
        if kind == "sg-nmg":
            blanked = t - last_protective < gp.post_action_blank
            ev = detect_event(fv, spec.thresholds, t)
            if ev is not None and (summary is not None or not blanked):
                if summary is None:
                    events.append({"t": t, "type": "detection", "kind": ev.kind})
                    summary = fv
                    acted = False
                    run_peak = 0.0
                    run_explore = explore(policy, rng) if rng is not None else None
                else:
                    summary = _merge(summary, fv, freeze_frequency=acted)
                final_summary = summary
                if not blanked:
                    run_peak = max(run_peak, drive.a)
                    prev = decision.kind
                    label, c = classify(summary, policy)
                    if ctl.force_decision is not None:
                        decision = decision_of(ctl.force_decision, ctl.forced_confidence, t)
                    elif run_explore is not None:
                        decision = decision_of(run_explore, policy.explore_confidence, t)
                    else:
                        decision = decide(label, c, policy, t=t)
                    final_label = (label, c)
                    if decision.kind != prev:
                        events.append({"t": t, "type": "decision", "kind": decision.kind,
                                       "confidence": decision.confidence})
                    final_kind = decision.kind
                    gf_run = gating_factor(decision, fv.persistence, fv.t_since_precursor, gp)
                    s_peak = max(0.0, run_peak - decision.i_mag) * gf_run.g
                    pending = synthesize_commands(
                        GatedResponse(s_peak, drive, decision, gf_run), params.ess.p_max, gp)
            else:
                summary = None
            decision = replace(decision, t=t)
            gf = gating_factor(decision, fv.persistence, fv.t_since_precursor, gp)
            s_out = gate(drive, decision, gf, gp.hop).s_out
        else:
            s_out = drive.a

        if drive.a == 0.0:
            latched.clear()
        elif s_out >= gp.act_level and drive.proposed.kind != "None":
            label = drive.proposed.label()
            if label not in latched:
                latched.add(label)
                state = apply_protection(state, drive.proposed, events)
                if drive.proposed.is_protective:
                    last_protective = t
                    acted = summary is not None
                if drive.proposed.is_protective and decision.kind == "Facilitate":
                    # facilitation is consumed once the disturbance is cleared
                    decision = replace(NEUTRAL_DECISION, t=t)
                    events.append({"t": t, "type": "decision", "kind": "Neutral",
                                   "confidence": 0.0})
                    cmd = pending = NEUTRAL_COMMAND
                    state = replace(state, prearm=False)

        if k % sec_steps == 0:
            if kind == "sg-nmg":
                cmd = pending
                if cmd.prearm and not state.prearm:
                    state = apply_protection(state, PREARM, events)
                elif not cmd.prearm and state.prearm:
                    state = replace(state, prearm=False)
            elif secondary is not None:
                cmd = SecondaryCommand(df_offset=secondary.step(state.delta_f, spec.secondary_period))

        hops["t"][h] = t
        for name in FEATURE_NAMES[:5]:
            hops[name][h] = getattr(fv, name)
        hops["persistence"][h] = fv.persistence
        hops["a"][h] = drive.a
        hops["s_out"][h] = s_out
        hops["g"][h] = gf.g
        hops["i_mag"][h] = decision.i_mag
        hops["confidence"][h] = decision.confidence
        hops["decision"][h] = decision.kind
        hops["trip_threshold_bias"][h] = cmd.trip_threshold_bias
        hops["ess_predispatch"][h] = cmd.ess_predispatch
        hops["df_offset"][h] = cmd.df_offset

    events.sort(key=lambda e: e["t"])
    faults = [{"t": i.t_start, "element": i.element} for i in injections if i.kind == "Fault"]
    meta = {
        "name": spec.name,
        "controller": kind,
        "seed": spec.seed,
        "ground_truth": spec.ground_truth,
        "dt": dt,
        "hop": spec.hop,
        "duration": spec.duration,
        "rocof_limit": spec.thresholds.precursor.rocof,
        "faults": faults,
        "first_disturbance": min((i.t_start for i in injections), default=None),
        "final_decision": None if final_kind is None else {
            "kind": final_kind,
            "label": final_label[0],
            "confidence": final_label[1],
            "features": dict(zip(FEATURE_NAMES, final_summary.as_tuple()))},
    }
    return Trace(meta, steps, hops, events).finalize()


def run_kpis(spec: ScenarioSpec, policy: PolicyState | None = None) -> KpiReport:
    return compute_kpis(run(spec, policy))


def _run_one(args):
    spec, policy = args
    return run(spec, policy)


def run_batch(specs: Sequence[ScenarioSpec], policy: PolicyState | None = None,
              parallelism: int = 1) -> list[Trace]:
    """Run independent scenarios; results keep the order of ``specs``."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    jobs = [(s, policy) for s in specs]
    if parallelism == 1 or len(specs) < 2:
        return [_run_one(j) for j in jobs]
    # honor the requested width even past the core count so the pooled
    # path is what runs (and is tested) whenever parallelism > 1
    with ProcessPoolExecutor(max_workers=min(parallelism, len(specs))) as pool:
        return list(pool.map(_run_one, jobs))


def _final_features(trace: Trace) -> FeatureVector | None:
    fd = trace.meta.get("final_decision")
    if fd is None:
        return None
    return FeatureVector(**fd["features"])


@dataclass
class TrainingLog:
    rewards: list = field(default_factory=list)
    actions: list = field(default_factory=list)


def train(specs: Sequence[ScenarioSpec], policy: PolicyState, episodes: int | None = None,
          seed: int = 0, weights: RewardWeights = RewardWeights()) -> tuple[PolicyState, TrainingLog]:
    """Contextual-bandit training: one update per episode with a precursor."""
    if policy.mode != "Learned":
        raise ValueError("train needs a Learned policy")
    if not specs:
        raise ValueError("no training scenarios")
    rng = np.random.default_rng(seed)
    episodes = len(specs) if episodes is None else episodes
    log = TrainingLog()
    for ep in range(episodes):
        spec = specs[ep % len(specs)]
        trace = run(spec, policy, rng)
        fv = _final_features(trace)
        if fv is None:
            continue
        r = reward(compute_kpis(trace), weights)
        action = trace.meta["final_decision"]["kind"]
        label = "Harmful" if spec.ground_truth == "Harmful" else "Harmless"
        policy = update(policy, fv, action, r, label)
        log.rewards.append(r)
        log.actions.append(action)
    return policy, log


EXPECTED = {"Benign": "Inhibit", "Harmful": "Facilitate"}


@dataclass
class Evaluation:
    accuracy: float
    decisions: list
    reports: list

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "decisions": self.decisions,
                "reports": [r.to_dict() for r in self.reports]}


def evaluate(specs: Sequence[ScenarioSpec], policy: PolicyState, parallelism: int = 1) -> Evaluation:
    """Greedy rollouts; a decision is correct when it inhibits benign precursors
    and facilitates harmful ones."""
    if not specs:
        raise ValueError("no evaluation scenarios")
    greedy = replace(policy, epsilon=0.0)
    traces = run_batch(specs, greedy, parallelism)
    decisions, correct = [], 0
    for spec, tr in zip(specs, traces):
        fd = tr.meta.get("final_decision")
        kind = "Neutral" if fd is None else fd["kind"]
        ok = kind == EXPECTED[spec.ground_truth]
        correct += ok
        decisions.append({"scenario": spec.name, "ground_truth": spec.ground_truth,
                          "decision": kind, "correct": bool(ok)})
    return Evaluation(correct / len(specs), decisions, [compute_kpis(t) for t in traces])


def train_bel(spec: ScenarioSpec, episodes: int, bel: BelController | None = None):
    """Repeat one scenario with a learning BEL controller; the reinforcement of
    each episode is one minus the residual deviation of the previous one."""
    spec = spec.with_controller("bel")
    ctrl = bel if bel is not None else _bel_controller(spec)
    areas = []
    for _ in range(episodes):
        ctrl.integ = 0.0
        trace = run(spec, bel=ctrl)
        areas.append(compute_kpis(trace).freq_dev_area)
        ctrl.rew = float(max(0.0, 1.0 - abs(trace.steps["delta_f"][-1]) / ctrl.f_scale))
    return ctrl, areas
