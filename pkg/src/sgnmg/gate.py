"""Gate logic: gating factor, gated drive and secondary command synthesis."""

from __future__ import annotations

from dataclasses import dataclass

from .plant import SecondaryCommand
from .reflex import ReflexDrive
from .supervisor import SupervisoryDecision

RATIONALES = ("PPI", "PPF", "Neutral")


class GateError(RuntimeError):
    """Drive and decision do not belong to the same decision cycle."""


@dataclass(frozen=True)
class GateParams:
    g_min: float = 0.0
    g_max: float = 2.0
    k_i: float = 1.0
    k_f: float = 1.0
    p_sat: int = 5
    b: float = 0.5
    d: float = 0.05
    p_ess_max_share: float = 0.5
    k_df: float = 0.0002
    k_dv: float = 0.005
    # gated drive at which a proposed protection action is executed
    act_level: float = 1.0
    # after a trip or shed the supervisor ignores detections this long (s):
    # the transient that follows is the action's own aftermath
    post_action_blank: float = 1.0
    hop: float = 0.01

    def __post_init__(self):
        if not self.g_min <= 1.0 <= self.g_max:
            raise ValueError("need g_min <= 1 <= g_max")


@dataclass(frozen=True)
class GateFactor:
    g: float
    rationale_kind: str

    def __post_init__(self):
        if self.rationale_kind not in RATIONALES:
            raise ValueError(f"unknown rationale {self.rationale_kind!r}")
        ok = {"PPI": self.g < 1.0, "PPF": self.g > 1.0, "Neutral": self.g == 1.0}
        if not ok[self.rationale_kind]:
            raise ValueError(f"g={self.g} inconsistent with {self.rationale_kind}")


NEUTRAL_GATE = GateFactor(1.0, "Neutral")


@dataclass(frozen=True)
class GatedResponse:
    s_out: float
    source_drive: ReflexDrive
    decision: SupervisoryDecision
    g: GateFactor


def gating_factor(decision: SupervisoryDecision, persistence: int = 0,
                  t_since_precursor: float = 0.0,
                  params: GateParams = GateParams()) -> GateFactor:
    """g < 1 for inhibition, g > 1 for facilitation, exactly 1 otherwise.

    A precursor that has persisted ``p_sat`` windows is no longer treated as
    a prepulse and passes through neutrally.
    """
    if persistence >= params.p_sat or decision.kind == "Neutral":
        return NEUTRAL_GATE
    if decision.kind == "Inhibit":
        g = 1.0 - params.k_i * decision.confidence
    else:
        g = 1.0 + params.k_f * decision.confidence
    g = min(params.g_max, max(params.g_min, g))
    if g < 1.0:
        return GateFactor(g, "PPI")
    if g > 1.0:
        return GateFactor(g, "PPF")
    return NEUTRAL_GATE


def gate(drive: ReflexDrive, decision: SupervisoryDecision, g: GateFactor,
         hop: float | None = GateParams.hop) -> GatedResponse:
    """s_out = max(0, a - i_mag) * g."""
    if hop is not None and abs(drive.t - decision.t) > hop + 1e-9:
        raise GateError(f"drive at t={drive.t} and decision at t={decision.t} "
                        "are more than one hop apart")
    s_out = max(0.0, drive.a - decision.i_mag) * g.g
    return GatedResponse(s_out, drive, decision, g)


def synthesize_commands(resp: GatedResponse, ess_p_max: float = 1.0,
                        params: GateParams = GateParams()) -> SecondaryCommand:
    kind = resp.g.rationale_kind
    g = resp.g.g
    if kind == "PPI":
        return SecondaryCommand(
            trip_threshold_bias=params.b * (1.0 - g),
            trip_delay_bias=params.d * (1.0 - g),
            shed_desensitize=True,
            ess_predispatch=0.0,
        )
    if kind == "PPF":
        # the reflex floors effective delays at zero
        return SecondaryCommand(
            trip_threshold_bias=-params.b * (g - 1.0),
            trip_delay_bias=-params.d * (g - 1.0),
            prearm=True,
            ess_predispatch=min(ess_p_max, resp.s_out * params.p_ess_max_share * ess_p_max),
            df_offset=params.k_df * resp.s_out,
            dv_offset=params.k_dv * resp.s_out,
        )
    return SecondaryCommand()
