"""Secondary-layer comparison controllers: brain emotional learning (BEL) and PI."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


# ---------------------------------------------------------------------------
# BEL
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BelState:
    v_w: tuple = (0.0, 0.0)     # amygdala weights
    v_th: float = 0.0           # thalamic shortcut weight
    w_o: tuple = (0.0, 0.0)     # orbitofrontal weights
    alpha: float = 0.2
    beta: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "v_w", tuple(float(x) for x in self.v_w))
        object.__setattr__(self, "w_o", tuple(float(x) for x in self.w_o))
        if len(self.v_w) != len(self.w_o):
            raise ValueError("v_w and w_o need one weight per stimulus channel")
        if not (0 < self.alpha <= 1 and 0 < self.beta <= 1):
            raise ValueError("alpha and beta must lie in (0, 1]")
        if not all(math.isfinite(x) for x in (*self.v_w, *self.w_o, self.v_th)):
            raise ValueError("BEL weights must be finite")


@dataclass(frozen=True)
class BelInput:
    s: tuple
    rew: float

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(float(x) for x in self.s))
        if not all(math.isfinite(x) for x in (*self.s, self.rew)):
            raise ValueError("BEL inputs must be finite")


def bel_pathways(state: BelState, inp: BelInput) -> tuple[float, float]:
    """(amygdala output A, orbitofrontal output O)."""
    s = np.asarray(inp.s)
    a = float(np.dot(state.v_w, s)) + state.v_th * float(s.max(initial=0.0))
    o = float(np.dot(state.w_o, s))
    return a, o


def bel_output(state: BelState, inp: BelInput) -> float:
    """Excitatory minus inhibitory pathway."""
    a, o = bel_pathways(state, inp)
    return a - o


def bel_update(state: BelState, inp: BelInput, a_out: float, e_out: float) -> BelState:
    """Amygdala learns only when it under-predicts the reinforcement;
    the orbitofrontal weights track the output error."""
    s = np.asarray(inp.s)
    dv = state.alpha * s * max(0.0, inp.rew - a_out)
    dw = state.beta * s * (e_out - inp.rew)
    return replace(state, v_w=tuple(np.asarray(state.v_w) + dv),
                   w_o=tuple(np.asarray(state.w_o) + dw))


@dataclass
class BelController:
    """BEL on the secondary loop, acting through the droop offset.

    Stimuli are ``|df| / f_scale`` and the clipped magnitude of the
    integrated deviation; the output sign follows the integrated error.
    """

    state: BelState = field(default_factory=BelState)
    rew: float = 1.0
    f_scale: float = 0.01
    i_scale: float = 0.01
    i_clip: float = 1.0
    k_out: float = 0.002
    learn: bool = True
    integ: float = 0.0

    def step(self, delta_f: float, dt: float) -> float:
        self.integ += delta_f * dt
        s = (abs(delta_f) / self.f_scale,
             min(self.i_clip, abs(self.integ) / self.i_scale))
        inp = BelInput(s, self.rew)
        a, o = bel_pathways(self.state, inp)
        e = a - o
        if self.learn:
            self.state = bel_update(self.state, inp, a, e)
        sign = 1.0 if self.integ < 0 else -1.0
        return sign * self.k_out * e


# ---------------------------------------------------------------------------
# PI
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PiState:
    kp: float = 0.05
    ki: float = 0.2
    integ: float = 0.0
    out_min: float = -0.02
    out_max: float = 0.02

    def __post_init__(self):
        if self.out_min > self.out_max:
            raise ValueError("out_min must not exceed out_max")


def pi_step(state: PiState, error: float, dt: float) -> tuple[float, PiState]:
    """PI with clamping anti-windup: the integrator freezes while saturated."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    integ = state.integ + error * dt
    u = state.kp * error + state.ki * integ
    if u > state.out_max:
        return state.out_max, state
    if u < state.out_min:
        return state.out_min, state
    return u, replace(state, integ=integ)


@dataclass
class PiController:
    state: PiState = field(default_factory=PiState)

    def step(self, delta_f: float, dt: float) -> float:
        u, self.state = pi_step(self.state, -delta_f, dt)
        return u
