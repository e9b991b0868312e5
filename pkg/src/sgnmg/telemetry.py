"""PMU-style sampling and windowed feature extraction."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .injections import MAX_ORDER

#: large finite stand-in for "no precursor seen yet"
NO_PRECURSOR = 1e9

FEATURE_NAMES = ("sag_depth", "sag_duration", "rocof", "thd", "df_mag",
                 "persistence", "t_since_precursor")


class TelemetryError(ValueError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    window_len: float = 0.1
    hop: float = 0.01
    fs: float = 10_000.0
    f0: float = 50.0
    k_max: int = 25

    def steps(self, dt: float) -> int:
        return int(round(self.window_len / dt))

    def samples(self) -> int:
        return int(round(self.window_len * self.fs))


@dataclass(frozen=True)
class FeatureThresholds:
    """Per-feature limits; used both as precursor and fault-level sets."""

    sag: float = 0.05
    thd: float = 0.05
    rocof: float = 0.5
    df: float = 0.01

    def crossed(self, fv: "FeatureVector") -> dict:
        return {
            "sag": fv.sag_depth > self.sag,
            "thd": fv.thd > self.thd,
            "rocof": fv.rocof > self.rocof,
            "df": fv.df_mag > self.df,
        }

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "FeatureThresholds":
        return cls(**dict(d or {}))


FAULT_THRESHOLDS = FeatureThresholds(sag=0.3, thd=0.25, rocof=2.0, df=0.02)


@dataclass(frozen=True)
class Thresholds:
    precursor: FeatureThresholds = field(default_factory=FeatureThresholds)
    fault: FeatureThresholds = FAULT_THRESHOLDS

    def to_dict(self) -> dict:
        return {"precursor": asdict(self.precursor), "fault": asdict(self.fault)}

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "Thresholds":
        d = dict(d or {})
        return cls(
            precursor=FeatureThresholds.from_dict(d.get("precursor")),
            fault=FeatureThresholds.from_dict(d.get("fault", asdict(FAULT_THRESHOLDS))),
        )


@dataclass(frozen=True)
class TelemetryFrame:
    t: float
    f: float
    v_rms: float
    pow_samples: np.ndarray


@dataclass(frozen=True)
class TelemetryWindow:
    """A sliding window of frames in columnar form."""

    t: np.ndarray
    f: np.ndarray
    v_rms: np.ndarray
    pow_samples: np.ndarray

    @classmethod
    def from_frames(cls, frames: Sequence[TelemetryFrame]) -> "TelemetryWindow":
        if not frames:
            raise TelemetryError("empty frame window")
        return cls(
            t=np.array([fr.t for fr in frames]),
            f=np.array([fr.f for fr in frames]),
            v_rms=np.array([fr.v_rms for fr in frames]),
            pow_samples=np.asarray(frames[-1].pow_samples),
        )


@dataclass(frozen=True)
class FeatureVector:
    sag_depth: float = 0.0
    sag_duration: float = 0.0
    rocof: float = 0.0
    thd: float = 0.0
    df_mag: float = 0.0
    persistence: int = 0
    t_since_precursor: float = NO_PRECURSOR

    def __post_init__(self):
        if self.sag_depth < 0 or self.thd < 0 or self.persistence < 0:
            raise ValueError("sag_depth, thd and persistence must be >= 0")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, n) for n in FEATURE_NAMES)

    def merged_max(self, other: "FeatureVector") -> "FeatureVector":
        """Element-wise max; used to summarize a precursor run."""
        return FeatureVector(
            sag_depth=max(self.sag_depth, other.sag_depth),
            sag_duration=max(self.sag_duration, other.sag_duration),
            rocof=max(self.rocof, other.rocof),
            thd=max(self.thd, other.thd),
            df_mag=max(self.df_mag, other.df_mag),
            persistence=max(self.persistence, other.persistence),
            t_since_precursor=other.t_since_precursor,
        )


PRECURSOR_KINDS = ("Sag", "HarmonicBurst", "LoadFluctuation")


@dataclass(frozen=True)
class PrecursorEvent:
    t_detect: float
    kind: str
    features: FeatureVector


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------
def synthesize(v_rms: np.ndarray, harm: np.ndarray, dt: float,
               cfg: WindowConfig = WindowConfig()) -> np.ndarray:
    """Point-on-wave samples for per-step RMS voltage and harmonic content."""
    sub = int(round(dt * cfg.fs))
    if sub < 1:
        raise TelemetryError("simulation step shorter than one sample")
    return kernels.synth_pow(np.ascontiguousarray(v_rms, dtype=float),
                             np.ascontiguousarray(harm, dtype=float),
                             sub, float(cfg.fs), float(cfg.f0))


def sample(delta_f: float, v_rms: float, t: float = 0.0,
           harmonics: Mapping[int, float] | None = None,
           cfg: WindowConfig = WindowConfig(), dt: float = 0.001) -> TelemetryFrame:
    """Frame for a plant held at one operating point across the window.

    ``harmonics`` maps order to amplitude relative to the fundamental.
    """
    n = cfg.steps(dt)
    harm = np.zeros((n, MAX_ORDER + 1))
    harm[:, 1] = 1.0
    for order, amp in (harmonics or {}).items():
        harm[:, int(order)] += amp
    pow_samples = synthesize(np.full(n, float(v_rms)), harm, dt, cfg)
    return TelemetryFrame(t=t, f=cfg.f0 * (1.0 + delta_f), v_rms=v_rms,
                          pow_samples=pow_samples)


class TelemetryBus:
    """Run-long per-step history the analytics window slides over.

    The history is pre-padded with one window of the initial operating point
    so the first windows are full.
    """

    def __init__(self, n_steps: int, dt: float, v0: float, f0: float,
                 cfg: WindowConfig = WindowConfig()):
        self.cfg = cfg
        self.dt = dt
        self.f0 = f0
        self.pad = cfg.steps(dt)
        size = self.pad + n_steps
        self.t = (np.arange(size) - self.pad) * dt
        self.f = np.full(size, float(f0))
        self.v = np.full(size, float(v0))
        self.harm = np.zeros((size, MAX_ORDER + 1))
        self.harm[:, 1] = 1.0
        self.n = self.pad

    def push(self, t: np.ndarray, delta_f: np.ndarray, v: np.ndarray, harm: np.ndarray):
        m = len(t)
        sl = slice(self.n, self.n + m)
        self.t[sl] = t
        self.f[sl] = self.f0 * (1.0 + delta_f)
        self.v[sl] = v
        self.harm[sl] = harm
        self.n += m

    def window(self) -> TelemetryWindow:
        sl = slice(self.n - self.pad, self.n)
        pow_samples = synthesize(self.v[sl], self.harm[sl], self.dt, self.cfg)
        return TelemetryWindow(t=self.t[sl], f=self.f[sl], v_rms=self.v[sl],
                               pow_samples=pow_samples)


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------
def _as_window(frames) -> TelemetryWindow:
    if isinstance(frames, TelemetryWindow):
        return frames
    return TelemetryWindow.from_frames(list(frames))


def rocof(frames) -> float:
    """Least-squares slope of frequency over the window, Hz/s (signed)."""
    w = _as_window(frames)
    if len(w.t) < 2:
        raise TelemetryError("rocof needs at least two frames")
    return float(kernels.ls_slope(np.ascontiguousarray(w.t, dtype=float),
                                  np.ascontiguousarray(w.f, dtype=float)))


def harmonic_amplitudes(pow_samples: np.ndarray, cfg: WindowConfig = WindowConfig()) -> np.ndarray:
    x = np.ascontiguousarray(pow_samples, dtype=float)
    return kernels.dft_amplitudes(x, float(cfg.fs), float(cfg.f0), int(cfg.k_max))


def thd(pow_samples: np.ndarray, cfg: WindowConfig = WindowConfig()) -> float:
    """sqrt(sum |c_k|^2, k=2..K) / |c_1| on exact harmonic bins.

    The window must span an integer number of fundamental cycles.
    """
    n = len(pow_samples)
    cycles = n * cfg.f0 / cfg.fs
    if abs(cycles - round(cycles)) > 1e-9 or round(cycles) < 1:
        raise TelemetryError(f"window holds {cycles:g} cycles; need an integer number")
    amps = harmonic_amplitudes(pow_samples, cfg)
    if amps[0] < 1e-9:
        raise TelemetryError("no fundamental in window; THD undefined")
    return float(math.sqrt(float(np.sum(amps[1:] ** 2))) / amps[0])


def _sag_runs(below: np.ndarray, carry: int) -> np.ndarray:
    runs = np.empty(len(below), dtype=np.int64)
    r = carry
    for i, b in enumerate(below):
        r = r + 1 if b else 0
        runs[i] = r
    return runs


class FeatureExtractor:
    """Stateful feature extraction over successive windows.

    Tracks sag runs across windows (so a sag longer than the window keeps
    its full length), event persistence and the time since the current
    event run began. Persistence counts consecutive window lengths with an
    event: it is 1 on the first event window and increments every further
    ``window_len`` of uninterrupted events, whatever the hop.
    """

    def __init__(self, thresholds: FeatureThresholds = FeatureThresholds(),
                 v0: float = 1.0, f0: float = 50.0,
                 cfg: WindowConfig = WindowConfig(), hop: float | None = None):
        self.thresholds = thresholds
        self.v0 = v0
        self.f0 = f0
        self.cfg = cfg
        self.hop = cfg.window_len if hop is None else hop
        self._last_t = -math.inf
        self._run_tail = 0
        self._runs = np.zeros(0, dtype=np.int64)
        self._runs_t = np.zeros(0)
        self._event_time = 0.0
        self._event_start = None

    def extract(self, frames) -> FeatureVector:
        w = _as_window(frames)
        t = w.t
        if len(t) < 2:
            raise TelemetryError("window needs at least two frames")
        dt = float(t[1] - t[0])
        below = w.v_rms < self.v0 - self.thresholds.sag

        # extend run-length bookkeeping with frames not seen before
        fresh = t > self._last_t + 0.5 * dt
        if fresh.any():
            first = int(np.argmax(fresh))
            contiguous = abs(t[first] - self._last_t - dt) < 0.5 * dt
            new_runs = _sag_runs(below[first:], self._run_tail if contiguous else 0)
            self._runs = np.concatenate([self._runs, new_runs])
            self._runs_t = np.concatenate([self._runs_t, t[first:]])
            self._run_tail = int(new_runs[-1])
            self._last_t = float(t[-1])
        keep = self._runs_t >= t[0] - 0.5 * dt
        self._runs = self._runs[keep]
        self._runs_t = self._runs_t[keep]
        sag_duration = float(self._runs.max()) * dt if len(self._runs) else 0.0

        fv = FeatureVector(
            sag_depth=max(0.0, float(self.v0 - w.v_rms.min())),
            sag_duration=sag_duration,
            rocof=abs(rocof(w)),
            thd=thd(w.pow_samples, self.cfg),
            df_mag=float(np.max(np.abs(w.f / self.f0 - 1.0))),
        )
        if any(self.thresholds.crossed(fv).values()):
            self._event_time += self.hop
            if self._event_start is None:
                self._event_start = float(t[-1])
        else:
            self._event_time = 0.0
            self._event_start = None
        persistence = int(math.ceil(self._event_time / self.cfg.window_len - 1e-9))
        since = NO_PRECURSOR if self._event_start is None else float(t[-1]) - self._event_start
        return replace(fv, persistence=persistence, t_since_precursor=since)


def extract_features(frames, thresholds: FeatureThresholds = FeatureThresholds(),
                     extractor: FeatureExtractor | None = None, **kw) -> FeatureVector:
    """Features of one window; pass ``extractor`` to carry state across windows."""
    ex = extractor if extractor is not None else FeatureExtractor(thresholds, **kw)
    return ex.extract(frames)


def detect_event(features: FeatureVector, thresholds: Thresholds = Thresholds(),
                 t: float = 0.0) -> PrecursorEvent | None:
    """Precursor when some feature passes its precursor threshold and none is fault-level."""
    pre = thresholds.precursor.crossed(features)
    if not any(pre.values()):
        return None
    if any(thresholds.fault.crossed(features).values()):
        return None
    if pre["sag"]:
        kind = "Sag"
    elif pre["thd"]:
        kind = "HarmonicBurst"
    else:
        kind = "LoadFluctuation"
    return PrecursorEvent(t_detect=t, kind=kind, features=features)


def is_fault_level(features: FeatureVector, thresholds: Thresholds = Thresholds()) -> bool:
    return any(thresholds.fault.crossed(features).values())
