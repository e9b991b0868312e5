"""Run traces, KPI computation, controller comparison and CSV/JSON/SVG output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

KPI_NAMES = ("freq_dev_area", "nadir", "overshoot", "rocof_violations", "false_trips",
             "missed_faults", "ess_stress", "served_fraction")
FORMATS = ("csv", "json", "svg")
# a fault counts as cleared if a trip or shed lands within this time of its onset
CLEARING_WINDOW = 0.2


class ReportError(ValueError):
    pass


def quantize(x: np.ndarray) -> np.ndarray:
    """Round to 9 significant digits, the precision written to CSV."""
    x = np.asarray(x, dtype=float)
    return np.array([float(f"{v:.9g}") for v in x.ravel()]).reshape(x.shape)


@dataclass
class Trace:
    """Everything a run produced.

    ``steps`` has one row per simulation step, ``hops`` one row per analytics
    hop. Numeric channels are quantized so they survive a CSV round trip.
    """

    meta: dict
    steps: dict
    hops: dict
    events: list = field(default_factory=list)

    def finalize(self) -> "Trace":
        for table in (self.steps, self.hops):
            for k, v in table.items():
                arr = np.asarray(v)
                if arr.dtype.kind == "f":
                    table[k] = quantize(arr)
        return self

    @property
    def actions(self) -> list[dict]:
        return [e for e in self.events if e["type"] in ("action", "hard_override")]

    @property
    def protective_actions(self) -> list[dict]:
        return [e for e in self.actions if e["action"].startswith(("Trip", "Shed"))]

    def same_as(self, other: "Trace") -> bool:
        if self.meta != other.meta or self.events != other.events:
            return False
        for a, b in ((self.steps, other.steps), (self.hops, other.hops)):
            if a.keys() != b.keys():
                return False
            for k in a:
                if not np.array_equal(np.asarray(a[k]), np.asarray(b[k])):
                    return False
        return True


@dataclass(frozen=True)
class KpiReport:
    freq_dev_area: float
    nadir: float
    overshoot: float
    rocof_violations: int
    false_trips: int
    missed_faults: int
    ess_stress: float
    served_fraction: float
    scenario: str = ""
    controller: str = ""

    def __post_init__(self):
        for name in KPI_NAMES:
            if not math.isfinite(getattr(self, name)):
                raise ReportError(f"KPI {name} is not finite")

    def values(self) -> dict:
        return {k: getattr(self, k) for k in KPI_NAMES}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "KpiReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def compute_kpis(trace: Trace, ground_truth: str | None = None) -> KpiReport:
    """KPIs of one trace; ``ground_truth`` overrides the label stored in it."""
    meta = trace.meta
    dt = float(meta["dt"])
    s = trace.steps
    df = np.asarray(s["delta_f"], dtype=float)
    if df.size == 0:
        raise ReportError("trace has no steps")
    t = np.asarray(s["t"], dtype=float)
    area = float(np.sum(np.abs(df)) * dt)
    nadir = float(min(0.0, df.min()))
    t_first = meta.get("first_disturbance")
    overshoot = 0.0
    if t_first is not None:
        after = df[t >= t_first]
        if after.size:
            overshoot = float(max(0.0, after.max()))

    rocof = np.asarray(trace.hops.get("rocof", ()), dtype=float)
    violations = int(np.sum(rocof > float(meta.get("rocof_limit", 0.5))))

    protective = trace.protective_actions
    truth = ground_truth if ground_truth is not None else meta.get("ground_truth")
    false_trips = int(truth == "Benign" and bool(protective))

    missed = 0
    for fault in meta.get("faults", ()):
        tf, element = float(fault["t"]), fault["element"]
        cleared = any(tf - 1e-9 <= e["t"] <= tf + CLEARING_WINDOW for e in protective)
        col = s.get(f"breaker_{element}")
        if not cleared and col is not None:
            k = int(np.searchsorted(t, tf - 1e-9))
            cleared = k < len(col) and not col[k]
        missed += int(not cleared)

    ess = float(np.sum(np.abs(np.asarray(s["p_ess"], dtype=float))) * dt)
    load = float(np.sum(np.asarray(s["p_load"], dtype=float)))
    served = float(np.sum(np.asarray(s["p_served"], dtype=float)))
    served_fraction = served / load if load > 0 else 1.0
    return KpiReport(area, nadir, overshoot, violations, false_trips, missed, ess,
                     served_fraction, meta.get("name", ""), meta.get("controller", ""))


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------
@dataclass
class ComparisonTable:
    controllers: list
    scenarios: list
    means: dict          # controller -> kpi -> mean
    totals: dict         # controller -> kpi -> sum
    deltas: dict         # controller -> kpi -> mean minus baseline mean
    baseline: str

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list[dict]:
        return [{"controller": c, **self.means[c]} for c in self.controllers]


def compare(reports: Mapping[str, Sequence[KpiReport]], baseline: str | None = None) -> ComparisonTable:
    """Side-by-side KPI means per controller over the same scenario suite."""
    if len(reports) < 2:
        raise ReportError("compare needs at least two controllers")
    names = list(reports)
    suites = {c: [r.scenario for r in reports[c]] for c in names}
    ref = suites[names[0]]
    for c in names[1:]:
        if sorted(suites[c]) != sorted(ref):
            raise ReportError(f"controller {c!r} was run on a different suite")
    if not ref:
        raise ReportError("empty suite")
    baseline = baseline or names[0]
    if baseline not in reports:
        raise ReportError(f"unknown baseline {baseline!r}")
    means, totals = {}, {}
    for c in names:
        vals = {k: [getattr(r, k) for r in reports[c]] for k in KPI_NAMES}
        means[c] = {k: float(np.mean(v)) for k, v in vals.items()}
        totals[c] = {k: float(np.sum(v)) for k, v in vals.items()}
    deltas = {c: {k: means[c][k] - means[baseline][k] for k in KPI_NAMES} for c in names}
    return ComparisonTable(names, sorted(ref), means, totals, deltas, baseline)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def _write_table(path: Path, table: Mapping[str, np.ndarray]) -> None:
    cols = list(table)
    arrays = [np.asarray(table[c]) for c in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*arrays):
            w.writerow([f"{v:.9g}" if isinstance(v, (float, np.floating)) else
                        (int(v) if isinstance(v, (bool, np.bool_)) else v) for v in row])


def _read_table(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ReportError(f"{path} is empty")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(rows[0])
    out = {}
    for name, col in zip(rows[0], cols):
        try:
            arr = np.array([float(v) for v in col])
            if name.startswith("breaker_"):
                arr = arr.astype(bool)
        except ValueError:
            arr = np.array(col, dtype=object)
        out[name] = arr
    return out


def _jsonable(table: Mapping) -> dict:
    return {k: np.asarray(v).tolist() for k, v in table.items()}


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def emit_trace(trace: Trace, out_dir, formats: Sequence[str] = FORMATS) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ReportError(f"unknown format(s) {sorted(bad)}")
    written = []
    if "csv" in formats:
        _write_table(out / "steps.csv", trace.steps)
        _write_table(out / "hops.csv", trace.hops)
        written += [out / "steps.csv", out / "hops.csv"]
    if "json" in formats:
        _dump_json(out / "trace.json", {"meta": trace.meta, "events": trace.events,
                                        "steps": _jsonable(trace.steps),
                                        "hops": _jsonable(trace.hops)})
        written.append(out / "trace.json")
    _dump_json(out / "meta.json", trace.meta)
    _dump_json(out / "events.json", trace.events)
    written += [out / "meta.json", out / "events.json"]
    if len(trace.steps.get("t", ())):
        _dump_json(out / "kpis.json", compute_kpis(trace).to_dict())
        written.append(out / "kpis.json")
    if "svg" in formats:
        written += write_trace_plots(trace, out)
    return written


def load_trace(path) -> Trace:
    """Reload a trace written by :func:`emit_trace` (CSV or JSON form)."""
    path = Path(path)
    if path.is_file():
        d = json.loads(path.read_text())
        return _trace_from_json(d)
    if (path / "steps.csv").exists():
        meta = json.loads((path / "meta.json").read_text())
        events = json.loads((path / "events.json").read_text())
        return Trace(meta, _read_table(path / "steps.csv"), _read_table(path / "hops.csv"), events)
    if (path / "trace.json").exists():
        return _trace_from_json(json.loads((path / "trace.json").read_text()))
    raise ReportError(f"no trace found in {path}")


def _trace_from_json(d: Mapping) -> Trace:
    def table(t):
        out = {}
        for k, v in t.items():
            arr = np.asarray(v)
            out[k] = arr.astype(bool) if k.startswith("breaker_") else arr
        return out
    return Trace(d["meta"], table(d["steps"]), table(d["hops"]), d["events"])


def emit_comparison(table: ComparisonTable, out_dir, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        _dump_json(out / "comparison.json", table.to_dict())
        written.append(out / "comparison.json")
    if "csv" in formats:
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["controller", *KPI_NAMES])
            w.writeheader()
            for row in table.rows():
                w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})
        written.append(out / "comparison.csv")
    if "svg" in formats:
        written.append(write_bar_chart(table, out / "comparison.svg"))
    return written


def emit_reports(reports: Sequence[KpiReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["scenario", "controller", *KPI_NAMES])
        w.writeheader()
        for r in reports:
            w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in r.to_dict().items()})
    return path


def emit(obj, fmt: str, path) -> list[Path]:
    """Write a Trace, KpiReport or ComparisonTable in one format.

    Traces and tables go into the directory ``path``; a KpiReport is written
    to the file ``path``.
    """
    if fmt not in FORMATS:
        raise ReportError(f"unknown format {fmt!r}")
    try:
        if isinstance(obj, Trace):
            return emit_trace(obj, path, (fmt,))
        if isinstance(obj, ComparisonTable):
            return emit_comparison(obj, path, (fmt,))
        if isinstance(obj, KpiReport):
            path = Path(path)
            if fmt == "json":
                _dump_json(path, obj.to_dict())
            elif fmt == "csv":
                emit_reports([obj], path)
            else:
                raise ReportError("a KpiReport has no SVG form")
            return [path]
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    raise ReportError(f"cannot emit {type(obj).__name__}")


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_lines(x: np.ndarray, series: Mapping[str, np.ndarray], title: str,
              markers: Sequence[tuple] = (), width: int = 720, height: int = 260,
              max_points: int = 2000) -> str:
    """Minimal polyline chart; ``markers`` are (x, label) vertical rules."""
    x = np.asarray(x, dtype=float)
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 30
    w, h = width - pad_l - pad_r, height - pad_t - pad_b
    stride = max(1, len(x) // max_points)
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    lo = min((float(np.min(y)) for y in ys if y.size), default=0.0)
    hi = max((float(np.max(y)) for y in ys if y.size), default=1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = (float(x[0]), float(x[-1])) if x.size else (0.0, 1.0)
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    sx = lambda v: pad_l + (v - x0) / (x1 - x0) * w
    sy = lambda v: pad_t + (hi - v) / (hi - lo) * h
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad_l}" y="18" font-size="13" font-family="sans-serif">{escape(title)}</text>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{w}" height="{h}" fill="none" stroke="#999"/>',
        f'<text x="4" y="{pad_t + 10}" font-size="10">{hi:.4g}</text>',
        f'<text x="4" y="{pad_t + h}" font-size="10">{lo:.4g}</text>',
        f'<text x="{pad_l}" y="{height - 8}" font-size="10">{x0:.3g} s</text>',
        f'<text x="{pad_l + w - 30}" y="{height - 8}" font-size="10">{x1:.3g} s</text>',
    ]
    for tx, label in markers:
        if x0 <= tx <= x1:
            px = sx(tx)
            parts.append(f'<line x1="{px:.1f}" y1="{pad_t}" x2="{px:.1f}" y2="{pad_t + h}" '
                         'stroke="#aaa" stroke-dasharray="3,3"/>')
            parts.append(f'<text x="{px + 2:.1f}" y="{pad_t + 10}" font-size="9" fill="#555">'
                         f'{escape(str(label))}</text>')
    for i, (name, y) in enumerate(zip(series, ys)):
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[::stride], y[::stride]))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{pad_l + w - 120}" y="{pad_t + 14 + 12 * i}" font-size="10" '
                     f'fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trace_plots(trace: Trace, out_dir) -> list[Path]:
    out = Path(out_dir)
    markers = [(e["t"], e.get("action") or e.get("kind") or e["type"]) for e in trace.events
               if e["type"] in ("injection", "action", "hard_override")]
    s, hp = trace.steps, trace.hops
    plots = {
        "frequency.svg": (s["t"], {"delta_f (pu)": s["delta_f"]}, "Frequency deviation"),
        "voltage.svg": (s["t"], {"v (pu)": s["v"]}, "Bus voltage"),
        "gate.svg": (hp["t"], {"g": hp["g"], "s_out": hp["s_out"], "a": hp["a"]},
                     "Reflex drive and gating"),
    }
    paths = []
    for fname, (x, series, title) in plots.items():
        p = out / fname
        p.write_text(svg_lines(x, series, f"{trace.meta.get('name', '')}: {title}", markers))
        paths.append(p)
    return paths


def write_bar_chart(table: ComparisonTable, path, kpis: Sequence[str] = KPI_NAMES) -> Path:
    path = Path(path)
    width, row_h = 720, 22
    n = len(table.controllers)
    height = 30 + len(kpis) * (n * row_h + 16)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    y = 20
    for kpi in kpis:
        vals = [table.means[c][kpi] for c in table.controllers]
        scale = max(abs(v) for v in vals) or 1.0
        parts.append(f'<text x="10" y="{y}" font-size="12" font-family="sans-serif">{kpi}</text>')
        y += 6
        for i, (c, v) in enumerate(zip(table.controllers, vals)):
            bw = abs(v) / scale * 400
            parts.append(f'<rect x="160" y="{y}" width="{bw:.1f}" height="{row_h - 6}" '
                         f'fill="{_COLORS[i % len(_COLORS)]}"/>')
            parts.append(f'<text x="20" y="{y + 12}" font-size="10">{escape(c)}</text>')
            parts.append(f'<text x="{165 + bw:.1f}" y="{y + 12}" font-size="10">{v:.4g}</text>')
            y += row_h
        y += 10
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path
