"""Metric accumulation with an exact conservation ledger, CSV and SVG output.

Every run must satisfy, in integer bits,

    generated = delivered + dropped + residual

where residual counts frames still buffered or in flight when the horizon is
reached.  Violations are engine bugs and raise immediately.  Delay averages
are taken over delivered frames only; dropped frames contribute to the
dropping rate instead.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .framing import MULTIFRAME_WIRE_BITS, Slice
from .sim_core import ConfigurationError, SimulationError, ps_to_us

CSV_HEADER = [
    "scenario_id", "slice", "M", "B", "W", "N", "K", "seed",
    "offered_gbps", "normalized_load", "throughput_gbps", "dropping_gbps",
    "avg_queuing_us", "avg_total_delay_us",
    "delivered_frames", "dropped_frames", "residual_frames",
]


@dataclass(frozen=True)
class RawCounters:
    """Integer counters produced by a slice kernel for one run.

    All delay sums are picoseconds over delivered frames inside the
    measurement window; the ledger fields cover the whole run.
    """

    generated_frames: int = 0
    delivered_frames: int = 0
    dropped_frames: int = 0
    residual_buffered_frames: int = 0
    residual_inflight_frames: int = 0
    sum_queuing_ps: int = 0
    sum_propagation_ps: int = 0
    max_total_delay_ps: int = 0
    max_queuing_ps: int = 0

    @property
    def residual_frames(self) -> int:
        return self.residual_buffered_frames + self.residual_inflight_frames

    def check_conservation(self) -> None:
        total = self.delivered_frames + self.dropped_frames + self.residual_frames
        if total != self.generated_frames:
            raise SimulationError(
                "conservation ledger broken: generated "
                f"{self.generated_frames} != delivered {self.delivered_frames} "
                f"+ dropped {self.dropped_frames} + residual {self.residual_frames}")


@dataclass(frozen=True)
class MetricsReport:
    """Per-run averaged metrics plus the exact bit ledger behind them."""

    scenario_id: str
    slice: str
    seed: int
    horizon_us: float
    offered_gbps: float
    normalized_load: float
    throughput_gbps: float
    dropping_gbps: float
    avg_queuing_us: float
    avg_propagation_us: float
    avg_total_delay_us: float
    max_total_delay_us: float
    delivered_frames: int
    dropped_frames: int
    residual_frames: int
    generated_bits: int
    delivered_bits: int
    dropped_bits: int
    residual_bits: int
    goodput_gbps: float = 0.0
    M: int | None = None
    B: int | None = None
    W: int | None = None
    N: int | None = None
    K: int | None = None


def finalize(scenario_id: str, slice_tag: Slice, counters: RawCounters, *,
             seed: int, horizon_ps: int, offered_gbps: float,
             normalized_load: float, client_bits_per_frame: int,
             warmup_ps: int = 0, M: int | None = None, B: int | None = None,
             W: int | None = None, N: int | None = None,
             K: int | None = None) -> MetricsReport:
    """Turn raw kernel counters into a report; the ledger identity is enforced."""
    counters.check_conservation()
    window_ps = horizon_ps - warmup_ps
    if window_ps <= 0:
        raise ConfigurationError("measurement window is empty")
    window_s = window_ps * 1e-12
    delivered = counters.delivered_frames
    wire = MULTIFRAME_WIRE_BITS
    avg_q = ps_to_us(counters.sum_queuing_ps / delivered) if delivered else 0.0
    avg_p = ps_to_us(counters.sum_propagation_ps / delivered) if delivered else 0.0
    return MetricsReport(
        scenario_id=scenario_id,
        slice=slice_tag.label,
        seed=seed,
        horizon_us=ps_to_us(horizon_ps),
        offered_gbps=offered_gbps,
        normalized_load=normalized_load,
        throughput_gbps=delivered * wire / window_s / 1e9,
        dropping_gbps=counters.dropped_frames * wire / window_s / 1e9,
        avg_queuing_us=avg_q,
        avg_propagation_us=avg_p,
        avg_total_delay_us=avg_q + avg_p,
        max_total_delay_us=ps_to_us(counters.max_total_delay_ps),
        delivered_frames=delivered,
        dropped_frames=counters.dropped_frames,
        residual_frames=counters.residual_frames,
        generated_bits=counters.generated_frames * wire,
        delivered_bits=delivered * wire,
        dropped_bits=counters.dropped_frames * wire,
        residual_bits=counters.residual_frames * wire,
        goodput_gbps=delivered * client_bits_per_frame / window_s / 1e9,
        M=M, B=B, W=W, N=N, K=K,
    )


class SweepTable:
    """Ordered collection of MetricsReport rows across a sweep.

    Rows are kept sorted by (slice, scenario_id, normalized load, seed); mean
    rows aggregate the per-seed rows of one scenario and sort after them.
    """

    def __init__(self, rows: list[MetricsReport] | None = None):
        self.rows: list[MetricsReport] = list(rows or [])
        self._sort()

    def _sort(self) -> None:
        self.rows.sort(key=lambda r: (r.slice, r.scenario_id,
                                      r.normalized_load, r.offered_gbps, r.seed))

    def add(self, report: MetricsReport) -> None:
        self.rows.append(report)
        self._sort()

    def extend(self, reports) -> None:
        self.rows.extend(reports)
        self._sort()

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, SweepTable) and self.rows == other.rows

    def mean_rows(self) -> list[MetricsReport]:
        """One aggregated row per scenario, averaging metrics across seeds."""
        groups: dict[str, list[MetricsReport]] = {}
        for r in self.rows:
            groups.setdefault(r.scenario_id, []).append(r)
        means = []
        for sid in sorted(groups):
            rows = groups[sid]
            n = len(rows)
            proto = rows[0]
            means.append(replace(
                proto,
                seed=-1,
                throughput_gbps=sum(r.throughput_gbps for r in rows) / n,
                dropping_gbps=sum(r.dropping_gbps for r in rows) / n,
                avg_queuing_us=sum(r.avg_queuing_us for r in rows) / n,
                avg_propagation_us=sum(r.avg_propagation_us for r in rows) / n,
                avg_total_delay_us=sum(r.avg_total_delay_us for r in rows) / n,
                max_total_delay_us=max(r.max_total_delay_us for r in rows),
                delivered_frames=sum(r.delivered_frames for r in rows) // n,
                dropped_frames=sum(r.dropped_frames for r in rows) // n,
                residual_frames=sum(r.residual_frames for r in rows) // n,
                generated_bits=sum(r.generated_bits for r in rows) // n,
                delivered_bits=sum(r.delivered_bits for r in rows) // n,
                dropped_bits=sum(r.dropped_bits for r in rows) // n,
                residual_bits=sum(r.residual_bits for r in rows) // n,
                goodput_gbps=sum(r.goodput_gbps for r in rows) / n,
            ))
        return means

    def with_means(self) -> list[MetricsReport]:
        return self.rows + self.mean_rows()


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _row_cells(r: MetricsReport) -> list[str]:
    seed = "mean" if r.seed == -1 else str(r.seed)
    return [
        r.scenario_id, r.slice,
        _format_cell(r.M), _format_cell(r.B), _format_cell(r.W),
        _format_cell(r.N), _format_cell(r.K), seed,
        _format_cell(r.offered_gbps), _format_cell(r.normalized_load),
        _format_cell(r.throughput_gbps), _format_cell(r.dropping_gbps),
        _format_cell(r.avg_queuing_us), _format_cell(r.avg_total_delay_us),
        _format_cell(r.delivered_frames), _format_cell(r.dropped_frames),
        _format_cell(r.residual_frames),
    ]


def write_csv(table: SweepTable, path: str | Path) -> Path:
    """Write per-seed rows plus mean rows; re-emitting is byte-identical."""
    if not table.rows:
        raise ConfigurationError("refusing to write an empty sweep table")
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_HEADER)
    for r in table.with_means():
        writer.writerow(_row_cells(r))
    try:
        path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> list[dict]:
    """Parse a sweep CSV back into row dicts (ints/floats restored)."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header in {path}")
        for rec in reader:
            parsed = {}
            for key, text in rec.items():
                if text == "":
                    parsed[key] = None
                elif key in ("scenario_id", "slice") or (key == "seed" and text == "mean"):
                    parsed[key] = text
                else:
                    num = float(text)
                    parsed[key] = int(num) if num.is_integer() and "." not in text else num
            rows.append(parsed)
    return rows


# ---------------------------------------------------------------------------
# SVG figures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PanelSpec:
    """One chart: metric(s) vs load, one line per series value."""

    name: str
    left_metric: str
    left_label: str
    right_metric: str | None = None
    right_label: str | None = None


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    slice: str
    x_field: str                  # "offered_gbps" or "normalized_load"
    x_label: str
    series_field: str             # "M" or "W"
    series_values: tuple[int, ...]
    loads: tuple[float, ...]
    panels: tuple[PanelSpec, ...]


class MissingSeriesError(ConfigurationError):
    def __init__(self, figure_id: str, missing: list[tuple[int, float]]):
        self.missing = missing
        pairs = ", ".join(f"(series={v}, load={l:g})" for v, l in missing)
        super().__init__(f"figure {figure_id} is missing data points: {pairs}")


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]


def plot_sweep(table: SweepTable, spec: FigureSpec, out_dir: str | Path) -> list[Path]:
    """Emit one SVG per panel from the mean rows of a sweep table.

    Raises MissingSeriesError listing every absent (series value, load) pair
    rather than plotting holes.
    """
    if not spec.panels:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    means = [r for r in table.mean_rows() if r.slice == spec.slice]
    index: dict[tuple[int, float], MetricsReport] = {}
    for r in means:
        key_val = getattr(r, spec.series_field)
        x = getattr(r, spec.x_field)
        if key_val is not None:
            index[(key_val, round(x, 9))] = r
    missing = [(v, l) for v in spec.series_values for l in spec.loads
               if (v, round(l, 9)) not in index]
    if missing:
        raise MissingSeriesError(spec.figure_id, missing)
    paths = []
    for panel in spec.panels:
        series = []
        for i, v in enumerate(spec.series_values):
            pts = [(l, getattr(index[(v, round(l, 9))], panel.left_metric))
                   for l in spec.loads]
            series.append((f"{spec.series_field}={v}", "left", _PALETTE[i % len(_PALETTE)], pts))
        if panel.right_metric:
            for i, v in enumerate(spec.series_values):
                pts = [(l, getattr(index[(v, round(l, 9))], panel.right_metric))
                       for l in spec.loads]
                series.append((f"{spec.series_field}={v} ({panel.right_label})",
                               "right", _PALETTE[i % len(_PALETTE)], pts))
        svg = _dual_axis_chart(
            title=f"{spec.figure_id}: {spec.slice} {panel.name}",
            x_label=spec.x_label, left_label=panel.left_label,
            right_label=panel.right_label, series=series)
        path = out_dir / f"{spec.figure_id}_{panel.name}.svg"
        path.write_text(svg, encoding="utf-8", newline="")
        paths.append(path)
    return paths


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** int(f"{raw:e}".split("e")[1])
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = step * int(lo / step)
    if start < lo - 1e-12:
        start += step
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _dual_axis_chart(title: str, x_label: str, left_label: str,
                     right_label: str | None, series) -> str:
    """Deterministic SVG 1.1 dual-axis line chart; right-axis series dashed."""
    width, height = 720, 440
    ml, mr, mt, mb = 70, 70 if right_label else 25, 40, 55
    pw, ph = width - ml - mr, height - mt - mb

    xs = [x for _, _, _, pts in series for x, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def axis_range(side):
        vals = [y for _, ax, _, pts in series for _, y in pts if ax == side]
        if not vals:
            return 0.0, 1.0
        lo, hi = min(vals + [0.0]), max(vals)
        return lo, hi if hi > lo else lo + 1.0

    l_lo, l_hi = axis_range("left")
    r_lo, r_hi = axis_range("right")

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y, lo, hi):
        return mt + ph - (y - lo) / (hi - lo) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="20" font-family="sans-serif" font-size="14" '
        f'text-anchor="middle">{_esc(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="#444444" stroke-width="1"/>',
    ]
    for tx in _nice_ticks(x_lo, x_hi):
        if tx < x_lo - 1e-9 or tx > x_hi + 1e-9:
            continue
        x = px(tx)
        out.append(f'<line x1="{x:.2f}" y1="{mt + ph}" x2="{x:.2f}" '
                   f'y2="{mt + ph + 4}" stroke="#444444"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 18}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="middle">{tx:g}</text>')
    for ty in _nice_ticks(l_lo, l_hi):
        y = py(ty, l_lo, l_hi)
        out.append(f'<line x1="{ml - 4}" y1="{y:.2f}" x2="{ml}" y2="{y:.2f}" '
                   f'stroke="#444444"/>')
        out.append(f'<text x="{ml - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="end">{ty:g}</text>')
    if right_label:
        for ty in _nice_ticks(r_lo, r_hi):
            y = py(ty, r_lo, r_hi)
            out.append(f'<line x1="{ml + pw}" y1="{y:.2f}" x2="{ml + pw + 4}" '
                       f'y2="{y:.2f}" stroke="#444444"/>')
            out.append(f'<text x="{ml + pw + 8}" y="{y + 4:.2f}" '
                       f'font-family="sans-serif" font-size="11" '
                       f'text-anchor="start">{ty:g}</text>')
        out.append(f'<text x="{width - 14}" y="{mt + ph / 2:.1f}" font-family="sans-serif" '
                   f'font-size="12" text-anchor="middle" '
                   f'transform="rotate(90 {width - 14} {mt + ph / 2:.1f})">'
                   f'{_esc(right_label)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle">{_esc(x_label)}</text>')
    out.append(f'<text x="18" y="{mt + ph / 2:.1f}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{_esc(left_label)}</text>')

    for name, axis, color, pts in series:
        lo, hi = (l_lo, l_hi) if axis == "left" else (r_lo, r_hi)
        coords = " ".join(f"{px(x):.2f},{py(y, lo, hi):.2f}" for x, y in pts)
        dash = ' stroke-dasharray="6,4"' if axis == "right" else ""
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash}/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y, lo, hi):.2f}" '
                       f'r="2.2" fill="{color}"/>')
    ly = mt + 8
    for name, axis, color, pts in series:
        dash = ' stroke-dasharray="6,4"' if axis == "right" else ""
        out.append(f'<line x1="{ml + 8}" y1="{ly:.1f}" x2="{ml + 30}" y2="{ly:.1f}" '
                   f'stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{ml + 35}" y="{ly + 4:.1f}" font-family="sans-serif" '
                   f'font-size="10">{_esc(name)}</text>')
        ly += 13
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
