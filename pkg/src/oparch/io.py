"""Price ingestion, OCIDR curves, run configuration and plot-data emission."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import FormatError, NonPositivePrice
from .function_space import Grid


@dataclass
class PricePanel:
    days: list  # ordered day keys
    prices: np.ndarray  # (n_days, r)

    def __post_init__(self):
        self.prices = np.atleast_2d(np.asarray(self.prices, dtype=np.float64))
        if len(self.days) != self.prices.shape[0]:
            raise FormatError("one price row per day is required")
        if any(a >= b for a, b in zip(self.days, self.days[1:])):
            raise FormatError("days must be strictly increasing")

    @property
    def close_prev(self) -> np.ndarray:
        """Previous day's close, aligned with days[1:]."""
        return self.prices[:-1, -1]

    @property
    def r(self) -> int:
        return int(self.prices.shape[1])


def read_prices(path) -> PricePanel:
    """Long CSV ``day,time_index,price``; missing intraday points are an error."""
    rows: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"day", "time_index", "price"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns day,time_index,price")
        for line, row in enumerate(reader, start=2):
            try:
                idx, price = int(row["time_index"]), float(row["price"])
            except ValueError:
                raise FormatError(f"{path}:{line}: unparsable time_index or price") from None
            day = rows.setdefault(row["day"], {})
            if idx in day:
                raise FormatError(f"{path}:{line}: duplicate point day={row['day']} time_index={idx}")
            day[idx] = price
    if not rows:
        raise FormatError(f"{path}: no rows")
    days = sorted(rows)
    idx = sorted(rows[days[0]])
    for d in days:
        if sorted(rows[d]) != idx:
            raise FormatError(f"{path}: day {d} does not have the same intraday points as {days[0]}")
    prices = np.array([[rows[d][i] for i in idx] for d in days])
    return PricePanel(days, prices)


def write_prices(path, panel: PricePanel) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "time_index", "price"])
        for d, row in zip(panel.days, panel.prices):
            for i, v in enumerate(row, start=1):
                w.writerow([d, i, format(v, ".17g")])


def build_ocidr(panel: PricePanel) -> np.ndarray:
    """``R_j(t) = 100 (log P_j(t) - log P_{j-1}(1))`` for days 2..n."""
    P = panel.prices
    if P.shape[0] < 2:
        raise ValueError("need at least two days of prices")
    bad = np.argwhere(~(P > 0))
    if bad.size:
        d, i = bad[0]
        raise NonPositivePrice(f"day {panel.days[d]} time_index {i + 1}: price {P[d, i]}")
    logp = np.log(P)
    return 100.0 * (logp[1:] - logp[:-1, -1:])


@dataclass
class RunConfig:
    kernel: str = "ou"
    p: int = 1
    tve: float = 0.9
    theta: float | str = "rate"
    method: str = "tikhonov"
    alpha_levels: list = field(default_factory=lambda: [0.01, 0.05])
    split: float = 0.8
    seed: int = 0
    engine: str = "spectral"
    r: int = 50
    K: int | None = None
    mode: str = "gaussian"
    burn_in: int = 100

    def __post_init__(self):
        errs = self.violations()
        if errs:
            raise ValueError("; ".join(errs))

    def violations(self) -> list[str]:
        errs = []
        if self.kernel not in ("bm", "ou"):
            errs.append("kernel must be 'bm' or 'ou'")
        if self.p < 1:
            errs.append("p must be >= 1")
        if not 0 < self.tve < 1:
            errs.append("tve must lie in (0, 1)")
        if isinstance(self.theta, str):
            if self.theta not in ("auto", "rate"):
                errs.append("theta must be 'auto', 'rate' or a positive number")
        elif not (self.theta > 0 and math.isfinite(self.theta)):
            errs.append("theta must be positive")
        if self.method not in ("finite", "tikhonov", "mp"):
            errs.append("method must be finite, tikhonov or mp")
        if not self.alpha_levels or any(not 0 < a < 1 for a in self.alpha_levels):
            errs.append("alpha_levels must be non-empty and inside (0, 1)")
        if not 0 < self.split < 1:
            errs.append("split must lie in (0, 1)")
        if self.engine not in ("spectral", "grid"):
            errs.append("engine must be 'spectral' or 'grid'")
        if self.r < 2:
            errs.append("grid r must be >= 2")
        if self.K is not None and self.K < 1:
            errs.append("K must be >= 1")
        if self.mode not in ("gaussian", "paper"):
            errs.append("mode must be 'gaussian' or 'paper'")
        if self.burn_in < 0:
            errs.append("burn_in must be >= 0")
        return errs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------


def write_series_csv(path, columns: dict) -> None:
    """Write equally long named columns as a CSV (17 significant digits)."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    if any(len(v) != n for v in columns.values()):
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[c][i]) for c in names])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def write_curve_plot_data(path, curves, grid: Grid, limit: int | None = None) -> None:
    """Long ``k,t,value`` CSV of curves for a functional time-series plot."""
    curves = np.asarray(curves)[:limit]
    k = np.repeat(np.arange(1, curves.shape[0] + 1), grid.r)
    t = np.tile(grid.nodes, curves.shape[0])
    write_series_csv(path, {"k": k.tolist(), "t": t.tolist(), "value": curves.ravel().tolist()})


def write_svg_lines(path, series: dict, width: int = 640, height: int = 400, title: str = "") -> None:
    """Minimal SVG line plot: ``series`` maps a label to ``(x, y)`` arrays."""
    pad = 40
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{pad}" y="{height - 10}" font-size="10">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - 10}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="4" y="{height - pad}" font-size="10">{y0:.3g}</text>',
        f'<text x="4" y="{pad}" font-size="10">{y1:.3g}</text>',
    ]
    for n, (label, (x, y)) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        c = colors[n % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * n}" font-size="11" fill="{c}" text-anchor="end">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
