#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""SVG line charts for reports. Output depends only on the inputs, so the same data
always gives the same bytes.
"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as sps

from .constants import DEFAULT_ALPHA, GAMMA_MC
from .history import HistoryCurve, power_curve
from .stats import check_pairs, PavPlan, gamma_null_quantile, GammaNullTable

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 400
MARGIN = (40, 20, 50, 70)  # top, right, bottom, left

BLUE = "#1f5fa8"
ORANGE = "#e07b00"
GREY = "#8a8a8a"
LIGHT = "#d6e2f0"


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") if math.isfinite(x) else "0"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


class Figure:
    """A single panel with linear axes mapped onto a fixed-size canvas."""

    def __init__(self, xlim: Tuple[float, float], ylim: Tuple[float, float], title: str = "", xlabel: str = "", ylabel: str = ""):
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.elements: List[str] = []

    def _px(self, x: float) -> float:
        top, right, bottom, left = MARGIN
        return left + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * (WIDTH - left - right)

    def _py(self, y: float) -> float:
        top, right, bottom, left = MARGIN
        y = min(max(y, self.ylim[0]), self.ylim[1])
        return HEIGHT - bottom - (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (HEIGHT - top - bottom)

    def line(self, xs: Sequence[float], ys: Sequence[float], color: str = BLUE, width: float = 1.5, opacity: float = 1.0, step: bool = False):
        """Polyline through the finite points; NaNs break the line."""
        segment: List[str] = []
        prev_y: Optional[float] = None
        for x, y in zip(xs, ys):
            if not (math.isfinite(x) and math.isfinite(y)):
                self._flush(segment, color, width, opacity)
                segment, prev_y = [], None
                continue
            if step and prev_y is not None:
                segment.append(f"{_fmt(self._px(x))},{_fmt(self._py(prev_y))}")
            segment.append(f"{_fmt(self._px(x))},{_fmt(self._py(y))}")
            prev_y = y
        self._flush(segment, color, width, opacity)

    def _flush(self, segment: List[str], color: str, width: float, opacity: float):
        if len(segment) == 1:
            x, y = segment[0].split(",")
            self.elements.append(f'<circle cx="{x}" cy="{y}" r="3" fill="{color}" fill-opacity="{_fmt(opacity)}"/>')
        elif segment:
            self.elements.append(
                f'<polyline points="{" ".join(segment)}" fill="none" stroke="{color}" '
                f'stroke-width="{_fmt(width)}" stroke-opacity="{_fmt(opacity)}"/>'
            )

    def band(self, xs: Sequence[float], lo: Sequence[float], hi: Sequence[float], color: str = LIGHT):
        pts = [f"{_fmt(self._px(x))},{_fmt(self._py(y))}" for x, y in zip(xs, hi)]
        pts += [f"{_fmt(self._px(x))},{_fmt(self._py(y))}" for x, y in zip(reversed(list(xs)), reversed(list(lo)))]
        if pts:
            self.elements.append(f'<polygon points="{" ".join(pts)}" fill="{color}" stroke="none"/>')

    def hline(self, y: float, color: str = GREY, dash: bool = True):
        d = ' stroke-dasharray="4 3"' if dash else ""
        self.elements.append(
            f'<line x1="{_fmt(self._px(self.xlim[0]))}" y1="{_fmt(self._py(y))}" x2="{_fmt(self._px(self.xlim[1]))}" '
            f'y2="{_fmt(self._py(y))}" stroke="{color}"{d}/>'
        )

    def vline(self, x: float, color: str = ORANGE, label: str = ""):
        px = _fmt(self._px(x))
        self.elements.append(
            f'<line x1="{px}" y1="{_fmt(self._py(self.ylim[0]))}" x2="{px}" y2="{_fmt(self._py(self.ylim[1]))}" stroke="{color}"/>'
        )
        if label:
            self.elements.append(f'<text x="{px}" y="{MARGIN[0] - 4}" font-size="11" fill="{color}" text-anchor="middle">{_escape(label)}</text>')

    def _axes(self) -> List[str]:
        top, right, bottom, left = MARGIN
        out = [
            f'<rect x="{left}" y="{top}" width="{WIDTH - left - right}" height="{HEIGHT - top - bottom}" fill="none" stroke="#444"/>'
        ]
        for axis, lim in (("x", self.xlim), ("y", self.ylim)):
            for v in np.linspace(lim[0], lim[1], 5):
                label = f"{v:.3g}"
                if axis == "x":
                    px = _fmt(self._px(v))
                    out.append(f'<text x="{px}" y="{HEIGHT - bottom + 16}" font-size="11" text-anchor="middle">{label}</text>')
                else:
                    py = _fmt(self._py(v))
                    out.append(f'<text x="{left - 6}" y="{py}" font-size="11" text-anchor="end" dominant-baseline="middle">{label}</text>')
        if self.title:
            out.append(f'<text x="{WIDTH / 2:.0f}" y="{top - 16}" font-size="14" text-anchor="middle">{_escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle">{_escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(
                f'<text x="16" y="{HEIGHT / 2:.0f}" font-size="12" text-anchor="middle" '
                f'transform="rotate(-90 16 {HEIGHT / 2:.0f})">{_escape(self.ylabel)}</text>'
            )
        return out

    def render(self) -> str:
        body = "\n".join([*self.elements, *self._axes()])
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n{body}\n</svg>\n'
        )


def write_svg(svg: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    logger.info("wrote %s", path)
    return path


def _limits(*arrays: np.ndarray) -> Tuple[float, float]:
    values = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    values = values[np.isfinite(values)]
    if values.size == 0:
        return 0.0, 1.0
    return float(values.min()), float(values.max())


# -- rank ECDF -------------------------------------------------------------------


def ecdf_diff_band(
    ranks: Sequence[int], M: int, band: Optional[GammaNullTable] = None, alpha: float = DEFAULT_ALPHA, n_mc: int = GAMMA_MC, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(z, ECDF(z) - z, lower, upper) on the grid z_j = j / (M + 1), j = 1..M, with the
    simultaneous band implied by the gamma null quantile.
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    if len(ranks) < 10:
        raise ValueError(f"ECDF plots need at least 10 ranks, got {len(ranks)}.")
    S = len(ranks)
    band = band or gamma_null_quantile(S, M, alpha, n_mc, seed)
    z = np.arange(1, M + 1) / (M + 1)
    ecdf = np.cumsum(np.bincount(ranks, minlength=M + 1))[:-1] / S
    lower = sps.binom.ppf(band.quantile / 2, S, z) / S - z
    upper = sps.binom.isf(band.quantile / 2, S, z) / S - z
    return z, ecdf - z, lower, upper


def plot_ecdf_diff(ranks: Sequence[int], M: int, band: Optional[GammaNullTable] = None, title: str = "", **kwargs) -> str:
    """ECDF of the ranks minus the uniform CDF, inside the simultaneous band."""
    z, diff, lower, upper = ecdf_diff_band(ranks, M, band, **kwargs)
    fig = Figure((0.0, 1.0), _limits(diff, lower, upper), title, "fractional rank", "ECDF difference")
    fig.band(z, lower, upper)
    fig.hline(0.0)
    fig.line(z, diff, step=True)
    return fig.render()


# -- calibration -----------------------------------------------------------------


def calibration_curve(
    probs: Sequence[float], outcomes: Sequence[float], B: int = 200, seed: int = 0, level: float = 0.9
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(forecast levels, recalibrated probability, band low, band high).

    The band holds `level` of PAV fits to outcomes redrawn as Bernoulli(probs).
    """
    probs, outcomes = check_pairs(probs, outcomes)
    if len(probs) < 20:
        raise ValueError(f"Calibration plots need at least 20 pairs, got {len(probs)}.")
    plan = PavPlan(probs)
    fitted = plan.fit(outcomes)
    first = np.unique(plan.inverse, return_index=True)[1]

    rng = np.random.default_rng(seed)
    null = np.vstack([plan.fit((rng.random(len(probs)) < probs).astype(float))[first] for _ in range(B)])
    tail = (1 - level) / 2
    lo, hi = np.quantile(null, [tail, 1 - tail], axis=0)
    return plan.levels, fitted[first], lo, hi


def plot_calibration(probs: Sequence[float], outcomes: Sequence[float], B: int = 200, seed: int = 0, title: str = "") -> str:
    """Reliability diagram: PAV recalibration against the diagonal, with the band of
    fits expected from calibrated forecasts.
    """
    x, fitted, lo, hi = calibration_curve(probs, outcomes, B, seed)
    fig = Figure((0.0, 1.0), (0.0, 1.0), title, "forecast Pr(M1 | y)", "observed frequency of M1")
    if len(x) > 1:
        fig.band(x, lo, hi)
    fig.line([0.0, 1.0], [0.0, 1.0], color=GREY, width=1.0)
    fig.line(x, fitted, color=ORANGE, step=True)
    return fig.render()


# -- histories -------------------------------------------------------------------


def plot_history(
    curve: HistoryCurve,
    threshold_line: Optional[float] = None,
    power_marker: Optional[int] = None,
    alpha: float = DEFAULT_ALPHA,
) -> str:
    """Every history as a faint line, the reject threshold as a horizontal rule and the
    first grid point with 80% power as a vertical rule.

    p-value checks are drawn on a log10 axis. When `power_marker` is None and there
    are enough histories, it is computed from the curve.
    """
    if len(curve.grid) == 0:
        raise ValueError("Cannot plot a history with an empty grid.")
    sbc = curve.check_name.startswith("sbc")
    threshold = threshold_line if threshold_line is not None else (0.0 if sbc else alpha)

    values = curve.values.astype(float)
    ylabel = "log gamma ratio"
    if not sbc:
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.log10(np.clip(values, 1e-300, 1.0))
        threshold = math.log10(threshold)
        ylabel = "log10 p-value"

    if power_marker is None and curve.n_histories >= 20:
        _, power_marker = power_curve(curve, alpha=alpha)

    x = curve.grid.astype(float)
    fig = Figure((float(x[0]), float(x[-1])), _limits(values, np.array([threshold])), curve.check_name, "simulations", ylabel)
    opacity = 1.0 if curve.n_histories == 1 else 0.25
    for row in values:
        fig.line(x, row, width=1.0, opacity=opacity)
    fig.hline(threshold, color=BLUE, dash=False)
    if power_marker is not None:
        fig.vline(float(power_marker), label=f"80% power at {power_marker}")
    return fig.render()


def plot_good_convergence(log_bf01_m1: Sequence[float], title: str = "") -> str:
    """Running mean of BF_{0,1} over simulations from M1, with the 0.9 to 1.1 band."""
    bf = np.exp(np.asarray(log_bf01_m1, dtype=float))
    if len(bf) < 2:
        raise ValueError("The Good convergence plot needs at least 2 Bayes factors.")
    n = np.arange(1, len(bf) + 1, dtype=float)
    running = np.cumsum(bf) / n
    fig = Figure((1.0, float(len(bf))), _limits(running, np.array([0.9, 1.1])), title, "simulations", "mean BF01")
    fig.band([1.0, float(len(bf))], [0.9, 0.9], [1.1, 1.1])
    fig.hline(1.0)
    fig.line(n, running)
    return fig.render()
