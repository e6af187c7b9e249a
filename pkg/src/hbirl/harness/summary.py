"""Aggregation of result rows and plot-data emission."""
import math
import os
from dataclasses import astuple, dataclass, fields

import numpy as np

from ..errors import InvalidInputError

Z95 = 1.96


@dataclass(frozen=True)
class SummaryRow:
    domain: str
    variant: str
    sweep_value: int
    n: int
    mean: float
    ci_low: float
    ci_high: float
    ci_flag: str = ""


SUMMARY_FIELDS = tuple(f.name for f in fields(SummaryRow))


def mean_ci(values):
    """Mean and normal-approximation 95% interval; (mean, nan, nan) for a single value."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise InvalidInputError("no values to aggregate")
    m = float(x.mean())
    if x.size < 2:
        return m, math.nan, math.nan
    half = Z95 * float(x.std(ddof=1)) / math.sqrt(x.size)
    return m, m - half, m + half


def aggregate(rows):
    """One SummaryRow per (domain, variant, sweep value), in first-seen order."""
    groups = {}
    for row in rows:
        groups.setdefault((row.domain, row.variant, row.sweep_value), []).append(row.ile)
    out = []
    for (domain, variant, value), iles in groups.items():
        m, lo, hi = mean_ci(iles)
        out.append(SummaryRow(domain, variant, value, len(iles), m, lo, hi, "" if len(iles) > 1 else "single_run"))
    return out


def lookup(summary, variant, value):
    for row in summary:
        if row.variant == variant and row.sweep_value == value:
            return row
    raise KeyError((variant, value))


def emit_plot_data(summary, out_dir, formats=("csv",), variants=None, stem="summary"):
    """Write the summary as CSV (and optionally SVG curves); returns the written paths."""
    rows = [r for r in summary if not variants or r.variant in variants]
    if not rows:
        raise InvalidInputError("nothing to plot")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if "csv" in formats:
        path = os.path.join(out_dir, f"{stem}.csv")
        with open(path, "w") as fh:
            fh.write(",".join(SUMMARY_FIELDS) + "\n")
            for r in rows:
                fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in astuple(r)) + "\n")
        paths.append(path)
    if "svg" in formats:
        paths.append(_render_svg(rows, os.path.join(out_dir, f"{stem}.svg")))
    return paths


def read_plot_data(path):
    casts = {f.name: f.type for f in fields(SummaryRow)}
    out = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if tuple(header) != SUMMARY_FIELDS:
            raise InvalidInputError(f"{path}: unexpected header {header}")
        for line in fh:
            if line.strip():
                vals = line.rstrip("\n").split(",")
                out.append(SummaryRow(**{k: casts[k](v) for k, v in zip(header, vals)}))
    return out


def _render_svg(rows, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in dict.fromkeys(r.variant for r in rows):
        pts = sorted((r for r in rows if r.variant == variant), key=lambda r: r.sweep_value)
        x = [r.sweep_value for r in pts]
        y = np.array([r.mean for r in pts])
        lo = np.array([r.ci_low for r in pts])
        hi = np.array([r.ci_high for r in pts])
        err = np.vstack([np.nan_to_num(y - lo), np.nan_to_num(hi - y)])
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=variant.replace("_", " "))
    domain = rows[0].domain
    ax.set_xlabel("confounding elements" if domain == "gridworld" else "trajectories")
    ax.set_ylabel("mean ILE")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
