"""Render a sample series as T_r (solid) and steal (dashed) with period bands."""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .estimator import BUSY, classify_periods, default_thresholds  # noqa: E402
from .exceptions import ValidationError  # noqa: E402

BAND_COLORS = {"idle": "#e8f1fb", "busy": "#fde2e1"}


def reference_t_m(samples):
    """Recover the reference T_m from samples as the median of t_mg / multiplier."""
    return float(np.median([s.t_mg_us / s.multiplier for s in samples]))


def render_report(samples, out_path, threshold_us=None, hysteresis_us=None, title=None):
    """Write a self-contained SVG of the series to ``out_path``; return the segments."""
    if not samples:
        raise ValidationError("no samples to plot")
    default_threshold, default_hysteresis = default_thresholds(reference_t_m(samples))
    threshold = default_threshold if threshold_us is None else threshold_us
    hysteresis = default_hysteresis if hysteresis_us is None else hysteresis_us
    segments = classify_periods(samples, threshold, hysteresis)

    x = np.arange(len(samples))
    t_r = np.array([s.t_r_us for s in samples]) / 1000
    steal = np.array([s.steal_us for s in samples]) / 1000

    plt.rcParams["svg.hashsalt"] = "stealtime"
    fig, ax = plt.subplots(figsize=(10, 4))
    for seg in segments:
        ax.axvspan(seg.first_sample_index - 0.5, seg.last_sample_index + 0.5,
                   color=BAND_COLORS[seg.kind], linewidth=0, zorder=0)
        if seg.kind == BUSY:
            mid = (seg.first_sample_index + seg.last_sample_index) / 2
            ax.text(mid, 1.01, "B", transform=ax.get_xaxis_transform(), ha="center", fontsize=8)
    ax.plot(x, t_r, "-", color="black", linewidth=1.2, label="T_r")
    ax.plot(x, steal, "--", color="tab:red", linewidth=1.2, label="steal")
    ax.axhline(threshold / 1000, color="grey", linewidth=0.6, linestyle=":")
    ax.set_xlabel("measurement")
    ax.set_ylabel("time (ms)")
    ax.set_xlim(-0.5, len(samples) - 0.5)
    ax.set_ylim(bottom=0)
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return segments
