"""Quick-look figures written next to the CSV outputs.

The CSV files are the data product; these PNGs are for eyeballing a run.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "mnbuffer",
}
LEVEL_COLORS = {"P_G": "#1b9e77", "P_X": "#d95f02", "P_D": "#7570b3"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def time_series(path, curves, title=None):
    """``curves`` maps a label to (columns, rows) of a time-series table.

    Level occupations and the one-photon occupation go on the top axis,
    the pulse envelope on the bottom one. The first curve is drawn solid,
    later ones dashed.
    """
    with plt.rc_context(STYLE):
        fig, (ax, ax_env) = plt.subplots(
            2, 1, sharex=True, gridspec_kw={"height_ratios": [3, 1]}, figsize=(5.0, 4.2)
        )
        for i, (label, (cols, rows)) in enumerate(curves.items()):
            ls = "-" if i == 0 else "--"
            t = rows[:, cols.index("t_ps")]
            for name in ("P_G", "P_X", "P_D", "P_photon_1"):
                if name in cols:
                    color = LEVEL_COLORS.get(name, "k")
                    ax.plot(t, rows[:, cols.index(name)], ls, color=color, label=f"{name} {label}")
            ax_env.plot(t, rows[:, cols.index("envelope_per_ps")], ls, color="0.3")
        ax.set_ylabel("occupation")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(ncol=2)
        ax_env.set_xlabel("t (ps)")
        ax_env.set_ylabel("f (1/ps)")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def curves(path, series, xlabel, ylabel, logy=False, title=None, markers=True):
    """``series`` maps a label to (x, y)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (x, y) in series.items():
            ax.plot(np.asarray(x), np.asarray(y), "o-" if markers else "-", ms=3, label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend()
        if title:
            ax.set_title(title)
        return _save(fig, path)
