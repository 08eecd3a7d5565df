"""Schedule-table figure: one row per instance, one coloured cell per active period."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .simulator import ScheduleTable  # noqa: E402


def plot_schedule(table: ScheduleTable, path, title: str | None = None) -> None:
    """Write a Gantt-style chart of ``table`` to ``path`` (format from the suffix)."""
    events = sorted({c for _, cells in table.rows for c in cells if c})
    cmap = plt.get_cmap("tab20")
    colour = {e: cmap(i % 20) for i, e in enumerate(events)}
    n_rows, n_cols = table.shape
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * n_rows + 1.5), max(2.0, 0.45 * n_cols + 1.2)))
    for y, inst in enumerate(table.instances):
        for (period, cells) in table.rows:
            ev = cells[y]
            if not ev:
                continue
            ax.barh(y, 1, left=period - 1, color=colour[ev], edgecolor="black", linewidth=0.5)
            ax.text(period - 0.5, y, ev, ha="center", va="center", fontsize=8)
    ax.set_yticks(range(n_cols))
    ax.set_yticklabels([f"{table.label} {i}" for i in table.instances])
    ax.invert_yaxis()
    ax.set_xlim(0, max(n_rows, 1))
    ax.set_xticks([p - 0.5 for p, _ in table.rows])
    ax.set_xticklabels([str(p) for p, _ in table.rows])
    ax.set_xlabel("period")
    ax.set_title(title or f"{table.label}: {n_cols} instance(s) over {n_rows} period(s)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
