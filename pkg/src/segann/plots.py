"""Report figures rendered to files: rank comparison and accuracy bars."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .stats import SummaryRow


def cd_diagram(
    methods: tuple[str, ...],
    mean_ranks: tuple[float, ...],
    cd: float,
    path,
    title: str = "Mean ranks (lower is better)",
) -> None:
    """Critical-difference diagram: methods on a rank axis, CD ruler on top.

    Methods whose mean-rank gap is within the critical difference are
    joined by a horizontal bar.
    """
    k = len(methods)
    order = sorted(range(k), key=lambda i: mean_ranks[i])
    ranked = [(mean_ranks[i], methods[i]) for i in order]

    fig, ax = plt.subplots(figsize=(7, 1.6 + 0.45 * k))
    ax.set_xlim(0.8, k + 0.2)
    ax.set_ylim(-k - 2.0, 2.6)
    ax.spines[["left", "right", "bottom"]].set_visible(False)
    ax.xaxis.set_ticks_position("top")
    ax.set_xticks(range(1, k + 1))
    ax.get_yaxis().set_visible(False)
    ax.plot([1, k], [0, 0], color="black", lw=1.2, clip_on=False)
    for tick in range(1, k + 1):
        ax.plot([tick, tick], [0, 0.25], color="black", lw=1.0, clip_on=False)

    # CD ruler
    ax.plot([1, 1 + cd], [1.6, 1.6], color="black", lw=2.5)
    ax.text(1 + cd / 2, 1.85, f"CD = {cd:.3f}", ha="center", va="bottom", fontsize=9)

    # method stems, alternating label sides
    for slot, (rank, name) in enumerate(ranked):
        y = -(slot + 1)
        left = slot < (k + 1) // 2
        x_label = 0.8 if left else k + 0.2
        ax.plot([rank, rank], [0, y], color="black", lw=1.0)
        ax.plot([rank, x_label], [y, y], color="black", lw=1.0)
        ax.text(
            x_label,
            y,
            f" {name} ({rank:.2f}) " if left else f" ({rank:.2f}) {name} ",
            ha="right" if left else "left",
            va="center",
            fontsize=9,
        )

    # bars joining groups not separated by more than the CD
    bar_y = -0.35
    covered_until = -1
    for start in range(k):
        end = start
        while end + 1 < k and ranked[end + 1][0] - ranked[start][0] <= cd:
            end += 1
        if end > start and end > covered_until:
            ax.plot(
                [ranked[start][0] - 0.03, ranked[end][0] + 0.03],
                [bar_y, bar_y],
                color="black",
                lw=3.5,
                solid_capstyle="round",
            )
            covered_until = end
            bar_y -= 0.28
    ax.set_title(title, pad=28)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def accuracy_figure(rows: list[SummaryRow], path, title: str = "Mean accuracy") -> None:
    """Grouped bars of mean accuracy (with std error bars) per method.

    Expects summary rows grouped by (method, dataset).
    """
    methods = sorted({row.group[0] for row in rows})
    datasets = sorted({row.group[1] for row in rows if len(row.group) > 1})
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * max(len(datasets), 1)), 4))
    if not datasets:
        means = {row.group[0]: row for row in rows}
        xs = range(len(methods))
        ax.bar(
            xs,
            [means[m].mean_pct for m in methods],
            yerr=[means[m].std_pct for m in methods],
            capsize=3,
        )
        ax.set_xticks(list(xs), methods, rotation=20, ha="right")
    else:
        by_cell = {row.group: row for row in rows}
        width = 0.8 / len(methods)
        for mi, method in enumerate(methods):
            xs, ys, errs = [], [], []
            for di, dataset in enumerate(datasets):
                row = by_cell.get((method, dataset))
                if row is None:
                    continue
                xs.append(di + mi * width)
                ys.append(row.mean_pct)
                errs.append(row.std_pct)
            ax.bar(xs, ys, width=width, label=method, yerr=errs, capsize=2)
        ax.set_xticks(
            [di + 0.4 - width / 2 for di in range(len(datasets))],
            datasets,
            rotation=20,
            ha="right",
        )
        ax.legend(fontsize=8)
    ax.set_ylabel("accuracy (%)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
