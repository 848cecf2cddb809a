"""Cumulative-utility comparison figures from experiment summary files.

The input is the harness summary.json: per algorithm, arrays
``mean_cum_utility[t]`` and ``std_cum_utility[t]`` over rounds.  One call
draws one figure: a mean line with a +/-1 std band per algorithm, round on
the x axis.  Per-seed CSVs are never read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Fixed tag -> legend label names; unknown tags render as themselves.
DEFAULT_LABELS = {
    "alg1-oful": "Algorithm1-OFUL",
    "alg1-adv": "Algorithm1-ADV",
    "etc": "ETC",
    "random": "Random",
    "auction-oful": "Auction-OFUL",
    "auction-adv": "Auction-ADV",
    "persuasion-oful": "Persuasion-OFUL",
    "persuasion-adv": "Persuasion-ADV",
}

# Deterministic per-position styling (tags are drawn in sorted order).
COLOR_CYCLE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class PlotSpec:
    """One figure request.

    ``algorithms`` selects and orders the drawn tags (None draws every tag
    in sorted order); ``labels`` overrides legend names per tag.  ``band``
    names the band style; only "std" (mean +/- 1 std) is supported.
    """

    summary_path: str
    output_path: str
    algorithms: tuple | None = None
    labels: dict | None = None
    band: str = "std"

    def __post_init__(self):
        if self.band != "std":
            raise ValueError(f"unsupported band style {self.band!r}; only 'std'")
        if self.algorithms is not None:
            object.__setattr__(self, "algorithms", tuple(self.algorithms))


def load_summary(path) -> dict:
    with open(path) as handle:
        doc = json.load(handle)
    if "algorithms" not in doc or not isinstance(doc["algorithms"], dict):
        raise ValueError(f"{path} is not a summary file: no 'algorithms' table")
    return doc


def select_series(doc: dict, algorithms=None, labels=None) -> list:
    """Pick (label, mean, std) triples for the requested algorithm tags.

    Tags default to every algorithm in the summary, sorted.  Missing tags
    raise one error naming all of them; series of unequal length raise
    (every curve must cover the same rounds).
    """
    table = doc["algorithms"]
    tags = tuple(algorithms) if algorithms is not None else tuple(sorted(table))
    if len(tags) == 0:
        raise ValueError("no algorithms requested")
    missing = [tag for tag in tags if tag not in table]
    if missing:
        raise ValueError(
            "summary is missing algorithms: " + ", ".join(missing)
            + "; available: " + ", ".join(sorted(table))
        )
    label_map = dict(DEFAULT_LABELS)
    label_map.update(labels or {})
    series = []
    for tag in tags:
        mean = np.asarray(table[tag]["mean_cum_utility"], dtype=float)
        std = np.asarray(table[tag]["std_cum_utility"], dtype=float)
        if mean.shape != std.shape or mean.ndim != 1 or len(mean) == 0:
            raise ValueError(f"algorithm {tag!r} has malformed series")
        series.append((label_map.get(tag, tag), mean, std))
    lengths = {len(mean) for _, mean, _ in series}
    if len(lengths) != 1:
        raise ValueError(f"series lengths differ across algorithms: {sorted(lengths)}")
    return series


def render_curves(spec: PlotSpec) -> str:
    """Draw the figure described by ``spec`` and write it to its output path.

    Pure function of the summary file: fixed figure geometry, colors by
    sorted-tag position, no timestamps, so re-rendering an unchanged
    summary reproduces the image byte for byte (fixed library versions).
    """
    doc = load_summary(spec.summary_path)
    series = select_series(doc, spec.algorithms, spec.labels)
    rounds = np.arange(1, len(series[0][1]) + 1)

    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=150)
    for position, (label, mean, std) in enumerate(series):
        color = COLOR_CYCLE[position % len(COLOR_CYCLE)]
        ax.plot(rounds, mean, color=color, linewidth=1.6, label=label)
        ax.fill_between(rounds, mean - std, mean + std, color=color, alpha=0.18, linewidth=0)
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative utility")
    ax.set_title(str(doc.get("name", "")))
    ax.legend(loc="upper left", frameon=False)
    ax.margins(x=0)
    fig.tight_layout()
    fig.savefig(spec.output_path, format="png", metadata={"Software": None})
    plt.close(fig)
    return spec.output_path
