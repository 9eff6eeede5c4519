"""Figure rendering for pipeline reports.

Every report-producing stage can drop a PNG next to its delimited output.
All functions take data already computed by the pipeline and a target
path; nothing here recomputes results.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .corpus import Segment  # noqa: E402

FIG_DPI = 120


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def render_filter_stats(per_criterion_kept: Mapping[str, int],
                        input_utterances: int, path: str | Path) -> Path:
    """Kept-count bars per criterion against the unfiltered total."""
    names = sorted(per_criterion_kept)
    counts = [per_criterion_kept[n] for n in names]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(names, counts, color="#4878b0")
    ax.axhline(input_utterances, color="#666666", linestyle="--", linewidth=1,
               label=f"input ({input_utterances})")
    ax.set_ylabel("utterances kept")
    ax.set_xlabel("criterion")
    ax.legend(frameon=False)
    return _save(fig, path)


def render_tune_trace(costs: Sequence[float], path: str | Path) -> Path:
    """Per-iteration cost plus the running best."""
    best = []
    current = float("inf")
    for c in costs:
        current = min(current, c)
        best.append(current)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(len(costs)), costs, "o", markersize=4, label="evaluated")
    ax.step(range(len(best)), best, where="post", color="#c44e52", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("cost (mean WER)")
    ax.legend(frameon=False)
    return _save(fig, path)


def render_subgroup_wer(cells, path: str | Path) -> Path:
    """Mean WER per subgroup with bracketed counts, table-style."""
    labels = [" ".join(v for _, v in cell.group) + f" [{cell.count}]" for cell in cells]
    values = [100 * cell.mean_wer for cell in cells]
    fig, ax = plt.subplots(figsize=(6, 0.5 * max(len(cells), 4) + 1))
    ax.barh(range(len(cells)), values, color="#4878b0")
    ax.set_yticks(range(len(cells)))
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel("mean WER (%)")
    return _save(fig, path)


def render_wer_histogram(values: Sequence[float], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist([min(v, 2.0) for v in values], bins=40, color="#4878b0")
    ax.set_xlabel("per-utterance WER (clipped at 2.0)")
    ax.set_ylabel("utterances")
    return _save(fig, path)


def render_detection_timeline(per_stop: Mapping[str, tuple[Sequence[Segment], Sequence[Segment]]],
                              path: str | Path, max_stops: int = 8) -> Path:
    """Reference vs detected segments, one row pair per stop."""
    stops = list(per_stop)[:max_stops]
    fig, ax = plt.subplots(figsize=(8, 0.6 * max(len(stops), 2) + 1))
    for i, stop_id in enumerate(stops):
        truth, detected = per_stop[stop_id]
        for seg in truth:
            ax.plot([seg.start, seg.end], [i + 0.12, i + 0.12],
                    color="#55a868", linewidth=5, solid_capstyle="butt")
        for seg in detected:
            ax.plot([seg.start, seg.end], [i - 0.12, i - 0.12],
                    color="#c44e52", linewidth=5, solid_capstyle="butt")
    ax.set_yticks(range(len(stops)))
    ax.set_yticklabels(stops)
    ax.set_xlabel("time (s)")
    ax.set_title("reference (green, upper) vs detected (red, lower)", fontsize=9)
    return _save(fig, path)


def render_training_loss(history: Sequence[float], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(history, color="#4878b0")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    return _save(fig, path)
